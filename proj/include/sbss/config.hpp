// Copyright 2026 The sbss Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <array>
#include <cstddef>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "sbss/error.hpp"

namespace sbss {

/// Architecture hyperparameters.
///
/// The separator is `repeats` repetitions of {convs_per_repeat dilated conv
/// blocks (dilation 1, 2, ..., 2^(convs_per_repeat-1)) followed by
/// s4d_per_repeat S4D blocks}. The speaker encoder reuses the frontend
/// encoder and bottleneck, then runs `speaker_blocks` dilated conv blocks and
/// averages over frames.
struct ModelConfig {
  std::string name = "custom";
  int n_filters = 2048;      // N
  int window = 320;          // L (samples); hop is L/2
  int bottleneck = 256;      // B, also the S4D layer width
  int conv_channels = 512;   // H
  int conv_kernel = 3;       // P
  int repeats = 3;           // R1
  int s4d_per_repeat = 1;    // R2
  int convs_per_repeat = 2;  // X
  int state_pairs = 16;      // D_state / 2
  int s4d_ffn_width = 512;
  int speaker_blocks = 8;
  int sample_rate = 16000;
  /// Future frames admitted by each separator conv block, indexed
  /// repeat * convs_per_repeat + block. Empty means fully causal.
  std::vector<int> lookahead_frames;

  int hop() const { return window / 2; }
  int separator_blocks() const { return repeats * convs_per_repeat; }
  static int dilation_of(int block_in_repeat) { return 1 << block_in_repeat; }

  int lookahead_of(int repeat, int block) const {
    const auto i = static_cast<std::size_t>(repeat * convs_per_repeat + block);
    return i < lookahead_frames.size() ? lookahead_frames[i] : 0;
  }
  int total_lookahead_frames() const {
    return std::accumulate(lookahead_frames.begin(), lookahead_frames.end(), 0);
  }
  bool has_s4d() const { return s4d_per_repeat > 0; }

  void validate() const {
    auto positive = [](int v, const char* what) {
      if (v < 1) throw ConfigError(std::string(what) + " must be >= 1");
    };
    positive(n_filters, "n_filters");
    positive(window, "window");
    positive(bottleneck, "bottleneck");
    positive(conv_channels, "conv_channels");
    positive(conv_kernel, "conv_kernel");
    positive(repeats, "repeats");
    positive(convs_per_repeat, "convs_per_repeat");
    positive(state_pairs, "state_pairs");
    positive(s4d_ffn_width, "s4d_ffn_width");
    positive(speaker_blocks, "speaker_blocks");
    positive(sample_rate, "sample_rate");
    if (s4d_per_repeat < 0) throw ConfigError("s4d_per_repeat must be >= 0");
    if (window < 2 || window % 2 != 0) {
      throw ConfigError("window must be even (hop = window/2), got " +
                        std::to_string(window));
    }
    if (convs_per_repeat > 20 || speaker_blocks > 20) {
      throw ConfigError("dilation exponent too large");
    }
    if (static_cast<int>(lookahead_frames.size()) > separator_blocks()) {
      throw ConfigError("lookahead_frames has more entries than separator blocks");
    }
    for (std::size_t i = 0; i < lookahead_frames.size(); ++i) {
      const int k = lookahead_frames[i];
      const int d = dilation_of(static_cast<int>(i) % convs_per_repeat);
      if (k < 0 || k > (conv_kernel - 1) * d) {
        throw ConfigError("lookahead_frames[" + std::to_string(i) + "] = " +
                          std::to_string(k) + " outside [0, " +
                          std::to_string((conv_kernel - 1) * d) + "]");
      }
    }
  }

  nlohmann::json to_json() const {
    return nlohmann::json{{"name", name},
                          {"n_filters", n_filters},
                          {"window", window},
                          {"bottleneck", bottleneck},
                          {"conv_channels", conv_channels},
                          {"conv_kernel", conv_kernel},
                          {"repeats", repeats},
                          {"s4d_per_repeat", s4d_per_repeat},
                          {"convs_per_repeat", convs_per_repeat},
                          {"state_pairs", state_pairs},
                          {"s4d_ffn_width", s4d_ffn_width},
                          {"speaker_blocks", speaker_blocks},
                          {"sample_rate", sample_rate},
                          {"lookahead_frames", lookahead_frames}};
  }

  static ModelConfig from_json(const nlohmann::json& j) {
    ModelConfig c;
    try {
      c.name = j.at("name").get<std::string>();
      c.n_filters = j.at("n_filters").get<int>();
      c.window = j.at("window").get<int>();
      c.bottleneck = j.at("bottleneck").get<int>();
      c.conv_channels = j.at("conv_channels").get<int>();
      c.conv_kernel = j.at("conv_kernel").get<int>();
      c.repeats = j.at("repeats").get<int>();
      c.s4d_per_repeat = j.at("s4d_per_repeat").get<int>();
      c.convs_per_repeat = j.at("convs_per_repeat").get<int>();
      c.state_pairs = j.at("state_pairs").get<int>();
      c.s4d_ffn_width = j.at("s4d_ffn_width").get<int>();
      c.speaker_blocks = j.at("speaker_blocks").get<int>();
      c.sample_rate = j.at("sample_rate").get<int>();
      c.lookahead_frames = j.at("lookahead_frames").get<std::vector<int>>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("invalid model config JSON: ") + e.what());
    }
    c.validate();
    return c;
  }

  bool operator==(const ModelConfig&) const = default;
};

inline constexpr std::array<std::string_view, 7> kPresetNames = {
    "b1", "b2", "c1", "c2", "d1", "d2", "d3"};

/// Table-1 style presets. b*: baseline Conv-TasNet TSE; c*: enlarged
/// frontend (N=2048); d*: c2 plus one S4D block per repeat; d2/d3 add 4 and
/// 12 frames of lookahead in the first one or two repeats.
inline ModelConfig preset(std::string_view name) {
  ModelConfig c;
  c.name = std::string(name);
  c.bottleneck = 256;
  c.conv_channels = 512;
  c.conv_kernel = 3;
  c.repeats = 3;
  c.state_pairs = 16;
  c.s4d_ffn_width = 512;
  c.speaker_blocks = 8;
  if (name == "b1") {
    c.window = 20, c.n_filters = 256, c.convs_per_repeat = 8, c.s4d_per_repeat = 0;
  } else if (name == "b2") {
    c.window = 320, c.n_filters = 256, c.convs_per_repeat = 8, c.s4d_per_repeat = 0;
  } else if (name == "c1") {
    c.window = 320, c.n_filters = 2048, c.convs_per_repeat = 8, c.s4d_per_repeat = 0;
  } else if (name == "c2") {
    c.window = 320, c.n_filters = 2048, c.convs_per_repeat = 2, c.s4d_per_repeat = 0;
  } else if (name == "d1" || name == "d2" || name == "d3") {
    c.window = 320, c.n_filters = 2048, c.convs_per_repeat = 2, c.s4d_per_repeat = 1;
    // A block at dilation d with kernel P admits up to (P-1)*d future
    // frames. d2: 2 + 2 frames in the first repeat (40 ms); d3: the first
    // two repeats shifted fully forward, 2 + 4 + 2 + 4 frames (120 ms).
    if (name == "d2") c.lookahead_frames = {2, 2};
    if (name == "d3") c.lookahead_frames = {2, 4, 2, 4};
  } else {
    std::string valid;
    for (auto n : kPresetNames) valid += (valid.empty() ? "" : ", ") + std::string(n);
    throw ConfigError("unknown preset '" + std::string(name) + "' (valid: " + valid + ")");
  }
  c.validate();
  return c;
}

}  // namespace sbss

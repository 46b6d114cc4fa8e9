// Copyright 2026 The sbss Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Named tensors for every learnable parameter, and the canonical naming
// scheme shared with external export tooling:
//
//   encoder.weight [N,1,L]   encoder.bias [N]
//   bottleneck.norm.{gain,bias} [N]   bottleneck.conv.weight [B,N,1] .bias [B]
//   sep.rep{r}.conv{x}.*     dilated conv block (see conv_block_tensors)
//   sep.rep{r}.s4d{j}.*      S4D block (see s4d_block_tensors)
//   mask.prelu.slope [1]     mask.conv.weight [N,B,1] .bias [N]
//   decoder.weight [N,1,L]   decoder.bias [1]
//   spk.conv{x}.*            speaker encoder conv blocks

#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "sbss/config.hpp"
#include "sbss/error.hpp"

namespace sbss {

struct Tensor {
  std::vector<std::int64_t> dims;
  std::vector<float> data;

  std::int64_t numel() const {
    std::int64_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }
  bool operator==(const Tensor&) const = default;
};

struct TensorSpec {
  std::string name;
  std::vector<std::int64_t> dims;

  std::int64_t numel() const {
    std::int64_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }
};

/// How a tensor is filled by random initialization.
enum class InitKind {
  kFanIn,      // uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))
  kZero,
  kOne,
  kPreluSlope,  // 0.25
  kS4DAReal,    // -1/2
  kS4DAImag,    // pi * n
  kS4DC,        // complex normal / sqrt(pairs), one plane
  kS4DLogDt,    // log-uniform dt in [1e-3, 1e-1]
};

struct TensorLayout {
  TensorSpec spec;
  InitKind init;
  std::int64_t fan_in = 1;
};

using WeightSet = std::map<std::string, Tensor>;

namespace detail {

inline void add(std::vector<TensorLayout>& out, std::string name,
                std::vector<std::int64_t> dims, InitKind init,
                std::int64_t fan_in = 1) {
  out.push_back({{std::move(name), std::move(dims)}, init, fan_in});
}

inline void conv_block_tensors(std::vector<TensorLayout>& out,
                               const std::string& prefix,
                               const ModelConfig& c) {
  const std::int64_t B = c.bottleneck, H = c.conv_channels, P = c.conv_kernel;
  add(out, prefix + ".in.weight", {H, B, 1}, InitKind::kFanIn, B);
  add(out, prefix + ".in.bias", {H}, InitKind::kZero);
  add(out, prefix + ".prelu1.slope", {1}, InitKind::kPreluSlope);
  add(out, prefix + ".norm1.gain", {H}, InitKind::kOne);
  add(out, prefix + ".norm1.bias", {H}, InitKind::kZero);
  add(out, prefix + ".dw.weight", {H, 1, P}, InitKind::kFanIn, P);
  add(out, prefix + ".dw.bias", {H}, InitKind::kZero);
  add(out, prefix + ".prelu2.slope", {1}, InitKind::kPreluSlope);
  add(out, prefix + ".norm2.gain", {H}, InitKind::kOne);
  add(out, prefix + ".norm2.bias", {H}, InitKind::kZero);
  add(out, prefix + ".out.weight", {B, H, 1}, InitKind::kFanIn, H);
  add(out, prefix + ".out.bias", {B}, InitKind::kZero);
}

inline void s4d_block_tensors(std::vector<TensorLayout>& out,
                              const std::string& prefix, const ModelConfig& c) {
  const std::int64_t B = c.bottleneck, S = c.state_pairs, F = c.s4d_ffn_width;
  add(out, prefix + ".norm1.gain", {B}, InitKind::kOne);
  add(out, prefix + ".norm1.bias", {B}, InitKind::kZero);
  add(out, prefix + ".ssm.a_re", {B, S}, InitKind::kS4DAReal);
  add(out, prefix + ".ssm.a_im", {B, S}, InitKind::kS4DAImag);
  add(out, prefix + ".ssm.c_re", {B, S}, InitKind::kS4DC);
  add(out, prefix + ".ssm.c_im", {B, S}, InitKind::kS4DC);
  add(out, prefix + ".ssm.d", {B}, InitKind::kOne);
  add(out, prefix + ".ssm.log_dt", {B}, InitKind::kS4DLogDt);
  add(out, prefix + ".proj.weight", {B, B}, InitKind::kFanIn, B);
  add(out, prefix + ".proj.bias", {B}, InitKind::kZero);
  add(out, prefix + ".norm2.gain", {B}, InitKind::kOne);
  add(out, prefix + ".norm2.bias", {B}, InitKind::kZero);
  add(out, prefix + ".ffn1.weight", {F, B}, InitKind::kFanIn, B);
  add(out, prefix + ".ffn1.bias", {F}, InitKind::kZero);
  add(out, prefix + ".ffn2.weight", {B, F}, InitKind::kFanIn, F);
  add(out, prefix + ".ffn2.bias", {B}, InitKind::kZero);
}

}  // namespace detail

inline std::string conv_block_prefix(int repeat, int block) {
  return "sep.rep" + std::to_string(repeat) + ".conv" + std::to_string(block);
}
inline std::string s4d_block_prefix(int repeat, int block) {
  return "sep.rep" + std::to_string(repeat) + ".s4d" + std::to_string(block);
}
inline std::string speaker_block_prefix(int block) {
  return "spk.conv" + std::to_string(block);
}

/// Every tensor the config requires, in architecture order.
inline std::vector<TensorLayout> tensor_layout(const ModelConfig& c) {
  c.validate();
  using detail::add;
  std::vector<TensorLayout> out;
  const std::int64_t N = c.n_filters, L = c.window, B = c.bottleneck;
  add(out, "encoder.weight", {N, 1, L}, InitKind::kFanIn, L);
  add(out, "encoder.bias", {N}, InitKind::kZero);
  add(out, "bottleneck.norm.gain", {N}, InitKind::kOne);
  add(out, "bottleneck.norm.bias", {N}, InitKind::kZero);
  add(out, "bottleneck.conv.weight", {B, N, 1}, InitKind::kFanIn, N);
  add(out, "bottleneck.conv.bias", {B}, InitKind::kZero);
  for (int r = 0; r < c.repeats; ++r) {
    for (int x = 0; x < c.convs_per_repeat; ++x) {
      detail::conv_block_tensors(out, conv_block_prefix(r, x), c);
    }
    for (int j = 0; j < c.s4d_per_repeat; ++j) {
      detail::s4d_block_tensors(out, s4d_block_prefix(r, j), c);
    }
  }
  add(out, "mask.prelu.slope", {1}, InitKind::kPreluSlope);
  add(out, "mask.conv.weight", {N, B, 1}, InitKind::kFanIn, B);
  add(out, "mask.conv.bias", {N}, InitKind::kZero);
  add(out, "decoder.weight", {N, 1, L}, InitKind::kFanIn, N);
  add(out, "decoder.bias", {1}, InitKind::kZero);
  for (int x = 0; x < c.speaker_blocks; ++x) {
    detail::conv_block_tensors(out, speaker_block_prefix(x), c);
  }
  return out;
}

inline std::vector<TensorSpec> expected_tensors(const ModelConfig& c) {
  std::vector<TensorSpec> specs;
  for (auto& l : tensor_layout(c)) specs.push_back(l.spec);
  return specs;
}

/// Learnable scalar count implied by a config.
inline std::int64_t param_count(const ModelConfig& c) {
  std::int64_t n = 0;
  for (const auto& s : expected_tensors(c)) n += s.numel();
  return n;
}

/// Lists every missing, unexpected, or misshapen tensor. Empty when the
/// weight set matches the config exactly.
inline std::vector<std::string> weight_mismatches(const ModelConfig& c,
                                                  const WeightSet& w) {
  std::vector<std::string> problems;
  std::map<std::string, bool> expected;
  for (const auto& s : expected_tensors(c)) {
    expected[s.name] = true;
    auto it = w.find(s.name);
    if (it == w.end()) {
      problems.push_back("missing tensor " + s.name);
      continue;
    }
    if (it->second.dims != s.dims) {
      std::string got, want;
      for (auto d : it->second.dims) got += (got.empty() ? "" : "x") + std::to_string(d);
      for (auto d : s.dims) want += (want.empty() ? "" : "x") + std::to_string(d);
      problems.push_back("tensor " + s.name + " has shape [" + got +
                         "], expected [" + want + "]");
    } else if (static_cast<std::int64_t>(it->second.data.size()) != s.numel()) {
      problems.push_back("tensor " + s.name + " payload length " +
                         std::to_string(it->second.data.size()) +
                         " != " + std::to_string(s.numel()));
    }
  }
  for (const auto& [name, t] : w) {
    if (!expected.count(name)) problems.push_back("unexpected tensor " + name);
  }
  return problems;
}

/// Verify-mode random initialization, deterministic in `seed`.
inline WeightSet random_weights(const ModelConfig& c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  WeightSet w;
  std::normal_distribution<double> normal(0.0, std::sqrt(0.5));
  std::uniform_real_distribution<double> log_dt(std::log(1e-3), std::log(1e-1));
  for (const auto& layout : tensor_layout(c)) {
    Tensor t;
    t.dims = layout.spec.dims;
    t.data.resize(static_cast<std::size_t>(layout.spec.numel()));
    switch (layout.init) {
      case InitKind::kFanIn: {
        const double bound = 1.0 / std::sqrt(static_cast<double>(layout.fan_in));
        std::uniform_real_distribution<double> u(-bound, bound);
        for (auto& v : t.data) v = static_cast<float>(u(rng));
        break;
      }
      case InitKind::kZero:
        break;
      case InitKind::kOne:
        std::fill(t.data.begin(), t.data.end(), 1.0f);
        break;
      case InitKind::kPreluSlope:
        std::fill(t.data.begin(), t.data.end(), 0.25f);
        break;
      case InitKind::kS4DAReal:
        std::fill(t.data.begin(), t.data.end(), -0.5f);
        break;
      case InitKind::kS4DAImag: {
        const auto pairs = static_cast<std::size_t>(t.dims.back());
        for (std::size_t i = 0; i < t.data.size(); ++i) {
          t.data[i] = static_cast<float>(std::numbers::pi *
                                         static_cast<double>(i % pairs));
        }
        break;
      }
      case InitKind::kS4DC: {
        const double scale = 1.0 / std::sqrt(static_cast<double>(t.dims.back()));
        for (auto& v : t.data) v = static_cast<float>(normal(rng) * scale);
        break;
      }
      case InitKind::kS4DLogDt:
        for (auto& v : t.data) v = static_cast<float>(log_dt(rng));
        break;
    }
    w.emplace(layout.spec.name, std::move(t));
  }
  return w;
}

}  // namespace sbss

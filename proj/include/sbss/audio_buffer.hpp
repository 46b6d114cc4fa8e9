// Copyright 2026 The sbss Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "sbss/error.hpp"

namespace sbss {

/// Mono waveform.
struct AudioBuffer {
  std::vector<float> samples;
  int sample_rate = 16000;

  AudioBuffer() = default;
  AudioBuffer(std::vector<float> s, int rate) : samples(std::move(s)), sample_rate(rate) {}

  std::size_t size() const { return samples.size(); }
  double duration_seconds() const {
    return static_cast<double>(samples.size()) / static_cast<double>(sample_rate);
  }
  void validate() const {
    if (sample_rate <= 0) throw DataError("sample rate must be positive");
    if (!std::all_of(samples.begin(), samples.end(),
                     [](float v) { return std::isfinite(v); })) {
      throw DataError("audio contains non-finite samples");
    }
  }
  bool operator==(const AudioBuffer&) const = default;
};

}  // namespace sbss

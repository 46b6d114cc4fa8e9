// Copyright 2026 The sbss Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Real-time-factor measurement of frame-by-frame streaming inference.

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#ifdef __linux__
#include <sched.h>
#endif

#include "json.hpp"
#include "sbss/audio_buffer.hpp"
#include "sbss/error.hpp"
#include "sbss/model.hpp"
#include "sbss/streaming.hpp"

namespace sbss {

struct RtfResult {
  std::vector<double> per_clip;
  double mean_rtf = 0;
  double audio_seconds = 0;
  double wall_seconds = 0;
  int threads = 1;
};

struct RtfOptions {
  /// Samples per push; 0 means one hop (frame-by-frame).
  std::size_t chunk_samples = 0;
  /// Untimed streaming pass over the head of each clip before timing it.
  double warmup_seconds = 1.0;
};

/// Seeded Gaussian-noise clips (std 0.1, clipped to [-1, 1]).
inline std::vector<AudioBuffer> synthetic_clips(std::size_t count, double seconds,
                                                std::uint64_t seed,
                                                int sample_rate = 16000) {
  if (!(seconds > 0)) throw DataError("clip duration must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> noise(0.0f, 0.1f);
  const auto len = static_cast<std::size_t>(std::llround(seconds * sample_rate));
  std::vector<AudioBuffer> clips;
  clips.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    std::vector<float> s(len);
    for (auto& v : s) v = std::clamp(noise(rng), -1.0f, 1.0f);
    clips.emplace_back(std::move(s), sample_rate);
  }
  return clips;
}

/// Restricts the calling thread to the CPU it is currently running on.
/// Returns false where unsupported.
inline bool pin_to_current_cpu() {
#ifdef __linux__
  const int cpu = sched_getcpu();
  if (cpu < 0) return false;
  cpu_set_t set;
  CPU_ZERO(&set);
  CPU_SET(cpu, &set);
  return sched_setaffinity(0, sizeof(set), &set) == 0;
#else
  return false;
#endif
}

/// Value of SBSS_THREADS, or 1 when unset or unparsable.
inline int requested_threads() {
  const char* v = std::getenv("SBSS_THREADS");
  if (v == nullptr) return 1;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  return (end != v && n > 0) ? static_cast<int>(n) : 1;
}

namespace bench_detail {

template <class Real>
void run_stream(const Model<Real>& model, std::span<const Real> embedding,
                std::span<const Real> y, std::size_t chunk, std::vector<Real>& sink) {
  StreamState<Real> s(model, std::vector<Real>(embedding.begin(), embedding.end()));
  for (std::size_t i = 0; i < y.size(); i += chunk) {
    const auto out = s.push(y.subspan(i, std::min(chunk, y.size() - i)));
    if (!out.empty()) sink[0] += out.back();
  }
  const auto tail = s.flush();
  if (!tail.empty()) sink[0] += tail.back();
}

}  // namespace bench_detail

/// Measures several models over the same clips, alternating the model order
/// per clip so slow drift in machine state affects all of them alike. The
/// enrollment embedding is computed once per model, outside the timed region.
template <class Real>
std::vector<RtfResult> measure_rtf_interleaved(
    std::span<const Model<Real>* const> models, const std::vector<AudioBuffer>& clips,
    const AudioBuffer& enrollment, const RtfOptions& options = {}) {
  if (clips.empty()) throw DataError("measure_rtf: empty clip set");
  if (models.empty()) return {};
  pin_to_current_cpu();
  std::vector<std::vector<Real>> embeddings;
  for (const auto* m : models) embeddings.push_back(m->embed_speaker(enrollment));

  std::vector<RtfResult> results(models.size());
  std::vector<Real> sink(1, Real(0));
  using clock = std::chrono::steady_clock;
  for (std::size_t k = 0; k < clips.size(); ++k) {
    const AudioBuffer& clip = clips[k];
    clip.validate();
    if (clip.samples.empty()) throw DataError("measure_rtf: empty clip");
    const std::vector<Real> y(clip.samples.begin(), clip.samples.end());
    const double duration = clip.duration_seconds();
    for (std::size_t j = 0; j < models.size(); ++j) {
      const std::size_t mi = (j + k) % models.size();
      const Model<Real>& m = *models[mi];
      const std::size_t chunk = options.chunk_samples ? options.chunk_samples : m.hop();
      const auto warm = std::min<std::size_t>(
          y.size(), static_cast<std::size_t>(options.warmup_seconds * clip.sample_rate));
      if (warm > 0) {
        bench_detail::run_stream<Real>(m, embeddings[mi],
                                       std::span<const Real>(y).first(warm), chunk, sink);
      }
      const auto t0 = clock::now();
      bench_detail::run_stream<Real>(m, embeddings[mi], y, chunk, sink);
      const double wall = std::chrono::duration<double>(clock::now() - t0).count();
      auto& r = results[mi];
      r.per_clip.push_back(wall / duration);
      r.wall_seconds += wall;
      r.audio_seconds += duration;
    }
  }
  for (auto& r : results) {
    r.mean_rtf = std::accumulate(r.per_clip.begin(), r.per_clip.end(), 0.0) /
                 static_cast<double>(r.per_clip.size());
  }
  if (!std::isfinite(static_cast<double>(sink[0]))) {
    throw Error("measure_rtf: non-finite model output");
  }
  return results;
}

template <class Real>
RtfResult measure_rtf(const Model<Real>& model, const std::vector<AudioBuffer>& clips,
                      const AudioBuffer& enrollment, const RtfOptions& options = {}) {
  const Model<Real>* one[] = {&model};
  return measure_rtf_interleaved<Real>(std::span<const Model<Real>* const>(one), clips,
                                       enrollment, options)
      .front();
}

inline nlohmann::json rtf_report(const std::string& preset, const RtfResult& r,
                                 const LatencyReport& latency, std::int64_t params) {
  return nlohmann::json{{"preset", preset},
                        {"clips", r.per_clip.size()},
                        {"mean_rtf", r.mean_rtf},
                        {"per_clip", r.per_clip},
                        {"audio_seconds", r.audio_seconds},
                        {"wall_seconds", r.wall_seconds},
                        {"threads", r.threads},
                        {"latency_ms", latency.algorithmic_latency_ms},
                        {"param_count", params}};
}

}  // namespace sbss

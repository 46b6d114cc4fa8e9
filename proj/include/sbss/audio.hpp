// Copyright 2026 The sbss Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// WAV I/O, mixture simulation, and SDR / SI-SDR.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sbss/audio_buffer.hpp"
#include "sbss/error.hpp"

namespace sbss {

// ---------------------------------------------------------------------------
// WAV

enum class WavFormat { kPcm16, kFloat32 };

namespace wav_detail {

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
inline std::uint16_t get_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}
inline void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>(v >> 8));
}
inline void put_tag(std::vector<unsigned char>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

}  // namespace wav_detail

/// Parses an in-memory RIFF/WAVE file. Accepts mono PCM16 or float32 at
/// `expected_rate` Hz (pass 0 to accept any rate).
inline AudioBuffer parse_wav(std::span<const unsigned char> bytes,
                             int expected_rate = 16000) {
  using namespace wav_detail;
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw DataError("malformed WAV header: missing RIFF/WAVE tags");
  }
  std::size_t pos = 12;
  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* hdr = bytes.data() + pos;
    const std::uint32_t size = get_u32(hdr + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (size < 16 || body + size > bytes.size()) {
        throw DataError("malformed WAV header: short fmt chunk");
      }
      const unsigned char* f = bytes.data() + body;
      format = get_u16(f);
      channels = get_u16(f + 2);
      rate = get_u32(f + 4);
      bits = get_u16(f + 14);
      if (format == kFormatExtensible) {
        if (size < 26) throw DataError("malformed WAV header: short extensible fmt");
        format = get_u16(f + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      if (!have_fmt) throw DataError("malformed WAV: data chunk before fmt chunk");
      if (channels != 1) {
        throw UnsupportedFormatError("unsupported channel count " +
                                     std::to_string(channels) + " (mono only)");
      }
      const bool pcm16 = format == kFormatPcm && bits == 16;
      const bool f32 = format == kFormatFloat && bits == 32;
      if (!pcm16 && !f32) {
        throw UnsupportedFormatError("unsupported sample format (tag " +
                                     std::to_string(format) + ", " +
                                     std::to_string(bits) +
                                     " bits); PCM16 or float32 required");
      }
      if (expected_rate > 0 && rate != static_cast<std::uint32_t>(expected_rate)) {
        throw UnsupportedFormatError("unsupported sample rate " + std::to_string(rate) +
                                     " Hz (expected " + std::to_string(expected_rate) +
                                     " Hz; resampling is not supported)");
      }
      if (body + size > bytes.size()) {
        throw DataError("truncated WAV data: header declares " + std::to_string(size) +
                        " bytes, " + std::to_string(bytes.size() - body) + " present");
      }
      const std::size_t width = bits / 8;
      if (size % width != 0) throw DataError("truncated WAV data: partial sample");
      AudioBuffer out;
      out.sample_rate = static_cast<int>(rate);
      out.samples.resize(size / width);
      const unsigned char* d = bytes.data() + body;
      for (std::size_t i = 0; i < out.samples.size(); ++i) {
        if (pcm16) {
          const auto v = static_cast<std::int16_t>(get_u16(d + 2 * i));
          out.samples[i] = static_cast<float>(v) / 32768.0f;
        } else {
          const std::uint32_t u = get_u32(d + 4 * i);
          float v;
          std::memcpy(&v, &u, sizeof v);
          out.samples[i] = v;
        }
      }
      out.validate();
      return out;
    }
    pos = body + size + (size & 1u);
  }
  throw DataError(have_fmt ? "malformed WAV: no data chunk" : "malformed WAV: no fmt chunk");
}

inline AudioBuffer read_wav(const std::string& path, int expected_rate = 16000) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open WAV file '" + path + "'");
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>());
  try {
    return parse_wav(bytes, expected_rate);
  } catch (const DataError& e) {
    if (dynamic_cast<const UnsupportedFormatError*>(&e)) {
      throw UnsupportedFormatError(path + ": " + e.what());
    }
    throw DataError(path + ": " + e.what());
  }
}

inline std::vector<unsigned char> encode_wav(const AudioBuffer& audio,
                                             WavFormat format = WavFormat::kFloat32) {
  using namespace wav_detail;
  audio.validate();
  const bool pcm16 = format == WavFormat::kPcm16;
  const std::uint16_t bits = pcm16 ? 16 : 32;
  const std::uint32_t data_bytes =
      static_cast<std::uint32_t>(audio.samples.size() * (bits / 8));
  std::vector<unsigned char> out;
  out.reserve(44 + data_bytes);
  put_tag(out, "RIFF");
  put_u32(out, 36 + data_bytes);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, pcm16 ? kFormatPcm : kFormatFloat);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(audio.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(audio.sample_rate) * (bits / 8));
  put_u16(out, bits / 8);
  put_u16(out, bits);
  put_tag(out, "data");
  put_u32(out, data_bytes);
  for (float s : audio.samples) {
    if (pcm16) {
      const float q = std::round(std::clamp(s, -1.0f, 1.0f) * 32768.0f);
      put_u16(out, static_cast<std::uint16_t>(
                       static_cast<std::int16_t>(std::clamp(q, -32768.0f, 32767.0f))));
    } else {
      std::uint32_t u;
      std::memcpy(&u, &s, sizeof u);
      put_u32(out, u);
    }
  }
  return out;
}

inline void write_wav(const std::string& path, const AudioBuffer& audio,
                      WavFormat format = WavFormat::kFloat32) {
  const auto bytes = encode_wav(audio, format);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing '" + path + "'");
}

// ---------------------------------------------------------------------------
// Mixture simulation (y = s + i + n)

struct MixSpec {
  double snr_db = 0;  // target vs noise
  double sir_db = 0;  // target vs interference
  std::uint64_t seed = 0;
};

/// Sampling ranges of the data protocol.
enum class MixCondition {
  kTraining,       // SNR U[0, 25] dB, SIR U[-5, 5] dB
  kEvalTwoSpeaker, // SNR U[10, 20] dB, SIR U[-5, 5] dB
  kEvalOneSpeaker, // SNR U[0, 10] dB, no interference
};

inline MixSpec sample_mix_spec(MixCondition condition, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double snr_lo = 0, snr_hi = 25;
  if (condition == MixCondition::kEvalTwoSpeaker) snr_lo = 10, snr_hi = 20;
  if (condition == MixCondition::kEvalOneSpeaker) snr_lo = 0, snr_hi = 10;
  std::uniform_real_distribution<double> snr(snr_lo, snr_hi);
  std::uniform_real_distribution<double> sir(-5.0, 5.0);
  MixSpec s;
  s.snr_db = snr(rng);
  s.sir_db = sir(rng);
  s.seed = seed;
  return s;
}

struct MixResult {
  AudioBuffer mixture;
  AudioBuffer target;        // reference, same scaling as the mixture
  AudioBuffer interference;  // scaled component (empty if none)
  AudioBuffer noise;         // scaled component
  double normalization = 1;  // common gain applied for the peak limit
};

inline double mean_power(std::span<const float> x) {
  double acc = 0;
  for (float v : x) acc += static_cast<double>(v) * v;
  return x.empty() ? 0.0 : acc / static_cast<double>(x.size());
}

inline double power_ratio_db(std::span<const float> num, std::span<const float> den) {
  return 10.0 * std::log10(mean_power(num) / mean_power(den));
}

/// Scales interference and noise relative to the target, sums, and limits
/// the mixture peak to 0.99 (the same gain is applied to every returned
/// component). Longer signals are cropped to the shortest at a
/// seed-determined offset. An empty interference buffer means target+noise.
inline MixResult simulate_mix(const AudioBuffer& target, const AudioBuffer& interference,
                              const AudioBuffer& noise, const MixSpec& spec) {
  target.validate();
  noise.validate();
  const bool has_interf = !interference.samples.empty();
  if (has_interf) interference.validate();
  if (!std::isfinite(spec.snr_db) || !std::isfinite(spec.sir_db)) {
    throw DataError("SNR/SIR must be finite");
  }
  if (noise.sample_rate != target.sample_rate ||
      (has_interf && interference.sample_rate != target.sample_rate)) {
    throw DataError("simulate_mix: sample rates differ");
  }
  std::size_t len = std::min(target.size(), noise.size());
  if (has_interf) len = std::min(len, interference.size());
  if (len == 0) throw DataError("simulate_mix: empty input");

  std::mt19937_64 rng(spec.seed);
  auto crop = [&](const AudioBuffer& a) {
    std::uniform_int_distribution<std::size_t> off(0, a.size() - len);
    const std::size_t o = off(rng);
    return std::vector<float>(a.samples.begin() + static_cast<std::ptrdiff_t>(o),
                              a.samples.begin() + static_cast<std::ptrdiff_t>(o + len));
  };
  const auto s = crop(target);
  const auto i = has_interf ? crop(interference) : std::vector<float>{};
  const auto n = crop(noise);

  const double ps = mean_power(s);
  const double pn = mean_power(n);
  if (ps == 0) throw DataError("simulate_mix: target has zero power");
  if (pn == 0) throw DataError("simulate_mix: noise has zero power");
  double gi = 0;
  if (has_interf) {
    const double pi = mean_power(i);
    if (pi == 0) throw DataError("simulate_mix: interference has zero power");
    gi = std::sqrt(ps / (pi * std::pow(10.0, spec.sir_db / 10.0)));
  }
  const double gn = std::sqrt(ps / (pn * std::pow(10.0, spec.snr_db / 10.0)));

  std::vector<double> mix(len);
  double peak = 0;
  for (std::size_t t = 0; t < len; ++t) {
    mix[t] = s[t] + gn * n[t] + (has_interf ? gi * i[t] : 0.0);
    peak = std::max(peak, std::abs(mix[t]));
  }
  const double g = peak > 0.99 ? 0.99 / peak : 1.0;

  MixResult r;
  r.normalization = g;
  const int rate = target.sample_rate;
  r.mixture = AudioBuffer(std::vector<float>(len), rate);
  r.target = AudioBuffer(std::vector<float>(len), rate);
  r.noise = AudioBuffer(std::vector<float>(len), rate);
  if (has_interf) r.interference = AudioBuffer(std::vector<float>(len), rate);
  for (std::size_t t = 0; t < len; ++t) {
    r.mixture.samples[t] = static_cast<float>(g * mix[t]);
    r.target.samples[t] = static_cast<float>(g * s[t]);
    r.noise.samples[t] = static_cast<float>(g * gn * n[t]);
    if (has_interf) r.interference.samples[t] = static_cast<float>(g * gi * i[t]);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Metrics

inline constexpr double kMetricCapDb = 100.0;

namespace metric_detail {
template <class T>
void check(std::span<const T> ref, std::span<const T> est) {
  if (ref.size() != est.size()) {
    throw DataError("metric: reference has " + std::to_string(ref.size()) +
                    " samples, estimate " + std::to_string(est.size()));
  }
  double e = 0;
  for (auto v : ref) e += static_cast<double>(v) * v;
  if (e == 0) throw DataError("metric: reference is silent");
}
inline double ratio_db(double num, double den) {
  if (num == 0) return -kMetricCapDb;  // no target energy (e.g. silent estimate)
  if (den == 0) return kMetricCapDb;
  return std::clamp(10.0 * std::log10(num / den), -kMetricCapDb, kMetricCapDb);
}
}  // namespace metric_detail

/// 10 log10(|s|^2 / |s - s_hat|^2), clamped to +-100 dB.
template <class T>
double sdr(std::span<const T> reference, std::span<const T> estimate) {
  metric_detail::check(reference, estimate);
  double num = 0, den = 0;
  for (std::size_t t = 0; t < reference.size(); ++t) {
    const double s = reference[t];
    const double e = s - static_cast<double>(estimate[t]);
    num += s * s;
    den += e * e;
  }
  return metric_detail::ratio_db(num, den);
}

/// Scale-invariant SDR with projection alpha = <s_hat, s> / |s|^2.
template <class T>
double si_sdr(std::span<const T> reference, std::span<const T> estimate) {
  metric_detail::check(reference, estimate);
  double dot = 0, ref_energy = 0;
  for (std::size_t t = 0; t < reference.size(); ++t) {
    dot += static_cast<double>(estimate[t]) * reference[t];
    ref_energy += static_cast<double>(reference[t]) * reference[t];
  }
  const double alpha = dot / ref_energy;
  double num = 0, den = 0;
  for (std::size_t t = 0; t < reference.size(); ++t) {
    const double s = alpha * reference[t];
    const double e = static_cast<double>(estimate[t]) - s;
    num += s * s;
    den += e * e;
  }
  return metric_detail::ratio_db(num, den);
}

inline double sdr(const AudioBuffer& reference, const AudioBuffer& estimate) {
  return sdr<float>(reference.samples, estimate.samples);
}
inline double si_sdr(const AudioBuffer& reference, const AudioBuffer& estimate) {
  return si_sdr<float>(reference.samples, estimate.samples);
}

}  // namespace sbss

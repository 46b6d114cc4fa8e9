// Copyright 2026 The sbss Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Property suite run by `sbss verify` on randomly initialized models.

#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sbss/audio.hpp"
#include "sbss/config.hpp"
#include "sbss/model.hpp"
#include "sbss/model_store.hpp"
#include "sbss/ssm.hpp"
#include "sbss/streaming.hpp"
#include "sbss/weights.hpp"

namespace sbss {

/// ||a - b|| / ||b||, accumulated in double.
template <class Real>
double relative_l2(std::span<const Real> a, std::span<const Real> b) {
  if (a.size() != b.size()) throw ShapeError("relative_l2: length mismatch");
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    num += d * d;
    den += static_cast<double>(b[i]) * b[i];
  }
  if (den == 0) return num == 0 ? 0.0 : INFINITY;
  return std::sqrt(num / den);
}

/// Index of the first sample where the offline outputs for `y` and for `y`
/// with an impulse of size `delta` added at `t` differ; y.size() if none.
/// Uses the S4D recurrence: FFT rounding error reaches every output sample,
/// so bitwise comparison is only meaningful for the recurrent form.
template <class Real>
std::size_t earliest_divergence(const Model<Real>& model, std::span<const Real> e,
                                std::span<const Real> y, std::size_t t, Real delta) {
  std::vector<Real> perturbed(y.begin(), y.end());
  perturbed.at(t) += delta;
  const auto a = model.extract(y, e, SsmMode::kRecurrence);
  const auto b = model.extract(std::span<const Real>(perturbed), e, SsmMode::kRecurrence);
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] != b[i]) return i;
  }
  return a.size();
}

struct PropertyResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct VerifyOptions {
  std::uint64_t seed = 1;
  bool double_precision = false;
  /// Negative control: push one discrete pole outside the unit circle.
  bool inject_unstable = false;
};

namespace verify_detail {

inline std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

inline std::vector<float> noise(std::size_t n, std::uint64_t seed, float scale = 0.1f) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> g(0.0f, scale);
  std::vector<float> out(n);
  for (auto& v : out) v = std::clamp(g(rng), -1.0f, 1.0f);
  return out;
}

template <class Real>
void ssm_properties(const VerifyOptions& o, std::vector<PropertyResult>& out) {
  const bool dbl = sizeof(Real) == 8;
  std::mt19937_64 rng(o.seed);

  {  // ZOH against extended-precision reference values.
    S4DLayerParams<double> p(1, 1);
    p.a_real[0] = -0.5;
    p.a_imag[0] = std::numbers::pi;
    p.log_dt[0] = std::log(0.1);
    p.d_feedthrough[0] = 1;
    const auto d = discretize(p);
    const std::complex<double> a_ref(0.90467294266309286754, 0.29394605772022161639);
    const std::complex<double> b_ref(0.095964453318890945856, 0.015070327664333661838);
    const double err = std::max(std::abs(d.a_bar(0, 0) - a_ref),
                                std::abs(d.b_bar(0, 0) - b_ref));
    out.push_back({"ssm.zoh_reference", err < 1e-14, fmt("max err %.3e", err)});
  }

  auto params = init_s4d_lin<Real>(64, 16, rng);
  {
    auto disc = discretize(params);
    if (o.inject_unstable) {
      disc.a_re[5] = Real(1.01);
      disc.a_im[5] = Real(0);
    }
    const double m = disc.max_abs_a_bar();
    out.push_back({"ssm.discrete_stability", m < 1.0, fmt("max |a_bar| = %.9f", m)});

    // Bounded input for many steps must keep the state finite and bounded.
    SSMState<Real> s(params.channels, params.state_pairs);
    std::vector<Real> u(params.channels), v(params.channels);
    std::uniform_real_distribution<double> uni(-1, 1);
    for (int k = 0; k < 20000; ++k) {
      for (auto& x : u) x = static_cast<Real>(uni(rng));
      ssm_advance<Real>(s, u, disc, params, v);
    }
    double peak = 0;
    for (std::size_t i = 0; i < s.x_re.size(); ++i) {
      peak = std::max(peak, static_cast<double>(std::hypot(s.x_re[i], s.x_im[i])));
    }
    const bool ok = s.is_finite() && peak < 1e3;
    out.push_back({"ssm.state_bounded", ok,
                   s.is_finite() ? fmt("max |x| after 20000 steps = %.4g", peak)
                                 : std::string("state became non-finite within 20000 steps")});
  }
  {  // Kernel equals the impulse response.
    const std::size_t K = 64;
    const auto disc = discretize(params);
    const auto kernel = ssm_kernel(params, K);
    SSMState<Real> s(params.channels, params.state_pairs);
    std::vector<Real> u(params.channels, Real(1)), v(params.channels);
    double err = 0;
    for (std::size_t j = 0; j < K; ++j) {
      ssm_advance<Real>(s, u, disc, params, v);
      for (std::size_t h = 0; h < params.channels; ++h) {
        const double expect = kernel[h][j] + (j == 0 ? params.d_feedthrough[h] : Real(0));
        err = std::max(err, std::abs(static_cast<double>(v[h]) - expect));
      }
      std::fill(u.begin(), u.end(), Real(0));
    }
    const double tol = dbl ? 1e-12 : 1e-5;
    out.push_back({"ssm.kernel_is_impulse_response", err < tol, fmt("max err %.3e", err)});
  }
  {  // Recurrence and FFT convolution agree.
    const std::size_t K = 1024;
    std::normal_distribution<double> g(0, 1);
    Sequences<Real> u(params.channels, std::vector<Real>(K));
    for (auto& ch : u) {
      for (auto& x : ch) x = static_cast<Real>(g(rng));
    }
    const auto rec = ssm_scan(params, discretize(params), u);
    const auto conv = fft_convolve<Real>(u, ssm_kernel(params, K), params.d_feedthrough);
    double err = 0;
    for (std::size_t h = 0; h < u.size(); ++h) {
      for (std::size_t j = 0; j < K; ++j) {
        err = std::max(err, std::abs(static_cast<double>(rec[h][j]) - conv[h][j]));
      }
    }
    const double tol = dbl ? 1e-10 : 1e-4;
    out.push_back({"ssm.recurrence_convolution_duality", err < tol, fmt("max err %.3e", err)});
  }
}

template <class Real>
void model_properties(const VerifyOptions& o, std::vector<PropertyResult>& out) {
  const bool dbl = sizeof(Real) == 8;
  {
    const auto d1 = param_count(preset("d1"));
    const auto b1 = param_count(preset("b1"));
    const auto b2 = param_count(preset("b2"));
    const auto c1 = param_count(preset("c1"));
    const bool ok = d1 < b1 && b1 < b2 && b2 < c1;
    out.push_back({"architecture.param_ordering", ok,
                   "d1=" + std::to_string(d1) + " b1=" + std::to_string(b1) +
                       " b2=" + std::to_string(b2) + " c1=" + std::to_string(c1)});
  }
  {
    const double d1 = latency_of(preset("d1")).algorithmic_latency_ms;
    const double b1 = latency_of(preset("b1")).algorithmic_latency_ms;
    const double d2 = latency_of(preset("d2")).algorithmic_latency_ms;
    const double d3 = latency_of(preset("d3")).algorithmic_latency_ms;
    const bool ok = d1 == 20.0 && b1 == 1.25 && d2 == 60.0 && d3 == 140.0;
    out.push_back({"streaming.latency_arithmetic", ok,
                   fmt("b1 %.2f ms, ", b1) + fmt("d1 %.2f ms, ", d1) +
                       fmt("d2 %.2f ms, ", d2) + fmt("d3 %.2f ms", d3)});
  }

  const auto enroll = noise(16000, o.seed + 11);
  for (const char* name : {"b1", "d1"}) {
    const auto model = build_random_model<Real>(preset(name), o.seed + 1);
    const std::vector<Real> e = model.embed_speaker(
        std::span<const Real>(std::vector<Real>(enroll.begin(), enroll.end())));
    const auto clip = noise(8000, o.seed + 21);
    const std::vector<Real> y(clip.begin(), clip.end());

    const auto offline = model.extract(y, e);
    bool finite = true;
    for (Real v : offline) finite = finite && std::isfinite(v);

    const auto s160 = stream_signal<Real>(model, e, y, 160);
    const auto s4096 = stream_signal<Real>(model, e, y, 4096);
    const auto s7 = stream_signal<Real>(model, e, y, 7);
    const double err = relative_l2<Real>(s160, offline);
    const bool same = s160 == s4096 && s160 == s7;
    out.push_back({std::string("streaming.offline_equivalence.") + name,
                   finite && err < (dbl ? 1e-10 : 1e-4), fmt("relative L2 %.3e", err)});
    out.push_back({std::string("streaming.chunk_invariance.") + name, same,
                   same ? "chunks 7/160/4096 bit-identical" : "outputs differ across chunks"});

    const std::size_t L = model.window();
    const std::size_t t = 4000 + L - 1 - (4000 % model.hop());
    const std::size_t first = earliest_divergence<Real>(model, e, y, t, Real(0.05));
    const std::size_t bound = t - L + 1;
    out.push_back({std::string("streaming.causality.") + name, first == bound,
                   "perturbation at " + std::to_string(t) + " first changes output " +
                       std::to_string(first) + " (bound " + std::to_string(bound) + ")"});
  }
  {
    const auto model = build_random_model<Real>(preset("d1"), o.seed + 2);
    const std::vector<Real> e(model.bottleneck_width(), Real(1));
    const auto z = model.encode(std::span<const Real>(
        std::vector<Real>(enroll.begin(), enroll.end())));
    const auto m = model.mask(z, e);
    bool in_range = true;
    for (Real v : m.data()) in_range = in_range && v >= 0 && v <= 1;
    const auto conv = model.extract(std::span<const Real>(
        std::vector<Real>(enroll.begin(), enroll.end())), e, SsmMode::kConvolution);
    const auto rec = model.extract(std::span<const Real>(
        std::vector<Real>(enroll.begin(), enroll.end())), e, SsmMode::kRecurrence);
    const double err = relative_l2<Real>(conv, rec);
    out.push_back({"architecture.mask_range", in_range, "sigmoid mask within [0, 1]"});
    out.push_back({"architecture.s4d_modes_agree", err < (dbl ? 1e-10 : 1e-4),
                   fmt("relative L2 %.3e", err)});
  }
}

inline void audio_properties(const VerifyOptions& o, std::vector<PropertyResult>& out) {
  // Multiples of 2^-10 keep every sum and square below exact in double.
  auto s = noise(16000, o.seed + 31, 0.3f);
  for (auto& v : s) v = std::round(v * 1024.0f) / 1024.0f;
  {
    std::vector<float> twice(s), ortho(s.size());
    for (auto& v : twice) v *= 2;
    for (std::size_t i = 0; i + 1 < s.size(); i += 2) {
      // Equal-power error orthogonal to s: (s1, -s0) on each sample pair.
      ortho[i] = s[i] + s[i + 1];
      ortho[i + 1] = s[i + 1] - s[i];
    }
    const std::span<const float> ref(s);
    const double perfect = sdr<float>(ref, ref);
    const double si_scaled = si_sdr<float>(ref, twice);
    const double sdr_scaled = sdr<float>(ref, twice);
    const double orth = sdr<float>(ref, ortho);
    const bool ok = perfect == 100.0 && si_scaled == 100.0 && sdr_scaled == 0.0 &&
                    orth == 0.0;
    out.push_back({"audio.metric_identities", ok,
                   fmt("sdr(s,s)=%.1f ", perfect) + fmt("si_sdr(s,2s)=%.1f ", si_scaled) +
                       fmt("sdr(s,2s)=%.2e ", sdr_scaled) + fmt("sdr(s,s+orth)=%.2e", orth)});
  }
  {
    const AudioBuffer target(noise(24000, o.seed + 41, 0.2f), 16000);
    const AudioBuffer interf(noise(20000, o.seed + 42, 0.3f), 16000);
    const AudioBuffer n(noise(22000, o.seed + 43, 0.05f), 16000);
    double worst = 0;
    bool deterministic = true;
    for (int k = 0; k < 50; ++k) {
      const auto spec = sample_mix_spec(MixCondition::kTraining, o.seed * 1000 + k);
      const auto r = simulate_mix(target, interf, n, spec);
      worst = std::max(worst, std::abs(power_ratio_db(r.target.samples, r.noise.samples) -
                                       spec.snr_db));
      worst = std::max(worst, std::abs(power_ratio_db(r.target.samples,
                                                      r.interference.samples) -
                                       spec.sir_db));
      deterministic = deterministic && simulate_mix(target, interf, n, spec).mixture == r.mixture;
    }
    out.push_back({"audio.mix_ratios", worst < 0.01 && deterministic,
                   fmt("worst SNR/SIR deviation %.2e dB", worst)});
  }
}

inline void store_properties(const VerifyOptions& o, std::vector<PropertyResult>& out) {
  const auto cfg = preset("d1");
  const auto w = random_weights(cfg, o.seed + 51);
  const auto bytes = serialize_model(cfg, w);
  const auto back = deserialize_model(bytes);
  out.push_back({"model_store.round_trip", back.config == cfg && back.weights == w,
                 std::to_string(bytes.size()) + " bytes"});

  int correct = 0, total = 0;
  auto expect = [&](std::vector<unsigned char> b, auto tag) {
    using E = decltype(tag);
    ++total;
    try {
      deserialize_model(b);
    } catch (const E&) {
      ++correct;
    } catch (const StoreError&) {
    }
  };
  {
    auto b = bytes;
    b[0] = 'X';
    expect(b, BadMagicError(""));
  }
  {
    auto b = bytes;
    b[4] = 2;
    expect(b, VersionError(""));
  }
  {
    auto b = bytes;
    b[b.size() / 2] ^= 0x10;
    expect(b, ChecksumError(""));
  }
  {
    auto b = bytes;
    b.resize(b.size() / 3);
    expect(b, TruncatedError(""));
  }
  {
    auto partial = w;
    partial.erase(s4d_block_prefix(0, 0) + ".ssm.a_re");
    expect(store_detail::encode(cfg, partial), InconsistentModelError(""));
  }
  out.push_back({"model_store.corruption_classes", correct == total,
                 std::to_string(correct) + "/" + std::to_string(total) +
                     " injections raised the expected error"});
}

}  // namespace verify_detail

/// Runs every property; the report is a pure function of the options.
inline std::vector<PropertyResult> run_verify(const VerifyOptions& options) {
  std::vector<PropertyResult> out;
  if (options.double_precision) {
    verify_detail::ssm_properties<double>(options, out);
    verify_detail::model_properties<double>(options, out);
  } else {
    verify_detail::ssm_properties<float>(options, out);
    verify_detail::model_properties<float>(options, out);
  }
  verify_detail::audio_properties(options, out);
  verify_detail::store_properties(options, out);
  return out;
}

}  // namespace sbss

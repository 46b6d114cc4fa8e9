// Copyright 2026 The sbss Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Diagonal state-space (S4D) layer math.
//
// Each of `channels` independent single-input single-output systems holds
// `state_pairs` complex modes. Only one mode of every conjugate pair is
// stored, so the real output is
//
//   x_k = a_bar * x_{k-1} + b_bar * u_k
//   v_k = 2 * Re(sum_n C_n x_k,n) + D u_k
//
// with a_bar = exp(dt*A) and b_bar = (exp(dt*A) - 1) / A (zero-order hold,
// input matrix fixed to ones). The same system can be run as a long causal
// convolution with the kernel k_j = 2 * Re(sum_n C_n a_bar_n^j b_bar_n).

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sbss/error.hpp"
#include "sbss/fft.hpp"

namespace sbss {

/// Per-channel real sequences, indexed [channel][time].
template <class Real>
using Sequences = std::vector<std::vector<Real>>;

/// Continuous-time S4D parameters. Per-mode arrays are indexed
/// `channel * state_pairs + pair`.
template <class Real>
struct S4DLayerParams {
  std::size_t channels = 0;
  std::size_t state_pairs = 0;
  std::vector<Real> a_real;
  std::vector<Real> a_imag;
  std::vector<Real> c_real;
  std::vector<Real> c_imag;
  std::vector<Real> d_feedthrough;
  std::vector<Real> log_dt;

  S4DLayerParams() = default;
  S4DLayerParams(std::size_t channels_, std::size_t pairs_)
      : channels(channels_),
        state_pairs(pairs_),
        a_real(channels_ * pairs_),
        a_imag(channels_ * pairs_),
        c_real(channels_ * pairs_),
        c_imag(channels_ * pairs_),
        d_feedthrough(channels_),
        log_dt(channels_) {}

  std::size_t modes() const { return channels * state_pairs; }
  std::size_t index(std::size_t h, std::size_t n) const {
    return h * state_pairs + n;
  }

  /// Throws ParameterError on any non-finite value or a_real >= 0, naming the
  /// first offending entry; ShapeError on inconsistent array sizes.
  void validate() const {
    const std::size_t m = modes();
    if (a_real.size() != m || a_imag.size() != m || c_real.size() != m ||
        c_imag.size() != m || d_feedthrough.size() != channels ||
        log_dt.size() != channels) {
      throw ShapeError("S4D parameter arrays do not match channels=" +
                       std::to_string(channels) +
                       " state_pairs=" + std::to_string(state_pairs));
    }
    for (std::size_t h = 0; h < channels; ++h) {
      if (!std::isfinite(d_feedthrough[h]) || !std::isfinite(log_dt[h])) {
        throw ParameterError("non-finite D or log_dt at channel " +
                             std::to_string(h));
      }
      if (!std::isfinite(std::exp(static_cast<double>(log_dt[h])))) {
        throw ParameterError("time step overflows at channel " +
                             std::to_string(h));
      }
      for (std::size_t n = 0; n < state_pairs; ++n) {
        const std::size_t i = index(h, n);
        if (!std::isfinite(a_real[i]) || !std::isfinite(a_imag[i]) ||
            !std::isfinite(c_real[i]) || !std::isfinite(c_imag[i])) {
          throw ParameterError("non-finite A or C at (channel " +
                               std::to_string(h) + ", pair " +
                               std::to_string(n) + ")");
        }
        if (!(a_real[i] < 0)) {
          throw ParameterError(
              "unstable S4D pole at (channel " + std::to_string(h) +
              ", pair " + std::to_string(n) +
              "): a_real = " + std::to_string(a_real[i]) + " must be < 0");
        }
      }
    }
  }
};

/// S4D-Lin initialization: A_n = -1/2 + i*pi*n, C ~ CN(0, 1)/sqrt(pairs),
/// D = 1, dt log-uniform in [1e-3, 1e-1].
template <class Real, class Rng>
S4DLayerParams<Real> init_s4d_lin(std::size_t channels, std::size_t pairs,
                                  Rng& rng) {
  S4DLayerParams<Real> p(channels, pairs);
  std::normal_distribution<double> normal(0.0, std::sqrt(0.5));
  std::uniform_real_distribution<double> log_dt(std::log(1e-3), std::log(1e-1));
  const double c_scale = 1.0 / std::sqrt(static_cast<double>(pairs));
  for (std::size_t h = 0; h < channels; ++h) {
    for (std::size_t n = 0; n < pairs; ++n) {
      const std::size_t i = p.index(h, n);
      p.a_real[i] = Real(-0.5);
      p.a_imag[i] = static_cast<Real>(std::numbers::pi * static_cast<double>(n));
      p.c_real[i] = static_cast<Real>(normal(rng) * c_scale);
      p.c_imag[i] = static_cast<Real>(normal(rng) * c_scale);
    }
    p.d_feedthrough[h] = Real(1);
    p.log_dt[h] = static_cast<Real>(log_dt(rng));
  }
  return p;
}

namespace detail {

/// Zero-order-hold discretization of one diagonal mode with unit input gain.
inline std::pair<std::complex<double>, std::complex<double>> zoh_mode(
    double dt, std::complex<double> a) {
  const std::complex<double> dta = dt * a;
  const std::complex<double> a_bar = std::exp(dta);
  std::complex<double> b_bar;
  if (std::abs(dta) < 1e-6) {
    // (exp(z) - 1)/A loses all precision as z -> 0; use the series.
    b_bar = dt * (1.0 + dta / 2.0 + dta * dta / 6.0);
  } else {
    b_bar = (a_bar - 1.0) / a;
  }
  return {a_bar, b_bar};
}

}  // namespace detail

/// Discretized system: a_bar and b_bar per mode, split into real/imaginary
/// planes for the recurrence kernel.
template <class Real>
struct DiscreteSSM {
  std::size_t channels = 0;
  std::size_t state_pairs = 0;
  std::vector<Real> a_re, a_im, b_re, b_im;

  std::size_t modes() const { return channels * state_pairs; }
  std::complex<Real> a_bar(std::size_t h, std::size_t n) const {
    const std::size_t i = h * state_pairs + n;
    return {a_re[i], a_im[i]};
  }
  std::complex<Real> b_bar(std::size_t h, std::size_t n) const {
    const std::size_t i = h * state_pairs + n;
    return {b_re[i], b_im[i]};
  }
  Real max_abs_a_bar() const {
    Real m = 0;
    for (std::size_t i = 0; i < modes(); ++i) {
      m = std::max(m, std::hypot(a_re[i], a_im[i]));
    }
    return m;
  }
};

template <class Real>
DiscreteSSM<Real> discretize(const S4DLayerParams<Real>& params) {
  params.validate();
  DiscreteSSM<Real> d;
  d.channels = params.channels;
  d.state_pairs = params.state_pairs;
  const std::size_t m = params.modes();
  d.a_re.resize(m);
  d.a_im.resize(m);
  d.b_re.resize(m);
  d.b_im.resize(m);
  for (std::size_t h = 0; h < params.channels; ++h) {
    const double dt = std::exp(static_cast<double>(params.log_dt[h]));
    for (std::size_t n = 0; n < params.state_pairs; ++n) {
      const std::size_t i = params.index(h, n);
      const auto [ab, bb] = detail::zoh_mode(
          dt, {static_cast<double>(params.a_real[i]),
               static_cast<double>(params.a_imag[i])});
      d.a_re[i] = static_cast<Real>(ab.real());
      d.a_im[i] = static_cast<Real>(ab.imag());
      d.b_re[i] = static_cast<Real>(bb.real());
      d.b_im[i] = static_cast<Real>(bb.imag());
    }
  }
  return d;
}

/// Running complex state of every mode.
template <class Real>
struct SSMState {
  std::size_t channels = 0;
  std::size_t state_pairs = 0;
  std::vector<Real> x_re, x_im;

  SSMState() = default;
  SSMState(std::size_t channels_, std::size_t pairs_)
      : channels(channels_),
        state_pairs(pairs_),
        x_re(channels_ * pairs_, Real(0)),
        x_im(channels_ * pairs_, Real(0)) {}

  std::complex<Real> x(std::size_t h, std::size_t n) const {
    const std::size_t i = h * state_pairs + n;
    return {x_re[i], x_im[i]};
  }
  bool is_finite() const {
    auto finite = [](Real v) { return std::isfinite(v); };
    return std::all_of(x_re.begin(), x_re.end(), finite) &&
           std::all_of(x_im.begin(), x_im.end(), finite);
  }
  void reset() {
    std::fill(x_re.begin(), x_re.end(), Real(0));
    std::fill(x_im.begin(), x_im.end(), Real(0));
  }
  bool operator==(const SSMState&) const = default;
};

/// Advances `state` by one step in place and writes the per-channel output.
template <class Real>
void ssm_advance(SSMState<Real>& state, std::span<const Real> u,
                 const DiscreteSSM<Real>& disc,
                 const S4DLayerParams<Real>& params, std::span<Real> v) {
  const std::size_t channels = params.channels;
  const std::size_t pairs = params.state_pairs;
  if (state.channels != channels || state.state_pairs != pairs ||
      disc.channels != channels || disc.state_pairs != pairs ||
      u.size() != channels || v.size() != channels) {
    throw ShapeError("ssm_step: dimension mismatch (expected " +
                     std::to_string(channels) + " channels x " +
                     std::to_string(pairs) + " pairs)");
  }
  const Real* ar = disc.a_re.data();
  const Real* ai = disc.a_im.data();
  const Real* br = disc.b_re.data();
  const Real* bi = disc.b_im.data();
  const Real* cr = params.c_real.data();
  const Real* ci = params.c_imag.data();
  Real* xr = state.x_re.data();
  Real* xi = state.x_im.data();
  for (std::size_t h = 0; h < channels; ++h) {
    const Real uh = u[h];
    const std::size_t base = h * pairs;
    Real acc = 0;
    for (std::size_t n = 0; n < pairs; ++n) {
      const std::size_t i = base + n;
      const Real re = ar[i] * xr[i] - ai[i] * xi[i] + br[i] * uh;
      const Real im = ar[i] * xi[i] + ai[i] * xr[i] + bi[i] * uh;
      xr[i] = re;
      xi[i] = im;
      acc += cr[i] * re - ci[i] * im;
    }
    v[h] = Real(2) * acc + params.d_feedthrough[h] * uh;
  }
}

/// Pure single step: returns the next state and the output.
template <class Real>
std::pair<SSMState<Real>, std::vector<Real>> ssm_step(
    const SSMState<Real>& state, std::span<const Real> u,
    const DiscreteSSM<Real>& disc, const S4DLayerParams<Real>& params) {
  SSMState<Real> next = state;
  std::vector<Real> v(params.channels);
  ssm_advance(next, u, disc, params, std::span<Real>(v));
  return {std::move(next), std::move(v)};
}

/// Materializes the length-`length` convolution kernel of every channel
/// (without the D feedthrough). Accumulated in double precision.
template <class Real>
Sequences<Real> ssm_kernel(const S4DLayerParams<Real>& params,
                           std::size_t length) {
  params.validate();
  if (length == 0) throw ShapeError("ssm_kernel: length must be >= 1");
  Sequences<Real> kernel(params.channels, std::vector<Real>(length));
  std::vector<double> acc(length);
  for (std::size_t h = 0; h < params.channels; ++h) {
    std::fill(acc.begin(), acc.end(), 0.0);
    const double dt = std::exp(static_cast<double>(params.log_dt[h]));
    for (std::size_t n = 0; n < params.state_pairs; ++n) {
      const std::size_t i = params.index(h, n);
      const auto [ab, bb] = detail::zoh_mode(
          dt, {static_cast<double>(params.a_real[i]),
               static_cast<double>(params.a_imag[i])});
      const std::complex<double> c{static_cast<double>(params.c_real[i]),
                                   static_cast<double>(params.c_imag[i])};
      std::complex<double> w = c * bb;
      for (std::size_t j = 0; j < length; ++j) {
        acc[j] += 2.0 * w.real();
        w *= ab;
      }
    }
    std::transform(acc.begin(), acc.end(), kernel[h].begin(),
                   [](double x) { return static_cast<Real>(x); });
  }
  return kernel;
}

namespace detail {
inline std::size_t linear_conv_fft_size(std::size_t length) {
  std::size_t n = 1;
  while (n < 2 * length) n <<= 1;
  return n;
}

template <class Real>
void fft_convolve_one(RealFft<Real>& fft, std::vector<std::complex<Real>>& kf,
                      std::span<const Real> u, std::span<const Real> k,
                      Real d, std::span<Real> out) {
  const std::size_t len = u.size();
  const std::size_t n = fft.size();
  auto time = fft.time();
  auto spec = fft.spectrum();

  std::copy(k.begin(), k.end(), time.begin());
  std::fill(time.begin() + static_cast<std::ptrdiff_t>(len), time.end(),
            Real(0));
  fft.forward();
  kf.assign(spec.begin(), spec.end());

  std::copy(u.begin(), u.end(), time.begin());
  std::fill(time.begin() + static_cast<std::ptrdiff_t>(len), time.end(),
            Real(0));
  fft.forward();
  for (std::size_t i = 0; i < spec.size(); ++i) spec[i] *= kf[i];
  fft.inverse();

  const Real scale = Real(1) / static_cast<Real>(n);
  for (std::size_t j = 0; j < len; ++j) {
    out[j] = time[j] * scale + d * u[j];
  }
}
}  // namespace detail

/// Causal linear convolution of one channel with its kernel plus the
/// feedthrough term: out_j = sum_{i<=j} k_{j-i} u_i + d u_j.
template <class Real>
void fft_convolve(std::span<const Real> u, std::span<const Real> kernel,
                  Real d_feedthrough, std::span<Real> out) {
  if (u.size() != kernel.size() || out.size() != u.size()) {
    throw ShapeError("fft_convolve: input/kernel/output lengths differ (" +
                     std::to_string(u.size()) + ", " +
                     std::to_string(kernel.size()) + ", " +
                     std::to_string(out.size()) + ")");
  }
  if (u.empty()) return;
  RealFft<Real> fft(detail::linear_conv_fft_size(u.size()));
  std::vector<std::complex<Real>> kf;
  detail::fft_convolve_one(fft, kf, u, kernel, d_feedthrough, out);
}

/// Channel-wise fft_convolve; all channels share one transform plan.
template <class Real>
Sequences<Real> fft_convolve(const Sequences<Real>& u,
                             const Sequences<Real>& kernel,
                             std::span<const Real> d_feedthrough) {
  if (u.size() != kernel.size() || u.size() != d_feedthrough.size()) {
    throw ShapeError("fft_convolve: channel counts differ");
  }
  Sequences<Real> out(u.size());
  if (u.empty()) return out;
  const std::size_t len = u.front().size();
  for (std::size_t h = 0; h < u.size(); ++h) {
    if (u[h].size() != len || kernel[h].size() != len) {
      throw ShapeError("fft_convolve: length mismatch at channel " +
                       std::to_string(h));
    }
    out[h].resize(len);
  }
  if (len == 0) return out;
  RealFft<Real> fft(detail::linear_conv_fft_size(len));
  std::vector<std::complex<Real>> kf;
  for (std::size_t h = 0; h < u.size(); ++h) {
    detail::fft_convolve_one<Real>(fft, kf, u[h], kernel[h], d_feedthrough[h],
                                   out[h]);
  }
  return out;
}

/// Runs the recurrence over whole sequences from a zero state.
template <class Real>
Sequences<Real> ssm_scan(const S4DLayerParams<Real>& params,
                         const DiscreteSSM<Real>& disc,
                         const Sequences<Real>& u) {
  if (u.size() != params.channels) {
    throw ShapeError("ssm_scan: channel count mismatch");
  }
  const std::size_t len = u.empty() ? 0 : u.front().size();
  Sequences<Real> out(params.channels, std::vector<Real>(len));
  SSMState<Real> state(params.channels, params.state_pairs);
  std::vector<Real> frame_in(params.channels), frame_out(params.channels);
  for (std::size_t t = 0; t < len; ++t) {
    for (std::size_t h = 0; h < params.channels; ++h) frame_in[h] = u[h][t];
    ssm_advance<Real>(state, frame_in, disc, params, frame_out);
    for (std::size_t h = 0; h < params.channels; ++h) out[h][t] = frame_out[h];
  }
  return out;
}

/// Converts parameters between precisions.
template <class To, class From>
S4DLayerParams<To> cast_params(const S4DLayerParams<From>& p) {
  S4DLayerParams<To> q(p.channels, p.state_pairs);
  auto conv = [](const std::vector<From>& src, std::vector<To>& dst) {
    std::transform(src.begin(), src.end(), dst.begin(),
                   [](From v) { return static_cast<To>(v); });
  };
  conv(p.a_real, q.a_real);
  conv(p.a_imag, q.a_imag);
  conv(p.c_real, q.c_real);
  conv(p.c_imag, q.c_imag);
  conv(p.d_feedthrough, q.d_feedthrough);
  conv(p.log_dt, q.log_dt);
  return q;
}

}  // namespace sbss

// Copyright 2026 The sbss Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <cmath>
#include <complex>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "sbss/ssm.hpp"

namespace sbss {
namespace {

// Reference values from tests/oracles/zoh_oracle.py (mpmath, 50 digits).
struct ZohCase {
  double dt;
  std::complex<double> a;
  std::complex<double> a_bar;
  std::complex<double> b_bar;
};

const ZohCase kZohCases[] = {
    {0.1, {-0.5, std::numbers::pi},
     {0.90467294266309286754, 0.29394605772022161639},
     {0.095964453318890945856, 0.015070327664333661838}},
    {1.0, {-1.0, 0.0}, {0.3678794411714423216, 0.0}, {0.6321205588285576784, 0.0}},
    {1e-8, {-1.0, 0.0}, {0.99999999000000005, 0.0}, {9.9999999500000001667e-9, 0.0}},
};

S4DLayerParams<double> scalar_layer(double dt, std::complex<double> a,
                                    std::complex<double> c = {1, 0}, double d = 0) {
  S4DLayerParams<double> p(1, 1);
  p.a_real[0] = a.real();
  p.a_imag[0] = a.imag();
  p.c_real[0] = c.real();
  p.c_imag[0] = c.imag();
  p.d_feedthrough[0] = d;
  p.log_dt[0] = std::log(dt);
  return p;
}

TEST(Discretize, MatchesExtendedPrecisionOracle) {
  for (const auto& c : kZohCases) {
    const auto d = discretize(scalar_layer(c.dt, c.a));
    // Relative tolerance: log/exp round trip of dt costs a few ulps.
    EXPECT_NEAR(d.a_bar(0, 0).real(), c.a_bar.real(), 1e-15 + 1e-14 * std::abs(c.a_bar));
    EXPECT_NEAR(d.a_bar(0, 0).imag(), c.a_bar.imag(), 1e-15 + 1e-14 * std::abs(c.a_bar));
    EXPECT_NEAR(d.b_bar(0, 0).real(), c.b_bar.real(), 1e-14 * std::abs(c.b_bar));
    EXPECT_NEAR(d.b_bar(0, 0).imag(), c.b_bar.imag(), 1e-14 * std::abs(c.b_bar) + 1e-30);
  }
}

TEST(Discretize, SmallStepUsesSeriesWithoutCancellation) {
  // Near dt*A -> 0 the direct formula (exp(dtA) - 1)/A loses ~8 digits at
  // dt = 1e-8; the series branch must keep full relative precision.
  const auto d = discretize(scalar_layer(1e-8, {-1.0, 0.0}));
  EXPECT_NEAR(d.b_bar(0, 0).real() / 9.9999999500000001667e-9, 1.0, 1e-14);
}

TEST(Discretize, RejectsUnstablePoleNamingIndex) {
  std::mt19937_64 rng(3);
  auto p = init_s4d_lin<float>(4, 3, rng);
  p.a_real[p.index(2, 1)] = 0.0f;
  try {
    discretize(p);
    FAIL() << "expected ParameterError";
  } catch (const ParameterError& e) {
    EXPECT_NE(std::string(e.what()).find("(channel 2, pair 1)"), std::string::npos);
  }
}

TEST(Discretize, RejectsNonFinite) {
  std::mt19937_64 rng(3);
  auto p = init_s4d_lin<double>(2, 2, rng);
  p.c_imag[3] = NAN;
  EXPECT_THROW(discretize(p), ParameterError);
  p = init_s4d_lin<double>(2, 2, rng);
  p.log_dt[1] = INFINITY;
  EXPECT_THROW(discretize(p), ParameterError);
}

TEST(Discretize, StableForRandomInit) {
  std::mt19937_64 rng(5);
  const auto p = init_s4d_lin<float>(256, 16, rng);
  const auto d = discretize(p);
  EXPECT_LT(d.max_abs_a_bar(), 1.0f);
  for (float v : p.log_dt) {
    EXPECT_GE(std::exp(v), 1e-3f * 0.999f);
    EXPECT_LE(std::exp(v), 1e-1f * 1.001f);
  }
}

TEST(SsmStep, ZeroIsFixedPoint) {
  std::mt19937_64 rng(1);
  const auto p = init_s4d_lin<float>(8, 4, rng);
  const auto d = discretize(p);
  SSMState<float> s(8, 4);
  std::vector<float> u(8, 0.0f);
  const auto [next, v] = ssm_step<float>(s, u, d, p);
  EXPECT_EQ(next, s);
  for (float x : v) EXPECT_EQ(x, 0.0f);
}

TEST(SsmStep, HomogeneousStepIsPureDecay) {
  std::mt19937_64 rng(2);
  const auto p = init_s4d_lin<double>(3, 5, rng);
  const auto d = discretize(p);
  SSMState<double> s(3, 5);
  std::normal_distribution<double> g;
  for (auto& x : s.x_re) x = g(rng);
  for (auto& x : s.x_im) x = g(rng);
  const std::vector<double> u(3, 0.0);
  const auto [next, v] = ssm_step<double>(s, u, d, p);
  for (std::size_t h = 0; h < 3; ++h) {
    for (std::size_t n = 0; n < 5; ++n) {
      const auto expect = d.a_bar(h, n) * s.x(h, n);
      EXPECT_NEAR(std::abs(next.x(h, n) - expect), 0.0, 1e-15);
    }
  }
}

TEST(SsmStep, InputIsNotMutated) {
  std::mt19937_64 rng(2);
  const auto p = init_s4d_lin<float>(2, 2, rng);
  const auto d = discretize(p);
  const SSMState<float> s(2, 2);
  const std::vector<float> u{1.0f, -1.0f};
  const auto a = ssm_step<float>(s, u, d, p);
  const auto b = ssm_step<float>(s, u, d, p);
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
  EXPECT_EQ(s, SSMState<float>(2, 2));
}

TEST(SsmStep, DimensionMismatchThrows) {
  std::mt19937_64 rng(2);
  const auto p = init_s4d_lin<float>(4, 2, rng);
  const auto d = discretize(p);
  const std::vector<float> u(4, 0.0f);
  EXPECT_THROW(ssm_step<float>(SSMState<float>(4, 3), u, d, p), ShapeError);
  EXPECT_THROW(ssm_step<float>(SSMState<float>(4, 2), std::vector<float>(3), d, p),
               ShapeError);
}

TEST(SsmStep, ImpulseResponseEqualsKernelPlusFeedthrough) {
  std::mt19937_64 rng(9);
  auto p = init_s4d_lin<double>(16, 8, rng);
  std::uniform_real_distribution<double> u01(0.5, 1.5);
  for (auto& d : p.d_feedthrough) d = u01(rng);
  const auto disc = discretize(p);
  const std::size_t K = 50;
  const auto k = ssm_kernel(p, K);
  SSMState<double> s(16, 8);
  std::vector<double> u(16, 1.0), v(16);
  for (std::size_t j = 0; j < K; ++j) {
    ssm_advance<double>(s, u, disc, p, v);
    for (std::size_t h = 0; h < 16; ++h) {
      EXPECT_NEAR(v[h], k[h][j] + (j == 0 ? p.d_feedthrough[h] : 0.0), 1e-13);
    }
    std::fill(u.begin(), u.end(), 0.0);
  }
}

TEST(SsmKernel, ZeroCGivesZeroKernel) {
  std::mt19937_64 rng(4);
  auto p = init_s4d_lin<float>(4, 4, rng);
  std::fill(p.c_real.begin(), p.c_real.end(), 0.0f);
  std::fill(p.c_imag.begin(), p.c_imag.end(), 0.0f);
  for (const auto& ch : ssm_kernel(p, 32)) {
    for (float v : ch) EXPECT_EQ(v, 0.0f);
  }
}

TEST(SsmKernel, ClosedFormGeometricSeries) {
  const auto p = scalar_layer(1.0, {-1.0, 0.0});
  const auto k = ssm_kernel(p, 20);
  const double b = 1.0 - std::exp(-1.0);
  for (std::size_t j = 0; j < 20; ++j) {
    EXPECT_NEAR(k[0][j], 2.0 * std::exp(-static_cast<double>(j)) * b, 1e-15);
  }
}

TEST(SsmKernel, MatchesImpulseResponseSinglePrecision) {
  std::mt19937_64 rng(21);
  const auto p = init_s4d_lin<float>(32, 16, rng);
  const auto disc = discretize(p);
  const auto k = ssm_kernel(p, 64);
  SSMState<float> s(32, 16);
  std::vector<float> u(32, 1.0f), v(32);
  double err = 0;
  for (std::size_t j = 0; j < 64; ++j) {
    ssm_advance<float>(s, u, disc, p, v);
    for (std::size_t h = 0; h < 32; ++h) {
      err = std::max(err, std::abs(double(v[h]) - (k[h][j] + (j == 0 ? p.d_feedthrough[h] : 0))));
    }
    std::fill(u.begin(), u.end(), 0.0f);
  }
  EXPECT_LT(err, 1e-5);
}

TEST(SsmKernel, ZeroLengthThrows) {
  EXPECT_THROW(ssm_kernel(scalar_layer(1.0, {-1, 0}), 0), ShapeError);
}

// Independent O(K^2) causal convolution.
std::vector<double> direct_convolve(const std::vector<double>& u, const std::vector<double>& k,
                                    double d) {
  std::vector<double> out(u.size());
  for (std::size_t j = 0; j < u.size(); ++j) {
    double acc = d * u[j];
    for (std::size_t i = 0; i <= j; ++i) acc += k[j - i] * u[i];
    out[j] = acc;
  }
  return out;
}

TEST(FftConvolve, ZeroInputGivesZero) {
  const std::vector<float> u(100, 0.0f), k(100, 1.0f);
  std::vector<float> out(100, 1.0f);
  fft_convolve<float>(u, k, 0.5f, out);
  for (float v : out) EXPECT_EQ(v, 0.0f);
}

TEST(FftConvolve, ImpulseReturnsKernel) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g;
  std::vector<double> u(77, 0.0), k(77), out(77);
  u[0] = 1.0;
  for (auto& x : k) x = g(rng);
  fft_convolve<double>(u, k, 0.0, out);
  for (std::size_t j = 0; j < 77; ++j) EXPECT_NEAR(out[j], k[j], 1e-13);
}

TEST(FftConvolve, MatchesDirectConvolutionSinglePrecision) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g;
  const std::size_t K = 1024;
  std::vector<double> u(K), k(K);
  for (auto& x : u) x = g(rng);
  for (std::size_t j = 0; j < K; ++j) k[j] = g(rng) * std::exp(-0.01 * double(j));
  const auto ref = direct_convolve(u, k, 0.7);
  std::vector<float> uf(u.begin(), u.end()), kf(k.begin(), k.end()), out(K);
  fft_convolve<float>(uf, kf, 0.7f, out);
  double worst = 0;
  for (std::size_t j = 0; j < K; ++j) {
    worst = std::max(worst, std::abs(out[j] - ref[j]) / std::max(1.0, std::abs(ref[j])));
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(FftConvolve, IsCausal) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g;
  std::vector<double> u(64), k(64), a(64), b(64);
  for (auto& x : u) x = g(rng);
  for (auto& x : k) x = g(rng);
  fft_convolve<double>(u, k, 1.0, a);
  u[40] += 1.0;
  fft_convolve<double>(u, k, 1.0, b);
  for (std::size_t j = 0; j < 40; ++j) EXPECT_NEAR(a[j], b[j], 1e-12);
  EXPECT_GT(std::abs(a[40] - b[40]), 1e-3);
}

TEST(FftConvolve, LengthMismatchThrows) {
  std::vector<float> u(10), k(9), out(10);
  EXPECT_THROW(fft_convolve<float>(u, k, 0.0f, out), ShapeError);
  Sequences<float> us(2, std::vector<float>(8)), ks(2, std::vector<float>(7));
  const std::vector<float> d(2);
  EXPECT_THROW(fft_convolve<float>(us, ks, d), ShapeError);
}

template <class Real>
double duality_error(std::uint64_t seed, std::size_t channels, std::size_t len) {
  std::mt19937_64 rng(seed);
  const auto p = init_s4d_lin<Real>(channels, 16, rng);
  std::normal_distribution<double> g;
  Sequences<Real> u(channels, std::vector<Real>(len));
  for (auto& ch : u) {
    for (auto& x : ch) x = static_cast<Real>(g(rng));
  }
  const auto rec = ssm_scan(p, discretize(p), u);
  const auto conv = fft_convolve<Real>(u, ssm_kernel(p, len), p.d_feedthrough);
  double err = 0;
  for (std::size_t h = 0; h < channels; ++h) {
    for (std::size_t j = 0; j < len; ++j) {
      err = std::max(err, std::abs(double(rec[h][j]) - double(conv[h][j])));
    }
  }
  return err;
}

TEST(Duality, RecurrenceMatchesConvolutionFloat) {
  for (std::uint64_t s = 0; s < 3; ++s) EXPECT_LT(duality_error<float>(s, 256, 1024), 1e-4);
}

TEST(Duality, RecurrenceMatchesConvolutionDouble) {
  for (std::uint64_t s = 0; s < 3; ++s) EXPECT_LT(duality_error<double>(s, 256, 1024), 1e-10);
}

TEST(SsmState, StaysFiniteOnLongBoundedInput) {
  std::mt19937_64 rng(12);
  const auto p = init_s4d_lin<float>(16, 16, rng);
  const auto d = discretize(p);
  SSMState<float> s(16, 16);
  std::vector<float> u(16, 1.0f), v(16);
  for (int k = 0; k < 100000; ++k) ssm_advance<float>(s, u, d, p, v);
  EXPECT_TRUE(s.is_finite());
  // Constant input converges to the fixed point b/(1-a).
  for (std::size_t h = 0; h < 16; ++h) {
    for (std::size_t n = 0; n < 16; ++n) {
      const std::complex<double> a = d.a_bar(h, n), b = d.b_bar(h, n);
      EXPECT_NEAR(std::abs(std::complex<double>(s.x(h, n)) - b / (1.0 - a)), 0.0, 1e-3);
    }
  }
}

}  // namespace
}  // namespace sbss

// Copyright 2026 The sbss Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// 128-byte accumulator blocks for dot products. Each block holds 128 /
// sizeof(Real) independent lanes updated with fused multiply-add and reduced
// by pairwise halving (lane l += lane l + width for width = lanes/2 ... 1).
// AVX-512, AVX2+FMA and the scalar fallback perform the same IEEE operations
// in the same order, so results are bit-identical across code paths.

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>

#if defined(__AVX512F__) || (defined(__AVX2__) && defined(__FMA__))
#include <immintrin.h>
#endif

namespace sbss::simd {

template <class Real>
inline constexpr std::size_t kLanes = 128 / sizeof(Real);

#if defined(__AVX512F__)

template <class Real>
struct Block;

template <>
struct Block<float> {
  __m512 v0, v1;
  static Block zero() { return {_mm512_setzero_ps(), _mm512_setzero_ps()}; }
  static Block load(const float* p) { return {_mm512_loadu_ps(p), _mm512_loadu_ps(p + 16)}; }
  static Block load_partial(const float* p, std::size_t n) {
    const auto m = static_cast<std::uint32_t>((std::uint64_t{1} << n) - 1);
    return {_mm512_maskz_loadu_ps(static_cast<__mmask16>(m), p),
            _mm512_maskz_loadu_ps(static_cast<__mmask16>(m >> 16), p + 16)};
  }
  void fma(const Block& a, const Block& b) {
    v0 = _mm512_fmadd_ps(a.v0, b.v0, v0);
    v1 = _mm512_fmadd_ps(a.v1, b.v1, v1);
  }
  float reduce() const {
    const __m512 s16 = _mm512_add_ps(v0, v1);
    const __m256 lo8 = _mm512_castps512_ps256(s16);
    const __m256 hi8 = _mm256_castpd_ps(_mm512_extractf64x4_pd(_mm512_castps_pd(s16), 1));
    const __m256 s8 = _mm256_add_ps(lo8, hi8);
    const __m128 s4 = _mm_add_ps(_mm256_castps256_ps128(s8), _mm256_extractf128_ps(s8, 1));
    const __m128 s2 = _mm_add_ps(s4, _mm_movehl_ps(s4, s4));
    const __m128 s1 = _mm_add_ss(s2, _mm_shuffle_ps(s2, s2, 1));
    return _mm_cvtss_f32(s1);
  }
};

template <>
struct Block<double> {
  __m512d v0, v1;
  static Block zero() { return {_mm512_setzero_pd(), _mm512_setzero_pd()}; }
  static Block load(const double* p) { return {_mm512_loadu_pd(p), _mm512_loadu_pd(p + 8)}; }
  static Block load_partial(const double* p, std::size_t n) {
    const auto m = static_cast<std::uint32_t>((1u << n) - 1);
    return {_mm512_maskz_loadu_pd(static_cast<__mmask8>(m), p),
            _mm512_maskz_loadu_pd(static_cast<__mmask8>(m >> 8), p + 8)};
  }
  void fma(const Block& a, const Block& b) {
    v0 = _mm512_fmadd_pd(a.v0, b.v0, v0);
    v1 = _mm512_fmadd_pd(a.v1, b.v1, v1);
  }
  double reduce() const {
    const __m512d s8 = _mm512_add_pd(v0, v1);
    const __m256d s4 = _mm256_add_pd(_mm512_castpd512_pd256(s8), _mm512_extractf64x4_pd(s8, 1));
    const __m128d s2 = _mm_add_pd(_mm256_castpd256_pd128(s4), _mm256_extractf128_pd(s4, 1));
    const __m128d s1 = _mm_add_sd(s2, _mm_unpackhi_pd(s2, s2));
    return _mm_cvtsd_f64(s1);
  }
};

#elif defined(__AVX2__) && defined(__FMA__)

template <class Real>
struct Block;

template <>
struct Block<float> {
  __m256 v0, v1, v2, v3;
  static Block zero() {
    const __m256 z = _mm256_setzero_ps();
    return {z, z, z, z};
  }
  static Block load(const float* p) {
    return {_mm256_loadu_ps(p), _mm256_loadu_ps(p + 8), _mm256_loadu_ps(p + 16),
            _mm256_loadu_ps(p + 24)};
  }
  static Block load_partial(const float* p, std::size_t n) {
    const __m256i idx = _mm256_setr_epi32(0, 1, 2, 3, 4, 5, 6, 7);
    auto part = [&](int base) {
      const __m256i lim = _mm256_set1_epi32(static_cast<int>(n) - base);
      return _mm256_maskload_ps(p + base, _mm256_cmpgt_epi32(lim, idx));
    };
    return {part(0), part(8), part(16), part(24)};
  }
  void fma(const Block& a, const Block& b) {
    v0 = _mm256_fmadd_ps(a.v0, b.v0, v0);
    v1 = _mm256_fmadd_ps(a.v1, b.v1, v1);
    v2 = _mm256_fmadd_ps(a.v2, b.v2, v2);
    v3 = _mm256_fmadd_ps(a.v3, b.v3, v3);
  }
  float reduce() const {
    const __m256 a0 = _mm256_add_ps(v0, v2);
    const __m256 a1 = _mm256_add_ps(v1, v3);
    const __m256 s8 = _mm256_add_ps(a0, a1);
    const __m128 s4 = _mm_add_ps(_mm256_castps256_ps128(s8), _mm256_extractf128_ps(s8, 1));
    const __m128 s2 = _mm_add_ps(s4, _mm_movehl_ps(s4, s4));
    const __m128 s1 = _mm_add_ss(s2, _mm_shuffle_ps(s2, s2, 1));
    return _mm_cvtss_f32(s1);
  }
};

template <>
struct Block<double> {
  __m256d v0, v1, v2, v3;
  static Block zero() {
    const __m256d z = _mm256_setzero_pd();
    return {z, z, z, z};
  }
  static Block load(const double* p) {
    return {_mm256_loadu_pd(p), _mm256_loadu_pd(p + 4), _mm256_loadu_pd(p + 8),
            _mm256_loadu_pd(p + 12)};
  }
  static Block load_partial(const double* p, std::size_t n) {
    const __m256i idx = _mm256_setr_epi64x(0, 1, 2, 3);
    auto part = [&](int base) {
      const __m256i lim = _mm256_set1_epi64x(static_cast<long long>(n) - base);
      return _mm256_maskload_pd(p + base, _mm256_cmpgt_epi64(lim, idx));
    };
    return {part(0), part(4), part(8), part(12)};
  }
  void fma(const Block& a, const Block& b) {
    v0 = _mm256_fmadd_pd(a.v0, b.v0, v0);
    v1 = _mm256_fmadd_pd(a.v1, b.v1, v1);
    v2 = _mm256_fmadd_pd(a.v2, b.v2, v2);
    v3 = _mm256_fmadd_pd(a.v3, b.v3, v3);
  }
  double reduce() const {
    const __m256d a0 = _mm256_add_pd(v0, v2);
    const __m256d a1 = _mm256_add_pd(v1, v3);
    const __m256d s4 = _mm256_add_pd(a0, a1);
    const __m128d s2 = _mm_add_pd(_mm256_castpd256_pd128(s4), _mm256_extractf128_pd(s4, 1));
    const __m128d s1 = _mm_add_sd(s2, _mm_unpackhi_pd(s2, s2));
    return _mm_cvtsd_f64(s1);
  }
};

#else

template <class Real>
struct Block {
  Real v[kLanes<Real>];
  static Block zero() {
    Block b;
    for (auto& x : b.v) x = Real(0);
    return b;
  }
  static Block load(const Real* p) {
    Block b;
    std::memcpy(b.v, p, sizeof b.v);
    return b;
  }
  static Block load_partial(const Real* p, std::size_t n) {
    Block b = zero();
    std::memcpy(b.v, p, n * sizeof(Real));
    return b;
  }
  void fma(const Block& a, const Block& b) {
    for (std::size_t l = 0; l < kLanes<Real>; ++l) v[l] = std::fma(a.v[l], b.v[l], v[l]);
  }
  Real reduce() const {
    Real t[kLanes<Real>];
    std::memcpy(t, v, sizeof t);
    for (std::size_t w = kLanes<Real> / 2; w > 0; w /= 2) {
      for (std::size_t l = 0; l < w; ++l) t[l] = t[l] + t[l + w];
    }
    return t[0];
  }
};

#endif

/// Loads `n < kLanes` values, zero-filling the remaining lanes.
template <class Real>
inline Block<Real> load_partial(const Real* p, std::size_t n) {
  return Block<Real>::load_partial(p, n);
}

}  // namespace sbss::simd

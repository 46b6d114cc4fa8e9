// Copyright 2026 The sbss Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <mutex>
#include <span>
#include <type_traits>

namespace sbss {

namespace detail {
// FFTW's planner is not re-entrant.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

template <class Real>
struct FftwApi;

template <>
struct FftwApi<float> {
  using Plan = fftwf_plan;
  using Complex = fftwf_complex;
  static float* alloc_real(std::size_t n) { return fftwf_alloc_real(n); }
  static Complex* alloc_complex(std::size_t n) { return fftwf_alloc_complex(n); }
  static void free(void* p) { fftwf_free(p); }
  static Plan r2c(int n, float* in, Complex* out) {
    return fftwf_plan_dft_r2c_1d(n, in, out, FFTW_ESTIMATE);
  }
  static Plan c2r(int n, Complex* in, float* out) {
    return fftwf_plan_dft_c2r_1d(n, in, out, FFTW_ESTIMATE);
  }
  static void execute(Plan p) { fftwf_execute(p); }
  static void destroy(Plan p) { fftwf_destroy_plan(p); }
};

template <>
struct FftwApi<double> {
  using Plan = fftw_plan;
  using Complex = fftw_complex;
  static double* alloc_real(std::size_t n) { return fftw_alloc_real(n); }
  static Complex* alloc_complex(std::size_t n) { return fftw_alloc_complex(n); }
  static void free(void* p) { fftw_free(p); }
  static Plan r2c(int n, double* in, Complex* out) {
    return fftw_plan_dft_r2c_1d(n, in, out, FFTW_ESTIMATE);
  }
  static Plan c2r(int n, Complex* in, double* out) {
    return fftw_plan_dft_c2r_1d(n, in, out, FFTW_ESTIMATE);
  }
  static void execute(Plan p) { fftw_execute(p); }
  static void destroy(Plan p) { fftw_destroy_plan(p); }
};
}  // namespace detail

/// Real-input FFT of a fixed size with owned, FFTW-aligned buffers.
/// Forward fills spectrum() from time(); inverse goes the other way and is
/// unnormalized (scale by 1/size() yourself).
template <class Real>
class RealFft {
  static_assert(std::is_same_v<Real, float> || std::is_same_v<Real, double>);
  using Api = detail::FftwApi<Real>;

 public:
  explicit RealFft(std::size_t n) : n_(n) {
    time_ = Api::alloc_real(n_);
    freq_ = Api::alloc_complex(n_ / 2 + 1);
    std::lock_guard lock(detail::fftw_planner_mutex());
    forward_ = Api::r2c(static_cast<int>(n_), time_, freq_);
    inverse_ = Api::c2r(static_cast<int>(n_), freq_, time_);
  }
  ~RealFft() {
    {
      std::lock_guard lock(detail::fftw_planner_mutex());
      Api::destroy(forward_);
      Api::destroy(inverse_);
    }
    Api::free(time_);
    Api::free(freq_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  std::size_t size() const { return n_; }
  std::span<Real> time() { return {time_, n_}; }
  std::span<std::complex<Real>> spectrum() {
    return {reinterpret_cast<std::complex<Real>*>(freq_), n_ / 2 + 1};
  }

  void forward() { Api::execute(forward_); }
  void inverse() { Api::execute(inverse_); }

 private:
  std::size_t n_;
  Real* time_ = nullptr;
  typename Api::Complex* freq_ = nullptr;
  typename Api::Plan forward_{};
  typename Api::Plan inverse_{};
};

}  // namespace sbss

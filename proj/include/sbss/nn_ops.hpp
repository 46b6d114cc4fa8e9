// Copyright 2026 The sbss Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Neural primitives shared by the offline and streaming paths.
//
// Every reduction is written with a fixed summation order that does not
// depend on how many frames are processed together, so running a layer one
// frame at a time or over a whole block gives bit-identical results.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "sbss/error.hpp"
#include "sbss/simd.hpp"

namespace sbss {

/// Latent representation stored frame-major: the `channels` values of one
/// frame are contiguous, so frame(t) is a plain span.
template <class Real>
class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(std::size_t channels, std::size_t frames)
      : channels_(channels), frames_(frames), data_(channels * frames, Real(0)) {}

  std::size_t channels() const { return channels_; }
  std::size_t frames() const { return frames_; }

  Real& at(std::size_t channel, std::size_t frame) {
    return data_[frame * channels_ + channel];
  }
  Real at(std::size_t channel, std::size_t frame) const {
    return data_[frame * channels_ + channel];
  }
  std::span<Real> frame(std::size_t t) {
    return {data_.data() + t * channels_, channels_};
  }
  std::span<const Real> frame(std::size_t t) const {
    return {data_.data() + t * channels_, channels_};
  }
  std::vector<Real>& data() { return data_; }
  const std::vector<Real>& data() const { return data_; }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](Real v) { return std::isfinite(v); });
  }

  /// Appends frames from `other` (same channel count).
  void append(const FeatureMap& other) {
    if (other.frames_ == 0) return;
    if (frames_ == 0) channels_ = other.channels_;
    if (other.channels_ != channels_) {
      throw ShapeError("FeatureMap::append: channel mismatch");
    }
    data_.insert(data_.end(), other.data_.begin(), other.data_.end());
    frames_ += other.frames_;
  }

  bool operator==(const FeatureMap&) const = default;

 private:
  std::size_t channels_ = 0;
  std::size_t frames_ = 0;
  std::vector<Real> data_;
};

/// 1-D convolution geometry. `causal` convolutions keep the frame count
/// (stride 1) by left-padding (kernel_size-1)*dilation - lookahead_frames
/// zeros and right-padding lookahead_frames zeros; non-causal ones use no
/// padding ("valid" convolution, the strided frontend).
struct ConvSpec {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel_size = 1;
  std::size_t stride = 1;
  std::size_t dilation = 1;
  std::size_t groups = 1;
  bool causal = true;
  std::size_t lookahead_frames = 0;

  std::size_t span() const { return (kernel_size - 1) * dilation + 1; }
  std::size_t left_pad() const {
    return causal ? (kernel_size - 1) * dilation - lookahead_frames : 0;
  }
  std::size_t right_pad() const { return causal ? lookahead_frames : 0; }

  std::size_t output_frames(std::size_t input_frames) const {
    const std::size_t padded = input_frames + left_pad() + right_pad();
    if (padded < span()) return 0;
    return (padded - span()) / stride + 1;
  }
  std::size_t weight_count() const {
    return out_channels * (in_channels / groups) * kernel_size;
  }

  void validate() const {
    if (kernel_size < 1 || stride < 1 || dilation < 1 || groups < 1) {
      throw ShapeError("ConvSpec: kernel_size, stride, dilation and groups must be >= 1");
    }
    if (in_channels % groups != 0 || out_channels % groups != 0) {
      throw ShapeError("ConvSpec: channels not divisible by groups");
    }
    if (lookahead_frames > 0 && !causal) {
      throw ShapeError("ConvSpec: lookahead requires a padded (causal) convolution");
    }
    if (lookahead_frames > (kernel_size - 1) * dilation ||
        lookahead_frames >= kernel_size * dilation) {
      throw ShapeError("ConvSpec: lookahead_frames " +
                       std::to_string(lookahead_frames) +
                       " exceeds the kernel span");
    }
  }
};

namespace detail {

// RB weight rows against NF input vectors. Every (row, frame) output uses
// the same accumulation sequence whatever RB and NF are, which keeps results
// independent of how frames are batched.
template <class Real, std::size_t RB, std::size_t NF>
inline void dot_block(const Real* w, std::size_t cols, const Real* const* x,
                      Real* y, std::size_t y_stride, const Real* bias) {
  using Block = simd::Block<Real>;
  constexpr std::size_t L = simd::kLanes<Real>;
  Block acc[RB][NF];
  for (std::size_t r = 0; r < RB; ++r)
    for (std::size_t f = 0; f < NF; ++f) acc[r][f] = Block::zero();
  std::size_t i = 0;
  for (; i + L <= cols; i += L) {
    Block xv[NF];
    for (std::size_t f = 0; f < NF; ++f) xv[f] = Block::load(x[f] + i);
    for (std::size_t r = 0; r < RB; ++r) {
      const Block wv = Block::load(w + r * cols + i);
      for (std::size_t f = 0; f < NF; ++f) acc[r][f].fma(wv, xv[f]);
    }
  }
  if (i < cols) {
    const std::size_t n = cols - i;
    Block xv[NF];
    for (std::size_t f = 0; f < NF; ++f) xv[f] = simd::load_partial(x[f] + i, n);
    for (std::size_t r = 0; r < RB; ++r) {
      const Block wv = simd::load_partial(w + r * cols + i, n);
      for (std::size_t f = 0; f < NF; ++f) acc[r][f].fma(wv, xv[f]);
    }
  }
  for (std::size_t r = 0; r < RB; ++r) {
    const Real b = bias ? bias[r] : Real(0);
    for (std::size_t f = 0; f < NF; ++f) y[f * y_stride + r] = b + acc[r][f].reduce();
  }
}

template <class Real, std::size_t NF>
inline void matmul_frames(const Real* w, const Real* bias, std::size_t row_begin,
                          std::size_t row_end, std::size_t cols, const Real* x,
                          Real* y, std::size_t rows) {
  const Real* xs[NF];
  for (std::size_t f = 0; f < NF; ++f) xs[f] = x + f * cols;
  constexpr std::size_t RB = NF == 1 ? 4 : 2;
  std::size_t o = row_begin;
  for (; o + RB <= row_end; o += RB) {
    dot_block<Real, RB, NF>(w + o * cols, cols, xs, y + o, rows, bias ? bias + o : nullptr);
  }
  for (; o < row_end; ++o) {
    dot_block<Real, 1, NF>(w + o * cols, cols, xs, y + o, rows, bias ? bias + o : nullptr);
  }
}

}  // namespace detail

/// y_f = W x_f + b for every frame f. `w` is row-major (rows x cols); `x`
/// holds `frames` vectors of length cols, `y` receives `frames` vectors of
/// length rows. `bias` may be null.
template <class Real>
void affine_frames(std::span<const Real> w, const Real* bias, std::size_t rows,
                   std::size_t cols, const Real* x, std::size_t frames,
                   Real* y) {
  if (w.size() != rows * cols) throw ShapeError("affine_frames: weight size");
  // Row tiles small enough to stay cache resident while frames stream by.
  const std::size_t tile_rows =
      std::max<std::size_t>(1, (96 * 1024) / (sizeof(Real) * std::max<std::size_t>(cols, 1)));
  for (std::size_t r0 = 0; r0 < rows; r0 += tile_rows) {
    const std::size_t r1 = std::min(rows, r0 + tile_rows);
    std::size_t f = 0;
    for (; f + 4 <= frames; f += 4) {
      detail::matmul_frames<Real, 4>(w.data(), bias, r0, r1, cols, x + f * cols,
                                     y + f * rows, rows);
    }
    switch (frames - f) {
      case 3:
        detail::matmul_frames<Real, 3>(w.data(), bias, r0, r1, cols, x + f * cols,
                                       y + f * rows, rows);
        break;
      case 2:
        detail::matmul_frames<Real, 2>(w.data(), bias, r0, r1, cols, x + f * cols,
                                       y + f * rows, rows);
        break;
      case 1:
        detail::matmul_frames<Real, 1>(w.data(), bias, r0, r1, cols, x + f * cols,
                                       y + f * rows, rows);
        break;
      default:
        break;
    }
  }
}

// ---------------------------------------------------------------------------
// Activations

template <class Real>
inline Real relu(Real x) {
  return x > Real(0) ? x : Real(0);
}
template <class Real>
inline Real prelu(Real x, Real slope) {
  return x >= Real(0) ? x : slope * x;
}
/// Exact (erf-based) GELU.
template <class Real>
inline Real gelu(Real x) {
  return Real(0.5) * x *
         (Real(1) + std::erf(x * Real(0.70710678118654752440084436210485)));
}
template <class Real>
inline Real sigmoid(Real x) {
  return Real(1) / (Real(1) + std::exp(-x));
}

template <class Real>
void relu_inplace(std::span<Real> x) {
  for (auto& v : x) v = std::max(v, Real(0));
}
template <class Real>
void prelu_inplace(std::span<Real> x, Real slope) {
  // max(v, 0) + slope * min(v, 0): branch-free, so it vectorizes. Equal to
  // prelu() up to the sign of zero.
  Real* p = x.data();
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Real v = p[i];
    p[i] = std::max(v, Real(0)) + slope * std::min(v, Real(0));
  }
}
template <class Real>
void gelu_inplace(std::span<Real> x) {
  for (auto& v : x) v = gelu(v);
}
template <class Real>
void sigmoid_inplace(std::span<Real> x) {
  for (auto& v : x) v = sigmoid(v);
}

// ---------------------------------------------------------------------------
// Normalization

inline constexpr double kLayerNormEps = 1e-8;

/// Normalizes each frame over its channels. Statistics are accumulated in
/// double precision in channel order.
template <class Real>
void layernorm_frames(Real* x, std::size_t channels, std::size_t frames,
                      const Real* gain, const Real* bias,
                      double eps = kLayerNormEps) {
  for (std::size_t t = 0; t < frames; ++t) {
    Real* v = x + t * channels;
    double sum = 0;
    for (std::size_t c = 0; c < channels; ++c) sum += static_cast<double>(v[c]);
    const double mean = sum / static_cast<double>(channels);
    double sq = 0;
    for (std::size_t c = 0; c < channels; ++c) {
      const double d = static_cast<double>(v[c]) - mean;
      sq += d * d;
    }
    const double inv = 1.0 / std::sqrt(sq / static_cast<double>(channels) + eps);
    const Real m = static_cast<Real>(mean);
    const Real s = static_cast<Real>(inv);
    for (std::size_t c = 0; c < channels; ++c) {
      v[c] = (v[c] - m) * s * gain[c] + bias[c];
    }
  }
}

template <class Real>
FeatureMap<Real> channelwise_layernorm(const FeatureMap<Real>& input,
                                       std::span<const Real> gain,
                                       std::span<const Real> bias,
                                       double eps = kLayerNormEps) {
  if (gain.size() != input.channels() || bias.size() != input.channels()) {
    throw ShapeError("channelwise_layernorm: gain/bias size != channels");
  }
  FeatureMap<Real> out = input;
  layernorm_frames(out.data().data(), out.channels(), out.frames(), gain.data(),
                   bias.data(), eps);
  return out;
}

// ---------------------------------------------------------------------------
// Convolutions

/// Depthwise (one filter per channel) dilated convolution over a frame-major
/// buffer. Output frame t reads input frames t - left_pad + p*dilation for
/// p = 0..kernel-1; frames outside [0, in_frames) read as zero.
/// `w` is [channels x kernel], `b` is [channels].
template <class Real>
void depthwise_frames(const Real* in, std::size_t in_frames,
                      std::size_t channels, const Real* w, const Real* b,
                      std::size_t kernel, std::size_t dilation,
                      std::ptrdiff_t left_pad, std::size_t out_frames,
                      Real* out) {
  for (std::size_t t = 0; t < out_frames; ++t) {
    Real* o = out + t * channels;
    for (std::size_t c = 0; c < channels; ++c) o[c] = b ? b[c] : Real(0);
    for (std::size_t p = 0; p < kernel; ++p) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t) - left_pad +
                                 static_cast<std::ptrdiff_t>(p * dilation);
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(in_frames)) continue;
      const Real* x = in + static_cast<std::size_t>(src) * channels;
      for (std::size_t c = 0; c < channels; ++c) o[c] += w[c * kernel + p] * x[c];
    }
  }
}

/// General 1-D convolution. `weights` use the (out, in/groups, kernel)
/// layout; `bias` is empty or has out_channels entries.
template <class Real>
FeatureMap<Real> conv1d(const FeatureMap<Real>& input, const ConvSpec& spec,
                        std::span<const Real> weights,
                        std::span<const Real> bias) {
  spec.validate();
  if (input.channels() != spec.in_channels) {
    throw ShapeError("conv1d: input has " + std::to_string(input.channels()) +
                     " channels, spec expects " +
                     std::to_string(spec.in_channels));
  }
  if (weights.size() != spec.weight_count()) {
    throw ShapeError("conv1d: weight count " + std::to_string(weights.size()) +
                     " != " + std::to_string(spec.weight_count()));
  }
  if (!bias.empty() && bias.size() != spec.out_channels) {
    throw ShapeError("conv1d: bias size mismatch");
  }
  const Real* bptr = bias.empty() ? nullptr : bias.data();
  const std::size_t out_frames = spec.output_frames(input.frames());
  FeatureMap<Real> out(spec.out_channels, out_frames);
  if (out_frames == 0) return out;

  const std::size_t K = spec.kernel_size;
  const std::size_t cin = spec.in_channels;
  const bool depthwise = spec.groups == cin && spec.groups == spec.out_channels;

  if (spec.groups == 1 && K == 1 && spec.stride == 1) {
    affine_frames<Real>(weights, bptr, spec.out_channels, cin,
                        input.data().data(), out_frames, out.data().data());
    return out;
  }
  if (spec.groups == 1 && cin == 1 && spec.dilation == 1 && !spec.causal) {
    // Strided frontend: frame the signal, then one affine map per window.
    std::vector<Real> windows(out_frames * K);
    for (std::size_t t = 0; t < out_frames; ++t) {
      const Real* src = input.data().data() + t * spec.stride;
      std::copy(src, src + K, windows.begin() + static_cast<std::ptrdiff_t>(t * K));
    }
    affine_frames<Real>(weights, bptr, spec.out_channels, K, windows.data(),
                        out_frames, out.data().data());
    return out;
  }
  if (depthwise && spec.stride == 1) {
    depthwise_frames(input.data().data(), input.frames(), cin, weights.data(),
                     bptr, K, spec.dilation,
                     static_cast<std::ptrdiff_t>(spec.left_pad()), out_frames,
                     out.data().data());
    return out;
  }

  // Generic path.
  const std::size_t in_per_group = cin / spec.groups;
  const std::size_t out_per_group = spec.out_channels / spec.groups;
  const auto left = static_cast<std::ptrdiff_t>(spec.left_pad());
  for (std::size_t t = 0; t < out_frames; ++t) {
    for (std::size_t o = 0; o < spec.out_channels; ++o) {
      const std::size_t g = o / out_per_group;
      Real acc = bptr ? bptr[o] : Real(0);
      for (std::size_t ic = 0; ic < in_per_group; ++ic) {
        const std::size_t c = g * in_per_group + ic;
        for (std::size_t p = 0; p < K; ++p) {
          const std::ptrdiff_t src =
              static_cast<std::ptrdiff_t>(t * spec.stride) - left +
              static_cast<std::ptrdiff_t>(p * spec.dilation);
          if (src < 0 || src >= static_cast<std::ptrdiff_t>(input.frames())) continue;
          acc += weights[(o * in_per_group + ic) * K + p] *
                 input.at(c, static_cast<std::size_t>(src));
        }
      }
      out.at(o, t) = acc;
    }
  }
  return out;
}

/// Transposes (in, 1, kernel) transposed-convolution weights into a
/// row-major (kernel x in) matrix for affine_frames.
template <class Real>
std::vector<Real> transpose_decoder_weights(std::span<const Real> weights,
                                            std::size_t in_channels,
                                            std::size_t kernel) {
  if (weights.size() != in_channels * kernel) {
    throw ShapeError("transposed_conv1d: weight count mismatch");
  }
  std::vector<Real> t(kernel * in_channels);
  for (std::size_t c = 0; c < in_channels; ++c)
    for (std::size_t l = 0; l < kernel; ++l)
      t[l * in_channels + c] = weights[c * kernel + l];
  return t;
}

/// Overlap-add synthesis from per-frame projections (frames x kernel).
template <class Real>
std::vector<Real> overlap_add(const Real* projections, std::size_t frames,
                              std::size_t kernel, std::size_t stride, Real bias) {
  if (frames == 0) return {};
  std::vector<Real> out((frames - 1) * stride + kernel, Real(0));
  for (std::size_t t = 0; t < frames; ++t) {
    const Real* p = projections + t * kernel;
    Real* o = out.data() + t * stride;
    for (std::size_t l = 0; l < kernel; ++l) o[l] += p[l];
  }
  for (auto& v : out) v += bias;
  return out;
}

/// Single-output-channel transposed convolution (the waveform decoder).
/// `weights` use the (in, 1, kernel) layout. Returns (frames-1)*stride +
/// kernel samples with overlapping frame contributions summed.
template <class Real>
std::vector<Real> transposed_conv1d(const FeatureMap<Real>& input,
                                    std::size_t kernel, std::size_t stride,
                                    std::span<const Real> weights, Real bias) {
  if (kernel == 0 || stride == 0) {
    throw ShapeError("transposed_conv1d: kernel and stride must be >= 1");
  }
  const auto wt = transpose_decoder_weights(weights, input.channels(), kernel);
  std::vector<Real> proj(input.frames() * kernel);
  affine_frames<Real>(wt, nullptr, kernel, input.channels(),
                      input.data().data(), input.frames(), proj.data());
  return overlap_add(proj.data(), input.frames(), kernel, stride, bias);
}

}  // namespace sbss

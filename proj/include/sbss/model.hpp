// Copyright 2026 The sbss Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// SpeakerBeam-SS network: frontend encoder, bottleneck, separator of dilated
// conv blocks and S4D blocks with multiplicative speaker fusion, sigmoid
// mask head, and overlap-add decoder. This file holds the typed weights and
// the offline (whole-utterance) forward pass; streaming.hpp runs the same
// weights frame by frame.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sbss/audio_buffer.hpp"
#include "sbss/config.hpp"
#include "sbss/error.hpp"
#include "sbss/nn_ops.hpp"
#include "sbss/ssm.hpp"
#include "sbss/weights.hpp"

namespace sbss {

/// How S4D layers are evaluated in offline mode.
enum class SsmMode { kConvolution, kRecurrence };

namespace layers {

template <class Real>
std::vector<Real> to_real(const Tensor& t) {
  return std::vector<Real>(t.data.begin(), t.data.end());
}

template <class Real>
struct Affine {
  std::size_t rows = 0, cols = 0;
  std::vector<Real> w, b;

  void apply(const Real* x, std::size_t frames, Real* y) const {
    affine_frames<Real>(w, b.empty() ? nullptr : b.data(), rows, cols, x,
                        frames, y);
  }
  FeatureMap<Real> apply(const FeatureMap<Real>& x) const {
    FeatureMap<Real> y(rows, x.frames());
    apply(x.data().data(), x.frames(), y.data().data());
    return y;
  }
};

template <class Real>
struct Norm {
  std::vector<Real> gain, bias;
  void apply(Real* x, std::size_t channels, std::size_t frames) const {
    layernorm_frames(x, channels, frames, gain.data(), bias.data());
  }
};

/// 1x1 B->H, PReLU, LN, depthwise dilated conv, PReLU, LN, 1x1 H->B, residual.
template <class Real>
struct ConvBlock {
  Affine<Real> in;
  Real slope1 = 0;
  Norm<Real> norm1;
  std::vector<Real> dw_w, dw_b;
  Real slope2 = 0;
  Norm<Real> norm2;
  Affine<Real> out;
  std::size_t kernel = 3;
  std::size_t dilation = 1;
  std::size_t lookahead = 0;

  std::size_t hidden() const { return in.rows; }
  std::size_t history() const { return (kernel - 1) * dilation; }

  /// Frame-local part before the depthwise conv (in place on `h`).
  void pre(const Real* x, std::size_t frames, Real* h) const {
    in.apply(x, frames, h);
    prelu_inplace<Real>({h, frames * hidden()}, slope1);
    norm1.apply(h, hidden(), frames);
  }
  /// Frame-local part after the depthwise conv: writes x + f(x) into y.
  void post(Real* d, const Real* x, std::size_t frames, Real* y) const {
    prelu_inplace<Real>({d, frames * hidden()}, slope2);
    norm2.apply(d, hidden(), frames);
    out.apply(d, frames, y);
    for (std::size_t i = 0; i < frames * out.rows; ++i) y[i] += x[i];
  }

  FeatureMap<Real> forward_offline(const FeatureMap<Real>& x) const {
    const std::size_t T = x.frames();
    std::vector<Real> h(T * hidden());
    pre(x.data().data(), T, h.data());
    std::vector<Real> d(T * hidden());
    const auto left = static_cast<std::ptrdiff_t>(history() - lookahead);
    depthwise_frames(h.data(), T, hidden(), dw_w.data(), dw_b.data(), kernel,
                     dilation, left, T, d.data());
    FeatureMap<Real> y(x.channels(), T);
    post(d.data(), x.data().data(), T, y.data().data());
    return y;
  }
};

/// LN -> S4D -> GELU -> linear -> residual; LN -> linear -> GELU -> linear
/// -> residual.
template <class Real>
struct S4DBlock {
  Norm<Real> norm1;
  S4DLayerParams<Real> ssm;
  DiscreteSSM<Real> disc;
  Affine<Real> proj;
  Norm<Real> norm2;
  Affine<Real> ffn1, ffn2;

  std::size_t width() const { return ssm.channels; }

  /// Second half of the block (everything after the SSM output `s`).
  void post(Real* s, Real* x, std::size_t frames) const {
    const std::size_t B = width();
    gelu_inplace<Real>({s, frames * B});
    std::vector<Real> p(frames * B);
    proj.apply(s, frames, p.data());
    for (std::size_t i = 0; i < frames * B; ++i) x[i] += p[i];
    std::vector<Real> h(x, x + frames * B);
    norm2.apply(h.data(), B, frames);
    std::vector<Real> f(frames * ffn1.rows);
    ffn1.apply(h.data(), frames, f.data());
    gelu_inplace<Real>(f);
    ffn2.apply(f.data(), frames, p.data());
    for (std::size_t i = 0; i < frames * B; ++i) x[i] += p[i];
  }

  FeatureMap<Real> forward_offline(const FeatureMap<Real>& x,
                                   SsmMode mode) const {
    const std::size_t B = width(), T = x.frames();
    FeatureMap<Real> y = x;
    if (T == 0) return y;
    std::vector<Real> h(x.data());
    norm1.apply(h.data(), B, T);
    Sequences<Real> u(B, std::vector<Real>(T));
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t c = 0; c < B; ++c) u[c][t] = h[t * B + c];
    Sequences<Real> v;
    if (mode == SsmMode::kConvolution) {
      v = fft_convolve<Real>(u, ssm_kernel(ssm, T), ssm.d_feedthrough);
    } else {
      v = ssm_scan(ssm, disc, u);
    }
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t c = 0; c < B; ++c) h[t * B + c] = v[c][t];
    post(h.data(), y.data().data(), T);
    return y;
  }
};

}  // namespace layers

template <class Real>
class Model {
 public:
  using Affine = layers::Affine<Real>;
  using ConvBlock = layers::ConvBlock<Real>;
  using S4DBlock = layers::S4DBlock<Real>;

  /// Builds an immutable model. Throws ShapeError listing every mismatched
  /// tensor, ParameterError for unstable S4D parameters.
  Model(const ModelConfig& config, const WeightSet& weights) : config_(config) {
    config_.validate();
    const auto problems = weight_mismatches(config_, weights);
    if (!problems.empty()) {
      std::string msg = "weights inconsistent with config '" + config_.name + "':";
      for (const auto& p : problems) msg += "\n  " + p;
      throw ShapeError(msg);
    }
    param_count_ = 0;
    for (const auto& [name, t] : weights) param_count_ += t.numel();

    const auto N = static_cast<std::size_t>(config_.n_filters);
    const auto L = static_cast<std::size_t>(config_.window);
    const auto B = static_cast<std::size_t>(config_.bottleneck);
    auto get = [&](const std::string& name) { return layers::to_real<Real>(weights.at(name)); };
    auto affine = [&](const std::string& prefix, std::size_t rows, std::size_t cols) {
      return Affine{rows, cols, get(prefix + ".weight"), get(prefix + ".bias")};
    };

    encoder_ = affine("encoder", N, L);
    bottleneck_norm_ = {get("bottleneck.norm.gain"), get("bottleneck.norm.bias")};
    bottleneck_ = affine("bottleneck.conv", B, N);
    for (int r = 0; r < config_.repeats; ++r) {
      for (int x = 0; x < config_.convs_per_repeat; ++x) {
        separator_.push_back(conv_block(weights, conv_block_prefix(r, x),
                                        ModelConfig::dilation_of(x),
                                        config_.lookahead_of(r, x)));
      }
      for (int j = 0; j < config_.s4d_per_repeat; ++j) {
        s4d_.push_back(s4d_block(weights, s4d_block_prefix(r, j)));
      }
    }
    mask_slope_ = static_cast<Real>(weights.at("mask.prelu.slope").data[0]);
    mask_ = affine("mask.conv", N, B);
    decoder_t_ = transpose_decoder_weights<Real>(get("decoder.weight"), N, L);
    decoder_bias_ = static_cast<Real>(weights.at("decoder.bias").data[0]);
    for (int x = 0; x < config_.speaker_blocks; ++x) {
      speaker_.push_back(conv_block(weights, speaker_block_prefix(x),
                                    ModelConfig::dilation_of(x), 0));
    }
  }

  const ModelConfig& config() const { return config_; }
  std::int64_t param_count() const { return param_count_; }
  std::size_t hop() const { return static_cast<std::size_t>(config_.hop()); }
  std::size_t window() const { return static_cast<std::size_t>(config_.window); }
  std::size_t n_filters() const { return encoder_.rows; }
  std::size_t bottleneck_width() const { return bottleneck_.rows; }

  // Layer access for the streaming engine.
  const Affine& encoder() const { return encoder_; }
  const layers::Norm<Real>& bottleneck_norm() const { return bottleneck_norm_; }
  const Affine& bottleneck() const { return bottleneck_; }
  /// Separator conv blocks, indexed repeat * convs_per_repeat + block.
  const std::vector<ConvBlock>& separator_blocks() const { return separator_; }
  /// S4D blocks, indexed repeat * s4d_per_repeat + block.
  const std::vector<S4DBlock>& s4d_blocks() const { return s4d_; }
  const std::vector<ConvBlock>& speaker_blocks() const { return speaker_; }
  Real mask_slope() const { return mask_slope_; }
  const Affine& mask() const { return mask_; }
  const std::vector<Real>& decoder_transposed() const { return decoder_t_; }
  Real decoder_bias() const { return decoder_bias_; }

  // -------------------------------------------------------------------------
  // Offline pipeline

  /// Frontend encoder (valid strided conv + ReLU): floor((T-L)/hop)+1 frames.
  FeatureMap<Real> encode(std::span<const Real> y) const {
    if (y.size() < window()) {
      throw DataError("encode: input of " + std::to_string(y.size()) +
                      " samples is shorter than one window (" +
                      std::to_string(window()) + ")");
    }
    FeatureMap<Real> wave(1, y.size());
    std::copy(y.begin(), y.end(), wave.data().begin());
    ConvSpec spec;
    spec.in_channels = 1;
    spec.out_channels = n_filters();
    spec.kernel_size = window();
    spec.stride = hop();
    spec.causal = false;
    auto z = conv1d<Real>(wave, spec, encoder_.w, encoder_.b);
    relu_inplace<Real>(z.data());
    return z;
  }
  FeatureMap<Real> encode(const AudioBuffer& y) const {
    check_rate(y);
    const std::vector<Real> s(y.samples.begin(), y.samples.end());
    return encode(std::span<const Real>(s));
  }

  /// Per-frame speaker features before pooling.
  FeatureMap<Real> speaker_frame_features(std::span<const Real> c) const {
    if (c.size() < window()) {
      throw DataError("enrollment of " + std::to_string(c.size()) +
                      " samples is shorter than one window (" +
                      std::to_string(window()) + ")");
    }
    FeatureMap<Real> x = bottleneck_features(encode(c));
    for (const auto& block : speaker_) x = block.forward_offline(x);
    return x;
  }

  /// Speaker vector: frame average of the speaker encoder output.
  std::vector<Real> embed_speaker(std::span<const Real> c) const {
    const FeatureMap<Real> f = speaker_frame_features(c);
    std::vector<double> acc(f.channels(), 0.0);
    for (std::size_t t = 0; t < f.frames(); ++t) {
      const auto fr = f.frame(t);
      for (std::size_t ch = 0; ch < f.channels(); ++ch) acc[ch] += fr[ch];
    }
    std::vector<Real> e(f.channels());
    for (std::size_t ch = 0; ch < e.size(); ++ch) {
      e[ch] = static_cast<Real>(acc[ch] / static_cast<double>(f.frames()));
    }
    return e;
  }
  std::vector<Real> embed_speaker(const AudioBuffer& c) const {
    check_rate(c);
    const std::vector<Real> s(c.samples.begin(), c.samples.end());
    return embed_speaker(std::span<const Real>(s));
  }

  /// Channel-wise LN over N followed by the 1x1 N->B projection.
  FeatureMap<Real> bottleneck_features(const FeatureMap<Real>& z) const {
    if (z.channels() != n_filters()) {
      throw ShapeError("separator input has " + std::to_string(z.channels()) +
                       " channels, expected " + std::to_string(n_filters()));
    }
    FeatureMap<Real> h = z;
    bottleneck_norm_.apply(h.data().data(), h.channels(), h.frames());
    return bottleneck_.apply(h);
  }

  /// Features right after speaker fusion (first conv block output times e).
  FeatureMap<Real> post_fusion(const FeatureMap<Real>& z,
                               std::span<const Real> e) const {
    check_embedding(e);
    FeatureMap<Real> x = separator_.front().forward_offline(bottleneck_features(z));
    fuse(x, e);
    return x;
  }

  /// Sigmoid mask in (0,1)^{N x T'}.
  FeatureMap<Real> mask(const FeatureMap<Real>& z, std::span<const Real> e,
                        SsmMode mode = SsmMode::kConvolution) const {
    check_embedding(e);
    FeatureMap<Real> x = bottleneck_features(z);
    const auto X = static_cast<std::size_t>(config_.convs_per_repeat);
    const auto R2 = static_cast<std::size_t>(config_.s4d_per_repeat);
    for (std::size_t r = 0; r < static_cast<std::size_t>(config_.repeats); ++r) {
      for (std::size_t b = 0; b < X; ++b) {
        x = separator_[r * X + b].forward_offline(x);
        if (r == 0 && b == 0) fuse(x, e);
      }
      for (std::size_t j = 0; j < R2; ++j) x = s4d_[r * R2 + j].forward_offline(x, mode);
    }
    prelu_inplace<Real>(x.data(), mask_slope_);
    FeatureMap<Real> m = mask_.apply(x);
    sigmoid_inplace<Real>(m.data());
    return m;
  }

  /// Z_sep = mask(z, e) * z.
  FeatureMap<Real> separate(const FeatureMap<Real>& z, std::span<const Real> e,
                            SsmMode mode = SsmMode::kConvolution) const {
    FeatureMap<Real> m = mask(z, e, mode);
    for (std::size_t i = 0; i < m.data().size(); ++i) m.data()[i] *= z.data()[i];
    return m;
  }

  /// Overlap-add decoder; output trimmed or zero-padded to `length` samples
  /// (0 keeps the natural (T'-1)*hop + L length).
  std::vector<Real> decode(const FeatureMap<Real>& z_sep,
                           std::size_t length = 0) const {
    if (z_sep.channels() != n_filters()) {
      throw ShapeError("decode: expected " + std::to_string(n_filters()) + " channels");
    }
    std::vector<Real> proj(z_sep.frames() * window());
    affine_frames<Real>(decoder_t_, nullptr, window(), n_filters(),
                        z_sep.data().data(), z_sep.frames(), proj.data());
    auto out = overlap_add(proj.data(), z_sep.frames(), window(), hop(), decoder_bias_);
    if (length > 0) out.resize(length, Real(0));
    return out;
  }

  /// Number of encoder frames the offline pass evaluates for T input
  /// samples: enough to cover every output sample plus the lookahead.
  std::size_t frames_for(std::size_t samples) const {
    if (samples == 0) return 0;
    return (samples + hop() - 1) / hop() +
           static_cast<std::size_t>(config_.total_lookahead_frames());
  }

  /// Extracts the target from `y` given a precomputed speaker embedding.
  /// The input is zero-padded so every sample is covered by a full window
  /// and all lookahead frames exist; the output has y.size() samples.
  std::vector<Real> extract(std::span<const Real> y, std::span<const Real> e,
                            SsmMode mode = SsmMode::kConvolution) const {
    if (y.empty()) return {};
    const std::size_t frames = frames_for(y.size());
    std::vector<Real> padded((frames - 1) * hop() + window(), Real(0));
    std::copy(y.begin(), y.end(), padded.begin());
    const FeatureMap<Real> z = encode(std::span<const Real>(padded));
    return decode(separate(z, e, mode), y.size());
  }

  /// s_hat = TSE(y, c).
  AudioBuffer forward_offline(const AudioBuffer& y, const AudioBuffer& c,
                              SsmMode mode = SsmMode::kConvolution) const {
    check_rate(y);
    const auto e = embed_speaker(c);
    const std::vector<Real> s(y.samples.begin(), y.samples.end());
    const auto out = extract(std::span<const Real>(s), e, mode);
    return AudioBuffer(std::vector<float>(out.begin(), out.end()), y.sample_rate);
  }

 private:
  void check_rate(const AudioBuffer& a) const {
    a.validate();
    if (a.sample_rate != config_.sample_rate) {
      throw DataError("sample rate " + std::to_string(a.sample_rate) +
                      " Hz does not match model rate " +
                      std::to_string(config_.sample_rate) + " Hz");
    }
  }
  void check_embedding(std::span<const Real> e) const {
    if (e.size() != bottleneck_width()) {
      throw ShapeError("speaker embedding has dimension " + std::to_string(e.size()) +
                       ", expected " + std::to_string(bottleneck_width()));
    }
  }
  static void fuse(FeatureMap<Real>& x, std::span<const Real> e) {
    for (std::size_t t = 0; t < x.frames(); ++t) {
      auto f = x.frame(t);
      for (std::size_t c = 0; c < f.size(); ++c) f[c] *= e[c];
    }
  }

  ConvBlock conv_block(const WeightSet& w, const std::string& p, int dilation,
                       int lookahead) const {
    auto get = [&](const std::string& name) { return layers::to_real<Real>(w.at(p + name)); };
    const auto B = static_cast<std::size_t>(config_.bottleneck);
    const auto H = static_cast<std::size_t>(config_.conv_channels);
    ConvBlock b;
    b.in = {H, B, get(".in.weight"), get(".in.bias")};
    b.slope1 = static_cast<Real>(w.at(p + ".prelu1.slope").data[0]);
    b.norm1 = {get(".norm1.gain"), get(".norm1.bias")};
    b.dw_w = get(".dw.weight");
    b.dw_b = get(".dw.bias");
    b.slope2 = static_cast<Real>(w.at(p + ".prelu2.slope").data[0]);
    b.norm2 = {get(".norm2.gain"), get(".norm2.bias")};
    b.out = {B, H, get(".out.weight"), get(".out.bias")};
    b.kernel = static_cast<std::size_t>(config_.conv_kernel);
    b.dilation = static_cast<std::size_t>(dilation);
    b.lookahead = static_cast<std::size_t>(lookahead);
    return b;
  }

  S4DBlock s4d_block(const WeightSet& w, const std::string& p) const {
    auto get = [&](const std::string& name) { return layers::to_real<Real>(w.at(p + name)); };
    const auto B = static_cast<std::size_t>(config_.bottleneck);
    const auto F = static_cast<std::size_t>(config_.s4d_ffn_width);
    S4DBlock s;
    s.norm1 = {get(".norm1.gain"), get(".norm1.bias")};
    s.ssm = S4DLayerParams<Real>(B, static_cast<std::size_t>(config_.state_pairs));
    s.ssm.a_real = get(".ssm.a_re");
    s.ssm.a_imag = get(".ssm.a_im");
    s.ssm.c_real = get(".ssm.c_re");
    s.ssm.c_imag = get(".ssm.c_im");
    s.ssm.d_feedthrough = get(".ssm.d");
    s.ssm.log_dt = get(".ssm.log_dt");
    s.disc = discretize(s.ssm);
    s.proj = {B, B, get(".proj.weight"), get(".proj.bias")};
    s.norm2 = {get(".norm2.gain"), get(".norm2.bias")};
    s.ffn1 = {F, B, get(".ffn1.weight"), get(".ffn1.bias")};
    s.ffn2 = {B, F, get(".ffn2.weight"), get(".ffn2.bias")};
    return s;
  }

  ModelConfig config_;
  std::int64_t param_count_ = 0;
  Affine encoder_;
  layers::Norm<Real> bottleneck_norm_;
  Affine bottleneck_;
  std::vector<ConvBlock> separator_;
  std::vector<S4DBlock> s4d_;
  Real mask_slope_ = 0;
  Affine mask_;
  std::vector<Real> decoder_t_;
  Real decoder_bias_ = 0;
  std::vector<ConvBlock> speaker_;
};

template <class Real>
Model<Real> build_model(const ModelConfig& config, const WeightSet& weights) {
  return Model<Real>(config, weights);
}

template <class Real>
Model<Real> build_random_model(const ModelConfig& config, std::uint64_t seed) {
  return Model<Real>(config, random_weights(config, seed));
}

template <class Real>
std::int64_t param_count(const Model<Real>& model) {
  return model.param_count();
}

}  // namespace sbss

// Copyright 2026 The sbss Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Frame-synchronous causal inference. Samples are consumed in hop-sized
// steps; every layer keeps just enough history to produce the next frame:
//
//   * depthwise convs keep (P-1)*dilation frames of input, plus a residual
//     delay line of `lookahead` frames when future frames are admitted;
//   * S4D layers keep their complex recurrent state (one step per frame);
//   * the encoder output waits in a delay line of total-lookahead frames for
//     the mask;
//   * the decoder overlap-adds into an L-sample accumulator and releases hop
//     samples per frame.
//
// All per-frame arithmetic matches regardless of how samples are chunked.

#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "sbss/audio_buffer.hpp"
#include "sbss/config.hpp"
#include "sbss/error.hpp"
#include "sbss/model.hpp"

namespace sbss {

struct BlockLookahead {
  std::string block;
  int frames = 0;
  double ms = 0;
};

struct LatencyReport {
  int algorithmic_latency_samples = 0;
  double algorithmic_latency_ms = 0;
  double lookahead_ms = 0;
  std::vector<BlockLookahead> per_block;
};

/// Analytic algorithmic latency: one window plus hop per lookahead frame.
inline LatencyReport latency_of(const ModelConfig& config) {
  config.validate();
  LatencyReport r;
  const double ms_per_sample = 1000.0 / config.sample_rate;
  const int total = config.total_lookahead_frames();
  r.algorithmic_latency_samples = config.window + total * config.hop();
  r.algorithmic_latency_ms = r.algorithmic_latency_samples * ms_per_sample;
  r.lookahead_ms = total * config.hop() * ms_per_sample;
  for (int rep = 0; rep < config.repeats; ++rep) {
    for (int x = 0; x < config.convs_per_repeat; ++x) {
      const int k = config.lookahead_of(rep, x);
      if (k > 0) {
        r.per_block.push_back({conv_block_prefix(rep, x), k,
                               k * config.hop() * ms_per_sample});
      }
    }
  }
  return r;
}

namespace streaming_detail {

/// FIFO of fixed-width frames.
template <class Real>
class FrameQueue {
 public:
  FrameQueue() = default;
  explicit FrameQueue(std::size_t channels) : channels_(channels) {}

  std::size_t size() const { return (data_.size() - head_) / std::max<std::size_t>(channels_, 1); }
  const Real* front() const { return data_.data() + head_; }
  void push(const Real* frames, std::size_t n) {
    data_.insert(data_.end(), frames, frames + n * channels_);
  }
  void pop(std::size_t n) {
    head_ += n * channels_;
    if (head_ == data_.size()) {
      data_.clear();
      head_ = 0;
    } else if (head_ > 4096 && head_ * 2 > data_.size()) {
      data_.erase(data_.begin(), data_.begin() + static_cast<std::ptrdiff_t>(head_));
      head_ = 0;
    }
  }
  bool operator==(const FrameQueue& o) const {
    return channels_ == o.channels_ &&
           std::equal(data_.begin() + static_cast<std::ptrdiff_t>(head_), data_.end(),
                      o.data_.begin() + static_cast<std::ptrdiff_t>(o.head_), o.data_.end());
  }

 private:
  std::size_t channels_ = 0;
  std::vector<Real> data_;
  std::size_t head_ = 0;
};

template <class Real>
class ConvBlockStream {
 public:
  explicit ConvBlockStream(const layers::ConvBlock<Real>& block)
      : block_(&block),
        buf_(block.history() * block.hidden(), Real(0)),
        residual_(block.out.rows) {}

  /// Consumes n input frames, returns every output frame now computable.
  FeatureMap<Real> process(const FeatureMap<Real>& x) {
    const auto& b = *block_;
    const std::size_t n = x.frames();
    const std::size_t H = b.hidden();
    const std::size_t hist = b.history();
    if (n == 0) return FeatureMap<Real>(b.out.rows, 0);

    // buf_ holds frames [start_, start_ + hist) of history; new frames are
    // appended after them and the window slides. Compaction happens once
    // the slack is used up, so its cost is spread over many frames.
    const std::size_t used = start_ + hist + n;
    if (used * H > buf_.size()) {
      std::copy(buf_.begin() + static_cast<std::ptrdiff_t>(start_ * H),
                buf_.begin() + static_cast<std::ptrdiff_t>((start_ + hist) * H),
                buf_.begin());
      start_ = 0;
      const std::size_t want = hist + std::max(n, std::max<std::size_t>(hist, 64));
      if (want * H > buf_.size()) buf_.resize(want * H);
    }
    Real* ext = buf_.data() + start_ * H;
    b.pre(x.data().data(), n, ext + hist * H);

    const std::size_t seen_before = frames_in_;
    frames_in_ += n;
    const std::size_t ready =
        frames_in_ > b.lookahead ? frames_in_ - b.lookahead : 0;
    const std::size_t m = ready - frames_out_;

    residual_.push(x.data().data(), n);
    FeatureMap<Real> y(b.out.rows, m);
    if (m > 0) {
      scratch_.resize(m * H);
      const auto left = static_cast<std::ptrdiff_t>(seen_before) -
                        static_cast<std::ptrdiff_t>(frames_out_) -
                        static_cast<std::ptrdiff_t>(b.lookahead);
      depthwise_frames(ext, hist + n, H, b.dw_w.data(), b.dw_b.data(), b.kernel,
                       b.dilation, left, m, scratch_.data());
      b.post(scratch_.data(), residual_.front(), m, y.data().data());
      residual_.pop(m);
      frames_out_ += m;
    }
    start_ += n;
    return y;
  }

  /// The last history() hidden frames, oldest first.
  std::span<const Real> history() const {
    const std::size_t H = block_->hidden();
    return {buf_.data() + start_ * H, block_->history() * H};
  }

  bool operator==(const ConvBlockStream& o) const {
    const auto a = history(), c = o.history();
    return block_ == o.block_ && std::equal(a.begin(), a.end(), c.begin(), c.end()) &&
           residual_ == o.residual_ && frames_in_ == o.frames_in_ &&
           frames_out_ == o.frames_out_;
  }

 private:
  const layers::ConvBlock<Real>* block_;
  std::vector<Real> buf_;
  std::size_t start_ = 0;
  std::vector<Real> scratch_;
  FrameQueue<Real> residual_;
  std::size_t frames_in_ = 0;
  std::size_t frames_out_ = 0;
};

template <class Real>
class S4DBlockStream {
 public:
  explicit S4DBlockStream(const layers::S4DBlock<Real>& block)
      : block_(&block), state_(block.ssm.channels, block.ssm.state_pairs) {}

  FeatureMap<Real> process(const FeatureMap<Real>& x) {
    const auto& b = *block_;
    const std::size_t B = b.width();
    const std::size_t n = x.frames();
    FeatureMap<Real> y = x;
    if (n == 0) return y;
    std::vector<Real> h(x.data());
    b.norm1.apply(h.data(), B, n);
    std::vector<Real> s(n * B);
    for (std::size_t t = 0; t < n; ++t) {
      ssm_advance<Real>(state_, std::span<const Real>(h.data() + t * B, B),
                        b.disc, b.ssm, std::span<Real>(s.data() + t * B, B));
    }
    b.post(s.data(), y.data().data(), n);
    return y;
  }

  const SSMState<Real>& state() const { return state_; }
  bool operator==(const S4DBlockStream&) const = default;

 private:
  const layers::S4DBlock<Real>* block_;
  SSMState<Real> state_;
};

}  // namespace streaming_detail

/// Per-stream inference state over a shared immutable model. The model must
/// outlive the stream. One stream is driven by one thread at a time.
template <class Real>
class StreamState {
 public:
  StreamState(const Model<Real>& model, std::vector<Real> speaker_embedding)
      : model_(&model),
        embedding_(std::move(speaker_embedding)),
        z_delay_(model.n_filters()),
        overlap_add_(model.window(), Real(0)) {
    if (embedding_.size() != model.bottleneck_width()) {
      throw ShapeError("speaker embedding dimension mismatch");
    }
    for (const auto& b : model.separator_blocks()) conv_.emplace_back(b);
    for (const auto& b : model.s4d_blocks()) s4d_.emplace_back(b);
  }

  /// Feeds any number of samples; returns the samples finalized by them
  /// (hop samples per completed frame).
  std::vector<Real> push(std::span<const Real> samples) {
    if (flushed_) throw Error("push after flush: stream is finished");
    samples_pushed_ += samples.size();
    return consume(samples);
  }

  /// Zero-pads the input so every pushed sample gets its output, and emits
  /// the remainder. Afterwards total emitted == total pushed. A second flush
  /// returns nothing.
  std::vector<Real> flush() {
    if (flushed_) return {};
    flushed_ = true;
    const std::size_t total = samples_pushed_;
    if (total == 0) return {};
    const std::size_t hop = model_->hop();
    const std::size_t frames = model_->frames_for(total);
    const std::size_t needed = (frames - 1) * hop + model_->window();
    const std::vector<Real> zeros(needed - total, Real(0));
    std::vector<Real> out = consume(zeros);
    const std::size_t remaining = total - (samples_emitted_ - out.size());
    out.resize(std::min(out.size(), remaining));
    samples_emitted_ = total;
    return out;
  }

  std::size_t samples_pushed() const { return samples_pushed_; }
  std::size_t samples_emitted() const { return samples_emitted_; }
  /// Encoder frames processed so far.
  std::size_t frames_seen() const { return encoder_frames_; }
  /// Decoder frames overlap-added (each releases hop samples).
  std::size_t frames_completed() const { return decoder_frames_; }
  const std::vector<Real>& speaker_embedding() const { return embedding_; }
  bool flushed() const { return flushed_; }

  const std::vector<streaming_detail::S4DBlockStream<Real>>& s4d_streams() const {
    return s4d_;
  }

  bool operator==(const StreamState&) const = default;

 private:
  std::vector<Real> consume(std::span<const Real> samples) {
    const Model<Real>& m = *model_;
    const std::size_t L = m.window(), hop = m.hop();
    fifo_.insert(fifo_.end(), samples.begin(), samples.end());
    if (fifo_.size() < L) return {};

    // Frontend: every complete window in the FIFO.
    const std::size_t nf = (fifo_.size() - L) / hop + 1;
    std::vector<Real> windows(nf * L);
    for (std::size_t t = 0; t < nf; ++t) {
      std::copy_n(fifo_.begin() + static_cast<std::ptrdiff_t>(t * hop), L,
                  windows.begin() + static_cast<std::ptrdiff_t>(t * L));
    }
    fifo_.erase(fifo_.begin(), fifo_.begin() + static_cast<std::ptrdiff_t>(nf * hop));
    encoder_frames_ += nf;

    const std::size_t N = m.n_filters();
    FeatureMap<Real> z(N, nf);
    m.encoder().apply(windows.data(), nf, z.data().data());
    relu_inplace<Real>(z.data());
    z_delay_.push(z.data().data(), nf);

    // Separator.
    FeatureMap<Real> x = m.bottleneck_features(z);
    const auto& cfg = m.config();
    const auto X = static_cast<std::size_t>(cfg.convs_per_repeat);
    const auto R2 = static_cast<std::size_t>(cfg.s4d_per_repeat);
    for (std::size_t r = 0; r < static_cast<std::size_t>(cfg.repeats); ++r) {
      for (std::size_t b = 0; b < X; ++b) {
        x = conv_[r * X + b].process(x);
        if (r == 0 && b == 0) {
          for (std::size_t t = 0; t < x.frames(); ++t) {
            auto f = x.frame(t);
            for (std::size_t c = 0; c < f.size(); ++c) f[c] *= embedding_[c];
          }
        }
      }
      for (std::size_t j = 0; j < R2; ++j) x = s4d_[r * R2 + j].process(x);
    }

    // Mask head and masking of the delayed encoder output.
    const std::size_t ready = x.frames();
    if (ready == 0) return {};
    prelu_inplace<Real>(x.data(), m.mask_slope());
    FeatureMap<Real> mask = m.mask().apply(x);
    sigmoid_inplace<Real>(mask.data());
    const Real* zd = z_delay_.front();
    for (std::size_t i = 0; i < ready * N; ++i) mask.data()[i] *= zd[i];
    z_delay_.pop(ready);

    // Decoder with overlap-add.
    std::vector<Real> proj(ready * L);
    affine_frames<Real>(m.decoder_transposed(), nullptr, L, N,
                        mask.data().data(), ready, proj.data());
    std::vector<Real> out(ready * hop);
    const Real bias = m.decoder_bias();
    for (std::size_t t = 0; t < ready; ++t) {
      const Real* p = proj.data() + t * L;
      for (std::size_t l = 0; l < L; ++l) overlap_add_[l] += p[l];
      for (std::size_t l = 0; l < hop; ++l) out[t * hop + l] = overlap_add_[l] + bias;
      std::copy(overlap_add_.begin() + static_cast<std::ptrdiff_t>(hop),
                overlap_add_.end(), overlap_add_.begin());
      std::fill(overlap_add_.end() - static_cast<std::ptrdiff_t>(hop),
                overlap_add_.end(), Real(0));
    }
    decoder_frames_ += ready;
    samples_emitted_ += out.size();
    return out;
  }

  const Model<Real>* model_;
  std::vector<Real> embedding_;
  std::vector<Real> fifo_;
  std::size_t samples_pushed_ = 0;
  std::size_t samples_emitted_ = 0;
  std::size_t encoder_frames_ = 0;
  std::size_t decoder_frames_ = 0;
  streaming_detail::FrameQueue<Real> z_delay_;
  std::vector<streaming_detail::ConvBlockStream<Real>> conv_;
  std::vector<streaming_detail::S4DBlockStream<Real>> s4d_;
  std::vector<Real> overlap_add_;
  bool flushed_ = false;
};

/// Embeds the enrollment once and returns a zeroed stream.
template <class Real>
StreamState<Real> init_stream(const Model<Real>& model,
                              const AudioBuffer& enrollment) {
  return StreamState<Real>(model, model.embed_speaker(enrollment));
}

/// Runs a whole signal through a fresh stream in fixed-size chunks.
template <class Real>
std::vector<Real> stream_signal(const Model<Real>& model,
                                std::span<const Real> embedding,
                                std::span<const Real> y, std::size_t chunk) {
  StreamState<Real> s(model, std::vector<Real>(embedding.begin(), embedding.end()));
  std::vector<Real> out;
  out.reserve(y.size());
  if (chunk == 0) chunk = 1;
  for (std::size_t i = 0; i < y.size(); i += chunk) {
    const auto part = s.push(y.subspan(i, std::min(chunk, y.size() - i)));
    out.insert(out.end(), part.begin(), part.end());
  }
  const auto tail = s.flush();
  out.insert(out.end(), tail.begin(), tail.end());
  return out;
}

}  // namespace sbss

#pragma once

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "ias/core/random.hpp"
#include "ias/nets/config.hpp"
#include "ias/nets/image.hpp"
#include "ias/nets/layers.hpp"
#include "ias/text/codec.hpp"

namespace ias::nets {

enum class SampleMode { stochastic, greedy };

// Rows 0..groups*n-1 of a table, each group using rows 0..n-1.
inline std::vector<int> tiled_rows(int groups, int n) {
  std::vector<int> ids(static_cast<std::size_t>(groups * n));
  for (int g = 0; g < groups; ++g)
    for (int i = 0; i < n; ++i) ids[static_cast<std::size_t>(g * n + i)] = i;
  return ids;
}

// Memory rows for sequences drawn from memory groups: sequence s uses group
// image_of[s].
inline std::vector<int> expand_groups(const std::vector<int>& image_of, int rows_per_group) {
  std::vector<int> rows;
  rows.reserve(image_of.size() * static_cast<std::size_t>(rows_per_group));
  for (int g : image_of)
    for (int i = 0; i < rows_per_group; ++i) rows.push_back(g * rows_per_group + i);
  return rows;
}

// Causal caption language model. With an image encoder it is the caption
// policy q(y|x), attending to hyper-pixels; without it is the prior p(y).
// Output constraints: PAD, BOS and UNK are never emitted and the last slot
// can only hold EOS, so the model is a distribution over valid captions.
// A conditional model built with external_memory_rows > 0 has no encoder of
// its own and attends to caller-supplied memory groups of that many rows.
template <class T>
class CaptionModel {
 public:
  CaptionModel() = default;
  CaptionModel(const NetConfig& cfg, bool conditional, const std::string& prefix, std::uint64_t seed,
               int layers, int external_memory_rows = 0)
      : cfg_(cfg), conditional_(conditional), ps_(prefix, seed) {
    cfg.validate();
    const int d = cfg.width, v = cfg.vocab_size, p = positions();
    if (conditional && external_memory_rows > 0) {
      memory_rows_ = external_memory_rows;
    } else if (conditional) {
      encoder_ = ConvEncoder<T>(ps_, "encoder", cfg);
      memory_rows_ = encoder_->hyper_pixels();
      hyper_pos_ = ps_.normal("hyper_pos", memory_rows_, d, 0.1);
    }
    tok_emb_ = ps_.normal("tok_emb", v, d, 0.5);
    pos_emb_ = ps_.normal("pos_emb", p, d, 0.1);
    for (int l = 0; l < layers; ++l)
      blocks_.push_back(make_block(ps_, "block" + std::to_string(l), d, cfg.ff_width, conditional));
    ln_f_ = make_norm(ps_, "ln_f", d);
    head_ = make_dense(ps_, "head", d, v);
    mask_ = Matrix<T>::Zero(p, v);
    const T ninf = -std::numeric_limits<T>::infinity();
    for (int i = 0; i < p; ++i) {
      mask_(i, text::kPad) = mask_(i, text::kBos) = mask_(i, text::kUnk) = ninf;
      if (i == p - 1)
        for (int j = 0; j < v; ++j)
          if (j != text::kEos) mask_(i, j) = ninf;
    }
  }

  const NetConfig& config() const { return cfg_; }
  bool conditional() const { return conditional_; }
  ParamSet<T>& params() { return ps_; }
  const ParamSet<T>& params() const { return ps_; }
  const ConvEncoder<T>& encoder() const { return *encoder_; }
  // Memory rows per image group.
  int memory_rows() const { return memory_rows_; }
  // Number of predicted positions (caption length minus BOS).
  int positions() const { return cfg_.max_caption_length - 1; }
  const Matrix<T>& output_mask() const { return mask_; }

  // Hyper-pixels plus their positional embedding, (batch * N) x width.
  Var<T> memory(Tape<T>& t, Var<T> pixels) const {
    require(conditional_ && encoder_, "memory: model has no image encoder");
    Var<T> h = encoder_->encode(t, ps_, pixels);
    const int n = encoder_->hyper_pixels();
    const int groups = static_cast<int>(h.rows() / n);
    return ad::add(h, ad::embedding(t.param(ps_[hyper_pos_]), tiled_rows(groups, n)));
  }

  CrossMemory<T> cross_memory(Tape<T>& t, Var<T> memory, const std::vector<int>& image_of) const {
    CrossMemory<T> mem;
    const auto rows = expand_groups(image_of, memory_rows_);
    const int groups = static_cast<int>(memory.rows()) / memory_rows_;
    bool identity = static_cast<int>(image_of.size()) == groups;
    for (std::size_t i = 0; identity && i < image_of.size(); ++i) identity = image_of[i] == static_cast<int>(i);
    for (const auto& b : blocks_) {
      auto [k, v] = cross_keys(t, ps_, b, memory, identity ? nullptr : &rows);
      mem.k.push_back(k);
      mem.v.push_back(v);
    }
    return mem;
  }

  // Per-position logits over the vocabulary for teacher-forced inputs,
  // (G * positions) x vocab, output mask applied.
  Var<T> logits(Tape<T>& t, const std::vector<text::Caption>& captions, const CrossMemory<T>* mem) const {
    const int g = static_cast<int>(captions.size()), p = positions();
    std::vector<int> inputs(static_cast<std::size_t>(g * p), text::kPad);
    for (int s = 0; s < g; ++s) {
      const auto& ids = captions[static_cast<std::size_t>(s)].ids;
      require(text::is_valid(captions[static_cast<std::size_t>(s)], cfg_.vocab_size, cfg_.max_caption_length),
              "caption_logprob: invalid caption");
      for (std::size_t i = 0; i + 1 < ids.size(); ++i) inputs[static_cast<std::size_t>(s * p) + i] = ids[i];
    }
    Var<T> x = ad::add(ad::embedding(t.param(ps_[tok_emb_]), inputs),
                       ad::embedding(t.param(ps_[pos_emb_]), tiled_rows(g, p)));
    for (std::size_t l = 0; l < blocks_.size(); ++l)
      x = block_forward(t, ps_, blocks_[l], x, cfg_.heads, g, true, nullptr, mem, l);
    Var<T> out = dense(t, ps_, head_, norm(t, ps_, ln_f_, x));
    return ad::add_const(out, tiled_mask(g));
  }

  // log q(y | x) (or log p(y)) per caption, G x 1. `memory` holds one group
  // of hyper-pixels per image; image_of maps captions to images.
  Var<T> log_prob(Tape<T>& t, const std::vector<text::Caption>& captions, const Var<T>* memory = nullptr,
                  const std::vector<int>* image_of = nullptr) const {
    const int g = static_cast<int>(captions.size()), p = positions();
    require(g > 0, "caption_logprob: empty batch");
    std::optional<CrossMemory<T>> mem;
    if (conditional_) {
      require(memory != nullptr, "caption_logprob: image memory required");
      std::vector<int> identity;
      if (!image_of) {
        identity.resize(static_cast<std::size_t>(g));
        for (int i = 0; i < g; ++i) identity[static_cast<std::size_t>(i)] = i;
      }
      mem = cross_memory(t, *memory, image_of ? *image_of : identity);
    }
    Var<T> lp = ad::log_softmax(logits(t, captions, mem ? &*mem : nullptr));
    std::vector<int> targets(static_cast<std::size_t>(g * p), text::kEos);
    Matrix<T> weight = Matrix<T>::Zero(g * p, 1);
    for (int s = 0; s < g; ++s) {
      const auto& ids = captions[static_cast<std::size_t>(s)].ids;
      for (std::size_t i = 1; i < ids.size(); ++i) {
        const auto r = static_cast<std::size_t>(s * p) + i - 1;
        require(ids[i] != text::kUnk, "caption_logprob: UNK is outside the model's support");
        targets[r] = ids[i];
        weight(static_cast<Eigen::Index>(r), 0) = T(1);
      }
    }
    return ad::group_sum(ad::mul_const(ad::gather(lp, std::move(targets)), weight), g);
  }

  // Autoregressive decoding with cached keys and values; runs on a
  // gradient-free tape. Conditional models take one memory group per image
  // and decode one caption per entry of image_of; unconditional models decode
  // image_of.size() captions.
  std::vector<text::Caption> sample(const Matrix<T>* memory, const std::vector<int>& image_of, SampleMode mode,
                                    Rng& rng) const {
    Tape<T> t(false);
    const int g = static_cast<int>(image_of.size()), p = positions(), d = cfg_.width;
    std::optional<CrossMemory<T>> mem;
    if (conditional_) {
      require(memory != nullptr, "sample_caption: image memory required");
      mem = cross_memory(t, t.reference(*memory), image_of);
    }
    DecodeCache<T> cache;
    cache.capacity = p;
    for (std::size_t l = 0; l < blocks_.size(); ++l) {
      cache.k.push_back(Matrix<T>::Zero(g * p, d));
      cache.v.push_back(Matrix<T>::Zero(g * p, d));
    }
    std::vector<text::Caption> out(static_cast<std::size_t>(g), text::Caption{{text::kBos}});
    std::vector<int> current(static_cast<std::size_t>(g), text::kBos);
    std::vector<char> done(static_cast<std::size_t>(g), 0);
    int remaining = g;
    std::vector<T> probs(static_cast<std::size_t>(cfg_.vocab_size));
    for (int pos = 0; pos < p && remaining > 0; ++pos) {
      Var<T> x = ad::add_row(ad::embedding(t.param(ps_[tok_emb_]), current),
                             ad::slice_rows(t.param(ps_[pos_emb_]), pos, 1));
      for (std::size_t l = 0; l < blocks_.size(); ++l)
        x = block_step(t, ps_, blocks_[l], x, cfg_.heads, cache, l, pos, mem ? &*mem : nullptr);
      Matrix<T> lg = dense(t, ps_, head_, norm(t, ps_, ln_f_, x)).value();
      lg.rowwise() += mask_.row(pos);
      for (int s = 0; s < g; ++s) {
        const auto si = static_cast<std::size_t>(s);
        if (done[si]) {
          current[si] = text::kPad;
          continue;
        }
        int next = 0;
        if (mode == SampleMode::greedy) {
          lg.row(s).maxCoeff(&next);
        } else {
          const T m = lg.row(s).maxCoeff();
          for (int j = 0; j < cfg_.vocab_size; ++j) probs[static_cast<std::size_t>(j)] = std::exp(lg(s, j) - m);
          next = static_cast<int>(rng.categorical(std::span<const T>(probs)));
        }
        out[si].ids.push_back(next);
        current[si] = next;
        if (next == text::kEos) {
          done[si] = 1;
          --remaining;
        }
      }
    }
    return out;
  }

  // Convenience forms for single images.
  double caption_logprob(const world::Image& x, const text::Caption& y) const {
    Tape<T> t(false);
    std::optional<Var<T>> mem;
    if (conditional_) mem = memory(t, t.constant(image_rows<T>({&x})));
    return static_cast<double>(log_prob(t, {y}, mem ? &*mem : nullptr).scalar());
  }

  double prior_logprob(const text::Caption& y) const {
    Tape<T> t(false);
    return static_cast<double>(log_prob(t, {y}).scalar());
  }

  text::Caption sample_caption(const world::Image* x, SampleMode mode, std::uint64_t seed) const {
    Rng rng(seed);
    if (!conditional_) return sample(nullptr, {0}, mode, rng).front();
    require(x != nullptr, "sample_caption: image required");
    Tape<T> t(false);
    const Matrix<T> m = memory(t, t.constant(image_rows<T>({x}))).value();
    return sample(&m, {0}, mode, rng).front();
  }

 private:
  Matrix<T> tiled_mask(int groups) const {
    Matrix<T> m(groups * positions(), cfg_.vocab_size);
    for (int g = 0; g < groups; ++g) m.middleRows(g * positions(), positions()) = mask_;
    return m;
  }

  NetConfig cfg_;
  bool conditional_ = false;
  ParamSet<T> ps_;
  std::optional<ConvEncoder<T>> encoder_;
  int memory_rows_ = 0;
  int hyper_pos_ = -1, tok_emb_ = -1, pos_emb_ = -1;
  std::vector<BlockIx> blocks_;
  NormIx ln_f_;
  DenseIx head_;
  Matrix<T> mask_;
};

}  // namespace ias::nets

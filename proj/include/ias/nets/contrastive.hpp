#pragma once

#include <string>
#include <vector>

#include "ias/nets/decoder.hpp"
#include "ias/nets/image.hpp"

namespace ias::nets {

// Image head f and caption head g. f: separate conv encoder, mean-pooled,
// then an MLP; g: caption encoder flattened over the padded length, then an
// MLP. Outputs are embed_dim wide.
template <class T>
class ContrastiveHeads {
 public:
  ContrastiveHeads() = default;
  ContrastiveHeads(const NetConfig& cfg, const std::string& prefix, std::uint64_t seed)
      : cfg_(cfg), ps_(prefix, seed) {
    cfg.validate();
    f_encoder_ = ConvEncoder<T>(ps_, "f.encoder", cfg);
    f1_ = make_dense(ps_, "f.mlp1", cfg.width, cfg.embed_hidden);
    f2_ = make_dense(ps_, "f.mlp2", cfg.embed_hidden, cfg.embed_dim);
    g_enc_ = make_caption_encoder(ps_, "g.encoder", cfg, 1);
    g1_ = make_dense(ps_, "g.mlp1", cfg.max_caption_length * cfg.width, cfg.embed_hidden);
    g2_ = make_dense(ps_, "g.mlp2", cfg.embed_hidden, cfg.embed_dim);
  }

  const NetConfig& config() const { return cfg_; }
  ParamSet<T>& params() { return ps_; }
  const ParamSet<T>& params() const { return ps_; }

  // f(x) per image, B x embed_dim.
  Var<T> embed_images(Tape<T>& t, Var<T> pixels) const {
    Var<T> h = f_encoder_.encode(t, ps_, pixels);
    const int b = static_cast<int>(h.rows()) / f_encoder_.hyper_pixels();
    h = ad::group_mean(h, b);
    Var<T> e = dense(t, ps_, f2_, ad::gelu(dense(t, ps_, f1_, h)));
    return cfg_.normalize_embeddings ? ad::normalize_rows(e) : e;
  }

  // g(y) per caption, B x embed_dim.
  Var<T> embed_captions(Tape<T>& t, const std::vector<text::Caption>& captions) const {
    std::vector<int> key_len;
    Var<T> h = encode_captions(t, ps_, g_enc_, cfg_, captions, key_len);
    h = ad::reshape(h, static_cast<Eigen::Index>(captions.size()),
                    static_cast<Eigen::Index>(cfg_.max_caption_length) * cfg_.width);
    Var<T> e = dense(t, ps_, g2_, ad::gelu(dense(t, ps_, g1_, h)));
    return cfg_.normalize_embeddings ? ad::normalize_rows(e) : e;
  }

  // logits(b, j) = f(x_b) . g(y_j) / temperature.
  Var<T> logits(Var<T> f, Var<T> g) const {
    Var<T> l = ad::matmul_nt(f, g);
    return cfg_.temperature == 1.0 ? l : ad::scale(l, static_cast<T>(1.0 / cfg_.temperature));
  }

 private:
  NetConfig cfg_;
  ParamSet<T> ps_;
  ConvEncoder<T> f_encoder_;
  DenseIx f1_, f2_;
  CaptionEncoderIx g_enc_;
  DenseIx g1_, g2_;
};

}  // namespace ias::nets

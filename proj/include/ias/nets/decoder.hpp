#pragma once

#include <string>
#include <vector>

#include "ias/nets/caption_model.hpp"
#include "ias/nets/config.hpp"
#include "ias/nets/image.hpp"
#include "ias/nets/layers.hpp"
#include "ias/text/codec.hpp"

namespace ias::nets {

// Bidirectional caption encoder over captions padded to the maximum length;
// padding keys are masked. Output (G * max_len) x width.
struct CaptionEncoderIx {
  int tok_emb = -1, pos_emb = -1;
  std::vector<BlockIx> blocks;
  NormIx ln;
};

template <class T>
CaptionEncoderIx make_caption_encoder(ParamSet<T>& ps, const std::string& name, const NetConfig& cfg,
                                      int layers) {
  CaptionEncoderIx e;
  e.tok_emb = ps.normal(name + ".tok_emb", cfg.vocab_size, cfg.width, 0.5);
  e.pos_emb = ps.normal(name + ".pos_emb", cfg.max_caption_length, cfg.width, 0.1);
  for (int l = 0; l < layers; ++l)
    e.blocks.push_back(make_block(ps, name + ".block" + std::to_string(l), cfg.width, cfg.ff_width, false));
  e.ln = make_norm(ps, name + ".ln", cfg.width);
  return e;
}

template <class T>
Var<T> encode_captions(Tape<T>& t, const ParamSet<T>& ps, const CaptionEncoderIx& e, const NetConfig& cfg,
                       const std::vector<text::Caption>& captions, std::vector<int>& key_len) {
  const int g = static_cast<int>(captions.size()), l = cfg.max_caption_length;
  require(g > 0, "caption encoder: empty batch");
  std::vector<int> ids(static_cast<std::size_t>(g * l), text::kPad);
  key_len.assign(static_cast<std::size_t>(g), 0);
  for (int s = 0; s < g; ++s) {
    const auto& c = captions[static_cast<std::size_t>(s)];
    require(text::is_valid(c, cfg.vocab_size, l), "caption encoder: invalid caption");
    for (std::size_t i = 0; i < c.ids.size(); ++i) ids[static_cast<std::size_t>(s * l) + i] = c.ids[i];
    key_len[static_cast<std::size_t>(s)] = static_cast<int>(c.ids.size());
  }
  Var<T> x = ad::add(ad::embedding(t.param(ps[e.tok_emb]), ids), ad::embedding(t.param(ps[e.pos_emb]), tiled_rows(g, l)));
  for (std::size_t i = 0; i < e.blocks.size(); ++i)
    x = block_forward<T>(t, ps, e.blocks[i], x, cfg.heads, g, false, &key_len, nullptr, i);
  return norm(t, ps, e.ln, x);
}

// Caption-conditioned autoregressive model over grid tokens, p(x | y).
template <class T>
class ImageDecoder {
 public:
  ImageDecoder() = default;
  ImageDecoder(const NetConfig& cfg, const std::string& prefix, std::uint64_t seed, int n_cells = -1)
      : cfg_(cfg), ps_(prefix, seed), n_cells_(n_cells > 0 ? n_cells : cfg.n_cells()) {
    cfg.validate();
    const int d = cfg.width;
    enc_ = make_caption_encoder(ps_, "caption_encoder", cfg, cfg.caption_encoder_layers);
    tok_emb_ = ps_.normal("tok_emb", cfg.image_vocab() + 1, d, 0.5);  // last row = start token
    cell_pos_ = ps_.normal("cell_pos", n_cells_, d, 0.1);
    for (int l = 0; l < cfg.decoder_layers; ++l)
      blocks_.push_back(make_block(ps_, "block" + std::to_string(l), d, cfg.ff_width, true));
    ln_f_ = make_norm(ps_, "ln_f", d);
    head_ = make_dense(ps_, "head", d, cfg.image_vocab());
  }

  const NetConfig& config() const { return cfg_; }
  ParamSet<T>& params() { return ps_; }
  const ParamSet<T>& params() const { return ps_; }
  int n_cells() const { return n_cells_; }
  int start_token() const { return cfg_.image_vocab(); }

  // log p(tokens[s] | captions[s]) per pair, G x 1.
  Var<T> log_prob(Tape<T>& t, const std::vector<text::Caption>& captions,
                  const std::vector<ImageTokens>& tokens) const {
    const int g = static_cast<int>(captions.size()), n = n_cells_;
    require(static_cast<int>(tokens.size()) == g, "decoder_logprob: batch size mismatch");
    std::vector<int> key_len;
    Var<T> memory = encode_captions(t, ps_, enc_, cfg_, captions, key_len);
    CrossMemory<T> mem;
    mem.key_len = &key_len;
    for (const auto& b : blocks_) {
      auto [k, v] = cross_keys(t, ps_, b, memory);
      mem.k.push_back(k);
      mem.v.push_back(v);
    }
    std::vector<int> inputs(static_cast<std::size_t>(g * n)), targets(static_cast<std::size_t>(g * n));
    for (int s = 0; s < g; ++s) {
      const auto& tk = tokens[static_cast<std::size_t>(s)];
      require(static_cast<int>(tk.size()) == n, "decoder_logprob: wrong token count");
      for (int i = 0; i < n; ++i) {
        require(tk[static_cast<std::size_t>(i)] >= 0 && tk[static_cast<std::size_t>(i)] < cfg_.image_vocab(),
                "decoder_logprob: malformed token id");
        targets[static_cast<std::size_t>(s * n + i)] = tk[static_cast<std::size_t>(i)];
        inputs[static_cast<std::size_t>(s * n + i)] = i == 0 ? start_token() : tk[static_cast<std::size_t>(i - 1)];
      }
    }
    Var<T> x = ad::add(ad::embedding(t.param(ps_[tok_emb_]), inputs),
                       ad::embedding(t.param(ps_[cell_pos_]), tiled_rows(g, n)));
    for (std::size_t l = 0; l < blocks_.size(); ++l)
      x = block_forward(t, ps_, blocks_[l], x, cfg_.heads, g, true, nullptr, &mem, l);
    Var<T> lp = ad::log_softmax(dense(t, ps_, head_, norm(t, ps_, ln_f_, x)));
    return ad::group_sum(ad::gather(lp, std::move(targets)), g);
  }

  double decoder_logprob(const ImageTokens& x, const text::Caption& y) const {
    Tape<T> t(false);
    return static_cast<double>(log_prob(t, {y}, {x}).scalar());
  }

 private:
  NetConfig cfg_;
  ParamSet<T> ps_;
  int n_cells_ = 0;
  CaptionEncoderIx enc_;
  int tok_emb_ = -1, cell_pos_ = -1;
  std::vector<BlockIx> blocks_;
  NormIx ln_f_;
  DenseIx head_;
};

}  // namespace ias::nets

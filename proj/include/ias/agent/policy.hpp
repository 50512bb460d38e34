#pragma once

#include <string>
#include <vector>

#include "ias/agent/env.hpp"
#include "ias/nets/bundle.hpp"

namespace ias::agent {

using ad::Tape;
using ad::Var;
using nets::Matrix;

struct AgentNetConfig {
  int width = 32;
  int heads = 2;
  int ff_width = 64;
  int language_layers = 1;
  int max_utterance_length = text::kDefaultMaxLength;
  int vocab_size = 0;
  int view_size = 4;

  void validate() const {
    if (width <= 0 || heads <= 0 || width % heads != 0) throw ConfigError("agent net: width must divide into heads");
    if (ff_width <= 0 || language_layers < 1) throw ConfigError("agent net: bad widths or layers");
    if (max_utterance_length < 2 || vocab_size <= text::kReserved) throw ConfigError("agent net: bad vocabulary");
    if (view_size < 1) throw ConfigError("agent net: bad view size");
  }

  nets::NetConfig language_config() const {
    nets::NetConfig c;
    c.width = width;
    c.heads = heads;
    c.ff_width = ff_width;
    c.conv_channels = {width, width, width};
    c.max_caption_length = max_utterance_length;
    c.vocab_size = vocab_size;
    c.grid_size = view_size;
    return c;
  }
};

// Frames stacked time-major: all episodes' step 0, then step 1, ... with
// episodes sorted by decreasing length, so the episodes alive at step t are
// a prefix and frame (b, t) sits at offset(t) + b.
struct FrameBatch {
  std::vector<world::Image> views;
  std::vector<std::string> instructions;
  std::vector<int> alive;  // alive[t] = episodes with a frame at step t

  std::size_t size() const { return views.size(); }
  int offset(int t) const {
    int o = 0;
    for (int s = 0; s < t; ++s) o += alive[static_cast<std::size_t>(s)];
    return o;
  }
};

// Per-frame quantities shared by every head.
template <class T>
struct Encoded {
  Var<T> cells;     // (n * cells) x d
  Var<T> keys;      // (n * cells) x d
  Var<T> values;    // (n * cells) x d
  Var<T> pooled;    // n x d
  Var<T> text;      // n x d, instruction encoding
  Var<T> attended;  // n x d, instruction-queried cell summary
  Var<T> input;     // n x d, core input
};

enum class LanguageMode { task = 0, caption = 1 };

// Shared encoder (cell-aligned patch embedding plus word embeddings), a GRU
// memory core, movement head, autoregressive language head and the
// caption-match discriminator.
template <class T>
class AgentPolicy {
 public:
  AgentPolicy() = default;
  AgentPolicy(const AgentNetConfig& cfg, std::uint64_t seed)
      : cfg_(cfg), ps_("agent", derive_seed(seed, "agent")) {
    cfg.validate();
    const int d = cfg.width, cells = n_cells(), k = world::kCellPixels;
    patch_w_ = ps_.normal("patch.w", k * k * 3, d, 1.0 / std::sqrt(k * k * 3.0));
    patch_b_ = ps_.zeros("patch.b", 1, d);
    cell_pos_ = ps_.normal("cell_pos", cells, d, 0.1);
    cell_ = nets::make_dense(ps_, "cell", d, d);
    word_emb_ = ps_.normal("word_emb", cfg.vocab_size, d, 0.5);
    query_ = nets::make_dense(ps_, "query", d, d);
    key_ = nets::make_dense(ps_, "key", d, d);
    value_ = nets::make_dense(ps_, "value", d, d);
    core_in_ = nets::make_dense(ps_, "core_in", 3 * d, d);
    gru_x_ = nets::make_dense(ps_, "gru.x", d, 3 * d);
    gru_h_ = ps_.normal("gru.h", d, 3 * d, 1.0 / std::sqrt(static_cast<double>(d)));
    move1_ = nets::make_dense(ps_, "move1", 2 * d, cfg.ff_width);
    move2_ = nets::make_dense(ps_, "move2", cfg.ff_width, kNumActions, 0.5);
    state_row_ = nets::make_dense(ps_, "lang_state", d, d);
    mode_emb_ = ps_.normal("lang_mode", 2, d, 0.5);
    match1_ = nets::make_dense(ps_, "match1", 3 * d, cfg.ff_width);
    match2_ = nets::make_dense(ps_, "match2", cfg.ff_width, 1, 0.5);
    language_ = nets::CaptionModel<T>(cfg.language_config(), true, "agent.language", derive_seed(seed, "language"),
                                      cfg.language_layers, memory_rows());
  }

  const AgentNetConfig& config() const { return cfg_; }
  int n_cells() const { return cfg_.view_size * cfg_.view_size; }
  // Language memory per frame: cells, core state, attended summary, mode.
  int memory_rows() const { return n_cells() + 3; }
  const nets::CaptionModel<T>& language() const { return language_; }

  std::vector<nets::ParamSet<T>*> groups() { return {&ps_, &language_.params()}; }
  std::vector<const nets::ParamSet<T>*> groups() const { return {&ps_, &language_.params()}; }
  std::vector<ad::Parameter<T>*> parameters() {
    auto out = ps_.pointers();
    for (auto* p : language_.params().pointers()) out.push_back(p);
    return out;
  }
  std::uint64_t hash() const {
    Fnv1a h;
    for (const auto* g : groups()) {
      const std::uint64_t v = g->hash();
      h.update(&v, sizeof v);
    }
    return h.digest();
  }
  nets::ParamSet<T>& params() { return ps_; }
  const nets::ParamSet<T>& params() const { return ps_; }

  // Mean word embedding per text (zero for empty text), n x d.
  Var<T> encode_text(Tape<T>& t, const std::vector<std::string>& texts, const text::Vocabulary& vocab) const {
    std::vector<int> ids;
    std::vector<std::pair<int, int>> spans;
    for (const auto& s : texts) {
      const int start = static_cast<int>(ids.size());
      for (const auto& w : text::split_words(s)) ids.push_back(vocab.id(w));
      spans.emplace_back(start, static_cast<int>(ids.size()) - start);
    }
    if (ids.empty()) return t.constant(Matrix<T>::Zero(static_cast<Eigen::Index>(texts.size()), cfg_.width));
    Matrix<T> avg = Matrix<T>::Zero(static_cast<Eigen::Index>(texts.size()), static_cast<Eigen::Index>(ids.size()));
    for (std::size_t i = 0; i < spans.size(); ++i)
      for (int j = 0; j < spans[i].second; ++j)
        avg(static_cast<Eigen::Index>(i), spans[i].first + j) = T(1) / static_cast<T>(spans[i].second);
    return ad::matmul(t.constant(std::move(avg)), ad::embedding(t.param(ps_[word_emb_]), std::move(ids)));
  }

  // Query-by-text attention over each frame's cells: text row i attends to
  // the cells of frame frame_of[i].
  Var<T> attend(Tape<T>& t, const Encoded<T>& e, Var<T> text, const std::vector<int>* frame_of = nullptr) const {
    Var<T> q = nets::dense(t, ps_, query_, text);
    Var<T> k = e.keys, v = e.values;
    if (frame_of) {
      const auto rows = nets::expand_groups(*frame_of, n_cells());
      k = ad::embedding(k, rows);
      v = ad::embedding(v, rows);
    }
    return ad::attention(q, k, v, cfg_.heads, {false, static_cast<int>(text.rows())});
  }

  Encoded<T> encode(Tape<T>& t, const FrameBatch& frames, const text::Vocabulary& vocab) const {
    require(!frames.views.empty() && frames.instructions.size() == frames.views.size(), "agent encode: bad batch");
    const int n = static_cast<int>(frames.size()), side = cfg_.view_size * world::kCellPixels;
    Encoded<T> e;
    Var<T> px = t.constant(nets::image_rows<T>(frames.views));
    ad::ConvShape cs{side, side, 3, world::kCellPixels, world::kCellPixels, 0};
    Var<T> h = ad::gelu(ad::conv2d(px, t.param(ps_[patch_w_]), t.param(ps_[patch_b_]), cs));
    h = ad::add(h, ad::embedding(t.param(ps_[cell_pos_]), nets::tiled_rows(n, n_cells())));
    e.cells = ad::gelu(nets::dense(t, ps_, cell_, h));
    e.keys = nets::dense(t, ps_, key_, e.cells);
    e.values = nets::dense(t, ps_, value_, e.cells);
    e.pooled = ad::group_mean(e.cells, n);
    e.text = encode_text(t, frames.instructions, vocab);
    e.attended = attend(t, e, e.text);
    e.input = ad::gelu(nets::dense(t, ps_, core_in_, ad::concat_cols<T>({e.attended, e.text, e.pooled})));
    return e;
  }

  Var<T> gru_step(Tape<T>& t, Var<T> x, Var<T> h) const {
    const auto d = static_cast<Eigen::Index>(cfg_.width);
    Var<T> gx = nets::dense(t, ps_, gru_x_, x);
    Var<T> gh = ad::matmul(h, t.param(ps_[gru_h_]));
    Var<T> z = ad::sigmoid(ad::add(ad::slice_cols(gx, 0, d), ad::slice_cols(gh, 0, d)));
    Var<T> r = ad::sigmoid(ad::add(ad::slice_cols(gx, d, d), ad::slice_cols(gh, d, d)));
    Var<T> c = ad::tanh(ad::add(ad::slice_cols(gx, 2 * d, d), ad::mul(r, ad::slice_cols(gh, 2 * d, d))));
    return ad::add(c, ad::mul(z, ad::sub(h, c)));
  }

  // Core states for every frame of a time-major batch, n x d.
  Var<T> unroll(Tape<T>& t, const Encoded<T>& e, const FrameBatch& frames) const {
    std::vector<Var<T>> states;
    Var<T> h = t.constant(Matrix<T>::Zero(frames.alive.empty() ? 0 : frames.alive.front(), cfg_.width));
    int offset = 0;
    for (int m : frames.alive) {
      h = gru_step(t, ad::slice_rows(e.input, offset, m), ad::slice_rows(h, 0, m));
      states.push_back(h);
      offset += m;
    }
    return ad::concat_rows(states);
  }

  Var<T> move_logits(Tape<T>& t, const Encoded<T>& e, Var<T> states) const {
    Var<T> h = ad::gelu(nets::dense(t, ps_, move1_, ad::concat_cols<T>({states, e.input})));
    return nets::dense(t, ps_, move2_, h);
  }

  // Language memory with one group per (mode, frame); group index is
  // m * n + frame for modes[m].
  Var<T> language_memory(Tape<T>& t, const Encoded<T>& e, Var<T> states, const std::vector<LanguageMode>& modes) const {
    const int n = static_cast<int>(states.rows()), c = n_cells();
    Var<T> table = ad::concat_rows<T>({e.cells, nets::dense(t, ps_, state_row_, states), e.attended,
                                       t.param(ps_[mode_emb_])});
    std::vector<int> rows;
    rows.reserve(static_cast<std::size_t>(modes.size() * n * memory_rows()));
    for (auto mode : modes)
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < c; ++j) rows.push_back(i * c + j);
        rows.push_back(n * c + i);
        rows.push_back(n * c + n + i);
        rows.push_back(n * c + 2 * n + static_cast<int>(mode));
      }
    return ad::embedding(table, std::move(rows));
  }

  // Caption-match logit for (frame_of[i], captions[i]) pairs.
  Var<T> match_logits(Tape<T>& t, const Encoded<T>& e, const std::vector<std::string>& captions,
                      const std::vector<int>& frame_of, const text::Vocabulary& vocab) const {
    Var<T> u = encode_text(t, captions, vocab);
    Var<T> a = attend(t, e, u, &frame_of);
    Var<T> pooled = ad::embedding(e.pooled, frame_of);
    Var<T> h = ad::gelu(nets::dense(t, ps_, match1_, ad::concat_cols<T>({a, u, pooled})));
    return nets::dense(t, ps_, match2_, h);
  }

 private:
  AgentNetConfig cfg_;
  nets::ParamSet<T> ps_;
  int patch_w_ = -1, patch_b_ = -1, cell_pos_ = -1, word_emb_ = -1, gru_h_ = -1, mode_emb_ = -1;
  nets::DenseIx cell_, query_, key_, value_, core_in_, gru_x_, move1_, move2_, state_row_, match1_, match2_;
  nets::CaptionModel<T> language_;
};

}  // namespace ias::agent

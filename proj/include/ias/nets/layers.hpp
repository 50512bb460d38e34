#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "ias/ad/ops.hpp"
#include "ias/nets/params.hpp"

namespace ias::nets {

template <class T>
using Var = ad::Var<T>;
template <class T>
using Tape = ad::Tape<T>;

struct DenseIx {
  int w = -1, b = -1;
};

template <class T>
DenseIx make_dense(ParamSet<T>& ps, const std::string& name, int in, int out, double gain = 1.0) {
  return {ps.normal(name + ".w", in, out, gain / std::sqrt(static_cast<double>(in))),
          ps.zeros(name + ".b", 1, out)};
}

template <class T>
Var<T> dense(Tape<T>& t, const ParamSet<T>& ps, DenseIx ix, Var<T> x) {
  return ad::linear(x, t.param(ps[ix.w]), t.param(ps[ix.b]));
}

struct NormIx {
  int gain = -1, bias = -1;
};

template <class T>
NormIx make_norm(ParamSet<T>& ps, const std::string& name, int width) {
  return {ps.ones(name + ".gain", 1, width), ps.zeros(name + ".bias", 1, width)};
}

template <class T>
Var<T> norm(Tape<T>& t, const ParamSet<T>& ps, NormIx ix, Var<T> x) {
  return ad::layer_norm(x, t.param(ps[ix.gain]), t.param(ps[ix.bias]));
}

// Keys and values a block cross-attends to, one group per query sequence.
template <class T>
struct CrossMemory {
  std::vector<Var<T>> k, v;  // per layer
  const std::vector<int>* key_len = nullptr;
};

// Per-layer self-attention cache for incremental decoding: rows
// group * capacity + position.
template <class T>
struct DecodeCache {
  std::vector<Matrix<T>> k, v;
  int capacity = 0;
};

// Pre-norm transformer block with optional cross-attention.
struct BlockIx {
  NormIx ln1;
  DenseIx qkv, proj;
  bool cross = false;
  NormIx ln_cross;
  DenseIx q_cross, kv_cross, proj_cross;
  NormIx ln2;
  DenseIx ff1, ff2;
};

template <class T>
BlockIx make_block(ParamSet<T>& ps, const std::string& name, int width, int ff, bool cross) {
  BlockIx b;
  b.ln1 = make_norm(ps, name + ".ln1", width);
  b.qkv = make_dense(ps, name + ".qkv", width, 3 * width);
  b.proj = make_dense(ps, name + ".proj", width, width, 0.5);
  b.cross = cross;
  if (cross) {
    b.ln_cross = make_norm(ps, name + ".ln_cross", width);
    b.q_cross = make_dense(ps, name + ".q_cross", width, width);
    b.kv_cross = make_dense(ps, name + ".kv_cross", width, 2 * width);
    b.proj_cross = make_dense(ps, name + ".proj_cross", width, width, 0.5);
  }
  b.ln2 = make_norm(ps, name + ".ln2", width);
  b.ff1 = make_dense(ps, name + ".ff1", width, ff);
  b.ff2 = make_dense(ps, name + ".ff2", ff, width, 0.5);
  return b;
}

// Projects a memory (groups * m) x width into the block's cross keys and
// values; `rows` optionally repeats memory groups for several queries.
template <class T>
std::pair<Var<T>, Var<T>> cross_keys(Tape<T>& t, const ParamSet<T>& ps, const BlockIx& b, Var<T> memory,
                                     const std::vector<int>* rows = nullptr) {
  Var<T> kv = dense(t, ps, b.kv_cross, memory);
  if (rows) kv = ad::embedding(kv, *rows);
  const auto w = memory.cols();
  return {ad::slice_cols(kv, 0, w), ad::slice_cols(kv, w, w)};
}

template <class T>
Var<T> block_tail(Tape<T>& t, const ParamSet<T>& ps, const BlockIx& b, Var<T> x, int heads, int groups,
                  const CrossMemory<T>* mem, std::size_t layer) {
  if (b.cross) {
    require(mem != nullptr, "block: cross-attention memory missing");
    Var<T> h = norm(t, ps, b.ln_cross, x);
    Var<T> q = dense(t, ps, b.q_cross, h);
    ad::AttentionMask m;
    m.groups = groups;
    m.key_len = mem->key_len;
    Var<T> a = ad::attention(q, mem->k[layer], mem->v[layer], heads, m);
    x = ad::add(x, dense(t, ps, b.proj_cross, a));
  }
  Var<T> h = norm(t, ps, b.ln2, x);
  h = dense(t, ps, b.ff2, ad::gelu(dense(t, ps, b.ff1, h)));
  return ad::add(x, h);
}

// Full-sequence forward over `groups` stacked sequences of equal length.
template <class T>
Var<T> block_forward(Tape<T>& t, const ParamSet<T>& ps, const BlockIx& b, Var<T> x, int heads, int groups,
                     bool causal, const std::vector<int>* self_key_len, const CrossMemory<T>* mem,
                     std::size_t layer) {
  const auto w = x.cols();
  Var<T> h = norm(t, ps, b.ln1, x);
  Var<T> qkv = dense(t, ps, b.qkv, h);
  ad::AttentionMask m;
  m.causal = causal;
  m.groups = groups;
  m.key_len = self_key_len;
  Var<T> a = ad::attention(ad::slice_cols(qkv, 0, w), ad::slice_cols(qkv, w, w), ad::slice_cols(qkv, 2 * w, w),
                           heads, m);
  x = ad::add(x, dense(t, ps, b.proj, a));
  return block_tail(t, ps, b, x, heads, groups, mem, layer);
}

// One causal step: x holds the newest position of every group (groups x
// width). Keys and values are appended to the cache at `pos`.
template <class T>
Var<T> block_step(Tape<T>& t, const ParamSet<T>& ps, const BlockIx& b, Var<T> x, int heads,
                  DecodeCache<T>& cache, std::size_t layer, int pos, const CrossMemory<T>* mem) {
  const auto w = x.cols();
  const int groups = static_cast<int>(x.rows());
  Var<T> h = norm(t, ps, b.ln1, x);
  const Matrix<T>& qkv = dense(t, ps, b.qkv, h).value();
  Matrix<T>& kc = cache.k[layer];
  Matrix<T>& vc = cache.v[layer];
  for (int g = 0; g < groups; ++g) {
    kc.row(g * cache.capacity + pos) = qkv.row(g).segment(w, w);
    vc.row(g * cache.capacity + pos) = qkv.row(g).segment(2 * w, w);
  }
  ad::AttentionMask m;
  m.causal = true;
  m.groups = groups;
  m.offset = pos;
  Var<T> q = t.constant(qkv.leftCols(w));
  Var<T> a = ad::attention(q, t.reference(kc), t.reference(vc), heads, m);
  x = ad::add(x, dense(t, ps, b.proj, a));
  return block_tail(t, ps, b, x, heads, groups, mem, layer);
}

}  // namespace ias::nets

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "ias/ad/tape.hpp"

// Differentiable operations over Tape nodes. Every op computes its value
// eagerly and records a backward closure only when some input needs a grad.
namespace ias::ad {

namespace detail {

template <class T>
Tape<T>& same_tape(Var<T> a, Var<T> b) {
  require(a.tape != nullptr && a.tape == b.tape, "ops: variables live on different tapes");
  return *a.tape;
}

}  // namespace detail

template <class T>
Var<T> matmul(Var<T> a, Var<T> b) {
  Tape<T>& t = detail::same_tape(a, b);
  require(a.cols() == b.rows(), "matmul: inner dimension mismatch");
  Matrix<T> out(a.rows(), b.cols());
  out.noalias() = a.value() * b.value();
  const bool ng = t.needs_grad(a.id) || t.needs_grad(b.id);
  return t.push(std::move(out), ng, [a, b](Tape<T>& tp, int self) {
    const Matrix<T>& g = tp.grad(self);
    if (tp.needs_grad(a.id)) tp.grad(a.id).noalias() += g * tp.value(b.id).transpose();
    if (tp.needs_grad(b.id)) tp.grad(b.id).noalias() += tp.value(a.id).transpose() * g;
  });
}

// a * b^T
template <class T>
Var<T> matmul_nt(Var<T> a, Var<T> b) {
  Tape<T>& t = detail::same_tape(a, b);
  require(a.cols() == b.cols(), "matmul_nt: inner dimension mismatch");
  Matrix<T> out(a.rows(), b.rows());
  out.noalias() = a.value() * b.value().transpose();
  const bool ng = t.needs_grad(a.id) || t.needs_grad(b.id);
  return t.push(std::move(out), ng, [a, b](Tape<T>& tp, int self) {
    const Matrix<T>& g = tp.grad(self);
    if (tp.needs_grad(a.id)) tp.grad(a.id).noalias() += g * tp.value(b.id);
    if (tp.needs_grad(b.id)) tp.grad(b.id).noalias() += g.transpose() * tp.value(a.id);
  });
}

// x * w + bias, bias broadcast over rows.
template <class T>
Var<T> linear(Var<T> x, Var<T> w, Var<T> bias) {
  Tape<T>& t = detail::same_tape(x, w);
  require(x.cols() == w.rows(), "linear: input width mismatch");
  require(bias.rows() == 1 && bias.cols() == w.cols(), "linear: bias shape mismatch");
  Matrix<T> out(x.rows(), w.cols());
  out.noalias() = x.value() * w.value();
  out.rowwise() += bias.value().row(0);
  const bool ng = t.needs_grad(x.id) || t.needs_grad(w.id) || t.needs_grad(bias.id);
  return t.push(std::move(out), ng, [x, w, bias](Tape<T>& tp, int self) {
    const Matrix<T>& g = tp.grad(self);
    if (tp.needs_grad(x.id)) tp.grad(x.id).noalias() += g * tp.value(w.id).transpose();
    if (tp.needs_grad(w.id)) tp.grad(w.id).noalias() += tp.value(x.id).transpose() * g;
    if (tp.needs_grad(bias.id)) tp.grad(bias.id).row(0) += g.colwise().sum();
  });
}

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  Tape<T>& t = detail::same_tape(a, b);
  require(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
  Matrix<T> out = a.value() + b.value();
  const bool ng = t.needs_grad(a.id) || t.needs_grad(b.id);
  return t.push(std::move(out), ng, [a, b](Tape<T>& tp, int self) {
    const Matrix<T>& g = tp.grad(self);
    if (tp.needs_grad(a.id)) tp.grad(a.id) += g;
    if (tp.needs_grad(b.id)) tp.grad(b.id) += g;
  });
}

template <class T>
Var<T> sub(Var<T> a, Var<T> b) {
  Tape<T>& t = detail::same_tape(a, b);
  require(a.rows() == b.rows() && a.cols() == b.cols(), "sub: shape mismatch");
  Matrix<T> out = a.value() - b.value();
  const bool ng = t.needs_grad(a.id) || t.needs_grad(b.id);
  return t.push(std::move(out), ng, [a, b](Tape<T>& tp, int self) {
    const Matrix<T>& g = tp.grad(self);
    if (tp.needs_grad(a.id)) tp.grad(a.id) += g;
    if (tp.needs_grad(b.id)) tp.grad(b.id) -= g;
  });
}

// Elementwise product.
template <class T>
Var<T> mul(Var<T> a, Var<T> b) {
  Tape<T>& t = detail::same_tape(a, b);
  require(a.rows() == b.rows() && a.cols() == b.cols(), "mul: shape mismatch");
  Matrix<T> out = a.value().cwiseProduct(b.value());
  const bool ng = t.needs_grad(a.id) || t.needs_grad(b.id);
  return t.push(std::move(out), ng, [a, b](Tape<T>& tp, int self) {
    const Matrix<T>& g = tp.grad(self);
    if (tp.needs_grad(a.id)) tp.grad(a.id) += g.cwiseProduct(tp.value(b.id));
    if (tp.needs_grad(b.id)) tp.grad(b.id) += g.cwiseProduct(tp.value(a.id));
  });
}

// Row vector broadcast over the rows of a.
template <class T>
Var<T> add_row(Var<T> a, Var<T> row) {
  Tape<T>& t = detail::same_tape(a, row);
  require(row.rows() == 1 && row.cols() == a.cols(), "add_row: shape mismatch");
  Matrix<T> out = a.value();
  out.rowwise() += row.value().row(0);
  const bool ng = t.needs_grad(a.id) || t.needs_grad(row.id);
  return t.push(std::move(out), ng, [a, row](Tape<T>& tp, int self) {
    const Matrix<T>& g = tp.grad(self);
    if (tp.needs_grad(a.id)) tp.grad(a.id) += g;
    if (tp.needs_grad(row.id)) tp.grad(row.id).row(0) += g.colwise().sum();
  });
}

template <class T>
Var<T> scale(Var<T> a, T s) {
  Tape<T>& t = *a.tape;
  Matrix<T> out = a.value() * s;
  return t.push(std::move(out), t.needs_grad(a.id), [a, s](Tape<T>& tp, int self) {
    tp.grad(a.id) += tp.grad(self) * s;
  });
}

template <class T>
Var<T> add_scalar(Var<T> a, T s) {
  Tape<T>& t = *a.tape;
  Matrix<T> out = a.value().array() + s;
  return t.push(std::move(out), t.needs_grad(a.id), [a](Tape<T>& tp, int self) {
    tp.grad(a.id) += tp.grad(self);
  });
}

// Elementwise product with a constant matrix.
template <class T>
Var<T> mul_const(Var<T> a, const Matrix<T>& c) {
  Tape<T>& t = *a.tape;
  require(a.rows() == c.rows() && a.cols() == c.cols(), "mul_const: shape mismatch");
  Matrix<T> out = a.value().cwiseProduct(c);
  return t.push(std::move(out), t.needs_grad(a.id), [a, c](Tape<T>& tp, int self) {
    tp.grad(a.id) += tp.grad(self).cwiseProduct(c);
  });
}

template <class T>
Var<T> add_const(Var<T> a, const Matrix<T>& c) {
  Tape<T>& t = *a.tape;
  require(a.rows() == c.rows() && a.cols() == c.cols(), "add_const: shape mismatch");
  Matrix<T> out = a.value() + c;
  return t.push(std::move(out), t.needs_grad(a.id), [a](Tape<T>& tp, int self) {
    tp.grad(a.id) += tp.grad(self);
  });
}

namespace detail {

template <class T>
constexpr T kGeluC = static_cast<T>(0.7978845608028654);  // sqrt(2/pi)
template <class T>
constexpr T kGeluA = static_cast<T>(0.044715);

}  // namespace detail

// tanh approximation of GELU; smooth everywhere, which keeps finite
// difference checks well behaved.
template <class T>
Var<T> gelu(Var<T> x) {
  Tape<T>& t = *x.tape;
  const auto xa = x.value().array();
  const T c = detail::kGeluC<T>, a = detail::kGeluA<T>;
  const Matrix<T> th = (c * (xa + a * xa.cube())).tanh().matrix();
  Matrix<T> out = (T(0.5) * xa * (T(1) + th.array())).matrix();
  if (!t.needs_grad(x.id)) return t.push(std::move(out), false, nullptr);
  Matrix<T> deriv = (T(0.5) * (T(1) + th.array()) +
                     T(0.5) * xa * (T(1) - th.array().square()) * c * (T(1) + T(3) * a * xa.square()))
                        .matrix();
  return t.push(std::move(out), true, [x, deriv = std::move(deriv)](Tape<T>& tp, int self) {
    tp.grad(x.id) += tp.grad(self).cwiseProduct(deriv);
  });
}

template <class T>
Var<T> tanh(Var<T> x) {
  Tape<T>& t = *x.tape;
  Matrix<T> out = x.value().array().tanh();
  return t.push(out, t.needs_grad(x.id), [x, out](Tape<T>& tp, int self) {
    tp.grad(x.id).array() += tp.grad(self).array() * (T(1) - out.array().square());
  });
}

template <class T>
Var<T> sigmoid(Var<T> x) {
  Tape<T>& t = *x.tape;
  Matrix<T> out = (T(1) + (-x.value().array()).exp()).inverse();
  return t.push(out, t.needs_grad(x.id), [x, out](Tape<T>& tp, int self) {
    tp.grad(x.id).array() += tp.grad(self).array() * out.array() * (T(1) - out.array());
  });
}

// log(sigmoid(x)), stable for large |x|.
template <class T>
Var<T> log_sigmoid(Var<T> x) {
  Tape<T>& t = *x.tape;
  const Matrix<T>& xv = x.value();
  Matrix<T> out(xv.rows(), xv.cols());
  for (Eigen::Index i = 0; i < xv.size(); ++i) {
    const T v = xv.data()[i];
    out.data()[i] = v >= T(0) ? -std::log1p(std::exp(-v)) : v - std::log1p(std::exp(v));
  }
  return t.push(std::move(out), t.needs_grad(x.id), [x](Tape<T>& tp, int self) {
    const Matrix<T>& xv2 = tp.value(x.id);
    Matrix<T> s = (T(1) + xv2.array().exp()).inverse();  // 1 - sigmoid(x)
    tp.grad(x.id) += tp.grad(self).cwiseProduct(s);
  });
}

template <class T>
Var<T> exp(Var<T> x) {
  Tape<T>& t = *x.tape;
  Matrix<T> out = x.value().array().exp();
  return t.push(out, t.needs_grad(x.id), [x, out](Tape<T>& tp, int self) {
    tp.grad(x.id) += tp.grad(self).cwiseProduct(out);
  });
}

template <class T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, T eps = T(1e-5)) {
  Tape<T>& t = detail::same_tape(x, gain);
  const Eigen::Index n = x.rows(), d = x.cols();
  require(gain.cols() == d && bias.cols() == d, "layer_norm: parameter width mismatch");
  const Matrix<T>& xv = x.value();
  Matrix<T> xhat(n, d);
  Eigen::Matrix<T, Eigen::Dynamic, 1> inv_std(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const T mu = xv.row(i).mean();
    const T var = (xv.row(i).array() - mu).square().mean();
    inv_std(i) = T(1) / std::sqrt(var + eps);
    xhat.row(i) = (xv.row(i).array() - mu) * inv_std(i);
  }
  Matrix<T> out = xhat;
  out.array().rowwise() *= gain.value().row(0).array();
  out.rowwise() += bias.value().row(0);
  const bool ng = t.needs_grad(x.id) || t.needs_grad(gain.id) || t.needs_grad(bias.id);
  return t.push(std::move(out), ng,
                [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape<T>& tp,
                                                                                     int self) {
                  const Matrix<T>& g = tp.grad(self);
                  if (tp.needs_grad(gain.id))
                    tp.grad(gain.id).row(0) += g.cwiseProduct(xhat).colwise().sum();
                  if (tp.needs_grad(bias.id)) tp.grad(bias.id).row(0) += g.colwise().sum();
                  if (tp.needs_grad(x.id)) {
                    Matrix<T> dxhat = g;
                    dxhat.array().rowwise() *= tp.value(gain.id).row(0).array();
                    Matrix<T>& gx = tp.grad(x.id);
                    for (Eigen::Index i = 0; i < dxhat.rows(); ++i) {
                      const T m1 = dxhat.row(i).mean();
                      const T m2 = dxhat.row(i).cwiseProduct(xhat.row(i)).mean();
                      gx.row(i).array() +=
                          inv_std(i) * (dxhat.row(i).array() - m1 - xhat.row(i).array() * m2);
                    }
                  }
                });
}

namespace detail {

template <class T>
void log_softmax_rows(const Matrix<T>& x, Matrix<T>& out) {
  out.resize(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const T m = x.row(i).maxCoeff();
    if (m == -std::numeric_limits<T>::infinity()) {
      out.row(i).setConstant(-std::numeric_limits<T>::infinity());
      continue;
    }
    const T lse = m + std::log((x.row(i).array() - m).exp().sum());
    out.row(i) = x.row(i).array() - lse;
  }
}

}  // namespace detail

// Row-wise log-softmax. Entries equal to -inf stay -inf and get no gradient.
template <class T>
Var<T> log_softmax(Var<T> x) {
  Tape<T>& t = *x.tape;
  Matrix<T> out;
  detail::log_softmax_rows(x.value(), out);
  return t.push(out, t.needs_grad(x.id), [x, out](Tape<T>& tp, int self) {
    const Matrix<T>& g = tp.grad(self);
    Matrix<T> p = out.array().exp();
    Eigen::Matrix<T, Eigen::Dynamic, 1> gs = g.rowwise().sum();
    Matrix<T> dx = g - (p.array().colwise() * gs.array()).matrix();
    tp.grad(x.id) += dx;
  });
}

template <class T>
Var<T> softmax(Var<T> x) {
  Tape<T>& t = *x.tape;
  Matrix<T> out;
  detail::log_softmax_rows(x.value(), out);
  out = out.array().exp();
  return t.push(out, t.needs_grad(x.id), [x, out](Tape<T>& tp, int self) {
    const Matrix<T>& g = tp.grad(self);
    Eigen::Matrix<T, Eigen::Dynamic, 1> dot = g.cwiseProduct(out).rowwise().sum();
    tp.grad(x.id).array() += out.array() * (g.array().colwise() - dot.array());
  });
}

// Row-wise log-sum-exp, n x 1.
template <class T>
Var<T> logsumexp_rows(Var<T> x) {
  Tape<T>& t = *x.tape;
  Matrix<T> out(x.rows(), 1);
  Matrix<T> ls;
  detail::log_softmax_rows(x.value(), ls);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const T m = x.value().row(i).maxCoeff();
    out(i, 0) = m == -std::numeric_limits<T>::infinity()
                    ? m
                    : m + std::log((x.value().row(i).array() - m).exp().sum());
  }
  Matrix<T> p = ls.array().exp();
  return t.push(std::move(out), t.needs_grad(x.id), [x, p = std::move(p)](Tape<T>& tp, int self) {
    const Matrix<T>& g = tp.grad(self);
    tp.grad(x.id) += (p.array().colwise() * g.col(0).array()).matrix();
  });
}

// out(i, 0) = x(i, index[i]).
template <class T>
Var<T> gather(Var<T> x, std::vector<int> index) {
  Tape<T>& t = *x.tape;
  require(static_cast<Eigen::Index>(index.size()) == x.rows(), "gather: one index per row");
  Matrix<T> out(x.rows(), 1);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    require(index[i] >= 0 && index[i] < x.cols(), "gather: index out of range");
    out(i, 0) = x.value()(i, index[i]);
  }
  return t.push(std::move(out), t.needs_grad(x.id),
                [x, index = std::move(index)](Tape<T>& tp, int self) {
                  const Matrix<T>& g = tp.grad(self);
                  Matrix<T>& gx = tp.grad(x.id);
                  for (std::size_t i = 0; i < index.size(); ++i)
                    gx(static_cast<Eigen::Index>(i), index[i]) += g(static_cast<Eigen::Index>(i), 0);
                });
}

template <class T>
Var<T> sum(Var<T> x) {
  Tape<T>& t = *x.tape;
  Matrix<T> out(1, 1);
  out(0, 0) = x.value().sum();
  return t.push(std::move(out), t.needs_grad(x.id), [x](Tape<T>& tp, int self) {
    tp.grad(x.id).array() += tp.grad(self)(0, 0);
  });
}

template <class T>
Var<T> mean(Var<T> x) {
  return scale(sum(x), T(1) / static_cast<T>(x.value().size()));
}

// Column means, 1 x cols.
template <class T>
Var<T> mean_rows(Var<T> x) {
  Tape<T>& t = *x.tape;
  const T inv = T(1) / static_cast<T>(x.rows());
  Matrix<T> out = x.value().colwise().sum() * inv;
  return t.push(std::move(out), t.needs_grad(x.id), [x, inv](Tape<T>& tp, int self) {
    tp.grad(x.id).rowwise() += tp.grad(self).row(0) * inv;
  });
}

// Rows of `table` selected by ids.
template <class T>
Var<T> embedding(Var<T> table, std::vector<int> ids) {
  Tape<T>& t = *table.tape;
  const Matrix<T>& tv = table.value();
  Matrix<T> out(static_cast<Eigen::Index>(ids.size()), tv.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    require(ids[i] >= 0 && ids[i] < tv.rows(), "embedding: id out of range");
    out.row(static_cast<Eigen::Index>(i)) = tv.row(ids[i]);
  }
  return t.push(std::move(out), t.needs_grad(table.id),
                [table, ids = std::move(ids)](Tape<T>& tp, int self) {
                  const Matrix<T>& g = tp.grad(self);
                  Matrix<T>& gt = tp.grad(table.id);
                  for (std::size_t i = 0; i < ids.size(); ++i)
                    gt.row(ids[i]) += g.row(static_cast<Eigen::Index>(i));
                });
}

template <class T>
Var<T> slice_rows(Var<T> x, Eigen::Index begin, Eigen::Index count) {
  Tape<T>& t = *x.tape;
  require(begin >= 0 && count >= 0 && begin + count <= x.rows(), "slice_rows: out of range");
  Matrix<T> out = x.value().middleRows(begin, count);
  return t.push(std::move(out), t.needs_grad(x.id), [x, begin, count](Tape<T>& tp, int self) {
    tp.grad(x.id).middleRows(begin, count) += tp.grad(self);
  });
}

template <class T>
Var<T> slice_cols(Var<T> x, Eigen::Index begin, Eigen::Index count) {
  Tape<T>& t = *x.tape;
  require(begin >= 0 && count >= 0 && begin + count <= x.cols(), "slice_cols: out of range");
  Matrix<T> out = x.value().middleCols(begin, count);
  return t.push(std::move(out), t.needs_grad(x.id), [x, begin, count](Tape<T>& tp, int self) {
    tp.grad(x.id).middleCols(begin, count) += tp.grad(self);
  });
}

template <class T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
  require(!parts.empty(), "concat_rows: no inputs");
  Tape<T>& t = *parts.front().tape;
  Eigen::Index rows = 0;
  const Eigen::Index cols = parts.front().cols();
  bool ng = false;
  for (const auto& p : parts) {
    require(p.tape == &t && p.cols() == cols, "concat_rows: width mismatch");
    rows += p.rows();
    ng = ng || t.needs_grad(p.id);
  }
  Matrix<T> out(rows, cols);
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  return t.push(std::move(out), ng, [parts](Tape<T>& tp, int self) {
    const Matrix<T>& g = tp.grad(self);
    Eigen::Index r2 = 0;
    for (const auto& p : parts) {
      const Eigen::Index n = tp.value(p.id).rows();
      if (tp.needs_grad(p.id)) tp.grad(p.id) += g.middleRows(r2, n);
      r2 += n;
    }
  });
}

template <class T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  Tape<T>& t = *parts.front().tape;
  Eigen::Index cols = 0;
  const Eigen::Index rows = parts.front().rows();
  bool ng = false;
  for (const auto& p : parts) {
    require(p.tape == &t && p.rows() == rows, "concat_cols: height mismatch");
    cols += p.cols();
    ng = ng || t.needs_grad(p.id);
  }
  Matrix<T> out(rows, cols);
  Eigen::Index c = 0;
  for (const auto& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  return t.push(std::move(out), ng, [parts](Tape<T>& tp, int self) {
    const Matrix<T>& g = tp.grad(self);
    Eigen::Index c2 = 0;
    for (const auto& p : parts) {
      const Eigen::Index n = tp.value(p.id).cols();
      if (tp.needs_grad(p.id)) tp.grad(p.id) += g.middleCols(c2, n);
      c2 += n;
    }
  });
}

// Row-major reinterpretation.
template <class T>
Var<T> reshape(Var<T> x, Eigen::Index rows, Eigen::Index cols) {
  Tape<T>& t = *x.tape;
  require(rows * cols == x.value().size(), "reshape: size mismatch");
  Matrix<T> out = Eigen::Map<const Matrix<T>>(x.value().data(), rows, cols);
  return t.push(std::move(out), t.needs_grad(x.id), [x](Tape<T>& tp, int self) {
    Matrix<T>& gx = tp.grad(x.id);
    Eigen::Map<Matrix<T>>(gx.data(), tp.grad(self).rows(), tp.grad(self).cols()) += tp.grad(self);
  });
}

// Sums consecutive blocks of `x.rows() / groups` rows: groups x cols.
template <class T>
Var<T> group_sum(Var<T> x, int groups) {
  Tape<T>& t = *x.tape;
  require(groups > 0 && x.rows() % groups == 0, "group_sum: rows not divisible by groups");
  const Eigen::Index n = x.rows() / groups;
  Matrix<T> out(groups, x.cols());
  for (int g = 0; g < groups; ++g) out.row(g) = x.value().middleRows(g * n, n).colwise().sum();
  return t.push(std::move(out), t.needs_grad(x.id), [x, n, groups](Tape<T>& tp, int self) {
    const Matrix<T>& gr = tp.grad(self);
    Matrix<T>& gx = tp.grad(x.id);
    for (int g = 0; g < groups; ++g) gx.middleRows(g * n, n).rowwise() += gr.row(g);
  });
}

template <class T>
Var<T> group_mean(Var<T> x, int groups) {
  return scale(group_sum(x, groups), T(groups) / static_cast<T>(x.rows()));
}

// Each row divided by its Euclidean norm.
template <class T>
Var<T> normalize_rows(Var<T> x, T eps = T(1e-12)) {
  Tape<T>& t = *x.tape;
  Eigen::Matrix<T, Eigen::Dynamic, 1> inv = (x.value().rowwise().squaredNorm().array() + eps).rsqrt();
  Matrix<T> out = x.value().array().colwise() * inv.array();
  return t.push(out, t.needs_grad(x.id), [x, out, inv](Tape<T>& tp, int self) {
    const Matrix<T>& g = tp.grad(self);
    Eigen::Matrix<T, Eigen::Dynamic, 1> dot = g.cwiseProduct(out).rowwise().sum();
    tp.grad(x.id).array() += (g.array() - out.array().colwise() * dot.array()).colwise() * inv.array();
  });
}

// Multi-head scaled dot-product attention over `groups` independent
// sequences stacked by rows: q is (groups*n) x d, k and v are (groups*m) x d.
// With `causal`, query i of a group sees keys j <= i + offset.
struct AttentionMask {
  bool causal = false;
  int groups = 1;
  // Causal offset; negative means m - n.
  Eigen::Index offset = -1;
  // Optional per-group count of visible keys (padding mask).
  const std::vector<int>* key_len = nullptr;
};

template <class T>
Var<T> attention(Var<T> q, Var<T> k, Var<T> v, int heads, AttentionMask mask = {}) {
  const int groups = mask.groups;
  Eigen::Index offset = mask.offset;
  const bool causal = mask.causal;
  Tape<T>& t = detail::same_tape(q, k);
  const Eigen::Index d = q.cols();
  require(groups > 0 && q.rows() % groups == 0 && k.rows() % groups == 0, "attention: bad group count");
  require(!mask.key_len || static_cast<int>(mask.key_len->size()) == groups, "attention: key_len size");
  const Eigen::Index n = q.rows() / groups, m = k.rows() / groups;
  require(k.cols() == d && v.cols() == d && v.rows() == k.rows(), "attention: shape mismatch");
  require(heads > 0 && d % heads == 0, "attention: width not divisible by heads");
  const Eigen::Index dh = d / heads;
  const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(dh));
  if (offset < 0) offset = m - n;
  const Matrix<T>& qv = q.value();
  const Matrix<T>& kv = k.value();
  const Matrix<T>& vv = v.value();
  const bool ng = t.needs_grad(q.id) || t.needs_grad(k.id) || t.needs_grad(v.id);
  // probs[g * heads + h] is n x m.
  std::vector<Matrix<T>> probs(static_cast<std::size_t>(groups * heads));
  Matrix<T> out(q.rows(), d);
  Matrix<T> s(n, m);
  for (int g = 0; g < groups; ++g)
    for (int h = 0; h < heads; ++h) {
      s.noalias() = qv.block(g * n, h * dh, n, dh) * kv.block(g * m, h * dh, m, dh).transpose();
      s *= inv_sqrt;
      if (causal)
        for (Eigen::Index i = 0; i < n; ++i)
          for (Eigen::Index j = std::max<Eigen::Index>(i + offset + 1, 0); j < m; ++j)
            s(i, j) = -std::numeric_limits<T>::infinity();
      if (mask.key_len) {
        const Eigen::Index len = (*mask.key_len)[static_cast<std::size_t>(g)];
        if (len < m) s.rightCols(m - len).setConstant(-std::numeric_limits<T>::infinity());
      }
      Matrix<T>& p = probs[static_cast<std::size_t>(g * heads + h)];
      detail::log_softmax_rows(s, p);
      p = p.array().exp();
      out.block(g * n, h * dh, n, dh).noalias() = p * vv.block(g * m, h * dh, m, dh);
    }
  if (!ng) return t.push(std::move(out), false, nullptr);
  return t.push(std::move(out), true,
                [q, k, v, heads, groups, n, m, dh, inv_sqrt, probs = std::move(probs)](Tape<T>& tp,
                                                                                     int self) {
                  const Matrix<T>& g = tp.grad(self);
                  const Matrix<T>& qv2 = tp.value(q.id);
                  const Matrix<T>& kv2 = tp.value(k.id);
                  const Matrix<T>& vv2 = tp.value(v.id);
                  const bool gq = tp.needs_grad(q.id), gk = tp.needs_grad(k.id),
                             gv = tp.needs_grad(v.id);
                  Matrix<T> dp(n, m), ds(n, m);
                  Eigen::Matrix<T, Eigen::Dynamic, 1> rs(n);
                  for (int gr = 0; gr < groups; ++gr)
                    for (int h = 0; h < heads; ++h) {
                      const Matrix<T>& p = probs[static_cast<std::size_t>(gr * heads + h)];
                      const auto go = g.block(gr * n, h * dh, n, dh);
                      if (gv) tp.grad(v.id).block(gr * m, h * dh, m, dh).noalias() += p.transpose() * go;
                      if (!gq && !gk) continue;
                      dp.noalias() = go * vv2.block(gr * m, h * dh, m, dh).transpose();
                      rs = dp.cwiseProduct(p).rowwise().sum();
                      ds = (p.array() * (dp.array().colwise() - rs.array())).matrix() * inv_sqrt;
                      if (gq)
                        tp.grad(q.id).block(gr * n, h * dh, n, dh).noalias() +=
                            ds * kv2.block(gr * m, h * dh, m, dh);
                      if (gk)
                        tp.grad(k.id).block(gr * m, h * dh, m, dh).noalias() +=
                            ds.transpose() * qv2.block(gr * n, h * dh, n, dh);
                    }
                });
}

// 2-D convolution on a batch of channels-last images, each stored as
// (height*width) rows of channels and stacked by rows. kernel is
// (k*k*cin) x cout with (ky, kx, c) ordering; zero padding.
struct ConvShape {
  int height = 0, width = 0, in_channels = 0, kernel = 3, stride = 1, pad = 1;
  int out_height() const { return (height + 2 * pad - kernel) / stride + 1; }
  int out_width() const { return (width + 2 * pad - kernel) / stride + 1; }
};

template <class T>
Var<T> conv2d(Var<T> x, Var<T> kernel, Var<T> bias, ConvShape s) {
  Tape<T>& t = detail::same_tape(x, kernel);
  const int hw = s.height * s.width;
  require(hw > 0 && x.rows() % hw == 0 && x.cols() == s.in_channels, "conv2d: input shape mismatch");
  const int batch = static_cast<int>(x.rows() / hw);
  const int kk = s.kernel * s.kernel * s.in_channels;
  require(kernel.rows() == kk, "conv2d: kernel shape mismatch");
  const int ho = s.out_height(), wo = s.out_width(), c = s.in_channels;
  const Eigen::Index out_hw = static_cast<Eigen::Index>(ho) * wo;
  Matrix<T> cols = Matrix<T>::Zero(batch * out_hw, kk);
  const Matrix<T>& xv = x.value();
  for (int b = 0; b < batch; ++b)
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox) {
        T* row = cols.data() + (b * out_hw + oy * wo + ox) * kk;
        for (int ky = 0; ky < s.kernel; ++ky) {
          const int iy = oy * s.stride + ky - s.pad;
          if (iy < 0 || iy >= s.height) continue;
          for (int kx = 0; kx < s.kernel; ++kx) {
            const int ix = ox * s.stride + kx - s.pad;
            if (ix < 0 || ix >= s.width) continue;
            const T* src = xv.data() + (static_cast<Eigen::Index>(b) * hw + iy * s.width + ix) * c;
            std::copy(src, src + c, row + (ky * s.kernel + kx) * c);
          }
        }
      }
  Matrix<T> out(batch * out_hw, kernel.cols());
  out.noalias() = cols * kernel.value();
  out.rowwise() += bias.value().row(0);
  const bool ng = t.needs_grad(x.id) || t.needs_grad(kernel.id) || t.needs_grad(bias.id);
  if (!ng) return t.push(std::move(out), false, nullptr);
  return t.push(std::move(out), true,
                [x, kernel, bias, s, batch, cols = std::move(cols)](Tape<T>& tp, int self) {
                  const Matrix<T>& g = tp.grad(self);
                  if (tp.needs_grad(kernel.id)) tp.grad(kernel.id).noalias() += cols.transpose() * g;
                  if (tp.needs_grad(bias.id)) tp.grad(bias.id).row(0) += g.colwise().sum();
                  if (!tp.needs_grad(x.id)) return;
                  Matrix<T> dcols(cols.rows(), cols.cols());
                  dcols.noalias() = g * tp.value(kernel.id).transpose();
                  Matrix<T>& gx = tp.grad(x.id);
                  const int ho2 = s.out_height(), wo2 = s.out_width(), c2 = s.in_channels;
                  const int kk2 = s.kernel * s.kernel * c2, hw2 = s.height * s.width;
                  const Eigen::Index ohw = static_cast<Eigen::Index>(ho2) * wo2;
                  for (int b = 0; b < batch; ++b)
                    for (int oy = 0; oy < ho2; ++oy)
                      for (int ox = 0; ox < wo2; ++ox) {
                        const T* row = dcols.data() + (b * ohw + oy * wo2 + ox) * kk2;
                        for (int ky = 0; ky < s.kernel; ++ky) {
                          const int iy = oy * s.stride + ky - s.pad;
                          if (iy < 0 || iy >= s.height) continue;
                          for (int kx = 0; kx < s.kernel; ++kx) {
                            const int ix = ox * s.stride + kx - s.pad;
                            if (ix < 0 || ix >= s.width) continue;
                            T* dst = gx.data() + (static_cast<Eigen::Index>(b) * hw2 + iy * s.width + ix) * c2;
                            const T* src = row + (ky * s.kernel + kx) * c2;
                            for (int ch = 0; ch < c2; ++ch) dst[ch] += src[ch];
                          }
                        }
                      }
                });
}

}  // namespace ias::ad

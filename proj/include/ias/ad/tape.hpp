#pragma once

#include <Eigen/Dense>

#include <deque>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "ias/core/error.hpp"

namespace ias::ad {

template <class T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// A named learnable array. Gradients accumulate into `grad` across tapes until
// the optimiser consumes them.
template <class T>
struct Parameter {
  std::string name;
  Matrix<T> value;
  // Accumulator, not part of the logical value: const models still collect
  // gradients when used on a grad-enabled tape.
  mutable Matrix<T> grad;
  // Frozen parameters never receive gradients.
  bool frozen = false;

  Parameter() = default;
  Parameter(std::string n, Matrix<T> v) : name(std::move(n)), value(std::move(v)) {
    grad.setZero(value.rows(), value.cols());
  }

  void zero_grad() const { grad.setZero(value.rows(), value.cols()); }
  Eigen::Index size() const { return value.size(); }
};

template <class T>
class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
template <class T>
struct Var {
  Tape<T>* tape = nullptr;
  int id = -1;

  const Matrix<T>& value() const { return tape->value(id); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  T scalar() const { return value()(0, 0); }
};

// Reverse-mode tape over dense row-major matrices. Nodes are appended in
// topological order, so backward is a single reverse sweep.
template <class T>
class Tape {
 public:
  using Mat = Matrix<T>;
  using Backward = std::function<void(Tape&, int)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Var<T> constant(Mat m) { return push(std::move(m), false, nullptr); }

  // Leaf whose gradient is kept on the tape (read it back with grad()).
  Var<T> variable(Mat m) { return push(std::move(m), grad_enabled_, nullptr); }

  // Parameter leaf. The tape references the parameter's storage, which must
  // stay unchanged until backward() has run.
  Var<T> param(const Parameter<T>& p) {
    Node n;
    n.external = &p.value;
    n.needs_grad = grad_enabled_ && !p.frozen;
    n.param = n.needs_grad ? &p : nullptr;
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  // Non-differentiable leaf viewing external storage, which must outlive
  // every use of the node.
  Var<T> reference(const Mat& m) {
    Node n;
    n.external = &m;
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  Var<T> push(Mat value, bool needs_grad, Backward bw) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    if (needs_grad) n.backward = std::move(bw);
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  const Mat& value(int id) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    return n.external ? *n.external : n.value;
  }

  bool needs_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }

  // Gradient buffer of a node, zero-initialised on first access.
  Mat& grad(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.has_grad) {
      const Mat& v = n.external ? *n.external : n.value;
      n.grad.setZero(v.rows(), v.cols());
      n.has_grad = true;
    }
    return n.grad;
  }

  const Mat& grad(Var<T> v) { return grad(v.id); }

  bool has_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].has_grad; }

  // Seeds d(root) = seed and propagates to every reachable node. Parameter
  // leaves add their gradient into Parameter::grad.
  void backward(Var<T> root, const Mat& seed) {
    require(root.tape == this, "backward: variable from another tape");
    if (!needs_grad(root.id)) return;
    Mat& g = grad(root.id);
    require(g.rows() == seed.rows() && g.cols() == seed.cols(), "backward: seed shape mismatch");
    g += seed;
    for (int i = root.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (!n.has_grad) continue;
      if (n.backward) n.backward(*this, i);
      if (n.param) n.param->grad += n.grad;
    }
  }

  void backward(Var<T> root) {
    require(root.rows() == 1 && root.cols() == 1, "backward: root must be scalar");
    backward(root, Mat::Ones(1, 1));
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    const Mat* external = nullptr;
    Mat grad;
    bool has_grad = false;
    bool needs_grad = false;
    const Parameter<T>* param = nullptr;
    Backward backward;
  };

  bool grad_enabled_;
  // A deque keeps node values at stable addresses as the tape grows.
  std::deque<Node> nodes_;
};

}  // namespace ias::ad

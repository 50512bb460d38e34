#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "ias/ad/tape.hpp"
#include "ias/core/error.hpp"
#include "ias/core/hash.hpp"
#include "ias/core/random.hpp"

namespace ias::nets {

template <class T>
using Matrix = ad::Matrix<T>;

// Ordered, uniquely named parameter arrays of one network. Layers refer to
// entries by index, so copies of a set are independent snapshots.
template <class T>
class ParamSet {
 public:
  ParamSet() = default;
  explicit ParamSet(std::string prefix, std::uint64_t seed) : prefix_(std::move(prefix)), seed_(seed) {}

  const std::string& prefix() const { return prefix_; }

  // Normal(0, scale^2) initialisation seeded by the parameter name, so values
  // do not depend on construction order.
  int normal(const std::string& name, int rows, int cols, double scale) {
    Matrix<T> m(rows, cols);
    Rng rng(derive_seed(seed_, full_name(name)));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(rng.normal() * scale);
    return add(name, std::move(m));
  }

  int zeros(const std::string& name, int rows, int cols) { return add(name, Matrix<T>::Zero(rows, cols)); }
  int ones(const std::string& name, int rows, int cols) { return add(name, Matrix<T>::Ones(rows, cols)); }

  int add(const std::string& name, Matrix<T> value) {
    const std::string full = full_name(name);
    require(!index_.count(full), "ParamSet: duplicate parameter name " + full);
    index_[full] = static_cast<int>(params_.size());
    params_.emplace_back(full, std::move(value));
    return static_cast<int>(params_.size()) - 1;
  }

  const ad::Parameter<T>& operator[](int i) const { return params_[static_cast<std::size_t>(i)]; }
  ad::Parameter<T>& operator[](int i) { return params_[static_cast<std::size_t>(i)]; }
  std::size_t size() const { return params_.size(); }
  const std::vector<ad::Parameter<T>>& all() const { return params_; }
  std::vector<ad::Parameter<T>>& all() { return params_; }

  std::vector<ad::Parameter<T>*> pointers() {
    std::vector<ad::Parameter<T>*> out;
    for (auto& p : params_) out.push_back(&p);
    return out;
  }

  void set_frozen(bool frozen) {
    for (auto& p : params_) p.frozen = frozen;
  }

  void zero_grad() const {
    for (const auto& p : params_) p.zero_grad();
  }

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p.size());
    return n;
  }

  bool all_finite() const {
    for (const auto& p : params_)
      if (!p.value.allFinite()) return false;
    return true;
  }

  // Hash over names, shapes and raw values.
  std::uint64_t hash() const {
    Fnv1a h;
    for (const auto& p : params_) {
      h.update(p.name);
      const std::int64_t shape[2] = {p.value.rows(), p.value.cols()};
      h.update(shape, sizeof shape);
      h.update(p.value.data(), static_cast<std::size_t>(p.value.size()) * sizeof(T));
    }
    return h.digest();
  }

  // Values or gradients of every entry concatenated in order, as doubles.
  Eigen::VectorXd flat_values() const { return flatten(false); }
  Eigen::VectorXd flat_grad() const { return flatten(true); }

  template <class U>
  void copy_values_from(const ParamSet<U>& other) {
    require(other.size() == size(), "ParamSet: size mismatch in copy");
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const auto& src = other.all()[i];
      require(src.name == params_[i].name && src.value.rows() == params_[i].value.rows() &&
                  src.value.cols() == params_[i].value.cols(),
              "ParamSet: layout mismatch in copy");
      params_[i].value = src.value.template cast<T>();
      params_[i].zero_grad();
    }
  }

 private:
  Eigen::VectorXd flatten(bool grad) const {
    Eigen::VectorXd out(static_cast<Eigen::Index>(count()));
    Eigen::Index k = 0;
    for (const auto& p : params_) {
      const Matrix<T>& m = grad ? p.grad : p.value;
      for (Eigen::Index i = 0; i < m.size(); ++i) out(k++) = static_cast<double>(m.data()[i]);
    }
    return out;
  }

  std::string full_name(const std::string& name) const { return prefix_.empty() ? name : prefix_ + "." + name; }

  std::string prefix_;
  std::uint64_t seed_ = 0;
  std::vector<ad::Parameter<T>> params_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace ias::nets

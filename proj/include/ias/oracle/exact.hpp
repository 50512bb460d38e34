#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "ias/ad/ops.hpp"
#include "ias/nets/bundle.hpp"
#include "ias/oracle/micro.hpp"

namespace ias::oracle {

using Bundle = nets::ModelBundle<double>;

inline double log_sum_exp(const Eigen::VectorXd& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

// log p_phi(y) for every caption.
inline Eigen::VectorXd prior_log_probs(const Bundle& b, const std::vector<text::Caption>& captions) {
  ad::Tape<double> t(false);
  const auto lp = b.phi.log_prob(t, captions).value();
  return Eigen::Map<const Eigen::VectorXd>(lp.data(), lp.rows());
}

// log p_theta(x | y) for one token sequence against every caption.
inline Eigen::VectorXd likelihood_row(const Bundle& b, const nets::ImageTokens& x,
                                      const std::vector<text::Caption>& captions) {
  ad::Tape<double> t(false);
  const std::vector<nets::ImageTokens> xs(captions.size(), x);
  const auto ll = b.theta.log_prob(t, captions, xs).value();
  return Eigen::Map<const Eigen::VectorXd>(ll.data(), ll.rows());
}

// log q_omega(y | x) for one image against every caption.
inline Eigen::VectorXd policy_row(const Bundle& b, const world::Image& x, const std::vector<text::Caption>& captions) {
  ad::Tape<double> t(false);
  auto mem = b.omega.memory(t, t.constant(nets::image_rows<double>({&x})));
  const std::vector<int> image_of(captions.size(), 0);
  const auto lq = b.omega.log_prob(t, captions, &mem, &image_of).value();
  return Eigen::Map<const Eigen::VectorXd>(lq.data(), lq.rows());
}

inline double exact_log_marginal(int x, const Bundle& b, const MicroInstance& inst) {
  const auto& xi = inst.tokens[static_cast<std::size_t>(x)];
  return log_sum_exp(likelihood_row(b, xi, inst.captions) + prior_log_probs(b, inst.captions));
}

inline Eigen::VectorXd exact_posterior(int x, const Bundle& b, const MicroInstance& inst) {
  const Eigen::VectorXd joint =
      likelihood_row(b, inst.tokens[static_cast<std::size_t>(x)], inst.captions) + prior_log_probs(b, inst.captions);
  return (joint.array() - log_sum_exp(joint)).exp().matrix();
}

// sum_y q(y)[r(y) - log q(y)] for an explicit distribution; zero-probability
// captions contribute nothing.
inline double elbo_of(const Eigen::VectorXd& log_q, const Eigen::VectorXd& reward) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < log_q.size(); ++i) {
    if (!std::isfinite(log_q(i))) continue;
    s += std::exp(log_q(i)) * (reward(i) - log_q(i));
  }
  return s;
}

inline double exact_elbo(int x, const Bundle& b, const MicroInstance& inst) {
  const auto xi = static_cast<std::size_t>(x);
  const Eigen::VectorXd r = likelihood_row(b, inst.tokens[xi], inst.captions) + prior_log_probs(b, inst.captions);
  return elbo_of(policy_row(b, inst.images[xi], inst.captions), r);
}

struct ExactGradient {
  double elbo = 0.0;
  Eigen::VectorXd grad;  // flattened over omega's parameters
};

// Gradient of the enumerated ELBO for image x with respect to omega, by
// differentiating the full sum through q (reward terms held fixed).
inline ExactGradient exact_grad_omega(int x, const Bundle& b, const MicroInstance& inst) {
  const auto xi = static_cast<std::size_t>(x);
  const Eigen::VectorXd r = likelihood_row(b, inst.tokens[xi], inst.captions) + prior_log_probs(b, inst.captions);
  b.omega.params().zero_grad();
  ad::Tape<double> t;
  auto mem = b.omega.memory(t, t.constant(nets::image_rows<double>({&inst.images[xi]})));
  const std::vector<int> image_of(inst.captions.size(), 0);
  auto lq = b.omega.log_prob(t, inst.captions, &mem, &image_of);
  ad::Matrix<double> rm = r;
  auto elbo = ad::sum(ad::mul(ad::exp(lq), ad::sub(t.constant(rm), lq)));
  t.backward(elbo);
  ExactGradient out{elbo.scalar(), b.omega.params().flat_grad()};
  b.omega.params().zero_grad();
  return out;
}

// Full tables over an explicit image-token space: log p_theta(x|y) for every
// (x, y), log p_phi(y), and the model marginal log p(x).
struct JointTables {
  Eigen::MatrixXd log_lik;  // |X| x |Y|
  Eigen::VectorXd log_prior;
  Eigen::VectorXd log_marginal;
};

inline JointTables joint_tables(const Bundle& b, const std::vector<nets::ImageTokens>& xs,
                                const std::vector<text::Caption>& captions) {
  JointTables j;
  j.log_prior = prior_log_probs(b, captions);
  j.log_lik.resize(static_cast<Eigen::Index>(xs.size()), static_cast<Eigen::Index>(captions.size()));
  j.log_marginal.resize(static_cast<Eigen::Index>(xs.size()));
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const Eigen::VectorXd row = likelihood_row(b, xs[i], captions);
    j.log_lik.row(static_cast<Eigen::Index>(i)) = row.transpose();
    j.log_marginal(static_cast<Eigen::Index>(i)) = log_sum_exp(row + j.log_prior);
  }
  return j;
}

}  // namespace ias::oracle

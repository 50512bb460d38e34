#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "ias/oracle/exact.hpp"

namespace ias::oracle {

struct ConvergenceRow {
  int batch = 0;
  double median_cosine = 0.0;
  double mean_cosine = 0.0;
  double min_cosine = 0.0;
  double offset_variance = 0.0;  // mean over trials of Var_q(offset(y))
};

struct ConvergenceReport {
  std::vector<ConvergenceRow> rows;
  double offset_slope = 0.0;  // least-squares slope of log variance on log B
};

// Score-function gradient of E_q[r] with respect to q's logits.
inline Eigen::VectorXd logit_gradient(const Eigen::VectorXd& q, const Eigen::VectorXd& r) {
  const double mean = q.dot(r);
  return q.cwiseProduct((r.array() - mean).matrix());
}

inline double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return na == nb ? 1.0 : 0.0;
  return a.dot(b) / (na * nb);
}

inline double slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

// Compares the classifier-substituted reward with the generative reward for
// batches x_1..x_B drawn from the model marginal p(x), using exact classifier
// logits log p(x|y) - log p(x). The sampler is q_omega(y | x_j) over all
// captions; x_j is the first batch element.
inline ConvergenceReport substitution_convergence(const Bundle& b, const MicroInstance& inst,
                                                  const std::vector<nets::ImageTokens>& space,
                                                  const JointTables& tables, const std::vector<int>& batch_sizes,
                                                  int trials, std::uint64_t seed) {
  require(!batch_sizes.empty() && std::is_sorted(batch_sizes.begin(), batch_sizes.end()),
          "substitution_convergence: batch sizes must be ascending");
  const Eigen::Index nx = tables.log_lik.rows(), ny = tables.log_lik.cols();
  // ratio(x, y) = p(x|y) / p(x)
  const Eigen::MatrixXd ratio = (tables.log_lik.colwise() - tables.log_marginal).array().exp().matrix();
  std::vector<double> px(static_cast<std::size_t>(nx));
  for (Eigen::Index i = 0; i < nx; ++i) px[static_cast<std::size_t>(i)] = std::exp(tables.log_marginal(i));
  std::map<int, Eigen::VectorXd> policy_cache;
  auto policy = [&](int x) -> const Eigen::VectorXd& {
    auto it = policy_cache.find(x);
    if (it == policy_cache.end()) {
      const world::Image img = nets::tokens_to_image(space[static_cast<std::size_t>(x)], inst.world);
      it = policy_cache.emplace(x, policy_row(b, img, inst.captions).array().exp().matrix()).first;
    }
    return it->second;
  };

  ConvergenceReport report;
  std::vector<double> log_b, log_var;
  for (int bsz : batch_sizes) {
    require(bsz >= 1, "substitution_convergence: batch size below 1");
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(bsz)));
    std::vector<double> cosines;
    double var_sum = 0.0;
    Eigen::VectorXd mean_ratio(ny);
    for (int trial = 0; trial < trials; ++trial) {
      mean_ratio.setZero();
      int xj = -1;
      for (int k = 0; k < bsz; ++k) {
        const int x = static_cast<int>(rng.categorical(std::span<const double>(px)));
        if (k == 0) xj = x;
        mean_ratio += ratio.row(x).transpose();
      }
      mean_ratio /= static_cast<double>(bsz);
      const Eigen::VectorXd& q = policy(xj);
      const Eigen::VectorXd r_gen = tables.log_lik.row(xj).transpose();
      // log softmax over the batch at the correct index, written via ratios
      const Eigen::VectorXd r_con = (r_gen.array() - tables.log_marginal(xj) - mean_ratio.array().log() -
                                     std::log(static_cast<double>(bsz)))
                                        .matrix();
      cosines.push_back(cosine(logit_gradient(q, r_gen), logit_gradient(q, r_con)));
      const Eigen::VectorXd offset = r_con - r_gen;
      const double m = q.dot(offset);
      var_sum += q.dot(((offset.array() - m).square()).matrix());
    }
    std::sort(cosines.begin(), cosines.end());
    ConvergenceRow row;
    row.batch = bsz;
    const std::size_t n = cosines.size();
    row.median_cosine = n % 2 ? cosines[n / 2] : 0.5 * (cosines[n / 2 - 1] + cosines[n / 2]);
    double s = 0.0;
    for (double c : cosines) s += c;
    row.mean_cosine = s / static_cast<double>(n);
    row.min_cosine = cosines.front();
    row.offset_variance = var_sum / trials;
    report.rows.push_back(row);
    log_b.push_back(std::log(static_cast<double>(bsz)));
    log_var.push_back(std::log(row.offset_variance));
  }
  report.offset_slope = batch_sizes.size() > 1 ? slope(log_b, log_var) : 0.0;
  return report;
}

}  // namespace ias::oracle

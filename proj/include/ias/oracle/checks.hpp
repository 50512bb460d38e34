#pragma once

#include <cmath>
#include <ostream>
#include <string>
#include <vector>

#include "ias/oracle/fit.hpp"
#include "ias/oracle/substitution.hpp"
#include "ias/semisup/objectives.hpp"

namespace ias::oracle {

struct OracleCheck {
  std::string name;
  std::uint64_t seed = 0;
  double value = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

inline void write_oracle_csv(std::ostream& out, const std::vector<OracleCheck>& checks) {
  out << "check,instance_seed,value,tolerance,pass\n";
  out.precision(17);
  for (const auto& c : checks)
    out << c.name << ',' << c.seed << ',' << c.value << ',' << c.tolerance << ',' << (c.pass ? "pass" : "fail") << '\n';
}

inline bool all_pass(const std::vector<OracleCheck>& checks) {
  for (const auto& c : checks)
    if (!c.pass) return false;
  return true;
}

// Gradient of -J_u for one image as accumulated by the trainer's estimator,
// negated back to an ascent direction and flattened over omega.
inline Eigen::VectorXd estimator_gradient(const Bundle& b, const MicroInstance& inst, int x,
                                          const semisup::TrainConfig& cfg, Rng& rng,
                                          const semisup::UnpairedOptions& opt) {
  semisup::UnpairedBatch ub;
  ub.images = {inst.images[static_cast<std::size_t>(x)]};
  ub.tokens = {inst.tokens[static_cast<std::size_t>(x)]};
  b.omega.params().zero_grad();
  b.theta.params().zero_grad();
  semisup::unpaired_gradient(ub, b, cfg, rng, opt);
  Eigen::VectorXd g = -b.omega.params().flat_grad();
  b.omega.params().zero_grad();
  b.theta.params().zero_grad();
  return g;
}

struct MonteCarloSummary {
  int coordinates = 0;     // coordinates with a non-degenerate comparison
  int beyond_three = 0;    // |z| > 3
  double max_abs_z = 0.0;
};

// Mean of n sampled estimates against the exact gradient, per coordinate:
// z = (mean - exact) / sqrt(se^2 + floor^2). The floor absorbs coordinates
// whose gradient is identically zero up to rounding (softmax-invariant
// biases).
inline MonteCarloSummary monte_carlo_study(const Bundle& b, const MicroInstance& inst, int x,
                                           const Eigen::VectorXd& exact, int n, std::uint64_t seed,
                                           double floor = 1e-10) {
  semisup::TrainConfig cfg;
  cfg.variant = semisup::Variant::generative;
  Rng rng(seed);
  Eigen::VectorXd s = Eigen::VectorXd::Zero(exact.size()), s2 = s;
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd g = estimator_gradient(b, inst, x, cfg, rng, {});
    s += g;
    s2 += g.cwiseProduct(g);
  }
  const Eigen::VectorXd m = s / n;
  const Eigen::VectorXd var = ((s2 / n - m.cwiseProduct(m)) * (n / (n - 1.0))).cwiseMax(0.0);
  MonteCarloSummary out;
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const double se = std::sqrt(var(i) / n);
    const double z = std::abs(m(i) - exact(i)) / std::sqrt(se * se + floor * floor);
    ++out.coordinates;
    if (z > 3.0) ++out.beyond_three;
    out.max_abs_z = std::max(out.max_abs_z, z);
  }
  return out;
}

// Estimator unbiasedness on the micro instance: enumeration equals the exact
// gradient, a constant baseline changes nothing, and sampled estimates
// average to the exact gradient.
inline std::vector<OracleCheck> unbiasedness_checks(std::uint64_t seed, int mc_samples) {
  const MicroInstance inst = make_micro_instance();
  Bundle b(inst.net, seed);
  Rng pick(derive_seed(seed, "image"));
  const int x = static_cast<int>(pick.below(inst.scenes.size()));
  const ExactGradient ex = exact_grad_omega(x, b, inst);
  semisup::TrainConfig cfg;
  semisup::UnpairedOptions enumerate{semisup::EstimatorMode::enumeration, &inst.captions, nullptr};
  Rng rng(seed);
  const double scale = std::max(1.0, ex.grad.cwiseAbs().maxCoeff());
  const Eigen::VectorXd g0 = estimator_gradient(b, inst, x, cfg, rng, enumerate);
  cfg.baseline_constant = 3.7;
  const Eigen::VectorXd gc = estimator_gradient(b, inst, x, cfg, rng, enumerate);
  std::vector<OracleCheck> out;
  const double d0 = (g0 - ex.grad).cwiseAbs().maxCoeff() / scale;
  const double dc = (gc - g0).cwiseAbs().maxCoeff() / scale;
  out.push_back({"enumeration_vs_exact_grad", seed, d0, 1e-6, d0 <= 1e-6});
  out.push_back({"constant_baseline_neutral", seed, dc, 1e-6, dc <= 1e-6});
  if (mc_samples > 0) {
    const MonteCarloSummary mc = monte_carlo_study(b, inst, x, ex.grad, mc_samples, derive_seed(seed, "mc"));
    const double rate = static_cast<double>(mc.beyond_three) / mc.coordinates;
    // Nominal two-sided rate beyond 3 SE is 0.27%; allow twice that, and a
    // family-wise bound on the largest deviation.
    out.push_back({"mc_rate_beyond_3se", seed, rate, 0.0054, rate <= 0.0054});
    out.push_back({"mc_max_abs_z", seed, mc.max_abs_z, 5.0, mc.max_abs_z <= 5.0});
  }
  return out;
}

// ELBO never exceeds the exact log marginal across parameter draws; it is
// tight when q is replaced by the exact posterior.
inline std::vector<OracleCheck> bound_checks(std::uint64_t seed, int draws, int images_per_draw = 3) {
  const MicroInstance inst = make_micro_instance();
  int violations = 0;
  double worst_gap = std::numeric_limits<double>::infinity(), worst_tight = 0.0;
  for (int d = 0; d < draws; ++d) {
    const std::uint64_t s = derive_seed(seed, static_cast<std::uint64_t>(d));
    Bundle b(inst.net, s);
    Rng rng(s);
    const Eigen::VectorXd prior = prior_log_probs(b, inst.captions);
    for (int k = 0; k < images_per_draw; ++k) {
      const auto x = rng.below(inst.scenes.size());
      const Eigen::VectorXd r = likelihood_row(b, inst.tokens[x], inst.captions) + prior;
      const double lm = log_sum_exp(r);
      const double elbo = elbo_of(policy_row(b, inst.images[x], inst.captions), r);
      const double gap = lm - elbo;
      worst_gap = std::min(worst_gap, gap);
      if (gap < -1e-9) ++violations;
      const Eigen::VectorXd log_post = (r.array() - lm).matrix();
      worst_tight = std::max(worst_tight, std::abs(lm - elbo_of(log_post, r)));
    }
  }
  return {{"elbo_bound_violations", seed, static_cast<double>(violations), 0.0, violations == 0},
          {"elbo_min_gap", seed, worst_gap, -1e-9, worst_gap >= -1e-9},
          {"posterior_tightness", seed, worst_tight, 1e-6, worst_tight <= 1e-6}};
}

struct SubstitutionResult {
  ConvergenceReport report;
  std::vector<OracleCheck> checks;
};

// Large-batch agreement between the classifier-substituted and generative
// rewards, with a briefly fitted micro decoder and prior.
inline SubstitutionResult substitution_checks(std::uint64_t seed, const std::vector<int>& batch_sizes, int trials,
                                              int fit_steps = 300) {
  const MicroInstance inst = make_micro_instance();
  Bundle b(inst.net, seed);
  fit_micro_generative(b, inst, fit_steps, 32, 1e-2, derive_seed(seed, "fit"));
  const auto space = enumerate_token_sequences(inst.net.n_cells(), inst.net.image_vocab());
  const JointTables tables = joint_tables(b, space, inst.captions);
  SubstitutionResult out;
  out.report = substitution_convergence(b, inst, space, tables, batch_sizes, trials, derive_seed(seed, "batches"));
  const auto& rows = out.report.rows;
  const double last = rows.back().median_cosine;
  out.checks.push_back({"cosine_at_largest_batch", seed, last, 0.99, last >= 0.99});
  double worst_drop = 0.0;
  for (std::size_t i = 1; i < rows.size(); ++i)
    worst_drop = std::max(worst_drop, rows[i - 1].median_cosine - rows[i].median_cosine);
  out.checks.push_back({"median_cosine_monotone", seed, worst_drop, 0.01, worst_drop <= 0.01});
  const double rel = std::abs(out.report.offset_slope + 1.0);
  out.checks.push_back({"offset_variance_slope", seed, out.report.offset_slope, 0.2, rel <= 0.2});
  return out;
}

}  // namespace ias::oracle

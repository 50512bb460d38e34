#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "ias/ad/gradcheck.hpp"
#include "ias/oracle/checks.hpp"

using namespace ias;
using namespace ias::oracle;

namespace {

const MicroInstance& micro() {
  static const MicroInstance m = make_micro_instance();
  return m;
}

}  // namespace

TEST(MicroInstance, EnumerationSizesAndOrder) {
  const auto& m = micro();
  EXPECT_EQ(m.vocab.size(), 9);
  EXPECT_EQ(m.n_captions(), 156);
  EXPECT_EQ(m.n_scenes(), 112);
  EXPECT_EQ(m.captions.front(), text::empty_caption());
  std::set<std::vector<int>> unique;
  for (const auto& c : m.captions) {
    EXPECT_TRUE(text::is_valid(c, m.vocab.size(), 5));
    unique.insert(c.ids);
  }
  EXPECT_EQ(unique.size(), m.captions.size());
  const auto again = make_micro_instance();
  EXPECT_EQ(again.captions, m.captions);
  EXPECT_EQ(again.scenes, m.scenes);
  std::set<nets::ImageTokens> tokens(m.tokens.begin(), m.tokens.end());
  EXPECT_EQ(tokens.size(), m.tokens.size());
}

TEST(Exact, SingleCaptionPriorGivesLikelihood) {
  Eigen::VectorXd ll(3), lp(3);
  ll << -2.0, -5.0, -1.0;
  lp << 0.0, -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity();
  EXPECT_DOUBLE_EQ(log_sum_exp(ll + lp), -2.0);
}

TEST(Exact, PosteriorNormalisedAndArgmaxConsistent) {
  const auto& m = micro();
  Bundle b(m.net, 2);
  for (int x : {0, 50, 100}) {
    const Eigen::VectorXd post = exact_posterior(x, b, m);
    EXPECT_NEAR(post.sum(), 1.0, 1e-12);
    const Eigen::VectorXd joint = likelihood_row(b, m.tokens[static_cast<std::size_t>(x)], m.captions) +
                                  prior_log_probs(b, m.captions);
    Eigen::Index a = 0, c = 0;
    post.maxCoeff(&a);
    joint.maxCoeff(&c);
    EXPECT_EQ(a, c);
  }
}

TEST(Exact, UniformPriorEqualLikelihoodGivesUniformPosterior) {
  const Eigen::VectorXd joint = Eigen::VectorXd::Constant(7, -3.5);
  const Eigen::VectorXd post = (joint.array() - log_sum_exp(joint)).exp().matrix();
  for (Eigen::Index i = 0; i < post.size(); ++i) EXPECT_NEAR(post(i), 1.0 / 7, 1e-15);
}

TEST(Exact, ElboBelowMarginalAndTightAtPosterior) {
  const auto& m = micro();
  for (std::uint64_t seed : {1, 2, 3}) {
    Bundle b(m.net, seed);
    const int x = static_cast<int>(seed * 13);
    const double lm = exact_log_marginal(x, b, m);
    EXPECT_LE(exact_elbo(x, b, m), lm + 1e-9);
    const Eigen::VectorXd r = likelihood_row(b, m.tokens[static_cast<std::size_t>(x)], m.captions) +
                              prior_log_probs(b, m.captions);
    const Eigen::VectorXd log_post = (r.array() - lm).matrix();
    EXPECT_NEAR(elbo_of(log_post, r), lm, 1e-9);
  }
}

TEST(Exact, GradientMatchesFiniteDifferences) {
  const auto& m = micro();
  Bundle b(m.net, 4);
  const int x = 33;
  const ExactGradient g = exact_grad_omega(x, b, m);
  EXPECT_NEAR(g.elbo, exact_elbo(x, b, m), 1e-12);
  Rng rng(9);
  auto& params = b.omega.params();
  Eigen::Index offset = 0;
  std::vector<Eigen::Index> starts;
  for (const auto& p : params.all()) {
    starts.push_back(offset);
    offset += p.value.size();
  }
  int checked = 0;
  for (int k = 0; k < 40; ++k) {
    const auto pi = static_cast<int>(rng.below(params.size()));
    auto& p = params[pi];
    const auto idx = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(p.value.size())));
    const double analytic = g.grad(starts[static_cast<std::size_t>(pi)] + idx);
    const double saved = p.value.data()[idx];
    const double h = 1e-5;
    p.value.data()[idx] = saved + h;
    const double up = exact_elbo(x, b, m);
    p.value.data()[idx] = saved - h;
    const double down = exact_elbo(x, b, m);
    p.value.data()[idx] = saved;
    const double numeric = (up - down) / (2 * h);
    if (std::abs(analytic) < 1e-6 && std::abs(numeric) < 1e-6) continue;
    ++checked;
    EXPECT_LE(ad::relative_error(analytic, numeric, 1e-3), 1e-6) << p.name << "[" << idx << "]";
  }
  EXPECT_GT(checked, 10);
}

TEST(Checks, EnumerationEstimatorIsExact) {
  const auto checks = unbiasedness_checks(5, 0);
  ASSERT_EQ(checks.size(), 2u);
  for (const auto& c : checks) EXPECT_TRUE(c.pass) << c.name << " = " << c.value;
}

TEST(Checks, BoundHoldsOverDraws) {
  for (const auto& c : bound_checks(6, 10)) EXPECT_TRUE(c.pass) << c.name << " = " << c.value;
}

TEST(Checks, SubstitutionImprovesWithBatchSize) {
  const auto r = substitution_checks(7, {8, 64, 512}, 60, 150);
  ASSERT_EQ(r.report.rows.size(), 3u);
  EXPECT_LT(r.report.rows[0].median_cosine, r.report.rows[2].median_cosine + 1e-3);
  EXPECT_GT(r.report.rows[2].median_cosine, 0.99);
  EXPECT_LT(r.report.rows[2].offset_variance, r.report.rows[0].offset_variance);
}

TEST(Checks, CsvReport) {
  std::ostringstream out;
  write_oracle_csv(out, {{"a", 1, 0.5, 1.0, true}, {"b", 2, 2.0, 1.0, false}});
  EXPECT_EQ(out.str().substr(0, out.str().find('\n')), "check,instance_seed,value,tolerance,pass");
  EXPECT_NE(out.str().find("b,2,2,1,fail"), std::string::npos);
}

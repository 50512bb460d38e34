#include <gtest/gtest.h>

#include "ias/nets/gradcheck.hpp"
#include "ias/oracle/checks.hpp"
#include "ias/semisup/trainer.hpp"

using namespace ias;
using namespace ias::semisup;

namespace {

const oracle::MicroInstance& micro() {
  static const oracle::MicroInstance m = oracle::make_micro_instance();
  return m;
}

world::DatasetBundle micro_data(int n_paired, int n_unpaired, std::uint64_t seed = 3) {
  world::DataConfig dc;
  dc.world = micro().world;
  dc.master_seed = seed;
  dc.n_paired = n_paired;
  dc.n_unpaired = n_unpaired;
  dc.n_validation = 40;
  dc.labeled_pool = 400;
  return world::build_datasets(dc);
}

TrainConfig small_config(Variant v) {
  TrainConfig c;
  c.variant = v;
  c.batch_paired = 8;
  c.batch_unpaired = 8;
  c.samples_per_image = 2;
  c.learning_rate = 3e-3;
  c.max_steps = 6;
  c.eval_every = 2;
  c.prior_max_steps = 20;
  c.prior_batch = 16;
  c.prior_eval_every = 5;
  c.seed = 11;
  return c;
}

PairedBatch micro_pairs(const std::vector<int>& scenes) {
  const auto& m = micro();
  PairedBatch b;
  for (int s : scenes) {
    const auto k = static_cast<std::size_t>(s);
    b.images.push_back(m.images[k]);
    b.captions.push_back(m.describe(m.scenes[k]));
    b.tokens.push_back(m.tokens[k]);
  }
  return b;
}

}  // namespace

TEST(TrainConfig, JsonRoundTripAndValidation) {
  TrainConfig c = small_config(Variant::contrastive);
  c.baseline = Baseline::constant;
  c.baseline_constant = -2.5;
  const TrainConfig back = train_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_THROW(train_config_from_json(nlohmann::json{{"no_such_key", 1}}), ConfigError);
  EXPECT_THROW(parse_variant("unsupervised"), ConfigError);

  TrainConfig bad = small_config(Variant::generative);
  bad.samples_per_image = 1;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad.baseline = Baseline::constant;
  EXPECT_NO_THROW(bad.validate());
  bad = small_config(Variant::contrastive);
  bad.batch_unpaired = 1;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = small_config(Variant::generative);
  bad.learning_rate = 0.0;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(PairedObjective, TermsAreLogProbabilitiesAndMeans) {
  const auto& m = micro();
  ModelBundle<double> b(m.net, 1);
  const PairedTerms single = paired_objective(b, micro_pairs({5}));
  EXPECT_LE(single.decoder, 0.0);
  EXPECT_LE(single.prior, 0.0);
  EXPECT_LE(single.policy, 0.0);
  const auto& cap = m.describe(m.scenes[5]);
  const double expected = b.theta.decoder_logprob(m.tokens[5], cap) + b.phi.prior_logprob(cap) +
                          b.omega.caption_logprob(m.images[5], cap);
  EXPECT_NEAR(single.total(), expected, 1e-9);

  const PairedTerms once = paired_objective(b, micro_pairs({5, 9, 40}));
  const PairedTerms twice = paired_objective(b, micro_pairs({5, 9, 40, 5, 9, 40}));
  EXPECT_NEAR(once.total(), twice.total(), 1e-12);
}

TEST(UnpairedEstimator, EnumerationMatchesExactGradient) {
  const auto checks = oracle::unbiasedness_checks(21, 0);
  for (const auto& c : checks) EXPECT_TRUE(c.pass) << c.name << " = " << c.value;
}

TEST(UnpairedEstimator, LeaveOneOutNeedsTwoSamples) {
  const auto& m = micro();
  ModelBundle<double> b(m.net, 2);
  TrainConfig c = small_config(Variant::generative);
  c.samples_per_image = 1;
  UnpairedBatch ub{{m.images[0]}, {m.tokens[0]}};
  Rng rng(1);
  EXPECT_THROW(unpaired_gradient(ub, b, c, rng), ConfigError);
  c.baseline = Baseline::constant;
  EXPECT_NO_THROW(unpaired_gradient(ub, b, c, rng));
}

TEST(UnpairedEstimator, SampledTermsDecompose) {
  const auto& m = micro();
  ModelBundle<double> b(m.net, 3);
  TrainConfig c = small_config(Variant::generative);
  c.samples_per_image = 4;
  UnpairedBatch ub{{m.images[0], m.images[7]}, {m.tokens[0], m.tokens[7]}};
  Rng rng(5);
  const UnpairedTerms u = unpaired_gradient(ub, b, c, rng);
  EXPECT_NEAR(u.j_u, u.recon + u.prior + u.entropy, 1e-9);
  EXPECT_GT(u.entropy, 0.0);
  EXPECT_LT(u.recon, 0.0);
  // The mean leave-one-out baseline equals the mean return.
  EXPECT_NEAR(u.baseline, u.j_u, 1e-9);
}

TEST(Contrastive, IdenticalEmbeddingsGiveUniformReward) {
  Matrix<double> f = Matrix<double>::Ones(2, 3), g = Matrix<double>::Ones(2, 3);
  const auto r = substitute_rewards(f, g, {0, 1});
  EXPECT_NEAR(r[0], std::log(0.5), 1e-12);
  EXPECT_NEAR(r[1], std::log(0.5), 1e-12);

  const auto& m = micro();
  ModelBundle<double> b(m.net, 4);
  Tape<double> t;
  auto loss = contrastive_classifier_loss(t, b.contrastive, t.constant(f), t.constant(g));
  EXPECT_NEAR(loss.scalar(), 2.0 * std::log(2.0), 1e-12);
}

TEST(Contrastive, SingleItemLossIsZero) {
  const auto& m = micro();
  ModelBundle<double> b(m.net, 4);
  ContrastiveBatch cb{{m.images[3]}, {m.describe(m.scenes[3])}, {Source::paired}};
  EXPECT_NEAR(contrastive_classifier_loss(cb, b), 0.0, 1e-12);
}

TEST(Contrastive, LargeMarginLossVanishes) {
  Matrix<double> f = Matrix<double>::Identity(3, 3) * 40.0;
  Matrix<double> g = Matrix<double>::Identity(3, 3);
  const auto& m = micro();
  ModelBundle<double> b(m.net, 4);
  Tape<double> t;
  EXPECT_LT(contrastive_classifier_loss(t, b.contrastive, t.constant(f), t.constant(g)).scalar(), 1e-15);
  for (double r : substitute_rewards(f, g, {0, 1, 2})) EXPECT_GT(r, -1e-15);
}

TEST(Contrastive, RewardInvariantToCaptionOffsetAcrossImages) {
  // An extra embedding coordinate that is constant over images adds the same
  // amount to every logit of a caption's column.
  Rng rng(8);
  Matrix<double> f = nets::random_matrix(rng, 4, 3), g = nets::random_matrix(rng, 5, 3);
  const std::vector<int> of{0, 1, 2, 3, 0};
  const auto base = substitute_rewards(f, g, of);
  Matrix<double> f_shift(4, 4), g_shift(5, 4);
  f_shift << f, Matrix<double>::Ones(4, 1);
  g_shift << g, nets::random_matrix(rng, 5, 1, 3.0);
  const auto shifted = substitute_rewards(f_shift, g_shift, of);
  for (std::size_t i = 0; i < base.size(); ++i) EXPECT_NEAR(base[i], shifted[i], 1e-12);
}

TEST(Prior, SingleCaptionCorpusIsLearned) {
  const auto& m = micro();
  ModelBundle<double> b(m.net, 5);
  TrainConfig c = small_config(Variant::generative);
  c.prior_max_steps = 300;
  c.prior_learning_rate = 1e-2;
  c.prior_batch = 4;
  const text::Caption cap = m.captions[37];
  pretrain_prior(std::vector<text::Caption>{cap}, b.phi, c);
  EXPECT_GT(std::exp(b.phi.prior_logprob(cap)), 0.999);
  for (const auto& p : b.phi.params().all()) EXPECT_TRUE(p.frozen);
}

TEST(Prior, UniformCorpusGivesEqualProbabilities) {
  const auto& m = micro();
  ModelBundle<double> b(m.net, 6);
  TrainConfig c = small_config(Variant::generative);
  c.prior_max_steps = 600;
  c.prior_learning_rate = 3e-3;
  c.prior_batch = 27;  // one full epoch of the training split per step
  c.prior_eval_every = 600;
  const std::vector<text::Caption> corpus{m.captions[10], m.captions[50], m.captions[120]};
  std::vector<text::Caption> repeated;
  for (int i = 0; i < 10; ++i) repeated.insert(repeated.end(), corpus.begin(), corpus.end());
  pretrain_prior(repeated, b.phi, c);
  double lo = 1.0, hi = 0.0;
  for (const auto& y : corpus) {
    const double p = std::exp(b.phi.prior_logprob(y));
    lo = std::min(lo, p);
    hi = std::max(hi, p);
  }
  EXPECT_GT(lo, 0.3);
  EXPECT_LE((hi - lo) / hi, 0.02);
}

TEST(Prior, EmptyCorpusRaises) {
  ModelBundle<double> b(micro().net, 7);
  EXPECT_THROW(pretrain_prior({}, b.phi, small_config(Variant::generative)), TrainingError);
}

TEST(Trainer, PriorIsFrozenDuringSemiSupervisedTraining) {
  const auto data = micro_data(40, 60);
  for (Variant v : {Variant::generative, Variant::contrastive}) {
    const TrainConfig c = small_config(v);
    std::vector<nets::ParamSet<float>> seen;
    const auto r = train<float>(data, c, micro().net, micro().vocab);
    EXPECT_EQ(r.steps_run, c.max_steps) << name(v);
    EXPECT_GT(r.prior.steps, 0);
    // Retraining with more steps leaves the pretrained prior unchanged.
    TrainConfig longer = c;
    longer.max_steps = c.max_steps + 4;
    const auto r2 = train<float>(data, longer, micro().net, micro().vocab);
    EXPECT_EQ(r.bundle.phi.params().flat_values(), r2.bundle.phi.params().flat_values()) << name(v);
  }
}

TEST(Trainer, SupervisedIgnoresUnpairedData) {
  auto a = micro_data(40, 60);
  auto b = micro_data(40, 60);
  b.unpaired.clear();
  const TrainConfig c = small_config(Variant::supervised);
  const auto ra = train<float>(a, c, micro().net, micro().vocab);
  const auto rb = train<float>(b, c, micro().net, micro().vocab);
  EXPECT_EQ(ra.bundle.omega.params().flat_values(), rb.bundle.omega.params().flat_values());
  EXPECT_EQ(ra.prior.steps, 0);
}

TEST(Trainer, SemiSupervisedNeedsUnpairedData) {
  auto d = micro_data(40, 0);
  EXPECT_THROW(train<float>(d, small_config(Variant::generative), micro().net, micro().vocab), TrainingError);
  d = micro_data(0, 20);
  EXPECT_THROW(train<float>(d, small_config(Variant::supervised), micro().net, micro().vocab), TrainingError);
}

TEST(Trainer, DeterministicAndBestNotWorseThanFinal) {
  const auto data = micro_data(40, 60);
  TrainConfig c = small_config(Variant::generative);
  c.max_steps = 10;
  const auto r1 = train<float>(data, c, micro().net, micro().vocab);
  const auto r2 = train<float>(data, c, micro().net, micro().vocab);
  EXPECT_EQ(r1.bundle.hash(), r2.bundle.hash());
  ASSERT_EQ(r1.reports.size(), r2.reports.size());
  for (std::size_t i = 0; i < r1.reports.size(); ++i) EXPECT_EQ(to_csv_row(r1.reports[i]), to_csv_row(r2.reports[i]));
  EXPECT_GE(r1.best_validation_ll, r1.final_validation_ll);
  EXPECT_NEAR(caption_log_likelihood(r1.bundle.omega, encode_paired(data.validation, data.config.world, micro().vocab,
                                                                    micro().net.max_caption_length)),
              r1.best_validation_ll, 1e-4);
}

TEST(Trainer, SupervisedLearnsPairedCaptions) {
  const auto data = micro_data(60, 0);
  TrainConfig c = small_config(Variant::supervised);
  c.max_steps = 150;
  c.eval_every = 25;
  c.batch_paired = 16;
  const auto r = train<float>(data, c, micro().net, micro().vocab);
  EXPECT_GT(r.best_validation_ll, r.reports.front().validation_ll + 1.0);
}

TEST(Trainer, StepCsv) {
  std::ostringstream out;
  StepReport r;
  r.step = 3;
  write_step_csv(out, {r});
  EXPECT_EQ(out.str().substr(0, out.str().find('\n')), step_csv_header());
  const std::string text = out.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 2);
}

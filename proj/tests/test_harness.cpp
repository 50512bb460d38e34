#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "ias/harness/experiments.hpp"

using namespace ias;
using namespace ias::harness;

namespace {

std::filesystem::path fresh_dir(const std::string& name) {
  const auto d = std::filesystem::temp_directory_path() / ("ias_harness_" + name);
  std::filesystem::remove_all(d);
  return d;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentSpec tiny_spec(const std::filesystem::path& out) {
  ExperimentSpec s;
  s.name = "tiny";
  s.out_dir = out;
  s.labeled_sizes = {16, 32};
  s.novel_quotas = {0, 8};
  s.seeds = 2;
  s.data.n_unpaired = 64;
  s.data.n_validation = 20;
  s.data.labeled_pool = 3000;
  s.novel_base_paired = 24;
  s.captioner.batch_paired = 8;
  s.captioner.batch_unpaired = 8;
  s.captioner.samples_per_image = 2;
  s.captioner.max_steps = 2;
  s.captioner.eval_every = 1;
  s.captioner.validation_limit = 10;
  s.captioner.prior_max_steps = 2;
  s.captioner.prior_eval_every = 1;
  s.net.width = 16;
  s.net.heads = 2;
  s.net.ff_width = 32;
  s.net.conv_channels = {4, 8, 16};
  s.net.embed_hidden = 32;
  s.net.embed_dim = 16;
  s.net.policy_layers = s.net.prior_layers = s.net.decoder_layers = 1;
  s.agent.net.width = 16;
  s.agent.net.ff_width = 32;
  s.agent.train.steps = 2;
  s.agent.train.batch_episodes = 4;
  s.agent.demonstrations = 30;
  s.agent.eval_episodes = 6;
  s.agent.low_quota = 4;
  s.agent.high_quota = 8;
  return s;
}

Table small_table() {
  std::vector<CurveRow> rows{{"supervised", 100, "cider", summarize({1.0, 1.2, 1.1})},
                             {"supervised", 400, "cider", summarize({2.0, 2.1, 1.9})},
                             {"generative", 100, "cider", summarize({1.5, 1.6, 1.4})},
                             {"generative", 400, "cider", summarize({2.4, 2.6, 2.5})},
                             {"generative", 100, "caption_loglik", summarize({-7.0, -6.8})}};
  return curve_table(rows);
}

}  // namespace

TEST(Statistics, MeanAndStudentInterval) {
  const auto s = summarize({1.0, 2.0, 3.0});
  EXPECT_DOUBLE_EQ(s.mean, 2.0);
  EXPECT_NEAR(s.hi - s.mean, 4.303 * 1.0 / std::sqrt(3.0), 1e-12);
  EXPECT_EQ(s.n, 3);
  EXPECT_DOUBLE_EQ(s.min, 1.0);
  EXPECT_DOUBLE_EQ(s.max, 3.0);
  const auto one = summarize({5.0});
  EXPECT_DOUBLE_EQ(one.lo, 5.0);
  EXPECT_DOUBLE_EQ(one.hi, 5.0);
  EXPECT_EQ(summarize({}).n, 0);
}

TEST(ExperimentSpecJson, RoundTripsAndRejectsUnknownKeys) {
  ExperimentSpec s = tiny_spec("out");
  s.agent.train.match_loss = false;
  const auto j = to_json(s);
  const auto back = experiment_spec_from_json(j);
  EXPECT_EQ(to_json(back), j);
  EXPECT_EQ(config_hash(to_json(back)), config_hash(j));

  EXPECT_THROW(experiment_spec_from_json({{"bogus", 1}}), ConfigError);
  EXPECT_THROW(experiment_spec_from_json({{"agent", {{"train", {{"bogus", 1}}}}}}), ConfigError);
  EXPECT_THROW(experiment_spec_from_json({{"seeds", 0}}), ConfigError);
  EXPECT_THROW(experiment_spec_from_json({{"labeled_sizes", nlohmann::json::array()}}), ConfigError);
  const auto partial = experiment_spec_from_json({{"captioner", {{"max_steps", 7}}}, {"seeds", 1}});
  EXPECT_EQ(partial.captioner.max_steps, 7);
  EXPECT_EQ(partial.captioner.batch_paired, ExperimentSpec{}.captioner.batch_paired);
  EXPECT_EQ(partial.labeled_sizes, (std::vector<int>{100, 150, 250, 585, 1500, 4000}));
}

TEST(Registry, HashIsCanonical) {
  nlohmann::json a = nlohmann::json::parse(R"({"a": 1, "b": [1, 2]})");
  nlohmann::json b = nlohmann::json::parse(R"({"b": [1, 2], "a": 1})");
  EXPECT_EQ(config_hash(a), config_hash(b));
  b["a"] = 2;
  EXPECT_NE(config_hash(a), config_hash(b));
}

TEST(Registry, AppendsReloadsAndResumes) {
  const auto dir = fresh_dir("registry");
  const auto path = dir / "runs.jsonl";
  int calls = 0;
  {
    Registry reg(path);
    const auto r = run_once(reg, "x/a", {{"k", 1}}, [&](RunRecord& rec) {
      ++calls;
      metrics::MetricReport m;
      m.cider = 1.5;
      rec.metrics = m;
    });
    EXPECT_EQ(r.status, RunStatus::success);
    const auto f = run_once(reg, "x/b", {{"k", 1}}, [&](RunRecord&) {
      ++calls;
      throw TrainingError("boom");
    });
    EXPECT_EQ(f.status, RunStatus::failed);
    EXPECT_EQ(f.message, "boom");
  }
  Registry reg(path);
  ASSERT_EQ(reg.records().size(), 2u);
  EXPECT_EQ(reg.records()[0].metrics->cider, 1.5);
  run_once(reg, "x/a", {{"k", 1}}, [&](RunRecord&) { ++calls; });
  EXPECT_EQ(calls, 2);  // completed run reused
  run_once(reg, "x/a", {{"k", 2}}, [&](RunRecord&) { ++calls; });
  run_once(reg, "x/b", {{"k", 1}}, [&](RunRecord&) { ++calls; });
  EXPECT_EQ(calls, 4);  // changed config and earlier failure rerun
  EXPECT_EQ(Registry(path).records().size(), 4u);
  std::filesystem::remove_all(dir);
}

TEST(Plot, EmptyTableIsAnErrorAndWritesNothing) {
  const auto dir = fresh_dir("plot_empty");
  Table t = small_table();
  t.rows.clear();
  EXPECT_THROW(plot(t, {}, dir, "p"), PlotError);
  EXPECT_FALSE(std::filesystem::exists(dir));
}

TEST(Plot, MissingColumnIsNamed) {
  Table t = small_table();
  t.columns[static_cast<std::size_t>(t.column("lo"))] = "low";
  try {
    plot(t, {}, fresh_dir("plot_missing"), "p");
    FAIL() << "expected PlotError";
  } catch (const PlotError& e) {
    EXPECT_NE(std::string(e.what()).find("lo"), std::string::npos);
  }
}

TEST(Plot, DeterministicOneFilePerMetric) {
  const auto dir = fresh_dir("plot_files");
  const auto a = plot(small_table(), {}, dir / "a", "curve");
  const auto b = plot(small_table(), {}, dir / "b", "curve");
  ASSERT_EQ(a.size(), 2u);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(slurp(a[i]), slurp(b[i]));
  EXPECT_NE(slurp(a[0]).find("<polygon"), std::string::npos);
  EXPECT_NE(slurp(a[1]).find("<circle"), std::string::npos);  // single-point series

  PlotStyle bars;
  bars.kind = PlotKind::bars;
  EXPECT_EQ(plot(small_table(), bars, dir / "c", "bars").size(), 2u);

  write_csv(small_table(), dir / "t.csv");
  const Table back = read_csv(dir / "t.csv");
  EXPECT_EQ(back.columns, small_table().columns);
  EXPECT_EQ(back.rows, small_table().rows);
  std::filesystem::remove_all(dir);
}

TEST(Experiments, ScalingTableShapeResumeAndReproducibility) {
  const auto dir = fresh_dir("scaling");
  ExperimentSpec s = tiny_spec(dir / "one");
  Registry reg = open_registry(s);
  const auto r = run_scaling(s, reg);
  ASSERT_TRUE(r.all_succeeded()) << r.runs.front().message;
  EXPECT_EQ(r.runs.size(), s.variants.size() * s.labeled_sizes.size() * static_cast<std::size_t>(s.seeds));
  std::size_t plain = 0, mult = 0;
  for (const auto& row : r.rows) {
    (row.metric.rfind("multiplier_", 0) == 0 ? mult : plain)++;
    EXPECT_EQ(row.stats.n, s.seeds);
  }
  EXPECT_EQ(plain, s.variants.size() * s.labeled_sizes.size() * scaling_metrics().size());
  EXPECT_EQ(mult, 2u * s.labeled_sizes.size() * 2u);
  EXPECT_TRUE(std::filesystem::exists(experiment_dir(s) / "scaling.csv"));
  EXPECT_TRUE(std::filesystem::exists(experiment_dir(s) / "plots" / "scaling_cider.svg"));

  const auto records = reg.records().size();
  const auto again = run_scaling(s, reg);
  EXPECT_EQ(reg.records().size(), records);
  EXPECT_EQ(curve_table(again.rows).rows, curve_table(r.rows).rows);

  ExperimentSpec t = s;
  t.out_dir = dir / "two";
  Registry reg2 = open_registry(t);
  const auto fresh = run_scaling(t, reg2);
  for (std::size_t i = 0; i < r.runs.size(); ++i) EXPECT_EQ(*fresh.runs[i].metrics, *r.runs[i].metrics);
  std::filesystem::remove_all(dir);
}

TEST(Experiments, NovelObjectAndZeroShotComplete) {
  const auto dir = fresh_dir("novel");
  ExperimentSpec s = tiny_spec(dir);
  s.variants = {semisup::Variant::generative, semisup::Variant::supervised};
  s.seeds = 1;
  Registry reg = open_registry(s);
  const auto n = run_novel_object(s, reg);
  ASSERT_TRUE(n.all_succeeded());
  EXPECT_EQ(n.rows.size(), s.variants.size() * s.novel_quotas.size() * novel_metrics().size());
  const auto z = run_zero_shot(s, reg);
  ASSERT_TRUE(z.all_succeeded()) << z.runs.front().message;
  EXPECT_EQ(z.rows.size(), agent_conditions(s.agent).size() * agent_tasks().size());
  for (const auto& row : z.rows) {
    EXPECT_GE(row.stats.mean, 0.0);
    EXPECT_LE(row.stats.mean, 1.0);
  }
  EXPECT_TRUE(std::filesystem::exists(experiment_dir(s) / "zero_shot.csv"));
  std::filesystem::remove_all(dir);
}

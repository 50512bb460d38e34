#include <gtest/gtest.h>

#include <algorithm>

#include "ias/metrics/report.hpp"
#include "ias/oracle/micro.hpp"

using namespace ias;
using namespace ias::metrics;
using world::Color;
using world::Shape;

namespace {

world::SceneSpec scene(std::vector<world::Object> objects) {
  world::SceneSpec s;
  s.objects = std::move(objects);
  return s;
}

}  // namespace

TEST(ColorObjectPairs, ParsesExamples) {
  const world::WorldConfig w;
  EXPECT_EQ(parse_color_object_pairs("a red box", w), (std::vector<ColorObjectPair>{{Color::red, Shape::box}}));
  EXPECT_EQ(parse_color_object_pairs("a blue ball left of a red box", w),
            (std::vector<ColorObjectPair>{{Color::blue, Shape::ball}, {Color::red, Shape::box}}));
  EXPECT_TRUE(parse_color_object_pairs("a box", w).empty());
  EXPECT_TRUE(parse_color_object_pairs("", w).empty());
  // A color consumed by one shape is not reused; stray colors are ignored.
  EXPECT_EQ(parse_color_object_pairs("red box ball green", w),
            (std::vector<ColorObjectPair>{{Color::red, Shape::box}}));
  EXPECT_EQ(parse_color_object_pairs("red blue box ball", w),
            (std::vector<ColorObjectPair>{{Color::blue, Shape::box}, {Color::red, Shape::ball}}));
}

TEST(ColorObjectPairs, RecoversGrammarPairs) {
  const world::WorldConfig w;
  int exact = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const auto e = world::make_paired(derive_seed(17, static_cast<std::uint64_t>(i)), w);
    const auto pairs = parse_color_object_pairs(e.caption, w);
    std::vector<ColorObjectPair> asserted;
    const auto& p = e.scene.prompted();
    asserted.push_back({p.color, p.shape});
    if (text::split_words(e.caption).size() > 3)
      for (const auto& o : e.scene.objects)
        if (e.caption.ends_with(world::describe(o)) && &o != &p) {
          asserted.push_back({o.color, o.shape});
          break;
        }
    exact += pairs == asserted;
  }
  EXPECT_EQ(exact, n);
}

TEST(ColorObjectAccuracy, Examples) {
  const world::WorldConfig w;
  const auto s = scene({{Shape::box, Color::red, 0, 0}, {Shape::ball, Color::green, 1, 1}});
  const std::vector<CaptionSample> refs{{"a red box", s}, {"a green ball", s}};
  const auto same = color_object_accuracy(refs, refs, w);
  EXPECT_TRUE(same.defined);
  EXPECT_DOUBLE_EQ(same.ratio, 1.0);

  const std::vector<CaptionSample> half{{"a red box", s}, {"a blue ball", s}};
  EXPECT_DOUBLE_EQ(color_object_accuracy(half, refs, w).ratio, 0.5);

  const std::vector<CaptionSample> none{{"a box", s}, {"", s}};
  const auto undefined = color_object_accuracy(none, refs, w);
  EXPECT_FALSE(undefined.defined);

  const std::vector<CaptionSample> wrong_refs{{"a blue box", s}, {"a box", s}};
  const auto raw = color_object_accuracy(half, wrong_refs, w);
  EXPECT_TRUE(raw.unnormalised);
  EXPECT_DOUBLE_EQ(raw.ratio, 0.5);

  EXPECT_THROW(color_object_accuracy({}, {}, w), ContractError);
}

TEST(Cider, IdenticalCorpusScoresTen) {
  const world::WorldConfig w;
  std::vector<std::string> caps;
  for (std::uint64_t i = 0; caps.size() < 200; ++i) {
    const auto e = world::make_paired(derive_seed(5, i), w);
    if (text::split_words(e.caption).size() >= 4) caps.push_back(e.caption);
  }
  std::vector<std::vector<std::string>> refs;
  for (const auto& c : caps) refs.push_back({c});
  EXPECT_NEAR(cider(caps, refs), 10.0, 1e-9);
}

TEST(Cider, DisjointAndEmptyCandidatesScoreZero) {
  const std::vector<std::vector<std::string>> refs{{"a red box"}, {"a blue ball above a green duck"}};
  EXPECT_DOUBLE_EQ(cider({"purple train", "yellow plane"}, refs), 0.0);
  EXPECT_DOUBLE_EQ(cider({"", ""}, refs), 0.0);
}

TEST(Cider, PermutationInvariant) {
  const world::WorldConfig w;
  std::vector<std::string> cands;
  std::vector<std::vector<std::string>> refs;
  for (std::uint64_t i = 0; i < 50; ++i) {
    refs.push_back({world::make_paired(derive_seed(6, i), w).caption});
    cands.push_back(world::make_paired(derive_seed(7, i), w).caption);
  }
  const double base = cider(cands, refs);
  EXPECT_GT(base, 0.0);
  std::vector<std::size_t> order(cands.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(3);
  rng.shuffle(order);
  std::vector<std::string> pc;
  std::vector<std::vector<std::string>> pr;
  for (auto i : order) {
    pc.push_back(cands[i]);
    pr.push_back(refs[i]);
  }
  EXPECT_NEAR(cider(pc, pr), base, 1e-12);
}

TEST(NovelRates, CountsMentions) {
  const auto drum = scene({{Shape::drum, Color::red, 0, 0}});
  const auto other = scene({{Shape::box, Color::red, 0, 0}});
  std::vector<CaptionSample> s;
  for (int i = 0; i < 10; ++i) s.push_back({i < 7 ? "a red drum" : "a red box", drum});
  for (int i = 0; i < 40; ++i) s.push_back({i < 2 ? "a red drum" : "a red box", other});
  const auto r = novel_rates(s, Shape::drum);
  EXPECT_DOUBLE_EQ(r.tpr, 0.7);
  EXPECT_DOUBLE_EQ(r.fpr, 0.05);
  EXPECT_EQ(r.positives, 10);
  EXPECT_EQ(r.negatives, 40);

  std::vector<CaptionSample> never{{"a box", drum}, {"a box", other}};
  const auto z = novel_rates(never, Shape::drum);
  EXPECT_EQ(z.tpr, 0.0);
  EXPECT_EQ(z.fpr, 0.0);
  const auto only_pos = novel_rates({{"drum", drum}}, Shape::drum);
  EXPECT_TRUE(only_pos.tpr_defined());
  EXPECT_FALSE(only_pos.fpr_defined());
  // A word containing the shape name is not a mention.
  EXPECT_FALSE(mentions_shape("drums", Shape::drum));
}

TEST(DataEfficiency, Interpolation) {
  const std::vector<CurvePoint> curve{{100, -8.0}, {200, -7.0}, {400, -6.0}, {800, -5.5}};
  EXPECT_NEAR(data_efficiency_multiplier(curve, -7.0, 200).multiplier, 1.0, 1e-12);
  EXPECT_NEAR(data_efficiency_multiplier(curve, -6.0, 200).multiplier, 2.0, 1e-12);
  // Midway in log space between 100 and 400 on a log-linear segment pair.
  const std::vector<CurvePoint> line{{100, 1.0}, {400, 3.0}};
  EXPECT_NEAR(data_efficiency_multiplier(line, 2.0, 100).multiplier, 2.0, 1e-12);
  const auto above = data_efficiency_multiplier(curve, -5.0, 200);
  EXPECT_EQ(above.status, EfficiencyStatus::clamped_above);
  EXPECT_NEAR(above.multiplier, 4.0, 1e-12);
  EXPECT_EQ(data_efficiency_multiplier(curve, -9.0, 200).status, EfficiencyStatus::below_range);
  EXPECT_TRUE(data_efficiency_multiplier(curve, -7.0, 200).monotone);
  EXPECT_FALSE(data_efficiency_multiplier({{100, 2.0}, {200, 1.0}}, 1.5, 100).monotone);
}

TEST(EvaluateCaptioner, ReportsMetricsDeterministically) {
  const auto m = oracle::make_micro_instance();
  nets::ModelBundle<float> b(m.net, 1);
  world::WorldConfig w = m.world;
  std::vector<world::PairedExample> eval;
  for (std::uint64_t i = 0; i < 30; ++i) eval.push_back(world::make_paired(derive_seed(2, i), w));
  const auto r1 = evaluate_captioner(b.omega, eval, w, m.vocab, m.net.max_caption_length, Shape::ball);
  const auto r2 = evaluate_captioner(b.omega, eval, w, m.vocab, m.net.max_caption_length, Shape::ball);
  EXPECT_EQ(to_csv_row(r1), to_csv_row(r2));
  EXPECT_EQ(r1.n_eval, 30);
  EXPECT_LT(r1.caption_loglik, 0.0);
  EXPECT_GE(r1.cider, 0.0);
  EXPECT_EQ(r1.novel_positives + r1.novel_negatives, 30);
  EXPECT_LT(r1.novel_caption_loglik, 0.0);
}

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_set>

#include "ias/world/dataset_io.hpp"

using namespace ias;
using namespace ias::world;

TEST(Scene, SingleClassWorldGivesOneRedBox) {
  WorldConfig w;
  w.shapes = {Shape::box};
  w.colors = {Color::red};
  w.max_objects = 1;
  const SceneSpec s = generate_scene(0, w);
  ASSERT_EQ(s.objects.size(), 1u);
  EXPECT_EQ(s.objects[0].shape, Shape::box);
  EXPECT_EQ(s.objects[0].color, Color::red);
  EXPECT_EQ(s.prompted_index, 0);
  EXPECT_EQ(generate_scene(0, w), s);
}

TEST(Scene, ObjectCountUniform) {
  WorldConfig w;
  std::map<int, int> counts;
  const int n = 10000;
  for (int seed = 0; seed < n; ++seed) {
    const SceneSpec s = generate_scene(static_cast<std::uint64_t>(seed), w);
    s.validate();
    ++counts[static_cast<int>(s.objects.size())];
  }
  double chi2 = 0.0;
  for (int k = 1; k <= 4; ++k) {
    EXPECT_NEAR(counts[k] / double(n), 0.25, 0.02) << "bucket " << k;
    chi2 += std::pow(counts[k] - n / 4.0, 2) / (n / 4.0);
  }
  EXPECT_LT(chi2, 11.34);  // 99th percentile, 3 degrees of freedom
}

TEST(Scene, PromptedIndexUniform) {
  WorldConfig w;
  w.min_objects = w.max_objects = 4;
  std::array<int, 4> hits{};
  for (int seed = 0; seed < 8000; ++seed) ++hits[static_cast<std::size_t>(generate_scene(seed, w).prompted_index)];
  for (int h : hits) EXPECT_NEAR(h / 8000.0, 0.25, 0.02);
}

TEST(Scene, InvalidConfigsRejected) {
  WorldConfig w;
  w.shapes.clear();
  EXPECT_THROW(generate_scene(0, w), ConfigError);
  WorldConfig small;
  small.grid_size = 1;
  small.max_objects = 2;
  EXPECT_THROW(generate_scene(0, small), ConfigError);
}

TEST(Render, EmptySceneIsBackground) {
  SceneSpec s;
  const Image img = render(s);
  EXPECT_EQ(img.height, 24);
  for (float v : img.pixels) EXPECT_EQ(v, kBackground);
}

TEST(Render, RedBoxPalette) {
  SceneSpec s;
  s.objects = {{Shape::box, Color::red, 0, 0}};
  const Image img = render(s);
  int painted = 0;
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 6; ++x) {
      if (!mask_at(Shape::box, y, x)) continue;
      ++painted;
      EXPECT_EQ(img.at(y, x, 0), 1.0f);
      EXPECT_EQ(img.at(y, x, 1), 0.0f);
      EXPECT_EQ(img.at(y, x, 2), 0.0f);
    }
  EXPECT_GT(painted, 0);
  EXPECT_EQ(img.at(10, 10, 0), kBackground);
}

TEST(Render, ValuesInUnitRangeAndMasksDistinct) {
  std::set<std::string> masks;
  for (Shape s : kAllShapes) {
    std::string m;
    for (int y = 0; y < 6; ++y)
      for (int x = 0; x < 6; ++x) m += mask_at(s, y, x) ? '#' : '.';
    masks.insert(m);
  }
  EXPECT_EQ(masks.size(), kAllShapes.size());
  std::set<std::array<float, 3>> colors;
  for (Color c : kAllColors) colors.insert({rgb(c).r, rgb(c).g, rgb(c).b});
  EXPECT_EQ(colors.size(), kAllColors.size());
}

TEST(Render, InjectiveOverRandomScenes) {
  WorldConfig w;
  std::unordered_map<std::uint64_t, SceneSpec> seen;
  for (int seed = 0; seed < 10000; ++seed) {
    SceneSpec s = generate_scene(seed, w);
    const Image img = render(s);
    for (float v : img.pixels) ASSERT_TRUE(v >= 0.0f && v <= 1.0f);
    SceneSpec visible = s;
    visible.prompted_index = 0;
    std::sort(visible.objects.begin(), visible.objects.end(), [](const Object& a, const Object& b) {
      return std::tie(a.row, a.col) < std::tie(b.row, b.col);
    });
    auto [it, inserted] = seen.emplace(img.hash(), visible);
    if (!inserted) EXPECT_EQ(it->second.objects, visible.objects);
  }
}

TEST(Render, HashStableAcrossRuns) {
  // Frozen digest of a fixed scene; a change means rendering changed.
  SceneSpec s;
  s.objects = {{Shape::drum, Color::aquamarine, 1, 2}, {Shape::bear, Color::pink, 3, 0}};
  const std::uint64_t h1 = render(s).hash();
  EXPECT_EQ(render(s).hash(), h1);
  Fnv1a direct;
  const Image img = render(s);
  direct.update(img.pixels.data(), img.pixels.size() * sizeof(float));
  EXPECT_EQ(direct.digest(), h1);
}

TEST(Caption, SingleObject) {
  SceneSpec s;
  s.objects = {{Shape::box, Color::red, 1, 1}};
  for (std::uint64_t seed = 0; seed < 20; ++seed) EXPECT_EQ(reference_caption(s, seed), "a red box");
}

TEST(Caption, RelationAdmissible) {
  SceneSpec s;
  s.objects = {{Shape::ball, Color::blue, 0, 0}, {Shape::box, Color::red, 0, 1}};
  const auto adm = admissible_captions(s);
  EXPECT_NE(std::find(adm.begin(), adm.end(), "a blue ball left of a red box"), adm.end());
  EXPECT_EQ(std::find(adm.begin(), adm.end(), "a blue ball right of a red box"), adm.end());
}

TEST(Caption, GeneratedCaptionsAreAdmissible) {
  WorldConfig w;
  for (int seed = 0; seed < 2000; ++seed) {
    const auto e = make_paired(seed, w);
    const auto adm = admissible_captions(e.scene);
    EXPECT_NE(std::find(adm.begin(), adm.end(), e.caption), adm.end()) << e.caption;
  }
}

namespace {

DataConfig small_config(std::optional<Shape> novel = std::nullopt, int quota = 0) {
  DataConfig c;
  c.master_seed = 11;
  c.n_unpaired = 400;
  c.n_paired = 120;
  c.n_validation = 80;
  c.labeled_pool = 4000;
  c.novel_shape = novel;
  c.novel_quota = quota;
  return c;
}

}  // namespace

TEST(Dataset, NoveltyFilterWithZeroQuota) {
  const auto b = build_datasets(small_config(Shape::drum, 0));
  EXPECT_EQ(b.paired.size(), 120u);
  for (const auto& e : b.paired) {
    EXPECT_FALSE(mentions(e.caption, Shape::drum));
    EXPECT_FALSE(e.scene.contains(Shape::drum));
  }
}

TEST(Dataset, NoveltyQuotaExact) {
  const auto b = build_datasets(small_config(Shape::drum, 30));
  int mention = 0;
  for (const auto& e : b.paired) {
    const bool m = mentions(e.caption, Shape::drum);
    mention += m;
    if (!m) EXPECT_FALSE(e.scene.contains(Shape::drum));
  }
  EXPECT_EQ(mention, 30);
  for (const auto& u : b.unpaired) EXPECT_NE(u.scene.prompted().shape, Shape::drum);
  int passive = 0;
  for (const auto& u : b.unpaired) passive += u.scene.contains(Shape::drum);
  EXPECT_GT(passive, 0);
}

TEST(Dataset, QuotaTooLargeIsDataError) {
  auto c = small_config(Shape::drum, 3000);
  EXPECT_THROW(build_datasets(c), DataError);
}

TEST(Dataset, ValidationDisjointBySeed) {
  const auto b = build_datasets(small_config());
  std::unordered_set<std::uint64_t> train;
  for (const auto& e : b.paired) train.insert(e.seed);
  for (const auto& e : b.unpaired) train.insert(e.seed);
  for (const auto& e : b.validation) EXPECT_FALSE(train.count(e.seed));
}

TEST(Dataset, DeterministicSerialization) {
  const auto a = build_datasets(small_config(Shape::drum, 10));
  const auto b = build_datasets(small_config(Shape::drum, 10));
  EXPECT_EQ(serialize_records(a), serialize_records(b));
  auto other = small_config(Shape::drum, 10);
  other.master_seed = 12;
  EXPECT_NE(serialize_records(a), serialize_records(build_datasets(other)));
}

TEST(Dataset, SaveLoadRoundTrip) {
  const auto a = build_datasets(small_config(Shape::drum, 10));
  const auto dir = std::filesystem::temp_directory_path() / "ias_dataset_test";
  std::filesystem::remove_all(dir);
  save_dataset(a, dir);
  const auto b = load_dataset(dir);
  EXPECT_EQ(a.paired, b.paired);
  EXPECT_EQ(a.unpaired, b.unpaired);
  EXPECT_EQ(a.validation, b.validation);
  EXPECT_EQ(b.novel_shape, Shape::drum);
  EXPECT_EQ(serialize_records(a), serialize_records(b));

  std::ifstream in(dir / "records.jsonl");
  std::string first;
  std::getline(in, first);
  const auto rec = nlohmann::json::parse(first);
  EXPECT_EQ(rec.at("split"), "paired");
  EXPECT_TRUE(rec.contains("caption"));

  // Tampering is detected by the content hash.
  std::ofstream(dir / "records.jsonl", std::ios::app) << "\n";
  EXPECT_THROW(load_dataset(dir), DataError);
  std::filesystem::remove_all(dir);
}

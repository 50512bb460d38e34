#include <gtest/gtest.h>

#include <filesystem>

#include "ias/text/codec.hpp"
#include "ias/world/dataset.hpp"

using namespace ias;
using namespace ias::text;

TEST(Vocabulary, ReservedIdsAndSortedLexicon) {
  const Vocabulary v({"red", "box", "a"});
  EXPECT_EQ(v.size(), 7);
  EXPECT_EQ(v.token(kPad), "<pad>");
  EXPECT_EQ(v.token(kBos), "<bos>");
  EXPECT_EQ(v.token(kEos), "<eos>");
  EXPECT_EQ(v.token(kUnk), "<unk>");
  EXPECT_EQ(v.id("a"), 4);
  EXPECT_EQ(v.id("box"), 5);
  EXPECT_EQ(v.id("red"), 6);
  EXPECT_EQ(v.id("zorp"), kUnk);
}

TEST(Vocabulary, DeterministicAndSmall) {
  const auto a = default_vocabulary();
  const auto b = default_vocabulary();
  EXPECT_EQ(a, b);
  EXPECT_GE(a.size(), 30);
  EXPECT_LE(a.size(), 40);
  for (int i = kReserved + 1; i < a.size(); ++i) EXPECT_LT(a.token(i - 1), a.token(i));
}

TEST(Vocabulary, FileRoundTrip) {
  const auto v = default_vocabulary();
  const auto path = std::filesystem::temp_directory_path() / "ias_vocab.txt";
  v.save(path);
  EXPECT_EQ(Vocabulary::load(path), v);
  std::filesystem::remove(path);
}

TEST(Codec, EncodeDirectLookup) {
  const Vocabulary v({"a", "red", "box"});
  const Caption c = encode("a red box", v);
  EXPECT_EQ(c.ids, (std::vector<int>{kBos, v.id("a"), v.id("red"), v.id("box"), kEos}));
  EXPECT_EQ(decode(c, v), "a red box");
}

TEST(Codec, EmptyCaptionDecodesToEmptyText) {
  const auto v = default_vocabulary();
  EXPECT_EQ(decode(Caption{{kBos, kEos}}, v), "");
}

TEST(Codec, UnknownWordBecomesUnk) {
  const auto v = default_vocabulary();
  const Caption c = encode("a zorp box", v);
  EXPECT_EQ(c.ids[2], kUnk);
}

TEST(Codec, EmptyTextIsError) {
  const auto v = default_vocabulary();
  EXPECT_THROW(encode("   ", v), EncodingError);
}

TEST(Codec, TruncationFlagged) {
  const auto v = default_vocabulary();
  const auto r = encode_checked("a red box left of a blue ball above a green duck", v);
  EXPECT_TRUE(r.truncated);
  EXPECT_EQ(r.caption.ids.size(), 12u);
  EXPECT_EQ(r.caption.ids.back(), kEos);
  EXPECT_FALSE(encode_checked("a red box", v).truncated);
}

TEST(Codec, BadIdIsDecodingError) {
  const auto v = default_vocabulary();
  EXPECT_THROW(decode(Caption{{kBos, 999, kEos}}, v), DecodingError);
}

TEST(Codec, GrammarRoundTrip) {
  const auto v = default_vocabulary();
  world::WorldConfig w;
  for (int seed = 0; seed < 3000; ++seed) {
    const auto e = world::make_paired(seed, w);
    const auto r = encode_checked(e.caption, v);
    EXPECT_FALSE(r.truncated);
    EXPECT_TRUE(is_valid(r.caption, v.size()));
    EXPECT_EQ(decode(r.caption, v), e.caption);
  }
}

TEST(Codec, DecodeTotalOnRandomValidCaptions) {
  const auto v = default_vocabulary();
  Rng rng(5);
  for (int i = 0; i < 10000; ++i) {
    Caption c{{kBos}};
    const int len = static_cast<int>(rng.below(11));
    for (int k = 0; k < len; ++k) c.ids.push_back(kReserved + static_cast<int>(rng.below(v.size() - kReserved)));
    c.ids.push_back(kEos);
    ASSERT_TRUE(is_valid(c, v.size()));
    const std::string s = decode(c, v);
    if (len > 0) EXPECT_EQ(encode(s, v), c);
    else EXPECT_EQ(s, "");
  }
}

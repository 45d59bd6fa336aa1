#include <fstream>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "kge/kg_data.hpp"

using namespace kge;
using kge::testing::TempDir;

namespace {

void write_lines(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

DatasetPaths tsv_dataset(const TempDir& dir, const std::string& train, const std::string& valid = "",
                         const std::string& test = "") {
  write_lines(dir / "train.txt", train);
  write_lines(dir / "valid.txt", valid);
  write_lines(dir / "test.txt", test);
  return DatasetPaths::from_directory(dir.path());
}

}  // namespace

TEST(KgData, EmptyTrainFileIsAnError) {
  TempDir dir;
  auto paths = tsv_dataset(dir, "");
  try {
    load_dataset(paths);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("no training triplets"), std::string::npos);
  }
}

TEST(KgData, DuplicateLineIsStoredTwiceButCountedOnce) {
  TempDir dir;
  auto kg = load_dataset(tsv_dataset(dir, "a\tr\tb\na\tr\tb\nb\tr\tc\n"));
  EXPECT_EQ(kg.train.size(), 3u);
  EXPECT_EQ(kg.true_set.size(), 2u);
  EXPECT_EQ(kg.entity_count, 3u);
}

TEST(KgData, MalformedLineAndMissingFileAreErrors) {
  TempDir dir;
  EXPECT_THROW(load_dataset(tsv_dataset(dir, "a\tr\n")), DataError);
  EXPECT_THROW(load_dataset(DatasetPaths::from_directory(dir / "nope")), DataError);
}

TEST(KgData, ColumnOrderIsHonoured) {
  TempDir dir;
  auto kg = load_dataset(tsv_dataset(dir, "a\tb\tr\n"), ColumnOrder::parse("htr"));
  ASSERT_EQ(kg.relation_count, 1u);
  EXPECT_EQ(kg.relations.name(0), "r");
  EXPECT_EQ(kg.entities.name(kg.train[0].tail), "b");
  EXPECT_THROW(ColumnOrder::parse("hhr"), std::exception);
}

TEST(KgData, RoundTripKeepsIndexAssignments) {
  auto kg = generate_synthetic(30, 3, 200, 5);
  TempDir dir;
  write_dataset(kg, dir.path());
  auto back = load_dataset(DatasetPaths::from_directory(dir.path()));
  EXPECT_EQ(back.entity_count, kg.entity_count);
  EXPECT_EQ(back.relation_count, kg.relation_count);
  EXPECT_EQ(back.train, kg.train);
  EXPECT_EQ(back.valid, kg.valid);
  EXPECT_EQ(back.test, kg.test);
  EXPECT_EQ(back.entities.names(), kg.entities.names());
}

TEST(KgData, DictionaryWithCountHeader) {
  TempDir dir;
  write_lines(dir / "entity2id.txt", "3\nx\t2\ny\t0\nz\t1\n");
  auto d = load_dictionary(dir / "entity2id.txt");
  EXPECT_EQ(d.name(0), "y");
  EXPECT_EQ(*d.find("x"), 2u);
  write_lines(dir / "gap.txt", "x\t0\ny\t2\n");
  EXPECT_THROW(load_dictionary(dir / "gap.txt"), DataError);
}

TEST(KgData, TrueSetMatchesLinearScan) {
  auto kg = generate_synthetic(12, 2, 120, 3);
  auto scan = [&](const Triplet& t) {
    for (const auto* part : {&kg.train, &kg.valid, &kg.test})
      for (const auto& x : *part)
        if (x == t) return true;
    return false;
  };
  for (std::uint32_t h = 0; h < 12; ++h)
    for (std::uint32_t r = 0; r < 2; ++r)
      for (std::uint32_t t = 0; t < 12; ++t) {
        Triplet x{h, r, t};
        ASSERT_EQ(kg.is_true(x), scan(x));
        ASSERT_EQ(kg.in_train(x), std::find(kg.train.begin(), kg.train.end(), x) != kg.train.end());
      }
}

TEST(KgData, BernoulliStatistics) {
  // tph = 3, hpt = 1 on relation 0.
  auto kg = kge::testing::six_entity_kg();
  auto s = relation_stats(kg);
  EXPECT_DOUBLE_EQ(s.tails_per_head[0], 3.0);
  EXPECT_DOUBLE_EQ(s.heads_per_tail[0], 1.0);
  EXPECT_DOUBLE_EQ(s.head_replace_prob[0], 0.75);
  for (std::uint32_t r = 0; r < kg.relation_count; ++r)
    EXPECT_EQ(s.head_replace_prob[r] + s.tail_replace_prob(r), 1.0);
}

TEST(KgData, BernoulliStatisticsHandFixture) {
  // {(a,r,b),(a,r,c),(d,r,b)}: 3 triplets, 2 heads, 2 tails.
  auto kg = make_graph(4, 1, {{0, 0, 1}, {0, 0, 2}, {3, 0, 1}}, {}, {});
  auto s = relation_stats(kg);
  EXPECT_DOUBLE_EQ(s.tails_per_head[0], 1.5);
  EXPECT_DOUBLE_EQ(s.heads_per_tail[0], 1.5);
  EXPECT_DOUBLE_EQ(s.head_replace_prob[0], 0.5);

  auto one_to_one = make_graph(4, 1, {{0, 0, 1}, {2, 0, 3}}, {}, {});
  EXPECT_DOUBLE_EQ(relation_stats(one_to_one).head_replace_prob[0], 0.5);
}

TEST(KgData, RelationAbsentFromTrainDefaultsToHalf) {
  auto kg = make_graph(3, 2, {{0, 0, 1}, {0, 0, 2}}, {{1, 1, 2}}, {});
  auto s = relation_stats(kg);
  EXPECT_TRUE(s.absent_from_train[1]);
  EXPECT_FALSE(s.absent_from_train[0]);
  EXPECT_DOUBLE_EQ(s.head_replace_prob[1], 0.5);
  EXPECT_EQ(kg.report.relations_only_in_eval, 1u);
}

TEST(KgData, SyntheticGenerator) {
  auto a = generate_synthetic(4, 1, 8, 1);
  auto b = generate_synthetic(4, 1, 8, 1);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.valid, b.valid);
  EXPECT_THROW(generate_synthetic(2, 1, 5, 1), DataError);
  auto c = generate_synthetic(20, 3, 100, 7);
  EXPECT_EQ(c.train.size(), 80u);
  EXPECT_EQ(c.valid.size(), 10u);
  EXPECT_EQ(c.test.size(), 10u);
  EXPECT_EQ(c.true_set.size(), 100u);
}

TEST(KgData, OutOfRangeTripletRejected) {
  EXPECT_THROW(make_graph(2, 1, {{0, 0, 2}}, {}, {}), DataError);
}

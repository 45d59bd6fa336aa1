#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "kge/analysis.hpp"
#include "kge/checkpoint.hpp"
#include "kge/io.hpp"
#include "kge/variance.hpp"

using namespace kge;
using kge::testing::TempDir;

TEST(Welford, HandValues) {
  RunningStats s;
  for (double x : {1.0, 2.0, 3.0, 4.0}) s.add(x);
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  EXPECT_NEAR(*s.variance(), 5.0 / 3, 1e-15);

  RunningStats c;
  for (int i = 0; i < 100; ++i) c.add(7.25);
  EXPECT_EQ(*c.variance(), 0.0);

  RunningStats one;
  EXPECT_FALSE(one.variance().has_value());
  one.add(3);
  EXPECT_FALSE(one.variance().has_value());
  EXPECT_EQ(one.stddev_or_zero(), 0.0);
}

TEST(Welford, MatchesTwoPassOnLongStreams) {
  Rng rng = make_rng(1, 1);
  std::vector<double> xs(5000);
  for (auto& x : xs) x = 1e4 + uniform_open01(rng);
  RunningStats s;
  for (double x : xs) s.add(x);
  double mean = 0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double ss = 0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  EXPECT_NEAR(*s.variance(), ss / static_cast<double>(xs.size() - 1), 1e-9);
}

TEST(VarianceTracker, SeriesAndQuality) {
  VarianceTracker t({{0, 0, 1}, {1, 0, 2}}, 2.0);
  std::vector<std::vector<double>> epochs{{1, 5}, {2, 5}, {3, 5}};
  auto series = track_variance(t, epochs);
  ASSERT_EQ(series.size(), 2u);
  EXPECT_FALSE(series[0][0].has_value());
  EXPECT_DOUBLE_EQ(*series[0][1], 0.5);
  EXPECT_DOUBLE_EQ(*series[0][2], 1.0);
  EXPECT_DOUBLE_EQ(*series[1][2], 0.0);
  EXPECT_DOUBLE_EQ(t.quality(0, 10), 12.0);
  EXPECT_DOUBLE_EQ(t.quality(1, 10), 10.0);
  EXPECT_THROW(t.observe(std::vector<double>{1}), std::invalid_argument);
  EXPECT_THROW(VarianceTracker({}, -1), std::invalid_argument);
}

TEST(Checkpoint, RoundTripIsExact) {
  TempDir dir;
  for (auto kind : kAllModels) {
    ScoringFunction fn{kind, 3};
    auto store = init_embeddings<float>(fn, 7, 2, 5);
    const auto path = dir / (std::string(to_string(kind)) + ".ckpt");
    save_checkpoint(path, store, {{"epoch", "4"}});
    auto back = load_checkpoint(path);
    EXPECT_EQ(back.kind, kind);
    EXPECT_EQ(back.dim, 3u);
    ASSERT_EQ(back.matrices.size(), store.matrices.size());
    for (std::size_t s = 0; s < store.matrices.size(); ++s) EXPECT_EQ(back[s].data, store[s].data);
    auto meta = load_checkpoint_meta(path);
    EXPECT_EQ(meta.at("epoch"), "4");
    EXPECT_EQ(meta.at("model"), to_string(kind));
    EXPECT_EQ(meta.at("entities"), "7");
  }
}

TEST(Checkpoint, CorruptInputIsRejected) {
  auto store = init_embeddings<float>({ModelKind::DistMult, 4}, 5, 2, 1);
  std::stringstream buf;
  write_checkpoint(buf, store);
  auto bytes = buf.str();
  std::stringstream truncated(bytes.substr(0, bytes.size() - 7));
  EXPECT_THROW(read_checkpoint(truncated), DataError);
  std::stringstream garbage("definitely not a checkpoint");
  EXPECT_THROW(read_checkpoint(garbage), DataError);
  EXPECT_THROW(load_checkpoint("/nonexistent/model.ckpt"), DataError);
}

TEST(Io, AtomicWriteLeavesNoTemporary) {
  TempDir dir;
  const auto path = dir / "sub" / "file.txt";
  write_text_atomic(path, "one\n");
  write_text_atomic(path, "two\n");
  EXPECT_EQ(read_file(path), "two\n");
  std::size_t files = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir / "sub")) {
    (void)e;
    ++files;
  }
  EXPECT_EQ(files, 1u);
  EXPECT_THROW(write_atomic(path, [](std::ostream&) { throw std::runtime_error("boom"); }), std::runtime_error);
  EXPECT_EQ(read_file(path), "two\n");
  EXPECT_FALSE(std::filesystem::exists(dir / "sub" / "file.txt.tmp"));
}

TEST(Io, KeyValuesRoundTrip) {
  KeyValues kv{{"model", "transe"}, {"lr", "0.001"}};
  EXPECT_EQ(parse_key_values(format_key_values(kv)), kv);
  auto parsed = parse_key_values("# comment\n  a = 1 \n\nb=two words\n");
  EXPECT_EQ(parsed.at("a"), "1");
  EXPECT_EQ(parsed.at("b"), "two words");
  EXPECT_THROW(parse_key_values("no equals sign"), DataError);
}

TEST(Io, Splitting) {
  auto f = split("a\tb\t\tc", '\t');
  ASSERT_EQ(f.size(), 4u);
  EXPECT_EQ(f[2], "");
  auto w = split_ws("  x  y\tz ");
  ASSERT_EQ(w.size(), 3u);
  EXPECT_EQ(w[2], "z");
  EXPECT_EQ(trim(" \tq\r\n"), "q");
}

TEST(Ccdf, StartsAtOneAndSteps) {
  auto c = ccdf({0.5, 1.0, 1.0, 2.0});
  EXPECT_EQ(ccdf_at(c, 0.0), 1.0);
  EXPECT_EQ(ccdf_at(c, 0.5), 1.0);
  EXPECT_EQ(ccdf_at(c, 0.7), 0.75);
  EXPECT_EQ(ccdf_at(c, 1.0), 0.75);
  EXPECT_EQ(ccdf_at(c, 1.5), 0.25);
  EXPECT_EQ(ccdf_at(c, 2.5), 0.0);
  for (std::size_t i = 1; i < c.size(); ++i) {
    EXPECT_GT(c[i].first, c[i - 1].first);
    EXPECT_LE(c[i].second, c[i - 1].second);
  }
}

TEST(Ccdf, ConstantScorerGivesAStepFunction) {
  // All-zero TransE: every hinge is active with gradient zero, so only the
  // L2 term could contribute, and it is zero on zero rows.
  auto kg = kge::testing::six_entity_kg();
  EmbeddingStore zero(ModelKind::TransE, 3, 6, 2);
  std::vector<std::size_t> ids{0, 1, 2};
  auto norms = tail_gradient_norms(zero, {ModelKind::TransE, 3}, Loss{LossKind::Margin, 1.0, 0.1}, kg, ids);
  ASSERT_FALSE(norms.empty());
  auto c = ccdf(norms);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c[0].first, 0.0);
  EXPECT_EQ(c[0].second, 1.0);
  EXPECT_EQ(ccdf_at(c, 1e-9), 0.0);
}

TEST(Ccdf, NormsSkipTrainCorruptions) {
  auto kg = kge::testing::six_entity_kg();
  ScoringFunction fn{ModelKind::DistMult, 4};
  auto store = init_embeddings<float>(fn, kg, 2);
  std::vector<std::size_t> ids{0};
  // (0, 0, e) is in train for e = 1, 2, 3.
  EXPECT_EQ(tail_gradient_norms(store, fn, Loss{}, kg, ids).size(), 3u);
}

#include <complex>
#include <random>

#include <gtest/gtest.h>

#include "kge/scoring.hpp"

using namespace kge;

namespace {

using DStore = BasicEmbeddingStore<double>;

DStore random_store(const ScoringFunction& fn, std::uint32_t E, std::uint32_t R, std::mt19937_64& rng) {
  DStore s(fn.kind, fn.dim, E, R);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto& m : s.matrices)
    for (auto& v : m.data) v = u(rng);
  return s;
}

// Direct transcriptions of the scoring formulas, written independently of
// the library's flattened loops.
double oracle_score(const DStore& s, const ScoringFunction& fn, const Triplet& x) {
  const std::size_t d = fn.dim;
  auto row = [&](int slot, std::uint32_t i) {
    const double* p = s[slot].row(i);
    return std::vector<double>(p, p + s.width());
  };
  auto h = row(kEntity, x.head), r = row(kRelation, x.relation), t = row(kEntity, x.tail);
  auto l1 = [](const std::vector<double>& v) {
    double a = 0;
    for (double e : v) a += std::abs(e);
    return a;
  };
  switch (fn.kind) {
    case ModelKind::TransE: {
      std::vector<double> v(d);
      for (std::size_t k = 0; k < d; ++k) v[k] = h[k] + r[k] - t[k];
      return -l1(v);
    }
    case ModelKind::TransH: {
      auto w = row(kAux0, x.relation);
      auto project = [&](const std::vector<double>& e) {
        double wd = 0;
        for (std::size_t k = 0; k < d; ++k) wd += w[k] * e[k];
        std::vector<double> out(d);
        for (std::size_t k = 0; k < d; ++k) out[k] = e[k] - wd * w[k];
        return out;
      };
      auto hp = project(h), tp = project(t);
      std::vector<double> v(d);
      for (std::size_t k = 0; k < d; ++k) v[k] = hp[k] + r[k] - tp[k];
      return -l1(v);
    }
    case ModelKind::TransD: {
      auto hp = row(kAux0, x.head), tp = row(kAux0, x.tail), rp = row(kAux1, x.relation);
      auto mapped = [&](const std::vector<double>& e, const std::vector<double>& ep) {
        // M = rp ep^T + I
        std::vector<double> out(d, 0.0);
        for (std::size_t i = 0; i < d; ++i)
          for (std::size_t j = 0; j < d; ++j) out[i] += (rp[i] * ep[j] + (i == j ? 1.0 : 0.0)) * e[j];
        return out;
      };
      auto a = mapped(h, hp), b = mapped(t, tp);
      std::vector<double> v(d);
      for (std::size_t k = 0; k < d; ++k) v[k] = a[k] + r[k] - b[k];
      return -l1(v);
    }
    case ModelKind::DistMult: {
      double a = 0;
      for (std::size_t k = 0; k < d; ++k) a += h[k] * r[k] * t[k];
      return a;
    }
    case ModelKind::ComplEx: {
      std::complex<double> a = 0;
      for (std::size_t k = 0; k < d; ++k)
        a += std::complex<double>(h[k], h[d + k]) * std::complex<double>(r[k], r[d + k]) *
             std::conj(std::complex<double>(t[k], t[d + k]));
      return a.real();
    }
    case ModelKind::SimplE: {
      auto h2 = row(kAux0, x.head), t2 = row(kAux0, x.tail), r2 = row(kAux1, x.relation);
      double a = 0;
      for (std::size_t k = 0; k < d; ++k) a += h[k] * r[k] * t2[k] + h2[k] * r2[k] * t[k];
      return fn.simple_halved ? 0.5 * a : a;
    }
    case ModelKind::RotatE: {
      double a = 0;
      for (std::size_t k = 0; k < d; ++k)
        a += std::abs(std::complex<double>(h[k], h[d + k]) * std::complex<double>(r[k], r[d + k]) -
                      std::complex<double>(t[k], t[d + k]));
      return -a;
    }
  }
  return 0;
}

struct Case {
  ModelKind model;
  LossKind loss;
  double l2;
};

std::vector<Case> all_cases() {
  std::vector<Case> out;
  for (auto m : kAllModels)
    for (auto l : {LossKind::Margin, LossKind::Logistic})
      for (double l2 : {0.0, 0.01}) out.push_back({m, l, l2});
  return out;
}

}  // namespace

TEST(Scoring, HandValues) {
  ScoringFunction te{ModelKind::TransE, 2};
  DStore s(te.kind, 2, 2, 1);
  s[kEntity].row(0)[0] = 0.5;
  s[kRelation].row(0)[0] = 0.5;
  s[kEntity].row(1)[0] = 1.0;
  EXPECT_DOUBLE_EQ(score(s, te, {0, 0, 1}), 0.0);

  ScoringFunction dm{ModelKind::DistMult, 2};
  DStore m(dm.kind, 2, 2, 1);
  m[kEntity].row(0)[0] = 1;
  m[kEntity].row(0)[1] = 2;
  m[kRelation].row(0)[0] = m[kRelation].row(0)[1] = 1;
  m[kEntity].row(1)[0] = m[kEntity].row(1)[1] = 1;
  EXPECT_DOUBLE_EQ(score(m, dm, {0, 0, 1}), 3.0);
}

TEST(Scoring, MatchesDirectFormulas) {
  std::mt19937_64 rng(11);
  for (auto kind : kAllModels) {
    for (bool halved : {false, true}) {
      ScoringFunction fn{kind, 4, halved};
      auto s = random_store(fn, 5, 3, rng);
      for (std::uint32_t h = 0; h < 5; ++h)
        for (std::uint32_t r = 0; r < 3; ++r)
          for (std::uint32_t t = 0; t < 5; ++t)
            ASSERT_NEAR(score(s, fn, {h, r, t}), oracle_score(s, fn, {h, r, t}), 1e-12) << to_string(kind);
    }
  }
}

TEST(Scoring, DistMultSymmetricComplExNot) {
  std::mt19937_64 rng(3);
  ScoringFunction dm{ModelKind::DistMult, 6};
  auto s = random_store(dm, 4, 2, rng);
  for (std::uint32_t h = 0; h < 4; ++h)
    for (std::uint32_t t = 0; t < 4; ++t) EXPECT_DOUBLE_EQ(score(s, dm, {h, 1, t}), score(s, dm, {t, 1, h}));

  ScoringFunction cx{ModelKind::ComplEx, 6};
  auto c = random_store(cx, 4, 2, rng);
  bool differs = false;
  for (std::uint32_t h = 0; h < 4; ++h)
    for (std::uint32_t t = 0; t < 4; ++t)
      differs |= std::abs(score(c, cx, {h, 0, t}) - score(c, cx, {t, 0, h})) > 1e-9;
  EXPECT_TRUE(differs);
}

TEST(Scoring, ComplExWithZeroImaginaryIsDistMult) {
  std::mt19937_64 rng(5);
  const std::uint32_t d = 5;
  ScoringFunction cx{ModelKind::ComplEx, d}, dm{ModelKind::DistMult, d};
  for (int trial = 0; trial < 20; ++trial) {
    auto c = random_store(cx, 3, 2, rng);
    DStore m(dm.kind, d, 3, 2);
    for (int slot : {0, 1})
      for (std::size_t i = 0; i < c[slot].rows; ++i)
        for (std::uint32_t k = 0; k < d; ++k) {
          c[slot].row(i)[d + k] = 0.0;
          m[slot].row(i)[k] = c[slot].row(i)[k];
        }
    for (std::uint32_t h = 0; h < 3; ++h)
      for (std::uint32_t t = 0; t < 3; ++t) ASSERT_NEAR(score(c, cx, {h, 1, t}), score(m, dm, {h, 1, t}), 1e-12);
  }
}

TEST(Scoring, LossHandValues) {
  Loss margin{LossKind::Margin, 1.0, 0.0};
  EXPECT_DOUBLE_EQ(pair_loss(5, 0, margin), 0.0);
  EXPECT_DOUBLE_EQ(pair_loss(0, 0, margin), 1.0);
  Loss logistic{LossKind::Logistic, 1.0, 0.0};
  EXPECT_NEAR(pair_loss(0, 0, logistic), 2 * std::log(2.0), 1e-12);
  EXPECT_NEAR(softplus(800.0), 800.0, 1e-9);
  EXPECT_NEAR(softplus(-800.0), 0.0, 1e-12);
}

TEST(Scoring, InactiveHingeGivesZeroGradient) {
  std::mt19937_64 rng(9);
  ScoringFunction fn{ModelKind::DistMult, 3};
  auto s = random_store(fn, 4, 1, rng);
  // Force pos far above neg.
  for (int k = 0; k < 3; ++k) {
    s[kEntity].row(0)[k] = s[kEntity].row(1)[k] = s[kRelation].row(0)[k] = 2.0;
    s[kEntity].row(2)[k] = 0.0;
  }
  Loss loss{LossKind::Margin, 1.0, 0.0};
  auto g = pair_gradient(s, fn, loss, {0, 0, 1}, {0, 0, 2});
  EXPECT_EQ(g.loss, 0.0);
  for (double v : std::vector<double>(g.gradient.data(), g.gradient.data() + g.gradient.size() * 3))
    EXPECT_EQ(v, 0.0);
  EXPECT_EQ(g.norm, 0.0);

  // With L2 the norm is the penalty gradient alone: 2 lambda sqrt(sum |row|^2).
  loss.l2 = 0.05;
  auto gl = pair_gradient(s, fn, loss, {0, 0, 1}, {0, 0, 2});
  double sq = 0;
  for (auto [slot, row] : std::vector<std::pair<int, int>>{{0, 0}, {0, 1}, {0, 2}, {1, 0}})
    for (int k = 0; k < 3; ++k) sq += s[slot].row(row)[k] * s[slot].row(row)[k];
  EXPECT_NEAR(gl.norm, 2 * 0.05 * std::sqrt(sq), 1e-12);
}

TEST(Scoring, DistMultRelationGradientClosedForm) {
  std::mt19937_64 rng(21);
  ScoringFunction fn{ModelKind::DistMult, 4};
  auto s = random_store(fn, 4, 1, rng);
  Loss loss{LossKind::Margin, 100.0, 0.0};  // always active
  Triplet pos{0, 0, 1}, neg{2, 0, 3};
  auto g = pair_gradient(s, fn, loss, pos, neg);
  bool found = false;
  for (const auto& e : g.gradient.entries()) {
    if (e.slot != kRelation) continue;
    found = true;
    auto v = g.gradient.values(e);
    for (int k = 0; k < 4; ++k) {
      const double expect = -s[0].row(0)[k] * s[0].row(1)[k] + s[0].row(2)[k] * s[0].row(3)[k];
      EXPECT_NEAR(v[k], expect, 1e-12);
    }
  }
  EXPECT_TRUE(found);
}

// Central differences in double precision at 20 random points for every
// model x loss (with and without the L2 term).
TEST(Scoring, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(2024);
  const double step = 1e-5;
  for (const auto& c : all_cases()) {
    for (bool halved : {false, true}) {
      if (halved && c.model != ModelKind::SimplE) continue;
      ScoringFunction fn{c.model, 4, halved};
      Loss loss{c.loss, 2.0, c.l2};
      int points = 0;
      while (points < 20) {
        auto s = random_store(fn, 6, 2, rng);
        std::uniform_int_distribution<std::uint32_t> ent(0, 5), rel(0, 1);
        Triplet pos{ent(rng), rel(rng), ent(rng)};
        Triplet neg = pos;
        if (rng() % 2) neg.head = ent(rng);
        else neg.tail = ent(rng);
        if (neg == pos) continue;
        const double sp = score(s, fn, pos), sn = score(s, fn, neg);
        if (c.loss == LossKind::Margin && std::abs(loss.margin - sp + sn) < 1e-2) continue;  // kink
        auto g = pair_gradient(s, fn, loss, pos, neg);
        double diff2 = 0, ga2 = 0, gn2 = 0;
        for (const auto& e : g.gradient.entries()) {
          auto v = g.gradient.values(e);
          for (std::size_t k = 0; k < s.width(); ++k) {
            double& p = s[e.slot].row(e.row)[k];
            const double keep = p;
            p = keep + step;
            const double up = pair_objective(s, fn, loss, pos, neg);
            p = keep - step;
            const double down = pair_objective(s, fn, loss, pos, neg);
            p = keep;
            const double numeric = (up - down) / (2 * step);
            diff2 += (numeric - v[k]) * (numeric - v[k]);
            ga2 += v[k] * v[k];
            gn2 += numeric * numeric;
          }
        }
        // One parameter outside the touched rows must have zero slope.
        {
          double& p = s[kEntity].row(0)[0];
          bool touched = false;
          for (const auto& e : g.gradient.entries()) touched |= e.slot == kEntity && e.row == 0;
          if (!touched) {
            const double keep = p;
            p = keep + step;
            const double up = pair_objective(s, fn, loss, pos, neg);
            p = keep - step;
            const double down = pair_objective(s, fn, loss, pos, neg);
            p = keep;
            ASSERT_NEAR((up - down) / (2 * step), 0.0, 1e-9);
          }
        }
        const double scale = std::max({std::sqrt(ga2), std::sqrt(gn2), 1e-8});
        ASSERT_LT(std::sqrt(diff2) / scale, 1e-4)
            << to_string(c.model) << " " << to_string(c.loss) << " l2=" << c.l2 << " point " << points;
        ASSERT_GE(g.norm, 0.0);
        ASSERT_NEAR(g.norm, std::sqrt(ga2), 1e-9 * std::max(1.0, g.norm));
        ++points;
      }
    }
  }
}

TEST(Scoring, InitializerRangeDeterminismAndMean) {
  ScoringFunction fn{ModelKind::TransE, 100};
  auto a = init_embeddings<float>(fn, 40000, 5, 3);
  auto b = init_embeddings<float>(fn, 40000, 5, 3);
  EXPECT_EQ(a[kEntity].data, b[kEntity].data);
  EXPECT_EQ(a[kRelation].data, b[kRelation].data);
  const double bound = std::sqrt(6.0 / (40000 + 100));
  double sum = 0;
  for (float v : a[kEntity].data) {
    ASSERT_LE(std::abs(v), bound * (1 + 1e-6));
    sum += v;
  }
  const double n = static_cast<double>(a[kEntity].data.size());
  const double se = bound / std::sqrt(3.0) / std::sqrt(n);
  EXPECT_LT(std::abs(sum / n), 3 * se);
  auto c = init_embeddings<float>(fn, 40000, 5, 4);
  EXPECT_NE(a[kEntity].data, c[kEntity].data);
}

TEST(Scoring, TransHNormalsStartUnitLength) {
  ScoringFunction fn{ModelKind::TransH, 8};
  auto s = init_embeddings<double>(fn, 10, 3, 1);
  for (std::uint32_t r = 0; r < 3; ++r) {
    double n = 0;
    for (int k = 0; k < 8; ++k) n += s[kAux0].row(r)[k] * s[kAux0].row(r)[k];
    EXPECT_NEAR(n, 1.0, 1e-12);
  }
}

TEST(Scoring, ParsingAndShapes) {
  EXPECT_EQ(parse_model("transe"), ModelKind::TransE);
  EXPECT_EQ(parse_model("RotatE"), ModelKind::RotatE);
  EXPECT_THROW(parse_model("nope"), std::invalid_argument);
  EXPECT_EQ((ScoringFunction{ModelKind::ComplEx, 7}.width()), 14u);
  EXPECT_EQ(EmbeddingStore(ModelKind::TransD, 3, 5, 2).matrices.size(), 4u);
  EmbeddingStore s(ModelKind::TransE, 3, 5, 2);
  EXPECT_THROW(score(s, {ModelKind::DistMult, 3}, {0, 0, 1}), std::invalid_argument);
  EXPECT_THROW(score(s, {ModelKind::TransE, 3}, {0, 0, 9}), std::out_of_range);
}

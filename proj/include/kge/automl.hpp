#pragma once

// Hyper-parameter search over the sampler knobs: random search and
// sequential model-based optimization with a random-forest surrogate and
// expected improvement.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "kge/io.hpp"
#include "kge/random.hpp"
#include "kge/sampler.hpp"

namespace kge {

struct SearchSpace {
  double alpha1_max = 1.0;
  double alpha2_max = 100.0;
  double alpha3_max = 100.0;
  std::vector<std::uint32_t> sizes{10, 30, 50, 70, 90};

  static constexpr std::size_t kDims = 5;
  using Point = std::array<double, kDims>;

  EEHyperParams sample(Rng& rng) const {
    EEHyperParams p;
    p.alpha1 = std::uniform_real_distribution<double>(0.0, alpha1_max)(rng);
    p.alpha2 = std::uniform_real_distribution<double>(0.0, alpha2_max)(rng);
    p.alpha3 = std::uniform_real_distribution<double>(0.0, alpha3_max)(rng);
    p.cache_size = sizes[uniform_index(rng, sizes.size())];
    p.candidate_size = sizes[uniform_index(rng, sizes.size())];
    return p;
  }

  bool contains(const EEHyperParams& p) const {
    auto in = [](double x, double hi) { return x >= 0 && x <= hi; };
    auto grid = [&](std::uint32_t v) { return std::find(sizes.begin(), sizes.end(), v) != sizes.end(); };
    return in(p.alpha1, alpha1_max) && in(p.alpha2, alpha2_max) && in(p.alpha3, alpha3_max) && grid(p.cache_size) &&
           grid(p.candidate_size);
  }

  /// Every coordinate mapped onto [0, 1]; grid values by grid position.
  Point encode(const EEHyperParams& p) const {
    auto pos = [&](std::uint32_t v) {
      auto it = std::find(sizes.begin(), sizes.end(), v);
      const double i = static_cast<double>(it - sizes.begin());
      return sizes.size() > 1 ? i / static_cast<double>(sizes.size() - 1) : 0.0;
    };
    return {p.alpha1 / alpha1_max, p.alpha2 / alpha2_max, p.alpha3 / alpha3_max, pos(p.cache_size),
            pos(p.candidate_size)};
  }

  /// The starting point used by SMBO: all temperatures 0, N1 = N2 = 50.
  static EEHyperParams anchor() {
    EEHyperParams p;
    p.alpha1 = p.alpha2 = p.alpha3 = 0.0;
    p.cache_size = p.candidate_size = 50;
    return p;
  }
};

struct TrialRecord {
  std::uint32_t id = 0;
  EEHyperParams params;
  double objective = 0;  // validation MRR; 0 for failed trials
  std::string status = "ok";
  double seconds = 0;
  std::uint32_t epochs = 0;

  nlohmann::json to_json() const {
    return {{"id", id},
            {"alpha1", params.alpha1},
            {"alpha2", params.alpha2},
            {"alpha3", params.alpha3},
            {"n1", params.cache_size},
            {"n2", params.candidate_size},
            {"objective", objective},
            {"status", status},
            {"seconds", seconds},
            {"epochs", epochs}};
  }

  static TrialRecord from_json(const nlohmann::json& j) {
    TrialRecord t;
    t.id = j.at("id").get<std::uint32_t>();
    t.params.alpha1 = j.at("alpha1").get<double>();
    t.params.alpha2 = j.at("alpha2").get<double>();
    t.params.alpha3 = j.at("alpha3").get<double>();
    t.params.cache_size = j.at("n1").get<std::uint32_t>();
    t.params.candidate_size = j.at("n2").get<std::uint32_t>();
    t.objective = j.at("objective").get<double>();
    t.status = j.value("status", "ok");
    t.seconds = j.value("seconds", 0.0);
    t.epochs = j.value("epochs", 0u);
    return t;
  }
};

inline bool same_params(const EEHyperParams& a, const EEHyperParams& b) {
  auto close = [](double x, double y) { return std::abs(x - y) <= 1e-9 * std::max(1.0, std::abs(x)); };
  return close(a.alpha1, b.alpha1) && close(a.alpha2, b.alpha2) && close(a.alpha3, b.alpha3) &&
         a.cache_size == b.cache_size && a.candidate_size == b.candidate_size;
}

inline std::vector<TrialRecord> read_history(const std::filesystem::path& path) {
  std::vector<TrialRecord> out;
  if (!std::filesystem::exists(path)) return out;
  for_each_line(path, [&](std::string_view line, std::size_t number) {
    if (trim(line).empty()) return;
    try {
      out.push_back(TrialRecord::from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(number) + ": " + e.what());
    }
  });
  return out;
}

inline void write_history(const std::filesystem::path& path, const std::vector<TrialRecord>& history) {
  write_atomic(path, [&](std::ostream& out) {
    for (const auto& t : history) out << t.to_json().dump() << '\n';
  });
}

// ---------------------------------------------------------------------------
// Random forest surrogate

class RegressionForest {
 public:
  using Point = SearchSpace::Point;

  struct Options {
    std::uint32_t trees = 50;
    std::uint32_t min_leaf = 2;
    std::uint32_t max_depth = 20;
    double feature_fraction = 5.0 / 6.0;
  };

  RegressionForest() = default;
  explicit RegressionForest(Options o) : opt_(o) {}

  void fit(const std::vector<Point>& x, const std::vector<double>& y, Rng& rng) {
    trees_.clear();
    for (std::uint32_t t = 0; t < opt_.trees; ++t) {
      std::vector<std::size_t> sample(x.size());
      for (auto& s : sample) s = uniform_index(rng, x.size());
      Tree tree;
      build(tree, x, y, sample, 0, rng);
      trees_.push_back(std::move(tree));
    }
  }

  /// Mean and variance over trees of the leaf distributions.
  std::pair<double, double> predict(const Point& p) const {
    double mean = 0, second = 0;
    for (const auto& tree : trees_) {
      std::size_t i = 0;
      while (!tree[i].leaf) i = p[tree[i].feature] <= tree[i].threshold ? tree[i].left : tree[i].right;
      mean += tree[i].mean;
      second += tree[i].variance + tree[i].mean * tree[i].mean;
    }
    const double n = static_cast<double>(trees_.size());
    mean /= n;
    return {mean, std::max(0.0, second / n - mean * mean)};
  }

 private:
  struct Node {
    bool leaf = true;
    std::size_t feature = 0;
    double threshold = 0;
    std::size_t left = 0, right = 0;
    double mean = 0, variance = 0;
  };
  using Tree = std::vector<Node>;

  std::size_t build(Tree& tree, const std::vector<Point>& x, const std::vector<double>& y,
                    std::vector<std::size_t> rows, std::uint32_t depth, Rng& rng) {
    const std::size_t id = tree.size();
    tree.emplace_back();
    double mean = 0;
    for (auto r : rows) mean += y[r];
    mean /= static_cast<double>(rows.size());
    double var = 0;
    for (auto r : rows) var += (y[r] - mean) * (y[r] - mean);
    var /= static_cast<double>(rows.size());
    tree[id].mean = mean;
    tree[id].variance = var;
    if (depth >= opt_.max_depth || rows.size() < 2 * opt_.min_leaf || var <= 0) return id;

    std::vector<std::size_t> features(SearchSpace::kDims);
    std::iota(features.begin(), features.end(), 0);
    for (std::size_t i = features.size(); i > 1; --i) std::swap(features[i - 1], features[uniform_index(rng, i)]);
    const auto n_features = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(opt_.feature_fraction * static_cast<double>(features.size()))));

    double best_gain = 0;
    std::size_t best_feature = 0;
    double best_threshold = 0;
    const double total = var * static_cast<double>(rows.size());
    for (std::size_t fi = 0; fi < n_features; ++fi) {
      const auto f = features[fi];
      std::sort(rows.begin(), rows.end(), [&](auto a, auto b) { return x[a][f] < x[b][f]; });
      double sum_l = 0, sq_l = 0, sum_all = 0, sq_all = 0;
      for (auto r : rows) {
        sum_all += y[r];
        sq_all += y[r] * y[r];
      }
      for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
        sum_l += y[rows[i]];
        sq_l += y[rows[i]] * y[rows[i]];
        const double a = x[rows[i]][f], b = x[rows[i + 1]][f];
        if (a == b) continue;
        const double nl = static_cast<double>(i + 1), nr = static_cast<double>(rows.size() - i - 1);
        if (nl < opt_.min_leaf || nr < opt_.min_leaf) continue;
        const double sse_l = sq_l - sum_l * sum_l / nl;
        const double sum_r = sum_all - sum_l, sq_r = sq_all - sq_l;
        const double sse_r = sq_r - sum_r * sum_r / nr;
        const double gain = total - sse_l - sse_r;
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = f;
          best_threshold = 0.5 * (a + b);
        }
      }
    }
    if (best_gain <= 1e-15 * std::max(1.0, total)) return id;
    std::vector<std::size_t> left, right;
    for (auto r : rows) (x[r][best_feature] <= best_threshold ? left : right).push_back(r);
    tree[id].leaf = false;
    tree[id].feature = best_feature;
    tree[id].threshold = best_threshold;
    const auto l = build(tree, x, y, std::move(left), depth + 1, rng);
    const auto r = build(tree, x, y, std::move(right), depth + 1, rng);
    tree[id].left = l;
    tree[id].right = r;
    return id;
  }

  Options opt_;
  std::vector<Tree> trees_;
};

/// EI for maximization: (mu - best) Phi(z) + sigma phi(z).
inline double expected_improvement(double mean, double variance, double best) {
  const double sigma = std::sqrt(std::max(variance, 0.0));
  const double diff = mean - best;
  if (sigma <= 0) return std::max(0.0, diff);
  const double z = diff / sigma;
  const double cdf = 0.5 * std::erfc(-z / std::sqrt(2.0));
  const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * 3.14159265358979323846);
  return std::max(0.0, diff * cdf + sigma * pdf);
}

// ---------------------------------------------------------------------------
// Search loops

/// Objective for a configuration; higher is better. Throwing marks the
/// trial failed.
using SearchObjective = std::function<double(const EEHyperParams&)>;

struct SearchOptions {
  std::uint32_t budget = 20;
  std::uint64_t seed = 1;
  std::uint32_t init_design = 8;
  bool anchor_first = true;  // first trial is SearchSpace::anchor()
  std::uint32_t candidates = 1000;
  std::uint32_t trees = 50;
  unsigned workers = 1;
  std::uint32_t fidelity_epochs = 200;  // recorded with each trial
  std::filesystem::path history_path;   // JSON lines, rewritten after every trial
  bool resume = false;
};

struct SearchResult {
  TrialRecord best;
  std::vector<TrialRecord> history;
  std::vector<double> incumbent;  // best objective after each trial
};

namespace detail {

class SearchRunner {
 public:
  SearchRunner(const SearchSpace& space, const SearchOptions& opt, const SearchObjective& objective)
      : space_(space), opt_(opt), objective_(objective) {
    if (opt.budget == 0) throw std::invalid_argument("search budget must be at least 1");
    if (opt.resume && !opt.history_path.empty()) previous_ = read_history(opt.history_path);
  }

  /// Evaluates a round of proposals (in parallel when workers > 1).
  void run_round(const std::vector<EEHyperParams>& proposals) {
    std::vector<TrialRecord> records(proposals.size());
    std::vector<std::size_t> pending;
    for (std::size_t i = 0; i < proposals.size(); ++i) {
      auto& rec = records[i];
      rec.id = static_cast<std::uint32_t>(result.history.size() + i);
      rec.params = proposals[i];
      rec.epochs = opt_.fidelity_epochs;
      if (rec.id < previous_.size() && same_params(previous_[rec.id].params, rec.params)) {
        rec = previous_[rec.id];
        rec.params = proposals[i];
      } else {
        pending.push_back(i);
      }
    }
    auto evaluate = [&](std::size_t i) {
      auto& rec = records[i];
      const auto start = std::chrono::steady_clock::now();
      try {
        rec.objective = objective_(rec.params);
        rec.status = std::isfinite(rec.objective) ? "ok" : "failed";
        if (!std::isfinite(rec.objective)) rec.objective = 0;
      } catch (const std::exception& e) {
        rec.objective = 0;
        rec.status = std::string("failed: ") + e.what();
      }
      rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    };
    if (opt_.workers <= 1 || pending.size() <= 1) {
      for (auto i : pending) evaluate(i);
    } else {
      std::vector<std::thread> pool;
      for (auto i : pending) pool.emplace_back(evaluate, i);
      for (auto& t : pool) t.join();
    }
    for (auto& rec : records) {
      const double prev = result.incumbent.empty() ? -std::numeric_limits<double>::infinity() : result.incumbent.back();
      if (result.history.empty() || rec.objective > result.best.objective) result.best = rec;
      result.incumbent.push_back(std::max(prev, rec.objective));
      result.history.push_back(rec);
      if (!opt_.history_path.empty()) write_history(opt_.history_path, result.history);
    }
  }

  std::size_t remaining() const { return opt_.budget - result.history.size(); }
  std::size_t round_size() const { return std::min<std::size_t>(std::max(1u, opt_.workers), remaining()); }

  SearchResult result;

 private:
  const SearchSpace& space_;
  const SearchOptions& opt_;
  const SearchObjective& objective_;
  std::vector<TrialRecord> previous_;
};

inline Rng proposal_rng(std::uint64_t seed) { return make_rng(seed, 0x5ea7c4); }

}  // namespace detail

/// The anchor (unless disabled), then uniform draws from the space.
inline SearchResult random_search(const SearchSpace& space, const SearchOptions& opt, const SearchObjective& objective) {
  detail::SearchRunner runner(space, opt, objective);
  Rng rng = detail::proposal_rng(opt.seed);
  bool anchor = opt.anchor_first;
  while (runner.remaining() > 0) {
    std::vector<EEHyperParams> round;
    for (std::size_t i = runner.round_size(); i > 0; --i) {
      round.push_back(anchor ? SearchSpace::anchor() : space.sample(rng));
      anchor = false;
    }
    runner.run_round(round);
  }
  return std::move(runner.result);
}

/// init_design uniform draws (the first one being the anchor unless
/// disabled), then rounds of EI maximization over random candidates under a
/// forest surrogate fitted to the whole history.
inline SearchResult smbo_search(const SearchSpace& space, const SearchOptions& opt, const SearchObjective& objective) {
  if (opt.budget < opt.init_design) throw std::invalid_argument("budget must be at least the initial design size");
  detail::SearchRunner runner(space, opt, objective);
  Rng rng = detail::proposal_rng(opt.seed);
  Rng model_rng = make_rng(opt.seed, 0xf04e57);
  bool anchor = opt.anchor_first;
  const std::size_t init = std::max<std::uint32_t>(1, opt.init_design);
  while (runner.remaining() > 0) {
    std::vector<EEHyperParams> round;
    const std::size_t k = runner.round_size();
    if (runner.result.history.size() < init) {
      const std::size_t n = std::min(k, init - runner.result.history.size());
      for (std::size_t i = 0; i < n; ++i) {
        round.push_back(anchor ? SearchSpace::anchor() : space.sample(rng));
        anchor = false;
      }
      runner.run_round(round);
      continue;
    }
    const auto& hist = runner.result.history;
    std::vector<SearchSpace::Point> x;
    std::vector<double> y;
    for (const auto& t : hist) {
      x.push_back(space.encode(t.params));
      y.push_back(t.objective);
    }
    const bool flat = std::all_of(y.begin(), y.end(), [&](double v) { return v == y.front(); });
    if (flat) {
      for (std::size_t i = 0; i < k; ++i) round.push_back(space.sample(rng));
      runner.run_round(round);
      continue;
    }
    RegressionForest forest({opt.trees});
    forest.fit(x, y, model_rng);
    const double best = runner.result.best.objective;
    std::vector<std::pair<double, EEHyperParams>> scored;
    scored.reserve(opt.candidates);
    for (std::uint32_t c = 0; c < opt.candidates; ++c) {
      auto p = space.sample(rng);
      auto [mean, var] = forest.predict(space.encode(p));
      scored.emplace_back(expected_improvement(mean, var, best), p);
    }
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t i = 0; i < k && i < scored.size(); ++i) round.push_back(scored[i].second);
    runner.run_round(round);
  }
  return std::move(runner.result);
}

}  // namespace kge

#pragma once

// Filtered link-prediction ranks, MRR / Hit@K, triplet classification with
// per-relation thresholds, and micro / macro F1.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "kge/io.hpp"
#include "kge/kg_data.hpp"
#include "kge/random.hpp"
#include "kge/scoring.hpp"

namespace kge {

/// True heads per (relation, tail) and true tails per (head, relation) over
/// train + valid + test, each list sorted.
class FilterIndex {
 public:
  FilterIndex() = default;
  explicit FilterIndex(const KnowledgeGraph& kg) : relations_(kg.relation_count) {
    for (const auto* part : {&kg.train, &kg.valid, &kg.test}) {
      for (const auto& t : *part) {
        tails_[pack(t.head, t.relation)].push_back(t.tail);
        heads_[pack(t.tail, t.relation)].push_back(t.head);
      }
    }
    for (auto* m : {&tails_, &heads_}) {
      for (auto& [k, v] : *m) {
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
      }
    }
  }

  std::span<const std::uint32_t> true_tails(std::uint32_t h, std::uint32_t r) const { return lookup(tails_, pack(h, r)); }
  std::span<const std::uint32_t> true_heads(std::uint32_t r, std::uint32_t t) const { return lookup(heads_, pack(t, r)); }

 private:
  using Map = std::unordered_map<std::uint64_t, std::vector<std::uint32_t>>;
  std::uint64_t pack(std::uint32_t e, std::uint32_t r) const { return static_cast<std::uint64_t>(e) * relations_ + r; }
  static std::span<const std::uint32_t> lookup(const Map& m, std::uint64_t k) {
    auto it = m.find(k);
    if (it == m.end()) return {};
    return it->second;
  }
  std::uint64_t relations_ = 1;
  Map tails_;
  Map heads_;
};

/// Ranks per evaluated triplet; fractional under tie averaging.
struct RankResult {
  std::vector<double> head;
  std::vector<double> tail;

  std::vector<double> all() const {
    std::vector<double> out(head);
    out.insert(out.end(), tail.begin(), tail.end());
    return out;
  }
};

struct EvalSummary {
  double mrr = 0;
  double hit1 = 0;
  double hit3 = 0;
  double hit10 = 0;
  std::size_t count = 0;
};

/// Rank of `truth` among `scores`: 1 + #greater + #equal_others / 2, with
/// candidates in the sorted list `filtered` skipped (truth is always kept).
inline double tie_averaged_rank(std::span<const double> scores, std::uint32_t truth,
                                std::span<const std::uint32_t> filtered = {}) {
  const double s = scores[truth];
  double greater = 0, equal = 0;
  auto skip = filtered.begin();
  for (std::uint32_t e = 0; e < scores.size(); ++e) {
    while (skip != filtered.end() && *skip < e) ++skip;
    if (e == truth) continue;
    if (skip != filtered.end() && *skip == e) continue;
    if (scores[e] > s) {
      greater += 1;
    } else if (scores[e] == s) {
      equal += 1;
    }
  }
  return 1.0 + greater + equal / 2.0;
}

struct RankOptions {
  bool filtered = true;
  unsigned threads = 1;
  std::size_t limit = 0;  // evaluate only the first `limit` triplets when > 0
};

/// Head- and tail-replacement ranks of every triplet in `triplets`.
template <class Real>
RankResult filtered_ranks(const KnowledgeGraph& kg, const FilterIndex& filter, const BasicEmbeddingStore<Real>& store,
                          const ScoringFunction& fn, std::span<const Triplet> triplets, RankOptions opt = {}) {
  check_compatible(store, fn);
  const std::size_t n = opt.limit > 0 ? std::min(opt.limit, triplets.size()) : triplets.size();
  RankResult out;
  out.head.resize(n);
  out.tail.resize(n);
  const std::uint32_t ne = kg.entity_count;
  auto work = [&](std::size_t begin, std::size_t end) {
    std::vector<double> scores(ne);
    for (std::size_t i = begin; i < end; ++i) {
      const auto& x = triplets[i];
      for (std::uint32_t e = 0; e < ne; ++e)
        scores[e] = static_cast<double>(detail::score_unchecked(store, fn, e, x.relation, x.tail));
      out.head[i] = tie_averaged_rank(scores, x.head, opt.filtered ? filter.true_heads(x.relation, x.tail)
                                                                   : std::span<const std::uint32_t>{});
      for (std::uint32_t e = 0; e < ne; ++e)
        scores[e] = static_cast<double>(detail::score_unchecked(store, fn, x.head, x.relation, e));
      out.tail[i] = tie_averaged_rank(scores, x.tail, opt.filtered ? filter.true_tails(x.head, x.relation)
                                                                   : std::span<const std::uint32_t>{});
    }
  };
  if (opt.threads <= 1 || n < 2 * opt.threads) {
    work(0, n);
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (n + opt.threads - 1) / opt.threads;
    for (unsigned w = 0; w < opt.threads; ++w) {
      const std::size_t b = w * chunk, e = std::min(n, b + chunk);
      if (b < e) pool.emplace_back(work, b, e);
    }
    for (auto& t : pool) t.join();
  }
  return out;
}

template <class Real>
RankResult filtered_ranks(const KnowledgeGraph& kg, const BasicEmbeddingStore<Real>& store, const ScoringFunction& fn,
                          std::string_view split, RankOptions opt = {}) {
  FilterIndex filter(kg);
  return filtered_ranks(kg, filter, store, fn, kg.split(split), opt);
}

inline EvalSummary summarize(std::span<const double> ranks) {
  if (ranks.empty()) throw std::invalid_argument("no ranks to summarize");
  EvalSummary s;
  for (double r : ranks) {
    s.mrr += 1.0 / r;
    s.hit1 += r <= 1 ? 1 : 0;
    s.hit3 += r <= 3 ? 1 : 0;
    s.hit10 += r <= 10 ? 1 : 0;
  }
  const double n = static_cast<double>(ranks.size());
  s.mrr /= n;
  s.hit1 /= n;
  s.hit3 /= n;
  s.hit10 /= n;
  s.count = ranks.size();
  return s;
}

inline EvalSummary summarize(const RankResult& r) { return summarize(r.all()); }

inline nlohmann::json to_json(const EvalSummary& s) {
  return {{"mrr", s.mrr}, {"hit1", s.hit1}, {"hit3", s.hit3}, {"hit10", s.hit10}, {"n", s.count}};
}

/// {mrr, hit1, hit3, hit10, n_test, head: {...}, tail: {...}}
inline nlohmann::json metric_report(const RankResult& r) {
  auto j = to_json(summarize(r));
  j["n_test"] = r.head.size();
  j.erase("n");
  if (!r.head.empty()) {
    j["head"] = to_json(summarize(r.head));
    j["tail"] = to_json(summarize(r.tail));
  }
  return j;
}

inline void write_rank_dump(const std::filesystem::path& path, const KnowledgeGraph& kg,
                            std::span<const Triplet> triplets, const RankResult& r) {
  write_atomic(path, [&](std::ostream& out) {
    out << "head\trelation\ttail\thead_rank\ttail_rank\n";
    for (std::size_t i = 0; i < r.head.size(); ++i) {
      const auto& t = triplets[i];
      out << kg.entities.name(t.head) << '\t' << kg.relations.name(t.relation) << '\t' << kg.entities.name(t.tail)
          << '\t' << r.head[i] << '\t' << r.tail[i] << '\n';
    }
  });
}

// ---------------------------------------------------------------------------
// Triplet classification

struct LabeledTriplets {
  std::vector<Triplet> triplets;
  std::vector<int> labels;  // 1 positive, 0 negative
};

/// Each positive of `positives` followed by one Bernoulli corruption that is
/// not a known true triplet (after 100 rejected draws the last is kept).
inline LabeledTriplets make_classification_set(const KnowledgeGraph& kg, std::span<const Triplet> positives,
                                               const RelationStats& stats, std::uint64_t seed) {
  LabeledTriplets out;
  Rng rng = make_rng(seed, 0xc1a55);
  for (const auto& pos : positives) {
    out.triplets.push_back(pos);
    out.labels.push_back(1);
    const bool head = uniform_open01(rng) < stats.head_replace_prob[pos.relation];
    Triplet neg = pos;
    for (int attempt = 0; attempt < 100; ++attempt) {
      const auto e = static_cast<std::uint32_t>(uniform_index(rng, kg.entity_count));
      neg = head ? Triplet{e, pos.relation, pos.tail} : Triplet{pos.head, pos.relation, e};
      if (!kg.is_true(neg)) break;
    }
    out.triplets.push_back(neg);
    out.labels.push_back(0);
  }
  return out;
}

inline void write_labeled(const std::filesystem::path& path, const LabeledTriplets& set) {
  write_atomic(path, [&](std::ostream& out) {
    for (std::size_t i = 0; i < set.triplets.size(); ++i) {
      const auto& t = set.triplets[i];
      out << t.head << '\t' << t.relation << '\t' << t.tail << '\t' << set.labels[i] << '\n';
    }
  });
}

inline LabeledTriplets read_labeled(const std::filesystem::path& path) {
  LabeledTriplets set;
  for_each_line(path, [&](std::string_view line, std::size_t number) {
    if (trim(line).empty()) return;
    auto f = split(line, '\t');
    if (f.size() != 4) throw DataError(path.string() + ":" + std::to_string(number) + ": expected 4 fields");
    auto num = [](std::string_view s) { return static_cast<std::uint32_t>(std::stoul(std::string(s))); };
    set.triplets.push_back({num(f[0]), num(f[1]), num(f[2])});
    set.labels.push_back(static_cast<int>(num(f[3])));
  });
  return set;
}

struct ClassificationModel {
  std::vector<double> thresholds;  // per relation
  std::vector<char> fitted;        // relation seen in the fitting data
  double global = 0;

  double threshold(std::uint32_t r) const { return r < fitted.size() && fitted[r] ? thresholds[r] : global; }
};

/// Accuracy-maximizing cut among midpoints of consecutive distinct scores
/// plus one cut below and one above everything. Positive iff score >= cut.
inline double best_threshold(std::span<const double> scores, std::span<const int> labels) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  // Cut below everything: all predicted positive.
  long correct = 0;
  for (int l : labels) correct += l == 1;
  long best = correct;
  double cut = scores.empty() ? 0.0 : scores[order.front()] - 1.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      correct += labels[order[j]] == 1 ? -1 : 1;
      ++j;
    }
    if (correct > best) {
      best = correct;
      cut = j < order.size() ? 0.5 * (scores[order[i]] + scores[order[j]]) : scores[order[i]] + 1.0;
    }
    i = j;
  }
  return cut;
}

inline ClassificationModel fit_thresholds(std::span<const double> scores, std::span<const int> labels,
                                          std::span<const Triplet> triplets, std::uint32_t relation_count) {
  ClassificationModel m;
  m.thresholds.assign(relation_count, 0.0);
  m.fitted.assign(relation_count, 0);
  m.global = best_threshold(scores, labels);
  std::vector<std::vector<std::size_t>> by_relation(relation_count);
  for (std::size_t i = 0; i < triplets.size(); ++i) by_relation[triplets[i].relation].push_back(i);
  for (std::uint32_t r = 0; r < relation_count; ++r) {
    if (by_relation[r].empty()) continue;
    std::vector<double> s;
    std::vector<int> l;
    for (auto i : by_relation[r]) {
      s.push_back(scores[i]);
      l.push_back(labels[i]);
    }
    m.thresholds[r] = best_threshold(s, l);
    m.fitted[r] = 1;
  }
  return m;
}

inline double classify(const ClassificationModel& m, std::span<const double> scores, std::span<const int> labels,
                       std::span<const Triplet> triplets) {
  if (scores.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const int predicted = scores[i] >= m.threshold(triplets[i].relation) ? 1 : 0;
    correct += predicted == labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(scores.size());
}

template <class Real>
std::vector<double> score_all(const BasicEmbeddingStore<Real>& store, const ScoringFunction& fn,
                              std::span<const Triplet> triplets) {
  std::vector<double> out(triplets.size());
  for (std::size_t i = 0; i < triplets.size(); ++i) out[i] = static_cast<double>(score(store, fn, triplets[i]));
  return out;
}

struct ClassificationResult {
  ClassificationModel model;
  double valid_accuracy = 0;
  double test_accuracy = 0;
};

/// Fits thresholds on the labeled valid set and reports test accuracy.
template <class Real>
ClassificationResult triplet_classification(const BasicEmbeddingStore<Real>& store, const ScoringFunction& fn,
                                            const LabeledTriplets& valid, const LabeledTriplets& test,
                                            std::uint32_t relation_count) {
  ClassificationResult res;
  auto vs = score_all(store, fn, valid.triplets);
  res.model = fit_thresholds(vs, valid.labels, valid.triplets, relation_count);
  res.valid_accuracy = classify(res.model, vs, valid.labels, valid.triplets);
  auto ts = score_all(store, fn, test.triplets);
  res.test_accuracy = classify(res.model, ts, test.labels, test.triplets);
  return res;
}

// ---------------------------------------------------------------------------
// F1

struct F1Scores {
  double micro = 0;
  double macro = 0;
  std::vector<double> per_class;
  std::vector<int> unsupported;  // classes with no true instances
};

inline F1Scores f1_scores(std::span<const int> predictions, std::span<const int> labels, int num_classes) {
  if (predictions.size() != labels.size()) throw std::invalid_argument("prediction and label counts differ");
  if (num_classes <= 0) throw std::invalid_argument("num_classes must be positive");
  std::vector<double> tp(num_classes), fp(num_classes), fn(num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int p = predictions[i], y = labels[i];
    if (p < 0 || p >= num_classes || y < 0 || y >= num_classes) throw std::out_of_range("class id out of range");
    if (p == y) {
      tp[y] += 1;
    } else {
      fp[p] += 1;
      fn[y] += 1;
    }
  }
  F1Scores out;
  double TP = 0, FP = 0, FN = 0;
  for (int c = 0; c < num_classes; ++c) {
    TP += tp[c];
    FP += fp[c];
    FN += fn[c];
    const double denom = 2 * tp[c] + fp[c] + fn[c];
    const double f = denom > 0 ? 2 * tp[c] / denom : 0.0;
    if (tp[c] + fn[c] == 0) out.unsupported.push_back(c);
    out.per_class.push_back(f);
    out.macro += f;
  }
  out.macro /= num_classes;
  const double denom = 2 * TP + FP + FN;
  out.micro = denom > 0 ? 2 * TP / denom : 0.0;
  return out;
}

}  // namespace kge

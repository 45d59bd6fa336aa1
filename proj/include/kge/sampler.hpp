#pragma once

// Negative sampling: uniform, Bernoulli, self-adversarial, and the
// cache-based sampler.
//
// The cache-based sampler keeps, for every (relation, tail) a head cache and
// for every (head, relation) a tail cache of high-scoring corruptions. Caches
// are refreshed from the union of their current content and a fresh uniform
// candidate subset, keeping N1 entries drawn without replacement from a
// temperature softmax over rescaled scores.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "kge/io.hpp"
#include "kge/kg_data.hpp"
#include "kge/random.hpp"
#include "kge/scoring.hpp"
#include "kge/variance.hpp"

namespace kge {

/// Exploration / exploitation knobs of the cache-based sampler.
struct EEHyperParams {
  double alpha1 = 0.0;  // positive-sampling temperature
  double alpha2 = 0.0;  // cache-sampling temperature
  double alpha3 = 1.0;  // cache-update temperature
  std::uint32_t cache_size = 50;      // N1
  std::uint32_t candidate_size = 50;  // N2
  std::uint32_t lazy_n = 0;           // refresh every lazy_n + 1 epochs
  double nu = 0.0;                    // weight of the score std in cache quality

  void validate() const {
    if (!(alpha1 >= 0) || !(alpha2 >= 0) || !(alpha3 >= 0) || !(nu >= 0))
      throw std::invalid_argument("sampler temperatures and nu must be nonnegative");
    if (cache_size == 0 || candidate_size == 0) throw std::invalid_argument("cache and candidate sizes must be positive");
  }
};

enum class SamplerKind : std::uint32_t { Uniform, Bernoulli, SelfAdversarial, NSCaching };

inline std::string_view to_string(SamplerKind k) {
  switch (k) {
    case SamplerKind::Uniform: return "uniform";
    case SamplerKind::Bernoulli: return "bernoulli";
    case SamplerKind::SelfAdversarial: return "self-adv";
    case SamplerKind::NSCaching: return "nscaching";
  }
  return "?";
}

inline SamplerKind parse_sampler(std::string_view name) {
  auto lower = lowercase(name);
  if (lower == "uniform") return SamplerKind::Uniform;
  if (lower == "bernoulli" || lower == "bern") return SamplerKind::Bernoulli;
  if (lower == "self-adv" || lower == "selfadv" || lower == "self-adversarial") return SamplerKind::SelfAdversarial;
  if (lower == "nscaching" || lower == "cache") return SamplerKind::NSCaching;
  throw std::invalid_argument("unknown sampler: " + std::string(name));
}

// ---------------------------------------------------------------------------
// Distributions

/// p_i = exp(alpha v_i) / sum_j exp(alpha v_j), max-shifted.
inline std::vector<double> weighted_softmax(std::span<const double> values, double alpha) {
  if (values.empty()) throw std::invalid_argument("weighted_softmax of an empty vector");
  std::vector<double> p(values.size());
  if (alpha == 0.0) {
    std::fill(p.begin(), p.end(), 1.0 / static_cast<double>(values.size()));
    return p;
  }
  double top = -std::numeric_limits<double>::infinity();
  for (double v : values) top = std::max(top, alpha * v);
  double total = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    p[i] = std::exp(alpha * values[i] - top);
    total += p[i];
  }
  for (auto& x : p) x /= total;
  return p;
}

/// Nearest-rank percentile of sorted data: the ceil(q n)-th smallest value.
inline double nearest_rank_quantile(std::span<const double> sorted, double q) {
  const auto n = sorted.size();
  auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n) - 1e-12));
  rank = std::clamp<std::size_t>(rank, 1, n);
  return sorted[rank - 1];
}

struct Rescaled {
  std::vector<double> values;
  double low = 0;
  double high = 0;
  bool degenerate = false;  // low == high
};

/// Piecewise-linear map onto [0, 1] between the 20th and 80th percentiles.
inline Rescaled rescale(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("rescale of an empty vector");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  Rescaled out;
  out.low = nearest_rank_quantile(sorted, 0.2);
  out.high = nearest_rank_quantile(sorted, 0.8);
  out.degenerate = !(out.high > out.low);
  out.values.resize(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double a = values[i];
    if (a > out.high) {
      out.values[i] = 1.0;
    } else if (a < out.low) {
      out.values[i] = 0.0;
    } else if (out.degenerate) {
      out.values[i] = 0.5;
    } else {
      out.values[i] = (a - out.low) / (out.high - out.low);
    }
  }
  return out;
}

/// softmax(rescale(values), alpha).
inline std::vector<double> rescaled_softmax(std::span<const double> values, double alpha) {
  auto r = rescale(values);
  return weighted_softmax(r.values, alpha);
}

inline bool lazy_refresh_due(std::uint64_t epoch, std::uint32_t lazy_n) {
  return epoch % (static_cast<std::uint64_t>(lazy_n) + 1) == 0;
}

/// Index of a train triplet drawn with probability softmax(rescale(weights), alpha1).
inline std::size_t sample_positive(std::span<const double> weights, double alpha1, Rng& rng) {
  if (alpha1 == 0.0) return uniform_index(rng, weights.size());
  auto p = rescaled_softmax(weights, alpha1);
  return sample_categorical(p, rng);
}

/// Order-independent sample of `k` of the indices 0..n-1 without
/// replacement, each draw proportional to exp(alpha * values[i]) among the
/// remaining ones (Gumbel top-k).
inline std::vector<std::size_t> sample_without_replacement(std::span<const double> values, double alpha,
                                                           std::size_t k, Rng& rng) {
  const auto n = values.size();
  std::vector<std::pair<double, std::size_t>> keyed(n);
  for (std::size_t i = 0; i < n; ++i) keyed[i] = {alpha * values[i] + gumbel(rng), i};
  k = std::min(k, n);
  std::partial_sort(keyed.begin(), keyed.begin() + static_cast<std::ptrdiff_t>(k), keyed.end(),
                    [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<std::size_t> out(k);
  for (std::size_t i = 0; i < k; ++i) out[i] = keyed[i].second;
  return out;
}

// ---------------------------------------------------------------------------
// Cache

enum class Side : std::uint8_t { Head, Tail };

/// A head cache is keyed by (relation, tail), a tail cache by (head,
/// relation); `anchor` is the entity that stays fixed.
struct CacheKey {
  Side side = Side::Tail;
  std::uint32_t relation = 0;
  std::uint32_t anchor = 0;

  Triplet substitute(std::uint32_t candidate) const {
    return side == Side::Head ? Triplet{candidate, relation, anchor} : Triplet{anchor, relation, candidate};
  }
  std::uint64_t packed() const {
    return (static_cast<std::uint64_t>(side == Side::Head) << 63) | (static_cast<std::uint64_t>(relation) << 32) |
           anchor;
  }
  static CacheKey head_of(const Triplet& t) { return {Side::Head, t.relation, t.tail}; }
  static CacheKey tail_of(const Triplet& t) { return {Side::Tail, t.relation, t.head}; }
};

struct CacheEntry {
  std::uint32_t entity;
  double score;
};

struct CacheSlot {
  CacheKey key;
  std::vector<CacheEntry> entries;
  std::vector<RunningStats> stats;  // parallel to entries, only when nu > 0
};

class NegativeCache {
 public:
  NegativeCache() = default;
  explicit NegativeCache(std::size_t train_size)
      : positive_weights(train_size, 0.0), head_slot(train_size, -1), tail_slot(train_size, -1) {}

  std::optional<std::uint32_t> find(const CacheKey& key) const {
    auto it = index_.find(key.packed());
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::uint32_t insert(const CacheKey& key) {
    auto [it, fresh] = index_.emplace(key.packed(), static_cast<std::uint32_t>(slots_.size()));
    if (fresh) slots_.push_back(CacheSlot{key, {}, {}});
    return it->second;
  }

  std::size_t size() const { return slots_.size(); }
  CacheSlot& slot(std::uint32_t i) { return slots_[i]; }
  const CacheSlot& slot(std::uint32_t i) const { return slots_[i]; }
  const std::vector<CacheSlot>& slots() const { return slots_; }

  double stored_sum(std::int32_t slot_index) const {
    if (slot_index < 0) return 0.0;
    double s = 0.0;
    for (const auto& e : slots_[static_cast<std::size_t>(slot_index)].entries) s += e.score;
    return s;
  }

  /// p_i = sum of stored scores in the head and tail cache of triplet i.
  void recompute_positive_weights() {
    std::vector<double> sums(slots_.size());
    for (std::size_t s = 0; s < slots_.size(); ++s) sums[s] = stored_sum(static_cast<std::int32_t>(s));
    for (std::size_t i = 0; i < positive_weights.size(); ++i) {
      double p = 0.0;
      if (head_slot[i] >= 0) p += sums[static_cast<std::size_t>(head_slot[i])];
      if (tail_slot[i] >= 0) p += sums[static_cast<std::size_t>(tail_slot[i])];
      positive_weights[i] = p;
    }
  }

  std::vector<double> positive_weights;
  std::vector<std::int32_t> head_slot;
  std::vector<std::int32_t> tail_slot;

 private:
  std::unordered_map<std::uint64_t, std::uint32_t> index_;
  std::vector<CacheSlot> slots_;
};

/// Up to `count` distinct entities, uniformly at random, whose substitution
/// into `key` is not a train triplet and which are not in `exclude`.
inline std::vector<std::uint32_t> draw_candidates(const KnowledgeGraph& kg, const CacheKey& key, std::size_t count,
                                                  std::span<const std::uint32_t> exclude, Rng& rng) {
  std::vector<std::uint32_t> out;
  const std::size_t n = kg.entity_count;
  if (count == 0 || n == 0) return out;
  auto excluded = [&](std::uint32_t e) { return std::find(exclude.begin(), exclude.end(), e) != exclude.end(); };
  if (n <= 4 * (count + exclude.size()) || n <= 64) {
    std::vector<char> skip(n, 0);
    for (auto e : exclude) skip[e] = 1;
    std::vector<std::uint32_t> pool;
    for (std::uint32_t e = 0; e < n; ++e)
      if (!skip[e] && !kg.in_train(key.substitute(e))) pool.push_back(e);
    const std::size_t k = std::min(count, pool.size());
    for (std::size_t i = 0; i < k; ++i) {
      auto j = i + uniform_index(rng, pool.size() - i);
      std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    return pool;
  }
  std::unordered_set<std::uint32_t> taken;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    for (int attempt = 0; attempt < 100; ++attempt) {
      auto e = static_cast<std::uint32_t>(uniform_index(rng, n));
      if (taken.count(e) || excluded(e) || kg.in_train(key.substitute(e))) continue;
      taken.insert(e);
      out.push_back(e);
      break;
    }
  }
  return out;
}

/// Refreshes one cache: scores the union of its entries and N2 fresh
/// candidates with the current model, then keeps min(N1, |union|) of them
/// drawn without replacement from softmax(rescale(quality), alpha3).
/// Quality is the score, plus nu * running std when nu > 0.
template <class Real>
void update_cache(CacheSlot& slot, const KnowledgeGraph& kg, const BasicEmbeddingStore<Real>& store,
                  const ScoringFunction& fn, const EEHyperParams& ee, Rng& rng) {
  const auto& key = slot.key;
  std::vector<std::uint32_t> pool;
  pool.reserve(slot.entries.size() + ee.candidate_size);
  for (const auto& e : slot.entries) pool.push_back(e.entity);
  const std::size_t old_count = pool.size();
  auto fresh = draw_candidates(kg, key, ee.candidate_size, pool, rng);
  pool.insert(pool.end(), fresh.begin(), fresh.end());
  if (pool.empty()) return;

  const bool track = ee.nu > 0;
  std::vector<RunningStats> pool_stats;
  if (track) {
    pool_stats.resize(pool.size());
    for (std::size_t i = 0; i < old_count && i < slot.stats.size(); ++i) pool_stats[i] = slot.stats[i];
  }
  std::vector<double> scores(pool.size()), quality(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const auto t = key.substitute(pool[i]);
    scores[i] = static_cast<double>(detail::score_unchecked(store, fn, t.head, t.relation, t.tail));
    quality[i] = scores[i];
    if (track) {
      pool_stats[i].add(scores[i]);
      quality[i] += ee.nu * pool_stats[i].stddev_or_zero();
    }
  }
  auto r = rescale(quality);
  auto keep = sample_without_replacement(r.values, ee.alpha3, ee.cache_size, rng);
  slot.entries.clear();
  slot.stats.clear();
  for (auto i : keep) {
    slot.entries.push_back({pool[i], scores[i]});
    if (track) slot.stats.push_back(pool_stats[i]);
  }
}

/// Distribution over a cache's entries used when drawing a negative.
inline std::vector<double> cache_sampling_probabilities(const CacheSlot& slot, const EEHyperParams& ee) {
  std::vector<double> q(slot.entries.size());
  for (std::size_t i = 0; i < q.size(); ++i) {
    q[i] = slot.entries[i].score;
    if (ee.nu > 0 && i < slot.stats.size()) q[i] += ee.nu * slot.stats[i].stddev_or_zero();
  }
  return rescaled_softmax(q, ee.alpha2);
}

// ---------------------------------------------------------------------------
// Samplers

/// All negative-sampling strategies behind one interface. Holds the cache
/// for the cache-based kind.
class NegativeSampler {
 public:
  NegativeSampler(SamplerKind kind, const KnowledgeGraph& kg, RelationStats stats, EEHyperParams ee,
                  std::uint64_t seed)
      : kind_(kind), kg_(&kg), stats_(std::move(stats)), ee_(ee), seed_(seed), cache_(kg.train.size()) {
    ee_.validate();
  }

  SamplerKind kind() const { return kind_; }
  const EEHyperParams& params() const { return ee_; }
  const RelationStats& stats() const { return stats_; }
  NegativeCache& cache() { return cache_; }
  const NegativeCache& cache() const { return cache_; }

  /// Head vs tail: Bernoulli by relation for every kind but Uniform.
  Side choose_side(std::uint32_t relation, Rng& rng) const {
    const double p = kind_ == SamplerKind::Uniform ? 0.5 : stats_.head_replace_prob[relation];
    return uniform_open01(rng) < p ? Side::Head : Side::Tail;
  }

  /// Uniform corruption rejecting train triplets; after 100 rejected draws
  /// the last draw is accepted.
  Triplet corrupt_uniform(const Triplet& pos, Side side, Rng& rng) const {
    const CacheKey key = side == Side::Head ? CacheKey::head_of(pos) : CacheKey::tail_of(pos);
    Triplet t{};
    for (int attempt = 0; attempt < 100; ++attempt) {
      t = key.substitute(static_cast<std::uint32_t>(uniform_index(rng, kg_->entity_count)));
      if (!kg_->in_train(t)) break;
    }
    return t;
  }

  /// Creates the head and tail caches of train triplet `index` if absent,
  /// filling each with one forced refresh.
  template <class Real>
  void ensure_caches(std::size_t index, const BasicEmbeddingStore<Real>& store, const ScoringFunction& fn, Rng& rng) {
    const auto& pos = kg_->train[index];
    bool created = false;
    for (Side side : {Side::Head, Side::Tail}) {
      auto& slot_ref = side == Side::Head ? cache_.head_slot[index] : cache_.tail_slot[index];
      if (slot_ref >= 0) continue;
      const CacheKey key = side == Side::Head ? CacheKey::head_of(pos) : CacheKey::tail_of(pos);
      auto existing = cache_.find(key);
      if (existing) {
        slot_ref = static_cast<std::int32_t>(*existing);
        continue;
      }
      auto s = cache_.insert(key);
      update_cache(cache_.slot(s), *kg_, store, fn, ee_, rng);
      slot_ref = static_cast<std::int32_t>(s);
      created = true;
    }
    if (created || cache_.positive_weights[index] == 0.0)
      cache_.positive_weights[index] = cache_.stored_sum(cache_.head_slot[index]) + cache_.stored_sum(cache_.tail_slot[index]);
  }

  /// One negative for train triplet `index`.
  template <class Real>
  Triplet sample(const BasicEmbeddingStore<Real>& store, const ScoringFunction& fn, std::size_t index, Rng& rng) {
    const auto& pos = kg_->train[index];
    return sample_for(store, fn, pos, rng, index);
  }

  /// Same as sample() for an arbitrary positive; the cache-based kind needs
  /// `index` to locate the positive's caches.
  template <class Real>
  Triplet sample_for(const BasicEmbeddingStore<Real>& store, const ScoringFunction& fn, const Triplet& pos, Rng& rng,
                     std::size_t index = std::numeric_limits<std::size_t>::max()) {
    const Side side = choose_side(pos.relation, rng);
    switch (kind_) {
      case SamplerKind::Uniform:
      case SamplerKind::Bernoulli: return corrupt_uniform(pos, side, rng);
      case SamplerKind::SelfAdversarial: return self_adversarial(store, fn, pos, side, rng);
      case SamplerKind::NSCaching: {
        if (index >= kg_->train.size()) throw std::invalid_argument("cache sampling needs a train triplet index");
        ensure_caches(index, store, fn, rng);
        const auto slot_index = side == Side::Head ? cache_.head_slot[index] : cache_.tail_slot[index];
        const auto& slot = cache_.slot(static_cast<std::uint32_t>(slot_index));
        if (slot.entries.empty()) return corrupt_uniform(pos, side, rng);
        auto p = cache_sampling_probabilities(slot, ee_);
        return slot.key.substitute(slot.entries[sample_categorical(p, rng)].entity);
      }
    }
    return pos;
  }

  /// Refreshes every existing cache. Each cache uses its own generator
  /// derived from (seed, epoch, slot), so the result does not depend on the
  /// number of threads.
  template <class Real>
  void refresh_all(const BasicEmbeddingStore<Real>& store, const ScoringFunction& fn, std::uint64_t epoch,
                   unsigned threads = 1) {
    const std::uint64_t epoch_seed = stream_seed(seed_, 0xcac4e000ULL + epoch);
    const std::size_t n = cache_.size();
    auto work = [&](std::size_t begin, std::size_t end) {
      for (std::size_t s = begin; s < end; ++s) {
        Rng rng = make_rng(epoch_seed, s);
        update_cache(cache_.slot(static_cast<std::uint32_t>(s)), *kg_, store, fn, ee_, rng);
      }
    };
    if (threads <= 1 || n < 2 * threads) {
      work(0, n);
    } else {
      std::vector<std::thread> pool;
      const std::size_t chunk = (n + threads - 1) / threads;
      for (unsigned w = 0; w < threads; ++w) {
        const std::size_t b = w * chunk, e = std::min(n, b + chunk);
        if (b < e) pool.emplace_back(work, b, e);
      }
      for (auto& t : pool) t.join();
    }
    cache_.recompute_positive_weights();
  }

  /// Per-epoch distribution over train triplets for positive sampling.
  void prepare_positive_distribution() {
    if (ee_.alpha1 == 0.0) {
      positive_dist_.reset();
      return;
    }
    auto p = rescaled_softmax(cache_.positive_weights, ee_.alpha1);
    positive_dist_.emplace(p.begin(), p.end());
  }

  std::size_t draw_positive(Rng& rng) {
    if (!positive_dist_) return uniform_index(rng, kg_->train.size());
    return (*positive_dist_)(rng);
  }

 private:
  template <class Real>
  Triplet self_adversarial(const BasicEmbeddingStore<Real>& store, const ScoringFunction& fn, const Triplet& pos,
                           Side side, Rng& rng) const {
    const CacheKey key = side == Side::Head ? CacheKey::head_of(pos) : CacheKey::tail_of(pos);
    auto candidates = draw_candidates(*kg_, key, ee_.cache_size, {}, rng);
    if (candidates.empty()) return corrupt_uniform(pos, side, rng);
    std::vector<double> scores(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      auto t = key.substitute(candidates[i]);
      scores[i] = static_cast<double>(detail::score_unchecked(store, fn, t.head, t.relation, t.tail));
    }
    auto p = rescaled_softmax(scores, ee_.alpha2);
    return key.substitute(candidates[sample_categorical(p, rng)]);
  }

  SamplerKind kind_;
  const KnowledgeGraph* kg_;
  RelationStats stats_;
  EEHyperParams ee_;
  std::uint64_t seed_;
  NegativeCache cache_;
  std::optional<std::discrete_distribution<std::size_t>> positive_dist_;
};

/// "key<TAB>entity_name<TAB>score" for every cached entry. Keys read
/// "head|<relation>|<tail>" or "tail|<head>|<relation>".
inline void write_cache_snapshot(const std::filesystem::path& path, const NegativeCache& cache,
                                 const KnowledgeGraph& kg) {
  write_atomic(path, [&](std::ostream& out) {
    out.precision(9);
    for (const auto& slot : cache.slots()) {
      const auto& k = slot.key;
      std::string key = k.side == Side::Head
                            ? "head|" + kg.relations.name(k.relation) + "|" + kg.entities.name(k.anchor)
                            : "tail|" + kg.entities.name(k.anchor) + "|" + kg.relations.name(k.relation);
      for (const auto& e : slot.entries) out << key << '\t' << kg.entities.name(e.entity) << '\t' << e.score << '\n';
    }
  });
}

}  // namespace kge

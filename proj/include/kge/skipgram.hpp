#pragma once

// Graph embedding: second-order biased random walks, skip-gram training with
// per-node negative caches (or uniform / unigram^0.75 negatives), and node
// classification with one-vs-rest logistic regression.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <unordered_set>
#include <vector>

#include "kge/adam.hpp"
#include "kge/eval.hpp"
#include "kge/io.hpp"
#include "kge/kg_data.hpp"
#include "kge/random.hpp"
#include "kge/sampler.hpp"
#include "kge/scoring.hpp"

namespace kge {

// ---------------------------------------------------------------------------
// Graph

struct Graph {
  std::vector<std::vector<std::uint32_t>> adjacency;  // sorted, symmetric, no self loops
  std::vector<int> labels;                            // -1 when unlabeled; empty when no labels
  Dictionary nodes;
  Dictionary classes;

  std::uint32_t size() const { return static_cast<std::uint32_t>(adjacency.size()); }
  bool has_edge(std::uint32_t a, std::uint32_t b) const {
    return std::binary_search(adjacency[a].begin(), adjacency[a].end(), b);
  }
  std::size_t edge_count() const {
    std::size_t s = 0;
    for (const auto& a : adjacency) s += a.size();
    return s / 2;
  }
  int class_count() const { return static_cast<int>(classes.size()); }
};

/// Undirected graph from an edge list; duplicate edges and self loops dropped.
inline Graph make_undirected_graph(std::uint32_t node_count, std::span<const std::pair<std::uint32_t, std::uint32_t>> edges) {
  Graph g;
  g.adjacency.resize(node_count);
  for (auto [a, b] : edges) {
    if (a >= node_count || b >= node_count) throw std::out_of_range("edge endpoint out of range");
    if (a == b) continue;
    g.adjacency[a].push_back(b);
    g.adjacency[b].push_back(a);
  }
  for (auto& adj : g.adjacency) {
    std::sort(adj.begin(), adj.end());
    adj.erase(std::unique(adj.begin(), adj.end()), adj.end());
  }
  if (g.nodes.empty())
    for (std::uint32_t i = 0; i < node_count; ++i) g.nodes.intern(std::to_string(i));
  return g;
}

/// "src<TAB>dst" (any whitespace) edges, optional "node<TAB>class" labels.
inline Graph load_graph(const std::filesystem::path& edges_path,
                        const std::optional<std::filesystem::path>& labels_path = std::nullopt) {
  Dictionary nodes;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
  std::vector<std::pair<std::string, std::string>> raw_labels;
  if (labels_path) {
    for_each_line(*labels_path, [&](std::string_view line, std::size_t number) {
      auto f = split_ws(line);
      if (f.empty()) return;
      if (f.size() < 2) throw DataError(labels_path->string() + ":" + std::to_string(number) + ": expected node and class");
      nodes.intern(f.front());
      raw_labels.emplace_back(std::string(f.front()), std::string(f.back()));
    });
  }
  for_each_line(edges_path, [&](std::string_view line, std::size_t number) {
    auto f = split_ws(line);
    if (f.empty()) return;
    if (f.size() < 2) throw DataError(edges_path.string() + ":" + std::to_string(number) + ": expected two nodes");
    edges.emplace_back(nodes.intern(f[0]), nodes.intern(f[1]));
  });
  Graph g = make_undirected_graph(static_cast<std::uint32_t>(nodes.size()), edges);
  g.nodes = std::move(nodes);
  if (labels_path) {
    g.labels.assign(g.size(), -1);
    for (const auto& [node, cls] : raw_labels) g.labels[*g.nodes.find(node)] = static_cast<int>(g.classes.intern(cls));
  }
  return g;
}

/// Citation data as a "<id> <features...> <class>" content file plus a
/// "<cited> <citing>" file. Citations to papers absent from the content
/// file are dropped.
inline Graph load_content_cites(const std::filesystem::path& content, const std::filesystem::path& cites) {
  Dictionary nodes, classes;
  std::vector<int> labels;
  for_each_line(content, [&](std::string_view line, std::size_t number) {
    auto f = split_ws(line);
    if (f.empty()) return;
    if (f.size() < 2) throw DataError(content.string() + ":" + std::to_string(number) + ": malformed content line");
    nodes.intern(f.front());
    labels.push_back(static_cast<int>(classes.intern(f.back())));
  });
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
  for_each_line(cites, [&](std::string_view line, std::size_t number) {
    auto f = split_ws(line);
    if (f.empty()) return;
    if (f.size() != 2) throw DataError(cites.string() + ":" + std::to_string(number) + ": expected two ids");
    auto a = nodes.find(f[0]), b = nodes.find(f[1]);
    if (a && b) edges.emplace_back(*a, *b);
  });
  Graph g = make_undirected_graph(static_cast<std::uint32_t>(nodes.size()), edges);
  g.nodes = std::move(nodes);
  g.classes = std::move(classes);
  g.labels = std::move(labels);
  return g;
}

// ---------------------------------------------------------------------------
// Walks

enum class NegativeMode : std::uint32_t { Cache, Uniform, Unigram };

inline std::string_view to_string(NegativeMode m) {
  switch (m) {
    case NegativeMode::Cache: return "cache";
    case NegativeMode::Uniform: return "uniform";
    case NegativeMode::Unigram: return "unigram";
  }
  return "?";
}

inline NegativeMode parse_negative_mode(std::string_view s) {
  auto l = lowercase(s);
  if (l == "cache" || l == "nscaching") return NegativeMode::Cache;
  if (l == "uniform") return NegativeMode::Uniform;
  if (l == "unigram") return NegativeMode::Unigram;
  throw std::invalid_argument("unknown negative mode: " + std::string(s));
}

struct WalkConfig {
  std::uint32_t walks_per_node = 10;
  std::uint32_t walk_length = 80;
  std::uint32_t window = 10;  // context half-width
  double p = 0.25;
  double q = 0.25;
  std::uint32_t negatives = 5;
  std::uint32_t dim = 100;
  std::uint32_t epochs = 1;
  std::uint32_t batch_size = 64;  // pairs per Adam step
  double learning_rate = 1e-3;
  double weight_decay = 1e-7;
  std::uint32_t refresh_batches = 500;  // cache refresh period, in batches
  NegativeMode mode = NegativeMode::Cache;
  unsigned threads = 1;  // walk generation only

  void validate() const {
    if (walks_per_node == 0 || walk_length == 0 || window == 0 || dim == 0 || negatives == 0 || batch_size == 0 ||
        refresh_batches == 0)
      throw std::invalid_argument("walk and skip-gram sizes must be positive");
    if (!(p > 0) || !(q > 0)) throw std::invalid_argument("p and q must be positive");
    if (!(learning_rate > 0)) throw std::invalid_argument("learning rate must be positive");
  }
};

/// Next-step probabilities from `cur` after arriving from `prev`, aligned
/// with graph.adjacency[cur]: weight 1/p to return, 1 to a neighbor of
/// `prev`, 1/q otherwise.
inline std::vector<double> transition_probabilities(const Graph& g, std::uint32_t prev, std::uint32_t cur, double p,
                                                    double q) {
  const auto& adj = g.adjacency[cur];
  std::vector<double> w(adj.size());
  double total = 0;
  for (std::size_t i = 0; i < adj.size(); ++i) {
    const auto x = adj[i];
    w[i] = x == prev ? 1.0 / p : (g.has_edge(prev, x) ? 1.0 : 1.0 / q);
    total += w[i];
  }
  for (auto& x : w) x /= total;
  return w;
}

using Walk = std::vector<std::uint32_t>;

inline Walk random_walk(const Graph& g, std::uint32_t start, std::uint32_t length, double p, double q, Rng& rng) {
  Walk walk{start};
  if (g.adjacency[start].empty()) return walk;
  std::vector<double> w;
  while (walk.size() < length) {
    const auto cur = walk.back();
    const auto& adj = g.adjacency[cur];
    if (adj.empty()) break;
    if (walk.size() == 1) {
      walk.push_back(adj[uniform_index(rng, adj.size())]);
      continue;
    }
    const auto prev = walk[walk.size() - 2];
    w.resize(adj.size());
    for (std::size_t i = 0; i < adj.size(); ++i) {
      const auto x = adj[i];
      w[i] = x == prev ? 1.0 / p : (g.has_edge(prev, x) ? 1.0 : 1.0 / q);
    }
    walk.push_back(adj[sample_categorical(w, rng)]);
  }
  return walk;
}

/// walks_per_node rounds over all nodes; walk (round, node) uses its own
/// generator stream, so the corpus does not depend on the thread count.
inline std::vector<Walk> generate_walks(const Graph& g, const WalkConfig& cfg, std::uint64_t seed) {
  const std::size_t n = g.size();
  std::vector<Walk> corpus(n * cfg.walks_per_node);
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      Rng rng = make_rng(seed, 0x3a1c000000ULL + i);
      corpus[i] = random_walk(g, static_cast<std::uint32_t>(i % n), cfg.walk_length, cfg.p, cfg.q, rng);
    }
  };
  const unsigned threads = std::max(1u, cfg.threads);
  if (threads == 1 || corpus.size() < 2 * threads) {
    work(0, corpus.size());
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (corpus.size() + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
      const std::size_t b = t * chunk, e = std::min(corpus.size(), b + chunk);
      if (b < e) pool.emplace_back(work, b, e);
    }
    for (auto& t : pool) t.join();
  }
  return corpus;
}

inline void write_walks(const std::filesystem::path& path, const std::vector<Walk>& corpus, const Graph& g) {
  write_atomic(path, [&](std::ostream& out) {
    for (const auto& w : corpus) {
      for (std::size_t i = 0; i < w.size(); ++i) out << (i ? " " : "") << g.nodes.name(w[i]);
      out << '\n';
    }
  });
}

inline std::vector<Walk> read_walks(const std::filesystem::path& path, const Graph& g) {
  std::vector<Walk> corpus;
  for_each_line(path, [&](std::string_view line, std::size_t number) {
    auto f = split_ws(line);
    if (f.empty()) return;
    Walk w;
    for (auto name : f) {
      auto id = g.nodes.find(name);
      if (!id) throw DataError(path.string() + ":" + std::to_string(number) + ": unknown node " + std::string(name));
      w.push_back(*id);
    }
    corpus.push_back(std::move(w));
  });
  return corpus;
}

// ---------------------------------------------------------------------------
// Skip-gram

/// Center ("input") and context ("output") vectors, one row per node.
template <class Real>
struct NodeEmbeddings {
  std::vector<Matrix<Real>> matrices;  // [0] center, [1] context

  NodeEmbeddings() = default;
  NodeEmbeddings(std::uint32_t nodes, std::uint32_t dim) {
    matrices.emplace_back(nodes, dim);
    matrices.emplace_back(nodes, dim);
  }
  Matrix<Real>& operator[](std::size_t i) { return matrices[i]; }
  const Matrix<Real>& operator[](std::size_t i) const { return matrices[i]; }
  std::size_t dim() const { return matrices[0].cols; }
  std::size_t size() const { return matrices[0].rows; }
  Matrix<Real>& center() { return matrices[0]; }
  const Matrix<Real>& center() const { return matrices[0]; }
};

/// Center rows Xavier-uniform; context rows zero (the usual word2vec start).
template <class Real = float>
NodeEmbeddings<Real> init_node_embeddings(std::uint32_t nodes, std::uint32_t dim, std::uint64_t seed) {
  NodeEmbeddings<Real> e(nodes, dim);
  Rng rng = make_rng(seed, 0x5c1b);
  const double bound = std::sqrt(6.0 / static_cast<double>(nodes + dim));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : e[0].data) v = static_cast<Real>(dist(rng));
  return e;
}

/// -log sigma(v.u) - sum_n log sigma(-vn.u)
template <class Real>
double skipgram_loss(const NodeEmbeddings<Real>& e, std::uint32_t u, std::uint32_t v,
                     std::span<const std::uint32_t> negatives) {
  const std::size_t d = e.dim();
  const Real* cu = e[0].row(u);
  double loss = softplus(-static_cast<double>(detail::dot(e[1].row(v), cu, d)));
  for (auto n : negatives) loss += softplus(static_cast<double>(detail::dot(e[1].row(n), cu, d)));
  return loss;
}

/// Adds the gradient of skipgram_loss to `g` (slot 0 center, 1 context).
template <class Real>
double add_skipgram_gradient(const NodeEmbeddings<Real>& e, std::uint32_t u, std::uint32_t v,
                             std::span<const std::uint32_t> negatives, SparseGradient<Real>& g) {
  const std::size_t d = e.dim();
  const Real* cu = e[0].row(u);
  const std::size_t ou = g.offset(0, u);
  const std::size_t ov = g.offset(1, v);
  const Real* cv = e[1].row(v);
  const double sv = static_cast<double>(detail::dot(cv, cu, d));
  double loss = softplus(-sv);
  const Real a = static_cast<Real>(-sigmoid(-sv));
  for (std::size_t k = 0; k < d; ++k) {
    g.data()[ou + k] += a * cv[k];
    g.data()[ov + k] += a * cu[k];
  }
  for (auto n : negatives) {
    const Real* cn = e[1].row(n);
    const double sn = static_cast<double>(detail::dot(cn, cu, d));
    loss += softplus(sn);
    const Real b = static_cast<Real>(sigmoid(sn));
    const std::size_t on = g.offset(1, n);
    for (std::size_t k = 0; k < d; ++k) {
      g.data()[ou + k] += b * cn[k];
      g.data()[on + k] += b * cu[k];
    }
  }
  return loss;
}

/// Per-node negative caches. Candidates exclude the node itself and every
/// node that co-occurs with it inside a window anywhere in the corpus.
template <class Real>
class NodeCacheSet {
 public:
  NodeCacheSet(std::uint32_t nodes, std::vector<std::vector<std::uint32_t>> excluded, EEHyperParams ee)
      : nodes_(nodes), excluded_(std::move(excluded)), ee_(ee), entries_(nodes), cdf_(nodes) {}

  const std::vector<CacheEntry>& entries(std::uint32_t u) const { return entries_[u]; }
  const std::vector<std::uint32_t>& excluded(std::uint32_t u) const { return excluded_[u]; }

  /// Same union / rescale / without-replacement rule as the KG caches,
  /// scoring a candidate n by context(n) . center(u).
  void refresh(std::uint32_t u, const NodeEmbeddings<Real>& emb, Rng& rng) {
    auto& cache = entries_[u];
    std::vector<std::uint32_t> pool;
    for (const auto& c : cache) pool.push_back(c.entity);
    const auto fresh = draw_fresh(u, pool, rng);
    pool.insert(pool.end(), fresh.begin(), fresh.end());
    cache.clear();
    cdf_[u].clear();
    if (pool.empty()) return;
    std::vector<double> scores(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i)
      scores[i] = static_cast<double>(detail::dot(emb[1].row(pool[i]), emb[0].row(u), emb.dim()));
    auto r = rescale(scores);
    for (auto i : sample_without_replacement(r.values, ee_.alpha3, ee_.cache_size, rng))
      cache.push_back({pool[i], scores[i]});
    std::vector<double> kept(cache.size());
    for (std::size_t i = 0; i < kept.size(); ++i) kept[i] = cache[i].score;
    auto p = rescaled_softmax(kept, ee_.alpha2);
    cdf_[u].resize(p.size());
    std::partial_sum(p.begin(), p.end(), cdf_[u].begin());
  }

  void refresh_all(const NodeEmbeddings<Real>& emb, std::uint64_t seed, std::uint64_t round) {
    const std::uint64_t s = stream_seed(seed, 0xcace0000ULL + round);
    for (std::uint32_t u = 0; u < nodes_; ++u) {
      Rng rng = make_rng(s, u);
      refresh(u, emb, rng);
    }
  }

  /// One cached negative for `u`, or nothing when the cache is empty.
  std::optional<std::uint32_t> draw(std::uint32_t u, Rng& rng) const {
    const auto& cdf = cdf_[u];
    if (cdf.empty()) return std::nullopt;
    const double x = uniform_open01(rng) * cdf.back();
    auto it = std::upper_bound(cdf.begin(), cdf.end(), x);
    const auto i = std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
    return entries_[u][i].entity;
  }

 private:
  bool blocked(std::uint32_t u, std::uint32_t n) const {
    return n == u || std::binary_search(excluded_[u].begin(), excluded_[u].end(), n);
  }

  std::vector<std::uint32_t> draw_fresh(std::uint32_t u, const std::vector<std::uint32_t>& current, Rng& rng) const {
    const std::size_t want = ee_.candidate_size;
    auto in_current = [&](std::uint32_t n) { return std::find(current.begin(), current.end(), n) != current.end(); };
    std::vector<std::uint32_t> out;
    if (nodes_ <= 4 * (want + current.size() + excluded_[u].size())) {
      for (std::uint32_t n = 0; n < nodes_; ++n)
        if (!blocked(u, n) && !in_current(n)) out.push_back(n);
      const std::size_t k = std::min(want, out.size());
      for (std::size_t i = 0; i < k; ++i) std::swap(out[i], out[i + uniform_index(rng, out.size() - i)]);
      out.resize(k);
      return out;
    }
    std::unordered_set<std::uint32_t> taken;
    for (std::size_t i = 0; i < want; ++i) {
      for (int attempt = 0; attempt < 100; ++attempt) {
        const auto n = static_cast<std::uint32_t>(uniform_index(rng, nodes_));
        if (blocked(u, n) || in_current(n) || taken.count(n)) continue;
        taken.insert(n);
        out.push_back(n);
        break;
      }
    }
    return out;
  }

  std::uint32_t nodes_;
  std::vector<std::vector<std::uint32_t>> excluded_;
  EEHyperParams ee_;
  std::vector<std::vector<CacheEntry>> entries_;
  std::vector<std::vector<double>> cdf_;
};

/// Sorted window co-occurrents of every node over the corpus.
inline std::vector<std::vector<std::uint32_t>> window_cooccurrents(const std::vector<Walk>& corpus,
                                                                   std::uint32_t nodes, std::uint32_t window) {
  std::vector<std::vector<std::uint32_t>> out(nodes);
  for (const auto& w : corpus) {
    for (std::size_t i = 0; i < w.size(); ++i) {
      const std::size_t lo = i >= window ? i - window : 0, hi = std::min(w.size(), i + window + 1);
      for (std::size_t j = lo; j < hi; ++j)
        if (j != i) out[w[i]].push_back(w[j]);
    }
  }
  for (auto& v : out) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }
  return out;
}

/// Overrides the built-in negative modes: returns a negative for center `u`.
using NegativeHook = std::function<std::optional<std::uint32_t>(std::uint32_t u, Rng&)>;

struct SkipGramResult {
  NodeEmbeddings<float> embeddings;
  std::vector<double> epoch_loss;  // mean pair loss per epoch
  std::vector<double> block_loss;  // mean pair loss per refresh block
};

/// Skip-gram over all (center, context) pairs within the window, in corpus
/// order, mini-batched sparse Adam with weight decay.
inline SkipGramResult train_skipgram(const std::vector<Walk>& corpus, std::uint32_t nodes, const WalkConfig& cfg,
                                     const EEHyperParams& ee, std::uint64_t seed, const NegativeHook& hook = {}) {
  cfg.validate();
  ee.validate();
  if (corpus.empty()) throw std::invalid_argument("empty walk corpus");
  SkipGramResult res;
  auto& emb = res.embeddings;
  emb = init_node_embeddings<float>(nodes, cfg.dim, seed);
  AdamState<float> adam(emb);
  Rng rng = make_rng(seed, 0x5a);

  std::optional<NodeCacheSet<float>> caches;
  std::optional<std::discrete_distribution<std::uint32_t>> unigram;
  if (!hook && cfg.mode == NegativeMode::Cache) {
    caches.emplace(nodes, window_cooccurrents(corpus, nodes, cfg.window), ee);
    caches->refresh_all(emb, seed, 0);
  } else if (!hook && cfg.mode == NegativeMode::Unigram) {
    std::vector<double> counts(nodes, 0.0);
    for (const auto& w : corpus)
      for (auto n : w) counts[n] += 1;
    for (auto& c : counts) c = std::pow(c, 0.75);
    unigram.emplace(counts.begin(), counts.end());
  }
  auto negative = [&](std::uint32_t u) -> std::optional<std::uint32_t> {
    if (hook) return hook(u, rng);
    switch (cfg.mode) {
      case NegativeMode::Cache: return caches->draw(u, rng);
      case NegativeMode::Uniform: {
        if (nodes < 2) return std::nullopt;
        std::uint32_t n = u;
        for (int attempt = 0; attempt < 100 && n == u; ++attempt)
          n = static_cast<std::uint32_t>(uniform_index(rng, nodes));
        return n == u ? std::nullopt : std::optional<std::uint32_t>(n);
      }
      case NegativeMode::Unigram: return (*unigram)(rng);
    }
    return std::nullopt;
  };

  SparseGradient<float> grad(cfg.dim);
  std::vector<std::uint32_t> negs;
  std::size_t in_batch = 0, batches = 0, refresh_round = 0;
  double block_sum = 0;
  std::size_t block_pairs = 0;
  auto flush = [&] {
    if (in_batch == 0) return;
    if (cfg.weight_decay > 0) {
      const float wd = static_cast<float>(cfg.weight_decay);
      for (const auto& e : grad.entries()) {
        const float* p = emb[e.slot].row(e.row);
        float* g = grad.data() + e.offset;
        for (std::size_t k = 0; k < cfg.dim; ++k) g[k] += wd * p[k];
      }
    }
    adam_step(emb, adam, grad, cfg.learning_rate);
    grad.clear();
    in_batch = 0;
    if (++batches % cfg.refresh_batches == 0) {
      if (lazy_refresh_due(batches / cfg.refresh_batches, ee.lazy_n) && caches)
        caches->refresh_all(emb, seed, ++refresh_round);
      if (block_pairs) res.block_loss.push_back(block_sum / static_cast<double>(block_pairs));
      block_sum = 0;
      block_pairs = 0;
    }
  };

  for (std::uint32_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double epoch_sum = 0;
    std::size_t epoch_pairs = 0;
    for (const auto& w : corpus) {
      for (std::size_t i = 0; i < w.size(); ++i) {
        const std::size_t lo = i >= cfg.window ? i - cfg.window : 0, hi = std::min(w.size(), i + cfg.window + 1);
        for (std::size_t j = lo; j < hi; ++j) {
          if (j == i) continue;
          negs.clear();
          for (std::uint32_t k = 0; k < cfg.negatives; ++k)
            if (auto n = negative(w[i])) negs.push_back(*n);
          const double loss = add_skipgram_gradient(emb, w[i], w[j], negs, grad);
          if (!std::isfinite(loss))
            throw std::runtime_error("non-finite skip-gram loss at epoch " + std::to_string(epoch));
          epoch_sum += loss;
          block_sum += loss;
          ++epoch_pairs;
          ++block_pairs;
          if (++in_batch == cfg.batch_size) flush();
        }
      }
    }
    flush();
    res.epoch_loss.push_back(epoch_pairs ? epoch_sum / static_cast<double>(epoch_pairs) : 0.0);
  }
  return res;
}

inline void write_node_embeddings(const std::filesystem::path& path, const NodeEmbeddings<float>& emb,
                                  const Graph& g) {
  write_atomic(path, [&](std::ostream& out) {
    out.precision(9);
    for (std::uint32_t u = 0; u < emb.size(); ++u) {
      out << g.nodes.name(u);
      const float* row = emb[0].row(u);
      for (std::size_t k = 0; k < emb.dim(); ++k) out << ' ' << row[k];
      out << '\n';
    }
  });
}

// ---------------------------------------------------------------------------
// Node classification

struct LogisticOptions {
  double lambda = 1e-4;
  std::uint32_t steps = 500;
};

/// One-vs-rest L2-regularized logistic regression on standardized features,
/// full-batch gradient descent with step 1/L.
class OneVsRestLogistic {
 public:
  void fit(const std::vector<std::vector<double>>& x, std::span<const int> y, int classes,
           LogisticOptions opt = {}) {
    if (x.empty()) throw std::invalid_argument("no training rows");
    const std::size_t n = x.size(), d = x.front().size();
    mean_.assign(d, 0.0);
    scale_.assign(d, 1.0);
    for (const auto& row : x)
      for (std::size_t k = 0; k < d; ++k) mean_[k] += row[k];
    for (auto& m : mean_) m /= static_cast<double>(n);
    std::vector<double> var(d, 0.0);
    for (const auto& row : x)
      for (std::size_t k = 0; k < d; ++k) var[k] += (row[k] - mean_[k]) * (row[k] - mean_[k]);
    for (std::size_t k = 0; k < d; ++k) {
      const double s = std::sqrt(var[k] / static_cast<double>(n));
      scale_[k] = s > 1e-12 ? 1.0 / s : 1.0;
    }
    auto z = standardize(x);
    // Lipschitz constant of the mean logistic loss: lambda_max(Z^T Z / n) / 4 + lambda.
    const std::size_t w = d + 1;
    std::vector<double> v(w, 1.0 / std::sqrt(static_cast<double>(w))), next(w);
    double top = 1.0;
    for (int it = 0; it < 100; ++it) {
      std::fill(next.begin(), next.end(), 0.0);
      for (const auto& row : z) {
        double s = v[d];
        for (std::size_t k = 0; k < d; ++k) s += row[k] * v[k];
        for (std::size_t k = 0; k < d; ++k) next[k] += s * row[k];
        next[d] += s;
      }
      double norm = 0;
      for (auto& e : next) {
        e /= static_cast<double>(n);
        norm += e * e;
      }
      norm = std::sqrt(norm);
      if (norm <= 0) break;
      top = norm;
      for (std::size_t k = 0; k < w; ++k) v[k] = next[k] / norm;
    }
    const double step = 1.0 / (0.25 * top + opt.lambda);

    weights_.assign(classes, std::vector<double>(w, 0.0));
    absent_.clear();
    std::vector<double> g(w);
    for (int c = 0; c < classes; ++c) {
      if (std::find(y.begin(), y.end(), c) == y.end()) absent_.push_back(c);
      auto& wc = weights_[c];
      for (std::uint32_t it = 0; it < opt.steps; ++it) {
        std::fill(g.begin(), g.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
          const double target = y[i] == c ? 1.0 : 0.0;
          const double r = sigmoid(margin(wc, z[i])) - target;
          for (std::size_t k = 0; k < d; ++k) g[k] += r * z[i][k];
          g[d] += r;
        }
        for (std::size_t k = 0; k < w; ++k) {
          g[k] /= static_cast<double>(n);
          if (k < d) g[k] += opt.lambda * wc[k];
          wc[k] -= step * g[k];
        }
      }
    }
  }

  std::vector<int> predict(const std::vector<std::vector<double>>& x) const {
    auto z = standardize(x);
    std::vector<int> out(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < weights_.size(); ++c) {
        const double s = margin(weights_[c], z[i]);
        if (s > best) {
          best = s;
          out[i] = static_cast<int>(c);
        }
      }
    }
    return out;
  }

  /// Classes with no training example in the last fit.
  const std::vector<int>& absent_classes() const { return absent_; }

 private:
  std::vector<std::vector<double>> standardize(const std::vector<std::vector<double>>& x) const {
    auto z = x;
    for (auto& row : z)
      for (std::size_t k = 0; k < row.size(); ++k) row[k] = (row[k] - mean_[k]) * scale_[k];
    return z;
  }
  static double margin(const std::vector<double>& w, const std::vector<double>& z) {
    double s = w.back();
    for (std::size_t k = 0; k < z.size(); ++k) s += w[k] * z[k];
    return s;
  }

  std::vector<double> mean_, scale_;
  std::vector<std::vector<double>> weights_;
  std::vector<int> absent_;
};

struct NodeClassification {
  double micro_mean = 0, micro_std = 0;
  double macro_mean = 0, macro_std = 0;
  std::vector<double> micro, macro;
  std::vector<int> absent_classes;  // union over splits
};

/// Mean and std over `splits` random train/test partitions of the labeled
/// nodes; `features[u]` is node u's vector.
inline NodeClassification classify_nodes(const std::vector<std::vector<double>>& features, std::span<const int> labels,
                                         int classes, double train_fraction, std::uint64_t seed,
                                         std::uint32_t splits = 5, LogisticOptions opt = {}) {
  if (!(train_fraction > 0 && train_fraction < 1)) throw std::invalid_argument("train fraction must be in (0, 1)");
  std::vector<std::uint32_t> labeled;
  for (std::uint32_t u = 0; u < labels.size(); ++u)
    if (labels[u] >= 0) labeled.push_back(u);
  if (labeled.size() < 2) throw std::invalid_argument("need at least two labeled nodes");
  NodeClassification out;
  for (std::uint32_t s = 0; s < splits; ++s) {
    Rng rng = make_rng(seed, 0xc1a0 + s);
    auto order = labeled;
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
    const auto n_train = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(order.size()))), 1,
        order.size() - 1);
    std::vector<std::vector<double>> xtr, xte;
    std::vector<int> ytr, yte;
    for (std::size_t i = 0; i < order.size(); ++i) {
      auto& x = i < n_train ? xtr : xte;
      auto& y = i < n_train ? ytr : yte;
      x.push_back(features[order[i]]);
      y.push_back(labels[order[i]]);
    }
    OneVsRestLogistic clf;
    clf.fit(xtr, ytr, classes, opt);
    for (int c : clf.absent_classes())
      if (std::find(out.absent_classes.begin(), out.absent_classes.end(), c) == out.absent_classes.end())
        out.absent_classes.push_back(c);
    auto f1 = f1_scores(clf.predict(xte), yte, classes);
    out.micro.push_back(f1.micro);
    out.macro.push_back(f1.macro);
  }
  auto stats = [](const std::vector<double>& v, double& mean, double& sd) {
    mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0;
    for (double x : v) ss += (x - mean) * (x - mean);
    sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  };
  stats(out.micro, out.micro_mean, out.micro_std);
  stats(out.macro, out.macro_mean, out.macro_std);
  return out;
}

template <class Real>
std::vector<std::vector<double>> node_features(const NodeEmbeddings<Real>& emb) {
  std::vector<std::vector<double>> x(emb.size(), std::vector<double>(emb.dim()));
  for (std::size_t u = 0; u < emb.size(); ++u)
    for (std::size_t k = 0; k < emb.dim(); ++k) x[u][k] = static_cast<double>(emb[0].row(u)[k]);
  return x;
}

}  // namespace kge

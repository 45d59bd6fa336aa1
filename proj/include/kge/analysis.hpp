#pragma once

// Diagnostics: distribution of pair-gradient norms over all tail
// corruptions of chosen training triplets.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "kge/io.hpp"
#include "kge/kg_data.hpp"
#include "kge/scoring.hpp"

namespace kge {

/// ||g||_2 of the pair (pos, (h, r, e)) for every entity e whose
/// substitution is not a train triplet, pooled over `triplet_ids`.
template <class Real>
std::vector<double> tail_gradient_norms(const BasicEmbeddingStore<Real>& store, const ScoringFunction& fn,
                                        const Loss& loss, const KnowledgeGraph& kg,
                                        std::span<const std::size_t> triplet_ids) {
  check_compatible(store, fn);
  std::vector<double> out;
  PairGradient<Real> pg;
  for (auto id : triplet_ids) {
    const auto& pos = kg.train.at(id);
    for (std::uint32_t e = 0; e < kg.entity_count; ++e) {
      const Triplet neg{pos.head, pos.relation, e};
      if (kg.in_train(neg)) continue;
      pair_gradient_into(store, fn, loss, pos, neg, pg);
      out.push_back(pg.norm);
    }
  }
  return out;
}

/// (x, P(X >= x)) at x = 0 and at every distinct observed value, ascending.
inline std::vector<std::pair<double, double>> ccdf(std::vector<double> values) {
  std::vector<std::pair<double, double>> out;
  if (values.empty()) return out;
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  if (values.front() > 0) out.emplace_back(0.0, 1.0);
  for (std::size_t i = 0; i < values.size();) {
    std::size_t j = i;
    while (j < values.size() && values[j] == values[i]) ++j;
    out.emplace_back(values[i], static_cast<double>(values.size() - i) / n);
    i = j;
  }
  return out;
}

/// Empirical CCDF evaluated at `x`.
inline double ccdf_at(std::span<const std::pair<double, double>> curve, double x) {
  for (const auto& [v, p] : curve)
    if (v >= x) return p;
  return 0.0;
}

inline void write_ccdf(const std::filesystem::path& path, std::span<const std::pair<double, double>> curve) {
  write_atomic(path, [&](std::ostream& out) {
    out.precision(10);
    out << "x\tccdf\n";
    for (const auto& [x, p] : curve) out << x << '\t' << p << '\n';
  });
}

}  // namespace kge

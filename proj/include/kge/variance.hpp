#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "kge/kg_data.hpp"

namespace kge {

/// Welford running mean / M2.
struct RunningStats {
  std::uint64_t count = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) {
    ++count;
    const double delta = x - mean;
    mean += delta / static_cast<double>(count);
    m2 += delta * (x - mean);
  }

  /// Sample variance; undefined below two observations.
  std::optional<double> variance() const {
    if (count < 2) return std::nullopt;
    return m2 / static_cast<double>(count - 1);
  }

  double stddev_or_zero() const {
    auto v = variance();
    return v ? std::sqrt(std::max(*v, 0.0)) : 0.0;
  }
};

/// Per-triplet score variance across epochs for a fixed list of triplets.
class VarianceTracker {
 public:
  VarianceTracker() = default;
  VarianceTracker(std::vector<Triplet> tracked, double nu = 0.0) : tracked_(std::move(tracked)), nu_(nu) {
    if (nu < 0) throw std::invalid_argument("nu must be nonnegative");
    stats_.resize(tracked_.size());
    series_.resize(tracked_.size());
  }

  const std::vector<Triplet>& tracked() const { return tracked_; }
  double nu() const { return nu_; }

  /// One observation per tracked triplet, typically once per epoch.
  void observe(std::span<const double> scores) {
    if (scores.size() != tracked_.size()) throw std::invalid_argument("score count does not match tracked triplets");
    for (std::size_t i = 0; i < scores.size(); ++i) {
      stats_[i].add(scores[i]);
      series_[i].push_back(stats_[i].variance());
    }
  }

  const RunningStats& stats(std::size_t i) const { return stats_[i]; }

  /// Variance after each observation (absent until two observations).
  const std::vector<std::optional<double>>& variance_series(std::size_t i) const { return series_[i]; }

  /// score + nu * std, the variance-aware quality.
  double quality(std::size_t i, double score) const { return score + nu_ * stats_[i].stddev_or_zero(); }

 private:
  std::vector<Triplet> tracked_;
  double nu_ = 0.0;
  std::vector<RunningStats> stats_;
  std::vector<std::vector<std::optional<double>>> series_;
};

/// Convenience: variance series for each row of `scores_per_epoch`
/// (outer index = epoch, inner = tracked triplet).
inline std::vector<std::vector<std::optional<double>>> track_variance(
    VarianceTracker& tracker, std::span<const std::vector<double>> scores_per_epoch) {
  for (const auto& epoch_scores : scores_per_epoch) tracker.observe(epoch_scores);
  std::vector<std::vector<std::optional<double>>> out;
  for (std::size_t i = 0; i < tracker.tracked().size(); ++i) out.push_back(tracker.variance_series(i));
  return out;
}

}  // namespace kge

#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "kge/scoring.hpp"

namespace kge {

/// Moment estimates shaped like every parameter matrix of a store.
template <class Real>
struct AdamState {
  std::vector<Matrix<Real>> first;
  std::vector<Matrix<Real>> second;
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  AdamState() = default;
  template <class Store>
  explicit AdamState(const Store& store) {
    for (const auto& m : store.matrices) {
      first.emplace_back(m.rows, m.cols);
      second.emplace_back(m.rows, m.cols);
    }
  }
};

/// One Adam step over the rows present in `gradient` (lazy/sparse Adam):
/// `store` is anything with `matrices` and `operator[](slot)`;
/// moments of absent rows are left untouched, and the step counter used for
/// bias correction advances once per call.
template <class Real, class Store>
void adam_step(Store& store, AdamState<Real>& state, const SparseGradient<Real>& gradient, double learning_rate) {
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  const Real b1 = static_cast<Real>(state.beta1), b2 = static_cast<Real>(state.beta2);
  const Real step_size = static_cast<Real>(learning_rate / c1);
  const Real inv_c2 = static_cast<Real>(1.0 / c2);
  const Real eps = static_cast<Real>(state.epsilon);
  const std::size_t w = gradient.width();
  for (const auto& e : gradient.entries()) {
    Real* p = store[e.slot].row(e.row);
    Real* m = state.first[e.slot].row(e.row);
    Real* v = state.second[e.slot].row(e.row);
    const Real* g = gradient.data() + e.offset;
    for (std::size_t k = 0; k < w; ++k) {
      m[k] = b1 * m[k] + (Real(1) - b1) * g[k];
      v[k] = b2 * v[k] + (Real(1) - b2) * g[k] * g[k];
      p[k] -= step_size * m[k] / (std::sqrt(v[k] * inv_c2) + eps);
    }
  }
}

}  // namespace kge

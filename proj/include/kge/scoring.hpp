#pragma once

// Embedding storage, scoring functions, pair losses and their analytic
// gradients.
//
// Every score is "higher is more plausible": translational models return a
// negated L1 distance. Complex-valued models (ComplEx, RotatE) store each
// vector as [real parts | imaginary parts], so their rows have width 2d.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kge/kg_data.hpp"
#include "kge/random.hpp"

namespace kge {

enum class ModelKind : std::uint32_t { TransE, TransH, TransD, DistMult, ComplEx, SimplE, RotatE };

inline constexpr std::array<ModelKind, 7> kAllModels{ModelKind::TransE,   ModelKind::TransH,  ModelKind::TransD,
                                                    ModelKind::DistMult, ModelKind::ComplEx, ModelKind::SimplE,
                                                    ModelKind::RotatE};

inline std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::TransE: return "TransE";
    case ModelKind::TransH: return "TransH";
    case ModelKind::TransD: return "TransD";
    case ModelKind::DistMult: return "DistMult";
    case ModelKind::ComplEx: return "ComplEx";
    case ModelKind::SimplE: return "SimplE";
    case ModelKind::RotatE: return "RotatE";
  }
  return "?";
}

inline std::string lowercase(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline ModelKind parse_model(std::string_view name) {
  auto lower = lowercase(name);
  for (auto kind : kAllModels)
    if (lowercase(to_string(kind)) == lower) return kind;
  throw std::invalid_argument("unknown model: " + std::string(name));
}

inline bool is_translational(ModelKind kind) {
  return kind == ModelKind::TransE || kind == ModelKind::TransH || kind == ModelKind::TransD ||
         kind == ModelKind::RotatE;
}

inline bool is_complex(ModelKind kind) { return kind == ModelKind::ComplEx || kind == ModelKind::RotatE; }

/// Slots of the parameter matrices. Slot 0 is always the entity table and
/// slot 1 the relation table; the auxiliary slots depend on the model.
enum Slot : std::uint8_t {
  kEntity = 0,
  kRelation = 1,
  kAux0 = 2,  // TransH normal w_r | TransD entity projection | SimplE entity copy
  kAux1 = 3,  // TransD relation projection | SimplE relation copy
};

struct MatrixSpec {
  std::string_view name;
  bool per_entity;  // rows = |E| when true, |R| otherwise
};

inline std::span<const MatrixSpec> matrix_layout(ModelKind kind) {
  static constexpr MatrixSpec basic[] = {{"entity", true}, {"relation", false}};
  static constexpr MatrixSpec transh[] = {{"entity", true}, {"relation", false}, {"relation_normal", false}};
  static constexpr MatrixSpec transd[] = {
      {"entity", true}, {"relation", false}, {"entity_projection", true}, {"relation_projection", false}};
  static constexpr MatrixSpec simple[] = {
      {"entity", true}, {"relation", false}, {"entity_second", true}, {"relation_second", false}};
  switch (kind) {
    case ModelKind::TransH: return transh;
    case ModelKind::TransD: return transd;
    case ModelKind::SimplE: return simple;
    default: return basic;
  }
}

/// Model choice plus its shape. `dim` is d; complex models use rows of 2d.
struct ScoringFunction {
  ModelKind kind = ModelKind::TransE;
  std::uint32_t dim = 50;
  bool simple_halved = false;  // SimplE: average the two bilinear terms

  std::uint32_t width() const { return is_complex(kind) ? 2 * dim : dim; }
};

template <class Real>
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<Real> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, Real(0)) {}

  Real* row(std::size_t i) { return data.data() + i * cols; }
  const Real* row(std::size_t i) const { return data.data() + i * cols; }
  std::span<Real> row_span(std::size_t i) { return {row(i), cols}; }
  std::span<const Real> row_span(std::size_t i) const { return {row(i), cols}; }
};

template <class Real>
struct BasicEmbeddingStore {
  ModelKind kind = ModelKind::TransE;
  std::uint32_t dim = 0;
  std::uint32_t entity_count = 0;
  std::uint32_t relation_count = 0;
  std::vector<Matrix<Real>> matrices;

  BasicEmbeddingStore() = default;
  BasicEmbeddingStore(ModelKind k, std::uint32_t d, std::uint32_t entities, std::uint32_t relations)
      : kind(k), dim(d), entity_count(entities), relation_count(relations) {
    const std::size_t w = is_complex(k) ? 2 * d : d;
    for (const auto& spec : matrix_layout(k)) matrices.emplace_back(spec.per_entity ? entities : relations, w);
  }

  std::size_t width() const { return matrices.empty() ? 0 : matrices.front().cols; }
  Matrix<Real>& operator[](std::size_t slot) { return matrices[slot]; }
  const Matrix<Real>& operator[](std::size_t slot) const { return matrices[slot]; }

  bool all_finite() const {
    for (const auto& m : matrices)
      for (Real v : m.data)
        if (!std::isfinite(v)) return false;
    return true;
  }
};

using EmbeddingStore = BasicEmbeddingStore<float>;

template <class To, class From>
BasicEmbeddingStore<To> convert_store(const BasicEmbeddingStore<From>& from) {
  BasicEmbeddingStore<To> to;
  to.kind = from.kind;
  to.dim = from.dim;
  to.entity_count = from.entity_count;
  to.relation_count = from.relation_count;
  for (const auto& m : from.matrices) {
    Matrix<To> c(m.rows, m.cols);
    std::transform(m.data.begin(), m.data.end(), c.data.begin(), [](From v) { return static_cast<To>(v); });
    to.matrices.push_back(std::move(c));
  }
  return to;
}

template <class Real>
void check_compatible(const BasicEmbeddingStore<Real>& store, const ScoringFunction& fn) {
  if (store.kind != fn.kind || store.dim != fn.dim || store.width() != fn.width())
    throw std::invalid_argument("embedding store does not match scoring function " + std::string(to_string(fn.kind)));
}

/// Gradient over a sparse set of parameter rows. Rows are zero-filled on
/// first access; lookups are linear while the set is small and hashed after.
template <class Real>
class SparseGradient {
 public:
  struct Entry {
    std::uint8_t slot;
    std::uint32_t row;
    std::size_t offset;
  };

  explicit SparseGradient(std::size_t width = 0) : width_(width) {}

  void reset(std::size_t width) {
    clear();
    width_ = width;
  }

  void clear() {
    entries_.clear();
    values_.clear();
    if (!lookup_.empty()) lookup_.clear();
  }

  std::size_t width() const { return width_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::vector<Entry>& entries() const { return entries_; }

  /// Offset of the row in data(); inserting may invalidate earlier pointers
  /// but never offsets.
  std::size_t offset(std::uint8_t slot, std::uint32_t row) {
    const std::uint64_t key = (static_cast<std::uint64_t>(slot) << 32) | row;
    if (entries_.size() < kLinearLimit) {
      for (const auto& e : entries_)
        if (e.slot == slot && e.row == row) return e.offset;
    } else {
      if (lookup_.empty())
        for (std::uint32_t i = 0; i < entries_.size(); ++i)
          lookup_.emplace((static_cast<std::uint64_t>(entries_[i].slot) << 32) | entries_[i].row, i);
      auto it = lookup_.find(key);
      if (it != lookup_.end()) return entries_[it->second].offset;
      lookup_.emplace(key, static_cast<std::uint32_t>(entries_.size()));
    }
    std::size_t off = values_.size();
    values_.resize(off + width_, Real(0));
    entries_.push_back({slot, row, off});
    return off;
  }

  Real* data() { return values_.data(); }
  const Real* data() const { return values_.data(); }
  std::span<const Real> values(const Entry& e) const { return {values_.data() + e.offset, width_}; }
  std::span<Real> values(const Entry& e) { return {values_.data() + e.offset, width_}; }

  void add(const SparseGradient& other, Real scale = Real(1)) {
    for (const auto& e : other.entries_) {
      auto off = offset(e.slot, e.row);
      Real* dst = values_.data() + off;
      const Real* src = other.values_.data() + e.offset;
      for (std::size_t k = 0; k < width_; ++k) dst[k] += scale * src[k];
    }
  }

  Real norm() const {
    Real s = 0;
    for (Real v : values_) s += v * v;
    return std::sqrt(s);
  }

 private:
  static constexpr std::size_t kLinearLimit = 24;
  std::size_t width_;
  std::vector<Entry> entries_;
  std::vector<Real> values_;
  std::unordered_map<std::uint64_t, std::uint32_t> lookup_;
};

// ---------------------------------------------------------------------------
// Scores

namespace detail {

template <class Real>
Real sgn(Real x) {
  return x > 0 ? Real(1) : (x < 0 ? Real(-1) : Real(0));
}

template <class Real>
Real dot(const Real* a, const Real* b, std::size_t n) {
  Real s = 0;
  for (std::size_t k = 0; k < n; ++k) s += a[k] * b[k];
  return s;
}

template <class Real>
Real score_unchecked(const BasicEmbeddingStore<Real>& s, const ScoringFunction& fn, std::uint32_t h,
                     std::uint32_t r, std::uint32_t t) {
  const std::size_t d = fn.dim;
  const Real* eh = s[kEntity].row(h);
  const Real* et = s[kEntity].row(t);
  const Real* er = s[kRelation].row(r);
  switch (fn.kind) {
    case ModelKind::TransE: {
      Real acc = 0;
      for (std::size_t k = 0; k < d; ++k) acc += std::abs(eh[k] + er[k] - et[k]);
      return -acc;
    }
    case ModelKind::TransH: {
      const Real* w = s[kAux0].row(r);
      const Real wh = dot(w, eh, d), wt = dot(w, et, d);
      Real acc = 0;
      for (std::size_t k = 0; k < d; ++k) acc += std::abs(eh[k] - wh * w[k] + er[k] - et[k] + wt * w[k]);
      return -acc;
    }
    case ModelKind::TransD: {
      const Real* ph = s[kAux0].row(h);
      const Real* pt = s[kAux0].row(t);
      const Real* pr = s[kAux1].row(r);
      const Real a = dot(ph, eh, d), b = dot(pt, et, d);
      Real acc = 0;
      for (std::size_t k = 0; k < d; ++k) acc += std::abs(eh[k] + a * pr[k] + er[k] - et[k] - b * pr[k]);
      return -acc;
    }
    case ModelKind::DistMult: {
      Real acc = 0;
      for (std::size_t k = 0; k < d; ++k) acc += eh[k] * er[k] * et[k];
      return acc;
    }
    case ModelKind::ComplEx: {
      const Real *hr = eh, *hi = eh + d, *rr = er, *ri = er + d, *tr = et, *ti = et + d;
      Real acc = 0;
      for (std::size_t k = 0; k < d; ++k)
        acc += hr[k] * rr[k] * tr[k] + hi[k] * rr[k] * ti[k] + hr[k] * ri[k] * ti[k] - hi[k] * ri[k] * tr[k];
      return acc;
    }
    case ModelKind::SimplE: {
      const Real* h2 = s[kAux0].row(h);
      const Real* t2 = s[kAux0].row(t);
      const Real* r2 = s[kAux1].row(r);
      Real acc = 0;
      for (std::size_t k = 0; k < d; ++k) acc += eh[k] * er[k] * t2[k] + h2[k] * r2[k] * et[k];
      return fn.simple_halved ? acc / 2 : acc;
    }
    case ModelKind::RotatE: {
      const Real *hr = eh, *hi = eh + d, *rr = er, *ri = er + d, *tr = et, *ti = et + d;
      Real acc = 0;
      for (std::size_t k = 0; k < d; ++k) {
        const Real zr = hr[k] * rr[k] - hi[k] * ri[k] - tr[k];
        const Real zi = hr[k] * ri[k] + hi[k] * rr[k] - ti[k];
        acc += std::sqrt(zr * zr + zi * zi);
      }
      return -acc;
    }
  }
  return 0;
}

/// Adds coeff * d score / d params to `g`.
template <class Real>
void add_score_gradient(const BasicEmbeddingStore<Real>& s, const ScoringFunction& fn, std::uint32_t h,
                        std::uint32_t r, std::uint32_t t, Real coeff, SparseGradient<Real>& g) {
  const std::size_t d = fn.dim;
  const Real* eh = s[kEntity].row(h);
  const Real* et = s[kEntity].row(t);
  const Real* er = s[kRelation].row(r);
  const std::size_t oh = g.offset(kEntity, h);
  const std::size_t ot = g.offset(kEntity, t);
  const std::size_t orl = g.offset(kRelation, r);
  switch (fn.kind) {
    case ModelKind::TransE: {
      Real* G = g.data();
      for (std::size_t k = 0; k < d; ++k) {
        const Real gk = -coeff * sgn(eh[k] + er[k] - et[k]);  // d score / d e_k scaled
        G[oh + k] += gk;
        G[orl + k] += gk;
        G[ot + k] -= gk;
      }
      return;
    }
    case ModelKind::TransH: {
      const Real* w = s[kAux0].row(r);
      const std::size_t ow = g.offset(kAux0, r);
      Real* G = g.data();
      const Real wh = dot(w, eh, d), wt = dot(w, et, d);
      // e = u - (w.u) w + r with u = h - t; g_e = -sign(e).
      Real wg = 0;
      thread_local std::vector<Real> ge;
      ge.resize(d);
      for (std::size_t k = 0; k < d; ++k) {
        ge[k] = -coeff * sgn(eh[k] - wh * w[k] + er[k] - et[k] + wt * w[k]);
        wg += w[k] * ge[k];
      }
      const Real wu = wh - wt;
      for (std::size_t k = 0; k < d; ++k) {
        const Real proj = ge[k] - wg * w[k];
        G[oh + k] += proj;
        G[ot + k] -= proj;
        G[orl + k] += ge[k];
        G[ow + k] -= wg * (eh[k] - et[k]) + wu * ge[k];
      }
      return;
    }
    case ModelKind::TransD: {
      const Real* ph = s[kAux0].row(h);
      const Real* pt = s[kAux0].row(t);
      const Real* pr = s[kAux1].row(r);
      const std::size_t oph = g.offset(kAux0, h);
      const std::size_t opt = g.offset(kAux0, t);
      const std::size_t opr = g.offset(kAux1, r);
      Real* G = g.data();
      const Real a = dot(ph, eh, d), b = dot(pt, et, d);
      thread_local std::vector<Real> ge;
      ge.resize(d);
      Real rg = 0;
      for (std::size_t k = 0; k < d; ++k) {
        ge[k] = -coeff * sgn(eh[k] + a * pr[k] + er[k] - et[k] - b * pr[k]);
        rg += pr[k] * ge[k];
      }
      for (std::size_t k = 0; k < d; ++k) {
        G[oh + k] += ge[k] + rg * ph[k];
        G[oph + k] += rg * eh[k];
        G[ot + k] -= ge[k] + rg * pt[k];
        G[opt + k] -= rg * et[k];
        G[orl + k] += ge[k];
        G[opr + k] += (a - b) * ge[k];
      }
      return;
    }
    case ModelKind::DistMult: {
      Real* G = g.data();
      for (std::size_t k = 0; k < d; ++k) {
        G[oh + k] += coeff * er[k] * et[k];
        G[orl + k] += coeff * eh[k] * et[k];
        G[ot + k] += coeff * eh[k] * er[k];
      }
      return;
    }
    case ModelKind::ComplEx: {
      Real* G = g.data();
      const Real *hr = eh, *hi = eh + d, *rr = er, *ri = er + d, *tr = et, *ti = et + d;
      for (std::size_t k = 0; k < d; ++k) {
        G[oh + k] += coeff * (rr[k] * tr[k] + ri[k] * ti[k]);
        G[oh + d + k] += coeff * (rr[k] * ti[k] - ri[k] * tr[k]);
        G[orl + k] += coeff * (hr[k] * tr[k] + hi[k] * ti[k]);
        G[orl + d + k] += coeff * (hr[k] * ti[k] - hi[k] * tr[k]);
        G[ot + k] += coeff * (hr[k] * rr[k] - hi[k] * ri[k]);
        G[ot + d + k] += coeff * (hi[k] * rr[k] + hr[k] * ri[k]);
      }
      return;
    }
    case ModelKind::SimplE: {
      const Real* h2 = s[kAux0].row(h);
      const Real* t2 = s[kAux0].row(t);
      const Real* r2 = s[kAux1].row(r);
      const std::size_t oh2 = g.offset(kAux0, h);
      const std::size_t ot2 = g.offset(kAux0, t);
      const std::size_t or2 = g.offset(kAux1, r);
      Real* G = g.data();
      const Real c = fn.simple_halved ? coeff / 2 : coeff;
      for (std::size_t k = 0; k < d; ++k) {
        G[oh + k] += c * er[k] * t2[k];
        G[orl + k] += c * eh[k] * t2[k];
        G[ot2 + k] += c * eh[k] * er[k];
        G[oh2 + k] += c * r2[k] * et[k];
        G[or2 + k] += c * h2[k] * et[k];
        G[ot + k] += c * h2[k] * r2[k];
      }
      return;
    }
    case ModelKind::RotatE: {
      Real* G = g.data();
      const Real *hr = eh, *hi = eh + d, *rr = er, *ri = er + d, *tr = et, *ti = et + d;
      for (std::size_t k = 0; k < d; ++k) {
        const Real zr = hr[k] * rr[k] - hi[k] * ri[k] - tr[k];
        const Real zi = hr[k] * ri[k] + hi[k] * rr[k] - ti[k];
        const Real m = std::sqrt(zr * zr + zi * zi);
        if (m == Real(0)) continue;  // subgradient 0 at the kink
        const Real a = -coeff * zr / m;  // d score / d zr
        const Real b = -coeff * zi / m;
        G[oh + k] += a * rr[k] + b * ri[k];
        G[oh + d + k] += -a * ri[k] + b * rr[k];
        G[orl + k] += a * hr[k] + b * hi[k];
        G[orl + d + k] += -a * hi[k] + b * hr[k];
        G[ot + k] -= a;
        G[ot + d + k] -= b;
      }
      return;
    }
  }
}

}  // namespace detail

template <class Real>
Real score(const BasicEmbeddingStore<Real>& store, const ScoringFunction& fn, const Triplet& t) {
  check_compatible(store, fn);
  if (t.head >= store.entity_count || t.tail >= store.entity_count || t.relation >= store.relation_count)
    throw std::out_of_range("triplet index out of range");
  return detail::score_unchecked(store, fn, t.head, t.relation, t.tail);
}

// ---------------------------------------------------------------------------
// Losses

enum class LossKind : std::uint32_t { Margin, Logistic };

inline std::string_view to_string(LossKind k) { return k == LossKind::Margin ? "margin" : "logistic"; }

inline LossKind parse_loss(std::string_view name) {
  auto lower = lowercase(name);
  if (lower == "margin") return LossKind::Margin;
  if (lower == "logistic") return LossKind::Logistic;
  throw std::invalid_argument("unknown loss: " + std::string(name));
}

struct Loss {
  LossKind kind = LossKind::Margin;
  double margin = 1.0;  // gamma, margin loss only
  double l2 = 0.0;      // lambda, applied to every row a pair touches
};

/// log(1 + exp(x)) without overflow.
inline double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double pair_loss(double pos, double neg, const Loss& loss) {
  if (loss.kind == LossKind::Margin) {
    const double x = loss.margin - pos + neg;
    return x > 0 || std::isnan(x) ? x : 0.0;
  }
  return softplus(-pos) + softplus(neg);
}

/// d loss / d pos and d loss / d neg.
struct LossSlopes {
  double pos;
  double neg;
};

inline LossSlopes pair_loss_slopes(double pos, double neg, const Loss& loss) {
  if (loss.kind == LossKind::Margin) {
    if (loss.margin - pos + neg > 0) return {-1.0, 1.0};
    return {0.0, 0.0};
  }
  return {-sigmoid(-pos), sigmoid(neg)};
}

template <class Real>
struct PairGradient {
  SparseGradient<Real> gradient;
  double loss = 0;       // pair loss without the L2 term
  double pos_score = 0;
  double neg_score = 0;
  double norm = 0;       // ||g||_2 including the L2 term
};

/// Gradient of pair_loss(f(pos), f(neg)) + lambda * sum of squared norms of
/// the distinct touched rows. `out` is cleared first.
template <class Real>
void pair_gradient_into(const BasicEmbeddingStore<Real>& store, const ScoringFunction& fn, const Loss& loss,
                        const Triplet& pos, const Triplet& neg, PairGradient<Real>& out) {
  auto& g = out.gradient;
  g.reset(store.width());
  out.pos_score = detail::score_unchecked(store, fn, pos.head, pos.relation, pos.tail);
  out.neg_score = detail::score_unchecked(store, fn, neg.head, neg.relation, neg.tail);
  out.loss = pair_loss(out.pos_score, out.neg_score, loss);
  auto slopes = pair_loss_slopes(out.pos_score, out.neg_score, loss);
  detail::add_score_gradient(store, fn, pos.head, pos.relation, pos.tail, static_cast<Real>(slopes.pos), g);
  detail::add_score_gradient(store, fn, neg.head, neg.relation, neg.tail, static_cast<Real>(slopes.neg), g);
  if (loss.l2 > 0) {
    const Real two_lambda = static_cast<Real>(2 * loss.l2);
    for (const auto& e : g.entries()) {
      const Real* p = store[e.slot].row(e.row);
      Real* dst = g.data() + e.offset;
      for (std::size_t k = 0; k < g.width(); ++k) dst[k] += two_lambda * p[k];
    }
  }
  out.norm = static_cast<double>(g.norm());
}

template <class Real>
PairGradient<Real> pair_gradient(const BasicEmbeddingStore<Real>& store, const ScoringFunction& fn,
                                 const Loss& loss, const Triplet& pos, const Triplet& neg) {
  check_compatible(store, fn);
  PairGradient<Real> out;
  pair_gradient_into(store, fn, loss, pos, neg, out);
  return out;
}

/// The scalar whose gradient pair_gradient returns.
template <class Real>
double pair_objective(const BasicEmbeddingStore<Real>& store, const ScoringFunction& fn, const Loss& loss,
                      const Triplet& pos, const Triplet& neg) {
  double value = pair_loss(score(store, fn, pos), score(store, fn, neg), loss);
  if (loss.l2 > 0) {
    // Touched rows as a set.
    SparseGradient<Real> rows(store.width());
    detail::add_score_gradient(store, fn, pos.head, pos.relation, pos.tail, Real(0), rows);
    detail::add_score_gradient(store, fn, neg.head, neg.relation, neg.tail, Real(0), rows);
    for (const auto& e : rows.entries()) {
      const Real* p = store[e.slot].row(e.row);
      value += loss.l2 * static_cast<double>(detail::dot(p, p, store.width()));
    }
  }
  return value;
}

// ---------------------------------------------------------------------------
// Initialization

/// Rescales a row to unit L2 norm (zero rows are left alone).
template <class Real>
void normalize_row(Real* row, std::size_t n) {
  Real s = std::sqrt(detail::dot(row, row, n));
  if (s > Real(0))
    for (std::size_t k = 0; k < n; ++k) row[k] /= s;
}

/// Xavier-uniform fill of every matrix, bound sqrt(6 / (rows + cols)).
template <class Real = float>
BasicEmbeddingStore<Real> init_embeddings(const ScoringFunction& fn, std::uint32_t entity_count,
                                          std::uint32_t relation_count, std::uint64_t seed) {
  if (fn.dim == 0) throw std::invalid_argument("embedding dimension must be positive");
  BasicEmbeddingStore<Real> store(fn.kind, fn.dim, entity_count, relation_count);
  Rng rng = make_rng(seed, 0x1417);
  for (auto& m : store.matrices) {
    const double bound = std::sqrt(6.0 / static_cast<double>(m.rows + m.cols));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : m.data) v = static_cast<Real>(dist(rng));
  }
  if (fn.kind == ModelKind::TransH)
    for (std::size_t r = 0; r < relation_count; ++r) normalize_row(store[kAux0].row(r), store.width());
  return store;
}

template <class Real = float>
BasicEmbeddingStore<Real> init_embeddings(const ScoringFunction& fn, const KnowledgeGraph& kg, std::uint64_t seed) {
  return init_embeddings<Real>(fn, kg.entity_count, kg.relation_count, seed);
}

}  // namespace kge

#pragma once

// Mini-batch training with sparse Adam, one negative per positive, epoch-end
// cache refresh on the lazy schedule, periodic validation with best-model
// retention, and Bernoulli warm start.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "kge/adam.hpp"
#include "kge/checkpoint.hpp"
#include "kge/eval.hpp"
#include "kge/kg_data.hpp"
#include "kge/random.hpp"
#include "kge/sampler.hpp"
#include "kge/scoring.hpp"
#include "kge/variance.hpp"

namespace kge {

struct TrainConfig {
  ScoringFunction fn{ModelKind::TransE, 50};
  Loss loss{};
  std::uint32_t batch_size = 1024;
  double learning_rate = 1e-3;
  std::uint32_t epochs = 100;
  std::uint64_t seed = 1;
  SamplerKind sampler = SamplerKind::NSCaching;
  EEHyperParams ee{};
  std::uint32_t pretrain_epochs = 0;
  std::uint32_t negatives = 1;  // negatives per positive
  bool normalize_entities = false;  // unit-norm entity rows after each step, translational models

  std::uint32_t eval_every = 20;  // 0 disables validation
  std::size_t eval_limit = 0;     // validate on the first eval_limit triplets only
  bool keep_best = true;

  unsigned threads = 1;       // gradient workers; > 1 gives up bitwise reproducibility
  unsigned cache_threads = 1; // cache refresh workers; deterministic for any count

  std::filesystem::path out_dir;  // empty: nothing written
  std::vector<std::uint32_t> snapshot_epochs;
  std::vector<std::uint32_t> checkpoint_epochs;
  std::vector<Triplet> tracked;  // score-variance tracking
  bool log_full_objective = false;  // costs |train| * |entities| * 2 scores per epoch

  void validate() const {
    if (batch_size == 0) throw std::invalid_argument("batch size must be at least 1");
    if (!(learning_rate > 0)) throw std::invalid_argument("learning rate must be positive");
    if (fn.dim == 0) throw std::invalid_argument("dimension must be positive");
    if (negatives == 0) throw std::invalid_argument("negatives must be at least 1");
    if (loss.kind == LossKind::Margin && !(loss.margin > 0)) throw std::invalid_argument("margin must be positive");
    if (!(loss.l2 >= 0)) throw std::invalid_argument("l2 weight must be nonnegative");
    ee.validate();
  }
};

struct EpochRecord {
  std::uint32_t epoch = 0;
  double loss = 0;            // mean pair loss
  double grad_norm_mean = 0;  // mean per-pair gradient L2 norm
  double batch_grad_norm_mean = 0;
  std::optional<double> mrr_valid;
  std::optional<double> full_loss;  // mean pair loss over every valid corruption, end of epoch
  double seconds = 0;
  double cache_seconds = 0;
  std::string phase = "train";

  nlohmann::json to_json() const {
    nlohmann::json j{{"epoch", epoch},
                     {"loss", loss},
                     {"grad_norm_mean", grad_norm_mean},
                     {"batch_grad_norm_mean", batch_grad_norm_mean},
                     {"seconds", seconds},
                     {"cache_seconds", cache_seconds},
                     {"phase", phase}};
    if (mrr_valid) j["mrr_valid"] = *mrr_valid;
    if (full_loss) j["full_loss"] = *full_loss;
    return j;
  }
};

struct TrainResult {
  EmbeddingStore store;        // best validated model when keep_best, else final
  EmbeddingStore final_store;
  std::vector<EpochRecord> log;
  std::optional<double> best_mrr;
  std::uint32_t best_epoch = 0;
  double cache_seconds = 0;
  VarianceTracker variance;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mean pair loss over every (training triplet, corruption not in train)
/// pair, both sides, without the L2 term.
inline double full_objective(const KnowledgeGraph& kg, const EmbeddingStore& store, const ScoringFunction& fn,
                             const Loss& loss) {
  double sum = 0;
  std::size_t n = 0;
  for (const auto& pos : kg.train) {
    const double sp = score(store, fn, pos);
    for (Side side : {Side::Head, Side::Tail}) {
      const CacheKey key = side == Side::Head ? CacheKey::head_of(pos) : CacheKey::tail_of(pos);
      for (std::uint32_t e = 0; e < kg.entity_count; ++e) {
        const Triplet neg = key.substitute(e);
        if (kg.in_train(neg)) continue;
        sum += pair_loss(sp, score(store, fn, neg), loss);
        ++n;
      }
    }
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

namespace detail {

inline void post_step_constraints(EmbeddingStore& store, const TrainConfig& cfg, const SparseGradient<float>& g) {
  const bool transh = cfg.fn.kind == ModelKind::TransH;
  const bool norm_entities = cfg.normalize_entities && is_translational(cfg.fn.kind);
  if (!transh && !norm_entities) return;
  for (const auto& e : g.entries()) {
    if (transh && e.slot == kAux0) normalize_row(store[kAux0].row(e.row), store.width());
    if (norm_entities && e.slot == kEntity) normalize_row(store[kEntity].row(e.row), store.width());
  }
}

inline void nan_dump(const TrainConfig& cfg, std::uint32_t epoch, std::size_t batch, const Triplet& pos,
                     const Triplet& neg, double pos_score, double neg_score) {
  std::ostringstream msg;
  msg << "non-finite loss at epoch " << epoch << " batch " << batch << " pos (" << pos.head << "," << pos.relation
      << "," << pos.tail << ") score " << pos_score << " neg (" << neg.head << "," << neg.relation << "," << neg.tail
      << ") score " << neg_score;
  if (!cfg.out_dir.empty()) {
    nlohmann::json j{{"epoch", epoch},       {"batch", batch},         {"positive", {pos.head, pos.relation, pos.tail}},
                     {"negative", {neg.head, neg.relation, neg.tail}}, {"pos_score", pos_score},
                     {"neg_score", neg_score}};
    write_text_atomic(cfg.out_dir / "nan_dump.json", j.dump(2) + "\n");
  }
  throw TrainingError(msg.str());
}

inline std::string epoch_file(std::string_view stem, std::uint32_t epoch, std::string_view ext) {
  return std::string(stem) + "_" + std::to_string(epoch) + std::string(ext);
}

}  // namespace detail

/// Trains from `warm_start` (or a fresh Xavier init) for cfg.epochs epochs.
inline TrainResult train(const KnowledgeGraph& kg, const TrainConfig& cfg, const EmbeddingStore* warm_start = nullptr,
                         const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (kg.train.empty()) throw std::invalid_argument("no training triplets");
  using clock = std::chrono::steady_clock;

  EmbeddingStore store = warm_start ? *warm_start : init_embeddings<float>(cfg.fn, kg, cfg.seed);
  check_compatible(store, cfg.fn);
  AdamState<float> adam(store);
  NegativeSampler sampler(cfg.sampler, kg, relation_stats(kg), cfg.ee, stream_seed(cfg.seed, 2));
  Rng rng = make_rng(cfg.seed, 1);
  FilterIndex filter(kg);
  const bool validating = cfg.eval_every > 0 && !kg.valid.empty();
  if (!cfg.out_dir.empty()) std::filesystem::create_directories(cfg.out_dir);

  TrainResult result;
  result.variance = VarianceTracker(cfg.tracked, cfg.ee.nu);
  const std::size_t n = kg.train.size();
  const std::size_t batches = (n + cfg.batch_size - 1) / cfg.batch_size;
  const bool weighted_positives = cfg.sampler == SamplerKind::NSCaching && cfg.ee.alpha1 > 0;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  const unsigned workers = std::max(1u, cfg.threads);
  std::vector<PairGradient<float>> pair(workers);
  std::vector<SparseGradient<float>> partial(workers, SparseGradient<float>(store.width()));
  SparseGradient<float> batch_grad(store.width());
  std::vector<std::size_t> positives;
  std::vector<Triplet> negatives;

  for (std::uint32_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto start = clock::now();
    if (weighted_positives) {
      sampler.prepare_positive_distribution();
    } else {
      for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
    }
    double loss_sum = 0, norm_sum = 0, batch_norm_sum = 0;
    std::size_t pairs = 0;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t begin = b * cfg.batch_size, end = std::min(n, begin + cfg.batch_size);
      positives.clear();
      negatives.clear();
      for (std::size_t k = begin; k < end; ++k) {
        const std::size_t idx = weighted_positives ? sampler.draw_positive(rng) : order[k];
        for (std::uint32_t j = 0; j < cfg.negatives; ++j) {
          positives.push_back(idx);
          negatives.push_back(sampler.sample(store, cfg.fn, idx, rng));
        }
      }
      batch_grad.reset(store.width());
      const std::size_t m = positives.size();
      std::vector<double> pair_loss_sums(workers, 0.0), pair_norm_sums(workers, 0.0);
      auto work = [&](unsigned w, std::size_t lo, std::size_t hi) {
        auto& acc = workers == 1 ? batch_grad : partial[w];
        if (workers > 1) acc.reset(store.width());
        for (std::size_t i = lo; i < hi; ++i) {
          const auto& pos = kg.train[positives[i]];
          pair_gradient_into(store, cfg.fn, cfg.loss, pos, negatives[i], pair[w]);
          if (!std::isfinite(pair[w].loss))
            detail::nan_dump(cfg, epoch, b, pos, negatives[i], pair[w].pos_score, pair[w].neg_score);
          acc.add(pair[w].gradient);
          pair_loss_sums[w] += pair[w].loss;
          pair_norm_sums[w] += pair[w].norm;
        }
      };
      if (workers == 1) {
        work(0, 0, m);
      } else {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(workers);
        const std::size_t chunk = (m + workers - 1) / workers;
        for (unsigned w = 0; w < workers; ++w) {
          const std::size_t lo = std::min(m, w * chunk), hi = std::min(m, lo + chunk);
          pool.emplace_back([&, w, lo, hi] {
            try {
              work(w, lo, hi);
            } catch (...) {
              errors[w] = std::current_exception();
            }
          });
        }
        for (auto& t : pool) t.join();
        for (auto& e : errors)
          if (e) std::rethrow_exception(e);
        for (unsigned w = 0; w < workers; ++w) batch_grad.add(partial[w]);
      }
      for (unsigned w = 0; w < workers; ++w) {
        loss_sum += pair_loss_sums[w];
        norm_sum += pair_norm_sums[w];
      }
      pairs += m;
      batch_norm_sum += static_cast<double>(batch_grad.norm());
      adam_step(store, adam, batch_grad, cfg.learning_rate);
      detail::post_step_constraints(store, cfg, batch_grad);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = pairs ? loss_sum / static_cast<double>(pairs) : 0.0;
    rec.grad_norm_mean = pairs ? norm_sum / static_cast<double>(pairs) : 0.0;
    rec.batch_grad_norm_mean = batches ? batch_norm_sum / static_cast<double>(batches) : 0.0;
    if (!store.all_finite()) throw TrainingError("non-finite parameters after epoch " + std::to_string(epoch));
    if (cfg.log_full_objective) rec.full_loss = full_objective(kg, store, cfg.fn, cfg.loss);

    if (cfg.sampler == SamplerKind::NSCaching && lazy_refresh_due(epoch, cfg.ee.lazy_n)) {
      const auto cache_start = clock::now();
      sampler.refresh_all(store, cfg.fn, epoch + 1, cfg.cache_threads);
      rec.cache_seconds = std::chrono::duration<double>(clock::now() - cache_start).count();
      result.cache_seconds += rec.cache_seconds;
    }
    if (!cfg.tracked.empty()) result.variance.observe(score_all(store, cfg.fn, cfg.tracked));

    if (!cfg.out_dir.empty()) {
      if (cfg.sampler == SamplerKind::NSCaching &&
          std::find(cfg.snapshot_epochs.begin(), cfg.snapshot_epochs.end(), epoch) != cfg.snapshot_epochs.end())
        write_cache_snapshot(cfg.out_dir / detail::epoch_file("cache_epoch", epoch, ".tsv"), sampler.cache(), kg);
      if (std::find(cfg.checkpoint_epochs.begin(), cfg.checkpoint_epochs.end(), epoch) != cfg.checkpoint_epochs.end())
        save_checkpoint(cfg.out_dir / detail::epoch_file("epoch", epoch, ".ckpt"), store,
                        {{"epoch", std::to_string(epoch)}, {"seed", std::to_string(cfg.seed)}});
    }

    const bool last = epoch + 1 == cfg.epochs;
    if (validating && ((epoch + 1) % cfg.eval_every == 0 || last)) {
      RankOptions opt;
      opt.limit = cfg.eval_limit;
      opt.threads = std::max(1u, cfg.threads);
      auto ranks = filtered_ranks(kg, filter, store, cfg.fn, std::span<const Triplet>(kg.valid), opt);
      rec.mrr_valid = summarize(ranks).mrr;
      if (!result.best_mrr || *rec.mrr_valid > *result.best_mrr) {
        result.best_mrr = rec.mrr_valid;
        result.best_epoch = epoch;
        if (cfg.keep_best) {
          result.store = store;
          if (!cfg.out_dir.empty())
            save_checkpoint(cfg.out_dir / "best.ckpt", store,
                            {{"epoch", std::to_string(epoch)}, {"seed", std::to_string(cfg.seed)},
                             {"mrr_valid", std::to_string(*rec.mrr_valid)}});
        }
      }
    }
    rec.seconds = std::chrono::duration<double>(clock::now() - start).count();
    result.log.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  result.final_store = store;
  if (!cfg.keep_best || !result.best_mrr) result.store = std::move(store);
  return result;
}

/// Bernoulli warm start for pretrain_epochs, a checkpoint round trip, then
/// cfg.epochs epochs with the configured sampler and a fresh cache.
inline TrainResult pretrain_then_switch(const KnowledgeGraph& kg, const TrainConfig& cfg,
                                        const EpochCallback& on_epoch = {}) {
  if (cfg.pretrain_epochs == 0) return train(kg, cfg, nullptr, on_epoch);
  TrainConfig phase1 = cfg;
  phase1.sampler = SamplerKind::Bernoulli;
  phase1.epochs = cfg.pretrain_epochs;
  phase1.keep_best = false;
  phase1.eval_every = 0;
  phase1.snapshot_epochs.clear();
  phase1.checkpoint_epochs.clear();
  phase1.tracked.clear();
  if (!cfg.out_dir.empty()) phase1.out_dir = cfg.out_dir / "pretrain";
  auto tag = [&](const char* phase) {
    return [&on_epoch, phase](const EpochRecord& r) {
      if (!on_epoch) return;
      EpochRecord copy = r;
      copy.phase = phase;
      on_epoch(copy);
    };
  };
  auto first = train(kg, phase1, nullptr, tag("pretrain"));

  EmbeddingStore warm;
  if (!cfg.out_dir.empty()) {
    const auto path = cfg.out_dir / "pretrain.ckpt";
    save_checkpoint(path, first.final_store, {{"epoch", std::to_string(cfg.pretrain_epochs)}});
    warm = load_checkpoint(path);
  } else {
    std::stringstream buffer;
    write_checkpoint(buffer, first.final_store);
    warm = read_checkpoint(buffer);
  }
  TrainConfig phase2 = cfg;
  phase2.seed = stream_seed(cfg.seed, 0x5717c4);
  auto second = train(kg, phase2, &warm, tag("train"));
  for (auto& r : first.log) r.phase = "pretrain";
  for (auto& r : second.log) r.phase = "train";
  first.log.insert(first.log.end(), second.log.begin(), second.log.end());
  second.log = std::move(first.log);
  return second;
}

}  // namespace kge

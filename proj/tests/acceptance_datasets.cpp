// Acceptance checks on the public WN18RR and Cora datasets. Looks for
// <root>/WN18RR/{train,valid,test}.txt and <root>/cora/*.{content,cites}
// with <root> from --data-dir or $KGE_DATA_DIR. Missing data prints BLOCKED
// and exits 77 when nothing could run.
//
//   acceptance_datasets [--data-dir DIR] [--epochs N] [--threads N] [--only NAME]...

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "kge/automl.hpp"
#include "kge/kg_data.hpp"
#include "kge/skipgram.hpp"
#include "kge/trainer.hpp"

using namespace kge;

namespace {

enum class Status { Pass, Fail, Blocked };

struct Outcome {
  Status status = Status::Fail;
  std::string detail;
};

struct Settings {
  std::filesystem::path root;
  std::uint32_t epochs = 300;
  std::uint32_t search_fidelity = 50;
  unsigned threads = 1;
  std::vector<std::string> only;
};

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

std::optional<std::filesystem::path> find_dir(const std::filesystem::path& root,
                                              std::initializer_list<const char*> names) {
  if (root.empty()) return std::nullopt;
  for (const char* n : names)
    if (std::filesystem::is_directory(root / n)) return root / n;
  return std::nullopt;
}

class Datasets {
 public:
  explicit Datasets(const Settings& s) : s_(s) {}

  const KnowledgeGraph* wn18rr() {
    if (!wn_loaded_) {
      wn_loaded_ = true;
      if (auto dir = find_dir(s_.root, {"WN18RR", "wn18rr"})) {
        wn_ = load_dataset(DatasetPaths::from_directory(*dir));
        std::cerr << "WN18RR: " << wn_->entity_count << " entities, " << wn_->relation_count << " relations, "
                  << wn_->train.size() << "/" << wn_->valid.size() << "/" << wn_->test.size() << " triplets\n";
      }
    }
    return wn_ ? &*wn_ : nullptr;
  }

  const Graph* cora() {
    if (!cora_loaded_) {
      cora_loaded_ = true;
      if (auto dir = find_dir(s_.root, {"cora", "Cora"})) {
        for (const auto& e : std::filesystem::directory_iterator(*dir))
          if (e.path().extension() == ".content") {
            auto cites = e.path();
            cites.replace_extension(".cites");
            cora_ = load_content_cites(e.path(), cites);
            break;
          }
      }
    }
    return cora_ ? &*cora_ : nullptr;
  }

  /// Desk protocol: d = 50, equal epoch budget, validation every 20 epochs,
  /// best-validation checkpoint kept.
  TrainConfig desk(ModelKind model, SamplerKind sampler) const {
    TrainConfig c;
    c.fn = {model, 50};
    if (is_translational(model)) {
      c.loss = {LossKind::Margin, 3.0, 0.0};
    } else {
      c.loss = {LossKind::Logistic, 1.0, 1e-5};
    }
    c.batch_size = 1024;
    c.learning_rate = 1e-3;
    c.epochs = s_.epochs;
    c.seed = 1;
    c.sampler = sampler;
    c.ee = EEHyperParams{};  // alpha1 = alpha2 = 0, alpha3 = 1, N1 = N2 = 50
    c.eval_every = 20;
    c.keep_best = true;
    c.threads = s_.threads;
    c.cache_threads = s_.threads;
    return c;
  }

  /// Memoized runs keyed by a label.
  const TrainResult& run(const std::string& label, const TrainConfig& cfg) {
    auto it = runs_.find(label);
    if (it != runs_.end()) return it->second;
    std::cerr << "training " << label << " (" << cfg.epochs << " epochs)\n";
    auto progress = [&](const EpochRecord& r) {
      if (r.mrr_valid)
        std::cerr << "  " << label << " epoch " << r.epoch << " loss " << r.loss << " mrr_valid " << *r.mrr_valid
                  << "\n";
    };
    return runs_.emplace(label, train(*wn18rr(), cfg, nullptr, progress)).first->second;
  }

  double test_mrr(const TrainResult& r, const TrainConfig& cfg) {
    RankOptions opt;
    opt.threads = s_.threads;
    return summarize(filtered_ranks(*wn18rr(), r.store, cfg.fn, "test", opt)).mrr;
  }

  const Settings& settings() const { return s_; }

 private:
  Settings s_;
  bool wn_loaded_ = false, cora_loaded_ = false;
  std::optional<KnowledgeGraph> wn_;
  std::optional<Graph> cora_;
  std::map<std::string, TrainResult> runs_;
};

Outcome blocked(const char* what) { return {Status::Blocked, std::string(what) + " not found under the data root"}; }

Outcome transe_gap(Datasets& d) {
  if (!d.wn18rr()) return blocked("WN18RR");
  auto cn = d.desk(ModelKind::TransE, SamplerKind::NSCaching), cb = d.desk(ModelKind::TransE, SamplerKind::Bernoulli);
  const double a = d.test_mrr(d.run("transe-nscaching", cn), cn);
  const double b = d.test_mrr(d.run("transe-bernoulli", cb), cb);
  return {a >= b + 0.01 ? Status::Pass : Status::Fail,
          fmt("TransE test MRR: NSCaching %.4f, Bernoulli %.4f, gap %+.4f (need >= +0.01)", a, b, a - b)};
}

Outcome semantic_ordering(Datasets& d) {
  if (!d.wn18rr()) return blocked("WN18RR");
  std::string detail;
  bool ok = true;
  for (auto model : {ModelKind::DistMult, ModelKind::SimplE}) {
    const std::string name(to_string(model));
    auto cn = d.desk(model, SamplerKind::NSCaching), cb = d.desk(model, SamplerKind::Bernoulli);
    const double a = d.test_mrr(d.run(name + "-nscaching", cn), cn);
    const double b = d.test_mrr(d.run(name + "-bernoulli", cb), cb);
    ok &= a > b;
    detail += name + fmt(" NSCaching %.4f vs Bernoulli %.4f; ", a, b);
  }
  return {ok ? Status::Pass : Status::Fail, detail};
}

Outcome gradient_norm(Datasets& d) {
  if (!d.wn18rr()) return blocked("WN18RR");
  auto cn = d.desk(ModelKind::TransE, SamplerKind::NSCaching), cb = d.desk(ModelKind::TransE, SamplerKind::Bernoulli);
  const auto& a = d.run("transe-nscaching", cn).log;
  const auto& b = d.run("transe-bernoulli", cb).log;
  const std::size_t warmup = a.size() / 10;
  double sa = 0, sb = 0;
  std::size_t above = 0;
  for (std::size_t e = warmup; e < a.size(); ++e) {
    sa += a[e].batch_grad_norm_mean;
    sb += b[e].batch_grad_norm_mean;
    above += a[e].batch_grad_norm_mean > b[e].batch_grad_norm_mean;
  }
  const double n = static_cast<double>(a.size() - warmup);
  return {sa > sb ? Status::Pass : Status::Fail,
          fmt("mean batch gradient norm after epoch %g: NSCaching %.4f, Bernoulli %.4f (higher in %g epochs)",
              static_cast<double>(warmup), sa / n, sb / n, static_cast<double>(above))};
}

Outcome lazy_update(Datasets& d) {
  if (!d.wn18rr()) return blocked("WN18RR");
  auto c0 = d.desk(ModelKind::TransE, SamplerKind::NSCaching);
  auto c10 = c0;
  c10.ee.lazy_n = 10;
  const auto& r0 = d.run("transe-nscaching", c0);
  const auto& r10 = d.run("transe-nscaching-lazy10", c10);
  const double m0 = r0.best_mrr.value_or(0), m10 = r10.best_mrr.value_or(0);
  const double rel = m0 > 0 ? std::abs(m10 - m0) / m0 : 1.0;
  const double saved = r0.cache_seconds > 0 ? 1 - r10.cache_seconds / r0.cache_seconds : 0.0;
  return {rel <= 0.05 && saved >= 0.30 ? Status::Pass : Status::Fail,
          fmt("best valid MRR n=0 %.4f, n=10 %.4f (%.1f%% apart); cache time saved %.0f%%", m0, m10, 100 * rel,
              100 * saved)};
}

Outcome search_crossing(Datasets& d) {
  if (!d.wn18rr()) return blocked("WN18RR");
  auto base = d.desk(ModelKind::SimplE, SamplerKind::NSCaching);
  base.epochs = d.settings().search_fidelity;
  base.eval_every = base.epochs;
  base.keep_best = false;
  base.threads = d.settings().threads;
  const auto& kg = *d.wn18rr();
  auto objective = [&](const EEHyperParams& ee) {
    TrainConfig cfg = base;
    cfg.ee = ee;
    return train(kg, cfg).best_mrr.value_or(0.0);
  };
  const double default_mrr = objective(EEHyperParams{});
  SearchOptions so;
  so.budget = 20;
  so.seed = 1;
  so.fidelity_epochs = base.epochs;
  auto res = smbo_search(SearchSpace{}, so, objective);
  return {res.best.objective >= default_mrr ? Status::Pass : Status::Fail,
          fmt("SimplE, 20 trials x %g epochs: incumbent valid MRR %.4f, default config %.4f",
              static_cast<double>(base.epochs), res.best.objective, default_mrr)};
}

Outcome cora(Datasets& d) {
  const Graph* g = d.cora();
  if (!g) return blocked("Cora");
  WalkConfig cfg;  // r = 10, l = 80, window 10, d = 100, N = 5
  const std::uint64_t seed = 1;
  auto corpus = generate_walks(*g, cfg, seed);
  std::map<NegativeMode, NodeClassification> out;
  for (auto mode : {NegativeMode::Cache, NegativeMode::Uniform}) {
    cfg.mode = mode;
    std::cerr << "skip-gram " << to_string(mode) << "\n";
    auto res = train_skipgram(corpus, g->size(), cfg, EEHyperParams{}, seed);
    out[mode] = classify_nodes(node_features(res.embeddings), g->labels, g->class_count(), 0.5, seed, 5);
  }
  const double a = out[NegativeMode::Cache].micro_mean, b = out[NegativeMode::Uniform].micro_mean;
  return {a >= 0.75 && a >= b ? Status::Pass : Status::Fail,
          fmt("micro-F1 over 5 splits at 50%% labeled: cache %.4f, uniform %.4f (need >= 0.75 and >= uniform)", a, b)};
}

}  // namespace

int main(int argc, char** argv) {
  Settings s;
  std::string root;
  CLI::App app("Dataset-backed acceptance checks");
  app.add_option("--data-dir", root, "Data root (default: $KGE_DATA_DIR)");
  app.add_option("--epochs", s.epochs, "Epoch budget per desk run")->capture_default_str();
  app.add_option("--search-fidelity", s.search_fidelity, "Epochs per search trial")->capture_default_str();
  app.add_option("--threads", s.threads, "Gradient, cache and evaluation workers")->capture_default_str();
  app.add_option("--only", s.only, "Run only the named criteria");
  CLI11_PARSE(app, argc, argv);
  if (root.empty())
    if (const char* env = std::getenv("KGE_DATA_DIR")) root = env;
  s.root = root;

  Datasets data(s);
  const std::vector<std::pair<std::string, std::function<Outcome(Datasets&)>>> criteria{
      {"wn18rr-transe-gap", transe_gap},         {"wn18rr-semantic-ordering", semantic_ordering},
      {"wn18rr-gradient-norm", gradient_norm},   {"wn18rr-lazy-update", lazy_update},
      {"wn18rr-search-crossing", search_crossing}, {"cora-skipgram", cora},
  };
  int failed = 0, ran = 0;
  for (const auto& [name, check] : criteria) {
    if (!s.only.empty() && std::find(s.only.begin(), s.only.end(), name) == s.only.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = check(data);
    } catch (const std::exception& e) {
      o = {Status::Fail, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const char* tag = o.status == Status::Pass ? "PASS" : o.status == Status::Fail ? "FAIL" : "BLOCKED";
    std::printf("%-7s %-26s %s (%.0fs)\n", tag, name.c_str(), o.detail.c_str(), secs);
    std::fflush(stdout);
    failed += o.status == Status::Fail;
    ran += o.status != Status::Blocked;
  }
  if (failed) return 1;
  return ran ? 0 : 77;
}

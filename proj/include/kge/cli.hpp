#pragma once

// Command-line front end: train, eval, classify, search, walk, embed-graph,
// analyze. Options come from flags or a "key = value" file given with
// --config; flags win. Every run writes <out>/config.resolved, which can be
// passed back with --config to replay it.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "kge/analysis.hpp"
#include "kge/automl.hpp"
#include "kge/checkpoint.hpp"
#include "kge/eval.hpp"
#include "kge/io.hpp"
#include "kge/kg_data.hpp"
#include "kge/sampler.hpp"
#include "kge/scoring.hpp"
#include "kge/skipgram.hpp"
#include "kge/trainer.hpp"

namespace kge::cli {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kFooter = R"(Output files
  config.resolved        key = value options of the run; replay with --config
  log.jsonl              train: one JSON object per epoch
                         {epoch, loss, grad_norm_mean, batch_grad_norm_mean,
                          mrr_valid (when evaluated), full_loss (--log-full-objective),
                          seconds, cache_seconds, phase}
  model.ckpt(.meta)      train: best-validation (or final) embeddings
  final.ckpt, best.ckpt  train: last epoch / best validation
  epoch_<e>.ckpt         train: --checkpoint-epochs
  cache_epoch_<e>.tsv    train: --snapshot-epochs, key<TAB>entity<TAB>score
  variance.tsv           train: --track-valid, triplet<TAB>epoch<TAB>variance
  metrics_<split>.json   eval: {mrr, hit1, hit3, hit10, n_test, head, tail}
  ranks_<split>.tsv      eval --ranks: head<TAB>relation<TAB>tail<TAB>head_rank<TAB>tail_rank
  classification.json    classify: {valid_accuracy, test_accuracy, thresholds}
  history.jsonl          search: one trial per line
                         {id, alpha1, alpha2, alpha3, n1, n2, objective, status, seconds, epochs}
  incumbent.json         search: best trial
  walks.txt              walk: one walk per line, node names separated by spaces
  embeddings.txt         embed-graph: "node v1 ... vd" per line
  node_classification.json  embed-graph: micro/macro F1 mean and std over splits
  grad_ccdf_<tag>.tsv    analyze: x<TAB>ccdf

Environment
  KGE_DATA_DIR           directory searched for --data names

Exit codes: 0 success, 1 usage error, 2 runtime failure)";

// ---------------------------------------------------------------------------
// Data options

struct DataOptions {
  std::string data;
  std::string train, valid, test;
  std::string columns = "hrt";
  std::string synthetic;  // "E,R,N[,seed]"

  void add(CLI::App* app) {
    app->add_option("--data", data, "Dataset directory, or a name under $KGE_DATA_DIR");
    app->add_option("--train", train, "Train split file");
    app->add_option("--valid", valid, "Valid split file");
    app->add_option("--test", test, "Test split file");
    app->add_option("--columns", columns, "Column order of split files")->capture_default_str();
    app->add_option("--synthetic", synthetic, "Generate a synthetic graph: entities,relations,triplets[,seed]");
  }

  bool given() const { return !data.empty() || !train.empty() || !synthetic.empty(); }

  KeyValues meta() const {
    KeyValues kv;
    if (!data.empty()) kv["data"] = resolve_dir().string();
    if (!train.empty()) kv["train"] = train;
    if (!valid.empty()) kv["valid"] = valid;
    if (!test.empty()) kv["test"] = test;
    if (!synthetic.empty()) kv["synthetic"] = synthetic;
    kv["columns"] = columns;
    return kv;
  }

  void inherit(const KeyValues& kv) {
    if (given()) return;
    auto get = [&](const char* k, std::string& dst) {
      if (auto it = kv.find(k); it != kv.end()) dst = it->second;
    };
    get("data", data);
    get("train", train);
    get("valid", valid);
    get("test", test);
    get("synthetic", synthetic);
    get("columns", columns);
  }

  std::filesystem::path resolve_dir() const {
    std::filesystem::path p(data);
    if (std::filesystem::is_directory(p)) return p;
    if (const char* env = std::getenv("KGE_DATA_DIR")) {
      auto q = std::filesystem::path(env) / data;
      if (std::filesystem::is_directory(q)) return q;
    }
    throw DataError("dataset not found: " + data + " (checked the path and $KGE_DATA_DIR)");
  }

  KnowledgeGraph load() const {
    const int sources = !data.empty() + !train.empty() + !synthetic.empty();
    if (sources == 0) throw UsageError("no dataset: give --data, --train/--valid/--test or --synthetic");
    if (sources > 1) throw UsageError("--data, --train and --synthetic are mutually exclusive");
    if (!synthetic.empty()) {
      std::vector<std::uint64_t> v;
      for (auto part : split(synthetic, ',')) {
        try {
          v.push_back(std::stoull(std::string(trim(part))));
        } catch (const std::exception&) {
          throw UsageError("bad --synthetic value: " + synthetic);
        }
      }
      if (v.size() != 3 && v.size() != 4) throw UsageError("--synthetic expects entities,relations,triplets[,seed]");
      return generate_synthetic(static_cast<std::uint32_t>(v[0]), static_cast<std::uint32_t>(v[1]), v[2],
                                v.size() == 4 ? v[3] : 1);
    }
    const auto order = ColumnOrder::parse(columns);
    if (!data.empty()) return load_dataset(DatasetPaths::from_directory(resolve_dir()), order);
    if (valid.empty() || test.empty()) throw UsageError("--train needs --valid and --test");
    return load_dataset(DatasetPaths{train, valid, test, std::nullopt, std::nullopt}, order);
  }
};

// ---------------------------------------------------------------------------
// Model / training options

struct ModelOptions {
  std::string model = "TransE";
  std::uint32_t dim = 50;
  bool simple_halved = false;
  std::string loss = "margin";
  std::optional<double> margin;
  double l2 = 0.0;

  void add(CLI::App* app) {
    app->add_option("--model", model, "TransE|TransH|TransD|DistMult|ComplEx|SimplE|RotatE")->capture_default_str();
    app->add_option("--dim", dim, "Embedding dimension d")->capture_default_str();
    app->add_flag("--simple-halved", simple_halved, "Average the two SimplE terms");
    app->add_option("--loss", loss, "margin|logistic")->capture_default_str();
    app->add_option("--margin", margin, "Margin gamma (margin loss only; default 1)");
    app->add_option("--l2", l2, "L2 weight lambda on touched rows")->capture_default_str();
  }

  ScoringFunction fn() const { return {parse_model(model), dim, simple_halved}; }

  Loss loss_config() const {
    Loss l;
    l.kind = parse_loss(loss);
    if (l.kind == LossKind::Logistic && margin) throw UsageError("--margin only applies to the margin loss");
    l.margin = margin.value_or(1.0);
    l.l2 = l2;
    return l;
  }

  KeyValues meta() const {
    KeyValues kv{{"model", model},
                 {"dim", std::to_string(dim)},
                 {"simple_halved", simple_halved ? "1" : "0"},
                 {"loss", loss},
                 {"l2", std::to_string(l2)}};
    if (margin) kv["margin"] = std::to_string(*margin);
    return kv;
  }
};

struct EEOptions {
  EEHyperParams ee;

  void add(CLI::App* app) {
    app->add_option("--alpha1", ee.alpha1, "Positive-sampling temperature")->capture_default_str();
    app->add_option("--alpha2", ee.alpha2, "Cache-sampling temperature")->capture_default_str();
    app->add_option("--alpha3", ee.alpha3, "Cache-update temperature")->capture_default_str();
    app->add_option("--n1", ee.cache_size, "Cache size N1")->capture_default_str();
    app->add_option("--n2", ee.candidate_size, "Fresh candidates per refresh N2")->capture_default_str();
    app->add_option("--lazy-n", ee.lazy_n, "Refresh caches every n+1 epochs")->capture_default_str();
    app->add_option("--nu", ee.nu, "Weight of the score std in cache quality")->capture_default_str();
  }
};

struct TrainOptions {
  ModelOptions model;
  EEOptions ee;
  std::string sampler = "nscaching";
  std::uint32_t batch_size = 1024;
  double lr = 1e-3;
  std::uint32_t epochs = 100;
  std::uint64_t seed = 1;
  std::uint32_t pretrain_epochs = 0;
  std::uint32_t negatives = 1;
  bool normalize_entities = false;
  bool log_full_objective = false;
  std::uint32_t eval_every = 20;
  std::size_t eval_limit = 0;
  unsigned threads = 1;
  unsigned cache_threads = 1;

  void add(CLI::App* app) {
    model.add(app);
    ee.add(app);
    app->add_option("--sampler", sampler, "uniform|bernoulli|self-adv|nscaching")->capture_default_str();
    app->add_option("--batch-size", batch_size, "Mini-batch size m")->capture_default_str();
    app->add_option("--lr", lr, "Adam learning rate")->capture_default_str();
    app->add_option("--epochs", epochs, "Training epochs")->capture_default_str();
    app->add_option("--seed", seed, "Master seed")->capture_default_str();
    app->add_option("--pretrain-epochs", pretrain_epochs, "Bernoulli warm-start epochs")->capture_default_str();
    app->add_option("--negatives", negatives, "Negatives per positive")->capture_default_str();
    app->add_flag("--normalize-entities", normalize_entities, "Unit-norm entity rows after each step (translational)");
    app->add_flag("--log-full-objective", log_full_objective,
                  "Log full_loss: mean pair loss over every valid corruption (small graphs only)");
    app->add_option("--eval-every", eval_every, "Validation cadence in epochs (0 = never)")->capture_default_str();
    app->add_option("--eval-limit", eval_limit, "Validate on the first N valid triplets (0 = all)")
        ->capture_default_str();
    app->add_option("--threads", threads, "Gradient and evaluation workers (>1 is not bitwise reproducible)")
        ->capture_default_str();
    app->add_option("--cache-threads", cache_threads, "Cache refresh workers")->capture_default_str();
  }

  TrainConfig config() const {
    TrainConfig c;
    c.fn = model.fn();
    c.loss = model.loss_config();
    c.sampler = parse_sampler(sampler);
    c.ee = ee.ee;
    c.batch_size = batch_size;
    c.learning_rate = lr;
    c.epochs = epochs;
    c.seed = seed;
    c.pretrain_epochs = pretrain_epochs;
    c.negatives = negatives;
    c.normalize_entities = normalize_entities;
    c.log_full_objective = log_full_objective;
    c.eval_every = eval_every;
    c.eval_limit = eval_limit;
    c.threads = threads;
    c.cache_threads = cache_threads;
    try {
      c.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    return c;
  }
};

// ---------------------------------------------------------------------------
// Helpers

/// Fills every option of `sub` that was not given on the command line from a
/// key = value file (the format written to config.resolved).
inline void apply_config(CLI::App* sub, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file: " + path);
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigTOML().from_config(in);
  } catch (const CLI::ParseError& e) {
    throw UsageError("bad config file " + path + ": " + e.what());
  }
  for (const auto& item : items) {
    if (item.name == "++" || item.name == "--") continue;
    if (!item.parents.empty()) throw UsageError("sections are not supported in config files: " + item.fullname());
    auto* opt = sub->get_option_no_throw("--" + item.name);
    if (!opt || !opt->get_configurable()) throw UsageError("unknown config key: " + item.name);
    if (opt->count() > 0) continue;
    std::vector<std::string> values;
    for (const auto& v : item.inputs)
      if (!v.empty()) values.push_back(v);
    if (values.empty()) continue;
    try {
      opt->add_result(values);
      opt->run_callback();
    } catch (const CLI::ParseError& e) {
      throw UsageError("config key " + item.name + ": " + e.what());
    }
  }
}

inline void write_resolved(const CLI::App* app, const std::filesystem::path& out) {
  std::filesystem::create_directories(out);
  write_text_atomic(out / "config.resolved", app->config_to_str(true, false));
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  write_text_atomic(path, j.dump(2) + "\n");
}

inline std::filesystem::path checkpoint_file(const std::filesystem::path& p) {
  return std::filesystem::is_directory(p) ? p / "model.ckpt" : p;
}

/// Model and loss settings recorded next to a checkpoint.
struct CheckpointInfo {
  EmbeddingStore store;
  ScoringFunction fn;
  Loss loss;
  KeyValues meta;
};

inline CheckpointInfo open_checkpoint(const std::filesystem::path& given) {
  const auto path = checkpoint_file(given);
  CheckpointInfo info;
  info.store = load_checkpoint(path);
  info.meta = load_checkpoint_meta(path);
  info.fn = {info.store.kind, info.store.dim, info.meta.count("simple_halved") && info.meta["simple_halved"] == "1"};
  if (auto it = info.meta.find("loss"); it != info.meta.end()) info.loss.kind = parse_loss(it->second);
  if (auto it = info.meta.find("margin"); it != info.meta.end()) info.loss.margin = std::stod(it->second);
  if (auto it = info.meta.find("l2"); it != info.meta.end()) info.loss.l2 = std::stod(it->second);
  return info;
}

inline void check_graph_matches(const KnowledgeGraph& kg, const EmbeddingStore& store) {
  if (kg.entity_count != store.entity_count || kg.relation_count != store.relation_count)
    throw DataError("checkpoint shape (" + std::to_string(store.entity_count) + " entities, " +
                    std::to_string(store.relation_count) + " relations) does not match the dataset");
}

inline std::string join(const std::vector<std::uint32_t>& v) {
  std::string s;
  for (auto x : v) s += (s.empty() ? "" : " ") + std::to_string(x);
  return s;
}

// ---------------------------------------------------------------------------
// Subcommands

struct TrainCommand {
  DataOptions data;
  TrainOptions opts;
  std::string out = "runs/train";
  std::vector<std::uint32_t> snapshot_epochs;
  std::vector<std::uint32_t> checkpoint_epochs;
  std::size_t track_valid = 0;
  bool skip_test = false;

  void add(CLI::App* app) {
    data.add(app);
    opts.add(app);
    app->add_option("--out", out, "Output directory")->capture_default_str();
    app->add_option("--snapshot-epochs", snapshot_epochs, "Epochs whose cache content is exported");
    app->add_option("--checkpoint-epochs", checkpoint_epochs, "Epochs to checkpoint (for analyze)");
    app->add_option("--track-valid", track_valid, "Track score variance of the first N valid triplets")
        ->capture_default_str();
    app->add_flag("--skip-test", skip_test, "Do not evaluate the returned model on test");
  }

  int run(const CLI::App* app, std::ostream& log) {
    auto cfg = opts.config();
    const auto kg = data.load();
    const std::filesystem::path dir(out);
    write_resolved(app, dir);
    write_dictionary(dir / "entity2id.txt", kg.entities);
    write_dictionary(dir / "relation2id.txt", kg.relations);
    cfg.out_dir = dir;
    cfg.snapshot_epochs = snapshot_epochs;
    cfg.checkpoint_epochs = checkpoint_epochs;
    for (std::size_t i = 0; i < std::min(track_valid, kg.valid.size()); ++i) cfg.tracked.push_back(kg.valid[i]);

    std::string lines;
    auto result = pretrain_then_switch(kg, cfg, [&](const EpochRecord& r) {
      lines += r.to_json().dump() + "\n";
      write_text_atomic(dir / "log.jsonl", lines);
      log << r.to_json().dump() << '\n';
    });

    KeyValues meta = data.meta();
    for (auto& [k, v] : opts.model.meta()) meta[k] = v;
    meta["seed"] = std::to_string(cfg.seed);
    meta["sampler"] = std::string(to_string(cfg.sampler));
    meta["epochs"] = std::to_string(cfg.epochs);
    if (result.best_mrr) {
      meta["best_epoch"] = std::to_string(result.best_epoch);
      meta["mrr_valid"] = std::to_string(*result.best_mrr);
    }
    save_checkpoint(dir / "model.ckpt", result.store, meta);
    save_checkpoint(dir / "final.ckpt", result.final_store, meta);
    // Trainer-written checkpoints get the same metadata.
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
      if (entry.path().extension() == ".ckpt" && entry.path().filename() != "model.ckpt" &&
          entry.path().filename() != "final.ckpt") {
        auto m = load_checkpoint_meta(entry.path());
        for (auto& [k, v] : meta)
          if (!m.count(k)) m[k] = v;
        write_text_atomic(meta_path(entry.path()), format_key_values(m));
      }
    }

    if (!cfg.tracked.empty()) {
      write_atomic(dir / "variance.tsv", [&](std::ostream& os) {
        os << "triplet\tepoch\tvariance\n";
        for (std::size_t i = 0; i < cfg.tracked.size(); ++i) {
          const auto& series = result.variance.variance_series(i);
          for (std::size_t e = 0; e < series.size(); ++e) {
            os << i << '\t' << e << '\t';
            if (series[e]) os << *series[e];
            os << '\n';
          }
        }
      });
    }
    nlohmann::json summary{{"epochs", cfg.epochs}, {"cache_seconds", result.cache_seconds}};
    if (result.best_mrr) {
      summary["best_mrr_valid"] = *result.best_mrr;
      summary["best_epoch"] = result.best_epoch;
    }
    if (!skip_test && !kg.test.empty()) {
      RankOptions ro;
      ro.threads = std::max(1u, cfg.threads);
      FilterIndex filter(kg);
      auto ranks = filtered_ranks(kg, filter, result.store, cfg.fn, std::span<const Triplet>(kg.test), ro);
      auto report = metric_report(ranks);
      write_json(dir / "metrics_test.json", report);
      summary["test"] = report;
    }
    write_json(dir / "summary.json", summary);
    log << summary.dump() << '\n';
    return 0;
  }
};

struct EvalCommand {
  DataOptions data;
  std::string checkpoint;
  std::string split_name = "test";
  std::string out;
  unsigned threads = 1;
  std::size_t limit = 0;
  bool ranks = false;
  bool raw = false;

  void add(CLI::App* app) {
    data.add(app);
    app->add_option("--checkpoint", checkpoint, "Checkpoint file or train output directory");
    app->add_option("--split", split_name, "valid|test")->capture_default_str();
    app->add_option("--out", out, "Output directory (default: the checkpoint's directory)");
    app->add_option("--threads", threads, "Evaluation workers")->capture_default_str();
    app->add_option("--limit", limit, "Evaluate only the first N triplets")->capture_default_str();
    app->add_flag("--ranks", ranks, "Also dump per-triplet ranks");
    app->add_flag("--raw", raw, "Unfiltered ranks");
  }

  int run(const CLI::App* app, std::ostream& log) {
    if (split_name != "valid" && split_name != "test") throw UsageError("--split must be valid or test");
    if (checkpoint.empty()) throw UsageError("--checkpoint is required");
    auto info = open_checkpoint(checkpoint);
    data.inherit(info.meta);
    const auto kg = data.load();
    check_graph_matches(kg, info.store);
    const std::filesystem::path dir = out.empty() ? checkpoint_file(checkpoint).parent_path() : std::filesystem::path(out);
    if (!out.empty()) write_resolved(app, dir);
    RankOptions ro;
    ro.threads = threads;
    ro.limit = limit;
    ro.filtered = !raw;
    FilterIndex filter(kg);
    const auto& triplets = kg.split(split_name);
    auto r = filtered_ranks(kg, filter, info.store, info.fn, std::span<const Triplet>(triplets), ro);
    if (r.head.empty()) throw DataError("split " + split_name + " is empty");
    auto report = metric_report(r);
    write_json(dir / ("metrics_" + split_name + ".json"), report);
    if (ranks) write_rank_dump(dir / ("ranks_" + split_name + ".tsv"), kg, triplets, r);
    log << report.dump() << '\n';
    return 0;
  }
};

struct ClassifyCommand {
  DataOptions data;
  std::string checkpoint;
  std::string out;
  std::uint64_t negative_seed = 20190101;

  void add(CLI::App* app) {
    data.add(app);
    app->add_option("--checkpoint", checkpoint, "Checkpoint file or train output directory");
    app->add_option("--out", out, "Output directory (default: the checkpoint's directory)");
    app->add_option("--negative-seed", negative_seed, "Seed of the stored classification negatives")
        ->capture_default_str();
  }

  int run(const CLI::App* app, std::ostream& log) {
    if (checkpoint.empty()) throw UsageError("--checkpoint is required");
    auto info = open_checkpoint(checkpoint);
    data.inherit(info.meta);
    const auto kg = data.load();
    check_graph_matches(kg, info.store);
    const std::filesystem::path dir = out.empty() ? checkpoint_file(checkpoint).parent_path() : std::filesystem::path(out);
    if (!out.empty()) write_resolved(app, dir);
    // Negatives are materialized once per seed and reused.
    const auto stats = relation_stats(kg);
    auto materialize = [&](const char* name, const std::vector<Triplet>& split, std::uint64_t stream) {
      const auto path = dir / ("classification_" + std::string(name) + "_" + std::to_string(negative_seed) + ".tsv");
      if (std::filesystem::exists(path)) return read_labeled(path);
      auto set = make_classification_set(kg, split, stats, stream_seed(negative_seed, stream));
      write_labeled(path, set);
      return set;
    };
    const auto valid = materialize("valid", kg.valid, 1);
    const auto test = materialize("test", kg.test, 2);
    auto res = triplet_classification(info.store, info.fn, valid, test, kg.relation_count);
    nlohmann::json thresholds = nlohmann::json::object();
    for (std::uint32_t r = 0; r < kg.relation_count; ++r)
      if (res.model.fitted[r]) thresholds[kg.relations.name(r)] = res.model.thresholds[r];
    nlohmann::json j{{"valid_accuracy", res.valid_accuracy},
                     {"test_accuracy", res.test_accuracy},
                     {"global_threshold", res.model.global},
                     {"thresholds", thresholds}};
    write_json(dir / "classification.json", j);
    log << nlohmann::json{{"valid_accuracy", res.valid_accuracy}, {"test_accuracy", res.test_accuracy}}.dump() << '\n';
    return 0;
  }
};

struct SearchCommand {
  DataOptions data;
  TrainOptions opts;
  std::string out = "runs/search";
  std::string algo = "smbo";
  std::uint32_t budget = 20;
  std::uint32_t init_design = 8;
  std::uint32_t fidelity = 200;
  unsigned workers = 1;
  bool resume = false;
  bool anchor_first = true;
  std::uint32_t candidates = 1000;

  void add(CLI::App* app) {
    data.add(app);
    opts.add(app);
    app->add_option("--out", out, "Output directory")->capture_default_str();
    app->add_option("--algo", algo, "smbo|random")->capture_default_str();
    app->add_option("--budget", budget, "Number of trials")->capture_default_str();
    app->add_option("--init-design", init_design, "Random trials before the surrogate (smbo)")->capture_default_str();
    app->add_option("--fidelity", fidelity, "Training epochs per trial")->capture_default_str();
    app->add_option("--workers", workers, "Trials run in parallel per round")->capture_default_str();
    app->add_option("--candidates", candidates, "Random candidates scored per proposal (smbo)")->capture_default_str();
    app->add_option("--anchor-first", anchor_first, "Start from alpha1=alpha2=alpha3=0, N1=N2=50")
        ->capture_default_str();
    app->add_flag("--resume", resume, "Reuse matching trials from an existing history");
  }

  int run(const CLI::App* app, std::ostream& log) {
    if (algo != "smbo" && algo != "random") throw UsageError("--algo must be smbo or random");
    auto base = opts.config();
    base.epochs = fidelity;
    base.keep_best = false;
    if (base.eval_every == 0 || base.eval_every > fidelity) base.eval_every = fidelity;
    if (algo == "smbo" && budget < init_design) throw UsageError("--budget must be at least --init-design");
    const auto kg = data.load();
    if (kg.valid.empty()) throw DataError("search needs a nonempty valid split");
    const std::filesystem::path dir(out);
    write_resolved(app, dir);
    SearchOptions so;
    so.budget = budget;
    so.seed = base.seed;
    so.init_design = init_design;
    so.anchor_first = anchor_first;
    so.candidates = candidates;
    so.workers = workers;
    so.fidelity_epochs = fidelity;
    so.history_path = dir / "history.jsonl";
    so.resume = resume;
    auto objective = [&](const EEHyperParams& ee) {
      TrainConfig cfg = base;
      cfg.ee = ee;
      cfg.ee.lazy_n = base.ee.lazy_n;
      cfg.ee.nu = base.ee.nu;
      if (workers > 1) cfg.threads = 1;
      auto r = train(kg, cfg);
      return r.best_mrr.value_or(0.0);
    };
    SearchSpace space;
    auto result = algo == "smbo" ? smbo_search(space, so, objective) : random_search(space, so, objective);
    write_json(dir / "incumbent.json", result.best.to_json());
    for (const auto& t : result.history) log << t.to_json().dump() << '\n';
    log << "incumbent " << result.best.to_json().dump() << '\n';
    return 0;
  }
};

struct GraphOptions {
  std::string edges, labels, content, cites, data;

  void add(CLI::App* app) {
    app->add_option("--edges", edges, "Edge list file");
    app->add_option("--labels", labels, "node<TAB>class file");
    app->add_option("--content", content, "Citation content file (id features... class)");
    app->add_option("--cites", cites, "Citation pairs file");
    app->add_option("--graph", data, "Directory holding <name>.content and <name>.cites, or a name under $KGE_DATA_DIR");
  }

  Graph load() const {
    if (!content.empty() || !cites.empty()) {
      if (content.empty() || cites.empty()) throw UsageError("--content and --cites go together");
      return load_content_cites(content, cites);
    }
    if (!edges.empty()) {
      return load_graph(edges, labels.empty() ? std::nullopt : std::optional<std::filesystem::path>(labels));
    }
    if (!data.empty()) {
      std::filesystem::path dir(data);
      if (!std::filesystem::is_directory(dir)) {
        const char* env = std::getenv("KGE_DATA_DIR");
        if (env && std::filesystem::is_directory(std::filesystem::path(env) / data)) dir = std::filesystem::path(env) / data;
        else throw DataError("graph not found: " + data);
      }
      for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.path().extension() == ".content") {
          auto c = entry.path();
          auto k = c;
          k.replace_extension(".cites");
          return load_content_cites(c, k);
        }
      }
      throw DataError("no .content file in " + dir.string());
    }
    throw UsageError("no graph: give --edges, --content/--cites or --graph");
  }
};

struct WalkOptions {
  WalkConfig walk;
  std::uint64_t seed = 1;

  void add(CLI::App* app) {
    app->add_option("--walks-per-node", walk.walks_per_node, "Walks per node r")->capture_default_str();
    app->add_option("--walk-length", walk.walk_length, "Walk length l")->capture_default_str();
    app->add_option("--p", walk.p, "Return parameter p")->capture_default_str();
    app->add_option("--q", walk.q, "In-out parameter q")->capture_default_str();
    app->add_option("--seed", seed, "Seed")->capture_default_str();
    app->add_option("--threads", walk.threads, "Walk generation workers")->capture_default_str();
  }
};

struct WalkCommand {
  GraphOptions graph;
  WalkOptions w;
  std::string out = "runs/walk";

  void add(CLI::App* app) {
    graph.add(app);
    w.add(app);
    app->add_option("--out", out, "Output directory")->capture_default_str();
  }

  int run(const CLI::App* app, std::ostream& log) {
    try {
      w.walk.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    auto g = graph.load();
    const std::filesystem::path dir(out);
    write_resolved(app, dir);
    auto corpus = generate_walks(g, w.walk, w.seed);
    write_walks(dir / "walks.txt", corpus, g);
    log << nlohmann::json{{"nodes", g.size()}, {"edges", g.edge_count()}, {"walks", corpus.size()}}.dump() << '\n';
    return 0;
  }
};

struct EmbedGraphCommand {
  GraphOptions graph;
  WalkOptions w;
  EEOptions ee;
  std::string walks_file;
  std::string mode = "cache";
  std::string out = "runs/embed";
  double train_fraction = 0.5;
  std::uint32_t splits = 5;

  void add(CLI::App* app) {
    graph.add(app);
    w.add(app);
    ee.add(app);
    app->add_option("--walks", walks_file, "Existing walk corpus (default: generate)");
    app->add_option("--window", w.walk.window, "Context half-width")->capture_default_str();
    app->add_option("--negatives", w.walk.negatives, "Negatives per pair N")->capture_default_str();
    app->add_option("--dim", w.walk.dim, "Embedding dimension")->capture_default_str();
    app->add_option("--epochs", w.walk.epochs, "Passes over the corpus")->capture_default_str();
    app->add_option("--batch-size", w.walk.batch_size, "Pairs per Adam step")->capture_default_str();
    app->add_option("--lr", w.walk.learning_rate, "Adam learning rate")->capture_default_str();
    app->add_option("--weight-decay", w.walk.weight_decay, "Weight decay")->capture_default_str();
    app->add_option("--refresh-batches", w.walk.refresh_batches, "Cache refresh period in batches")
        ->capture_default_str();
    app->add_option("--mode", mode, "cache|uniform|unigram")->capture_default_str();
    app->add_option("--train-fraction", train_fraction, "Labeled fraction used to train the classifier")
        ->capture_default_str();
    app->add_option("--splits", splits, "Random classification splits")->capture_default_str();
    app->add_option("--out", out, "Output directory")->capture_default_str();
  }

  int run(const CLI::App* app, std::ostream& log) {
    w.walk.mode = parse_negative_mode(mode);
    try {
      w.walk.validate();
      ee.ee.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    auto g = graph.load();
    const std::filesystem::path dir(out);
    write_resolved(app, dir);
    auto corpus = walks_file.empty() ? generate_walks(g, w.walk, w.seed) : read_walks(walks_file, g);
    auto res = train_skipgram(corpus, g.size(), w.walk, ee.ee, w.seed);
    write_node_embeddings(dir / "embeddings.txt", res.embeddings, g);
    nlohmann::json j{{"epoch_loss", res.epoch_loss}};
    if (!g.labels.empty() && g.class_count() > 1) {
      auto nc = classify_nodes(node_features(res.embeddings), g.labels, g.class_count(), train_fraction, w.seed,
                               splits);
      j["micro_f1_mean"] = nc.micro_mean;
      j["micro_f1_std"] = nc.micro_std;
      j["macro_f1_mean"] = nc.macro_mean;
      j["macro_f1_std"] = nc.macro_std;
      j["micro_f1"] = nc.micro;
      j["macro_f1"] = nc.macro;
      j["classes_absent_from_training"] = nc.absent_classes;
    }
    write_json(dir / "node_classification.json", j);
    log << j.dump() << '\n';
    return 0;
  }
};

struct AnalyzeCommand {
  DataOptions data;
  std::vector<std::string> checkpoints;
  std::string run_dir;
  std::vector<std::uint32_t> epochs;
  std::vector<std::size_t> triplets;
  std::string out;

  void add(CLI::App* app) {
    data.add(app);
    app->add_option("--checkpoint", checkpoints, "Checkpoint files");
    app->add_option("--run", run_dir, "Train output directory holding epoch_<e>.ckpt files");
    app->add_option("--epochs", epochs, "Epochs to analyze with --run");
    app->add_option("--triplets", triplets, "Train triplet indices (default: the first 10)");
    app->add_option("--out", out, "Output directory (default: --run or the first checkpoint's directory)");
  }

  int run(const CLI::App* app, std::ostream& log) {
    std::vector<std::pair<std::string, std::filesystem::path>> items;
    for (const auto& c : checkpoints) items.emplace_back(std::filesystem::path(c).stem().string(), c);
    if (!run_dir.empty()) {
      if (epochs.empty()) throw UsageError("--run needs --epochs");
      for (auto e : epochs)
        items.emplace_back("epoch_" + std::to_string(e),
                           std::filesystem::path(run_dir) / ("epoch_" + std::to_string(e) + ".ckpt"));
    }
    if (items.empty()) throw UsageError("give --checkpoint or --run with --epochs");
    std::filesystem::path dir = !out.empty() ? std::filesystem::path(out)
                                : !run_dir.empty() ? std::filesystem::path(run_dir)
                                                   : items.front().second.parent_path();
    write_resolved(app, dir);
    std::optional<KnowledgeGraph> kg;
    for (const auto& [tag, path] : items) {
      auto info = open_checkpoint(path);
      if (!kg) {
        data.inherit(info.meta);
        kg = data.load();
      }
      check_graph_matches(*kg, info.store);
      std::vector<std::size_t> ids = triplets;
      if (ids.empty())
        for (std::size_t i = 0; i < std::min<std::size_t>(10, kg->train.size()); ++i) ids.push_back(i);
      for (auto id : ids)
        if (id >= kg->train.size()) throw UsageError("triplet index out of range: " + std::to_string(id));
      auto norms = tail_gradient_norms(info.store, info.fn, info.loss, *kg, ids);
      auto curve = ccdf(norms);
      write_ccdf(dir / ("grad_ccdf_" + tag + ".tsv"), curve);
      log << nlohmann::json{{"checkpoint", path.string()}, {"pairs", norms.size()}, {"points", curve.size()}}.dump()
          << '\n';
    }
    return 0;
  }
};

// ---------------------------------------------------------------------------

/// Entry point; returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& log = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Knowledge-graph and graph embedding with cache-based negative sampling", "kge"};
  app.footer(kFooter);
  app.require_subcommand(1);

  TrainCommand train_cmd;
  EvalCommand eval_cmd;
  ClassifyCommand classify_cmd;
  SearchCommand search_cmd;
  WalkCommand walk_cmd;
  EmbedGraphCommand embed_cmd;
  AnalyzeCommand analyze_cmd;

  std::vector<std::pair<CLI::App*, std::string>> configs;
  configs.reserve(8);
  auto add = [&](const char* name, const char* help, auto& cmd) {
    auto* sub = app.add_subcommand(name, help);
    configs.emplace_back(sub, std::string());
    sub->add_option("--config", configs.back().second, "key = value options file (flags override it)")
        ->configurable(false);
    sub->footer(kFooter);
    cmd.add(sub);
    return sub;
  };
  auto* s_train = add("train", "Train a KG embedding", train_cmd);
  auto* s_eval = add("eval", "Filtered link-prediction metrics of a checkpoint", eval_cmd);
  auto* s_classify = add("classify", "Triplet classification with per-relation thresholds", classify_cmd);
  auto* s_search = add("search", "Search the sampler hyper-parameters", search_cmd);
  auto* s_walk = add("walk", "Generate biased random walks", walk_cmd);
  auto* s_embed = add("embed-graph", "Skip-gram node embeddings and node classification", embed_cmd);
  auto* s_analyze = add("analyze", "Gradient-norm CCDF of checkpoints", analyze_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    log << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    log << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  try {
    for (auto& [sub, path] : configs)
      if (sub->parsed() && !path.empty()) apply_config(sub, path);
    if (s_train->parsed()) return train_cmd.run(s_train, log);
    if (s_eval->parsed()) return eval_cmd.run(s_eval, log);
    if (s_classify->parsed()) return classify_cmd.run(s_classify, log);
    if (s_search->parsed()) return search_cmd.run(s_search, log);
    if (s_walk->parsed()) return walk_cmd.run(s_walk, log);
    if (s_embed->parsed()) return embed_cmd.run(s_embed, log);
    if (s_analyze->parsed()) return analyze_cmd.run(s_analyze, log);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "failed: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

}  // namespace kge::cli

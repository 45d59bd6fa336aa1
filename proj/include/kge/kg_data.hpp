#pragma once

// Knowledge-graph datasets: loading, indexing, relation statistics and
// synthetic graphs for tests.

#include <algorithm>
#include <array>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "kge/io.hpp"
#include "kge/random.hpp"

namespace kge {

struct Triplet {
  std::uint32_t head = 0;
  std::uint32_t relation = 0;
  std::uint32_t tail = 0;

  friend auto operator<=>(const Triplet&, const Triplet&) = default;
};

/// Bidirectional name <-> index map. Indices are dense and assigned in
/// insertion order.
class Dictionary {
 public:
  std::uint32_t intern(std::string_view name) {
    auto it = index_.find(std::string(name));
    if (it != index_.end()) return it->second;
    auto id = static_cast<std::uint32_t>(names_.size());
    names_.emplace_back(name);
    index_.emplace(names_.back(), id);
    return id;
  }

  /// Inserts `name` at a caller-chosen id; ids must form 0..n-1 eventually.
  void assign(std::string_view name, std::uint32_t id) {
    if (index_.count(std::string(name))) throw DataError("duplicate dictionary name: " + std::string(name));
    if (id >= names_.size()) names_.resize(id + 1);
    if (!names_[id].empty()) throw DataError("duplicate dictionary id: " + std::to_string(id));
    names_[id] = std::string(name);
    index_.emplace(names_[id], id);
  }

  std::optional<std::uint32_t> find(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  const std::string& name(std::uint32_t id) const { return names_.at(id); }
  std::size_t size() const { return names_.size(); }
  bool empty() const { return names_.empty(); }
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

/// Membership set over triplets of a fixed-size graph.
class TripletSet {
 public:
  TripletSet() = default;
  TripletSet(std::uint32_t entity_count, std::uint32_t relation_count)
      : entities_(entity_count), relations_(relation_count) {}

  std::uint64_t key(const Triplet& t) const {
    return (static_cast<std::uint64_t>(t.head) * relations_ + t.relation) * entities_ + t.tail;
  }
  void insert(const Triplet& t) { keys_.insert(key(t)); }
  bool contains(const Triplet& t) const { return keys_.count(key(t)) != 0; }
  std::size_t size() const { return keys_.size(); }

 private:
  std::uint64_t entities_ = 0;
  std::uint64_t relations_ = 0;
  std::unordered_set<std::uint64_t> keys_;
};

struct LoadReport {
  std::size_t entities_only_in_eval = 0;   // indexed but absent from train
  std::size_t relations_only_in_eval = 0;
  std::size_t cross_split_duplicates = 0;  // triplets in more than one split
};

/// An indexed knowledge graph. Treat as immutable once built; all query
/// members are safe to call concurrently.
struct KnowledgeGraph {
  std::uint32_t entity_count = 0;
  std::uint32_t relation_count = 0;
  std::vector<Triplet> train;
  std::vector<Triplet> valid;
  std::vector<Triplet> test;
  Dictionary entities;
  Dictionary relations;
  TripletSet true_set;   // train ∪ valid ∪ test
  TripletSet train_set;
  LoadReport report;

  bool is_true(const Triplet& t) const { return true_set.contains(t); }
  bool in_train(const Triplet& t) const { return train_set.contains(t); }

  const std::vector<Triplet>& split(std::string_view name) const {
    if (name == "train") return train;
    if (name == "valid") return valid;
    if (name == "test") return test;
    throw DataError("unknown split: " + std::string(name));
  }
};

namespace detail {

inline void check_capacity(std::uint64_t entities, std::uint64_t relations) {
  // Packed keys need |E|^2 |R| < 2^64.
  long double space = static_cast<long double>(entities) * entities * std::max<std::uint64_t>(relations, 1);
  if (space >= 1.8e19L) throw DataError("graph too large for packed triplet keys");
}

}  // namespace detail

/// Builds the membership sets and validates index ranges. Dictionaries are
/// filled with "e<i>" / "r<i>" when empty.
inline KnowledgeGraph make_graph(std::uint32_t entity_count, std::uint32_t relation_count,
                                 std::vector<Triplet> train, std::vector<Triplet> valid,
                                 std::vector<Triplet> test, Dictionary entities = {},
                                 Dictionary relations = {}) {
  if (train.empty()) throw DataError("no training triplets");
  detail::check_capacity(entity_count, relation_count);
  KnowledgeGraph kg;
  kg.entity_count = entity_count;
  kg.relation_count = relation_count;
  kg.train = std::move(train);
  kg.valid = std::move(valid);
  kg.test = std::move(test);
  if (entities.empty())
    for (std::uint32_t i = 0; i < entity_count; ++i) entities.intern("e" + std::to_string(i));
  if (relations.empty())
    for (std::uint32_t i = 0; i < relation_count; ++i) relations.intern("r" + std::to_string(i));
  if (entities.size() != entity_count || relations.size() != relation_count)
    throw DataError("dictionary size does not match graph size");
  kg.entities = std::move(entities);
  kg.relations = std::move(relations);
  kg.true_set = TripletSet(entity_count, relation_count);
  kg.train_set = TripletSet(entity_count, relation_count);

  std::vector<char> entity_in_train(entity_count, 0), relation_in_train(relation_count, 0);
  for (const auto* part : {&kg.train, &kg.valid, &kg.test}) {
    for (const auto& t : *part) {
      if (t.head >= entity_count || t.tail >= entity_count || t.relation >= relation_count)
        throw DataError("triplet index out of range");
    }
  }
  for (const auto& t : kg.train) {
    kg.train_set.insert(t);
    kg.true_set.insert(t);
    entity_in_train[t.head] = entity_in_train[t.tail] = 1;
    relation_in_train[t.relation] = 1;
  }
  TripletSet valid_set(entity_count, relation_count);
  for (const auto& t : kg.valid) {
    if (kg.train_set.contains(t)) ++kg.report.cross_split_duplicates;
    valid_set.insert(t);
    kg.true_set.insert(t);
  }
  for (const auto& t : kg.test) {
    if (kg.train_set.contains(t) || valid_set.contains(t)) ++kg.report.cross_split_duplicates;
    kg.true_set.insert(t);
  }
  std::vector<char> entity_seen(entity_count, 0), relation_seen(relation_count, 0);
  for (const auto* part : {&kg.valid, &kg.test}) {
    for (const auto& t : *part) {
      for (auto e : {t.head, t.tail}) {
        if (!entity_in_train[e] && !entity_seen[e]) {
          entity_seen[e] = 1;
          ++kg.report.entities_only_in_eval;
        }
      }
      if (!relation_in_train[t.relation] && !relation_seen[t.relation]) {
        relation_seen[t.relation] = 1;
        ++kg.report.relations_only_in_eval;
      }
    }
  }
  return kg;
}

/// Field order of a triplet line, e.g. "hrt" (default) or "htr".
struct ColumnOrder {
  std::array<int, 3> position{0, 1, 2};  // column of head, relation, tail

  static ColumnOrder parse(std::string_view spec) {
    if (spec.size() != 3) throw DataError("column order must be a permutation of \"hrt\"");
    ColumnOrder order;
    std::array<bool, 3> seen{};
    for (int col = 0; col < 3; ++col) {
      int field = spec[col] == 'h' ? 0 : spec[col] == 'r' ? 1 : spec[col] == 't' ? 2 : -1;
      if (field < 0 || seen[field]) throw DataError("column order must be a permutation of \"hrt\"");
      seen[field] = true;
      order.position[field] = col;
    }
    return order;
  }

  std::string str() const {
    std::string s = "???";
    s[position[0]] = 'h';
    s[position[1]] = 'r';
    s[position[2]] = 't';
    return s;
  }
};

struct DatasetPaths {
  std::filesystem::path train, valid, test;
  std::optional<std::filesystem::path> entity_dictionary;
  std::optional<std::filesystem::path> relation_dictionary;

  /// Conventional layout: <dir>/{train,valid,test}.txt, with optional
  /// entity2id.txt / relation2id.txt next to them.
  static DatasetPaths from_directory(const std::filesystem::path& dir) {
    DatasetPaths p{dir / "train.txt", dir / "valid.txt", dir / "test.txt", std::nullopt, std::nullopt};
    if (std::filesystem::exists(dir / "entity2id.txt")) p.entity_dictionary = dir / "entity2id.txt";
    if (std::filesystem::exists(dir / "relation2id.txt")) p.relation_dictionary = dir / "relation2id.txt";
    return p;
  }
};

/// Reads a "name<TAB>id" dictionary. A leading line holding a single count
/// (as in several public distributions) is skipped.
inline Dictionary load_dictionary(const std::filesystem::path& path) {
  Dictionary dict;
  for_each_line(path, [&](std::string_view line, std::size_t number) {
    if (trim(line).empty()) return;
    auto fields = split(line, '\t');
    if (fields.size() == 1 && number == 1) return;
    if (fields.size() != 2) throw DataError(path.string() + ":" + std::to_string(number) + ": expected name<TAB>id");
    std::uint32_t id = 0;
    try {
      id = static_cast<std::uint32_t>(std::stoul(std::string(trim(fields[1]))));
    } catch (const std::exception&) {
      throw DataError(path.string() + ":" + std::to_string(number) + ": bad id");
    }
    dict.assign(fields[0], id);
  });
  for (std::size_t i = 0; i < dict.size(); ++i)
    if (dict.name(static_cast<std::uint32_t>(i)).empty())
      throw DataError(path.string() + ": ids are not contiguous");
  return dict;
}

/// Loads three TSV split files. Indices follow first appearance over train,
/// then valid, then test, unless dictionaries are supplied.
inline KnowledgeGraph load_dataset(const DatasetPaths& paths, ColumnOrder order = {}) {
  const bool fixed_entities = paths.entity_dictionary.has_value();
  const bool fixed_relations = paths.relation_dictionary.has_value();
  Dictionary entities = fixed_entities ? load_dictionary(*paths.entity_dictionary) : Dictionary{};
  Dictionary relations = fixed_relations ? load_dictionary(*paths.relation_dictionary) : Dictionary{};

  auto read_split = [&](const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw DataError("missing file: " + path.string());
    std::vector<Triplet> out;
    for_each_line(path, [&](std::string_view line, std::size_t number) {
      if (trim(line).empty()) return;
      auto fields = split(line, '\t');
      if (fields.size() != 3)
        throw DataError(path.string() + ":" + std::to_string(number) + ": expected 3 tab-separated fields");
      auto name_of = [&](int field) { return trim(fields[order.position[field]]); };
      auto lookup = [&](Dictionary& dict, bool fixed, std::string_view name) {
        if (!fixed) return dict.intern(name);
        auto id = dict.find(name);
        if (!id) throw DataError(path.string() + ":" + std::to_string(number) + ": unknown name " + std::string(name));
        return *id;
      };
      Triplet t;
      t.head = lookup(entities, fixed_entities, name_of(0));
      t.relation = lookup(relations, fixed_relations, name_of(1));
      t.tail = lookup(entities, fixed_entities, name_of(2));
      out.push_back(t);
    });
    return out;
  };

  auto train = read_split(paths.train);
  if (train.empty()) throw DataError("no training triplets");
  auto valid = read_split(paths.valid);
  auto test = read_split(paths.test);
  auto ne = static_cast<std::uint32_t>(entities.size());
  auto nr = static_cast<std::uint32_t>(relations.size());
  return make_graph(ne, nr, std::move(train), std::move(valid), std::move(test), std::move(entities),
                    std::move(relations));
}

inline void write_dictionary(const std::filesystem::path& path, const Dictionary& dict) {
  write_atomic(path, [&](std::ostream& out) {
    for (std::size_t i = 0; i < dict.size(); ++i) out << dict.name(static_cast<std::uint32_t>(i)) << '\t' << i << '\n';
  });
}

/// Writes the graph as head<TAB>relation<TAB>tail split files plus both
/// dictionaries.
inline void write_dataset(const KnowledgeGraph& kg, const std::filesystem::path& dir) {
  auto write_split = [&](const std::string& file, const std::vector<Triplet>& part) {
    write_atomic(dir / file, [&](std::ostream& out) {
      for (const auto& t : part)
        out << kg.entities.name(t.head) << '\t' << kg.relations.name(t.relation) << '\t' << kg.entities.name(t.tail)
            << '\n';
    });
  };
  write_split("train.txt", kg.train);
  write_split("valid.txt", kg.valid);
  write_split("test.txt", kg.test);
  write_dictionary(dir / "entity2id.txt", kg.entities);
  write_dictionary(dir / "relation2id.txt", kg.relations);
}

struct RelationStats {
  std::vector<double> tails_per_head;   // tph
  std::vector<double> heads_per_tail;   // hpt
  std::vector<double> head_replace_prob;
  std::vector<bool> absent_from_train;  // probability defaulted to 0.5

  double tail_replace_prob(std::uint32_t r) const { return 1.0 - head_replace_prob[r]; }
};

inline RelationStats relation_stats(const KnowledgeGraph& kg) {
  if (kg.train.empty()) throw DataError("no training triplets");
  const auto nr = kg.relation_count;
  std::vector<std::size_t> count(nr, 0);
  std::vector<std::unordered_set<std::uint32_t>> heads(nr), tails(nr);
  for (const auto& t : kg.train) {
    ++count[t.relation];
    heads[t.relation].insert(t.head);
    tails[t.relation].insert(t.tail);
  }
  RelationStats s;
  s.tails_per_head.assign(nr, 0.0);
  s.heads_per_tail.assign(nr, 0.0);
  s.head_replace_prob.assign(nr, 0.5);
  s.absent_from_train.assign(nr, false);
  for (std::uint32_t r = 0; r < nr; ++r) {
    if (count[r] == 0) {
      s.absent_from_train[r] = true;
      continue;
    }
    s.tails_per_head[r] = static_cast<double>(count[r]) / static_cast<double>(heads[r].size());
    s.heads_per_tail[r] = static_cast<double>(count[r]) / static_cast<double>(tails[r].size());
    s.head_replace_prob[r] = s.tails_per_head[r] / (s.tails_per_head[r] + s.heads_per_tail[r]);
  }
  return s;
}

/// Random graph with distinct triplets, split 80/10/10 (valid and test get
/// floor(n/10) each). Deterministic per seed.
inline KnowledgeGraph generate_synthetic(std::uint32_t num_entities, std::uint32_t num_relations,
                                         std::size_t num_triplets, std::uint64_t seed) {
  if (num_entities == 0 || num_relations == 0 || num_triplets == 0)
    throw DataError("synthetic graph needs positive sizes");
  detail::check_capacity(num_entities, num_relations);
  const std::uint64_t space = static_cast<std::uint64_t>(num_entities) * num_entities * num_relations;
  if (num_triplets > space)
    throw DataError("cannot draw " + std::to_string(num_triplets) + " distinct triplets from a space of " +
                    std::to_string(space));
  Rng rng = make_rng(seed, 0x5e7);
  auto decode = [&](std::uint64_t k) {
    Triplet t;
    t.tail = static_cast<std::uint32_t>(k % num_entities);
    k /= num_entities;
    t.relation = static_cast<std::uint32_t>(k % num_relations);
    t.head = static_cast<std::uint32_t>(k / num_relations);
    return t;
  };
  std::vector<Triplet> all;
  all.reserve(num_triplets);
  if (num_triplets * 2 > space) {
    std::vector<std::uint64_t> keys(space);
    for (std::uint64_t k = 0; k < space; ++k) keys[k] = k;
    for (std::size_t i = 0; i < num_triplets; ++i) {
      auto j = i + uniform_index(rng, keys.size() - i);
      std::swap(keys[i], keys[j]);
      all.push_back(decode(keys[i]));
    }
  } else {
    std::unordered_set<std::uint64_t> seen;
    while (all.size() < num_triplets) {
      std::uint64_t k = std::uniform_int_distribution<std::uint64_t>(0, space - 1)(rng);
      if (seen.insert(k).second) all.push_back(decode(k));
    }
  }
  const std::size_t held_out = num_triplets / 10;
  const std::size_t train_n = num_triplets - 2 * held_out;
  std::vector<Triplet> train(all.begin(), all.begin() + train_n);
  std::vector<Triplet> valid(all.begin() + train_n, all.begin() + train_n + held_out);
  std::vector<Triplet> test(all.begin() + train_n + held_out, all.end());
  return make_graph(num_entities, num_relations, std::move(train), std::move(valid), std::move(test));
}

}  // namespace kge

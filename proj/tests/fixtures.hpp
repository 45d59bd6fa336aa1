#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "kge/kg_data.hpp"

namespace kge::testing {

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = std::filesystem::temp_directory_path() /
            ("kge_test_" + std::to_string(stamp) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Six entities, two relations. Relation 0 has tph = 3, hpt = 1.
inline KnowledgeGraph six_entity_kg() {
  std::vector<Triplet> train{{0, 0, 1}, {0, 0, 2}, {0, 0, 3}, {4, 1, 5}, {1, 1, 2}, {3, 1, 4}};
  std::vector<Triplet> valid{{0, 0, 4}};
  std::vector<Triplet> test{{5, 1, 0}};
  return make_graph(6, 2, train, valid, test);
}

template <class Key>
double total_variation(const std::map<Key, double>& p, const std::map<Key, double>& q) {
  double tv = 0;
  for (const auto& [k, v] : p) {
    auto it = q.find(k);
    tv += std::abs(v - (it == q.end() ? 0.0 : it->second));
  }
  for (const auto& [k, v] : q)
    if (!p.count(k)) tv += std::abs(v);
  return tv / 2;
}

template <class Key>
std::map<Key, double> normalize_counts(const std::map<Key, double>& counts) {
  double total = 0;
  for (const auto& [k, v] : counts) total += v;
  std::map<Key, double> out;
  for (const auto& [k, v] : counts) out[k] = v / total;
  return out;
}

}  // namespace kge::testing

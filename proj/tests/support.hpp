#pragma once

#include "tkgpath/history_graph.hpp"
#include "tkgpath/model.hpp"

#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

namespace tkgpath::testing {

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("tkgpath_" + tag + "_" + std::to_string(rd()));
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

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Random edge list over num_entities with ids in [0, num_relations) and
/// timestamps in [0, query_time).
inline HistoryTemporalGraph random_graph(std::int32_t num_entities, std::int32_t num_relations,
                                         int num_edges, TimeId query_time, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<EntityId> ent(0, num_entities - 1);
  std::uniform_int_distribution<RelationId> rel(0, num_relations - 1);
  std::uniform_int_distribution<TimeId> tau(0, query_time - 1);
  std::vector<TemporalEdge> edges;
  for (int i = 0; i < num_edges; ++i) edges.push_back({ent(rng), rel(rng), ent(rng), tau(rng)});
  return HistoryTemporalGraph::from_edges(std::move(edges), num_entities, query_time);
}

/// Adds N(0, sd) noise to every parameter (zero biases otherwise sit on relu
/// kinks and make state rows exactly equal).
inline void jitter(Model& model, double sd, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, sd);
  for (NamedParam& p : model.parameters())
    for (double& v : p.value->values()) v += n(rng);
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace tkgpath::testing

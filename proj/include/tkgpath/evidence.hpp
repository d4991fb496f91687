#pragma once

// Reasoning evidence for one prediction.

#include "tkgpath/history_graph.hpp"
#include "tkgpath/model.hpp"
#include "tkgpath/path_engine.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace tkgpath {

struct EdgeImportance {
  /// d p(s, r, prediction) / d gate, summed over layers, indexed like g.edges().
  std::vector<double> weight;
  /// Same, split per layer: per_layer[l][e].
  std::vector<std::vector<double>> per_layer;
  double probability = 0.0;
};

EdgeImportance edge_importances(const Model& model, const HistoryTemporalGraph& g,
                                const PathQuery& query, EntityId prediction);

/// How complete paths of different lengths are compared. Partial paths in
/// one beam level share a length, so both rules prune identically.
enum class PathScore { kMean, kSum };
std::string to_string(PathScore v);
PathScore parse_path_score(const std::string& s);

struct EvidencePath {
  std::vector<int> edges;  // indices into g.edges()
  /// Sum of member edge importances.
  double importance = 0.0;
  /// Ranking key: importance, divided by the edge count under kMean.
  double score = 0.0;
};

inline constexpr int kDefaultEvidenceK = 2;
inline constexpr int kDefaultBeamWidth = 10;

struct PathSearchOptions {
  int k = kDefaultEvidenceK;
  /// <= 0 keeps every partial walk.
  int beam_width = kDefaultBeamWidth;
  int max_length = 1;
  PathScore score = PathScore::kMean;
  /// Lets a walk traverse the same temporal edge more than once.
  bool edge_reuse = false;
};

/// Beam search over walks of length <= max_length from the query subject,
/// extended by summed edge importance. Returns up to k walks ending at
/// `prediction`, score descending, ties broken by the lexicographically
/// smaller edge-index sequence.
std::vector<EvidencePath> top_k_paths(const HistoryTemporalGraph& g, const PathQuery& query,
                                      EntityId prediction, const EdgeImportance& importances,
                                      const PathSearchOptions& opts);

/// "t1:(s r o) -> t2:(s r o)  importance=<sum>  score=<key>", raw timestamps.
std::string render_path(const HistoryTemporalGraph& g, const EvidencePath& path,
                        const SnapshotSequence* times = nullptr);

void write_evidence_report(std::ostream& os, const HistoryTemporalGraph& g,
                           const PathQuery& query, EntityId prediction,
                           const EdgeImportance& importances,
                           const std::vector<EvidencePath>& paths,
                           const SnapshotSequence* times = nullptr, bool structured = false);

}  // namespace tkgpath

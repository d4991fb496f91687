#pragma once

// Time-aware filtered ranking: only facts true at the query's own timestamp
// are removed from the candidate list.

#include "tkgpath/model.hpp"
#include "tkgpath/tkg_core.hpp"

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace tkgpath {

enum class TieRule { kMean, kOptimistic, kPessimistic };
std::string to_string(TieRule v);
TieRule parse_tie_rule(const std::string& s);

struct RankResult {
  Quadruple query;
  double rank = 0.0;
  int filtered_count = 0;
};

struct Metrics {
  double mrr = 0.0;
  double hits1 = 0.0;
  double hits3 = 0.0;
  double hits10 = 0.0;
  std::size_t count = 0;
};

/// keep[o] is false for every o != gold with (s, r, o) true at the query time.
/// Throws DataError when the gold fact itself is not in `facts_at_t`.
std::vector<bool> time_aware_filter(EntityId subject, RelationId relation, EntityId gold,
                                    std::span<const Quadruple> facts_at_t,
                                    std::int32_t num_entities);

/// 1 + #{kept o : s[o] > s[gold]} + tie term over kept o != gold with
/// s[o] == s[gold] (half of them for kMean, none / all for optimistic /
/// pessimistic).
double rank_of(std::span<const double> scores, EntityId gold, const std::vector<bool>& keep,
               TieRule tie = TieRule::kMean);

/// Throws std::invalid_argument on an empty list.
Metrics metrics(std::span<const double> ranks);
Metrics metrics(std::span<const RankResult> results);

/// All (s, r, ?) queries at one timestamp with their gold objects.
struct QueryGroup {
  EntityId subject = 0;
  RelationId relation = 0;
  TimeId time = 0;
  std::vector<EntityId> answers;
};

/// Groups a snapshot's facts (both directions are already present) by (s, r).
std::vector<QueryGroup> group_queries(const Snapshot& snapshot);

struct EvalConfig {
  int history_length = 25;
  /// 0 = all available cores; 1 runs the serial loop.
  int threads = 0;
  TieRule tie_rule = TieRule::kMean;
};

/// Ranks every fact of `target` (or only `restrict_to` and their inverse
/// queries when non-empty). History windows come from `history`, which must
/// contain every snapshot preceding the target timestamps; snapshots at or
/// after a query's timestamp are never used as input.
std::vector<RankResult> evaluate(const Model& model, const SnapshotSequence& history,
                                 const SnapshotSequence& target, const EvalConfig& cfg,
                                 std::span<const Quadruple> restrict_to = {});

/// Forward-only probability of every entity for one query.
std::vector<double> score_candidates(const Model& model, const SnapshotSequence& history,
                                     EntityId subject, RelationId relation, TimeId time,
                                     int history_length);

void write_metrics_report(std::ostream& os, const Metrics& m, const std::string& label = "");

}  // namespace tkgpath

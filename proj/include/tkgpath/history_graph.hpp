#pragma once

#include "tkgpath/tkg_core.hpp"

#include <iosfwd>
#include <span>
#include <vector>

namespace tkgpath {

struct TemporalEdge {
  EntityId src = 0;
  RelationId rel = 0;
  EntityId dst = 0;
  TimeId tau = 0;

  friend bool operator==(const TemporalEdge&, const TemporalEdge&) = default;
};

/// Union of a history window's snapshots with each edge tagged by its
/// timestamp, indexed by destination entity. Immutable after build.
class HistoryTemporalGraph {
 public:
  static HistoryTemporalGraph build(std::span<const Snapshot* const> history,
                                    std::int32_t num_entities, TimeId query_time);
  /// Builds directly from an edge list (in insertion order).
  static HistoryTemporalGraph from_edges(std::vector<TemporalEdge> edges,
                                         std::int32_t num_entities, TimeId query_time);

  const std::vector<TemporalEdge>& edges() const { return edges_; }
  std::size_t num_edges() const { return edges_.size(); }
  std::int32_t num_entities() const { return num_entities_; }
  TimeId query_time() const { return query_time_; }
  TimeId window_start() const { return window_start_; }
  TimeId window_end() const { return window_end_; }

  /// Indices into edges() of incoming edges of `entity`, insertion order.
  std::span<const int> in_edge_ids(EntityId entity) const;
  std::vector<TemporalEdge> in_edges(EntityId entity) const;

  /// Per-edge arrays used by the propagation kernels.
  const std::vector<int>& src_index() const { return src_; }
  const std::vector<int>& dst_index() const { return dst_; }

  void dump(std::ostream& os) const;

 private:
  std::vector<TemporalEdge> edges_;
  std::vector<int> in_offsets_;
  std::vector<int> in_ids_;
  std::vector<int> src_;
  std::vector<int> dst_;
  std::int32_t num_entities_ = 0;
  TimeId query_time_ = 0;
  TimeId window_start_ = 0;
  TimeId window_end_ = -1;
};

}  // namespace tkgpath

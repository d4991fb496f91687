#pragma once

// Query-aware temporal path propagation. Layer l updates every entity o from
// the merged messages of its in-edges:
//   h_o^l = Agg({ Tmsg(h_z^{l-1}, w_r(z, p_tau, o)) : (z, p_tau, o) in G })
// optionally re-injecting h_o^0 as an extra message, followed by
// activation -> layer norm -> shortcut (+ h_o^{l-1}).

#include "tkgpath/history_graph.hpp"
#include "tkgpath/model.hpp"
#include "tkgpath/relation_encoding.hpp"

#include <optional>
#include <vector>

namespace tkgpath {

struct PathQuery {
  EntityId subject = 0;
  RelationId relation = 0;
  TimeId time = 0;
};

/// Layer-0 state: row `subject` holds the query relation vector, others zero.
Var init_state(std::int32_t num_entities, EntityId subject, Var query_rel_vec);

/// Merges a batch of path states with edge vectors (same shape, row-wise).
Var merge(MergeOp op, Var h, Var w);

/// Reduces message rows into num_entities rows by destination segment.
/// pna yields the unprojected [mean | max | min | std] (4d columns).
Var aggregate_raw(Aggregator agg, Var messages, std::span<const int> dst,
                  std::size_t num_entities);

struct PropagationResult {
  Var state;                   // H^omega, |V| x d
  Var query_rel_vec;           // 1 x d
  std::vector<Var> edge_gates; // per layer E x 1 gates when requested
};

struct PropagateOptions {
  /// Adds a differentiable all-ones gate per (edge, layer) multiplying each
  /// merged message (used for edge importance).
  bool edge_gates = false;
  /// Gate values per layer (gate_values[l][e]); empty means all ones.
  std::vector<std::vector<double>> gate_values;
};

PropagationResult propagate(ParamBinder& bind, const Model& model, const HistoryTemporalGraph& g,
                            const PathQuery& query, const PropagateOptions& opts = {});

}  // namespace tkgpath

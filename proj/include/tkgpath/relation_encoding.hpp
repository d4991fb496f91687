#pragma once

// Query-aware temporal edge representations:
//   w_r(z, p_tau, o) = g( Psi_r(p) || Upsilon(|tau - t_q|) )
//   Psi_r(p)        = W_p r + b_p
//   Upsilon(dt)_i   = sqrt(1/d) cos(w_i dt + phi_i)
// Every edge of the same (relation, time distance) type shares one vector, so
// the kernels below compute one row per distinct type and gather per edge.

#include "tkgpath/history_graph.hpp"
#include "tkgpath/model.hpp"

#include <vector>

namespace tkgpath::encoding {

/// Row r of the relation table as a 1 x d tape value.
Var relation_vector(ParamBinder& bind, const Model& model, RelationId rel);

Var static_component(ParamBinder& bind, const Model& model, int layer, RelationId rel_type,
                     Var query_rel_vec);
/// Psi_r(p) for every relation p, |R| x d.
Var static_components(ParamBinder& bind, const Model& model, int layer, Var query_rel_vec);

Var time_component(ParamBinder& bind, const Model& model, int layer, RelationId rel_type,
                   double delta_tau);

Var edge_repr(ParamBinder& bind, const Model& model, int layer, const TemporalEdge& edge,
              Var query_rel_vec, TimeId query_time);

/// Distinct (relation, time distance) pairs of a graph and each edge's pair.
struct EdgeTypeTable {
  std::vector<int> type_of_edge;
  std::vector<RelationId> type_relation;
  std::vector<double> type_delta;
  std::size_t size() const { return type_relation.size(); }
};

EdgeTypeTable edge_types(const HistoryTemporalGraph& g);

/// One representation row per edge type, K x d.
Var edge_type_reprs(ParamBinder& bind, const Model& model, int layer, const EdgeTypeTable& types,
                    Var query_rel_vec);

/// One representation row per edge of g (edge order), E x d.
Var edge_reprs(ParamBinder& bind, const Model& model, int layer, const EdgeTypeTable& types,
               Var query_rel_vec);

}  // namespace tkgpath::encoding

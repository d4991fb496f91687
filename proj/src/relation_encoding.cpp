#include "tkgpath/relation_encoding.hpp"

#include <cmath>
#include <map>
#include <numeric>

namespace tkgpath::encoding {

namespace {

void check_relation(const Model& model, RelationId rel) {
  if (rel < 0 || rel >= model.config().num_relations)
    throw std::out_of_range("relation id " + std::to_string(rel) + " outside [0, " +
                            std::to_string(model.config().num_relations) + ")");
}

Var activate(Var x, Activation act) { return act == Activation::kRelu ? grad::relu(x) : x; }

// Shared tail of edge_repr / edge_type_reprs: rows of Psi and Upsilon -> w.
Var combine(ParamBinder& bind, const Model& model, int layer, Var psi, Var upsilon) {
  const EncoderConfig& enc = model.config().enc;
  if (enc.edge_ffn == EdgeFfn::kBypass) return psi;
  const EdgeLayerParams& p = model.edge_layer(layer);
  const Var parts[2] = {psi, upsilon};
  Var x = grad::concat_cols(parts);
  Var y = grad::add(grad::matmul(x, bind(p.g_W)), bind(p.g_b));
  return activate(y, enc.edge_activation);
}

Var time_rows(ParamBinder& bind, const Model& model, int layer,
              const std::vector<RelationId>& rels, const std::vector<double>& deltas) {
  const auto d = static_cast<std::size_t>(model.config().dim);
  Tape& tape = bind.tape();
  if (!model.config().enc.use_time_encoding) return tape.constant(Matrix(rels.size(), d));
  const EdgeLayerParams& p = model.edge_layer(layer);
  const bool shared = model.config().enc.time_sharing == TimeSharing::kShared;
  std::vector<int> sel(rels.size());
  for (std::size_t i = 0; i < rels.size(); ++i) sel[i] = shared ? 0 : rels[i];
  Var w = grad::gather_rows(bind(p.time_w), sel);
  Var phi = grad::gather_rows(bind(p.time_phi), sel);
  Var dt = tape.constant(Matrix(rels.size(), 1, deltas));
  Var arg = grad::add(grad::mul(w, dt), phi);
  return grad::scale(grad::cos(arg), std::sqrt(1.0 / static_cast<double>(d)));
}

}  // namespace

Var relation_vector(ParamBinder& bind, const Model& model, RelationId rel) {
  check_relation(model, rel);
  const int idx[1] = {rel};
  return grad::gather_rows(bind(model.R), idx);
}

Var static_component(ParamBinder& bind, const Model& model, int layer, RelationId rel_type,
                     Var query_rel_vec) {
  check_relation(model, rel_type);
  const EdgeLayerParams& p = model.edge_layer(layer);
  const int d = model.config().dim;
  std::vector<int> rows(static_cast<std::size_t>(d));
  std::iota(rows.begin(), rows.end(), rel_type * d);
  Var Wp = grad::gather_rows(bind(p.W), rows);
  const int brow[1] = {rel_type};
  Var bp = grad::gather_rows(bind(p.b), brow);
  return grad::add(grad::transpose(grad::matmul(Wp, grad::transpose(query_rel_vec))), bp);
}

Var static_components(ParamBinder& bind, const Model& model, int layer, Var query_rel_vec) {
  const EdgeLayerParams& p = model.edge_layer(layer);
  const auto nr = static_cast<std::size_t>(model.config().num_relations);
  const auto d = static_cast<std::size_t>(model.config().dim);
  Var stacked = grad::matmul(bind(p.W), grad::transpose(query_rel_vec));
  return grad::add(grad::reshape(stacked, nr, d), bind(p.b));
}

Var time_component(ParamBinder& bind, const Model& model, int layer, RelationId rel_type,
                   double delta_tau) {
  check_relation(model, rel_type);
  if (delta_tau < 0) throw std::invalid_argument("time_component: negative time distance");
  return time_rows(bind, model, layer, {rel_type}, {delta_tau});
}

Var edge_repr(ParamBinder& bind, const Model& model, int layer, const TemporalEdge& edge,
              Var query_rel_vec, TimeId query_time) {
  Var psi = static_component(bind, model, layer, edge.rel, query_rel_vec);
  const double dt = std::abs(static_cast<double>(edge.tau) - static_cast<double>(query_time));
  Var ups = time_component(bind, model, layer, edge.rel, dt);
  return combine(bind, model, layer, psi, ups);
}

EdgeTypeTable edge_types(const HistoryTemporalGraph& g) {
  EdgeTypeTable t;
  std::map<std::pair<RelationId, TimeId>, int> index;
  t.type_of_edge.reserve(g.num_edges());
  for (const TemporalEdge& e : g.edges()) {
    auto [it, inserted] = index.try_emplace({e.rel, e.tau}, static_cast<int>(t.size()));
    if (inserted) {
      t.type_relation.push_back(e.rel);
      t.type_delta.push_back(std::abs(static_cast<double>(e.tau) - g.query_time()));
    }
    t.type_of_edge.push_back(it->second);
  }
  return t;
}

Var edge_type_reprs(ParamBinder& bind, const Model& model, int layer, const EdgeTypeTable& types,
                    Var query_rel_vec) {
  for (RelationId r : types.type_relation) check_relation(model, r);
  Var psi_all = static_components(bind, model, layer, query_rel_vec);
  std::vector<int> rel_rows(types.type_relation.begin(), types.type_relation.end());
  Var psi = grad::gather_rows(psi_all, rel_rows);
  if (model.config().enc.edge_ffn == EdgeFfn::kBypass) return psi;
  Var ups = time_rows(bind, model, layer, types.type_relation, types.type_delta);
  return combine(bind, model, layer, psi, ups);
}

Var edge_reprs(ParamBinder& bind, const Model& model, int layer, const EdgeTypeTable& types,
               Var query_rel_vec) {
  return grad::gather_rows(edge_type_reprs(bind, model, layer, types, query_rel_vec),
                           types.type_of_edge);
}

}  // namespace tkgpath::encoding

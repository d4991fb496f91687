#include "tkgpath/path_engine.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace tkgpath {

Var init_state(std::int32_t num_entities, EntityId subject, Var query_rel_vec) {
  if (subject < 0 || subject >= num_entities)
    throw std::out_of_range("init_state: subject " + std::to_string(subject) + " outside [0, " +
                            std::to_string(num_entities) + ")");
  const int idx[1] = {subject};
  return grad::scatter_add_rows(query_rel_vec, idx, static_cast<std::size_t>(num_entities));
}

Var merge(MergeOp op, Var h, Var w) {
  switch (op) {
    case MergeOp::kMult: return grad::mul(h, w);
    case MergeOp::kAdd: return grad::add(h, w);
    case MergeOp::kRotate:
      if (h.cols() % 2 != 0)
        throw ConfigError("merge = rotate requires an even dimension, got " +
                          std::to_string(h.cols()));
      return grad::complex_rotate(h, w);
  }
  throw std::logic_error("merge: unknown op");
}

Var aggregate_raw(Aggregator agg, Var messages, std::span<const int> dst,
                  std::size_t num_entities) {
  using grad::Reduce;
  switch (agg) {
    case Aggregator::kSum: return grad::segment_reduce(messages, dst, num_entities, Reduce::kSum);
    case Aggregator::kMean: return grad::segment_reduce(messages, dst, num_entities, Reduce::kMean);
    case Aggregator::kMax: return grad::segment_reduce(messages, dst, num_entities, Reduce::kMax);
    case Aggregator::kPna: {
      const Var parts[4] = {
          grad::segment_reduce(messages, dst, num_entities, Reduce::kMean),
          grad::segment_reduce(messages, dst, num_entities, Reduce::kMax),
          grad::segment_reduce(messages, dst, num_entities, Reduce::kMin),
          grad::segment_reduce(messages, dst, num_entities, Reduce::kStd),
      };
      return grad::concat_cols(parts);
    }
  }
  throw std::logic_error("aggregate: unknown aggregator");
}

PropagationResult propagate(ParamBinder& bind, const Model& model, const HistoryTemporalGraph& g,
                            const PathQuery& query, const PropagateOptions& opts) {
  const ModelConfig& cfg = model.config();
  const PropagationConfig& prop = cfg.prop;
  if (query.time != g.query_time())
    throw std::invalid_argument("propagate: graph was built for t=" +
                                std::to_string(g.query_time()) + ", query is at t=" +
                                std::to_string(query.time));
  Tape& tape = bind.tape();
  const auto num_entities = static_cast<std::size_t>(g.num_entities());
  const std::size_t num_edges = g.num_edges();

  PropagationResult result;
  result.query_rel_vec = encoding::relation_vector(bind, model, query.relation);
  const Var h0 = init_state(g.num_entities(), query.subject, result.query_rel_vec);
  const encoding::EdgeTypeTable types = encoding::edge_types(g);

  std::vector<int> segment = g.dst_index();
  if (prop.include_boundary) {
    segment.resize(num_edges + num_entities);
    std::iota(segment.begin() + static_cast<long>(num_edges), segment.end(), 0);
  }

  Var h = h0;
  Var tied_edges;
  for (int l = 0; l < prop.omega; ++l) {
    Var w;
    if (cfg.enc.tied_layers && tied_edges.valid()) {
      w = tied_edges;
    } else {
      w = encoding::edge_reprs(bind, model, l, types, result.query_rel_vec);
      if (cfg.enc.tied_layers) tied_edges = w;
    }
    Var msg = merge(prop.merge_op, grad::gather_rows(h, g.src_index()), w);
    if (opts.edge_gates) {
      Matrix init(num_edges, 1, 1.0);
      if (!opts.gate_values.empty()) {
        const auto& v = opts.gate_values.at(static_cast<std::size_t>(l));
        if (v.size() != num_edges)
          throw std::invalid_argument("propagate: gate_values do not match the edge count");
        std::copy(v.begin(), v.end(), init.values().begin());
      }
      Var gate = tape.variable(std::move(init));
      result.edge_gates.push_back(gate);
      msg = grad::mul(msg, gate);
    }
    if (prop.include_boundary) {
      const Var rows[2] = {msg, h0};
      msg = grad::concat_rows(rows);
    }
    Var out = aggregate_raw(prop.aggregator, msg, segment, num_entities);
    const AggLayerParams& ap = model.agg_layers[static_cast<std::size_t>(l)];
    if (prop.aggregator == Aggregator::kPna)
      out = grad::add(grad::matmul(out, bind(ap.proj_W)), bind(ap.proj_b));
    if (prop.activation == Activation::kRelu) out = grad::relu(out);
    if (prop.use_layer_norm) out = grad::layer_norm(out, bind(ap.ln_gain), bind(ap.ln_bias));
    if (prop.use_shortcut) out = grad::add(out, h);
    h = out;
  }
  result.state = h;
  return result;
}

}  // namespace tkgpath

#pragma once

// Brute-force references shared by the unit tests and the acceptance binary.

#include "tkgpath/evaluation.hpp"
#include "tkgpath/evidence.hpp"
#include "tkgpath/history_graph.hpp"
#include "tkgpath/model.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <random>
#include <set>
#include <vector>

namespace tkgpath::oracle {

/// Model settings under which propagation reduces to a plain walk sum.
inline ModelConfig walk_config(std::int32_t num_relations, int dim, int omega) {
  ModelConfig mc;
  mc.num_relations = num_relations;
  mc.dim = dim;
  mc.score_hidden = dim;
  mc.prop.omega = omega;
  mc.prop.aggregator = Aggregator::kSum;
  mc.prop.merge_op = MergeOp::kMult;
  mc.prop.include_boundary = true;
  mc.prop.use_layer_norm = false;
  mc.prop.use_shortcut = false;
  mc.prop.activation = Activation::kNone;
  mc.enc.edge_ffn = EdgeFfn::kBypass;
  mc.enc.tied_layers = true;
  return mc;
}

/// W_p r + b_p from the raw arrays of the (tied) edge layer.
inline std::vector<double> static_vector(const Model& m, RelationId p, RelationId query_rel) {
  const auto d = static_cast<std::size_t>(m.config().dim);
  const EdgeLayerParams& e = m.edge_layers[0];
  std::vector<double> out(d);
  for (std::size_t i = 0; i < d; ++i) {
    double v = e.b(static_cast<std::size_t>(p), i);
    for (std::size_t j = 0; j < d; ++j)
      v += e.W(static_cast<std::size_t>(p) * d + i, j) * m.R(static_cast<std::size_t>(query_rel), j);
    out[i] = v;
  }
  return out;
}

/// Sum over every walk s -> o with at most omega edges of r * prod(w_e).
inline Matrix walk_sum(const Model& m, const HistoryTemporalGraph& g, EntityId s, RelationId r) {
  const auto d = static_cast<std::size_t>(m.config().dim);
  const int omega = m.config().prop.omega;
  Matrix H(static_cast<std::size_t>(g.num_entities()), d);
  std::vector<std::vector<double>> w;
  for (const TemporalEdge& e : g.edges()) w.push_back(static_vector(m, e.rel, r));
  std::vector<double> acc(d);
  for (std::size_t i = 0; i < d; ++i) acc[i] = m.R(static_cast<std::size_t>(r), i);
  std::function<void(EntityId, int, const std::vector<double>&)> walk =
      [&](EntityId at, int len, const std::vector<double>& prod) {
        for (std::size_t i = 0; i < d; ++i) H(static_cast<std::size_t>(at), i) += prod[i];
        if (len == omega) return;
        for (std::size_t e = 0; e < g.num_edges(); ++e) {
          if (g.edges()[e].src != at) continue;
          std::vector<double> next(d);
          for (std::size_t i = 0; i < d; ++i) next[i] = prod[i] * w[e][i];
          walk(g.edges()[e].dst, len + 1, next);
        }
      };
  walk(s, 0, acc);
  return H;
}

/// Entities reachable from s in at most omega hops (s included).
inline std::vector<bool> reachable(const HistoryTemporalGraph& g, EntityId s, int omega) {
  std::vector<bool> seen(static_cast<std::size_t>(g.num_entities()), false);
  seen[static_cast<std::size_t>(s)] = true;
  std::vector<EntityId> frontier = {s};
  for (int l = 0; l < omega; ++l) {
    std::vector<EntityId> next;
    for (const TemporalEdge& e : g.edges())
      if (std::find(frontier.begin(), frontier.end(), e.src) != frontier.end() &&
          !seen[static_cast<std::size_t>(e.dst)]) {
        seen[static_cast<std::size_t>(e.dst)] = true;
        next.push_back(e.dst);
      }
    frontier = std::move(next);
  }
  return seen;
}

/// Rank by explicit sorting: position of gold among kept candidates sorted by
/// score descending, averaged over its tie block.
inline double sorted_rank(const std::vector<double>& scores, EntityId gold,
                          const std::vector<bool>& keep, TieRule tie) {
  std::vector<int> order;
  for (std::size_t o = 0; o < scores.size(); ++o)
    if (keep[o] || static_cast<EntityId>(o) == gold) order.push_back(static_cast<int>(o));
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return scores[static_cast<std::size_t>(a)] > scores[static_cast<std::size_t>(b)]; });
  const double gs = scores[static_cast<std::size_t>(gold)];
  std::size_t first = order.size(), last = 0;
  for (std::size_t i = 0; i < order.size(); ++i)
    if (scores[static_cast<std::size_t>(order[i])] == gs) {
      first = std::min(first, i);
      last = i;
    }
  const double lo = static_cast<double>(first) + 1.0;
  const double hi = static_cast<double>(last) + 1.0;
  switch (tie) {
    case TieRule::kOptimistic: return lo;
    case TieRule::kPessimistic: return hi;
    case TieRule::kMean: break;
  }
  return (lo + hi) / 2.0;
}

/// Mask from an explicit set of (s, r, o) answers at the query time.
inline std::vector<bool> set_filter(EntityId s, RelationId r, EntityId gold,
                                    const std::vector<Quadruple>& facts, TimeId t,
                                    std::int32_t num_entities) {
  std::set<EntityId> answers;
  for (const Quadruple& q : facts)
    if (q.subject == s && q.relation == r && q.timestamp == t) answers.insert(q.object);
  std::vector<bool> keep(static_cast<std::size_t>(num_entities), true);
  for (EntityId o : answers)
    if (o != gold) keep[static_cast<std::size_t>(o)] = false;
  return keep;
}

/// Every walk from the subject to the prediction with at most max_length
/// edges, ranked like top_k_paths.
inline std::vector<EvidencePath> exhaustive_paths(const HistoryTemporalGraph& g,
                                                  const PathQuery& q, EntityId prediction,
                                                  const EdgeImportance& imp,
                                                  const PathSearchOptions& opts) {
  std::vector<EvidencePath> all;
  std::vector<int> walk;
  std::function<void(EntityId)> rec = [&](EntityId at) {
    if (!walk.empty() && at == prediction) {
      double sum = 0.0;
      for (int e : walk) sum += imp.weight[static_cast<std::size_t>(e)];
      const double score =
          opts.score == PathScore::kMean ? sum / static_cast<double>(walk.size()) : sum;
      all.push_back({walk, sum, score});
    }
    if (static_cast<int>(walk.size()) == opts.max_length) return;
    for (std::size_t e = 0; e < g.num_edges(); ++e) {
      if (g.edges()[e].src != at) continue;
      if (!opts.edge_reuse &&
          std::find(walk.begin(), walk.end(), static_cast<int>(e)) != walk.end())
        continue;
      walk.push_back(static_cast<int>(e));
      rec(g.edges()[e].dst);
      walk.pop_back();
    }
  };
  rec(q.subject);
  std::sort(all.begin(), all.end(), [](const EvidencePath& a, const EvidencePath& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.edges < b.edges;
  });
  if (all.size() > static_cast<std::size_t>(opts.k)) all.resize(static_cast<std::size_t>(opts.k));
  return all;
}

/// Relabels entities of g by perm (old id -> new id).
inline HistoryTemporalGraph permute(const HistoryTemporalGraph& g, const std::vector<EntityId>& perm,
                                    bool shuffle_edges, std::uint64_t seed) {
  std::vector<TemporalEdge> edges;
  for (const TemporalEdge& e : g.edges())
    edges.push_back({perm[static_cast<std::size_t>(e.src)], e.rel,
                     perm[static_cast<std::size_t>(e.dst)], e.tau});
  if (shuffle_edges) {
    std::mt19937_64 rng(seed);
    std::shuffle(edges.begin(), edges.end(), rng);
  }
  return HistoryTemporalGraph::from_edges(std::move(edges), g.num_entities(), g.query_time());
}

inline std::vector<EntityId> random_permutation(std::int32_t n, std::uint64_t seed) {
  std::vector<EntityId> p(static_cast<std::size_t>(n));
  std::iota(p.begin(), p.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

}  // namespace tkgpath::oracle

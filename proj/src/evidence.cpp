#include "tkgpath/evidence.hpp"

#include "tkgpath/learning.hpp"

#include <algorithm>
#include <cstdio>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace tkgpath {

EdgeImportance edge_importances(const Model& model, const HistoryTemporalGraph& g,
                                const PathQuery& query, EntityId prediction) {
  if (prediction < 0 || prediction >= g.num_entities())
    throw std::out_of_range("edge_importances: prediction " + std::to_string(prediction) +
                            " outside [0, " + std::to_string(g.num_entities()) + ")");
  Tape tape;
  ParamBinder bind(tape, false);
  PropagateOptions opts;
  opts.edge_gates = true;
  const PropagationResult res = propagate(bind, model, g, query, opts);
  const int row[1] = {prediction};
  Var h = grad::gather_rows(res.state, row);
  Var p = score(bind, model, h, res.query_rel_vec);

  EdgeImportance out;
  out.probability = p.value()(0, 0);
  out.weight.assign(g.num_edges(), 0.0);
  tape.backward(p);
  for (const Var& gate : res.edge_gates) {
    const Matrix gg = tape.grad(gate);
    std::vector<double> layer(gg.values().begin(), gg.values().end());
    for (std::size_t e = 0; e < layer.size(); ++e) out.weight[e] += layer[e];
    out.per_layer.push_back(std::move(layer));
  }
  return out;
}

std::string to_string(PathScore v) { return v == PathScore::kMean ? "mean" : "sum"; }

PathScore parse_path_score(const std::string& s) {
  if (s == "mean") return PathScore::kMean;
  if (s == "sum") return PathScore::kSum;
  throw ConfigError("unknown path score '" + s + "' (expected mean or sum)");
}

namespace {

struct Partial {
  std::vector<int> edges;
  EntityId end = 0;
  double score = 0.0;
};

bool better(const Partial& a, const Partial& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.edges < b.edges;
}

}  // namespace

std::vector<EvidencePath> top_k_paths(const HistoryTemporalGraph& g, const PathQuery& query,
                                      EntityId prediction, const EdgeImportance& importances,
                                      const PathSearchOptions& opts) {
  const int k = opts.k;
  const int beam_width = opts.beam_width;
  if (k < 1) throw std::invalid_argument("top_k_paths: k must be >= 1");
  if (beam_width > 0 && beam_width < k)
    throw std::invalid_argument("top_k_paths: beam_width must be >= k");
  if (importances.weight.size() != g.num_edges())
    throw std::invalid_argument("top_k_paths: importance vector does not match the graph");
  if (prediction < 0 || prediction >= g.num_entities() || query.subject < 0 ||
      query.subject >= g.num_entities())
    throw std::out_of_range("top_k_paths: entity out of range");

  std::vector<std::vector<int>> out_edges(static_cast<std::size_t>(g.num_entities()));
  for (std::size_t e = 0; e < g.num_edges(); ++e)
    out_edges[static_cast<std::size_t>(g.edges()[e].src)].push_back(static_cast<int>(e));

  std::vector<Partial> beam = {{{}, query.subject, 0.0}};
  std::vector<Partial> complete;
  for (int len = 1; len <= opts.max_length && !beam.empty(); ++len) {
    std::vector<Partial> next;
    for (const Partial& p : beam) {
      for (int e : out_edges[static_cast<std::size_t>(p.end)]) {
        if (!opts.edge_reuse && std::find(p.edges.begin(), p.edges.end(), e) != p.edges.end())
          continue;
        Partial q = p;
        q.edges.push_back(e);
        q.end = g.edges()[static_cast<std::size_t>(e)].dst;
        q.score += importances.weight[static_cast<std::size_t>(e)];
        next.push_back(std::move(q));
      }
    }
    std::sort(next.begin(), next.end(), better);
    for (const Partial& q : next)
      if (q.end == prediction) {
        Partial c = q;
        if (opts.score == PathScore::kMean) c.score /= static_cast<double>(len);
        complete.push_back(std::move(c));
      }
    if (beam_width > 0 && next.size() > static_cast<std::size_t>(beam_width))
      next.resize(static_cast<std::size_t>(beam_width));
    beam = std::move(next);
  }
  std::sort(complete.begin(), complete.end(), better);
  if (complete.size() > static_cast<std::size_t>(k)) complete.resize(static_cast<std::size_t>(k));
  std::vector<EvidencePath> out;
  for (Partial& p : complete) {
    double sum = 0.0;
    for (int e : p.edges) sum += importances.weight[static_cast<std::size_t>(e)];
    out.push_back({std::move(p.edges), sum, p.score});
  }
  return out;
}

std::string render_path(const HistoryTemporalGraph& g, const EvidencePath& path,
                        const SnapshotSequence* times) {
  std::ostringstream os;
  for (std::size_t i = 0; i < path.edges.size(); ++i) {
    const TemporalEdge& e = g.edges()[static_cast<std::size_t>(path.edges[i])];
    if (i > 0) os << " -> ";
    const std::int64_t t = times != nullptr ? times->raw_time(e.tau) : e.tau;
    os << t << ":(" << e.src << ' ' << e.rel << ' ' << e.dst << ')';
  }
  char buf[96];
  std::snprintf(buf, sizeof buf, "  importance=%.6g  score=%.6g", path.importance, path.score);
  os << buf;
  return os.str();
}

void write_evidence_report(std::ostream& os, const HistoryTemporalGraph& g,
                           const PathQuery& query, EntityId prediction,
                           const EdgeImportance& importances,
                           const std::vector<EvidencePath>& paths,
                           const SnapshotSequence* times, bool structured) {
  const std::int64_t qt = times != nullptr ? times->raw_time(query.time) : query.time;
  os << "query (" << query.subject << ' ' << query.relation << " ?) at " << qt
     << "  prediction=" << prediction << "  p=" << importances.probability << "\n";
  if (paths.empty()) os << "no path of length <= omega reaches the prediction\n";
  for (const EvidencePath& p : paths) os << render_path(g, p, times) << "\n";
  if (!structured) return;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    os << "path." << i << ".importance = " << paths[i].importance << "\n";
    os << "path." << i << ".score = " << paths[i].score << "\n";
    os << "path." << i << ".length = " << paths[i].edges.size() << "\n";
    os << "path." << i << ".edges =";
    for (int e : paths[i].edges) os << ' ' << e;
    os << "\n";
  }
}

}  // namespace tkgpath

#include "tkgpath/history_graph.hpp"

#include <algorithm>
#include <ostream>

namespace tkgpath {

HistoryTemporalGraph HistoryTemporalGraph::build(std::span<const Snapshot* const> history,
                                                 std::int32_t num_entities, TimeId query_time) {
  std::vector<TemporalEdge> edges;
  std::size_t total = 0;
  for (const Snapshot* s : history) total += s->facts.size();
  edges.reserve(total);
  for (const Snapshot* s : history) {
    if (s->timestamp >= query_time)
      throw ValidationError("history snapshot at t=" + std::to_string(s->timestamp) +
                            " is not before query time " + std::to_string(query_time));
    for (const Quadruple& q : s->facts) edges.push_back({q.subject, q.relation, q.object, s->timestamp});
  }
  return from_edges(std::move(edges), num_entities, query_time);
}

HistoryTemporalGraph HistoryTemporalGraph::from_edges(std::vector<TemporalEdge> edges,
                                                      std::int32_t num_entities,
                                                      TimeId query_time) {
  HistoryTemporalGraph g;
  g.num_entities_ = num_entities;
  g.query_time_ = query_time;
  g.in_offsets_.assign(static_cast<std::size_t>(num_entities) + 1, 0);
  g.src_.reserve(edges.size());
  g.dst_.reserve(edges.size());
  bool first = true;
  for (const TemporalEdge& e : edges) {
    if (e.src < 0 || e.src >= num_entities || e.dst < 0 || e.dst >= num_entities)
      throw ValidationError("temporal edge (" + std::to_string(e.src) + ", " +
                            std::to_string(e.rel) + ", " + std::to_string(e.dst) +
                            ") has entity id outside [0, " + std::to_string(num_entities) + ")");
    if (e.tau >= query_time)
      throw ValidationError("temporal edge at tau=" + std::to_string(e.tau) +
                            " is not before query time " + std::to_string(query_time));
    g.window_start_ = first ? e.tau : std::min(g.window_start_, e.tau);
    g.window_end_ = first ? e.tau : std::max(g.window_end_, e.tau);
    first = false;
    ++g.in_offsets_[static_cast<std::size_t>(e.dst) + 1];
    g.src_.push_back(e.src);
    g.dst_.push_back(e.dst);
  }
  for (std::size_t i = 1; i < g.in_offsets_.size(); ++i) g.in_offsets_[i] += g.in_offsets_[i - 1];
  g.in_ids_.assign(edges.size(), 0);
  std::vector<int> cursor(g.in_offsets_.begin(), g.in_offsets_.end() - 1);
  for (std::size_t i = 0; i < edges.size(); ++i)
    g.in_ids_[static_cast<std::size_t>(cursor[static_cast<std::size_t>(edges[i].dst)]++)] =
        static_cast<int>(i);
  g.edges_ = std::move(edges);
  return g;
}

std::span<const int> HistoryTemporalGraph::in_edge_ids(EntityId entity) const {
  if (entity < 0 || entity >= num_entities_)
    throw std::out_of_range("in_edges: entity " + std::to_string(entity) + " outside [0, " +
                            std::to_string(num_entities_) + ")");
  const auto b = static_cast<std::size_t>(in_offsets_[static_cast<std::size_t>(entity)]);
  const auto e = static_cast<std::size_t>(in_offsets_[static_cast<std::size_t>(entity) + 1]);
  return std::span<const int>(in_ids_).subspan(b, e - b);
}

std::vector<TemporalEdge> HistoryTemporalGraph::in_edges(EntityId entity) const {
  std::vector<TemporalEdge> out;
  for (int id : in_edge_ids(entity)) out.push_back(edges_[static_cast<std::size_t>(id)]);
  return out;
}

void HistoryTemporalGraph::dump(std::ostream& os) const {
  for (const TemporalEdge& e : edges_) os << e.src << ' ' << e.rel << ' ' << e.dst << ' ' << e.tau << '\n';
}

}  // namespace tkgpath

#include "tkgpath/evaluation.hpp"

#include "tkgpath/history_graph.hpp"
#include "tkgpath/learning.hpp"
#include "tkgpath/path_engine.hpp"

#include <omp.h>

#include <algorithm>
#include <iomanip>
#include <map>
#include <ostream>
#include <set>
#include <stdexcept>

namespace tkgpath {

std::string to_string(TieRule v) {
  switch (v) {
    case TieRule::kMean: return "mean";
    case TieRule::kOptimistic: return "optimistic";
    case TieRule::kPessimistic: return "pessimistic";
  }
  return "?";
}

TieRule parse_tie_rule(const std::string& s) {
  if (s == "mean") return TieRule::kMean;
  if (s == "optimistic") return TieRule::kOptimistic;
  if (s == "pessimistic") return TieRule::kPessimistic;
  throw ConfigError("unknown tie rule '" + s + "' (expected mean, optimistic or pessimistic)");
}

std::vector<bool> time_aware_filter(EntityId subject, RelationId relation, EntityId gold,
                                    std::span<const Quadruple> facts_at_t,
                                    std::int32_t num_entities) {
  if (gold < 0 || gold >= num_entities)
    throw std::out_of_range("time_aware_filter: gold entity " + std::to_string(gold) +
                            " out of range");
  std::vector<bool> keep(static_cast<std::size_t>(num_entities), true);
  bool gold_seen = false;
  for (const Quadruple& q : facts_at_t) {
    if (q.subject != subject || q.relation != relation) continue;
    if (q.object == gold) {
      gold_seen = true;
      continue;
    }
    if (q.object >= 0 && q.object < num_entities) keep[static_cast<std::size_t>(q.object)] = false;
  }
  if (!gold_seen)
    throw DataError("time_aware_filter: gold fact (" + std::to_string(subject) + ", " +
                    std::to_string(relation) + ", " + std::to_string(gold) +
                    ") is not true at the query timestamp");
  return keep;
}

double rank_of(std::span<const double> scores, EntityId gold, const std::vector<bool>& keep,
               TieRule tie) {
  if (gold < 0 || static_cast<std::size_t>(gold) >= scores.size())
    throw std::out_of_range("rank_of: gold index out of range");
  if (keep.size() != scores.size())
    throw std::invalid_argument("rank_of: mask and score sizes differ");
  const double g = scores[static_cast<std::size_t>(gold)];
  std::size_t higher = 0;
  std::size_t ties = 0;
  for (std::size_t o = 0; o < scores.size(); ++o) {
    if (static_cast<EntityId>(o) == gold || !keep[o]) continue;
    if (scores[o] > g) ++higher;
    else if (scores[o] == g) ++ties;
  }
  double rank = 1.0 + static_cast<double>(higher);
  switch (tie) {
    case TieRule::kMean: rank += 0.5 * static_cast<double>(ties); break;
    case TieRule::kOptimistic: break;
    case TieRule::kPessimistic: rank += static_cast<double>(ties); break;
  }
  return rank;
}

Metrics metrics(std::span<const double> ranks) {
  Metrics m;
  m.count = ranks.size();
  if (ranks.empty()) throw std::invalid_argument("metrics: no ranks");
  for (double r : ranks) {
    if (!(r >= 1.0)) throw std::invalid_argument("metrics: rank below 1");
    m.mrr += 1.0 / r;
    m.hits1 += r <= 1.0 ? 1.0 : 0.0;
    m.hits3 += r <= 3.0 ? 1.0 : 0.0;
    m.hits10 += r <= 10.0 ? 1.0 : 0.0;
  }
  const auto n = static_cast<double>(ranks.size());
  m.mrr /= n;
  m.hits1 /= n;
  m.hits3 /= n;
  m.hits10 /= n;
  return m;
}

Metrics metrics(std::span<const RankResult> results) {
  std::vector<double> ranks;
  ranks.reserve(results.size());
  for (const RankResult& r : results) ranks.push_back(r.rank);
  return metrics(ranks);
}

std::vector<QueryGroup> group_queries(const Snapshot& snapshot) {
  std::map<std::pair<EntityId, RelationId>, std::vector<EntityId>> by_query;
  for (const Quadruple& q : snapshot.facts) by_query[{q.subject, q.relation}].push_back(q.object);
  std::vector<QueryGroup> out;
  out.reserve(by_query.size());
  for (auto& [key, answers] : by_query) {
    std::sort(answers.begin(), answers.end());
    answers.erase(std::unique(answers.begin(), answers.end()), answers.end());
    out.push_back({key.first, key.second, snapshot.timestamp, std::move(answers)});
  }
  return out;
}

namespace {

struct EvalTask {
  QueryGroup group;
  std::size_t graph = 0;
  const Snapshot* truth = nullptr;
  std::size_t out_offset = 0;
};

void rank_task(const Model& model, const HistoryTemporalGraph& g, const EvalTask& task,
               TieRule tie, std::vector<RankResult>& out) {
  const std::vector<double> scores =
      score_all(model, g, {task.group.subject, task.group.relation, task.group.time});
  for (std::size_t i = 0; i < task.group.answers.size(); ++i) {
    const EntityId gold = task.group.answers[i];
    const std::vector<bool> keep = time_aware_filter(task.group.subject, task.group.relation, gold,
                                                     task.truth->facts, g.num_entities());
    RankResult& r = out[task.out_offset + i];
    r.query = {task.group.subject, task.group.relation, gold, task.group.time};
    r.rank = rank_of(scores, gold, keep, tie);
    r.filtered_count =
        static_cast<int>(std::count(keep.begin(), keep.end(), false));
  }
}

}  // namespace

std::vector<RankResult> evaluate(const Model& model, const SnapshotSequence& history,
                                 const SnapshotSequence& target, const EvalConfig& cfg,
                                 std::span<const Quadruple> restrict_to) {
  if (cfg.history_length < 1) throw ConfigError("history_length must be >= 1");
  if (target.num_relations() != model.config().num_relations)
    throw ConfigError("model has " + std::to_string(model.config().num_relations) +
                      " relations, data has " + std::to_string(target.num_relations()));
  const RelationId base = target.num_base_relations();

  std::map<TimeId, std::set<Quadruple>> wanted;
  for (const Quadruple& q : restrict_to) {
    wanted[q.timestamp].insert(q);
    wanted[q.timestamp].insert(
        {q.object, inverse_relation(q.relation, base), q.subject, q.timestamp});
  }

  std::vector<HistoryTemporalGraph> graphs;
  std::vector<EvalTask> tasks;
  std::size_t total = 0;
  for (const Snapshot& snap : target.snapshots()) {
    std::vector<QueryGroup> groups;
    if (restrict_to.empty()) {
      groups = group_queries(snap);
    } else {
      const auto it = wanted.find(snap.timestamp);
      if (it == wanted.end()) continue;
      groups = group_queries(Snapshot{snap.timestamp, {it->second.begin(), it->second.end()}});
    }
    if (groups.empty()) continue;
    const auto window = history_window(history, snap.timestamp, cfg.history_length);
    graphs.push_back(
        HistoryTemporalGraph::build(window, target.num_entities(), snap.timestamp));
    for (QueryGroup& g : groups) {
      const std::size_t n = g.answers.size();
      tasks.push_back({std::move(g), graphs.size() - 1, &snap, total});
      total += n;
    }
  }

  std::vector<RankResult> out(total);
  const long num_tasks = static_cast<long>(tasks.size());
  if (cfg.threads == 1) {
    for (long i = 0; i < num_tasks; ++i) {
      const EvalTask& t = tasks[static_cast<std::size_t>(i)];
      rank_task(model, graphs[t.graph], t, cfg.tie_rule, out);
    }
    return out;
  }
  const int threads = cfg.threads > 0 ? cfg.threads : omp_get_max_threads();
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
  for (long i = 0; i < num_tasks; ++i) {
    try {
      const EvalTask& t = tasks[static_cast<std::size_t>(i)];
      rank_task(model, graphs[t.graph], t, cfg.tie_rule, out);
    } catch (...) {
#pragma omp critical
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  return out;
}

std::vector<double> score_candidates(const Model& model, const SnapshotSequence& history,
                                     EntityId subject, RelationId relation, TimeId time,
                                     int history_length) {
  const auto window = history_window(history, time, history_length);
  const HistoryTemporalGraph g = HistoryTemporalGraph::build(window, history.num_entities(), time);
  return score_all(model, g, {subject, relation, time});
}

void write_metrics_report(std::ostream& os, const Metrics& m, const std::string& label) {
  const std::string prefix = label.empty() ? "" : label + ".";
  os << std::setprecision(6);
  os << prefix << "queries = " << m.count << "\n";
  os << prefix << "mrr = " << m.mrr << "\n";
  os << prefix << "hits@1 = " << m.hits1 << "\n";
  os << prefix << "hits@3 = " << m.hits3 << "\n";
  os << prefix << "hits@10 = " << m.hits10 << "\n";
}

}  // namespace tkgpath

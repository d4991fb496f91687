#include "tkgpath/diagnostics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <random>

namespace tkgpath {

SnapshotSequence random_sequence(std::int32_t num_entities, std::int32_t num_base_relations,
                                 int num_timestamps, int edges_per_snapshot, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::int64_t> ent(0, num_entities - 1);
  std::uniform_int_distribution<std::int64_t> rel(0, num_base_relations - 1);
  std::vector<RawQuadruple> raw;
  for (int t = 0; t < num_timestamps; ++t)
    for (int k = 0; k < edges_per_snapshot; ++k) {
      const std::int64_t s = ent(rng);
      std::int64_t o = ent(rng);
      while (o == s && num_entities > 1) o = ent(rng);
      raw.push_back({s, rel(rng), o, t});
    }
  return build_sequence(raw, num_entities, num_base_relations, {}, "random");
}

GradCheckResult full_model_grad_check(const GradCheckOptions& opts) {
  const SnapshotSequence seq =
      random_sequence(opts.num_entities, opts.num_base_relations, 4, 3, opts.seed);
  ModelConfig mc;
  mc.num_relations = seq.num_relations();
  mc.dim = opts.dim;
  mc.score_hidden = opts.dim;
  mc.prop.omega = opts.omega;
  mc.prop.aggregator = Aggregator::kPna;
  mc.enc.time_sharing = TimeSharing::kPerRelation;
  mc.validate();
  Model model = Model::create(mc, opts.seed);
  // Zero biases put every unreachable row exactly on a relu kink.
  std::mt19937_64 jitter(opts.seed + 2);
  std::normal_distribution<double> noise(0.0, 0.1);
  for (NamedParam& p : model.parameters())
    for (double& v : p.value->values()) v += noise(jitter);

  const Snapshot& target = seq.snapshots().back();
  const auto window = history_window(seq, target.timestamp, 3);
  const HistoryTemporalGraph g =
      HistoryTemporalGraph::build(window, seq.num_entities(), target.timestamp);
  PreparedBatch batch{&g, group_queries(target)};
  if (batch.groups.size() > 2) batch.groups.resize(2);
  std::mt19937_64 rng(opts.seed + 1);
  std::vector<std::vector<std::vector<EntityId>>> negatives;
  for (const QueryGroup& grp : batch.groups) {
    std::vector<std::vector<EntityId>> per;
    for (EntityId o : grp.answers) {
      std::vector<EntityId> objs;
      for (const Quadruple& q : sample_negatives({grp.subject, grp.relation, o, grp.time},
                                                 seq.num_entities(), opts.num_negatives, rng))
        objs.push_back(q.object);
      per.push_back(std::move(objs));
    }
    negatives.push_back(std::move(per));
  }

  TrainConfig tc;
  tc.threads = 1;
  Gradients grads(model);
  GradCheckResult result;
  result.loss = batch_loss(model, batch, negatives, tc, &grads);

  grad::FiniteDiffOptions fd;
  fd.eps = opts.eps;
  fd.tol = opts.tol;
  auto params = model.parameters();
  result.passed = true;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].value->empty()) continue;
    auto f = [&] { return batch_loss(model, batch, negatives, tc, nullptr); };
    BlockCheck bc{params[i].name,
                  grad::finite_diff_compare(f, params[i].value->values(),
                                            grads.blocks()[i].values(), fd)};
    result.passed = result.passed && bc.report.passed;
    result.blocks.push_back(std::move(bc));
  }
  return result;
}

void write_grad_check_report(std::ostream& os, const GradCheckResult& r) {
  os << std::setprecision(4);
  os << "loss = " << r.loss << "\n";
  for (const BlockCheck& b : r.blocks)
    os << (b.report.passed ? "PASS " : "FAIL ") << b.name << "  checked=" << b.report.checked
       << " skipped=" << b.report.skipped.size() << " max_rel_error=" << b.report.max_rel_error
       << "\n";
  os << (r.passed ? "grad-check: PASS" : "grad-check: FAIL") << "\n";
}

LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("fit_line: need at least 2 paired points");
  const auto n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  LinearFit f;
  f.slope = sxx > 0 ? sxy / sxx : 0.0;
  f.intercept = my - f.slope * mx;
  f.r2 = (sxx > 0 && syy > 0) ? (sxy * sxy) / (sxx * syy) : 0.0;
  return f;
}

ScalingResult bench_scaling(const ScalingOptions& opts) {
  if (opts.lengths.size() < 2) throw ConfigError("bench-scaling needs at least two lengths");
  const int max_m = *std::max_element(opts.lengths.begin(), opts.lengths.end());
  const SnapshotSequence seq = random_sequence(opts.num_entities, opts.num_base_relations,
                                               max_m + 1, opts.edges_per_snapshot, opts.seed);
  ModelConfig mc;
  mc.num_relations = seq.num_relations();
  mc.dim = opts.dim;
  mc.score_hidden = opts.dim;
  mc.prop.omega = opts.omega;
  const Model model = Model::create(mc, opts.seed);
  const TimeId qt = seq.snapshots().back().timestamp;
  std::mt19937_64 rng(opts.seed);
  std::uniform_int_distribution<EntityId> ent(0, seq.num_entities() - 1);
  std::uniform_int_distribution<RelationId> rel(0, seq.num_relations() - 1);
  std::vector<PathQuery> queries;
  for (int i = 0; i < opts.queries; ++i) queries.push_back({ent(rng), rel(rng), qt});

  ScalingResult result;
  std::vector<double> xs, ys;
  for (int m : opts.lengths) {
    const auto window = history_window(seq, qt, m);
    const HistoryTemporalGraph g = HistoryTemporalGraph::build(window, seq.num_entities(), qt);
    double best = 0.0;
    for (int rep = 0; rep < std::max(1, opts.repeats); ++rep) {
      const auto t0 = std::chrono::steady_clock::now();
      for (const PathQuery& q : queries) (void)score_all(model, g, q);
      const double sec =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() /
          static_cast<double>(queries.size());
      best = rep == 0 ? sec : std::min(best, sec);
    }
    result.rows.push_back({m, g.num_edges(), opts.omega, best});
    xs.push_back(static_cast<double>(g.num_edges()));
    ys.push_back(best);
  }
  result.fit = fit_line(xs, ys);
  return result;
}

void write_scaling_csv(std::ostream& os, const ScalingResult& r) {
  os << "m,edges,omega,seconds_per_query\n";
  os << std::setprecision(6);
  for (const ScalingRow& row : r.rows)
    os << row.m << ',' << row.edges << ',' << row.omega << ',' << row.seconds_per_query << "\n";
  os << "# slope=" << r.fit.slope << " intercept=" << r.fit.intercept << " r2=" << r.fit.r2
     << "\n";
}

}  // namespace tkgpath

// Serial against OpenMP query-level evaluation on a planted-rule dataset.

#include "tkgpath/evaluation.hpp"
#include "tkgpath/learning.hpp"
#include "tkgpath/synthetic.hpp"

#include <benchmark/benchmark.h>
#include <omp.h>

using namespace tkgpath;

namespace {

struct Fixture {
  SyntheticDataset data;
  SnapshotSequence history;
  Model model;
};

const Fixture& fixture() {
  static const Fixture f = [] {
    SyntheticConfig sc;
    sc.seed = 3;
    Fixture out{gen_planted(sc), {}, {}};
    out.history = out.data.split.merged();
    ModelConfig mc;
    mc.num_relations = out.data.sequence.num_relations();
    mc.dim = 32;
    mc.score_hidden = 32;
    mc.prop.omega = 3;
    out.model = Model::create(mc, 3);
    return out;
  }();
  return f;
}

void run_eval(benchmark::State& state, int threads) {
  const Fixture& f = fixture();
  const EvalConfig cfg{5, threads, TieRule::kMean};
  std::size_t queries = 0;
  for (auto _ : state) {
    const auto ranks = evaluate(f.model, f.history, f.data.split.test, cfg);
    benchmark::DoNotOptimize(ranks.data());
    queries += ranks.size();
  }
  state.counters["queries/s"] =
      benchmark::Counter(static_cast<double>(queries), benchmark::Counter::kIsRate);
}

void BM_EvalSerial(benchmark::State& state) { run_eval(state, 1); }
void BM_EvalParallel(benchmark::State& state) {
  state.counters["threads"] = omp_get_max_threads();
  run_eval(state, 0);
}

void BM_TrainStep(benchmark::State& state) {
  const Fixture& f = fixture();
  const Snapshot& target = f.data.split.train.snapshots().back();
  const auto g = HistoryTemporalGraph::build(history_window(f.data.split.train, target.timestamp, 5),
                                             f.data.sequence.num_entities(), target.timestamp);
  PreparedBatch batch{&g, group_queries(target)};
  if (batch.groups.size() > 8) batch.groups.resize(8);
  std::vector<std::vector<std::vector<EntityId>>> negatives;
  std::mt19937_64 rng(1);
  for (const QueryGroup& grp : batch.groups) {
    std::vector<std::vector<EntityId>> per;
    for (EntityId o : grp.answers) {
      std::vector<EntityId> objs;
      for (const Quadruple& q : sample_negatives({grp.subject, grp.relation, o, grp.time},
                                                 f.data.sequence.num_entities(), 64, rng))
        objs.push_back(q.object);
      per.push_back(std::move(objs));
    }
    negatives.push_back(std::move(per));
  }
  TrainConfig tc;
  tc.threads = static_cast<int>(state.range(0));
  for (auto _ : state) {
    Gradients grads(f.model);
    benchmark::DoNotOptimize(batch_loss(f.model, batch, negatives, tc, &grads));
  }
}

}  // namespace

BENCHMARK(BM_EvalSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EvalParallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TrainStep)->Arg(1)->Arg(0)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();

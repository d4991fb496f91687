// tkgpath: train, evaluate and explain temporal path models.
//
// Configuration precedence (later wins): built-in defaults, preset, config
// file keys, --set key=value, --<key> flags.

#include "tkgpath/config.hpp"
#include "tkgpath/diagnostics.hpp"
#include "tkgpath/evaluation.hpp"
#include "tkgpath/evidence.hpp"
#include "tkgpath/learning.hpp"
#include "tkgpath/synthetic.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

namespace fs = std::filesystem;
using namespace tkgpath;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kInternal = 3 };

struct Manifest {
  fs::path dir;
  std::string command;
  std::vector<std::pair<std::string, std::string>> files;

  void add(const fs::path& p, const std::string& what) {
    files.emplace_back(fs::relative(p, dir).string(), what);
  }
  void write() const {
    std::ofstream out(dir / "manifest.txt");
    out << "command = " << command << "\n";
    for (const auto& [f, what] : files) out << "file = " << f << "  # " << what << "\n";
  }
};

struct Run {
  RunConfig cfg;
  Manifest manifest;
  std::ofstream log;

  fs::path out(const std::string& name) const { return fs::path(cfg.output_dir) / name; }

  void open(const std::string& command) {
    fs::create_directories(cfg.output_dir);
    manifest.dir = cfg.output_dir;
    manifest.command = command;
    std::ofstream c(out("config.txt"));
    write_config(c, cfg);
    manifest.add(out("config.txt"), "resolved configuration");
    log.open(out(command + ".log"));
    log << "# " << command << "\n";
    write_config(log, cfg);
    manifest.add(out(command + ".log"), "run log");
  }
  ~Run() {
    if (!manifest.command.empty()) manifest.write();
  }
};

DatasetSplit require_dataset(const RunConfig& cfg) {
  if (cfg.data_dir.empty()) throw ConfigError("data_dir is not set");
  return load_dataset(cfg.data_dir);
}

fs::path checkpoint_path(const RunConfig& cfg) {
  return cfg.checkpoint.empty() ? fs::path(cfg.output_dir) / "model.ckpt" : fs::path(cfg.checkpoint);
}

Model load_model(const RunConfig& cfg) {
  const fs::path p = checkpoint_path(cfg);
  if (!fs::exists(p)) throw DataError("checkpoint not found: " + p.string());
  return Model::load(p);
}

int cmd_train(Run& run) {
  const DatasetSplit split = require_dataset(run.cfg);
  run.open("train");
  Model model = Model::create(run.cfg.model_config(split.train.num_relations()), run.cfg.seed);
  run.log << "# parameters = " << model.parameter_count() << "\n";
  std::ostringstream epochs;
  const auto t0 = std::chrono::steady_clock::now();
  const TrainResult r = train(split, model, run.cfg.train_config(), &epochs);
  const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  run.log << epochs.str();
  std::cout << epochs.str();
  run.log << "best_epoch = " << r.best_epoch << "\nbest_valid_mrr = " << r.best_valid_mrr
          << "\nskipped_queries = " << r.skipped_queries << "\nseconds = " << sec << "\n";
  std::cout << "best_epoch = " << r.best_epoch << "  best_valid_mrr = " << r.best_valid_mrr
            << "\n";
  const fs::path ckpt = checkpoint_path(run.cfg);
  if (ckpt.has_parent_path()) fs::create_directories(ckpt.parent_path());
  model.save(ckpt);
  if (fs::absolute(ckpt).string().rfind(fs::absolute(run.cfg.output_dir).string(), 0) == 0)
    run.manifest.add(ckpt, "best-validation checkpoint");
  std::cout << "checkpoint written to " << ckpt.string() << "\n";
  return kOk;
}

int cmd_eval(Run& run) {
  const DatasetSplit split = require_dataset(run.cfg);
  const Model model = load_model(run.cfg);
  run.open("eval");
  const SnapshotSequence history = split.merged();
  const SnapshotSequence& target = run.cfg.eval_split == "test"    ? split.test
                                   : run.cfg.eval_split == "valid" ? split.valid
                                                                   : split.train;
  std::vector<Quadruple> restrict_to;
  if (!run.cfg.truth_file.empty()) restrict_to = read_truth_file(run.cfg.truth_file, history);
  const auto ranks = evaluate(model, history, target, run.cfg.eval_config(), restrict_to);
  if (ranks.empty()) throw DataError("no queries to evaluate in split " + run.cfg.eval_split);
  const Metrics m = metrics(ranks);
  std::ofstream mf(run.out("metrics.txt"));
  write_metrics_report(mf, m, run.cfg.eval_split);
  write_metrics_report(run.log, m, run.cfg.eval_split);
  write_metrics_report(std::cout, m, run.cfg.eval_split);
  run.manifest.add(run.out("metrics.txt"), "metrics report");
  std::ofstream rf(run.out("ranks.txt"));
  for (const RankResult& r : ranks)
    rf << r.query.subject << ' ' << r.query.relation << ' ' << r.query.object << ' '
       << history.raw_time(r.query.timestamp) << ' ' << r.rank << '\n';
  run.manifest.add(run.out("ranks.txt"), "per-query ranks: s r o t rank");
  return kOk;
}

int cmd_explain(Run& run) {
  const RunConfig& cfg = run.cfg;
  const DatasetSplit split = require_dataset(cfg);
  const Model model = load_model(cfg);
  const SnapshotSequence history = split.merged();
  if (cfg.query_subject < 0 || cfg.query_relation < 0 || cfg.query_time < 0)
    throw ConfigError("explain needs query_subject, query_relation and query_time");
  if (cfg.query_subject >= history.num_entities() || cfg.query_relation >= history.num_relations())
    throw DataError("query entity or relation out of range");
  const TimeId t = find_time(history, cfg.query_time);
  if (t < 0) throw DataError("query_time " + std::to_string(cfg.query_time) + " not in dataset");
  run.open("explain");
  const PathQuery q{static_cast<EntityId>(cfg.query_subject),
                    static_cast<RelationId>(cfg.query_relation), t};
  const auto window = history_window(history, t, cfg.history_length);
  const HistoryTemporalGraph g = HistoryTemporalGraph::build(window, history.num_entities(), t);
  EntityId pred = static_cast<EntityId>(cfg.prediction);
  if (pred < 0) {
    const auto scores = score_all(model, g, q);
    pred = static_cast<EntityId>(std::max_element(scores.begin(), scores.end()) - scores.begin());
  }
  const EdgeImportance imp = edge_importances(model, g, q, pred);
  PathSearchOptions search = cfg.path_search();
  search.max_length = model.config().prop.omega;
  const auto paths = top_k_paths(g, q, pred, imp, search);
  std::ofstream ef(run.out("evidence.txt"));
  write_evidence_report(ef, g, q, pred, imp, paths, &history, cfg.structured);
  write_evidence_report(std::cout, g, q, pred, imp, paths, &history, cfg.structured);
  run.manifest.add(run.out("evidence.txt"), "evidence report");
  return kOk;
}

int cmd_gen_synth(Run& run) {
  SyntheticConfig sc = run.cfg.synth;
  sc.seed = run.cfg.seed;
  sc.train_frac = run.cfg.train_frac;
  sc.valid_frac = run.cfg.valid_frac;
  const SyntheticDataset ds = gen_planted(sc);
  run.open("gen-synth");
  write_dataset(run.cfg.output_dir, ds.split);
  for (const char* f : {"stat.txt", "train.txt", "valid.txt", "test.txt"})
    run.manifest.add(run.out(f), "dataset");
  write_truth_file(run.out("truth.txt"), ds.truth, ds.sequence);
  run.manifest.add(run.out("truth.txt"), "planted consequences in the test range");
  write_chain_file(run.out("chains.txt"), ds.chains, ds.sequence);
  run.manifest.add(run.out("chains.txt"), "planted chains: x y z tau1 tau2 t");
  std::cout << "facts = " << ds.sequence.num_facts() << "\nsnapshots = "
            << ds.sequence.snapshots().size() << "\ntruth = " << ds.truth.size() << "\n";
  return kOk;
}

void write_side(Run& run, const InductiveSide& side, const std::string& name,
                const std::vector<Quadruple>& truth, const SnapshotSequence& source) {
  const fs::path dir = run.out(name);
  fs::create_directories(dir);
  write_dataset(dir, side.split);
  for (const char* f : {"stat.txt", "train.txt", "valid.txt", "test.txt"})
    run.manifest.add(dir / f, "side " + name + " dataset");
  std::ofstream ids(dir / "entities.txt");
  for (std::size_t i = 0; i < side.global_ids.size(); ++i) ids << i << ' ' << side.global_ids[i] << '\n';
  run.manifest.add(dir / "entities.txt", "local id -> original id");
  if (!truth.empty()) {
    write_truth_file(dir / "truth.txt", localize(truth, source, side), side.sequence);
    run.manifest.add(dir / "truth.txt", "truth queries on this side");
  }
}

int cmd_make_inductive(Run& run) {
  const DatasetSplit split = require_dataset(run.cfg);
  const SnapshotSequence all = split.merged();
  std::vector<Quadruple> truth;
  if (!run.cfg.truth_file.empty()) truth = read_truth_file(run.cfg.truth_file, all);
  const InductivePair pair = make_inductive(all, run.cfg.inductive_ratio, run.cfg.seed,
                                            run.cfg.train_frac, run.cfg.valid_frac);
  run.open("make-inductive");
  write_side(run, pair.a, "A", truth, all);
  write_side(run, pair.b, "B", truth, all);
  std::cout << "A: entities = " << pair.a.global_ids.size() << " facts = "
            << pair.a.sequence.num_facts() << "\nB: entities = " << pair.b.global_ids.size()
            << " facts = " << pair.b.sequence.num_facts() << "\n";
  return kOk;
}

int cmd_grad_check(Run& run) {
  run.open("grad-check");
  const GradCheckResult r = full_model_grad_check(run.cfg.grad_check);
  std::ofstream rf(run.out("grad_check.txt"));
  write_grad_check_report(rf, r);
  write_grad_check_report(run.log, r);
  write_grad_check_report(std::cout, r);
  run.manifest.add(run.out("grad_check.txt"), "gradient check report");
  return r.passed ? kOk : kInternal;
}

int cmd_bench_scaling(Run& run) {
  run.open("bench-scaling");
  ScalingOptions opts = run.cfg.scaling;
  opts.seed = run.cfg.seed;
  const ScalingResult r = bench_scaling(opts);
  std::ofstream cf(run.out("scaling.csv"));
  write_scaling_csv(cf, r);
  write_scaling_csv(std::cout, r);
  write_scaling_csv(run.log, r);
  run.manifest.add(run.out("scaling.csv"), "m, edges, omega, seconds per query");
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Temporal path reasoning over temporal knowledge graphs"};
  app.require_subcommand(1);

  struct Sub {
    CLI::App* app;
    int (*fn)(Run&);
    std::string config_file;
    std::vector<std::string> sets;
    std::map<std::string, std::string> flags;
  };
  const std::vector<std::tuple<std::string, std::string, int (*)(Run&)>> commands = {
      {"train", "train a model and write the best-validation checkpoint", cmd_train},
      {"eval", "time-aware filtered MRR / Hits@k of a checkpoint", cmd_eval},
      {"explain", "top-k evidence paths for one prediction", cmd_explain},
      {"gen-synth", "generate a planted-rule dataset", cmd_gen_synth},
      {"make-inductive", "split a dataset into two entity-disjoint graphs", cmd_make_inductive},
      {"grad-check", "finite-difference check of the full model gradient", cmd_grad_check},
      {"bench-scaling", "per-query time against history length", cmd_bench_scaling},
  };
  std::vector<Sub> subs;
  subs.reserve(commands.size());
  for (const auto& [name, help, fn] : commands) {
    subs.push_back({app.add_subcommand(name, help), fn, {}, {}, {}});
    Sub& s = subs.back();
    s.app->add_option("-c,--config", s.config_file, "config file of key = value lines")
        ->check(CLI::ExistingFile);
    s.app->add_option("--set", s.sets, "key=value override (repeatable)");
    for (const ConfigKey& k : config_keys())
      s.app->add_option("--" + k.name, s.flags[k.name], k.help);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  for (Sub& s : subs) {
    if (!s.app->parsed()) continue;
    try {
      Run run;
      if (!s.config_file.empty()) apply_entries(run.cfg, parse_config_file(s.config_file));
      ConfigEntries overrides;
      for (const std::string& kv : s.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        overrides.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
      }
      for (const ConfigKey& k : config_keys())
        if (s.app->count("--" + k.name) > 0) overrides.emplace_back(k.name, s.flags[k.name]);
      apply_entries(run.cfg, overrides);
      run.cfg.validate();
      return s.fn(run);
    } catch (const ConfigError& e) {
      std::cerr << "config error: " << e.what() << "\n";
      return kUsage;
    } catch (const DataError& e) {
      std::cerr << "data error: " << e.what() << "\n";
      return kData;
    } catch (const std::invalid_argument& e) {
      std::cerr << "invalid argument: " << e.what() << "\n";
      return kUsage;
    } catch (const std::exception& e) {
      std::cerr << "internal error: " << e.what() << "\n";
      return kInternal;
    }
  }
  return kUsage;
}

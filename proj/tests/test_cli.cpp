#include "doctest.h"
#include "support.hpp"

#include "tkgpath/evaluation.hpp"
#include "tkgpath/model.hpp"
#include "tkgpath/tkg_core.hpp"

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <map>
#include <sstream>

using namespace tkgpath;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

Result run(const testing::TempDir& dir, const std::string& args) {
  const fs::path out = dir / "stdout.txt";
  const fs::path err = dir / "stderr.txt";
  const std::string cmd = std::string(TKGPATH_CLI) + " " + args + " > " + out.string() + " 2> " +
                          err.string();
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = testing::read_text(out);
  r.err = testing::read_text(err);
  return r;
}

const std::string kSynth =
    " --synth_entities 10 --synth_timestamps 20 --synth_chains 10 --synth_noise_relations 1"
    " --synth_noise_rate 1";
const std::string kModel =
    " --dim 8 --omega 2 --history_length 3 --n_negatives 4 --max_epochs 1 --threads 1";

std::string in(const testing::TempDir& d, const std::string& name) {
  return (d / name).string();
}

}  // namespace

TEST_CASE("usage errors exit with 1") {
  testing::TempDir d("cli_usage");
  CHECK(run(d, "").code == 1);
  CHECK(run(d, "frobnicate").code == 1);
  CHECK(run(d, "--help").code == 0);
  CHECK(run(d, "train --help").code == 0);

  const Result unknown = run(d, "gen-synth --set dimm=3 --output_dir " + in(d, "x"));
  CHECK(unknown.code == 1);
  CHECK(unknown.err.find("unknown config key 'dimm'") != std::string::npos);
  CHECK(unknown.err.find(" omega") != std::string::npos);

  CHECK(run(d, "train").code == 1);  // no data_dir
  CHECK(run(d, "gen-synth --dim abc").code == 1);
  CHECK(run(d, "gen-synth --synth_entities 3 --output_dir " + in(d, "y")).code == 1);
  CHECK(run(d, "train -c " + in(d, "missing.cfg")).code == 1);
}

TEST_CASE("data errors exit with 2") {
  testing::TempDir d("cli_data");
  CHECK(run(d, "train --data_dir " + in(d, "nowhere")).code == 2);
  const Result gen = run(d, "gen-synth --output_dir " + in(d, "data") + kSynth);
  REQUIRE(gen.code == 0);
  const Result no_ckpt = run(d, "eval --data_dir " + in(d, "data") + " --output_dir " +
                                    in(d, "none"));
  CHECK(no_ckpt.code == 2);
  CHECK(no_ckpt.err.find("checkpoint") != std::string::npos);
  testing::write_text(d / "data" / "train.txt", "0 0 1 0\n99 0 1 1\n");
  CHECK(run(d, "train --data_dir " + in(d, "data") + kModel).code == 2);
}

TEST_CASE("generate, train, evaluate and explain") {
  testing::TempDir d("cli_flow");
  const std::string data = in(d, "data");
  const Result gen = run(d, "gen-synth --seed 1 --output_dir " + data + kSynth);
  REQUIRE(gen.code == 0);
  for (const char* f : {"stat.txt", "train.txt", "valid.txt", "test.txt", "truth.txt",
                        "chains.txt", "manifest.txt", "config.txt"})
    CHECK(fs::exists(d / "data" / f));
  CHECK(gen.out.find("truth = ") != std::string::npos);

  const std::string runs = in(d, "run");
  const Result tr = run(d, "train --data_dir " + data + " --output_dir " + runs + kModel);
  REQUIRE(tr.code == 0);
  CHECK(fs::exists(d / "run" / "model.ckpt"));
  CHECK(tr.out.find("epoch 0") != std::string::npos);
  CHECK(testing::read_text(d / "run" / "manifest.txt").find("model.ckpt") != std::string::npos);

  const Result ev = run(d, "eval --data_dir " + data + " --output_dir " + runs + kModel);
  REQUIRE(ev.code == 0);
  CHECK(ev.out.find("test.mrr") != std::string::npos);
  CHECK(fs::exists(d / "run" / "metrics.txt"));
  CHECK(fs::exists(d / "run" / "ranks.txt"));

  const Result truth = run(d, "eval --data_dir " + data + " --output_dir " + runs +
                                  " --truth_file " + in(d, "data/truth.txt") + kModel);
  CHECK(truth.code == 0);

  std::istringstream tl(testing::read_text(d / "data" / "truth.txt"));
  std::int64_t s, r, o, t;
  REQUIRE(static_cast<bool>(tl >> s >> r >> o >> t));
  const std::string q = " --query_subject " + std::to_string(s) + " --query_relation " +
                        std::to_string(r) + " --query_time " + std::to_string(t);
  const Result ex = run(d, "explain --data_dir " + data + " --output_dir " + runs + kModel + q);
  REQUIRE(ex.code == 0);
  CHECK(ex.out.find("prediction=") != std::string::npos);
  CHECK(fs::exists(d / "run" / "evidence.txt"));
  const Result st = run(d, "explain --data_dir " + data + " --output_dir " + runs + kModel + q +
                               " --prediction " + std::to_string(o) + " --structured true");
  CHECK(st.code == 0);
  CHECK(st.out.find("prediction=" + std::to_string(o)) != std::string::npos);

  CHECK(run(d, "explain --data_dir " + data + " --output_dir " + runs + kModel).code == 1);
  CHECK(run(d, "explain --data_dir " + data + " --output_dir " + runs + kModel +
               " --query_subject 0 --query_relation 0 --query_time 99999")
            .code == 2);

  const Result ind = run(d, "make-inductive --data_dir " + data + " --output_dir " +
                                in(d, "ind") + " --truth_file " + in(d, "data/truth.txt"));
  CHECK(ind.code == 0);
  CHECK(fs::exists(d / "ind" / "A" / "train.txt"));
  CHECK(fs::exists(d / "ind" / "B" / "entities.txt"));
}

TEST_CASE("a constant scorer ranks every query in the middle of its kept candidates") {
  testing::TempDir d("cli_zero");
  const std::string data = in(d, "data");
  REQUIRE(run(d, "gen-synth --seed 2 --output_dir " + data + kSynth).code == 0);
  REQUIRE(run(d, "train --max_epochs 0 --data_dir " + data + " --output_dir " + in(d, "run") +
                 " --dim 8 --omega 2")
              .code == 0);
  Model m = Model::load(d / "run" / "model.ckpt");
  for (Matrix* p : {&m.head.W1, &m.head.b1, &m.head.W2, &m.head.b2})
    for (double& v : p->values()) v = 0.0;
  m.save(d / "run" / "model.ckpt");
  const Result ev = run(d, "eval --data_dir " + data + " --output_dir " + in(d, "run") +
                               " --dim 8 --omega 2 --threads 1");
  REQUIRE(ev.code == 0);

  const DatasetSplit split = load_dataset(data);
  const std::int32_t n = split.test.num_entities();
  std::map<std::tuple<EntityId, RelationId, std::int64_t>, int> answers;
  for (const Quadruple& f : split.test.all_facts())
    ++answers[{f.subject, f.relation, split.test.raw_time(f.timestamp)}];
  std::istringstream ranks(testing::read_text(d / "run" / "ranks.txt"));
  std::int64_t s, r, o, t;
  double rank;
  std::size_t count = 0;
  double rr = 0.0;
  while (ranks >> s >> r >> o >> t >> rank) {
    const int kept = n - (answers[{static_cast<EntityId>(s), static_cast<RelationId>(r), t}] - 1);
    CHECK(rank == doctest::Approx((kept + 1) / 2.0));
    rr += 1.0 / rank;
    ++count;
  }
  CHECK(count == split.test.num_facts());
  const std::string metrics = testing::read_text(d / "run" / "metrics.txt");
  const auto at = metrics.find("test.mrr = ");
  REQUIRE(at != std::string::npos);
  const double mrr = std::stod(metrics.substr(at + 11));
  CHECK(mrr == doctest::Approx(rr / static_cast<double>(count)).epsilon(1e-5));
}

TEST_CASE("config files and flag precedence") {
  testing::TempDir d("cli_cfg");
  testing::write_text(d / "synth.cfg", "# small\nsynth_entities = 12\nsynth_timestamps = 20\n"
                                       "synth_chains = 4\nsynth_noise_relations = 1\n");
  const Result a = run(d, "gen-synth -c " + in(d, "synth.cfg") + " --output_dir " + in(d, "a") +
                              " --synth_entities 14");
  REQUIRE(a.code == 0);
  CHECK(testing::read_text(d / "a" / "stat.txt").rfind("14", 0) == 0);
  const std::string cfg = testing::read_text(d / "a" / "config.txt");
  CHECK(cfg.find("synth_entities = 14") != std::string::npos);
  CHECK(cfg.find("synth_chains = 4") != std::string::npos);

  const Result b = run(d, "gen-synth -c " + in(d, "synth.cfg") + " --output_dir " + in(d, "b") +
                              " --set synth_entities=13");
  REQUIRE(b.code == 0);
  CHECK(testing::read_text(d / "b" / "stat.txt").rfind("13", 0) == 0);
}

TEST_CASE("self checks") {
  testing::TempDir d("cli_self");
  const Result gc = run(d, "grad-check --output_dir " + in(d, "gc"));
  CHECK(gc.code == 0);
  CHECK(gc.out.find("grad-check: PASS") != std::string::npos);
  CHECK(fs::exists(d / "gc" / "grad_check.txt"));

  const Result bs = run(d, "bench-scaling --output_dir " + in(d, "bs") +
                               " --bench_lengths 1,2 --bench_entities 20"
                               " --bench_edges_per_snapshot 20 --bench_dim 4 --bench_omega 2"
                               " --bench_queries 2 --bench_repeats 1");
  CHECK(bs.code == 0);
  const std::string csv = testing::read_text(d / "bs" / "scaling.csv");
  CHECK(csv.rfind("m,edges,omega,seconds_per_query", 0) == 0);
  CHECK(csv.find("r2=") != std::string::npos);
  CHECK(run(d, "bench-scaling --bench_lengths 3 --output_dir " + in(d, "bs2")).code == 1);
}

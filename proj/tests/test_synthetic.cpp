#include "doctest.h"
#include "support.hpp"

#include "tkgpath/synthetic.hpp"

#include <algorithm>
#include <set>
#include <sstream>

using namespace tkgpath;

namespace {

SyntheticConfig base_config(std::uint64_t seed) {
  SyntheticConfig sc;
  sc.num_entities = 20;
  sc.num_timestamps = 30;
  sc.num_chains = 15;
  sc.num_noise_relations = 2;
  sc.noise_rate = 1.0;
  sc.seed = seed;
  return sc;
}

std::set<RelationId> base_relations(const SnapshotSequence& seq) {
  std::set<RelationId> out;
  for (const Quadruple& q : seq.all_facts())
    if (q.relation < seq.num_base_relations()) out.insert(q.relation);
  return out;
}

}  // namespace

TEST_CASE("one chain without noise yields exactly the rule's three facts") {
  SyntheticConfig sc = base_config(3);
  sc.num_chains = 1;
  sc.noise_rate = 0.0;
  const SyntheticDataset ds = gen_planted(sc);
  REQUIRE(ds.chains.size() == 1);
  const PlantedChain& c = ds.chains[0];
  std::vector<Quadruple> base;
  for (const Quadruple& q : ds.sequence.all_facts())
    if (q.relation < ds.sequence.num_base_relations()) base.push_back(q);
  REQUIRE(base.size() == 3);
  CHECK(ds.sequence.num_facts() == 6);
  int heads = 0;
  for (const Quadruple& q : base) {
    if (q.relation == sc.rule.head) {
      ++heads;
      CHECK(q == c.consequence);
    }
  }
  CHECK(heads == 1);
  CHECK(c.tau1 < c.tau2);
  CHECK(ds.sequence.raw_time(c.consequence.timestamp) == ds.sequence.raw_time(c.tau2) + 1);
  CHECK(ds.sequence.raw_time(c.tau2) - ds.sequence.raw_time(c.tau1) <= sc.rule.max_gap);
  CHECK(c.x != c.y);
  CHECK(c.x != c.z);
  CHECK(c.y != c.z);
}

TEST_CASE("chains follow the rule's body") {
  const SyntheticDataset ds = gen_planted(base_config(1));
  const SnapshotSequence& seq = ds.sequence;
  CHECK(ds.chains.size() == 15);
  for (const PlantedChain& c : ds.chains) {
    const Snapshot* s1 = seq.find(c.tau1);
    const Snapshot* s2 = seq.find(c.tau2);
    REQUIRE(s1 != nullptr);
    REQUIRE(s2 != nullptr);
    const Quadruple first{c.x, ds.config.rule.body_first, c.y, c.tau1};
    const Quadruple second{c.y, ds.config.rule.body_second, c.z, c.tau2};
    CHECK(std::find(s1->facts.begin(), s1->facts.end(), first) != s1->facts.end());
    CHECK(std::find(s2->facts.begin(), s2->facts.end(), second) != s2->facts.end());
    const Quadruple inverse{c.z, inverse_relation(ds.config.rule.head, seq.num_base_relations()),
                            c.x, c.consequence.timestamp};
    const Snapshot* s3 = seq.find(c.consequence.timestamp);
    REQUIRE(s3 != nullptr);
    CHECK(std::find(s3->facts.begin(), s3->facts.end(), inverse) != s3->facts.end());
  }
}

TEST_CASE("truth queries are test consequences reachable in two hops") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const SyntheticDataset ds = gen_planted(base_config(seed));
    const SnapshotSequence& seq = ds.sequence;
    for (const Quadruple& q : ds.truth) {
      CHECK(ds.split.test.find(q.timestamp) != nullptr);
      CHECK(q.relation == ds.config.rule.head);
      const auto g = HistoryTemporalGraph::build(
          history_window(seq, q.timestamp, ds.config.window), seq.num_entities(), q.timestamp);
      bool two_hop = false;
      for (const TemporalEdge& a : g.edges())
        if (a.src == q.subject)
          for (const TemporalEdge& b : g.edges())
            two_hop = two_hop || (b.src == a.dst && b.dst == q.object);
      CHECK(two_hop);
    }
  }
}

TEST_CASE("noise uses only noise relations at the configured rate") {
  SyntheticConfig sc = base_config(4);
  sc.num_chains = 0;
  sc.noise_rate = 2.0;
  const SyntheticDataset ds = gen_planted(sc);
  const std::size_t per_step = 20 * 2 / 5;
  std::size_t base = 0;
  for (const Quadruple& q : ds.sequence.all_facts()) {
    if (q.relation >= ds.sequence.num_base_relations()) continue;
    ++base;
    CHECK(q.relation >= 3);
    CHECK(q.subject != q.object);
  }
  CHECK(base <= per_step * 30);
  CHECK(base > per_step * 30 * 9 / 10);
  CHECK(ds.truth.empty());
}

TEST_CASE("generation is deterministic per seed") {
  const SyntheticDataset a = gen_planted(base_config(6));
  const SyntheticDataset b = gen_planted(base_config(6));
  const SyntheticDataset c = gen_planted(base_config(7));
  CHECK(a.sequence.all_facts() == b.sequence.all_facts());
  CHECK(a.truth == b.truth);
  CHECK(a.sequence.all_facts() != c.sequence.all_facts());
}

TEST_CASE("infeasible generator settings are rejected") {
  auto rejects = [](auto mutate) {
    SyntheticConfig sc = base_config(0);
    mutate(sc);
    CHECK_THROWS_AS(gen_planted(sc), std::invalid_argument);
  };
  rejects([](SyntheticConfig& s) { s.num_entities = 5; });
  rejects([](SyntheticConfig& s) { s.num_timestamps = 3; });
  rejects([](SyntheticConfig& s) { s.num_chains = -1; });
  rejects([](SyntheticConfig& s) { s.num_noise_relations = 0; });
  rejects([](SyntheticConfig& s) { s.noise_rate = -1; });
  rejects([](SyntheticConfig& s) { s.noise_rate = 1000; });
  rejects([](SyntheticConfig& s) { s.rule.head = s.rule.body_first; });
  rejects([](SyntheticConfig& s) { s.rule.head = 99; });
  rejects([](SyntheticConfig& s) { s.rule.max_gap = 0; });
  rejects([](SyntheticConfig& s) { s.rule.max_gap = 5; });
}

TEST_CASE("truth and chain files round-trip through raw timestamps") {
  const SyntheticDataset ds = gen_planted(base_config(2));
  REQUIRE(!ds.truth.empty());
  testing::TempDir dir("synth");
  write_truth_file(dir / "truth.txt", ds.truth, ds.sequence);
  CHECK(read_truth_file(dir / "truth.txt", ds.sequence) == ds.truth);

  write_chain_file(dir / "chains.txt", ds.chains, ds.sequence);
  std::istringstream in(testing::read_text(dir / "chains.txt"));
  std::size_t n = 0;
  std::int64_t x, y, z, t1, t2, t;
  while (in >> x >> y >> z >> t1 >> t2 >> t) {
    const PlantedChain& c = ds.chains[n++];
    CHECK(x == c.x);
    CHECK(z == c.z);
    CHECK(t == t2 + 1);
    CHECK(t1 < t2);
  }
  CHECK(n == ds.chains.size());

  testing::write_text(dir / "bad.txt", "0 2 1 99999\n");
  CHECK_THROWS_AS(read_truth_file(dir / "bad.txt", ds.sequence), DataError);
  testing::write_text(dir / "bad2.txt",
                      "0 2 500 " + std::to_string(ds.sequence.raw_time(0)) + "\n");
  CHECK_THROWS_AS(read_truth_file(dir / "bad2.txt", ds.sequence), DataError);
}

TEST_CASE("inductive pair has disjoint entities and equal relation sets") {
  const SyntheticDataset ds = gen_planted(base_config(5));
  for (double ratio : {0.3, 0.5, 0.7}) {
    const InductivePair p = make_inductive(ds.sequence, ratio, 11);
    std::set<EntityId> ga(p.a.global_ids.begin(), p.a.global_ids.end());
    for (EntityId e : p.b.global_ids) CHECK(ga.count(e) == 0);
    CHECK(p.a.global_ids.size() + p.b.global_ids.size() ==
          static_cast<std::size_t>(ds.sequence.num_entities()));
    CHECK(p.a.sequence.num_entities() == static_cast<std::int32_t>(p.a.global_ids.size()));
    if (ratio != 0.5) CHECK(p.a.sequence.num_entities() != p.b.sequence.num_entities());
    CHECK(base_relations(p.a.sequence) == base_relations(p.b.sequence));
    CHECK(p.a.sequence.num_relations() == ds.sequence.num_relations());

    for (const InductiveSide* s : {&p.a, &p.b})
      for (const Quadruple& q : s->sequence.all_facts()) {
        CHECK(q.subject < s->sequence.num_entities());
        CHECK(q.object < s->sequence.num_entities());
        const EntityId gs = s->global_ids[static_cast<std::size_t>(q.subject)];
        CHECK(s->local_ids[static_cast<std::size_t>(gs)] == q.subject);
      }
  }
}

TEST_CASE("localize maps facts onto one side") {
  const SyntheticDataset ds = gen_planted(base_config(5));
  const InductivePair p = make_inductive(ds.sequence, 0.5, 11);
  const std::vector<Quadruple> facts = ds.sequence.all_facts();
  const std::vector<Quadruple> local = localize(facts, ds.sequence, p.a);
  CHECK(!local.empty());
  for (const Quadruple& q : local) {
    CHECK(q.subject < p.a.sequence.num_entities());
    CHECK(q.object < p.a.sequence.num_entities());
  }
  std::size_t both = 0;
  for (const Quadruple& q : facts)
    if (p.a.local_ids[static_cast<std::size_t>(q.subject)] >= 0 &&
        p.a.local_ids[static_cast<std::size_t>(q.object)] >= 0 &&
        find_time(p.a.sequence, ds.sequence.raw_time(q.timestamp)) >= 0)
      ++both;
  CHECK(local.size() == both);
}

TEST_CASE("inductive split errors") {
  const SyntheticDataset ds = gen_planted(base_config(5));
  CHECK_THROWS_AS(make_inductive(ds.sequence, 0.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(make_inductive(ds.sequence, 1.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(make_inductive(ds.sequence, 0.01, 1), DataError);
}

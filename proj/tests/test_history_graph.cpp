#include "doctest.h"
#include "support.hpp"

#include "tkgpath/history_graph.hpp"

#include <sstream>

using namespace tkgpath;

namespace {

SnapshotSequence three_snapshots() {
  return build_sequence({{0, 0, 1, 0}, {1, 1, 2, 0}, {2, 0, 3, 1}, {0, 0, 1, 1}, {3, 1, 0, 2}},
                        4, 2);
}

}  // namespace

TEST_CASE("the union keeps every edge with its time label") {
  const SnapshotSequence seq = three_snapshots();
  const auto window = history_window(seq, 3, 3);
  REQUIRE(window.size() == 3);
  const HistoryTemporalGraph g = HistoryTemporalGraph::build(window, 4, 3);
  std::size_t expected = 0;
  for (const Snapshot* s : window) expected += s->facts.size();
  CHECK(g.num_edges() == expected);
  CHECK(g.window_start() == 0);
  CHECK(g.window_end() == 2);
  std::size_t i = 0;
  for (const Snapshot* s : window)
    for (const Quadruple& q : s->facts) {
      const TemporalEdge want{q.subject, q.relation, q.object, s->timestamp};
      CHECK(g.edges()[i++] == want);
    }
}

TEST_CASE("the same fact at two timestamps stays two edges") {
  const SnapshotSequence seq = build_sequence({{0, 0, 1, 1}, {0, 0, 1, 2}}, 2, 1);
  const HistoryTemporalGraph g = HistoryTemporalGraph::build(history_window(seq, 5, 5), 2, 5);
  const auto in1 = g.in_edges(1);
  REQUIRE(in1.size() == 2);
  CHECK(in1[0].tau != in1[1].tau);
}

TEST_CASE("empty history gives an empty graph") {
  const HistoryTemporalGraph g = HistoryTemporalGraph::build({}, 3, 0);
  CHECK(g.num_edges() == 0);
  CHECK(g.in_edges(2).empty());
}

TEST_CASE("in_edges follows insertion order") {
  const HistoryTemporalGraph g =
      HistoryTemporalGraph::from_edges({{0, 0, 1, 0}, {2, 1, 1, 1}}, 3, 2);
  const auto in1 = g.in_edges(1);
  REQUIRE(in1.size() == 2);
  CHECK(in1[0] == TemporalEdge{0, 0, 1, 0});
  CHECK(in1[1] == TemporalEdge{2, 1, 1, 1});
  CHECK(g.in_edges(0).empty());
  CHECK_THROWS_AS(g.in_edges(3), std::out_of_range);
  CHECK_THROWS_AS(g.in_edges(-1), std::out_of_range);
}

TEST_CASE("in_edges matches a naive filter under shuffled insertion") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const HistoryTemporalGraph g = testing::random_graph(7, 4, 40, 6, seed);
    std::vector<TemporalEdge> shuffled = g.edges();
    std::mt19937_64 rng(seed);
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const HistoryTemporalGraph h = HistoryTemporalGraph::from_edges(shuffled, 7, 6);
    for (EntityId v = 0; v < 7; ++v) {
      std::vector<TemporalEdge> naive;
      for (const TemporalEdge& e : shuffled)
        if (e.dst == v) naive.push_back(e);
      CHECK(h.in_edges(v) == naive);
      for (int id : h.in_edge_ids(v)) CHECK(h.edges()[static_cast<std::size_t>(id)].dst == v);
    }
  }
}

TEST_CASE("every edge sits in exactly its destination bucket") {
  const HistoryTemporalGraph g = testing::random_graph(8, 3, 60, 9, 4);
  std::vector<int> seen(g.num_edges(), 0);
  for (EntityId v = 0; v < g.num_entities(); ++v)
    for (int id : g.in_edge_ids(v)) ++seen[static_cast<std::size_t>(id)];
  for (int c : seen) CHECK(c == 1);
  for (std::size_t i = 0; i < g.num_edges(); ++i) {
    CHECK(g.src_index()[i] == g.edges()[i].src);
    CHECK(g.dst_index()[i] == g.edges()[i].dst);
    CHECK(g.edges()[i].tau < g.query_time());
  }
}

TEST_CASE("builds are deterministic") {
  const SnapshotSequence seq = three_snapshots();
  const auto w = history_window(seq, 3, 2);
  const HistoryTemporalGraph a = HistoryTemporalGraph::build(w, 4, 3);
  const HistoryTemporalGraph b = HistoryTemporalGraph::build(w, 4, 3);
  CHECK(a.edges() == b.edges());
}

TEST_CASE("invalid inputs are rejected") {
  const SnapshotSequence seq = three_snapshots();
  const auto w = history_window(seq, 3, 3);
  CHECK_THROWS_AS(HistoryTemporalGraph::build(w, 4, 2), ValidationError);
  CHECK_THROWS_AS(HistoryTemporalGraph::build(w, 3, 3), ValidationError);
  CHECK_THROWS_AS(HistoryTemporalGraph::from_edges({{0, 0, 1, 4}}, 2, 4), ValidationError);
}

TEST_CASE("debug dump writes one line per edge") {
  const HistoryTemporalGraph g =
      HistoryTemporalGraph::from_edges({{0, 0, 1, 0}, {2, 1, 1, 1}}, 3, 2);
  std::ostringstream os;
  g.dump(os);
  CHECK(os.str() == "0 0 1 0\n2 1 1 1\n");
}

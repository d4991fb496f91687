#include "tkgpath/synthetic.hpp"

#include "tkgpath/history_graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

namespace tkgpath {

void PlantedRule::validate(RelationId num_base_relations) const {
  const RelationId rels[3] = {body_first, body_second, head};
  for (RelationId r : rels)
    if (r < 0 || r >= num_base_relations)
      throw std::invalid_argument("planted rule relation " + std::to_string(r) +
                                  " is not a base relation");
  if (body_first == body_second || body_first == head || body_second == head)
    throw std::invalid_argument("planted rule relations must be distinct");
  if (max_gap < 1) throw std::invalid_argument("planted rule max_gap must be >= 1");
}

void SyntheticConfig::validate() const {
  if (num_entities < 6) throw std::invalid_argument("synthetic: num_entities must be >= 6");
  if (num_timestamps < 5) throw std::invalid_argument("synthetic: num_timestamps must be >= 5");
  if (num_chains < 0) throw std::invalid_argument("synthetic: num_chains must be >= 0");
  if (num_noise_relations < 0)
    throw std::invalid_argument("synthetic: num_noise_relations must be >= 0");
  if (!(noise_rate >= 0)) throw std::invalid_argument("synthetic: noise_rate must be >= 0");
  if (noise_rate > 0 && num_noise_relations == 0)
    throw std::invalid_argument("synthetic: noise_rate > 0 needs at least one noise relation");
  if (window < 1) throw std::invalid_argument("synthetic: window must be >= 1");
  rule.validate(num_base_relations());
  if (rule.max_gap + 1 > window)
    throw std::invalid_argument("synthetic: max_gap + 1 = " + std::to_string(rule.max_gap + 1) +
                                " exceeds the window " + std::to_string(window) +
                                "; consequences would not be answerable");
  if (rule.max_gap + 1 > num_timestamps - 1)
    throw std::invalid_argument("synthetic: too few timestamps for the rule's max_gap");
  const double per_step = noise_rate * num_entities / window;
  const double pairs = static_cast<double>(num_entities) * (num_entities - 1) *
                       std::max(1, num_noise_relations);
  if (per_step > 0.5 * pairs)
    throw std::invalid_argument("synthetic: noise_rate too high for the entity count");
}

TimeId find_time(const SnapshotSequence& seq, std::int64_t raw) {
  const auto& axis = seq.raw_times();
  if (axis.empty()) {
    if (raw < 0 || raw > INT32_MAX) return -1;
    return seq.find(static_cast<TimeId>(raw)) != nullptr ? static_cast<TimeId>(raw) : -1;
  }
  const auto it = std::lower_bound(axis.begin(), axis.end(), raw);
  if (it == axis.end() || *it != raw) return -1;
  return static_cast<TimeId>(it - axis.begin());
}

namespace {

bool reachable_within(const HistoryTemporalGraph& g, EntityId from, EntityId to, int hops) {
  std::vector<int> dist(static_cast<std::size_t>(g.num_entities()), -1);
  std::vector<EntityId> frontier = {from};
  dist[static_cast<std::size_t>(from)] = 0;
  for (int h = 1; h <= hops; ++h) {
    std::vector<EntityId> next;
    for (const TemporalEdge& e : g.edges())
      if (dist[static_cast<std::size_t>(e.src)] == h - 1 && dist[static_cast<std::size_t>(e.dst)] < 0) {
        dist[static_cast<std::size_t>(e.dst)] = h;
        next.push_back(e.dst);
      }
    frontier.swap(next);
  }
  return dist[static_cast<std::size_t>(to)] >= 0;
}

}  // namespace

SyntheticDataset gen_planted(const SyntheticConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  const PlantedRule& rule = cfg.rule;
  std::uniform_int_distribution<EntityId> pick_entity(0, cfg.num_entities - 1);
  std::uniform_int_distribution<int> pick_gap(1, rule.max_gap);
  std::uniform_int_distribution<int> pick_ct(rule.max_gap + 1, cfg.num_timestamps - 1);

  struct RawChain {
    EntityId x, y, z;
    int tau1, tau2;
  };
  std::vector<RawChain> raw_chains;
  std::vector<RawQuadruple> facts;
  for (int i = 0; i < cfg.num_chains; ++i) {
    const int ct = pick_ct(rng);
    const int tau2 = ct - 1;
    const int tau1 = tau2 - pick_gap(rng);
    EntityId x = pick_entity(rng), y = pick_entity(rng), z = pick_entity(rng);
    while (y == x) y = pick_entity(rng);
    while (z == x || z == y) z = pick_entity(rng);
    raw_chains.push_back({x, y, z, tau1, tau2});
    facts.push_back({x, rule.body_first, y, tau1});
    facts.push_back({y, rule.body_second, z, tau2});
    facts.push_back({x, rule.head, z, ct});
  }

  const auto per_step =
      static_cast<int>(std::lround(cfg.noise_rate * cfg.num_entities / cfg.window));
  if (per_step > 0) {
    std::uniform_int_distribution<RelationId> pick_noise(3, 3 + cfg.num_noise_relations - 1);
    for (int t = 0; t < cfg.num_timestamps; ++t) {
      for (int k = 0; k < per_step; ++k) {
        const EntityId s = pick_entity(rng);
        EntityId o = pick_entity(rng);
        while (o == s) o = pick_entity(rng);
        facts.push_back({s, pick_noise(rng), o, t});
      }
    }
  }

  SyntheticDataset out;
  out.config = cfg;
  out.sequence = build_sequence(facts, cfg.num_entities, cfg.num_base_relations(), {}, "synthetic");
  out.split = split_by_time(out.sequence, cfg.train_frac, cfg.valid_frac);

  const SnapshotSequence& seq = out.sequence;
  for (const RawChain& c : raw_chains) {
    PlantedChain pc;
    pc.x = c.x;
    pc.y = c.y;
    pc.z = c.z;
    pc.tau1 = find_time(seq, c.tau1);
    pc.tau2 = find_time(seq, c.tau2);
    pc.consequence = {c.x, rule.head, c.z, find_time(seq, c.tau2 + 1)};
    out.chains.push_back(pc);
  }

  std::set<Quadruple> truth;
  const SnapshotSequence& test = out.split.test;
  for (const PlantedChain& c : out.chains)
    if (test.find(c.consequence.timestamp) != nullptr) truth.insert(c.consequence);
  out.truth.assign(truth.begin(), truth.end());

  for (const Quadruple& q : out.truth) {
    const auto window = history_window(seq, q.timestamp, cfg.window);
    const auto g = HistoryTemporalGraph::build(window, seq.num_entities(), q.timestamp);
    if (!reachable_within(g, q.subject, q.object, 2))
      throw std::logic_error("synthetic: planted consequence not reachable within 2 hops");
  }
  return out;
}

void write_truth_file(const std::filesystem::path& path, const std::vector<Quadruple>& truth,
                      const SnapshotSequence& seq) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const Quadruple& q : truth)
    out << q.subject << ' ' << q.relation << ' ' << q.object << ' ' << seq.raw_time(q.timestamp)
        << '\n';
}

std::vector<Quadruple> read_truth_file(const std::filesystem::path& path,
                                       const SnapshotSequence& seq) {
  std::vector<Quadruple> out;
  std::size_t line = 0;
  for (const RawQuadruple& r : parse_quadruple_file(path)) {
    ++line;
    const TimeId t = find_time(seq, r.timestamp);
    if (t < 0)
      throw DataError(path.string() + ": timestamp " + std::to_string(r.timestamp) +
                      " does not occur in the dataset");
    if (r.subject < 0 || r.subject >= seq.num_entities() || r.object < 0 ||
        r.object >= seq.num_entities() || r.relation < 0 || r.relation >= seq.num_relations())
      throw DataError(path.string() + ": query " + std::to_string(line) + " is out of range");
    out.push_back({static_cast<EntityId>(r.subject), static_cast<RelationId>(r.relation),
                   static_cast<EntityId>(r.object), t});
  }
  return out;
}

void write_chain_file(const std::filesystem::path& path, const std::vector<PlantedChain>& chains,
                      const SnapshotSequence& seq) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const PlantedChain& c : chains)
    out << c.x << ' ' << c.y << ' ' << c.z << ' ' << seq.raw_time(c.tau1) << ' '
        << seq.raw_time(c.tau2) << ' ' << seq.raw_time(c.consequence.timestamp) << '\n';
}

InductivePair make_inductive(const SnapshotSequence& seq, double ratio, std::uint64_t seed,
                             double train_frac, double valid_frac) {
  if (!(ratio > 0.0 && ratio < 1.0))
    throw std::invalid_argument("make_inductive: ratio must be in (0, 1)");
  const std::int32_t n = seq.num_entities();
  const RelationId base = seq.num_base_relations();
  std::vector<EntityId> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto n_a = static_cast<std::size_t>(std::lround(ratio * n));
  if (n_a == 0 || n_a >= perm.size())
    throw DataError("make_inductive: ratio " + std::to_string(ratio) +
                    " leaves one side without entities; try another ratio");
  std::vector<int> side(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < perm.size(); ++i) side[static_cast<std::size_t>(perm[i])] = i < n_a ? 0 : 1;

  std::vector<Quadruple> kept[2];
  std::set<RelationId> rels[2];
  for (const Quadruple& q : seq.all_facts()) {
    if (q.relation >= base) continue;
    const int sa = side[static_cast<std::size_t>(q.subject)];
    if (sa != side[static_cast<std::size_t>(q.object)]) continue;
    kept[sa].push_back(q);
    rels[sa].insert(q.relation);
  }

  InductivePair pair;
  pair.ratio = ratio;
  InductiveSide* sides[2] = {&pair.a, &pair.b};
  for (int k = 0; k < 2; ++k) {
    InductiveSide& s = *sides[k];
    s.local_ids.assign(static_cast<std::size_t>(n), -1);
    for (EntityId e = 0; e < n; ++e)
      if (side[static_cast<std::size_t>(e)] == k) {
        s.local_ids[static_cast<std::size_t>(e)] = static_cast<EntityId>(s.global_ids.size());
        s.global_ids.push_back(e);
      }
    std::vector<RawQuadruple> raw;
    for (const Quadruple& q : kept[k]) {
      if (rels[1 - k].count(q.relation) == 0) continue;
      raw.push_back({s.local_ids[static_cast<std::size_t>(q.subject)], q.relation,
                     s.local_ids[static_cast<std::size_t>(q.object)], seq.raw_time(q.timestamp)});
    }
    if (raw.empty())
      throw DataError(std::string("make_inductive: side ") + (k == 0 ? "A" : "B") +
                      " has no facts left; try a different ratio or seed");
    s.sequence = build_sequence(raw, static_cast<std::int32_t>(s.global_ids.size()), base, {},
                                k == 0 ? "inductive-A" : "inductive-B");
    try {
      s.split = split_by_time(s.sequence, train_frac, valid_frac);
    } catch (const DataError& e) {
      throw DataError(std::string("make_inductive: side ") + (k == 0 ? "A" : "B") + ": " +
                      e.what() + "; try a different ratio or seed");
    }
  }
  return pair;
}

std::vector<Quadruple> localize(const std::vector<Quadruple>& facts, const SnapshotSequence& source,
                                const InductiveSide& side) {
  std::vector<Quadruple> out;
  for (const Quadruple& q : facts) {
    if (q.subject < 0 || q.object < 0 ||
        static_cast<std::size_t>(std::max(q.subject, q.object)) >= side.local_ids.size())
      continue;
    const EntityId s = side.local_ids[static_cast<std::size_t>(q.subject)];
    const EntityId o = side.local_ids[static_cast<std::size_t>(q.object)];
    if (s < 0 || o < 0) continue;
    const TimeId t = find_time(side.sequence, source.raw_time(q.timestamp));
    if (t < 0) continue;
    out.push_back({s, q.relation, o, t});
  }
  return out;
}

}  // namespace tkgpath

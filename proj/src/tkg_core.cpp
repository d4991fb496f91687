#include "tkgpath/tkg_core.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace tkgpath {

std::size_t SnapshotSequence::num_facts() const {
  std::size_t n = 0;
  for (const Snapshot& s : snapshots_) n += s.facts.size();
  return n;
}

const Snapshot* SnapshotSequence::find(TimeId t) const {
  auto it = std::lower_bound(snapshots_.begin(), snapshots_.end(), t,
                             [](const Snapshot& s, TimeId v) { return s.timestamp < v; });
  if (it == snapshots_.end() || it->timestamp != t) return nullptr;
  return &*it;
}

void SnapshotSequence::push(Snapshot snapshot) {
  if (!snapshots_.empty() && snapshot.timestamp <= snapshots_.back().timestamp)
    throw ValidationError("snapshot timestamps must be strictly increasing (got " +
                          std::to_string(snapshot.timestamp) + " after " +
                          std::to_string(snapshots_.back().timestamp) + ")");
  for (const Quadruple& q : snapshot.facts)
    if (q.timestamp != snapshot.timestamp)
      throw ValidationError("fact timestamp " + std::to_string(q.timestamp) +
                            " inside snapshot " + std::to_string(snapshot.timestamp));
  snapshots_.push_back(std::move(snapshot));
}

std::int64_t SnapshotSequence::raw_time(TimeId t) const {
  if (t >= 0 && static_cast<std::size_t>(t) < raw_times_.size())
    return raw_times_[static_cast<std::size_t>(t)];
  return t;
}

std::vector<Quadruple> SnapshotSequence::all_facts() const {
  std::vector<Quadruple> out;
  out.reserve(num_facts());
  for (const Snapshot& s : snapshots_) out.insert(out.end(), s.facts.begin(), s.facts.end());
  return out;
}

SnapshotSequence DatasetSplit::merged() const {
  SnapshotSequence out(train.num_entities(), train.num_base_relations());
  std::vector<Snapshot> all;
  for (const SnapshotSequence* part : {&train, &valid, &test})
    all.insert(all.end(), part->snapshots().begin(), part->snapshots().end());
  std::sort(all.begin(), all.end(),
            [](const Snapshot& a, const Snapshot& b) { return a.timestamp < b.timestamp; });
  for (Snapshot& s : all) out.push(std::move(s));
  out.set_raw_times(train.raw_times());
  return out;
}

std::vector<RawQuadruple> parse_quadruple_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open quadruple file " + path.string());
  std::vector<RawQuadruple> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    std::int64_t fields[4];
    for (int i = 0; i < 4; ++i) {
      std::string tok;
      if (!(ls >> tok))
        throw ParseError(path.string(), lineno, "expected 4 integer fields (s r o t)");
      std::size_t used = 0;
      try {
        fields[i] = std::stoll(tok, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != tok.size())
        throw ParseError(path.string(), lineno, "non-integer field '" + tok + "'");
    }
    out.push_back({fields[0], fields[1], fields[2], fields[3]});
  }
  return out;
}

DatasetStats read_stat_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("missing stat file " + path.string());
  DatasetStats stats;
  if (!(in >> stats.num_entities >> stats.num_base_relations))
    throw ParseError(path.string(), 1, "expected 'num_entities num_relations_base'");
  if (stats.num_entities <= 0 || stats.num_base_relations <= 0)
    throw ValidationError(path.string() + ": counts must be positive");
  return stats;
}

void write_stat_file(const std::filesystem::path& path, const DatasetStats& stats) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << stats.num_entities << ' ' << stats.num_base_relations << '\n';
}

std::vector<Quadruple> add_inverse_edges(std::vector<Quadruple> facts,
                                         RelationId num_base_relations) {
  const std::size_t n = facts.size();
  facts.reserve(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    const Quadruple q = facts[i];
    facts.push_back({q.object, inverse_relation(q.relation, num_base_relations), q.subject,
                     q.timestamp});
  }
  std::sort(facts.begin(), facts.end());
  facts.erase(std::unique(facts.begin(), facts.end()), facts.end());
  return facts;
}

namespace {

void check_id(std::int64_t v, std::int64_t limit, const char* field, const std::string& source,
              std::size_t index) {
  if (v < 0 || v >= limit)
    throw ValidationError(source + ": fact " + std::to_string(index + 1) + ": " + field + " " +
                          std::to_string(v) + " out of range [0, " + std::to_string(limit) + ")");
}

}  // namespace

SnapshotSequence build_sequence(const std::vector<RawQuadruple>& facts,
                                std::int32_t num_entities, std::int32_t num_base_relations,
                                const std::vector<std::int64_t>& raw_time_axis,
                                const std::string& source) {
  if (num_entities <= 0 || num_base_relations <= 0)
    throw ValidationError(source + ": entity and relation counts must be positive");
  for (std::size_t i = 0; i < facts.size(); ++i) {
    const RawQuadruple& q = facts[i];
    check_id(q.subject, num_entities, "subject", source, i);
    check_id(q.relation, num_base_relations, "relation", source, i);
    check_id(q.object, num_entities, "object", source, i);
    if (q.timestamp < 0)
      throw ValidationError(source + ": fact " + std::to_string(i + 1) + ": timestamp " +
                            std::to_string(q.timestamp) + " is negative");
  }
  std::vector<std::int64_t> axis = raw_time_axis;
  if (axis.empty()) {
    for (const RawQuadruple& q : facts) axis.push_back(q.timestamp);
    std::sort(axis.begin(), axis.end());
    axis.erase(std::unique(axis.begin(), axis.end()), axis.end());
  }
  std::map<TimeId, std::vector<Quadruple>> grouped;
  for (std::size_t i = 0; i < facts.size(); ++i) {
    const RawQuadruple& q = facts[i];
    auto it = std::lower_bound(axis.begin(), axis.end(), q.timestamp);
    if (it == axis.end() || *it != q.timestamp)
      throw ValidationError(source + ": fact " + std::to_string(i + 1) + ": timestamp " +
                            std::to_string(q.timestamp) + " not on the time axis");
    const auto t = static_cast<TimeId>(it - axis.begin());
    grouped[t].push_back({static_cast<EntityId>(q.subject), static_cast<RelationId>(q.relation),
                          static_cast<EntityId>(q.object), t});
  }
  SnapshotSequence seq(num_entities, num_base_relations);
  for (auto& [t, list] : grouped) seq.push({t, add_inverse_edges(std::move(list), num_base_relations)});
  seq.set_raw_times(std::move(axis));
  return seq;
}

SnapshotSequence load_quadruple_file(const std::filesystem::path& path,
                                     std::int32_t num_entities,
                                     std::int32_t num_base_relations) {
  return build_sequence(parse_quadruple_file(path), num_entities, num_base_relations, {},
                        path.string());
}

DatasetSplit load_dataset(const std::filesystem::path& dir) {
  const DatasetStats stats = read_stat_file(dir / "stat.txt");
  const char* names[3] = {"train.txt", "valid.txt", "test.txt"};
  std::vector<RawQuadruple> raw[3];
  std::vector<std::int64_t> axis;
  for (int i = 0; i < 3; ++i) {
    raw[i] = parse_quadruple_file(dir / names[i]);
    for (const RawQuadruple& q : raw[i]) axis.push_back(q.timestamp);
  }
  std::sort(axis.begin(), axis.end());
  axis.erase(std::unique(axis.begin(), axis.end()), axis.end());
  if (axis.empty()) throw DataError(dir.string() + ": dataset has no facts");
  DatasetSplit split;
  SnapshotSequence* parts[3] = {&split.train, &split.valid, &split.test};
  for (int i = 0; i < 3; ++i)
    *parts[i] = build_sequence(raw[i], stats.num_entities, stats.num_base_relations, axis,
                               (dir / names[i]).string());
  auto last = [](const SnapshotSequence& s) { return s.snapshots().back().timestamp; };
  auto first = [](const SnapshotSequence& s) { return s.snapshots().front().timestamp; };
  for (int i = 0; i < 3; ++i)
    if (parts[i]->empty()) throw DataError((dir / names[i]).string() + " has no facts");
  if (!(last(split.train) < first(split.valid) && last(split.valid) < first(split.test)))
    throw ValidationError(dir.string() + ": train < valid < test timestamp order violated");
  return split;
}

void write_quadruple_file(const std::filesystem::path& path, const SnapshotSequence& seq,
                          bool with_inverses) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const Snapshot& s : seq.snapshots())
    for (const Quadruple& q : s.facts) {
      if (!with_inverses && q.relation >= seq.num_base_relations()) continue;
      out << q.subject << ' ' << q.relation << ' ' << q.object << ' ' << seq.raw_time(q.timestamp)
          << '\n';
    }
}

void write_dataset(const std::filesystem::path& dir, const DatasetSplit& split) {
  std::filesystem::create_directories(dir);
  write_stat_file(dir / "stat.txt",
                  {split.train.num_entities(), split.train.num_base_relations()});
  write_quadruple_file(dir / "train.txt", split.train);
  write_quadruple_file(dir / "valid.txt", split.valid);
  write_quadruple_file(dir / "test.txt", split.test);
}

DatasetSplit split_by_time(const SnapshotSequence& seq, double train_frac, double valid_frac) {
  if (!(train_frac > 0.0 && valid_frac > 0.0 && train_frac + valid_frac < 1.0))
    throw std::invalid_argument("split_by_time: need 0 < train_frac, valid_frac and sum < 1");
  const auto n = static_cast<long>(seq.snapshots().size());
  if (n < 3)
    throw DataError("split_by_time: need at least 3 distinct timestamps, got " +
                    std::to_string(n));
  long n_train = std::max(1L, std::lround(static_cast<double>(n) * train_frac));
  long n_valid = std::max(1L, std::lround(static_cast<double>(n) * valid_frac));
  n_train = std::min(n_train, n - 2);
  n_valid = std::min(n_valid, n - n_train - 1);
  DatasetSplit split;
  SnapshotSequence* parts[3] = {&split.train, &split.valid, &split.test};
  for (SnapshotSequence* p : parts) {
    *p = SnapshotSequence(seq.num_entities(), seq.num_base_relations());
    p->set_raw_times(seq.raw_times());
  }
  for (long i = 0; i < n; ++i) {
    SnapshotSequence* dst = i < n_train ? parts[0] : (i < n_train + n_valid ? parts[1] : parts[2]);
    dst->push(seq.snapshots()[static_cast<std::size_t>(i)]);
  }
  return split;
}

std::vector<const Snapshot*> history_window(const SnapshotSequence& seq, TimeId query_time,
                                            int m) {
  if (m < 1) throw std::invalid_argument("history_window: m must be >= 1");
  const auto& snaps = seq.snapshots();
  auto end = std::lower_bound(snaps.begin(), snaps.end(), query_time,
                              [](const Snapshot& s, TimeId v) { return s.timestamp < v; });
  const auto available = static_cast<long>(end - snaps.begin());
  auto begin = end - std::min<long>(available, m);
  std::vector<const Snapshot*> out;
  for (auto it = begin; it != end; ++it) out.push_back(&*it);
  return out;
}

}  // namespace tkgpath

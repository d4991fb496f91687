#pragma once

// Quadruple datasets: loading, validation, inverse augmentation, timestamp
// ordered splits and history windows.

#include <compare>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace tkgpath {

using EntityId = std::int32_t;
using RelationId = std::int32_t;
using TimeId = std::int32_t;

/// Malformed or inconsistent input data (CLI exit code 2).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public DataError {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : DataError(file + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class ValidationError : public DataError {
 public:
  using DataError::DataError;
};

struct Quadruple {
  EntityId subject = 0;
  RelationId relation = 0;
  EntityId object = 0;
  TimeId timestamp = 0;

  friend auto operator<=>(const Quadruple&, const Quadruple&) = default;
};

/// inv(r) = r + |R_base| for base relations and r - |R_base| otherwise.
constexpr RelationId inverse_relation(RelationId r, RelationId num_base_relations) {
  return r < num_base_relations ? r + num_base_relations : r - num_base_relations;
}

struct Snapshot {
  TimeId timestamp = 0;
  std::vector<Quadruple> facts;
};

class SnapshotSequence {
 public:
  SnapshotSequence() = default;
  SnapshotSequence(std::int32_t num_entities, std::int32_t num_base_relations)
      : num_entities_(num_entities), num_base_relations_(num_base_relations) {}

  std::int32_t num_entities() const { return num_entities_; }
  std::int32_t num_base_relations() const { return num_base_relations_; }
  /// Post-augmentation relation count 2 * |R_base|.
  std::int32_t num_relations() const { return 2 * num_base_relations_; }

  const std::vector<Snapshot>& snapshots() const { return snapshots_; }
  std::size_t num_facts() const;
  bool empty() const { return snapshots_.empty(); }

  /// Snapshot with exactly this timestamp, or nullptr.
  const Snapshot* find(TimeId t) const;

  /// Appends a snapshot; timestamps must be strictly increasing.
  void push(Snapshot snapshot);

  /// Raw timestamp of normalized time id t ("raw-to-normalized" map inverse).
  std::int64_t raw_time(TimeId t) const;
  const std::vector<std::int64_t>& raw_times() const { return raw_times_; }
  void set_raw_times(std::vector<std::int64_t> raw) { raw_times_ = std::move(raw); }

  /// Every fact, snapshots in order.
  std::vector<Quadruple> all_facts() const;

 private:
  std::int32_t num_entities_ = 0;
  std::int32_t num_base_relations_ = 0;
  std::vector<Snapshot> snapshots_;
  std::vector<std::int64_t> raw_times_;
};

struct DatasetSplit {
  SnapshotSequence train;
  SnapshotSequence valid;
  SnapshotSequence test;

  /// Union of the three, in timestamp order.
  SnapshotSequence merged() const;
};

struct RawQuadruple {
  std::int64_t subject = 0;
  std::int64_t relation = 0;
  std::int64_t object = 0;
  std::int64_t timestamp = 0;
};

struct DatasetStats {
  std::int32_t num_entities = 0;
  std::int32_t num_base_relations = 0;
};

/// Parses "s r o t [ignored...]" lines; blank lines are skipped.
std::vector<RawQuadruple> parse_quadruple_file(const std::filesystem::path& path);

/// Reads "num_entities num_relations_base" from a stat file.
DatasetStats read_stat_file(const std::filesystem::path& path);
void write_stat_file(const std::filesystem::path& path, const DatasetStats& stats);

/// Validates ids, normalizes timestamps to consecutive ranks of the distinct
/// raw values (sorted), dedups within each timestamp and adds inverse edges.
/// `raw_time_axis` when non-empty fixes the normalization (joint loading of
/// several files); every raw timestamp must occur in it.
SnapshotSequence build_sequence(const std::vector<RawQuadruple>& facts,
                                std::int32_t num_entities, std::int32_t num_base_relations,
                                const std::vector<std::int64_t>& raw_time_axis = {},
                                const std::string& source = "<memory>");

SnapshotSequence load_quadruple_file(const std::filesystem::path& path,
                                     std::int32_t num_entities,
                                     std::int32_t num_base_relations);

/// Loads stat.txt plus train.txt / valid.txt / test.txt with a shared time
/// normalization.
DatasetSplit load_dataset(const std::filesystem::path& dir);

/// Writes "s r o t" lines with raw timestamps. Inverse edges are omitted unless
/// with_inverses is set.
void write_quadruple_file(const std::filesystem::path& path, const SnapshotSequence& seq,
                          bool with_inverses = false);
void write_dataset(const std::filesystem::path& dir, const DatasetSplit& split);

/// Adds (o, inv(r), s, t) for every fact and deduplicates; idempotent.
std::vector<Quadruple> add_inverse_edges(std::vector<Quadruple> facts,
                                         RelationId num_base_relations);

DatasetSplit split_by_time(const SnapshotSequence& seq, double train_frac, double valid_frac);

/// Up to m snapshots with the largest timestamps strictly below query_time,
/// oldest first.
std::vector<const Snapshot*> history_window(const SnapshotSequence& seq, TimeId query_time,
                                            int m);

}  // namespace tkgpath

#pragma once

// Planted-rule generator and inductive pair construction.

#include "tkgpath/tkg_core.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace tkgpath {

/// (X, body_first, Y, tau1) and (Y, body_second, Z, tau2), tau1 < tau2,
/// imply (X, head, Z, tau2 + 1).
struct PlantedRule {
  RelationId body_first = 0;
  RelationId body_second = 1;
  RelationId head = 2;
  /// tau2 - tau1 is drawn from [1, max_gap].
  int max_gap = 3;

  void validate(RelationId num_base_relations) const;
};

struct SyntheticConfig {
  std::int32_t num_entities = 50;
  int num_timestamps = 60;
  int num_chains = 40;
  int num_noise_relations = 4;
  /// Noise edges per entity per window of `window` timestamps.
  double noise_rate = 2.0;
  int window = 5;
  double train_frac = 0.7;
  double valid_frac = 0.1;
  std::uint64_t seed = 0;
  PlantedRule rule;

  std::int32_t num_base_relations() const { return 3 + num_noise_relations; }
  void validate() const;
};

struct PlantedChain {
  EntityId x = 0;
  EntityId y = 0;
  EntityId z = 0;
  TimeId tau1 = 0;
  TimeId tau2 = 0;
  /// (x, head, z, tau2 + 1) after time normalization.
  Quadruple consequence;
};

struct SyntheticDataset {
  SyntheticConfig config;
  SnapshotSequence sequence;
  DatasetSplit split;
  std::vector<PlantedChain> chains;
  /// Planted consequences whose timestamp falls in the test split.
  std::vector<Quadruple> truth;
};

/// Throws ConfigError-like std::invalid_argument on infeasible settings and
/// std::logic_error if a ground-truth query is not answerable within 2 hops.
SyntheticDataset gen_planted(const SyntheticConfig& cfg);

/// "s r o t" lines with raw timestamps.
void write_truth_file(const std::filesystem::path& path, const std::vector<Quadruple>& truth,
                      const SnapshotSequence& seq);
std::vector<Quadruple> read_truth_file(const std::filesystem::path& path,
                                       const SnapshotSequence& seq);

/// "x y z tau1 tau2 t" lines (raw timestamps).
void write_chain_file(const std::filesystem::path& path, const std::vector<PlantedChain>& chains,
                      const SnapshotSequence& seq);

struct InductiveSide {
  SnapshotSequence sequence;  // local entity ids 0..|V_side|-1
  DatasetSplit split;
  std::vector<EntityId> global_ids;  // local -> original id
  std::vector<EntityId> local_ids;   // original id -> local, -1 when absent
};

struct InductivePair {
  double ratio = 0.5;
  InductiveSide a;
  InductiveSide b;
};

InductivePair make_inductive(const SnapshotSequence& seq, double ratio, std::uint64_t seed,
                             double train_frac = 0.7, double valid_frac = 0.1);

/// Keeps quadruples with both endpoints on `side` (timestamps mapped onto the
/// side's own axis); others are dropped.
std::vector<Quadruple> localize(const std::vector<Quadruple>& facts, const SnapshotSequence& source,
                                const InductiveSide& side);

/// Normalized id of a raw timestamp in seq, -1 when absent.
TimeId find_time(const SnapshotSequence& seq, std::int64_t raw);

}  // namespace tkgpath

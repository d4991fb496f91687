#pragma once

// Self-checks shared by the command line and the test suites: the end-to-end
// gradient check on a toy instance and the per-query scaling benchmark.

#include "tkgpath/learning.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace tkgpath {

/// Random sequence with `edges_per_snapshot` base facts per timestamp.
SnapshotSequence random_sequence(std::int32_t num_entities, std::int32_t num_base_relations,
                                 int num_timestamps, int edges_per_snapshot, std::uint64_t seed);

struct GradCheckOptions {
  std::int32_t num_entities = 4;
  int dim = 8;
  int omega = 2;
  std::int32_t num_base_relations = 2;
  int num_negatives = 3;
  std::uint64_t seed = 7;
  double tol = 1e-4;
  double eps = 1e-4;
};

struct BlockCheck {
  std::string name;
  grad::FiniteDiffReport report;
};

struct GradCheckResult {
  std::vector<BlockCheck> blocks;
  double loss = 0.0;
  bool passed = false;
};

/// Central differences of the full training loss (L_TKG + L_REG) against the
/// tape gradient for every parameter block, with all feature toggles on.
GradCheckResult full_model_grad_check(const GradCheckOptions& opts = {});
void write_grad_check_report(std::ostream& os, const GradCheckResult& r);

struct ScalingOptions {
  std::vector<int> lengths = {2, 4, 8, 16};
  std::int32_t num_entities = 200;
  std::int32_t num_base_relations = 10;
  int edges_per_snapshot = 300;
  int dim = 32;
  int omega = 3;
  int queries = 8;
  int repeats = 3;
  std::uint64_t seed = 11;
};

struct ScalingRow {
  int m = 0;
  std::size_t edges = 0;
  int omega = 0;
  double seconds_per_query = 0.0;
};

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

struct ScalingResult {
  std::vector<ScalingRow> rows;
  /// seconds_per_query against m * |E_snapshot| (the window edge count).
  LinearFit fit;
};

ScalingResult bench_scaling(const ScalingOptions& opts);
void write_scaling_csv(std::ostream& os, const ScalingResult& r);

}  // namespace tkgpath

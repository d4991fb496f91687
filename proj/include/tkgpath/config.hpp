#pragma once

// Run configuration: line-oriented `key = value` files, presets and
// command-line overrides share one key registry.

#include "tkgpath/diagnostics.hpp"
#include "tkgpath/evaluation.hpp"
#include "tkgpath/evidence.hpp"
#include "tkgpath/learning.hpp"
#include "tkgpath/model.hpp"
#include "tkgpath/synthetic.hpp"

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace tkgpath {

struct RunConfig {
  std::string data_dir;
  std::string output_dir = "run";
  std::string checkpoint;
  std::string truth_file;
  std::string preset;
  std::uint64_t seed = 0;
  int threads = 0;
  int history_length = 25;

  ModelConfig model;  // num_relations is filled from the data
  TrainConfig train;
  TieRule tie_rule = TieRule::kMean;
  std::string eval_split = "test";

  std::int64_t query_subject = -1;
  std::int64_t query_relation = -1;
  std::int64_t query_time = -1;
  std::int64_t prediction = -1;
  int evidence_k = kDefaultEvidenceK;
  int beam_width = kDefaultBeamWidth;
  PathScore path_score = PathScore::kMean;
  bool edge_reuse = false;
  bool structured = false;

  SyntheticConfig synth;
  double inductive_ratio = 0.5;
  double train_frac = 0.7;
  double valid_frac = 0.1;

  GradCheckOptions grad_check;
  ScalingOptions scaling;

  RunConfig();

  /// TrainConfig / EvalConfig with the shared keys (seed, threads, m) applied.
  TrainConfig train_config() const;
  EvalConfig eval_config() const;
  ModelConfig model_config(std::int32_t num_relations) const;
  /// Path search limits; max_length is omega.
  PathSearchOptions path_search() const;
  void validate() const;
};

struct ConfigKey {
  std::string name;
  std::string help;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

const std::vector<ConfigKey>& config_keys();
std::vector<std::string> preset_names();

/// Applies a preset's (m, omega, ...) values.
void apply_preset(RunConfig& cfg, const std::string& name);

/// Sets one key; unknown keys raise ConfigError listing every valid key.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);

using ConfigEntries = std::vector<std::pair<std::string, std::string>>;

/// Parses `key = value` lines; '#' starts a comment.
ConfigEntries parse_config_text(std::istream& in, const std::string& source);
ConfigEntries parse_config_file(const std::filesystem::path& path);

/// Applies entries in order, except that a `preset` entry is applied first so
/// explicit keys always win over preset values.
void apply_entries(RunConfig& cfg, const ConfigEntries& entries);

/// Every key as `key = value`, one per line.
void write_config(std::ostream& os, const RunConfig& cfg);

}  // namespace tkgpath

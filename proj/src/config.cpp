#include "tkgpath/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace tkgpath {

RunConfig::RunConfig() {
  model.dim = 64;
  model.score_hidden = 64;
  model.prop.omega = 6;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t = train;
  t.seed = seed;
  t.threads = threads;
  t.history_length = history_length;
  t.tie_rule = tie_rule;
  return t;
}

EvalConfig RunConfig::eval_config() const { return {history_length, threads, tie_rule}; }

ModelConfig RunConfig::model_config(std::int32_t num_relations) const {
  ModelConfig m = model;
  m.num_relations = num_relations;
  return m;
}

PathSearchOptions RunConfig::path_search() const {
  PathSearchOptions o;
  o.k = evidence_k;
  o.beam_width = beam_width;
  o.max_length = model.prop.omega;
  o.score = path_score;
  o.edge_reuse = edge_reuse;
  return o;
}

void RunConfig::validate() const {
  if (history_length < 1) throw ConfigError("history_length must be >= 1");
  if (threads < 0) throw ConfigError("threads must be >= 0");
  if (eval_split != "test" && eval_split != "valid" && eval_split != "train")
    throw ConfigError("eval_split must be train, valid or test");
  if (evidence_k < 1) throw ConfigError("evidence_k must be >= 1");
  if (beam_width > 0 && beam_width < evidence_k)
    throw ConfigError("beam_width must be >= evidence_k (or <= 0 for unbounded)");
  if (!(inductive_ratio > 0 && inductive_ratio < 1))
    throw ConfigError("inductive_ratio must be in (0, 1)");
  train_config().validate_config();
  ModelConfig probe = model;
  probe.num_relations = 2;
  probe.validate();
}

namespace {

void parse_value(const std::string& s, std::string& out) { out = s; }

template <typename Int>
void parse_int(const std::string& s, Int& out) {
  Int v{};
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ConfigError("expected an integer, got '" + s + "'");
  out = v;
}

void parse_value(const std::string& s, int& out) { parse_int(s, out); }
void parse_value(const std::string& s, std::int64_t& out) { parse_int(s, out); }
void parse_value(const std::string& s, std::uint64_t& out) { parse_int(s, out); }

void parse_value(const std::string& s, double& out) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing");
    out = v;
  } catch (const std::exception&) {
    throw ConfigError("expected a number, got '" + s + "'");
  }
}

void parse_value(const std::string& s, bool& out) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") out = true;
  else if (s == "false" || s == "0" || s == "no" || s == "off") out = false;
  else throw ConfigError("expected true or false, got '" + s + "'");
}

void parse_value(const std::string& s, MergeOp& out) { out = parse_merge_op(s); }
void parse_value(const std::string& s, Aggregator& out) { out = parse_aggregator(s); }
void parse_value(const std::string& s, Activation& out) { out = parse_activation(s); }
void parse_value(const std::string& s, TimeSharing& out) { out = parse_time_sharing(s); }
void parse_value(const std::string& s, EdgeFfn& out) { out = parse_edge_ffn(s); }
void parse_value(const std::string& s, TieRule& out) { out = parse_tie_rule(s); }
void parse_value(const std::string& s, PathScore& out) { out = parse_path_score(s); }

void parse_value(const std::string& s, std::vector<int>& out) {
  std::vector<int> v;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    int x = 0;
    parse_int(item, x);
    v.push_back(x);
  }
  if (v.empty()) throw ConfigError("expected a comma-separated integer list");
  out = std::move(v);
}

std::string format_value(const std::string& v) { return v; }
std::string format_value(bool v) { return v ? "true" : "false"; }
std::string format_value(int v) { return std::to_string(v); }
std::string format_value(std::int64_t v) { return std::to_string(v); }
std::string format_value(std::uint64_t v) { return std::to_string(v); }
std::string format_value(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}
template <typename E>
  requires std::is_enum_v<E>
std::string format_value(E v) {
  return to_string(v);
}
std::string format_value(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

template <typename Access>
ConfigKey make_key(std::string name, std::string help, Access access) {
  ConfigKey k;
  k.name = std::move(name);
  k.help = std::move(help);
  k.set = [access](RunConfig& c, const std::string& v) { parse_value(v, access(c)); };
  k.get = [access](const RunConfig& c) {
    return format_value(access(const_cast<RunConfig&>(c)));
  };
  return k;
}

#define TKG_KEY(name, help, expr) make_key(name, help, [](RunConfig& c) -> auto& { return expr; })

std::vector<ConfigKey> build_keys() {
  std::vector<ConfigKey> k;
  k.push_back(TKG_KEY("data_dir", "dataset directory (stat.txt, train/valid/test.txt)", c.data_dir));
  k.push_back(TKG_KEY("output_dir", "directory for every artifact of the run", c.output_dir));
  k.push_back(TKG_KEY("checkpoint", "checkpoint to load (default <output_dir>/model.ckpt)", c.checkpoint));
  k.push_back(TKG_KEY("truth_file", "restrict eval to these \"s r o t\" queries", c.truth_file));
  ConfigKey preset;
  preset.name = "preset";
  preset.help = "icews18 | gdelt | wiki | yago";
  preset.set = [](RunConfig& c, const std::string& v) { apply_preset(c, v); };
  preset.get = [](const RunConfig& c) { return c.preset; };
  k.push_back(preset);
  k.push_back(TKG_KEY("seed", "random seed", c.seed));
  k.push_back(TKG_KEY("threads", "query-level parallelism; 0 = all cores, 1 = serial", c.threads));
  k.push_back(TKG_KEY("history_length", "history window m (snapshots)", c.history_length));

  k.push_back(TKG_KEY("dim", "embedding dimension d", c.model.dim));
  k.push_back(TKG_KEY("omega", "propagation layers", c.model.prop.omega));
  k.push_back(TKG_KEY("merge_op", "mult | add | rotate", c.model.prop.merge_op));
  k.push_back(TKG_KEY("aggregator", "pna | sum | mean | max", c.model.prop.aggregator));
  k.push_back(TKG_KEY("layer_norm", "layer normalization after aggregation", c.model.prop.use_layer_norm));
  k.push_back(TKG_KEY("shortcut", "residual shortcut", c.model.prop.use_shortcut));
  k.push_back(TKG_KEY("boundary", "re-inject the layer-0 state each layer", c.model.prop.include_boundary));
  k.push_back(TKG_KEY("activation", "relu | none", c.model.prop.activation));
  k.push_back(TKG_KEY("time_encoding", "temporal component of edge vectors", c.model.enc.use_time_encoding));
  k.push_back(TKG_KEY("time_sharing", "shared | per-relation", c.model.enc.time_sharing));
  k.push_back(TKG_KEY("edge_ffn", "ffn | bypass", c.model.enc.edge_ffn));
  k.push_back(TKG_KEY("edge_activation", "relu | none", c.model.enc.edge_activation));
  k.push_back(TKG_KEY("tied_layers", "one edge encoder shared by every layer", c.model.enc.tied_layers));
  k.push_back(TKG_KEY("score_hidden", "score MLP hidden width (0 = linear)", c.model.score_hidden));

  k.push_back(TKG_KEY("n_negatives", "negatives per positive", c.train.n_negatives));
  k.push_back(TKG_KEY("alpha", "orthogonality target", c.train.alpha));
  k.push_back(TKG_KEY("learning_rate", "Adam step size", c.train.learning_rate));
  k.push_back(TKG_KEY("max_epochs", "training epochs", c.train.max_epochs));
  k.push_back(TKG_KEY("batch_size", "query groups per step", c.train.batch_size));
  k.push_back(TKG_KEY("grad_clip", "global-norm clip (0 = off)", c.train.grad_clip));
  k.push_back(TKG_KEY("adam_beta1", "", c.train.adam_beta1));
  k.push_back(TKG_KEY("adam_beta2", "", c.train.adam_beta2));
  k.push_back(TKG_KEY("adam_eps", "", c.train.adam_eps));
  k.push_back(TKG_KEY("use_reg", "add the orthogonality term", c.train.use_reg));
  k.push_back(TKG_KEY("validate", "validation MRR after every epoch", c.train.validate));
  k.push_back(TKG_KEY("tie_rule", "mean | optimistic | pessimistic", c.tie_rule));
  k.push_back(TKG_KEY("eval_split", "train | valid | test", c.eval_split));

  k.push_back(TKG_KEY("query_subject", "explain: subject id", c.query_subject));
  k.push_back(TKG_KEY("query_relation", "explain: relation id", c.query_relation));
  k.push_back(TKG_KEY("query_time", "explain: raw timestamp", c.query_time));
  k.push_back(TKG_KEY("prediction", "explain: object id (-1 = top-1)", c.prediction));
  k.push_back(TKG_KEY("evidence_k", "paths per explanation", c.evidence_k));
  k.push_back(TKG_KEY("beam_width", "beam width (<= 0 = unbounded)", c.beam_width));
  k.push_back(TKG_KEY("path_score", "mean | sum: ranking of complete paths", c.path_score));
  k.push_back(TKG_KEY("edge_reuse", "allow a path to repeat a temporal edge", c.edge_reuse));
  k.push_back(TKG_KEY("structured", "append key=value lines per path", c.structured));

  k.push_back(TKG_KEY("synth_entities", "", c.synth.num_entities));
  k.push_back(TKG_KEY("synth_timestamps", "", c.synth.num_timestamps));
  k.push_back(TKG_KEY("synth_chains", "", c.synth.num_chains));
  k.push_back(TKG_KEY("synth_noise_relations", "", c.synth.num_noise_relations));
  k.push_back(TKG_KEY("synth_noise_rate", "noise edges per entity per window", c.synth.noise_rate));
  k.push_back(TKG_KEY("synth_window", "", c.synth.window));
  k.push_back(TKG_KEY("synth_max_gap", "", c.synth.rule.max_gap));
  k.push_back(TKG_KEY("train_frac", "", c.train_frac));
  k.push_back(TKG_KEY("valid_frac", "", c.valid_frac));
  k.push_back(TKG_KEY("inductive_ratio", "share of entities on side A", c.inductive_ratio));

  k.push_back(TKG_KEY("gradcheck_entities", "", c.grad_check.num_entities));
  k.push_back(TKG_KEY("gradcheck_dim", "", c.grad_check.dim));
  k.push_back(TKG_KEY("gradcheck_omega", "", c.grad_check.omega));
  k.push_back(TKG_KEY("gradcheck_tol", "", c.grad_check.tol));

  k.push_back(TKG_KEY("bench_lengths", "comma-separated m values", c.scaling.lengths));
  k.push_back(TKG_KEY("bench_entities", "", c.scaling.num_entities));
  k.push_back(TKG_KEY("bench_edges_per_snapshot", "", c.scaling.edges_per_snapshot));
  k.push_back(TKG_KEY("bench_dim", "", c.scaling.dim));
  k.push_back(TKG_KEY("bench_omega", "", c.scaling.omega));
  k.push_back(TKG_KEY("bench_queries", "", c.scaling.queries));
  k.push_back(TKG_KEY("bench_repeats", "", c.scaling.repeats));
  return k;
}

#undef TKG_KEY

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = build_keys();
  return keys;
}

std::vector<std::string> preset_names() { return {"icews18", "gdelt", "wiki", "yago"}; }

void apply_preset(RunConfig& cfg, const std::string& name) {
  if (name == "icews18") {
    cfg.history_length = 25;
    cfg.model.prop.omega = 6;
  } else if (name == "gdelt") {
    cfg.history_length = 15;
    cfg.model.prop.omega = 6;
  } else if (name == "wiki") {
    cfg.history_length = 10;
    cfg.model.prop.omega = 4;
    cfg.model.enc.time_sharing = TimeSharing::kPerRelation;
  } else if (name == "yago") {
    cfg.history_length = 8;
    cfg.model.prop.omega = 4;
    cfg.model.enc.time_sharing = TimeSharing::kPerRelation;
    cfg.train.learning_rate = 1e-4;
  } else {
    throw ConfigError("unknown preset '" + name + "' (expected icews18, gdelt, wiki or yago)");
  }
  cfg.preset = name;
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  const auto& keys = config_keys();
  const auto it =
      std::find_if(keys.begin(), keys.end(), [&](const ConfigKey& k) { return k.name == key; });
  if (it == keys.end()) {
    std::string msg = "unknown config key '" + key + "'; valid keys:";
    for (const ConfigKey& k : keys) msg += " " + k.name;
    throw ConfigError(msg);
  }
  try {
    it->set(cfg, value);
  } catch (const ConfigError& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

ConfigEntries parse_config_text(std::istream& in, const std::string& source) {
  ConfigEntries out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(source + ":" + std::to_string(lineno) + ": expected 'key = value'");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError(source + ":" + std::to_string(lineno) + ": missing key");
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

ConfigEntries parse_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  return parse_config_text(in, path.string());
}

void apply_entries(RunConfig& cfg, const ConfigEntries& entries) {
  for (const auto& [k, v] : entries)
    if (k == "preset") set_config_value(cfg, k, v);
  for (const auto& [k, v] : entries)
    if (k != "preset") set_config_value(cfg, k, v);
}

void write_config(std::ostream& os, const RunConfig& cfg) {
  for (const ConfigKey& k : config_keys()) os << k.name << " = " << k.get(cfg) << "\n";
}

}  // namespace tkgpath

#pragma once

// Model configuration and the full learnable parameter set. Nothing here is
// indexed by entity: every array is sized by relation count, dimension or
// layer count, so a model transfers across graphs with different entity sets.

#include "tkgpath/grad.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

namespace tkgpath {

using grad::Matrix;
using grad::Tape;
using grad::Var;

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class MergeOp { kMult, kAdd, kRotate };
enum class Aggregator { kPna, kSum, kMean, kMax };
enum class Activation { kRelu, kNone };
enum class TimeSharing { kShared, kPerRelation };
enum class EdgeFfn { kFfn, kBypass };

std::string to_string(MergeOp v);
std::string to_string(Aggregator v);
std::string to_string(Activation v);
std::string to_string(TimeSharing v);
std::string to_string(EdgeFfn v);
MergeOp parse_merge_op(const std::string& s);
Aggregator parse_aggregator(const std::string& s);
Activation parse_activation(const std::string& s);
TimeSharing parse_time_sharing(const std::string& s);
EdgeFfn parse_edge_ffn(const std::string& s);

struct PropagationConfig {
  int omega = 6;
  MergeOp merge_op = MergeOp::kMult;
  Aggregator aggregator = Aggregator::kPna;
  bool use_layer_norm = true;
  bool use_shortcut = true;
  bool include_boundary = true;
  Activation activation = Activation::kRelu;
};

struct EncoderConfig {
  bool use_time_encoding = true;
  TimeSharing time_sharing = TimeSharing::kShared;
  /// kBypass uses the static component directly as the edge vector.
  EdgeFfn edge_ffn = EdgeFfn::kFfn;
  Activation edge_activation = Activation::kRelu;
  /// One edge-parameter set shared by all layers instead of one per layer.
  bool tied_layers = false;
};

struct ModelConfig {
  std::int32_t num_relations = 0;  // post inverse augmentation
  int dim = 64;
  PropagationConfig prop;
  EncoderConfig enc;
  /// Hidden width of the score head; 0 makes it a single linear map.
  int score_hidden = 64;

  void validate() const;
};

/// Edge encoder parameters of one propagation layer.
struct EdgeLayerParams {
  Matrix W;         // (|R| * d) x d, block p is W_p
  Matrix b;         // |R| x d
  Matrix time_w;    // S x d, S = 1 (shared) or |R|
  Matrix time_phi;  // S x d
  Matrix g_W;       // 2d x d
  Matrix g_b;       // 1 x d
};

/// Aggregation-side parameters of one propagation layer.
struct AggLayerParams {
  Matrix proj_W;  // 4d x d (pna only, otherwise empty)
  Matrix proj_b;  // 1 x d
  Matrix ln_gain;
  Matrix ln_bias;
};

struct ScoreHead {
  Matrix W1;  // 2d x h (or 2d x 1 when linear)
  Matrix b1;
  Matrix W2;  // h x 1 (empty when linear)
  Matrix b2;
};

struct NamedParam {
  std::string name;
  Matrix* value;
};

class Model {
 public:
  Model() = default;
  Model(const Model&) = default;
  Model& operator=(const Model&) = default;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  static Model create(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }

  Matrix R;
  std::vector<EdgeLayerParams> edge_layers;
  std::vector<AggLayerParams> agg_layers;
  ScoreHead head;

  const EdgeLayerParams& edge_layer(int layer) const;

  /// Every learnable array with a stable name, in a fixed order.
  std::vector<NamedParam> parameters();
  std::vector<const Matrix*> parameter_values() const;
  std::size_t parameter_count() const;

  void save(const std::filesystem::path& path) const;
  static Model load(const std::filesystem::path& path);

 private:
  ModelConfig cfg_;
};

/// Binds model arrays onto a tape on first use; arrays the forward pass never
/// touches get no tape node and therefore no gradient.
class ParamBinder {
 public:
  ParamBinder(Tape& tape, bool requires_grad) : tape_(tape), requires_grad_(requires_grad) {}
  Var operator()(const Matrix& m);
  Tape& tape() { return tape_; }
  bool requires_grad() const { return requires_grad_; }
  /// Gradient of each bound array, keyed by storage address.
  const std::unordered_map<const Matrix*, Var>& bound() const { return vars_; }

 private:
  Tape& tape_;
  bool requires_grad_;
  std::unordered_map<const Matrix*, Var> vars_;
};

/// Gradient buffers aligned with Model::parameters().
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(const Model& model);
  std::vector<Matrix>& blocks() { return blocks_; }
  const std::vector<Matrix>& blocks() const { return blocks_; }
  /// Adds scale * d/d(param) for every array bound by `binder`.
  void add_from(const Model& model, const ParamBinder& binder, double scale = 1.0);
  void add(const Gradients& other, double scale = 1.0);
  double global_norm() const;
  void scale(double s);

 private:
  std::vector<Matrix> blocks_;
};

}  // namespace tkgpath

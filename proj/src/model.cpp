#include "tkgpath/model.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <random>
#include <sstream>

namespace tkgpath {

namespace {

template <typename E>
struct EnumNames;

template <>
struct EnumNames<MergeOp> {
  static constexpr std::pair<MergeOp, const char*> kItems[] = {
      {MergeOp::kMult, "mult"}, {MergeOp::kAdd, "add"}, {MergeOp::kRotate, "rotate"}};
};
template <>
struct EnumNames<Aggregator> {
  static constexpr std::pair<Aggregator, const char*> kItems[] = {{Aggregator::kPna, "pna"},
                                                                  {Aggregator::kSum, "sum"},
                                                                  {Aggregator::kMean, "mean"},
                                                                  {Aggregator::kMax, "max"}};
};
template <>
struct EnumNames<Activation> {
  static constexpr std::pair<Activation, const char*> kItems[] = {{Activation::kRelu, "relu"},
                                                                  {Activation::kNone, "none"}};
};
template <>
struct EnumNames<TimeSharing> {
  static constexpr std::pair<TimeSharing, const char*> kItems[] = {
      {TimeSharing::kShared, "shared"}, {TimeSharing::kPerRelation, "per-relation"}};
};
template <>
struct EnumNames<EdgeFfn> {
  static constexpr std::pair<EdgeFfn, const char*> kItems[] = {{EdgeFfn::kFfn, "ffn"},
                                                               {EdgeFfn::kBypass, "bypass"}};
};

template <typename E>
std::string enum_to_string(E v) {
  for (const auto& [e, name] : EnumNames<E>::kItems)
    if (e == v) return name;
  return "?";
}

template <typename E>
E enum_parse(const std::string& s, const char* what) {
  std::string valid;
  for (const auto& [e, name] : EnumNames<E>::kItems) {
    if (s == name) return e;
    valid += valid.empty() ? name : std::string(", ") + name;
  }
  throw ConfigError(std::string("invalid ") + what + " '" + s + "' (valid: " + valid + ")");
}

Matrix glorot(std::size_t rows, std::size_t cols, std::size_t fan_in, std::size_t fan_out,
              std::mt19937_64& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-a, a);
  Matrix m(rows, cols);
  for (double& x : m.values()) x = dist(rng);
  return m;
}

Matrix uniform(std::size_t rows, std::size_t cols, double lo, double hi, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Matrix m(rows, cols);
  for (double& x : m.values()) x = dist(rng);
  return m;
}

constexpr const char* kCheckpointMagic = "tkgpath-checkpoint";
constexpr int kCheckpointVersion = 1;

}  // namespace

std::string to_string(MergeOp v) { return enum_to_string(v); }
std::string to_string(Aggregator v) { return enum_to_string(v); }
std::string to_string(Activation v) { return enum_to_string(v); }
std::string to_string(TimeSharing v) { return enum_to_string(v); }
std::string to_string(EdgeFfn v) { return enum_to_string(v); }
MergeOp parse_merge_op(const std::string& s) { return enum_parse<MergeOp>(s, "merge"); }
Aggregator parse_aggregator(const std::string& s) { return enum_parse<Aggregator>(s, "aggregator"); }
Activation parse_activation(const std::string& s) { return enum_parse<Activation>(s, "activation"); }
TimeSharing parse_time_sharing(const std::string& s) {
  return enum_parse<TimeSharing>(s, "time_sharing");
}
EdgeFfn parse_edge_ffn(const std::string& s) { return enum_parse<EdgeFfn>(s, "edge_ffn"); }

void ModelConfig::validate() const {
  if (num_relations <= 0) throw ConfigError("num_relations must be positive");
  if (dim <= 0) throw ConfigError("dim must be positive");
  if (prop.omega < 1) throw ConfigError("layers (omega) must be >= 1");
  if (prop.merge_op == MergeOp::kRotate && dim % 2 != 0)
    throw ConfigError("merge = rotate requires an even dim, got " + std::to_string(dim));
  if (score_hidden < 0) throw ConfigError("score_hidden must be >= 0");
}

// ---------------------------------------------------------------------------

Model Model::create(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  const auto d = static_cast<std::size_t>(cfg.dim);
  const auto nr = static_cast<std::size_t>(cfg.num_relations);
  Model m;
  m.cfg_ = cfg;
  m.R = glorot(nr, d, nr, d, rng);
  const int edge_sets = cfg.enc.tied_layers ? 1 : cfg.prop.omega;
  const std::size_t time_rows = cfg.enc.time_sharing == TimeSharing::kShared ? 1 : nr;
  for (int l = 0; l < edge_sets; ++l) {
    EdgeLayerParams p;
    p.W = glorot(nr * d, d, d, d, rng);
    p.b = Matrix(nr, d);
    p.time_w = uniform(time_rows, d, 0.0, 1.0, rng);
    p.time_phi = Matrix(time_rows, d);
    p.g_W = glorot(2 * d, d, 2 * d, d, rng);
    p.g_b = Matrix(1, d);
    m.edge_layers.push_back(std::move(p));
  }
  for (int l = 0; l < cfg.prop.omega; ++l) {
    AggLayerParams p;
    if (cfg.prop.aggregator == Aggregator::kPna) {
      p.proj_W = glorot(4 * d, d, 4 * d, d, rng);
      p.proj_b = Matrix(1, d);
    }
    p.ln_gain = Matrix(1, d, 1.0);
    p.ln_bias = Matrix(1, d);
    m.agg_layers.push_back(std::move(p));
  }
  if (cfg.score_hidden > 0) {
    const auto h = static_cast<std::size_t>(cfg.score_hidden);
    m.head.W1 = glorot(2 * d, h, 2 * d, h, rng);
    m.head.b1 = Matrix(1, h);
    m.head.W2 = glorot(h, 1, h, 1, rng);
    m.head.b2 = Matrix(1, 1);
  } else {
    m.head.W1 = glorot(2 * d, 1, 2 * d, 1, rng);
    m.head.b1 = Matrix(1, 1);
  }
  return m;
}

const EdgeLayerParams& Model::edge_layer(int layer) const {
  if (layer < 0 || layer >= cfg_.prop.omega)
    throw std::out_of_range("edge_layer: layer " + std::to_string(layer) + " outside [0, " +
                            std::to_string(cfg_.prop.omega) + ")");
  return edge_layers[cfg_.enc.tied_layers ? 0 : static_cast<std::size_t>(layer)];
}

std::vector<NamedParam> Model::parameters() {
  std::vector<NamedParam> out;
  auto push = [&](std::string name, Matrix& m) {
    if (!m.empty()) out.push_back({std::move(name), &m});
  };
  push("R", R);
  for (std::size_t l = 0; l < edge_layers.size(); ++l) {
    const std::string p = "edge" + std::to_string(l) + ".";
    push(p + "W", edge_layers[l].W);
    push(p + "b", edge_layers[l].b);
    push(p + "time_w", edge_layers[l].time_w);
    push(p + "time_phi", edge_layers[l].time_phi);
    push(p + "g_W", edge_layers[l].g_W);
    push(p + "g_b", edge_layers[l].g_b);
  }
  for (std::size_t l = 0; l < agg_layers.size(); ++l) {
    const std::string p = "agg" + std::to_string(l) + ".";
    push(p + "proj_W", agg_layers[l].proj_W);
    push(p + "proj_b", agg_layers[l].proj_b);
    push(p + "ln_gain", agg_layers[l].ln_gain);
    push(p + "ln_bias", agg_layers[l].ln_bias);
  }
  push("head.W1", head.W1);
  push("head.b1", head.b1);
  push("head.W2", head.W2);
  push("head.b2", head.b2);
  return out;
}

std::vector<const Matrix*> Model::parameter_values() const {
  std::vector<const Matrix*> out;
  for (const NamedParam& p : const_cast<Model*>(this)->parameters()) out.push_back(p.value);
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const Matrix* m : parameter_values()) n += m->size();
  return n;
}

// Checkpoint layout (text, one token stream):
//   tkgpath-checkpoint 1
//   config <key> <value>          (repeated; every ModelConfig field)
//   param <name> <rows> <cols>    followed by rows*cols values (%.17g)
//   end
void Model::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
  const ModelConfig& c = cfg_;
  out << "config num_relations " << c.num_relations << '\n'
      << "config dim " << c.dim << '\n'
      << "config layers " << c.prop.omega << '\n'
      << "config merge " << to_string(c.prop.merge_op) << '\n'
      << "config aggregator " << to_string(c.prop.aggregator) << '\n'
      << "config layer_norm " << c.prop.use_layer_norm << '\n'
      << "config shortcut " << c.prop.use_shortcut << '\n'
      << "config boundary " << c.prop.include_boundary << '\n'
      << "config activation " << to_string(c.prop.activation) << '\n'
      << "config time_encoding " << c.enc.use_time_encoding << '\n'
      << "config time_sharing " << to_string(c.enc.time_sharing) << '\n'
      << "config edge_ffn " << to_string(c.enc.edge_ffn) << '\n'
      << "config edge_activation " << to_string(c.enc.edge_activation) << '\n'
      << "config tied_layers " << c.enc.tied_layers << '\n'
      << "config score_hidden " << c.score_hidden << '\n';
  out << std::setprecision(17);
  for (const NamedParam& p : const_cast<Model*>(this)->parameters()) {
    out << "param " << p.name << ' ' << p.value->rows() << ' ' << p.value->cols() << '\n';
    for (std::size_t r = 0; r < p.value->rows(); ++r) {
      for (std::size_t col = 0; col < p.value->cols(); ++col)
        out << (col ? " " : "") << (*p.value)(r, col);
      out << '\n';
    }
  }
  out << "end\n";
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

Model Model::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != kCheckpointMagic || version != kCheckpointVersion)
    throw std::runtime_error(path.string() + ": not a version " +
                             std::to_string(kCheckpointVersion) + " checkpoint");
  ModelConfig c;
  std::map<std::string, Matrix> arrays;
  std::string tag;
  auto bool_of = [](const std::string& v) { return v == "1" || v == "true"; };
  while (in >> tag) {
    if (tag == "end") break;
    if (tag == "config") {
      std::string key, value;
      in >> key >> value;
      if (key == "num_relations") c.num_relations = std::stoi(value);
      else if (key == "dim") c.dim = std::stoi(value);
      else if (key == "layers") c.prop.omega = std::stoi(value);
      else if (key == "merge") c.prop.merge_op = parse_merge_op(value);
      else if (key == "aggregator") c.prop.aggregator = parse_aggregator(value);
      else if (key == "layer_norm") c.prop.use_layer_norm = bool_of(value);
      else if (key == "shortcut") c.prop.use_shortcut = bool_of(value);
      else if (key == "boundary") c.prop.include_boundary = bool_of(value);
      else if (key == "activation") c.prop.activation = parse_activation(value);
      else if (key == "time_encoding") c.enc.use_time_encoding = bool_of(value);
      else if (key == "time_sharing") c.enc.time_sharing = parse_time_sharing(value);
      else if (key == "edge_ffn") c.enc.edge_ffn = parse_edge_ffn(value);
      else if (key == "edge_activation") c.enc.edge_activation = parse_activation(value);
      else if (key == "tied_layers") c.enc.tied_layers = bool_of(value);
      else if (key == "score_hidden") c.score_hidden = std::stoi(value);
      else throw std::runtime_error(path.string() + ": unknown config key " + key);
    } else if (tag == "param") {
      std::string name;
      std::size_t rows = 0, cols = 0;
      in >> name >> rows >> cols;
      Matrix m(rows, cols);
      for (double& x : m.values())
        if (!(in >> x)) throw std::runtime_error(path.string() + ": truncated array " + name);
      arrays[name] = std::move(m);
    } else {
      throw std::runtime_error(path.string() + ": unexpected token " + tag);
    }
  }
  if (tag != "end") throw std::runtime_error(path.string() + ": missing end marker");
  Model m = create(c, 0);
  for (NamedParam& p : m.parameters()) {
    auto it = arrays.find(p.name);
    if (it == arrays.end()) throw std::runtime_error(path.string() + ": missing array " + p.name);
    if (!it->second.same_shape(*p.value))
      throw std::runtime_error(path.string() + ": array " + p.name + " has shape " +
                               it->second.shape_string() + ", expected " +
                               p.value->shape_string());
    *p.value = std::move(it->second);
  }
  return m;
}

// ---------------------------------------------------------------------------

Var ParamBinder::operator()(const Matrix& m) {
  auto it = vars_.find(&m);
  if (it != vars_.end()) return it->second;
  Var v = tape_.parameter(m, requires_grad_);
  vars_.emplace(&m, v);
  return v;
}

Gradients::Gradients(const Model& model) {
  for (const Matrix* m : model.parameter_values()) blocks_.emplace_back(m->rows(), m->cols());
}

void Gradients::add_from(const Model& model, const ParamBinder& binder, double scale) {
  const auto values = model.parameter_values();
  if (blocks_.size() != values.size())
    throw std::logic_error("Gradients: model has " + std::to_string(values.size()) +
                           " arrays, buffer has " + std::to_string(blocks_.size()));
  const Tape& tape = const_cast<ParamBinder&>(binder).tape();
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto it = binder.bound().find(values[i]);
    if (it == binder.bound().end() || !tape.has_grad(it->second)) continue;
    const Matrix& g = tape.grad_view(it->second);
    Matrix& dst = blocks_[i];
    for (std::size_t k = 0; k < g.size(); ++k) dst[k] += scale * g[k];
  }
}

void Gradients::add(const Gradients& other, double scale) {
  for (std::size_t i = 0; i < blocks_.size(); ++i)
    for (std::size_t k = 0; k < blocks_[i].size(); ++k) blocks_[i][k] += scale * other.blocks_[i][k];
}

double Gradients::global_norm() const {
  double s = 0.0;
  for (const Matrix& b : blocks_)
    for (double v : b.values()) s += v * v;
  return std::sqrt(s);
}

void Gradients::scale(double s) {
  for (Matrix& b : blocks_)
    for (double& v : b.values()) v *= s;
}

}  // namespace tkgpath

#include "tkgpath/grad.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace tkgpath::grad {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

ConstMap as_eigen(const Matrix& m) {
  return ConstMap(m.data(), static_cast<Eigen::Index>(m.rows()),
                  static_cast<Eigen::Index>(m.cols()));
}
MutMap as_eigen(Matrix& m) {
  return MutMap(m.data(), static_cast<Eigen::Index>(m.rows()),
                static_cast<Eigen::Index>(m.cols()));
}

[[noreturn]] void shape_fail(const char* op, const Matrix& a, const Matrix& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + a.shape_string() + " and " +
                   b.shape_string());
}

Tape& same_tape(Var a, Var b, const char* op) {
  if (!a.valid() || !b.valid()) throw std::invalid_argument(std::string(op) + ": invalid Var");
  if (a.tape() != b.tape()) throw std::invalid_argument(std::string(op) + ": Vars from different tapes");
  return *a.tape();
}

Tape& tape_of(Var a, const char* op) {
  if (!a.valid()) throw std::invalid_argument(std::string(op) + ": invalid Var");
  return *a.tape();
}

enum class Broadcast { kSame, kRow, kCol };

Broadcast classify(const char* op, const Matrix& a, const Matrix& b) {
  if (a.same_shape(b)) return Broadcast::kSame;
  if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::kRow;
  if (b.cols() == 1 && b.rows() == a.rows()) return Broadcast::kCol;
  shape_fail(op, a, b);
}

std::size_t b_index(Broadcast mode, std::size_t r, std::size_t c, std::size_t cols) {
  switch (mode) {
    case Broadcast::kSame: return r * cols + c;
    case Broadcast::kRow: return c;
    case Broadcast::kCol: return r;
  }
  return 0;
}

// Sums an a-shaped gradient down to b's broadcast shape.
Matrix reduce_to(Broadcast mode, const Matrix& g, const Matrix& b_shape) {
  if (mode == Broadcast::kSame) return g;
  Matrix out(b_shape.rows(), b_shape.cols());
  for (std::size_t r = 0; r < g.rows(); ++r)
    for (std::size_t c = 0; c < g.cols(); ++c) out[b_index(mode, r, c, g.cols())] += g(r, c);
  return out;
}

template <typename Fwd, typename Deriv>
Var unary(Var a, const char* op, Fwd fwd, Deriv deriv) {
  Tape& t = tape_of(a, op);
  const Matrix& av = a.value();
  Matrix out(av.rows(), av.cols());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  return t.record(std::move(out), t.requires_grad(a), [a, deriv](Tape& tp, const Matrix& g) {
    const Matrix& x = tp.value(a);
    Matrix ga(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) ga[i] = g[i] * deriv(x[i]);
    tp.accumulate(a, ga);
  });
}

}  // namespace

// ---------------------------------------------------------------------------
// Matrix

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
  if (data_.size() != rows * cols)
    throw ShapeError("Matrix: " + std::to_string(data_.size()) + " values for shape (" +
                     std::to_string(rows) + "x" + std::to_string(cols) + ")");
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::row(std::vector<double> values) {
  const std::size_t n = values.size();
  return Matrix(1, n, std::move(values));
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

std::string Matrix::shape_string() const {
  std::ostringstream os;
  os << "(" << rows_ << "x" << cols_ << ")";
  return os.str();
}

// ---------------------------------------------------------------------------
// Tape

const Matrix& Var::value() const { return tape_->value(*this); }

const Tape::Node& Tape::node(Var v) const {
  if (v.tape() != this || v.id() < 0 || static_cast<std::size_t>(v.id()) >= nodes_.size())
    throw std::invalid_argument("Var does not belong to this tape");
  return nodes_[static_cast<std::size_t>(v.id())];
}

Tape::Node& Tape::node(Var v) {
  return const_cast<Node&>(static_cast<const Tape&>(*this).node(v));
}

Var Tape::constant(Matrix value) { return record(std::move(value), false, {}); }

Var Tape::variable(Matrix value) { return record(std::move(value), true, {}); }

Var Tape::parameter(const Matrix& external, bool requires_grad) {
  Node n;
  n.external = &external;
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::record(Matrix value, bool requires_grad, BackwardFn backward_fn) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backward = std::move(backward_fn);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

const Matrix& Tape::value(Var v) const {
  const Node& n = node(v);
  return n.external ? *n.external : n.value;
}

bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }

bool Tape::has_grad(Var v) const { return !node(v).grad.empty(); }

Matrix Tape::grad(Var v) const {
  const Node& n = node(v);
  if (!n.grad.empty()) return n.grad;
  const Matrix& val = value(v);
  return Matrix(val.rows(), val.cols());
}

const Matrix& Tape::grad_view(Var v) const { return node(v).grad; }

Matrix& Tape::grad_buffer(Var v) {
  Node& n = node(v);
  if (n.grad.empty()) {
    const Matrix& val = n.external ? *n.external : n.value;
    n.grad = Matrix(val.rows(), val.cols());
  }
  return n.grad;
}

void Tape::accumulate(Var target, const Matrix& g) {
  if (!requires_grad(target)) return;
  Matrix& buf = grad_buffer(target);
  if (!buf.same_shape(g)) shape_fail("accumulate", buf, g);
  as_eigen(buf) += as_eigen(g);
}

void Tape::zero_grad() {
  for (Node& n : nodes_) n.grad = Matrix();
}

void Tape::backward(Var output) {
  const Matrix& out = value(output);
  if (out.rows() != 1 || out.cols() != 1)
    throw ShapeError("backward: output must be 1x1, got " + out.shape_string());
  zero_grad();
  if (!requires_grad(output)) return;
  grad_buffer(output)[0] = 1.0;
  for (int i = output.id(); i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.backward || n.grad.empty()) continue;
    // The rule may accumulate into earlier nodes only, so a copy of this
    // gradient is not needed.
    n.backward(*this, n.grad);
  }
}

// ---------------------------------------------------------------------------
// Element-wise binary

Var add(Var a, Var b) {
  Tape& t = same_tape(a, b, "add");
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  const Broadcast mode = classify("add", av, bv);
  Matrix out = av;
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (std::size_t c = 0; c < av.cols(); ++c) out(r, c) += bv[b_index(mode, r, c, av.cols())];
  const bool rg = t.requires_grad(a) || t.requires_grad(b);
  return t.record(std::move(out), rg, [a, b, mode](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g);
    if (tp.requires_grad(b)) tp.accumulate(b, reduce_to(mode, g, tp.value(b)));
  });
}

Var sub(Var a, Var b) {
  Tape& t = same_tape(a, b, "sub");
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  const Broadcast mode = classify("sub", av, bv);
  Matrix out = av;
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (std::size_t c = 0; c < av.cols(); ++c) out(r, c) -= bv[b_index(mode, r, c, av.cols())];
  const bool rg = t.requires_grad(a) || t.requires_grad(b);
  return t.record(std::move(out), rg, [a, b, mode](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g);
    if (tp.requires_grad(b)) {
      Matrix neg = g;
      for (double& x : neg.values()) x = -x;
      tp.accumulate(b, reduce_to(mode, neg, tp.value(b)));
    }
  });
}

Var mul(Var a, Var b) {
  Tape& t = same_tape(a, b, "mul");
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  const Broadcast mode = classify("mul", av, bv);
  Matrix out = av;
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (std::size_t c = 0; c < av.cols(); ++c) out(r, c) *= bv[b_index(mode, r, c, av.cols())];
  const bool rg = t.requires_grad(a) || t.requires_grad(b);
  return t.record(std::move(out), rg, [a, b, mode](Tape& tp, const Matrix& g) {
    const Matrix& x = tp.value(a);
    const Matrix& y = tp.value(b);
    const std::size_t cols = x.cols();
    if (tp.requires_grad(a)) {
      Matrix ga(x.rows(), cols);
      for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = 0; c < cols; ++c) ga(r, c) = g(r, c) * y[b_index(mode, r, c, cols)];
      tp.accumulate(a, ga);
    }
    if (tp.requires_grad(b)) {
      Matrix gb(x.rows(), cols);
      for (std::size_t i = 0; i < x.size(); ++i) gb[i] = g[i] * x[i];
      tp.accumulate(b, reduce_to(mode, gb, y));
    }
  });
}

Var scale(Var a, double s) {
  Tape& t = tape_of(a, "scale");
  Matrix out = a.value();
  for (double& x : out.values()) x *= s;
  return t.record(std::move(out), t.requires_grad(a), [a, s](Tape& tp, const Matrix& g) {
    Matrix ga = g;
    for (double& x : ga.values()) x *= s;
    tp.accumulate(a, ga);
  });
}

Var add_scalar(Var a, double s) {
  Tape& t = tape_of(a, "add_scalar");
  Matrix out = a.value();
  for (double& x : out.values()) x += s;
  return t.record(std::move(out), t.requires_grad(a),
                  [a](Tape& tp, const Matrix& g) { tp.accumulate(a, g); });
}

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b, "matmul");
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.rows()) shape_fail("matmul", av, bv);
  Matrix out(av.rows(), bv.cols());
  as_eigen(out).noalias() = as_eigen(av) * as_eigen(bv);
  const bool rg = t.requires_grad(a) || t.requires_grad(b);
  return t.record(std::move(out), rg, [a, b](Tape& tp, const Matrix& g) {
    const Matrix& x = tp.value(a);
    const Matrix& y = tp.value(b);
    if (tp.requires_grad(a)) {
      Matrix& ga = tp.grad_buffer(a);
      as_eigen(ga).noalias() += as_eigen(g) * as_eigen(y).transpose();
    }
    if (tp.requires_grad(b)) {
      Matrix& gb = tp.grad_buffer(b);
      as_eigen(gb).noalias() += as_eigen(x).transpose() * as_eigen(g);
    }
  });
}

Var transpose(Var a) {
  Tape& t = tape_of(a, "transpose");
  const Matrix& av = a.value();
  Matrix out(av.cols(), av.rows());
  as_eigen(out) = as_eigen(av).transpose();
  return t.record(std::move(out), t.requires_grad(a), [a](Tape& tp, const Matrix& g) {
    Matrix ga(g.cols(), g.rows());
    as_eigen(ga) = as_eigen(g).transpose();
    tp.accumulate(a, ga);
  });
}

Var reshape(Var a, std::size_t rows, std::size_t cols) {
  Tape& t = tape_of(a, "reshape");
  const Matrix& av = a.value();
  if (rows * cols != av.size())
    throw ShapeError("reshape: cannot view " + av.shape_string() + " as (" +
                     std::to_string(rows) + "x" + std::to_string(cols) + ")");
  Matrix out(rows, cols, std::vector<double>(av.values().begin(), av.values().end()));
  const std::size_t ar = av.rows();
  const std::size_t ac = av.cols();
  return t.record(std::move(out), t.requires_grad(a), [a, ar, ac](Tape& tp, const Matrix& g) {
    tp.accumulate(a, Matrix(ar, ac, std::vector<double>(g.values().begin(), g.values().end())));
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  Tape& t = tape_of(parts[0], "concat_cols");
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  bool rg = false;
  for (Var p : parts) {
    same_tape(parts[0], p, "concat_cols");
    if (p.rows() != rows) shape_fail("concat_cols", parts[0].value(), p.value());
    cols += p.cols();
    rg = rg || t.requires_grad(p);
  }
  Matrix out(rows, cols);
  std::size_t offset = 0;
  for (Var p : parts) {
    const Matrix& pv = p.value();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy(pv.row_span(r).begin(), pv.row_span(r).end(), out.row_span(r).begin() + offset);
    offset += pv.cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return t.record(std::move(out), rg, [inputs](Tape& tp, const Matrix& g) {
    std::size_t off = 0;
    for (Var p : inputs) {
      const std::size_t pc = tp.value(p).cols();
      if (tp.requires_grad(p)) {
        Matrix gp(g.rows(), pc);
        for (std::size_t r = 0; r < g.rows(); ++r)
          std::copy_n(g.row_span(r).begin() + off, pc, gp.row_span(r).begin());
        tp.accumulate(p, gp);
      }
      off += pc;
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  Tape& t = tape_of(parts[0], "concat_rows");
  const std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  bool rg = false;
  for (Var p : parts) {
    same_tape(parts[0], p, "concat_rows");
    if (p.cols() != cols) shape_fail("concat_rows", parts[0].value(), p.value());
    rows += p.rows();
    rg = rg || t.requires_grad(p);
  }
  Matrix out(rows, cols);
  std::size_t offset = 0;
  for (Var p : parts) {
    const Matrix& pv = p.value();
    std::copy(pv.values().begin(), pv.values().end(), out.values().begin() + offset);
    offset += pv.size();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return t.record(std::move(out), rg, [inputs](Tape& tp, const Matrix& g) {
    std::size_t off = 0;
    for (Var p : inputs) {
      const Matrix& pv = tp.value(p);
      if (tp.requires_grad(p)) {
        Matrix gp(pv.rows(), pv.cols(),
                  std::vector<double>(g.values().begin() + off,
                                      g.values().begin() + off + pv.size()));
        tp.accumulate(p, gp);
      }
      off += pv.size();
    }
  });
}

// ---------------------------------------------------------------------------
// Element-wise unary

Var cos(Var a) {
  return unary(a, "cos", [](double x) { return std::cos(x); },
               [](double x) { return -std::sin(x); });
}

Var relu(Var a) {
  return unary(a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(Var a) {
  auto sig = [](double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  };
  return unary(a, "sigmoid", sig, [sig](double x) {
    const double s = sig(x);
    return s * (1.0 - s);
  });
}

Var log(Var a) {
  return unary(a, "log", [](double x) { return std::log(x); }, [](double x) { return 1.0 / x; });
}

Var sqrt(Var a) {
  return unary(a, "sqrt", [](double x) { return std::sqrt(x); },
               [](double x) { return 0.5 / std::sqrt(x); });
}

Var clamp(Var a, double lo, double hi) {
  return unary(a, "clamp", [lo, hi](double x) { return std::clamp(x, lo, hi); },
               [lo, hi](double x) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

// ---------------------------------------------------------------------------
// Layer norm

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  Tape& t = same_tape(x, gain, "layer_norm");
  same_tape(x, bias, "layer_norm");
  const Matrix& xv = x.value();
  const Matrix& gv = gain.value();
  const Matrix& bv = bias.value();
  if (gv.rows() != 1 || gv.cols() != xv.cols()) shape_fail("layer_norm(gain)", xv, gv);
  if (bv.rows() != 1 || bv.cols() != xv.cols()) shape_fail("layer_norm(bias)", xv, bv);
  const std::size_t rows = xv.rows();
  const std::size_t cols = xv.cols();
  Matrix xhat(rows, cols);
  std::vector<double> inv_sigma(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double mu = 0.0;
    for (double v : xv.row_span(r)) mu += v;
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (double v : xv.row_span(r)) var += (v - mu) * (v - mu);
    var /= static_cast<double>(cols);
    inv_sigma[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < cols; ++c) xhat(r, c) = (xv(r, c) - mu) * inv_sigma[r];
  }
  Matrix out(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out(r, c) = xhat(r, c) * gv[c] + bv[c];
  const bool rg = t.requires_grad(x) || t.requires_grad(gain) || t.requires_grad(bias);
  return t.record(std::move(out), rg,
                  [x, gain, bias, xhat = std::move(xhat), inv_sigma = std::move(inv_sigma)](
                      Tape& tp, const Matrix& g) {
                    const Matrix& gv2 = tp.value(gain);
                    const std::size_t n = xhat.cols();
                    if (tp.requires_grad(gain) || tp.requires_grad(bias)) {
                      Matrix dg(1, n);
                      Matrix db(1, n);
                      for (std::size_t r = 0; r < xhat.rows(); ++r)
                        for (std::size_t c = 0; c < n; ++c) {
                          dg[c] += g(r, c) * xhat(r, c);
                          db[c] += g(r, c);
                        }
                      tp.accumulate(gain, dg);
                      tp.accumulate(bias, db);
                    }
                    if (tp.requires_grad(x)) {
                      Matrix dx(xhat.rows(), n);
                      std::vector<double> dxhat(n);
                      for (std::size_t r = 0; r < xhat.rows(); ++r) {
                        double m1 = 0.0;
                        double m2 = 0.0;
                        for (std::size_t c = 0; c < n; ++c) {
                          dxhat[c] = g(r, c) * gv2[c];
                          m1 += dxhat[c];
                          m2 += dxhat[c] * xhat(r, c);
                        }
                        m1 /= static_cast<double>(n);
                        m2 /= static_cast<double>(n);
                        for (std::size_t c = 0; c < n; ++c)
                          dx(r, c) = inv_sigma[r] * (dxhat[c] - m1 - xhat(r, c) * m2);
                      }
                      tp.accumulate(x, dx);
                    }
                  });
}

// ---------------------------------------------------------------------------
// Reductions

Var segment_reduce(Var a, std::span<const int> segment, std::size_t num_segments,
                   Reduce kind) {
  Tape& t = tape_of(a, "segment_reduce");
  const Matrix& av = a.value();
  if (segment.size() != av.rows())
    throw ShapeError("segment_reduce: " + std::to_string(segment.size()) +
                     " segment ids for input " + av.shape_string());
  const std::size_t cols = av.cols();
  std::vector<int> seg(segment.begin(), segment.end());
  std::vector<double> count(num_segments, 0.0);
  for (int s : seg) {
    if (s < 0 || static_cast<std::size_t>(s) >= num_segments)
      throw std::out_of_range("segment_reduce: segment id " + std::to_string(s) +
                              " outside [0, " + std::to_string(num_segments) + ")");
    count[static_cast<std::size_t>(s)] += 1.0;
  }
  Matrix out(num_segments, cols);
  const bool rg = t.requires_grad(a);

  switch (kind) {
    case Reduce::kSum:
    case Reduce::kMean: {
      for (std::size_t i = 0; i < seg.size(); ++i) {
        auto dst = out.row_span(static_cast<std::size_t>(seg[i]));
        auto src = av.row_span(i);
        for (std::size_t c = 0; c < cols; ++c) dst[c] += src[c];
      }
      const bool is_mean = kind == Reduce::kMean;
      if (is_mean)
        for (std::size_t k = 0; k < num_segments; ++k)
          if (count[k] > 0)
            for (double& v : out.row_span(k)) v /= count[k];
      return t.record(std::move(out), rg,
                      [a, seg = std::move(seg), count = std::move(count), is_mean](
                          Tape& tp, const Matrix& g) {
                        Matrix& ga = tp.grad_buffer(a);
                        for (std::size_t i = 0; i < seg.size(); ++i) {
                          const auto k = static_cast<std::size_t>(seg[i]);
                          const double w = is_mean ? 1.0 / count[k] : 1.0;
                          auto gi = ga.row_span(i);
                          auto gk = g.row_span(k);
                          for (std::size_t c = 0; c < gi.size(); ++c) gi[c] += w * gk[c];
                        }
                      });
    }
    case Reduce::kMax:
    case Reduce::kMin: {
      const bool is_max = kind == Reduce::kMax;
      std::vector<int> arg(num_segments * cols, -1);
      for (std::size_t i = 0; i < seg.size(); ++i) {
        const auto k = static_cast<std::size_t>(seg[i]);
        for (std::size_t c = 0; c < cols; ++c) {
          int& best = arg[k * cols + c];
          const double v = av(i, c);
          if (best < 0 || (is_max ? v > out(k, c) : v < out(k, c))) {
            best = static_cast<int>(i);
            out(k, c) = v;
          }
        }
      }
      return t.record(std::move(out), rg, [a, arg = std::move(arg), cols](Tape& tp, const Matrix& g) {
        Matrix& ga = tp.grad_buffer(a);
        for (std::size_t j = 0; j < arg.size(); ++j)
          if (arg[j] >= 0) ga(static_cast<std::size_t>(arg[j]), j % cols) += g[j];
      });
    }
    case Reduce::kStd: {
      Matrix mu(num_segments, cols);
      for (std::size_t i = 0; i < seg.size(); ++i) {
        auto dst = mu.row_span(static_cast<std::size_t>(seg[i]));
        auto src = av.row_span(i);
        for (std::size_t c = 0; c < cols; ++c) dst[c] += src[c];
      }
      for (std::size_t k = 0; k < num_segments; ++k)
        if (count[k] > 0)
          for (double& v : mu.row_span(k)) v /= count[k];
      Matrix var(num_segments, cols);
      for (std::size_t i = 0; i < seg.size(); ++i) {
        const auto k = static_cast<std::size_t>(seg[i]);
        for (std::size_t c = 0; c < cols; ++c) {
          const double dlt = av(i, c) - mu(k, c);
          var(k, c) += dlt * dlt;
        }
      }
      for (std::size_t k = 0; k < num_segments; ++k) {
        if (count[k] == 0) continue;
        for (std::size_t c = 0; c < cols; ++c) {
          var(k, c) /= count[k];
          out(k, c) = std::sqrt(var(k, c) + kStdEps);
        }
      }
      return t.record(std::move(out), rg,
                      [a, seg = std::move(seg), count = std::move(count), mu = std::move(mu),
                       var = std::move(var)](Tape& tp, const Matrix& g) {
                        const Matrix& x = tp.value(a);
                        Matrix& ga = tp.grad_buffer(a);
                        for (std::size_t i = 0; i < seg.size(); ++i) {
                          const auto k = static_cast<std::size_t>(seg[i]);
                          for (std::size_t c = 0; c < x.cols(); ++c) {
                            const double denom = count[k] * std::sqrt(var(k, c) + kStdEps);
                            ga(i, c) += g(k, c) * (x(i, c) - mu(k, c)) / denom;
                          }
                        }
                      });
    }
  }
  throw std::logic_error("segment_reduce: unknown reduction");
}

Var reduce_rows(Var a, Reduce kind) {
  std::vector<int> seg(a.rows(), 0);
  return segment_reduce(a, seg, 1, kind);
}

Var reduce(Var a, int axis, Reduce kind) {
  if (axis == 0) return reduce_rows(a, kind);
  if (axis == 1) return transpose(reduce_rows(transpose(a), kind));
  throw std::invalid_argument("reduce: axis must be 0 or 1");
}

Var sum(Var a) {
  Tape& t = tape_of(a, "sum");
  const Matrix& av = a.value();
  double s = 0.0;
  for (double v : av.values()) s += v;
  const std::size_t r = av.rows();
  const std::size_t c = av.cols();
  return t.record(Matrix(1, 1, s), t.requires_grad(a), [a, r, c](Tape& tp, const Matrix& g) {
    tp.accumulate(a, Matrix(r, c, g[0]));
  });
}

Var mean(Var a) {
  const auto n = static_cast<double>(a.value().size());
  return scale(sum(a), n > 0 ? 1.0 / n : 0.0);
}

Var gather_rows(Var a, std::span<const int> index) {
  Tape& t = tape_of(a, "gather_rows");
  const Matrix& av = a.value();
  std::vector<int> idx(index.begin(), index.end());
  Matrix out(idx.size(), av.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || static_cast<std::size_t>(idx[i]) >= av.rows())
      throw std::out_of_range("gather_rows: index " + std::to_string(idx[i]) + " outside " +
                              av.shape_string());
    auto src = av.row_span(static_cast<std::size_t>(idx[i]));
    std::copy(src.begin(), src.end(), out.row_span(i).begin());
  }
  return t.record(std::move(out), t.requires_grad(a), [a, idx = std::move(idx)](Tape& tp, const Matrix& g) {
    Matrix& ga = tp.grad_buffer(a);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      auto dst = ga.row_span(static_cast<std::size_t>(idx[i]));
      auto src = g.row_span(i);
      for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
    }
  });
}

Var scatter_add_rows(Var a, std::span<const int> index, std::size_t num_rows) {
  return segment_reduce(a, index, num_rows, Reduce::kSum);
}

Var complex_rotate(Var h, Var w, double eps) {
  Tape& t = same_tape(h, w, "complex_rotate");
  const Matrix& hv = h.value();
  const Matrix& wv = w.value();
  const Broadcast mode = classify("complex_rotate", hv, wv);
  if (mode == Broadcast::kCol) shape_fail("complex_rotate", hv, wv);
  if (hv.cols() % 2 != 0)
    throw ShapeError("complex_rotate: even column count required, got " + hv.shape_string());
  Matrix out(hv.rows(), hv.cols());
  const std::size_t cols = hv.cols();
  for (std::size_t r = 0; r < hv.rows(); ++r)
    for (std::size_t c = 0; c < cols; c += 2) {
      const double re = wv[b_index(mode, r, c, cols)];
      const double im = wv[b_index(mode, r, c + 1, cols)];
      const double n = std::sqrt(re * re + im * im + eps);
      const double u = re / n;
      const double v = im / n;
      const double a = hv(r, c);
      const double b = hv(r, c + 1);
      out(r, c) = a * u - b * v;
      out(r, c + 1) = a * v + b * u;
    }
  const bool rg = t.requires_grad(h) || t.requires_grad(w);
  return t.record(std::move(out), rg, [h, w, mode, eps](Tape& tp, const Matrix& g) {
    const Matrix& hv2 = tp.value(h);
    const Matrix& wv2 = tp.value(w);
    const std::size_t cols2 = hv2.cols();
    Matrix gh(hv2.rows(), cols2);
    Matrix gw_full(hv2.rows(), cols2);
    for (std::size_t r = 0; r < hv2.rows(); ++r)
      for (std::size_t c = 0; c < cols2; c += 2) {
        const double re = wv2[b_index(mode, r, c, cols2)];
        const double im = wv2[b_index(mode, r, c + 1, cols2)];
        const double n = std::sqrt(re * re + im * im + eps);
        const double n3 = n * n * n;
        const double u = re / n;
        const double v = im / n;
        const double a = hv2(r, c);
        const double b = hv2(r, c + 1);
        const double g1 = g(r, c);
        const double g2 = g(r, c + 1);
        gh(r, c) = g1 * u + g2 * v;
        gh(r, c + 1) = -g1 * v + g2 * u;
        const double du = g1 * a + g2 * b;
        const double dv = -g1 * b + g2 * a;
        gw_full(r, c) = du * (1.0 / n - re * re / n3) + dv * (-re * im / n3);
        gw_full(r, c + 1) = du * (-re * im / n3) + dv * (1.0 / n - im * im / n3);
      }
    tp.accumulate(h, gh);
    if (tp.requires_grad(w)) tp.accumulate(w, reduce_to(mode, gw_full, wv2));
  });
}

// ---------------------------------------------------------------------------
// Finite differences

FiniteDiffReport finite_diff_compare(const std::function<double()>& f, std::span<double> x,
                                     std::span<const double> analytic,
                                     const FiniteDiffOptions& opts) {
  if (x.size() != analytic.size())
    throw ShapeError("finite_diff_compare: " + std::to_string(x.size()) + " coordinates but " +
                     std::to_string(analytic.size()) + " analytic gradients");
  FiniteDiffReport report;
  const double f0 = f();
  if (!std::isfinite(f0)) throw std::domain_error("finite_diff_compare: f(x) is not finite");
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    x[i] = x0 + opts.eps;
    const double fp = f();
    x[i] = x0 - opts.eps;
    const double fm = f();
    x[i] = x0;
    if (!std::isfinite(fp) || !std::isfinite(fm) || !std::isfinite(analytic[i]))
      throw std::domain_error("finite_diff_compare: non-finite value at coordinate " +
                              std::to_string(i));
    const double right = (fp - f0) / opts.eps;
    const double left = (f0 - fm) / opts.eps;
    const double scale_lr = std::max({1.0, std::abs(right), std::abs(left)});
    if (std::abs(right - left) > opts.kink_tol * scale_lr) {
      report.skipped.push_back(i);
      continue;
    }
    auto rel_error = [&](double central) {
      const double denom = std::max({std::abs(analytic[i]), std::abs(central), opts.abs_floor});
      return std::abs(analytic[i] - central) / denom;
    };
    double rel = rel_error((fp - fm) / (2.0 * opts.eps));
    // Truncation error shrinks quadratically with the step; a wrong analytic
    // gradient does not.
    double h = opts.eps;
    for (int k = 0; k < opts.refine_steps && rel > opts.tol; ++k) {
      h /= 10.0;
      x[i] = x0 + h;
      const double hp = f();
      x[i] = x0 - h;
      const double hm = f();
      x[i] = x0;
      rel = std::min(rel, rel_error((hp - hm) / (2.0 * h)));
    }
    ++report.checked;
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_index = i;
    }
  }
  report.passed = report.max_rel_error <= opts.tol;
  return report;
}

FiniteDiffReport finite_diff_check(const std::function<Var(Tape&, Var)>& f, Matrix x,
                                   const FiniteDiffOptions& opts) {
  Matrix analytic;
  {
    Tape tape;
    Var leaf = tape.variable(x);
    Var out = f(tape, leaf);
    tape.backward(out);
    analytic = tape.grad(leaf);
  }
  auto eval = [&]() {
    Tape tape;
    Var leaf = tape.constant(x);
    return f(tape, leaf).value()[0];
  };
  return finite_diff_compare(eval, x.values(), analytic.values(), opts);
}

}  // namespace tkgpath::grad

#pragma once

// Minimal reverse-mode differentiation over dense row-major matrices.
//
// A Tape records every operation in execution order together with its
// backward rule. Gradients are accumulated additively, so a value used by
// several downstream operations receives the sum of all branch gradients.
// One Tape is confined to one thread; independent tapes may run concurrently
// and may borrow the same (read-only) parameter storage.

#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tkgpath::grad {

inline constexpr double kLayerNormEps = 1e-5;
inline constexpr double kStdEps = 1e-8;
inline constexpr double kRotateEps = 1e-8;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  static Matrix identity(std::size_t n);
  static Matrix row(std::vector<double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> row_span(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row_span(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  void fill(double v);
  bool all_finite() const;
  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  std::string shape_string() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

enum class Reduce { kSum, kMean, kMax, kMin, kStd };

class Tape;

/// Handle to one recorded value on a Tape.
class Var {
 public:
  Var() = default;
  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr && id_ >= 0; }
  const Matrix& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  /// Receives the gradient of the recorded output; distributes it to inputs
  /// through Tape::accumulate.
  using BackwardFn = std::function<void(Tape&, const Matrix& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var variable(Matrix value);
  /// Leaf whose value lives outside the tape. The storage must outlive the
  /// tape and must not change while the tape is in use.
  Var parameter(const Matrix& external, bool requires_grad = true);

  const Matrix& value(Var v) const;
  bool requires_grad(Var v) const;
  bool has_grad(Var v) const;
  /// Gradient of the last backward() output with respect to v; a zero matrix
  /// of v's shape when nothing flowed into v.
  Matrix grad(Var v) const;
  /// The gradient buffer itself; empty when v received no gradient.
  const Matrix& grad_view(Var v) const;

  /// Seeds d(output)/d(output) = 1 and runs every backward rule in exact
  /// reverse recording order. output must be 1x1.
  void backward(Var output);
  void zero_grad();

  std::size_t size() const { return nodes_.size(); }

  Var record(Matrix value, bool requires_grad, BackwardFn backward_fn);
  void accumulate(Var target, const Matrix& g);
  /// Direct access to the (lazily allocated) gradient buffer of v.
  Matrix& grad_buffer(Var v);

 private:
  struct Node {
    Matrix value;
    const Matrix* external = nullptr;
    Matrix grad;
    bool requires_grad = false;
    BackwardFn backward;
  };
  const Node& node(Var v) const;
  Node& node(Var v);
  std::vector<Node> nodes_;
};

// Element-wise binary ops. b may match a exactly, be a 1 x cols row vector
// (broadcast over rows) or a rows x 1 column vector (broadcast over columns).
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);

Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var matmul(Var a, Var b);
Var transpose(Var a);
Var reshape(Var a, std::size_t rows, std::size_t cols);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);

Var cos(Var a);
Var relu(Var a);
Var sigmoid(Var a);
Var log(Var a);
Var sqrt(Var a);
/// Values clamped to [lo, hi]; gradient only flows where the input is inside.
Var clamp(Var a, double lo, double hi);

/// Normalizes each row to zero mean / unit variance, then row-wise gain and
/// bias (both 1 x cols).
Var layer_norm(Var x, Var gain, Var bias, double eps = kLayerNormEps);

/// Reduces all rows into one 1 x cols row.
Var reduce_rows(Var a, Reduce kind);
/// Reduces along axis 0 (rows) or axis 1 (columns).
Var reduce(Var a, int axis, Reduce kind);
/// Sum of every element, 1x1.
Var sum(Var a);
Var mean(Var a);

/// Row-segmented reduction: output row k reduces the input rows i with
/// segment[i] == k. Empty segments produce zeros. max/min route the gradient
/// to the first attaining row; std is the population deviation
/// sqrt(var + kStdEps), whose gradient vanishes at zero variance.
Var segment_reduce(Var a, std::span<const int> segment, std::size_t num_segments,
                   Reduce kind);
Var gather_rows(Var a, std::span<const int> index);
Var scatter_add_rows(Var a, std::span<const int> index, std::size_t num_rows);

/// Treats consecutive column pairs as complex numbers and multiplies h by w
/// normalized per pair to unit modulus.
Var complex_rotate(Var h, Var w, double eps = kRotateEps);

// ---------------------------------------------------------------------------
// Finite-difference gradient checking.

struct FiniteDiffOptions {
  double eps = 1e-4;
  double tol = 1e-4;
  /// Denominator floor of the relative error |a - n| / max(|a|, |n|, floor).
  double abs_floor = 1e-6;
  /// One-sided slopes differing by more than this (relative) mark a kink.
  double kink_tol = 1e-3;
  /// Coordinates above tol are re-measured with the step divided by 10 up to
  /// this many times.
  int refine_steps = 1;
};

struct FiniteDiffReport {
  std::size_t checked = 0;
  std::vector<std::size_t> skipped;  // coordinates at nondifferentiable points
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  bool passed = false;
};

/// Compares analytic[i] with central differences of f around x[i] for every
/// coordinate; x is perturbed in place and restored.
FiniteDiffReport finite_diff_compare(const std::function<double()>& f,
                                     std::span<double> x,
                                     std::span<const double> analytic,
                                     const FiniteDiffOptions& opts = {});

/// Convenience form: f builds a scalar on a fresh tape from leaf x.
FiniteDiffReport finite_diff_check(const std::function<Var(Tape&, Var)>& f, Matrix x,
                                   const FiniteDiffOptions& opts = {});

}  // namespace tkgpath::grad

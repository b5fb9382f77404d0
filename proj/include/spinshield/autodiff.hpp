#pragma once

// Small reverse-mode engine over dense rank-2 values. A Tape records one
// forward pass; backward() walks it once in reverse and accumulates
// vector-Jacobian products. Parameters live outside the tape and receive their
// gradient additively, so the optimizer owns zeroing.

#include "spinshield/spectral.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace spinshield::ad {

using Matrix = Eigen::MatrixXd;

class AutodiffError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(std::string n, Matrix v) : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class Tape;

class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  /// Gradient after backward(); a zero matrix if nothing reached this node.
  Matrix grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const;

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  /// Receives the node's upstream gradient; pushes contributions to parents.
  using BackwardFn = std::function<void(Tape&, const Matrix&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  /// Differentiable leaf whose gradient is read back via Var::grad().
  Var input(Matrix value);
  /// Leaf bound to a parameter; backward adds into param.grad.
  Var param(Parameter& p);

  /// Records a node computed from parents. fn may be empty when no parent
  /// requires a gradient.
  Var push(Matrix value, const std::vector<Var>& parents, BackwardFn fn);

  void accumulate(const Var& target, const Matrix& g);
  bool requires_grad(const Var& v) const { return nodes_[v.id()].requires_grad; }

  void backward(const Var& loss);

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  Matrix grad(std::size_t id) const;
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
    bool has_grad = false;
  };
  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// Elementwise and linear-algebra primitives.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
/// a (n x d) plus a 1 x d row broadcast over rows.
Var add_row(const Var& a, const Var& row);
Var matmul(const Var& a, const Var& b);
Var tanh(const Var& a);
Var exp(const Var& a);
/// Rejects non-positive entries; callers stabilize with an epsilon first.
Var log(const Var& a);
Var clamp_min(const Var& a, double floor);
Var softmax_rows(const Var& a);
Var log_softmax_rows(const Var& a);
Var sum(const Var& a);
Var mean(const Var& a);
/// Row sums as an n x 1 column.
Var sum_rows(const Var& a);
/// 1 x 1 value broadcast to rows x cols.
Var broadcast(const Var& scalar, Eigen::Index rows, Eigen::Index cols);
/// Identity forward, negated gradient backward.
Var grl(const Var& a);

// Fused ops.
/// Per-row standardization: (x - mean) / sqrt(var + eps), population variance.
Var standardize_rows(const Var& a, double eps);
/// Mean over rows of -log softmax(logits)[label], in log-sum-exp form.
Var cross_entropy_logits(const Var& logits, const std::vector<int>& labels);
/// Gaussian kernel matrix exp(-|a_i - b_j|^2 / (2 bandwidth^2)).
Var rbf_kernel(const Var& a, const Var& b, double bandwidth);
/// Time-domain rows from amplitude rows and fixed phase, through the spectral
/// recompose chokepoint. Linear in amplitude.
Var recompose_with_phase(const Var& amplitude, const Matrix& phase, const FrequencyGrid& grid);
/// (B*group) x T rows to B x (group*T): out(b, g*T + t) = in(b*group + g, t).
Var fold_rows(const Var& a, Eigen::Index group);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(double s, const Var& a) { return scale(a, s); }

}  // namespace spinshield::ad

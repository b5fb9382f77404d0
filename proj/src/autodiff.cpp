#include "spinshield/autodiff.hpp"

#include <cmath>

namespace spinshield::ad {

namespace {

std::string shape(const Matrix& m) { return std::to_string(m.rows()) + "x" + std::to_string(m.cols()); }

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw AutodiffError(std::string(op) + ": shape mismatch " + shape(a.value()) + " vs " + shape(b.value()));
}

void require_same_tape(const Var& a, const Var& b) {
  if (&a.tape() != &b.tape()) throw AutodiffError("operands belong to different tapes");
}

}  // namespace

const Matrix& Var::value() const { return tape_->value(id_); }
Matrix Var::grad() const { return tape_->grad(id_); }

double Var::scalar() const {
  const auto& v = value();
  if (v.size() != 1) throw AutodiffError("scalar() on a " + shape(v) + " value");
  return v(0, 0);
}

Var Tape::constant(Matrix value) {
  nodes_.push_back({std::move(value), {}, {}, nullptr, false, false});
  return {this, nodes_.size() - 1};
}

Var Tape::input(Matrix value) {
  nodes_.push_back({std::move(value), {}, {}, nullptr, true, false});
  return {this, nodes_.size() - 1};
}

Var Tape::param(Parameter& p) {
  nodes_.push_back({p.value, {}, {}, &p, true, false});
  return {this, nodes_.size() - 1};
}

Var Tape::push(Matrix value, const std::vector<Var>& parents, BackwardFn fn) {
  bool needs = false;
  for (const auto& p : parents) {
    if (&p.tape() != this) throw AutodiffError("operands belong to different tapes");
    needs = needs || nodes_[p.id()].requires_grad;
  }
  nodes_.push_back({std::move(value), {}, needs ? std::move(fn) : BackwardFn{}, nullptr, needs, false});
  return {this, nodes_.size() - 1};
}

void Tape::accumulate(const Var& target, const Matrix& g) {
  auto& node = nodes_[target.id()];
  if (!node.requires_grad) return;
  if (!node.has_grad) {
    node.grad = g;
    node.has_grad = true;
  } else {
    node.grad += g;
  }
}

Matrix Tape::grad(std::size_t id) const {
  const auto& node = nodes_[id];
  if (node.has_grad) return node.grad;
  return Matrix::Zero(node.value.rows(), node.value.cols());
}

void Tape::backward(const Var& loss) {
  if (&loss.tape() != this) throw AutodiffError("loss belongs to a different tape");
  if (loss.value().size() != 1) throw AutodiffError("backward needs a scalar loss, got " + shape(loss.value()));
  if (backward_done_) throw AutodiffError("backward already ran on this tape");
  backward_done_ = true;
  accumulate(loss, Matrix::Ones(1, 1));
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    auto& node = nodes_[i];
    if (!node.has_grad) continue;
    if (node.backward) {
      // Copy: the callback may push into nodes_ entries of lower index only,
      // but keep the upstream value stable regardless.
      const Matrix upstream = node.grad;
      node.backward(*this, upstream);
    }
    if (node.param) node.param->grad += node.grad;
  }
}

Var add(const Var& a, const Var& b) {
  require_same_tape(a, b);
  require_same_shape(a, b, "add");
  return a.tape().push(a.value() + b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_tape(a, b);
  require_same_shape(a, b, "sub");
  return a.tape().push(a.value() - b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, -g);
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_tape(a, b);
  require_same_shape(a, b, "mul");
  return a.tape().push(a.value().cwiseProduct(b.value()), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g.cwiseProduct(b.value()));
    t.accumulate(b, g.cwiseProduct(a.value()));
  });
}

Var scale(const Var& a, double s) {
  return a.tape().push(s * a.value(), {a}, [a, s](Tape& t, const Matrix& g) { t.accumulate(a, s * g); });
}

Var add_scalar(const Var& a, double s) {
  return a.tape().push(a.value().array() + s, {a}, [a](Tape& t, const Matrix& g) { t.accumulate(a, g); });
}

Var add_row(const Var& a, const Var& row) {
  require_same_tape(a, row);
  if (row.rows() != 1 || row.cols() != a.cols())
    throw AutodiffError("add_row: expected 1x" + std::to_string(a.cols()) + " row, got " + shape(row.value()));
  Matrix out = a.value().rowwise() + row.value().row(0);
  return a.tape().push(std::move(out), {a, row}, [a, row](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(row, g.colwise().sum());
  });
}

Var matmul(const Var& a, const Var& b) {
  require_same_tape(a, b);
  if (a.cols() != b.rows()) throw AutodiffError("matmul: shape mismatch " + shape(a.value()) + " * " + shape(b.value()));
  return a.tape().push(a.value() * b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.accumulate(a, g * b.value().transpose());
    if (t.requires_grad(b)) t.accumulate(b, a.value().transpose() * g);
  });
}

Var tanh(const Var& a) {
  Matrix y = a.value().array().tanh();
  return a.tape().push(y, {a}, [a, y](Tape& t, const Matrix& g) {
    t.accumulate(a, g.cwiseProduct((1.0 - y.array().square()).matrix()));
  });
}

Var exp(const Var& a) {
  Matrix y = a.value().array().exp();
  return a.tape().push(y, {a}, [a, y](Tape& t, const Matrix& g) { t.accumulate(a, g.cwiseProduct(y)); });
}

Var log(const Var& a) {
  if ((a.value().array() <= 0).any()) throw AutodiffError("log of a non-positive value");
  return a.tape().push(a.value().array().log(), {a}, [a](Tape& t, const Matrix& g) {
    t.accumulate(a, g.cwiseQuotient(a.value()));
  });
}

Var clamp_min(const Var& a, double floor) {
  Matrix y = a.value().cwiseMax(floor);
  return a.tape().push(y, {a}, [a, floor](Tape& t, const Matrix& g) {
    t.accumulate(a, (a.value().array() > floor).select(g, 0.0));
  });
}

Var log_softmax_rows(const Var& a) {
  const Matrix& x = a.value();
  Eigen::VectorXd lse(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double mx = x.row(i).maxCoeff();
    lse(i) = mx + std::log((x.row(i).array() - mx).exp().sum());
  }
  Matrix y = x.colwise() - lse;
  return a.tape().push(y, {a}, [a, y](Tape& t, const Matrix& g) {
    const Matrix p = y.array().exp();
    t.accumulate(a, g - p.cwiseProduct(g.rowwise().sum().replicate(1, g.cols())));
  });
}

Var softmax_rows(const Var& a) {
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Eigen::RowVectorXd e = (x.row(i).array() - x.row(i).maxCoeff()).exp();
    y.row(i) = e / e.sum();
  }
  return a.tape().push(y, {a}, [a, y](Tape& t, const Matrix& g) {
    const Eigen::VectorXd dot = g.cwiseProduct(y).rowwise().sum();
    t.accumulate(a, y.cwiseProduct(g - dot.replicate(1, g.cols())));
  });
}

Var sum(const Var& a) {
  Matrix y(1, 1);
  y(0, 0) = a.value().sum();
  return a.tape().push(y, {a}, [a](Tape& t, const Matrix& g) {
    t.accumulate(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
  });
}

Var mean(const Var& a) {
  const auto n = static_cast<double>(a.value().size());
  if (n == 0) throw AutodiffError("mean of an empty value");
  Matrix y(1, 1);
  y(0, 0) = a.value().sum() / n;
  return a.tape().push(y, {a}, [a, n](Tape& t, const Matrix& g) {
    t.accumulate(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0) / n));
  });
}

Var sum_rows(const Var& a) {
  return a.tape().push(a.value().rowwise().sum(), {a}, [a](Tape& t, const Matrix& g) {
    t.accumulate(a, g.replicate(1, a.cols()));
  });
}

Var broadcast(const Var& scalar, Eigen::Index rows, Eigen::Index cols) {
  if (scalar.value().size() != 1) throw AutodiffError("broadcast needs a 1x1 value, got " + shape(scalar.value()));
  return scalar.tape().push(Matrix::Constant(rows, cols, scalar.scalar()), {scalar}, [scalar](Tape& t, const Matrix& g) {
    t.accumulate(scalar, Matrix::Constant(1, 1, g.sum()));
  });
}

Var grl(const Var& a) {
  return a.tape().push(a.value(), {a}, [a](Tape& t, const Matrix& g) { t.accumulate(a, -g); });
}

Var standardize_rows(const Var& a, double eps) {
  const Matrix& x = a.value();
  const auto n = static_cast<double>(x.cols());
  const Eigen::VectorXd mu = x.rowwise().mean();
  const Matrix centered = x.colwise() - mu;
  const Eigen::VectorXd inv_sd = ((centered.array().square().rowwise().sum() / n) + eps).rsqrt();
  Matrix y = centered.array().colwise() * inv_sd.array();
  return a.tape().push(y, {a}, [a, y, inv_sd, n](Tape& t, const Matrix& g) {
    const Eigen::VectorXd g_mean = g.rowwise().mean();
    const Eigen::VectorXd gy_mean = g.cwiseProduct(y).rowwise().sum() / n;
    Matrix dx = g.colwise() - g_mean;
    dx -= (y.array().colwise() * gy_mean.array()).matrix();
    dx = dx.array().colwise() * inv_sd.array();
    t.accumulate(a, dx);
  });
}

Var cross_entropy_logits(const Var& logits, const std::vector<int>& labels) {
  const Matrix& x = logits.value();
  if (static_cast<Eigen::Index>(labels.size()) != x.rows())
    throw AutodiffError("cross_entropy: " + std::to_string(labels.size()) + " labels for " + std::to_string(x.rows()) + " rows");
  Matrix probs(x.rows(), x.cols());
  double total = 0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= x.cols()) throw AutodiffError("cross_entropy: label out of range");
    const double mx = x.row(i).maxCoeff();
    const Eigen::RowVectorXd e = (x.row(i).array() - mx).exp();
    const double z = e.sum();
    probs.row(i) = e / z;
    total += mx + std::log(z) - x(i, y);
  }
  const auto n = static_cast<double>(x.rows());
  Matrix out(1, 1);
  out(0, 0) = total / n;
  return logits.tape().push(out, {logits}, [logits, probs, labels, n](Tape& t, const Matrix& g) {
    Matrix d = probs;
    for (Eigen::Index i = 0; i < d.rows(); ++i) d(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
    t.accumulate(logits, (g(0, 0) / n) * d);
  });
}

Var rbf_kernel(const Var& a, const Var& b, double bandwidth) {
  require_same_tape(a, b);
  if (a.cols() != b.cols()) throw AutodiffError("rbf_kernel: feature width mismatch");
  if (!(bandwidth > 0)) throw AutodiffError("rbf_kernel: bandwidth must be positive");
  const Matrix& A = a.value();
  const Matrix& B = b.value();
  const double inv2s2 = 1.0 / (2.0 * bandwidth * bandwidth);
  Matrix K(A.rows(), B.rows());
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    for (Eigen::Index j = 0; j < B.rows(); ++j) K(i, j) = std::exp(-(A.row(i) - B.row(j)).squaredNorm() * inv2s2);
  const double inv_s2 = 1.0 / (bandwidth * bandwidth);
  return a.tape().push(K, {a, b}, [a, b, K, inv_s2](Tape& t, const Matrix& g) {
    const Matrix W = g.cwiseProduct(K);
    const Matrix& A = a.value();
    const Matrix& B = b.value();
    if (t.requires_grad(a)) {
      const Eigen::VectorXd w1 = W.rowwise().sum();
      t.accumulate(a, inv_s2 * (W * B - (A.array().colwise() * w1.array()).matrix()));
    }
    if (t.requires_grad(b)) {
      const Eigen::VectorXd w1 = W.colwise().sum().transpose();
      t.accumulate(b, inv_s2 * (W.transpose() * A - (B.array().colwise() * w1.array()).matrix()));
    }
  });
}

Var recompose_with_phase(const Var& amplitude, const Matrix& phase, const FrequencyGrid& grid) {
  Matrix out = recompose_rows(amplitude.value(), phase, grid);
  return amplitude.tape().push(std::move(out), {amplitude}, [amplitude, phase, grid](Tape& t, const Matrix& g) {
    // x(r, t) = (1/T) sum_k c_k A(r, k) cos(2 pi k t / T + P(r, k)), c_k = 2
    // except DC and Nyquist.
    const Eigen::Index T = grid.frame_count;
    const Eigen::Index K = grid.bin_count();
    Matrix dA(phase.rows(), K);
    for (Eigen::Index r = 0; r < phase.rows(); ++r)
      for (Eigen::Index k = 0; k < K; ++k) {
        const bool edge = k == 0 || (grid.has_nyquist() && k == grid.nyquist_bin());
        const double c = (edge ? 1.0 : 2.0) / static_cast<double>(T);
        double acc = 0;
        for (Eigen::Index tt = 0; tt < T; ++tt)
          acc += g(r, tt) * std::cos(2.0 * std::numbers::pi * static_cast<double>((k * tt) % T) / static_cast<double>(T) + phase(r, k));
        dA(r, k) = c * acc;
      }
    t.accumulate(amplitude, dA);
  });
}

Var fold_rows(const Var& a, Eigen::Index group) {
  const Matrix& x = a.value();
  if (group < 1 || x.rows() % group != 0) throw AutodiffError("fold_rows: row count not divisible by group");
  const Eigen::Index B = x.rows() / group;
  const Eigen::Index T = x.cols();
  Matrix y(B, group * T);
  for (Eigen::Index b = 0; b < B; ++b)
    for (Eigen::Index gi = 0; gi < group; ++gi) y.block(b, gi * T, 1, T) = x.row(b * group + gi);
  return a.tape().push(std::move(y), {a}, [a, group, B, T](Tape& t, const Matrix& g) {
    Matrix dx(B * group, T);
    for (Eigen::Index b = 0; b < B; ++b)
      for (Eigen::Index gi = 0; gi < group; ++gi) dx.row(b * group + gi) = g.block(b, gi * T, 1, T);
    t.accumulate(a, dx);
  });
}

}  // namespace spinshield::ad

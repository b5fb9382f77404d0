#pragma once

// Helpers shared by the unit tests and the acceptance runner.

#include "spinshield/autodiff.hpp"
#include "spinshield/rng.hpp"
#include "spinshield/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <vector>

namespace spinshield::testing {

inline Eigen::MatrixXd random_matrix(CounterRng& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = scale * rng.normal();
  return m;
}

inline PatchSignalClip random_clip(CounterRng& rng, Eigen::Index M, Eigen::Index T) {
  return {random_matrix(rng, M, T), 25.0};
}

/// O(T^2) complex DFT of one row, all T bins.
inline std::vector<std::complex<double>> direct_dft(const Eigen::RowVectorXd& x) {
  const auto T = x.size();
  std::vector<std::complex<double>> out(static_cast<std::size_t>(T));
  for (Eigen::Index k = 0; k < T; ++k) {
    std::complex<double> acc = 0;
    for (Eigen::Index t = 0; t < T; ++t)
      acc += x(t) * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k * t) / static_cast<double>(T));
    out[static_cast<std::size_t>(k)] = acc;
  }
  return out;
}

/// Inverse of a full T-bin spectrum, real part.
inline Eigen::RowVectorXd direct_idft(const std::vector<std::complex<double>>& X) {
  const auto T = static_cast<Eigen::Index>(X.size());
  Eigen::RowVectorXd out(T);
  for (Eigen::Index t = 0; t < T; ++t) {
    std::complex<double> acc = 0;
    for (Eigen::Index k = 0; k < T; ++k)
      acc += X[static_cast<std::size_t>(k)] *
             std::polar(1.0, 2.0 * std::numbers::pi * static_cast<double>(k * t) / static_cast<double>(T));
    out(t) = acc.real() / static_cast<double>(T);
  }
  return out;
}

/// Relative gradient error with an absolute floor for near-zero entries.
inline double rel_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

using InputLoss = std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)>;

/// Worst relative error between tape gradients and central differences, over
/// every entry of every input.
inline double fd_check_inputs(const InputLoss& f, const std::vector<Eigen::MatrixXd>& x, double h = 1e-5,
                              double floor = 1e-6) {
  std::vector<Eigen::MatrixXd> grads;
  {
    ad::Tape tape;
    std::vector<ad::Var> vars;
    for (const auto& m : x) vars.push_back(tape.input(m));
    auto loss = f(tape, vars);
    tape.backward(loss);
    for (const auto& v : vars) grads.push_back(v.grad());
  }
  auto eval = [&](const std::vector<Eigen::MatrixXd>& xs) {
    ad::Tape tape;
    std::vector<ad::Var> vars;
    for (const auto& m : xs) vars.push_back(tape.constant(m));
    return f(tape, vars).scalar();
  };
  double worst = 0;
  auto xs = x;
  for (std::size_t i = 0; i < xs.size(); ++i)
    for (Eigen::Index j = 0; j < xs[i].size(); ++j) {
      const double keep = xs[i](j);
      xs[i](j) = keep + h;
      const double up = eval(xs);
      xs[i](j) = keep - h;
      const double dn = eval(xs);
      xs[i](j) = keep;
      worst = std::max(worst, rel_error(grads[i](j), (up - dn) / (2 * h), floor));
    }
  return worst;
}

using ParamLoss = std::function<ad::Var(ad::Tape&)>;

/// Same check against Parameter leaves, probing at most `per_tensor` random
/// entries of each parameter. When `numeric` is given the differences are
/// taken of that objective instead of f.
inline double fd_check_params(const ParamLoss& f, const std::vector<ad::Parameter*>& params, CounterRng& rng,
                              int per_tensor = 12, const ParamLoss* numeric = nullptr, double h = 1e-5,
                              double floor = 1e-6) {
  for (auto* p : params) p->zero_grad();
  {
    ad::Tape tape;
    tape.backward(f(tape));
  }
  std::vector<Eigen::MatrixXd> grads;
  for (auto* p : params) grads.push_back(p->grad);
  const ParamLoss& g = numeric ? *numeric : f;
  auto eval = [&] {
    ad::Tape tape;
    return g(tape).scalar();
  };
  double worst = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& v = params[i]->value;
    const int probes = static_cast<int>(std::min<Eigen::Index>(per_tensor, v.size()));
    for (int n = 0; n < probes; ++n) {
      const auto j = probes == v.size() ? n : rng.uniform_int(0, v.size() - 1);
      const double keep = v(j);
      v(j) = keep + h;
      const double up = eval();
      v(j) = keep - h;
      const double dn = eval();
      v(j) = keep;
      worst = std::max(worst, rel_error(grads[i](j), (up - dn) / (2 * h), floor));
    }
  }
  for (auto* p : params) p->zero_grad();
  return worst;
}

}  // namespace spinshield::testing

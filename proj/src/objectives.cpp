#include "spinshield/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace spinshield::objectives {

namespace {

// Sum of entries in ascending order, so a matrix and its transpose give the
// same bits.
double canonical_sum(const Matrix& m) {
  std::vector<double> v(m.data(), m.data() + m.size());
  std::sort(v.begin(), v.end());
  double s = 0;
  for (double x : v) s += x;
  return s;
}

Var canonical_mean(const Var& a) {
  const auto n = static_cast<double>(a.value().size());
  Matrix y(1, 1);
  y(0, 0) = canonical_sum(a.value()) / n;
  return a.tape().push(y, {a}, [a, n](ad::Tape& t, const Matrix& g) {
    t.accumulate(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0) / n));
  });
}

// max(x, 0) on the value only; rounding can leave a V-statistic at -1e-17.
Var clamp_nonnegative_value(const Var& a) {
  Matrix y = a.value().cwiseMax(0.0);
  return a.tape().push(y, {a}, [a](ad::Tape& t, const Matrix& g) { t.accumulate(a, g); });
}

}  // namespace

void LossWeights::validate() const {
  if (!(gamma >= 0) || !(lambda_mask >= 0) || !(lambda_sym >= 0) || !(lambda_blind >= 0))
    throw std::invalid_argument("loss weights must be non-negative");
}

double median_bandwidth(const Matrix& a, const Matrix& b) {
  const Eigen::Index n = a.rows() + b.rows();
  auto row = [&](Eigen::Index i) { return i < a.rows() ? a.row(i) : b.row(i - a.rows()); };
  std::vector<double> d;
  d.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) d.push_back(std::sqrt((row(i) - row(j)).squaredNorm()));
  if (d.empty()) return 1.0;
  std::sort(d.begin(), d.end());
  const std::size_t mid = d.size() / 2;
  const double med = d.size() % 2 ? d[mid] : 0.5 * (d[mid - 1] + d[mid]);
  return med > 0 ? med : 1.0;
}

Var cross_entropy(const Var& logits, const std::vector<int>& labels) { return ad::cross_entropy_logits(logits, labels); }

Var mmd(const Var& a, const Var& b, const KernelSpec& kernel) {
  if (a.rows() == 0 || b.rows() == 0) throw std::invalid_argument("mmd: empty feature set");
  if (a.cols() != b.cols()) throw std::invalid_argument("mmd: feature width mismatch");
  const double bw = kernel.bandwidth ? *kernel.bandwidth : median_bandwidth(a.value(), b.value());
  if (!(bw > 0)) throw std::invalid_argument("mmd: bandwidth must be positive");
  const Var kaa = canonical_mean(ad::rbf_kernel(a, a, bw));
  const Var kbb = canonical_mean(ad::rbf_kernel(b, b, bw));
  const Var kab = canonical_mean(ad::rbf_kernel(a, b, bw));
  return clamp_nonnegative_value(ad::sub(ad::add(kaa, kbb), ad::scale(kab, 2.0)));
}

Var mask_regularizer(const Var& mask) {
  return ad::mean(ad::mul(ad::add_scalar(mask, -1.0), ad::add_scalar(mask, -1.0)));
}

Var generator_loss(const Var& ce_env, const Var& mmd_value, const Var& mask_reg, const LossWeights& w) {
  return ad::sub(ad::add(ce_env, ad::scale(mmd_value, w.gamma)), ad::scale(mask_reg, w.lambda_mask));
}

Var detector_loss(const Var& logits_clean, const Var& logits_env, const std::vector<int>& labels) {
  return ad::add(cross_entropy(logits_clean, labels), cross_entropy(logits_env, labels));
}

Var blindness_loss(const Var& domain_logits_clean, const Var& domain_logits_env) {
  const std::vector<int> zeros(static_cast<std::size_t>(domain_logits_clean.rows()), 0);
  const std::vector<int> ones(static_cast<std::size_t>(domain_logits_env.rows()), 1);
  return ad::add(cross_entropy(domain_logits_clean, zeros), cross_entropy(domain_logits_env, ones));
}

Var symmetric_kl(const Var& p_clean, const Var& p_env) {
  const Var p = ad::clamp_min(p_clean, kProbabilityFloor);
  const Var q = ad::clamp_min(p_env, kProbabilityFloor);
  // KL(p||q) + KL(q||p) = sum (p - q)(log p - log q)
  const Var per_row = ad::sum_rows(ad::mul(ad::sub(p, q), ad::sub(ad::log(p), ad::log(q))));
  return ad::scale(ad::mean(per_row), 0.5);
}

Var total_loss(const Var& det, const Var& sym, const Var& blind, const LossWeights& w) {
  return ad::add(ad::add(det, ad::scale(sym, w.lambda_sym)), ad::scale(blind, w.lambda_blind));
}

void to_json(nlohmann::json& j, const LossWeights& w) {
  j = {{"gamma", w.gamma}, {"lambda_mask", w.lambda_mask}, {"lambda_sym", w.lambda_sym}, {"lambda_blind", w.lambda_blind}};
}

void from_json(const nlohmann::json& j, LossWeights& w) {
  LossWeights d;
  w.gamma = j.value("gamma", d.gamma);
  w.lambda_mask = j.value("lambda_mask", d.lambda_mask);
  w.lambda_sym = j.value("lambda_sym", d.lambda_sym);
  w.lambda_blind = j.value("lambda_blind", d.lambda_blind);
  w.validate();
}

}  // namespace spinshield::objectives

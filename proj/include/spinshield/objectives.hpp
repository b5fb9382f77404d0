#pragma once

// Loss terms for the detector / generator minimax. All functions build nodes
// on the tape of their inputs.

#include "spinshield/autodiff.hpp"

#include <json.hpp>

#include <optional>
#include <vector>

namespace spinshield::objectives {

using ad::Matrix;
using ad::Var;

struct LossWeights {
  double gamma = 1.0;
  double lambda_mask = 0.1;
  double lambda_sym = 0.9;
  double lambda_blind = 0.7;

  void validate() const;
  bool operator==(const LossWeights&) const = default;
};

/// Gaussian RBF; an empty bandwidth means the median heuristic over the union
/// of both sets.
struct KernelSpec {
  std::optional<double> bandwidth;
};

constexpr double kProbabilityFloor = 1e-12;

/// Median pairwise Euclidean distance over the union of rows of a and b;
/// 1 when every row coincides.
double median_bandwidth(const Matrix& a, const Matrix& b);

/// Batch-mean cross entropy from logits.
Var cross_entropy(const Var& logits, const std::vector<int>& labels);

/// Biased (V-statistic) squared MMD. The bandwidth is resolved on values and
/// carries no gradient. Sums are order-independent, so mmd(a, b) and
/// mmd(b, a) agree bitwise.
Var mmd(const Var& a, const Var& b, const KernelSpec& kernel = {});

/// (1/N) * ||mask - 1||_F^2 with N the element count.
Var mask_regularizer(const Var& mask);

/// mean CE on env + gamma * MMD - lambda_mask * reg. This is the quantity the
/// generator ascends.
Var generator_loss(const Var& ce_env, const Var& mmd_value, const Var& mask_reg, const LossWeights& w);

/// Batch mean of CE(clean) + CE(env).
Var detector_loss(const Var& logits_clean, const Var& logits_env, const std::vector<int>& labels);

/// CE(q(h_clean), 0) + CE(q(h_env), 1); domain logits already include any GRL.
Var blindness_loss(const Var& domain_logits_clean, const Var& domain_logits_env);

/// Batch mean of 0.5 * (KL(p||q) + KL(q||p)) over floored probabilities.
Var symmetric_kl(const Var& p_clean, const Var& p_env);

Var total_loss(const Var& det, const Var& sym, const Var& blind, const LossWeights& w);

void to_json(nlohmann::json& j, const LossWeights& w);
void from_json(const nlohmann::json& j, LossWeights& w);

}  // namespace spinshield::objectives

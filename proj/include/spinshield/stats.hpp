#pragma once

#include <stdexcept>
#include <vector>

namespace spinshield::stats {

/// Mann-Whitney AUC: P(score of a positive > score of a negative), ties 0.5.
/// Throws when either class is absent.
double compute_auc(const std::vector<double>& scores, const std::vector<int>& labels);

/// Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|.
double ks_statistic(std::vector<double> a, std::vector<double> b);

struct MeanStd {
  double mean = 0;
  double std = 0;  // sample standard deviation, 0 for a single value
};

MeanStd mean_std(const std::vector<double>& values);

}  // namespace spinshield::stats

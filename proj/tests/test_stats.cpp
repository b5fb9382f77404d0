#include "spinshield/stats.hpp"
#include "spinshield/rng.hpp"

#include <gtest/gtest.h>

using namespace spinshield;
using namespace spinshield::stats;

namespace {

double pair_count_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] == 1 && y[j] == 0) {
        pairs += 1;
        wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
      }
  return wins / pairs;
}

}  // namespace

TEST(Auc, Examples) {
  EXPECT_EQ(compute_auc({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}), 1.0);
  EXPECT_EQ(compute_auc({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1}), 0.75);
  EXPECT_EQ(compute_auc({0.3, 0.3, 0.3, 0.3}, {0, 1, 0, 1}), 0.5);
}

TEST(Auc, MatchesPairCountingWithTies) {
  CounterRng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform_int(0, 60));
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (int i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng.uniform_int(0, 8)) / 8.0;
      y[i] = i < 2 ? i : static_cast<int>(rng.uniform_int(0, 1));
    }
    EXPECT_NEAR(compute_auc(s, y), pair_count_auc(s, y), 1e-12);
  }
}

TEST(Auc, Errors) {
  EXPECT_ANY_THROW(compute_auc({0.1, 0.2}, {1, 1}));
  EXPECT_ANY_THROW(compute_auc({0.1, 0.2}, {0, 2}));
  EXPECT_ANY_THROW(compute_auc({0.1}, {0, 1}));
}

TEST(Ks, Basics) {
  EXPECT_EQ(ks_statistic({1, 2, 3}, {1, 2, 3}), 0.0);
  EXPECT_EQ(ks_statistic({1, 2}, {3, 4}), 1.0);
  EXPECT_DOUBLE_EQ(ks_statistic({1, 2, 3, 4}, {3, 4, 5, 6}), 0.5);
}

TEST(MeanStd, Sample) {
  auto r = mean_std({1, 2, 3, 4});
  EXPECT_DOUBLE_EQ(r.mean, 2.5);
  EXPECT_DOUBLE_EQ(r.std, std::sqrt(5.0 / 3.0));
  EXPECT_EQ(mean_std({7}).std, 0.0);
}

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "ginnkan/stats.hpp"

using namespace ginnkan;

TEST(Stats, Median) {
  EXPECT_EQ(stats::median({3, 1, 2}), 2.0);
  EXPECT_EQ(stats::median({4, 1, 2, 3}), 2.5);
  EXPECT_TRUE(std::isnan(stats::median({})));
  const double inf = std::numeric_limits<double>::infinity();
  EXPECT_EQ(stats::median({1, inf, 2}), 2.0);
  EXPECT_EQ(stats::median({1, std::nan(""), inf}), inf);
}

TEST(Stats, AverageRanks) {
  const std::vector<double> a{0.3, 0.1, 0.2};
  EXPECT_EQ(stats::average_ranks(a), (std::vector<double>{3, 1, 2}));
  const std::vector<double> b{1, 1, 5, 0};
  EXPECT_EQ(stats::average_ranks(b), (std::vector<double>{2.5, 2.5, 4, 1}));
  const double inf = std::numeric_limits<double>::infinity();
  const std::vector<double> c{inf, std::nan(""), 1};
  EXPECT_EQ(stats::average_ranks(c), (std::vector<double>{2.5, 2.5, 1}));
}

#include <gtest/gtest.h>

#include <cmath>

#include "bcqlab/rng.hpp"

using bcqlab::Rng;

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
  Rng c(42), d(42);
  for (int i = 0; i < 1000; ++i) {
    ASSERT_EQ(c.uniform(), d.uniform());
    ASSERT_EQ(c.normal(), d.normal());
    ASSERT_EQ(c.uniform_int(17), d.uniform_int(17));
  }
}

TEST(Rng, DifferentSeedsDiverge) {
  Rng a(1), b(2);
  int differ = 0;
  for (int i = 0; i < 100; ++i) differ += a.next_u64() != b.next_u64();
  EXPECT_GT(differ, 90);
}

TEST(Rng, UniformRange) {
  Rng rng(7);
  for (int i = 0; i < 100000; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform(-3.0, 5.0);
    ASSERT_GE(u, -3.0);
    ASSERT_LT(u, 5.0);
  }
}

TEST(Rng, UniformMoments) {
  Rng rng(11);
  const int n = 200000;
  double sum = 0.0, sumsq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    sum += u;
    sumsq += u * u;
  }
  const double mean = sum / n;
  const double var = sumsq / n - mean * mean;
  EXPECT_NEAR(mean, 0.5, 0.005);
  EXPECT_NEAR(var, 1.0 / 12.0, 0.005);
}

TEST(Rng, NormalMoments) {
  Rng rng(13);
  const int n = 200000;
  double sum = 0.0, sumsq = 0.0, sum3 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    sumsq += z * z;
    sum3 += z * z * z;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.02);
  EXPECT_NEAR(sumsq / n, 1.0, 0.03);
  EXPECT_NEAR(sum3 / n, 0.0, 0.1);
}

TEST(Rng, NormalAffine) {
  Rng a(5), b(5);
  for (int i = 0; i < 100; ++i) EXPECT_DOUBLE_EQ(a.normal(2.0, 3.0), 2.0 + 3.0 * b.normal());
}

TEST(Rng, UniformIntRangeAndBalance) {
  Rng rng(3);
  const int n = 9;
  std::vector<int> counts(n, 0);
  const int draws = 90000;
  for (int i = 0; i < draws; ++i) {
    const int k = rng.uniform_int(n);
    ASSERT_GE(k, 0);
    ASSERT_LT(k, n);
    counts[k]++;
  }
  for (int k = 0; k < n; ++k) EXPECT_NEAR(counts[k], draws / n, 600);
}

TEST(Rng, CategoricalMatchesWeights) {
  Rng rng(23);
  const std::vector<double> p{0.1, 0.0, 0.55, 0.35};
  std::vector<int> counts(4, 0);
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) counts[rng.categorical(p)]++;
  EXPECT_NEAR(counts[0] / double(draws), 0.10, 0.01);
  EXPECT_EQ(counts[1], 0);
  EXPECT_NEAR(counts[2] / double(draws), 0.55, 0.01);
  EXPECT_NEAR(counts[3] / double(draws), 0.35, 0.01);
}

TEST(Rng, DeriveSeedSeparatesStreams) {
  const auto s1 = bcqlab::derive_seed(0, 0);
  const auto s2 = bcqlab::derive_seed(0, 1);
  const auto s3 = bcqlab::derive_seed(1, 0);
  EXPECT_NE(s1, s2);
  EXPECT_NE(s1, s3);
  EXPECT_NE(s2, s3);
  EXPECT_EQ(s1, bcqlab::derive_seed(0, 0));
}

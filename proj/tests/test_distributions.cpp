// Apache License, Version 2.0, refer to LICENSE.txt

#include <gtest/gtest.h>

#include <cmath>

#include "test_support.hpp"

using namespace pmclust;

TEST(LogGamma, MatchesFactorials) {
  EXPECT_NEAR(log_gamma(1.0), 0.0, 1e-14);
  EXPECT_NEAR(log_gamma(5.0), std::log(24.0), 1e-13);
  EXPECT_NEAR(log_gamma(0.5), 0.5 * std::log(M_PI), 1e-13);
}

TEST(LogPoisson, HandValues) {
  EXPECT_NEAR(log_poisson_pmf(3, 2.0), 3 * std::log(2.0) - 2.0 - std::log(6.0), 1e-13);
  EXPECT_NEAR(log_poisson_pmf(0, 7.5), -7.5, 1e-14);
  double total = 0.0;
  for (int x = 0; x < 80; ++x) total += std::exp(log_poisson_pmf(x, 9.3));
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(LogGammaPdf, ExponentialSpecialCase) {
  EXPECT_NEAR(log_gamma_pdf(2.0, 1.0, 3.0), std::log(3.0) - 6.0, 1e-13);
}

TEST(LogGammaPdf, IntegratesToOne) {
  const double mass = pmclust::testing::trapezoid(
      [](double t) { return t <= 0.0 ? 0.0 : std::exp(log_gamma_pdf(t, 2.5, 0.7)); }, 0.0, 80.0,
      200000);
  EXPECT_NEAR(mass, 1.0, 1e-6);
  const double mean = pmclust::testing::trapezoid(
      [](double t) { return t <= 0.0 ? 0.0 : t * std::exp(log_gamma_pdf(t, 2.5, 0.7)); }, 0.0,
      80.0, 200000);
  EXPECT_NEAR(mean, 2.5 / 0.7, 1e-5);
}

TEST(LogDirichlet, HandValues) {
  const std::vector<double> tau3{0.2, 0.3, 0.5};
  const std::vector<double> ones{1.0, 1.0, 1.0};
  EXPECT_NEAR(log_dirichlet_pdf(tau3, ones), std::log(2.0), 1e-13);
  const std::vector<double> tau2{0.4, 0.6};
  const std::vector<double> d23{2.0, 3.0};
  EXPECT_NEAR(log_dirichlet_pdf(tau2, d23), std::log(12.0 * 0.4 * 0.36), 1e-13);
}

TEST(LogDirichlet, BoundaryBehaviour) {
  const std::vector<double> corner{1.0, 0.0};
  const std::vector<double> ones{1.0, 1.0};
  EXPECT_NEAR(log_dirichlet_pdf(corner, ones), 0.0, 1e-14);
  const std::vector<double> half{0.5, 0.5};
  EXPECT_EQ(log_dirichlet_pdf(corner, half), kNegInf);
}

TEST(LogSumExp, StableAndExact) {
  const std::vector<double> big{1000.0, 1000.0};
  EXPECT_NEAR(log_sum_exp(big), 1000.0 + std::log(2.0), 1e-12);
  const std::vector<double> mixed{std::log(0.25), std::log(0.5), kNegInf};
  EXPECT_NEAR(log_sum_exp(mixed), std::log(0.75), 1e-14);
  const std::vector<double> none{kNegInf, kNegInf};
  EXPECT_EQ(log_sum_exp(none), kNegInf);
}

TEST(RandomSource, Deterministic) {
  RandomSource a(42), b(42), c(43);
  for (int t = 0; t < 10; ++t) {
    const auto va = a.next_u64();
    EXPECT_EQ(va, b.next_u64());
    EXPECT_NE(va, c.next_u64());
  }
  RandomSource base(9);
  auto s1 = base.substream({1, 2});
  auto s2 = base.substream({1, 2});
  auto s3 = base.substream({2, 1});
  const auto v1 = s1.next_u64();
  EXPECT_EQ(v1, s2.next_u64());
  EXPECT_NE(v1, s3.next_u64());
  EXPECT_NE(mix_seed(5, {1}), mix_seed(5, {2}));
  EXPECT_NE(mix_seed(5, {1, 0}), mix_seed(5, {0, 1}));
}

TEST(RandomSource, UniformOpenInterval) {
  RandomSource rng(1);
  double sum = 0.0;
  for (int t = 0; t < 100000; ++t) {
    const double u = rng.uniform();
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  EXPECT_NEAR(sum / 100000, 0.5, 0.005);
}

TEST(Samplers, PoissonAndGammaMoments) {
  RandomSource rng(11);
  const int n = 200000;
  double sp = 0.0, sg = 0.0, sg2 = 0.0;
  for (int t = 0; t < n; ++t) {
    sp += static_cast<double>(sample_poisson(3.7, rng));
    const double g = sample_gamma(2.0, 4.0, rng);
    sg += g;
    sg2 += g * g;
  }
  EXPECT_NEAR(sp / n, 3.7, 0.02);
  const double mg = sg / n;
  EXPECT_NEAR(mg, 0.5, 0.005);
  EXPECT_NEAR(sg2 / n - mg * mg, 2.0 / 16.0, 0.005);
  EXPECT_THROW(sample_gamma(-1.0, 1.0, rng), DomainError);
}

TEST(Samplers, LogGammaSmallShapeStaysFinite) {
  RandomSource rng(12);
  double sum = 0.0;
  const int n = 100000;
  for (int t = 0; t < n; ++t) {
    const double lg = sample_log_gamma_unit(0.05, rng);
    ASSERT_TRUE(std::isfinite(lg));
    sum += std::exp(lg);
  }
  EXPECT_NEAR(sum / n, 0.05, 0.004);
}

TEST(Samplers, DirichletMeansAndSimplex) {
  RandomSource rng(13);
  const std::vector<double> delta{0.1, 0.5, 2.0};
  std::vector<double> mean(3, 0.0);
  const int n = 100000;
  for (int t = 0; t < n; ++t) {
    const auto tau = sample_dirichlet(delta, rng);
    ASSERT_TRUE(is_simplex(tau.weights()));
    for (int k = 0; k < 3; ++k) mean[k] += tau[k];
  }
  EXPECT_NEAR(mean[0] / n, 0.1 / 2.6, 0.003);
  EXPECT_NEAR(mean[1] / n, 0.5 / 2.6, 0.003);
  EXPECT_NEAR(mean[2] / n, 2.0 / 2.6, 0.003);
}

TEST(Samplers, CategoricalFrequencies) {
  RandomSource rng(14);
  const std::vector<double> p{0.2, 0.0, 0.8};
  std::vector<int> hits(3, 0);
  for (int t = 0; t < 50000; ++t) ++hits[sample_categorical(p, rng)];
  EXPECT_EQ(hits[1], 0);
  EXPECT_NEAR(hits[0] / 50000.0, 0.2, 0.01);
  const std::vector<double> lw{std::log(0.2), kNegInf, std::log(0.8)};
  std::vector<int> hits_log(3, 0);
  for (int t = 0; t < 50000; ++t) ++hits_log[sample_categorical_log(lw, rng)];
  EXPECT_EQ(hits_log[1], 0);
  EXPECT_NEAR(hits_log[2] / 50000.0, 0.8, 0.01);
  const std::vector<double> bad{0.5, -0.1};
  EXPECT_THROW(sample_categorical(bad, rng), DomainError);
}

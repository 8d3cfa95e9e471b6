// Apache License, Version 2.0, refer to LICENSE.txt

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "test_support.hpp"

using namespace pmclust;
namespace pt = pmclust::testing;

namespace {

PointwiseLogLik make_pw(std::vector<std::vector<double>> rows) {
  PointwiseLogLik pw;
  pw.values = Matrix<double>(rows.size(), rows.front().size());
  for (std::size_t s = 0; s < rows.size(); ++s) {
    for (std::size_t i = 0; i < rows[s].size(); ++i) pw.values(s, i) = rows[s][i];
  }
  return pw;
}

ChainDraw pm_toy_draw(double l1, double l2, std::vector<std::vector<double>> tau,
                      std::vector<double> delta) {
  Matrix<double> lam(2, 1);
  lam(0, 0) = l1;
  lam(1, 0) = l2;
  ChainDraw d;
  d.lambda = RateMatrix(lam);
  d.tau = Matrix<double>(tau.size(), 2);
  for (std::size_t i = 0; i < tau.size(); ++i) {
    d.tau(i, 0) = tau[i][0];
    d.tau(i, 1) = tau[i][1];
  }
  d.delta = std::move(delta);
  return d;
}

double variance(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

}  // namespace

TEST(Waic, HandComputedTwoByTwo) {
  const auto r = waic(make_pw({{-1.0, -2.0}, {-3.0, -2.5}}));
  EXPECT_NEAR(r.lppd, -3.78528936589681144, 1e-12);
  EXPECT_NEAR(r.p_waic, 2.125, 1e-12);
  EXPECT_NEAR(r.waic, 11.8205787317936229, 1e-10);
  EXPECT_DOUBLE_EQ(r.waic, -2.0 * (r.lppd - r.p_waic));
  ASSERT_EQ(r.lppd_i.size(), 2u);
  EXPECT_NEAR(r.p_waic_i[0], 2.0, 1e-14);
}

TEST(Waic, SingleDrawAndConstantDraws) {
  const auto one = waic(make_pw({{-1.5, -0.5}}));
  EXPECT_EQ(one.p_waic, 0.0);
  EXPECT_NEAR(one.waic, 4.0, 1e-14);
  const auto flat = waic(make_pw({{-1.5, -0.5}, {-1.5, -0.5}, {-1.5, -0.5}}));
  EXPECT_EQ(flat.p_waic, 0.0);
  EXPECT_NEAR(flat.lppd, -2.0, 1e-14);
}

TEST(Waic, RejectsEmptyAndNonFinite) {
  PointwiseLogLik empty;
  EXPECT_THROW(waic(empty), ValidationError);
  EXPECT_THROW(waic(make_pw({{-1.0, std::nan("")}})), ValidationError);
}

TEST(Waic, InvariantUnderDrawAndUnitOrder) {
  RandomSource rng(1);
  for (int c = 0; c < 100; ++c) {
    std::vector<std::vector<double>> rows(6, std::vector<double>(5));
    for (auto& row : rows) {
      for (double& v : row) v = -10.0 * rng.uniform();
    }
    const auto base = waic(make_pw(rows));
    auto shuffled = rows;
    std::shuffle(shuffled.begin(), shuffled.end(), rng.engine());
    const auto perm = pt::random_permutation(5, rng);
    for (auto& row : shuffled) {
      const auto copy = row;
      for (std::size_t i = 0; i < 5; ++i) row[i] = copy[perm[i]];
    }
    EXPECT_NEAR(waic(make_pw(shuffled)).waic, base.waic, 1e-10);
  }
}

TEST(PointwiseConditional, HandComputedPmToy) {
  const auto x = pt::counts({{2}, {5}});
  const ModelSpec spec{ModelKind::PM, 2, {}};
  const auto chain = pt::make_chain(
      spec, x,
      {pm_toy_draw(1.5, 6.0, {{0.3, 0.7}, {0.9, 0.1}}, {1.0, 1.0}),
       pm_toy_draw(2.0, 4.0, {{0.5, 0.5}, {0.2, 0.8}}, {1.0, 1.0})});
  const auto r = waic(pointwise_conditional(chain, x));
  EXPECT_NEAR(r.lppd, -4.21063440093906401, 1e-10);
  EXPECT_NEAR(r.p_waic, 1.65129640100900962, 1e-10);
  EXPECT_NEAR(r.waic, 11.7238616038961473, 1e-10);
}

TEST(PointwiseConditional, SingleDrawEqualsUnitLikelihood) {
  RandomSource rng(2);
  const auto x = pt::random_counts(5, 3, rng);
  for (auto kind : {ModelKind::PM, ModelKind::MM, ModelKind::Mixture}) {
    const ModelSpec spec{kind, 3, {}};
    const auto chain = pt::make_chain(spec, x, {pt::random_draw(spec, 5, 3, rng)});
    const auto pw = pointwise_conditional(chain, x);
    const auto& d = chain.draws[0];
    for (std::size_t i = 0; i < 5; ++i) {
      double expected = 0.0;
      if (kind == ModelKind::PM) expected = pm_unit_log_likelihood(x, i, d.tau.row(i), d.lambda);
      if (kind == ModelKind::MM) expected = mm_unit_log_likelihood(x, i, d.tau.row(i), d.lambda);
      if (kind == ModelKind::Mixture) expected = mix_unit_log_likelihood(x, i, d.z[i], d.lambda);
      EXPECT_NEAR(pw.values(0, i), expected, 1e-10);
    }
  }
}

TEST(PointwiseConditional, ChainDataMismatch) {
  RandomSource rng(3);
  const auto x = pt::random_counts(5, 3, rng);
  const ModelSpec spec{ModelKind::PM, 2, {}};
  const auto chain = pt::make_chain(spec, x, {pt::random_draw(spec, 5, 3, rng)});
  const auto other = pt::random_counts(4, 3, rng);
  EXPECT_THROW(pointwise_conditional(chain, other), ValidationError);
}

TEST(PointwiseMarginal, PmMatchesQuadrature) {
  const auto x = pt::counts({{6}});
  const double l1 = 2.0, l2 = 9.0, d1 = 1.5, d2 = 2.5;
  const ModelSpec spec{ModelKind::PM, 2, {}};
  const auto chain = pt::make_chain(spec, x, {pm_toy_draw(l1, l2, {{0.5, 0.5}}, {d1, d2})});
  const double log_beta = std::lgamma(d1) + std::lgamma(d2) - std::lgamma(d1 + d2);
  auto lik = [&](double t) { return std::exp(log_poisson_pmf(6, std::pow(l1, t) * std::pow(l2, 1 - t))); };
  auto beta = [&](double t) {
    return t <= 0.0 || t >= 1.0 ? 0.0 : std::exp((d1 - 1) * std::log(t) + (d2 - 1) * std::log1p(-t) - log_beta);
  };
  const double p = pt::trapezoid([&](double t) { return lik(t) * beta(t); }, 0.0, 1.0, 400000);
  const double p2 = pt::trapezoid([&](double t) { return lik(t) * lik(t) * beta(t); }, 0.0, 1.0, 400000);
  const int m = 100000;
  const double se_log = std::sqrt((p2 - p * p) / m) / p;
  RandomSource rng(4);
  const auto pw = pointwise_marginal(chain, x, m, rng);
  EXPECT_EQ(pw.mode, WaicMode::Marginal);
  EXPECT_EQ(pw.mc_draws, m);
  EXPECT_LT(std::abs(pw.values(0, 0) - std::log(p)), 2.0 * se_log);
}

TEST(PointwiseMarginal, SingleClusterEqualsConditional) {
  RandomSource rng(5);
  const auto x = pt::random_counts(6, 3, rng);
  for (auto kind : {ModelKind::PM, ModelKind::MM, ModelKind::Mixture}) {
    const ModelSpec spec{kind, 1, {}};
    const auto chain = pt::make_chain(
        spec, x, {pt::random_draw(spec, 6, 3, rng), pt::random_draw(spec, 6, 3, rng)});
    const auto cond = pointwise_conditional(chain, x);
    const auto marg = pointwise_marginal(chain, x, 7, rng);
    for (std::size_t v = 0; v < cond.values.data().size(); ++v) {
      EXPECT_NEAR(cond.values.data()[v], marg.values.data()[v], 1e-12);
    }
  }
}

TEST(PointwiseMarginal, MmZOnlyEqualsConditional) {
  RandomSource rng(6);
  const auto x = pt::random_counts(6, 3, rng);
  const ModelSpec spec{ModelKind::MM, 3, {}};
  const auto chain = pt::make_chain(spec, x, {pt::random_draw(spec, 6, 3, rng)});
  const auto cond = pointwise_conditional(chain, x);
  const auto marg = pointwise_marginal(chain, x, 5, rng, MmMarginal::ZOnly);
  for (std::size_t v = 0; v < cond.values.data().size(); ++v) {
    EXPECT_NEAR(cond.values.data()[v], marg.values.data()[v], 1e-12);
  }
}

TEST(PointwiseMarginal, MixtureExactAndIndependentOfLabels) {
  const auto x = pt::counts({{2}, {5}});
  Matrix<double> lam(2, 1);
  lam(0, 0) = 1.5;
  lam(1, 0) = 6.0;
  ChainDraw d;
  d.lambda = RateMatrix(lam);
  d.pi = {0.3, 0.7};
  d.z = {0, 0};
  const ModelSpec spec{ModelKind::Mixture, 2, {}};
  auto chain = pt::make_chain(spec, x, {d});
  RandomSource rng(7);
  const auto a = pointwise_marginal(chain, x, 1, rng);
  auto pois = [](int k, double mu) { return std::pow(mu, k) * std::exp(-mu) / std::tgamma(k + 1.0); };
  EXPECT_NEAR(a.values(0, 0), std::log(0.3 * pois(2, 1.5) + 0.7 * pois(2, 6.0)), 1e-12);
  EXPECT_NEAR(a.values(0, 1), std::log(0.3 * pois(5, 1.5) + 0.7 * pois(5, 6.0)), 1e-12);
  chain.draws[0].z = {1, 0};
  const auto b = pointwise_marginal(chain, x, 1, rng);
  EXPECT_EQ(a.values, b.values);
}

TEST(PointwiseMarginal, ReproducibleAndValidated) {
  RandomSource rng(8);
  const auto x = pt::random_counts(4, 2, rng);
  const ModelSpec spec{ModelKind::PM, 2, {}};
  const auto chain = pt::make_chain(spec, x, {pt::random_draw(spec, 4, 2, rng)});
  RandomSource r1(3), r2(3);
  EXPECT_EQ(pointwise_marginal(chain, x, 20, r1).values, pointwise_marginal(chain, x, 20, r2, MmMarginal::TauAndZ, 3).values);
  EXPECT_THROW(pointwise_marginal(chain, x, 0, r1), ValidationError);
}

TEST(PointwiseMarginal, MonteCarloErrorShrinksWithDraws) {
  const auto x = pt::counts({{3, 9}});
  Matrix<double> lam(2, 2);
  lam(0, 0) = 1.0;
  lam(0, 1) = 12.0;
  lam(1, 0) = 8.0;
  lam(1, 1) = 2.0;
  ChainDraw d;
  d.lambda = RateMatrix(lam);
  d.tau = Matrix<double>(1, 2, 0.5);
  d.delta = {0.7, 0.9};
  const ModelSpec spec{ModelKind::PM, 2, {}};
  const auto chain = pt::make_chain(spec, x, {d});
  std::vector<double> sd;
  for (int m : {10, 100, 1000}) {
    std::vector<double> est;
    for (std::uint64_t seed = 0; seed < 60; ++seed) {
      RandomSource rng(seed);
      est.push_back(std::exp(pointwise_marginal(chain, x, m, rng).values(0, 0)));
    }
    sd.push_back(std::sqrt(variance(est)));
  }
  EXPECT_GT(sd[0] / sd[1], 2.0);
  EXPECT_LT(sd[0] / sd[1], 5.0);
  EXPECT_GT(sd[1] / sd[2], 2.0);
  EXPECT_LT(sd[1] / sd[2], 5.0);
}

TEST(Scan, ArgminTiesGoToSmallerK) {
  const std::vector<double> v{5.0, 3.0, 3.0, 4.0};
  EXPECT_EQ(argmin_waic(v), 1u);
}

TEST(Scan, SingleKSelected) {
  RandomSource rng(9);
  const auto x = pt::random_counts(20, 3, rng);
  mcmc::McmcConfig cfg;
  cfg.n_iterations = 200;
  cfg.burn_in = 100;
  cfg.thin = 5;
  const auto scan = scan_k(x, ModelKind::PM, 3, 3, cfg, {});
  ASSERT_EQ(scan.rows.size(), 1u);
  EXPECT_EQ(scan.selected_k, 3u);
  EXPECT_TRUE(scan.rows[0].selected);
  std::ostringstream os;
  write_scan_csv(os, scan);
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "model,K,waic,lppd,p_waic,selected_flag");
  EXPECT_THROW(scan_k(x, ModelKind::PM, 3, 2, cfg, {}), ValidationError);
}

TEST(Scan, MixtureSelfConsistency) {
  int hits = 0;
  for (std::uint64_t r = 0; r < 10; ++r) {
    RandomSource rng(mix_seed(100, {r}));
    Matrix<double> lam(2, 4);
    for (std::size_t j = 0; j < 4; ++j) {
      lam(0, j) = 2.0;
      lam(1, j) = 20.0;
    }
    const std::vector<double> pi{0.5, 0.5};
    const auto data = mix_generate(60, RateMatrix(lam), pi, rng);
    mcmc::McmcConfig cfg;
    cfg.n_iterations = 1500;
    cfg.burn_in = 500;
    cfg.thin = 5;
    cfg.seed = r;
    const auto scan = scan_k(data.counts, ModelKind::Mixture, 1, 4, cfg, {});
    hits += scan.selected_k == 2 ? 1 : 0;
  }
  EXPECT_GE(hits, 8);
}

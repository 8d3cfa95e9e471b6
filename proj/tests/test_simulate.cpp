// Apache License, Version 2.0, refer to LICENSE.txt

#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "test_support.hpp"

using namespace pmclust;
using namespace pmclust::sim;

namespace {

StudyConfig tiny_study() {
  StudyConfig cfg;
  cfg.n_replicates = 2;
  cfg.n_units = 30;
  cfg.n_features = 6;
  cfg.true_k = 2;
  cfg.delta_true = {0.5, 0.5};
  cfg.k_min = 1;
  cfg.k_max = 3;
  cfg.mcmc.n_iterations = 300;
  cfg.mcmc.burn_in = 100;
  cfg.mcmc.thin = 5;
  cfg.mc_draws = 10;
  cfg.master_seed = 17;
  return cfg;
}

}  // namespace

TEST(StudyRates, PositiveWithRequestedMean) {
  RandomSource rng(1);
  const auto lam = draw_study_rates(100, 100, 5.0, rng);
  double sum = 0.0;
  for (double v : lam.matrix().data()) {
    EXPECT_GE(v, kRateFloor);
    sum += v;
  }
  EXPECT_NEAR(sum / 10000.0, 5.0, 0.2);
  EXPECT_THROW(draw_study_rates(2, 2, 0.0, rng), DomainError);
}

TEST(StudyConfig, Validation) {
  StudyConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_EQ(cfg.mcmc.n_iterations, 5000);
  EXPECT_EQ(cfg.mcmc.burn_in, 1000);
  EXPECT_EQ(cfg.mcmc.thin, 10);
  cfg.delta_true = {0.5};
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = StudyConfig{};
  cfg.true_k = 7;
  cfg.delta_true.assign(7, 0.5);
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = StudyConfig{};
  cfg.k_min = 0;
  EXPECT_THROW(cfg.validate(), ValidationError);
}

TEST(Replicates, SeedsAreDisjointAndStable) {
  EXPECT_NE(data_seed(1, 0), fit_seed(1, 0, 2));
  EXPECT_NE(fit_seed(1, 0, 2), fit_seed(1, 1, 2));
  EXPECT_NE(fit_seed(1, 0, 2), fit_seed(1, 0, 3));
  const auto cfg = tiny_study();
  const auto a = generate_replicate(cfg, 1);
  const auto b = generate_replicate(cfg, 1);
  const auto c = generate_replicate(cfg, 0);
  EXPECT_EQ(a.counts.counts(), b.counts.counts());
  EXPECT_NE(a.counts.counts(), c.counts.counts());
  EXPECT_EQ(a.tau.cols(), 2u);
}

TEST(Study, DeterministicAndTallied) {
  auto cfg = tiny_study();
  const auto a = run_study(cfg);
  cfg.workers = 3;
  const auto b = run_study(cfg);
  EXPECT_EQ(a.selected_conditional, b.selected_conditional);
  EXPECT_EQ(a.selected_marginal, b.selected_marginal);
  ASSERT_EQ(a.fits.size(), 6u);
  for (std::size_t f = 0; f < a.fits.size(); ++f) {
    EXPECT_EQ(a.fits[f].conditional.waic, b.fits[f].conditional.waic);
    EXPECT_EQ(a.fits[f].marginal.waic, b.fits[f].marginal.waic);
  }
  EXPECT_TRUE(a.marginal_excludes_k1);
  int total_c = 0, total_m = 0;
  for (const auto& [k, n] : a.selection_counts_conditional) total_c += n;
  for (const auto& [k, n] : a.selection_counts_marginal) total_m += n;
  EXPECT_EQ(total_c, 2);
  EXPECT_EQ(total_m, 2);
  EXPECT_EQ(a.selection_counts_marginal.at(1), 0);

  std::ostringstream os;
  write_selection_csv(os, a);
  const std::string text = os.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "K,waic_c_count,waic_m_count");
  EXPECT_NE(text.find("\n1," + std::to_string(a.selection_counts_conditional.at(1)) + ",-\n"),
            std::string::npos);
  std::ostringstream reps;
  write_replicate_csv(reps, a);
  const std::string rows = reps.str();
  EXPECT_EQ(std::count(rows.begin(), rows.end(), '\n'), 7);
}

TEST(Study, ExtremeSeparationSingleCandidate) {
  StudyConfig cfg = tiny_study();
  cfg.n_replicates = 1;
  cfg.k_min = 2;
  cfg.k_max = 2;
  cfg.lambda_mean = 20.0;
  const auto result = run_study(cfg);
  EXPECT_EQ(result.selected_conditional.front(), 2u);
  EXPECT_EQ(result.selected_marginal.front(), 2u);
  EXPECT_FALSE(result.marginal_excludes_k1);
}

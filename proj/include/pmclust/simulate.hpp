// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <random>
#include <vector>

#include "pmclust/core.hpp"
#include "pmclust/distributions.hpp"
#include "pmclust/models.hpp"
#include "pmclust/parallel.hpp"
#include "pmclust/sampler.hpp"
#include "pmclust/selection.hpp"

namespace pmclust::sim {

inline constexpr double kRateFloor = 1e-6;

struct StudyConfig {
  std::size_t n_replicates = 10;
  std::size_t n_units = 200;
  std::size_t n_features = 25;
  std::size_t true_k = 4;
  std::vector<double> delta_true{0.5, 0.5, 0.5, 0.5};
  double lambda_mean = 5.0;
  std::size_t k_min = 2;
  std::size_t k_max = 6;
  mcmc::McmcConfig mcmc = desk_mcmc();
  int mc_draws = 50;
  Hyperparams hyper{};
  std::uint64_t master_seed = 0;
  bool include_k1_marginal = false;
  std::size_t workers = 1;

  static mcmc::McmcConfig desk_mcmc() {
    mcmc::McmcConfig c;
    c.n_iterations = 5000;
    c.burn_in = 1000;
    c.thin = 10;
    return c;
  }

  void validate() const {
    if (n_replicates < 1) throw ValidationError("need at least one replicate");
    if (n_units < 1 || n_features < 1) throw ValidationError("need N >= 1 and J >= 1");
    if (k_min < 1 || k_max < k_min) throw ValidationError("K range must satisfy 1 <= kmin <= kmax");
    if (true_k < k_min || true_k > k_max) throw ValidationError("true K must lie in the scan range");
    if (delta_true.size() != true_k) throw ValidationError("delta must have true_k entries");
    for (double d : delta_true) {
      if (!(d > 0.0)) throw ValidationError("delta entries must be positive");
    }
    if (!(lambda_mean > 0.0)) throw ValidationError("lambda mean must be positive");
    if (mc_draws < 1) throw ValidationError("need at least one Monte Carlo draw");
    hyper.validate();
    mcmc.validate();
  }
};

struct ReplicateFit {
  std::size_t replicate = 0;
  std::size_t k = 0;
  WaicResult conditional;
  WaicResult marginal;
};

struct StudyResult {
  std::map<std::size_t, int> selection_counts_conditional;
  std::map<std::size_t, int> selection_counts_marginal;
  std::vector<std::size_t> selected_conditional;  // per replicate
  std::vector<std::size_t> selected_marginal;
  std::vector<ReplicateFit> fits;                 // replicate-major, K ascending
  bool marginal_excludes_k1 = false;
};

/// i.i.d. exponential rates with the given mean, floored at kRateFloor.
inline RateMatrix draw_study_rates(std::size_t k, std::size_t j, double lambda_mean,
                                   RandomSource& rng) {
  if (!(lambda_mean > 0.0)) throw DomainError("rate mean must be positive");
  std::exponential_distribution<double> dist(1.0 / lambda_mean);
  Matrix<double> lam(k, j);
  for (double& v : lam.data()) v = std::max(dist(rng.engine()), kRateFloor);
  return RateMatrix(std::move(lam));
}

/// Seed of the fit for replicate r at K: h(master, r, K).
inline std::uint64_t fit_seed(std::uint64_t master, std::size_t replicate, std::size_t k) {
  return mix_seed(master, {replicate, k});
}

/// Seed of replicate r's generated data set. K = 0 never occurs in a scan,
/// so data and fit streams are disjoint.
inline std::uint64_t data_seed(std::uint64_t master, std::size_t replicate) {
  return mix_seed(master, {replicate, 0});
}

struct StudyData {
  RateMatrix lambda;
  Matrix<double> tau;
  CountMatrix counts;
};

inline StudyData generate_replicate(const StudyConfig& cfg, std::size_t replicate) {
  RandomSource rng(data_seed(cfg.master_seed, replicate));
  auto lambda = draw_study_rates(cfg.true_k, cfg.n_features, cfg.lambda_mean, rng);
  auto tau = sample_memberships(cfg.n_units, cfg.delta_true, rng);
  auto counts = pm_generate_counts(tau, lambda, rng);
  return {std::move(lambda), std::move(tau), std::move(counts)};
}

inline StudyResult run_study(const StudyConfig& cfg) {
  cfg.validate();
  const std::size_t n_k = cfg.k_max - cfg.k_min + 1;
  std::vector<StudyData> data;
  data.reserve(cfg.n_replicates);
  for (std::size_t r = 0; r < cfg.n_replicates; ++r) data.push_back(generate_replicate(cfg, r));

  StudyResult out;
  out.fits.resize(cfg.n_replicates * n_k);
  parallel_for(out.fits.size(), cfg.workers, [&](std::size_t task) {
    const std::size_t r = task / n_k;
    const std::size_t k = cfg.k_min + task % n_k;
    try {
      auto fit_cfg = cfg.mcmc;
      fit_cfg.seed = fit_seed(cfg.master_seed, r, k);
      const ModelSpec spec{ModelKind::PM, k, cfg.hyper};
      const Chain chain = mcmc::run_chain_pm(data[r].counts, spec, fit_cfg);
      chain.validate();
      RandomSource rng(mix_seed(fit_cfg.seed, {0x77616963ULL}));
      ReplicateFit fit;
      fit.replicate = r;
      fit.k = k;
      fit.conditional = waic(pointwise_conditional(chain, data[r].counts));
      fit.marginal = waic(pointwise_marginal(chain, data[r].counts, cfg.mc_draws, rng));
      out.fits[task] = std::move(fit);
    } catch (const std::exception& e) {
      throw InvariantError(detail::concat("replicate ", r + 1, ", K=", k, ": ", e.what()));
    }
  });

  out.marginal_excludes_k1 = !cfg.include_k1_marginal && cfg.k_min == 1 && cfg.k_max > 1;
  for (std::size_t k = cfg.k_min; k <= cfg.k_max; ++k) {
    out.selection_counts_conditional[k] = 0;
    out.selection_counts_marginal[k] = 0;
  }
  for (std::size_t r = 0; r < cfg.n_replicates; ++r) {
    std::vector<double> wc;
    std::vector<double> wm;
    for (std::size_t idx = 0; idx < n_k; ++idx) {
      const auto& f = out.fits[r * n_k + idx];
      wc.push_back(f.conditional.waic);
      wm.push_back(f.marginal.waic);
    }
    const std::size_t kc = cfg.k_min + argmin_waic(wc);
    const std::size_t offset = out.marginal_excludes_k1 ? 1 : 0;
    const std::size_t km =
        cfg.k_min + offset + argmin_waic(std::span<const double>(wm).subspan(offset));
    out.selected_conditional.push_back(kc);
    out.selected_marginal.push_back(km);
    ++out.selection_counts_conditional[kc];
    ++out.selection_counts_marginal[km];
  }
  return out;
}

/// Rows K, columns waic_c_count and waic_m_count; "-" marks an excluded K.
inline void write_selection_csv(std::ostream& os, const StudyResult& result) {
  os << "K,waic_c_count,waic_m_count\n";
  for (const auto& [k, count_c] : result.selection_counts_conditional) {
    os << k << ',' << count_c << ',';
    if (k == 1 && result.marginal_excludes_k1) {
      os << "-";
    } else {
      os << result.selection_counts_marginal.at(k);
    }
    os << '\n';
  }
}

inline void write_replicate_csv(std::ostream& os, const StudyResult& result) {
  os << "replicate,K,waic_c,lppd_c,p_waic_c,waic_m,lppd_m,p_waic_m,selected_c,selected_m\n";
  os.precision(17);
  for (const auto& f : result.fits) {
    os << f.replicate + 1 << ',' << f.k << ',' << f.conditional.waic << ',' << f.conditional.lppd
       << ',' << f.conditional.p_waic << ',' << f.marginal.waic << ',' << f.marginal.lppd << ','
       << f.marginal.p_waic << ',' << (result.selected_conditional[f.replicate] == f.k ? 1 : 0)
       << ',' << (result.selected_marginal[f.replicate] == f.k ? 1 : 0) << '\n';
  }
}

}  // namespace pmclust::sim

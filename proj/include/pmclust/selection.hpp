// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cmath>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "pmclust/core.hpp"
#include "pmclust/distributions.hpp"
#include "pmclust/models.hpp"
#include "pmclust/parallel.hpp"
#include "pmclust/sampler.hpp"

namespace pmclust {

enum class WaicMode { Conditional, Marginal };

inline std::string_view to_string(WaicMode m) {
  return m == WaicMode::Conditional ? "conditional" : "marginal";
}

inline WaicMode parse_waic_mode(std::string_view s) {
  if (s == "conditional") return WaicMode::Conditional;
  if (s == "marginal") return WaicMode::Marginal;
  throw ValidationError(detail::concat("unknown WAIC mode '", s, "'"));
}

/// For mixed membership, which latents the marginal WAIC integrates out.
/// Per-attribute labels are always summed analytically; TauAndZ also
/// averages over memberships drawn from Dirichlet(delta).
enum class MmMarginal { TauAndZ, ZOnly };

inline std::string_view to_string(MmMarginal m) {
  return m == MmMarginal::TauAndZ ? "tau_and_z" : "z_only";
}

inline MmMarginal parse_mm_marginal(std::string_view s) {
  if (s == "tau_and_z") return MmMarginal::TauAndZ;
  if (s == "z_only") return MmMarginal::ZOnly;
  throw ValidationError(detail::concat("unknown MM marginalization '", s, "'"));
}

/// S x N matrix of log p(x_i | draw s).
struct PointwiseLogLik {
  Matrix<double> values;
  WaicMode mode = WaicMode::Conditional;
  int mc_draws = 0;
};

struct WaicResult {
  double lppd = 0.0;
  double p_waic = 0.0;
  double waic = 0.0;
  std::vector<double> lppd_i;
  std::vector<double> p_waic_i;
};

namespace detail {

inline Matrix<double> log_factorials(const CountMatrix& x) {
  Matrix<double> out(x.n_units(), x.n_features());
  for (std::size_t i = 0; i < x.n_units(); ++i) {
    for (std::size_t j = 0; j < x.n_features(); ++j) {
      out(i, j) = log_gamma(static_cast<double>(x(i, j)) + 1.0);
    }
  }
  return out;
}

inline Matrix<double> log_rates(const RateMatrix& lambda) {
  Matrix<double> out(lambda.n_clusters(), lambda.n_features());
  for (std::size_t v = 0; v < out.data().size(); ++v) {
    out.data()[v] = std::log(lambda.matrix().data()[v]);
  }
  return out;
}

/// log p(x_i) under the blended Poisson at membership tau.
inline double pm_unit_loglik_fast(const CountMatrix& x, const Matrix<double>& log_fact,
                                  std::size_t i, std::span<const double> tau,
                                  const Matrix<double>& log_lam) {
  double out = 0.0;
  for (std::size_t j = 0; j < x.n_features(); ++j) {
    double lm = 0.0;
    for (std::size_t k = 0; k < tau.size(); ++k) lm += tau[k] * log_lam(k, j);
    out += poisson_lpmf_from_log(x(i, j), lm, std::exp(lm), log_fact(i, j));
  }
  return out;
}

/// Fills log P_k(x_ij) into comp (J x K) for one unit.
inline void component_log_pmfs(const CountMatrix& x, const Matrix<double>& log_fact, std::size_t i,
                               const RateMatrix& lambda, const Matrix<double>& log_lam,
                               Matrix<double>& comp) {
  for (std::size_t j = 0; j < x.n_features(); ++j) {
    for (std::size_t k = 0; k < lambda.n_clusters(); ++k) {
      comp(j, k) = poisson_lpmf_from_log(x(i, j), log_lam(k, j), lambda(k, j), log_fact(i, j));
    }
  }
}

inline double mm_unit_loglik_fast(const Matrix<double>& comp, std::span<const double> tau,
                                  std::vector<double>& log_tau) {
  log_tau.resize(tau.size());
  for (std::size_t k = 0; k < tau.size(); ++k) log_tau[k] = tau[k] > 0.0 ? std::log(tau[k]) : kNegInf;
  double out = 0.0;
  for (std::size_t j = 0; j < comp.rows(); ++j) out += mcmc::detail::lse_small(log_tau, comp.row(j));
  return out;
}

inline void require_draws(const Chain& chain, const CountMatrix& x) {
  require_compatible(chain, x);
  if (chain.draws.empty()) throw ValidationError("chain has no draws");
}

}  // namespace detail

inline PointwiseLogLik pointwise_conditional(const Chain& chain, const CountMatrix& x,
                                             std::size_t workers = 1) {
  detail::require_draws(chain, x);
  const std::size_t s_count = chain.draws.size();
  const std::size_t n = x.n_units();
  const auto log_fact = detail::log_factorials(x);
  PointwiseLogLik out{Matrix<double>(s_count, n), WaicMode::Conditional, 0};
  parallel_for(s_count, workers, [&](std::size_t s) {
    const auto& d = chain.draws[s];
    const auto log_lam = detail::log_rates(d.lambda);
    Matrix<double> comp(x.n_features(), chain.spec.k);
    std::vector<double> log_tau;
    for (std::size_t i = 0; i < n; ++i) {
      double v = 0.0;
      switch (chain.spec.kind) {
        case ModelKind::PM:
          v = detail::pm_unit_loglik_fast(x, log_fact, i, d.tau.row(i), log_lam);
          break;
        case ModelKind::MM:
          detail::component_log_pmfs(x, log_fact, i, d.lambda, log_lam, comp);
          v = detail::mm_unit_loglik_fast(comp, d.tau.row(i), log_tau);
          break;
        case ModelKind::Mixture:
          for (std::size_t j = 0; j < x.n_features(); ++j) {
            v += detail::poisson_lpmf_from_log(x(i, j), log_lam(d.z[i], j), d.lambda(d.z[i], j),
                                               log_fact(i, j));
          }
          break;
      }
      out.values(s, i) = v;
    }
  });
  return out;
}

/// Pointwise log-likelihoods with memberships integrated out. PM and MM
/// average over mc_draws memberships from Dirichlet(delta^s), each (s, i)
/// cell using its own sub-seeded stream; the mixture sums over components
/// exactly.
inline PointwiseLogLik pointwise_marginal(const Chain& chain, const CountMatrix& x, int mc_draws,
                                          RandomSource& rng,
                                          MmMarginal mm_variant = MmMarginal::TauAndZ,
                                          std::size_t workers = 1) {
  if (mc_draws < 1) throw ValidationError("marginal WAIC needs at least one Monte Carlo draw");
  detail::require_draws(chain, x);
  if (chain.spec.kind == ModelKind::MM && mm_variant == MmMarginal::ZOnly) {
    auto out = pointwise_conditional(chain, x, workers);
    out.mode = WaicMode::Marginal;
    return out;
  }
  const std::size_t s_count = chain.draws.size();
  const std::size_t n = x.n_units();
  const std::size_t k_count = chain.spec.k;
  const auto log_fact = detail::log_factorials(x);
  const RandomSource base(rng.next_u64());
  const double log_m = std::log(static_cast<double>(mc_draws));
  PointwiseLogLik out{Matrix<double>(s_count, n), WaicMode::Marginal, mc_draws};

  parallel_for(s_count, workers, [&](std::size_t s) {
    const auto& d = chain.draws[s];
    const auto log_lam = detail::log_rates(d.lambda);
    std::vector<double> tau(k_count);
    std::vector<double> log_tau;
    std::vector<double> terms(static_cast<std::size_t>(mc_draws));
    Matrix<double> comp(x.n_features(), k_count);
    for (std::size_t i = 0; i < n; ++i) {
      if (chain.spec.kind == ModelKind::Mixture) {
        std::vector<double> lw(k_count);
        for (std::size_t k = 0; k < k_count; ++k) {
          double v = std::log(d.pi[k]);
          for (std::size_t j = 0; j < x.n_features(); ++j) {
            v += detail::poisson_lpmf_from_log(x(i, j), log_lam(k, j), d.lambda(k, j),
                                               log_fact(i, j));
          }
          lw[k] = v;
        }
        out.values(s, i) = log_sum_exp(lw);
        continue;
      }
      if (k_count == 1) {
        tau[0] = 1.0;
        if (chain.spec.kind == ModelKind::PM) {
          out.values(s, i) = detail::pm_unit_loglik_fast(x, log_fact, i, tau, log_lam);
        } else {
          detail::component_log_pmfs(x, log_fact, i, d.lambda, log_lam, comp);
          out.values(s, i) = detail::mm_unit_loglik_fast(comp, tau, log_tau);
        }
        continue;
      }
      auto cell_rng = base.substream({s, i});
      if (chain.spec.kind == ModelKind::MM) {
        detail::component_log_pmfs(x, log_fact, i, d.lambda, log_lam, comp);
      }
      for (int m = 0; m < mc_draws; ++m) {
        sample_dirichlet_into(d.delta, cell_rng, tau);
        terms[static_cast<std::size_t>(m)] =
            chain.spec.kind == ModelKind::PM
                ? detail::pm_unit_loglik_fast(x, log_fact, i, tau, log_lam)
                : detail::mm_unit_loglik_fast(comp, tau, log_tau);
      }
      out.values(s, i) = log_sum_exp(terms) - log_m;
    }
  });
  return out;
}

/// lppd_i = log mean_s exp(pw[s,i]); p_waic_i = sample variance over s
/// (denominator S - 1); waic = -2 (lppd - p_waic).
inline WaicResult waic(const PointwiseLogLik& pw) {
  const std::size_t s_count = pw.values.rows();
  const std::size_t n = pw.values.cols();
  if (s_count == 0) throw ValidationError("WAIC needs at least one draw");
  WaicResult r;
  r.lppd_i.resize(n);
  r.p_waic_i.resize(n);
  std::vector<double> col(s_count);
  const double log_s = std::log(static_cast<double>(s_count));
  for (std::size_t i = 0; i < n; ++i) {
    double mean = 0.0;
    for (std::size_t s = 0; s < s_count; ++s) {
      col[s] = pw.values(s, i);
      if (!std::isfinite(col[s])) {
        throw ValidationError(detail::concat("non-finite pointwise log-likelihood at draw ", s + 1,
                                             ", unit ", i + 1));
      }
      mean += col[s];
    }
    mean /= static_cast<double>(s_count);
    double var = 0.0;
    if (s_count > 1) {
      for (double v : col) var += (v - mean) * (v - mean);
      var /= static_cast<double>(s_count - 1);
    }
    r.lppd_i[i] = log_sum_exp(col) - log_s;
    r.p_waic_i[i] = var;
    r.lppd += r.lppd_i[i];
    r.p_waic += var;
  }
  r.waic = -2.0 * (r.lppd - r.p_waic);
  return r;
}

// ---------------------------------------------------------------------------
// K scan

struct ScanOptions {
  WaicMode mode = WaicMode::Marginal;
  int mc_draws = 100;
  MmMarginal mm_variant = MmMarginal::TauAndZ;
  PmForm pm_form = PmForm::Blended;
  std::size_t workers = 1;
};

struct ScanRow {
  std::size_t k = 0;
  WaicResult result;
  bool selected = false;
};

struct ScanResult {
  ModelKind kind = ModelKind::PM;
  WaicMode mode = WaicMode::Marginal;
  std::vector<ScanRow> rows;
  std::size_t selected_k = 0;
};

/// Index of the smallest WAIC; ties go to the earlier (smaller K) entry.
inline std::size_t argmin_waic(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t v = 1; v < values.size(); ++v) {
    if (values[v] < values[best]) best = v;
  }
  return best;
}

/// Seed for the fit at K inside a scan: h(seed, K).
inline std::uint64_t scan_fit_seed(std::uint64_t seed, std::size_t k) { return mix_seed(seed, {k}); }

inline ScanResult scan_k(const CountMatrix& x, ModelKind kind, std::size_t k_min, std::size_t k_max,
                         const mcmc::McmcConfig& cfg, const Hyperparams& hyper,
                         const ScanOptions& opts = {}) {
  if (k_min < 1 || k_max < k_min) throw ValidationError("K range must satisfy 1 <= kmin <= kmax");
  const std::size_t count = k_max - k_min + 1;
  ScanResult out;
  out.kind = kind;
  out.mode = opts.mode;
  out.rows.resize(count);
  parallel_for(count, opts.workers, [&](std::size_t idx) {
    const std::size_t k = k_min + idx;
    ModelSpec spec{kind, k, hyper, opts.pm_form};
    auto fit_cfg = cfg;
    fit_cfg.seed = scan_fit_seed(cfg.seed, k);
    const Chain chain = mcmc::run_chain(x, spec, fit_cfg);
    PointwiseLogLik pw;
    if (opts.mode == WaicMode::Conditional) {
      pw = pointwise_conditional(chain, x);
    } else {
      RandomSource rng(mix_seed(fit_cfg.seed, {0x77616963ULL}));
      pw = pointwise_marginal(chain, x, opts.mc_draws, rng, opts.mm_variant);
    }
    out.rows[idx] = ScanRow{k, waic(pw), false};
  });
  std::vector<double> values;
  for (const auto& r : out.rows) values.push_back(r.result.waic);
  const std::size_t best = argmin_waic(values);
  out.rows[best].selected = true;
  out.selected_k = out.rows[best].k;
  return out;
}

inline void write_scan_csv(std::ostream& os, const ScanResult& scan) {
  os << "model,K,waic,lppd,p_waic,selected_flag\n";
  os.precision(17);
  for (const auto& r : scan.rows) {
    os << to_string(scan.kind) << ',' << r.k << ',' << r.result.waic << ',' << r.result.lppd << ','
       << r.result.p_waic << ',' << (r.selected ? 1 : 0) << '\n';
  }
}

}  // namespace pmclust

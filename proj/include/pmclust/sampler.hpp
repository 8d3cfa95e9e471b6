// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "pmclust/core.hpp"
#include "pmclust/distributions.hpp"
#include "pmclust/metropolis.hpp"
#include "pmclust/models.hpp"
#include "pmclust/transforms.hpp"

namespace pmclust::mcmc {

enum class InitStrategy { PriorDraw, DataMoment };

inline InitStrategy parse_init_strategy(std::string_view s) {
  if (s == "prior") return InitStrategy::PriorDraw;
  if (s == "moment") return InitStrategy::DataMoment;
  throw ValidationError(detail::concat("unknown init strategy '", s, "'"));
}

struct McmcConfig {
  std::int64_t n_iterations = 20000;
  std::int64_t burn_in = 5000;
  std::int64_t thin = 50;
  std::uint64_t seed = 0;
  bool adapt_during_burn_in = true;
  double target_accept_scalar = 0.44;
  double target_accept_block = 0.234;
  double adapt_kappa = 1.0;
  InitStrategy init = InitStrategy::DataMoment;

  void validate() const {
    if (n_iterations < 1) throw ValidationError("need at least one iteration");
    if (burn_in < 0 || burn_in >= n_iterations) {
      throw ValidationError("burn-in must be in [0, n_iterations)");
    }
    if (thin < 1) throw ValidationError("thin must be at least 1");
    if (!(target_accept_scalar > 0.0 && target_accept_scalar < 1.0) ||
        !(target_accept_block > 0.0 && target_accept_block < 1.0)) {
      throw ValidationError("target acceptance rates must lie in (0, 1)");
    }
  }

  std::int64_t retained() const { return (n_iterations - burn_in) / thin; }
};

namespace detail {

inline constexpr double kInitialTauScale = 0.5;
inline constexpr double kInitialRateScale = 0.1;
inline constexpr double kInitialDeltaScale = 0.5;
inline constexpr double kInitNoiseSd = 0.2;

/// Starting rates. Moment starts scale the smoothed column mean by
/// lognormal noise per cluster; prior starts draw from Gamma(alpha, beta).
inline Matrix<double> initial_rates(const CountMatrix& x, const ModelSpec& spec, InitStrategy init,
                                    RandomSource& rng) {
  const std::size_t n = x.n_units();
  const std::size_t n_features = x.n_features();
  Matrix<double> lam(spec.k, n_features);
  for (std::size_t j = 0; j < n_features; ++j) {
    double col = 0.0;
    for (std::size_t i = 0; i < n; ++i) col += static_cast<double>(x(i, j));
    const double centre = (col + spec.hyper.alpha) / (static_cast<double>(n) + spec.hyper.beta);
    for (std::size_t k = 0; k < spec.k; ++k) {
      double v = init == InitStrategy::DataMoment
                     ? centre * std::exp(kInitNoiseSd * rng.normal())
                     : sample_gamma(spec.hyper.alpha, spec.hyper.beta, rng);
      lam(k, j) = std::max(v, 1e-10);
    }
  }
  return lam;
}

inline double initial_delta(const Hyperparams& h) {
  return (1.0 > h.a && 1.0 < h.b) ? 1.0 : 0.5 * (h.a + h.b);
}

inline double gamma_prior_log_scale(double log_lambda, double lambda, const Hyperparams& h) {
  return h.alpha * std::log(h.beta) - log_gamma(h.alpha) + (h.alpha - 1.0) * log_lambda -
         h.beta * lambda;
}

inline double lse_small(std::span<const double> a, std::span<const double> b) {
  double m = kNegInf;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, a[k] + b[k]);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += std::exp(a[k] + b[k] - m);
  return m + std::log(s);
}

/// Adaptive random-walk Metropolis over (tau, log lambda, delta) for the
/// partial and mixed membership models. Memberships move on the additive
/// log-ratio scale, rates on the log scale and concentrations on the logit
/// scale of (a, b). The log posterior is tracked incrementally and resynced
/// from scratch after each retained draw.
template <ModelKind Kind>
class MembershipSampler {
  static_assert(Kind == ModelKind::PM || Kind == ModelKind::MM);

 public:
  MembershipSampler(const CountMatrix& x, const ModelSpec& spec, const McmcConfig& cfg)
      : x_(x),
        spec_(spec),
        cfg_(cfg),
        rng_(cfg.seed),
        n_(x.n_units()),
        j_(x.n_features()),
        k_(spec.k),
        weighted_(Kind == ModelKind::PM && spec.pm_form == PmForm::WeightedProduct) {}

  Chain run() {
    initialize();
    Chain chain;
    chain.spec = spec_;
    chain.seed = cfg_.seed;
    chain.n_iterations = cfg_.n_iterations;
    chain.burn_in = cfg_.burn_in;
    chain.thin = cfg_.thin;
    chain.n_units = n_;
    chain.n_features = j_;
    chain.draws.reserve(static_cast<std::size_t>(cfg_.retained()));

    for (std::int64_t t = 1; t <= cfg_.n_iterations; ++t) {
      const AdaptOptions adapt{cfg_.adapt_during_burn_in && t <= cfg_.burn_in, cfg_.adapt_kappa};
      if (k_ > 1) {
        for (std::size_t i = 0; i < n_; ++i) update_tau(i, adapt);
      }
      for (std::size_t k = 0; k < k_; ++k) {
        for (std::size_t j = 0; j < j_; ++j) update_rate(k, j, adapt);
      }
      for (std::size_t k = 0; k < k_; ++k) update_delta(k, adapt);

      if (t == cfg_.burn_in) reset_block_counts();
      if (t > cfg_.burn_in && (t - cfg_.burn_in) % cfg_.thin == 0) {
        chain.draws.push_back(snapshot(t));
        const double tracked = log_post_;
        rebuild();
        if (!(std::abs(tracked - log_post_) <= 1e-6 * std::max(1.0, std::abs(log_post_)))) {
          throw InvariantError(pmclust::detail::concat(
              "tracked log posterior drifted: ", tracked, " vs recomputed ", log_post_));
        }
      }
    }
    chain.acceptance_rates = acceptance_rates();
    return chain;
  }

 private:
  void initialize() {
    log_fact_ = Matrix<double>(n_, j_);
    xd_ = Matrix<double>(n_, j_);
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t j = 0; j < j_; ++j) {
        xd_(i, j) = static_cast<double>(x_(i, j));
        log_fact_(i, j) = log_gamma(xd_(i, j) + 1.0);
      }
    }
    const auto& h = spec_.hyper;
    lam_ = initial_rates(x_, spec_, cfg_.init, rng_);
    log_lam_ = Matrix<double>(k_, j_);
    for (std::size_t v = 0; v < lam_.data().size(); ++v) {
      log_lam_.data()[v] = std::log(lam_.data()[v]);
    }

    delta_.assign(k_, initial_delta(h));
    if (cfg_.init == InitStrategy::PriorDraw) {
      for (auto& d : delta_) d = h.a + (h.b - h.a) * rng_.uniform();
    }
    eta_.resize(k_);
    for (std::size_t k = 0; k < k_; ++k) eta_[k] = interval_to_unconstrained(delta_[k], h.a, h.b).value;

    y_ = Matrix<double>(n_, k_ - 1, 0.0);
    tau_ = Matrix<double>(n_, k_);
    log_tau_ = Matrix<double>(n_, k_);
    for (std::size_t i = 0; i < n_; ++i) {
      if (cfg_.init == InitStrategy::PriorDraw && k_ > 1) {
        auto w = sample_dirichlet(delta_, rng_);
        std::vector<double> interior(w.weights().begin(), w.weights().end());
        for (auto& v : interior) v += 1e-10;
        const auto y = simplex_to_unconstrained(normalize_simplex(interior).weights());
        std::copy(y.begin(), y.end(), y_.row(i).begin());
      }
      unconstrained_to_simplex_into(y_.row(i), tau_.row(i), log_tau_.row(i));
    }

    logmu_ = Matrix<double>(n_, j_);
    lin_ = Matrix<double>(n_, j_);
    cells_ = Matrix<double>(n_, j_);
    if constexpr (Kind == ModelKind::MM) logp_.assign(n_ * j_ * k_, 0.0);

    const std::size_t tau_dim = k_ - 1;
    tau_blocks_.assign(n_, BlockState{kInitialTauScale, tau_dim == 1 ? cfg_.target_accept_scalar
                                                                     : cfg_.target_accept_block});
    rate_blocks_.assign(k_ * j_, BlockState{kInitialRateScale, cfg_.target_accept_scalar});
    delta_blocks_.assign(k_, BlockState{kInitialDeltaScale, cfg_.target_accept_scalar});

    scratch_tau_.resize(k_);
    scratch_log_tau_.resize(k_);
    scratch_a_.resize(std::max(n_, j_));
    scratch_b_.resize(std::max(n_, j_));
    scratch_cells_.resize(std::max(n_, j_));
    rebuild();
  }

  double pm_cell(std::size_t i, std::size_t j, double log_mu, double lin) const {
    const double xv = xd_(i, j);
    const double fit = xv == 0.0 ? 0.0 : xv * log_mu;
    return fit - (weighted_ ? lin : std::exp(log_mu)) - log_fact_(i, j);
  }

  std::span<double> logp(std::size_t i, std::size_t j) {
    return {logp_.data() + (i * j_ + j) * k_, k_};
  }

  double dirichlet_term(std::span<const double> delta) const {
    double sum = 0.0;
    double lg = 0.0;
    double lin = 0.0;
    for (std::size_t k = 0; k < k_; ++k) {
      sum += delta[k];
      lg += log_gamma(delta[k]);
      lin += (delta[k] - 1.0) * sum_log_tau_[k];
    }
    return static_cast<double>(n_) * (log_gamma(sum) - lg) + lin;
  }

  /// Recomputes every cache and the log posterior from (y, log lambda, delta).
  void rebuild() {
    const auto& h = spec_.hyper;
    sum_log_tau_.assign(k_, 0.0);
    for (std::size_t i = 0; i < n_; ++i) {
      unconstrained_to_simplex_into(y_.row(i), tau_.row(i), log_tau_.row(i));
      for (std::size_t k = 0; k < k_; ++k) sum_log_tau_[k] += log_tau_(i, k);
    }
    double total = 0.0;
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t j = 0; j < j_; ++j) {
        if constexpr (Kind == ModelKind::PM) {
          double lm = 0.0;
          double ln = 0.0;
          for (std::size_t k = 0; k < k_; ++k) {
            lm += tau_(i, k) * log_lam_(k, j);
            ln += tau_(i, k) * lam_(k, j);
          }
          logmu_(i, j) = lm;
          lin_(i, j) = ln;
          cells_(i, j) = pm_cell(i, j, lm, ln);
        } else {
          auto lp = logp(i, j);
          for (std::size_t k = 0; k < k_; ++k) {
            lp[k] = pmclust::detail::poisson_lpmf_from_log(x_(i, j), log_lam_(k, j), lam_(k, j),
                                                           log_fact_(i, j));
          }
          cells_(i, j) = lse_small(log_tau_.row(i), lp);
        }
        total += cells_(i, j);
      }
    }
    for (std::size_t v = 0; v < lam_.data().size(); ++v) {
      total += gamma_prior_log_scale(log_lam_.data()[v], lam_.data()[v], h);
    }
    total += dirichlet_term(delta_);
    total -= static_cast<double>(k_) * std::log(h.b - h.a);
    log_post_ = total;
  }

  void update_tau(std::size_t i, AdaptOptions adapt) {
    double current = 0.0;
    for (std::size_t j = 0; j < j_; ++j) current += cells_(i, j);
    for (std::size_t k = 0; k < k_; ++k) current += delta_[k] * log_tau_(i, k);

    // Local target: cell log-likelihoods + sum_k delta_k log tau_k, which is
    // the Dirichlet kernel times the log-ratio Jacobian prod_k tau_k.
    auto target = [&](std::span<const double> y) {
      unconstrained_to_simplex_into(y, scratch_tau_, scratch_log_tau_);
      double out = 0.0;
      for (std::size_t k = 0; k < k_; ++k) out += delta_[k] * scratch_log_tau_[k];
      for (std::size_t j = 0; j < j_; ++j) {
        double cell;
        if constexpr (Kind == ModelKind::PM) {
          double lm = 0.0;
          double ln = 0.0;
          for (std::size_t k = 0; k < k_; ++k) {
            lm += scratch_tau_[k] * log_lam_(k, j);
            if (weighted_) ln += scratch_tau_[k] * lam_(k, j);
          }
          scratch_a_[j] = lm;
          scratch_b_[j] = ln;
          cell = pm_cell(i, j, lm, ln);
        } else {
          cell = lse_small(scratch_log_tau_, logp(i, j));
        }
        scratch_cells_[j] = cell;
        out += cell;
      }
      return out;
    };

    const auto step = metropolis_step(y_.row(i), current, target, rng_, tau_blocks_[i], adapt);
    if (!step.accepted) return;
    double delta_lp = 0.0;
    for (std::size_t j = 0; j < j_; ++j) {
      delta_lp += scratch_cells_[j] - cells_(i, j);
      cells_(i, j) = scratch_cells_[j];
      if constexpr (Kind == ModelKind::PM) {
        logmu_(i, j) = scratch_a_[j];
        if (weighted_) lin_(i, j) = scratch_b_[j];
      }
    }
    for (std::size_t k = 0; k < k_; ++k) {
      const double d = scratch_log_tau_[k] - log_tau_(i, k);
      delta_lp += (delta_[k] - 1.0) * d;
      sum_log_tau_[k] += d;
      log_tau_(i, k) = scratch_log_tau_[k];
      tau_(i, k) = scratch_tau_[k];
    }
    log_post_ += delta_lp;
  }

  void update_rate(std::size_t k, std::size_t j, AdaptOptions adapt) {
    const auto& h = spec_.hyper;
    const double eta = log_lam_(k, j);
    const double lam = lam_(k, j);
    double current = h.alpha * eta - h.beta * lam;
    for (std::size_t i = 0; i < n_; ++i) current += cells_(i, j);

    double proposed_lam = lam;
    auto target = [&](std::span<const double> v) {
      const double eta_new = v[0];
      const double lam_new = std::exp(eta_new);
      proposed_lam = lam_new;
      if (!(lam_new > 0.0) || !std::isfinite(lam_new)) return kNegInf;
      const double d = eta_new - eta;
      double out = h.alpha * eta_new - h.beta * lam_new;
      for (std::size_t i = 0; i < n_; ++i) {
        double cell;
        if constexpr (Kind == ModelKind::PM) {
          const double t = tau_(i, k);
          const double lm = logmu_(i, j) + t * d;
          const double ln = weighted_ ? lin_(i, j) + t * (lam_new - lam) : 0.0;
          scratch_a_[i] = lm;
          scratch_b_[i] = ln;
          cell = pm_cell(i, j, lm, ln);
        } else {
          auto lp = logp(i, j);
          const double saved = lp[k];
          const double fresh = pmclust::detail::poisson_lpmf_from_log(x_(i, j), eta_new, lam_new,
                                                                      log_fact_(i, j));
          scratch_a_[i] = fresh;
          lp[k] = fresh;
          cell = lse_small(log_tau_.row(i), lp);
          lp[k] = saved;
        }
        scratch_cells_[i] = cell;
        out += cell;
      }
      return out;
    };

    double state = eta;
    const auto step = metropolis_step(std::span<double>(&state, 1), current, target, rng_,
                                      rate_blocks_[k * j_ + j], adapt);
    if (!step.accepted) return;
    double delta_lp = (h.alpha - 1.0) * (state - eta) - h.beta * (proposed_lam - lam);
    for (std::size_t i = 0; i < n_; ++i) {
      delta_lp += scratch_cells_[i] - cells_(i, j);
      cells_(i, j) = scratch_cells_[i];
      if constexpr (Kind == ModelKind::PM) {
        logmu_(i, j) = scratch_a_[i];
        if (weighted_) lin_(i, j) = scratch_b_[i];
      } else {
        logp(i, j)[k] = scratch_a_[i];
      }
    }
    log_lam_(k, j) = state;
    lam_(k, j) = proposed_lam;
    log_post_ += delta_lp;
  }

  void update_delta(std::size_t k, AdaptOptions adapt) {
    const auto& h = spec_.hyper;
    const double current = dirichlet_term(delta_) + interval_log_jacobian(delta_[k], h.a, h.b);
    std::vector<double> trial = delta_;
    auto target = [&](std::span<const double> v) {
      const auto p = unconstrained_to_interval(v[0], h.a, h.b);
      trial[k] = p.value;
      return dirichlet_term(trial) + p.log_jacobian;
    };
    double state = eta_[k];
    const double before = dirichlet_term(delta_);
    const auto step = metropolis_step(std::span<double>(&state, 1), current, target, rng_,
                                      delta_blocks_[k], adapt);
    if (!step.accepted) return;
    eta_[k] = state;
    delta_[k] = trial[k];
    log_post_ += dirichlet_term(delta_) - before;
  }

  void reset_block_counts() {
    for (auto* blocks : {&tau_blocks_, &rate_blocks_, &delta_blocks_}) {
      for (auto& b : *blocks) b.reset_counts();
    }
  }

  std::map<std::string, double> acceptance_rates() const {
    std::map<std::string, double> out;
    auto pooled = [&](const std::vector<BlockState>& blocks, const char* name) {
      std::int64_t acc = 0;
      std::int64_t prop = 0;
      for (const auto& b : blocks) {
        acc += b.accept_count;
        prop += b.propose_count;
      }
      if (prop > 0) out[name] = static_cast<double>(acc) / static_cast<double>(prop);
    };
    pooled(tau_blocks_, "tau");
    pooled(rate_blocks_, "lambda");
    pooled(delta_blocks_, "delta");
    return out;
  }

  ChainDraw snapshot(std::int64_t t) const {
    ChainDraw d;
    d.iteration = t;
    d.log_posterior = log_post_;
    d.lambda = RateMatrix(lam_);
    d.tau = tau_;
    d.delta = delta_;
    return d;
  }

  const CountMatrix& x_;
  ModelSpec spec_;
  McmcConfig cfg_;
  RandomSource rng_;
  std::size_t n_, j_, k_;
  bool weighted_;

  Matrix<double> xd_, log_fact_;
  Matrix<double> lam_, log_lam_;
  Matrix<double> y_, tau_, log_tau_;
  std::vector<double> delta_, eta_, sum_log_tau_;
  Matrix<double> logmu_, lin_, cells_;
  std::vector<double> logp_;
  double log_post_ = 0.0;

  std::vector<BlockState> tau_blocks_, rate_blocks_, delta_blocks_;
  std::vector<double> scratch_tau_, scratch_log_tau_, scratch_a_, scratch_b_, scratch_cells_;
};

inline void require_kind(const ModelSpec& spec, ModelKind kind) {
  if (spec.kind != kind) {
    throw ValidationError(pmclust::detail::concat("sampler for '", to_string(kind),
                                                  "' called with a '", to_string(spec.kind),
                                                  "' model"));
  }
}

}  // namespace detail

inline Chain run_chain_pm(const CountMatrix& x, const ModelSpec& spec, const McmcConfig& cfg) {
  detail::require_kind(spec, ModelKind::PM);
  spec.validate();
  cfg.validate();
  return detail::MembershipSampler<ModelKind::PM>(x, spec, cfg).run();
}

inline Chain run_chain_mm(const CountMatrix& x, const ModelSpec& spec, const McmcConfig& cfg) {
  detail::require_kind(spec, ModelKind::MM);
  spec.validate();
  cfg.validate();
  return detail::MembershipSampler<ModelKind::MM>(x, spec, cfg).run();
}

/// Exact Gibbs sampler for the Poisson finite mixture: labels, then rates
/// (conjugate Gamma), then weights (conjugate Dirichlet).
inline Chain run_chain_mix(const CountMatrix& x, const ModelSpec& spec, const McmcConfig& cfg) {
  detail::require_kind(spec, ModelKind::Mixture);
  spec.validate();
  cfg.validate();
  const auto& h = spec.hyper;
  const std::size_t n = x.n_units();
  const std::size_t n_features = x.n_features();
  const std::size_t k_count = spec.k;
  RandomSource rng(cfg.seed);

  Matrix<double> lam = detail::initial_rates(x, spec, cfg.init, rng);
  Matrix<double> log_lam(k_count, n_features);
  std::vector<double> pi(k_count, 1.0 / static_cast<double>(k_count));
  if (cfg.init == InitStrategy::PriorDraw) {
    pi = sample_dirichlet(std::vector<double>(k_count, h.gamma_mix), rng).vector();
  }
  std::vector<std::size_t> z(n, 0);
  std::vector<double> log_w(k_count);
  std::vector<double> conc(k_count);
  std::vector<double> n_k(k_count);
  Matrix<double> sums(k_count, n_features);

  Chain chain;
  chain.spec = spec;
  chain.seed = cfg.seed;
  chain.n_iterations = cfg.n_iterations;
  chain.burn_in = cfg.burn_in;
  chain.thin = cfg.thin;
  chain.n_units = n;
  chain.n_features = n_features;
  chain.draws.reserve(static_cast<std::size_t>(cfg.retained()));

  for (std::int64_t t = 1; t <= cfg.n_iterations; ++t) {
    for (std::size_t v = 0; v < lam.data().size(); ++v) log_lam.data()[v] = std::log(lam.data()[v]);
    std::fill(n_k.begin(), n_k.end(), 0.0);
    std::fill(sums.data().begin(), sums.data().end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < k_count; ++k) {
        double lw = std::log(pi[k]);
        for (std::size_t j = 0; j < n_features; ++j) {
          lw += static_cast<double>(x(i, j)) * log_lam(k, j) - lam(k, j);
        }
        log_w[k] = lw;
      }
      z[i] = k_count == 1 ? 0 : sample_categorical_log(log_w, rng);
      n_k[z[i]] += 1.0;
      for (std::size_t j = 0; j < n_features; ++j) sums(z[i], j) += static_cast<double>(x(i, j));
    }
    for (std::size_t k = 0; k < k_count; ++k) {
      for (std::size_t j = 0; j < n_features; ++j) {
        const double shape = h.alpha + sums(k, j);
        const double rate = h.beta + n_k[k];
        const double v = std::exp(sample_log_gamma_unit(shape, rng) - std::log(rate));
        lam(k, j) = std::max(v, std::numeric_limits<double>::min());
      }
    }
    for (std::size_t k = 0; k < k_count; ++k) conc[k] = h.gamma_mix + n_k[k];
    sample_dirichlet_into(conc, rng, pi);
    for (auto& p : pi) p = std::max(p, std::numeric_limits<double>::min());

    if (t > cfg.burn_in && (t - cfg.burn_in) % cfg.thin == 0) {
      ChainDraw d;
      d.iteration = t;
      d.lambda = RateMatrix(lam);
      d.pi = normalize_simplex(pi).vector();
      d.z = z;
      d.log_posterior = mix_log_posterior(x, d, h);
      chain.draws.push_back(std::move(d));
    }
  }
  return chain;
}

inline Chain run_chain(const CountMatrix& x, const ModelSpec& spec, const McmcConfig& cfg) {
  switch (spec.kind) {
    case ModelKind::PM: return run_chain_pm(x, spec, cfg);
    case ModelKind::MM: return run_chain_mm(x, spec, cfg);
    case ModelKind::Mixture: return run_chain_mix(x, spec, cfg);
  }
  throw InvariantError("unhandled model kind");
}

}  // namespace pmclust::mcmc

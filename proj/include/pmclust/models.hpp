// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "pmclust/core.hpp"
#include "pmclust/distributions.hpp"

namespace pmclust {

namespace detail {

inline void require_membership_shape(const CountMatrix& x, const Matrix<double>& tau,
                                     const RateMatrix& lambda) {
  if (lambda.n_features() != x.n_features()) {
    throw DomainError("rate matrix and data disagree on the number of features");
  }
  if (tau.rows() != x.n_units() || tau.cols() != lambda.n_clusters()) {
    throw DomainError("membership matrix must be N x K");
  }
}

// Poisson log pmf from a precomputed log rate; x * log(mu) is 0 at x == 0.
inline double poisson_lpmf_from_log(std::int64_t x, double log_mu, double mu, double log_fact) {
  return (x == 0 ? 0.0 : static_cast<double>(x) * log_mu) - mu - log_fact;
}

inline double log_uniform_delta(std::span<const double> delta, const Hyperparams& h) {
  double out = 0.0;
  const double log_width = std::log(h.b - h.a);
  for (double d : delta) {
    if (!(d > h.a && d < h.b)) return kNegInf;
    out -= log_width;
  }
  return out;
}

inline double log_gamma_prior(const RateMatrix& lambda, const Hyperparams& h) {
  double out = 0.0;
  for (double v : lambda.matrix().data()) out += log_gamma_pdf(v, h.alpha, h.beta);
  return out;
}

}  // namespace detail

/// Per-feature blended rate mu_j = prod_k lambda_kj^tau_k for one unit.
using BlendedRateRow = std::vector<double>;

inline BlendedRateRow pm_blended_rate(std::span<const double> tau, const RateMatrix& lambda) {
  if (tau.size() != lambda.n_clusters()) {
    throw DomainError("membership length must equal the number of clusters");
  }
  BlendedRateRow mu(lambda.n_features());
  for (std::size_t j = 0; j < mu.size(); ++j) {
    double log_mu = 0.0;
    for (std::size_t k = 0; k < tau.size(); ++k) {
      if (tau[k] != 0.0) log_mu += tau[k] * std::log(lambda(k, j));
    }
    mu[j] = std::exp(log_mu);
  }
  return mu;
}

// ---------------------------------------------------------------------------
// Partial membership

inline double pm_unit_log_likelihood(const CountMatrix& x, std::size_t i,
                                     std::span<const double> tau, const RateMatrix& lambda) {
  const auto mu = pm_blended_rate(tau, lambda);
  double out = 0.0;
  for (std::size_t j = 0; j < mu.size(); ++j) out += log_poisson_pmf(x(i, j), mu[j]);
  return out;
}

inline double pm_log_likelihood(const CountMatrix& x, const Matrix<double>& tau,
                                const RateMatrix& lambda) {
  detail::require_membership_shape(x, tau, lambda);
  double out = 0.0;
  for (std::size_t i = 0; i < x.n_units(); ++i) {
    out += pm_unit_log_likelihood(x, i, tau.row(i), lambda);
  }
  return out;
}

/// sum_k tau_k * log P_k(x_i | lambda_k): the unnormalized weighted-product form.
inline double pm_unit_weighted_log_likelihood(const CountMatrix& x, std::size_t i,
                                              std::span<const double> tau,
                                              const RateMatrix& lambda) {
  double out = 0.0;
  for (std::size_t k = 0; k < tau.size(); ++k) {
    if (tau[k] == 0.0) continue;
    double comp = 0.0;
    for (std::size_t j = 0; j < x.n_features(); ++j) comp += log_poisson_pmf(x(i, j), lambda(k, j));
    out += tau[k] * comp;
  }
  return out;
}

inline double pm_log_posterior(const CountMatrix& x, const ChainDraw& draw, const Hyperparams& hyper,
                               PmForm form = PmForm::Blended) {
  detail::require_membership_shape(x, draw.tau, draw.lambda);
  if (draw.delta.size() != draw.lambda.n_clusters()) throw DomainError("delta must have length K");
  const double log_delta_prior = detail::log_uniform_delta(draw.delta, hyper);
  if (log_delta_prior == kNegInf) return kNegInf;
  double out = log_delta_prior + detail::log_gamma_prior(draw.lambda, hyper);
  for (std::size_t i = 0; i < x.n_units(); ++i) {
    const auto row = draw.tau.row(i);
    out += log_dirichlet_pdf(row, draw.delta);
    out += form == PmForm::Blended ? pm_unit_log_likelihood(x, i, row, draw.lambda)
                                   : pm_unit_weighted_log_likelihood(x, i, row, draw.lambda);
  }
  return out;
}

struct PmSample {
  CountMatrix counts;
  Matrix<double> tau;
};

/// Counts for the supplied memberships: x_ij ~ Poisson(mu_ij).
inline CountMatrix pm_generate_counts(const Matrix<double>& tau, const RateMatrix& lambda,
                                      RandomSource& rng) {
  if (tau.cols() != lambda.n_clusters()) throw DomainError("membership matrix must be N x K");
  Matrix<std::int64_t> counts(tau.rows(), lambda.n_features());
  for (std::size_t i = 0; i < tau.rows(); ++i) {
    const auto mu = pm_blended_rate(tau.row(i), lambda);
    for (std::size_t j = 0; j < mu.size(); ++j) counts(i, j) = sample_poisson(mu[j], rng);
  }
  return validate_counts(std::move(counts), numbered_labels("u", tau.rows()),
                         numbered_labels("f", lambda.n_features()));
}

inline Matrix<double> sample_memberships(std::size_t n_units, std::span<const double> delta,
                                         RandomSource& rng) {
  Matrix<double> tau(n_units, delta.size());
  for (std::size_t i = 0; i < n_units; ++i) {
    const auto w = sample_dirichlet(delta, rng);
    std::copy(w.weights().begin(), w.weights().end(), tau.row(i).begin());
  }
  return tau;
}

inline PmSample pm_generate(std::size_t n_units, const RateMatrix& lambda,
                            std::span<const double> delta, RandomSource& rng) {
  if (delta.size() != lambda.n_clusters()) throw DomainError("delta must have length K");
  if (n_units == 0) throw DomainError("need at least one unit");
  auto tau = sample_memberships(n_units, delta, rng);
  auto counts = pm_generate_counts(tau, lambda, rng);
  return {std::move(counts), std::move(tau)};
}

// ---------------------------------------------------------------------------
// Mixed membership (per-attribute labels summed out)

inline double mm_unit_log_likelihood(const CountMatrix& x, std::size_t i,
                                     std::span<const double> tau, const RateMatrix& lambda) {
  const std::size_t k_count = tau.size();
  std::vector<double> terms(k_count);
  double out = 0.0;
  for (std::size_t j = 0; j < x.n_features(); ++j) {
    for (std::size_t k = 0; k < k_count; ++k) {
      terms[k] = tau[k] > 0.0 ? std::log(tau[k]) + log_poisson_pmf(x(i, j), lambda(k, j)) : kNegInf;
    }
    out += log_sum_exp(terms);
  }
  return out;
}

inline double mm_log_likelihood(const CountMatrix& x, const Matrix<double>& tau,
                                const RateMatrix& lambda) {
  detail::require_membership_shape(x, tau, lambda);
  double out = 0.0;
  for (std::size_t i = 0; i < x.n_units(); ++i) {
    out += mm_unit_log_likelihood(x, i, tau.row(i), lambda);
  }
  return out;
}

inline double mm_log_posterior(const CountMatrix& x, const ChainDraw& draw,
                               const Hyperparams& hyper) {
  detail::require_membership_shape(x, draw.tau, draw.lambda);
  if (draw.delta.size() != draw.lambda.n_clusters()) throw DomainError("delta must have length K");
  const double log_delta_prior = detail::log_uniform_delta(draw.delta, hyper);
  if (log_delta_prior == kNegInf) return kNegInf;
  double out = log_delta_prior + detail::log_gamma_prior(draw.lambda, hyper);
  for (std::size_t i = 0; i < x.n_units(); ++i) {
    out += log_dirichlet_pdf(draw.tau.row(i), draw.delta);
    out += mm_unit_log_likelihood(x, i, draw.tau.row(i), draw.lambda);
  }
  return out;
}

struct MmSample {
  CountMatrix counts;
  Matrix<double> tau;
  Matrix<std::size_t> z;  // zero-based per-attribute labels
};

inline MmSample mm_generate(std::size_t n_units, const RateMatrix& lambda,
                            std::span<const double> delta, RandomSource& rng) {
  if (delta.size() != lambda.n_clusters()) throw DomainError("delta must have length K");
  if (n_units == 0) throw DomainError("need at least one unit");
  const std::size_t n_features = lambda.n_features();
  auto tau = sample_memberships(n_units, delta, rng);
  Matrix<std::size_t> z(n_units, n_features);
  Matrix<std::int64_t> counts(n_units, n_features);
  for (std::size_t i = 0; i < n_units; ++i) {
    for (std::size_t j = 0; j < n_features; ++j) {
      z(i, j) = sample_categorical(tau.row(i), rng);
      counts(i, j) = sample_poisson(lambda(z(i, j), j), rng);
    }
  }
  return {validate_counts(std::move(counts), numbered_labels("u", n_units),
                          numbered_labels("f", n_features)),
          std::move(tau), std::move(z)};
}

// ---------------------------------------------------------------------------
// Finite mixture

inline double mix_unit_log_likelihood(const CountMatrix& x, std::size_t i, std::size_t k,
                                      const RateMatrix& lambda) {
  double out = 0.0;
  for (std::size_t j = 0; j < x.n_features(); ++j) out += log_poisson_pmf(x(i, j), lambda(k, j));
  return out;
}

inline double mix_log_likelihood_conditional(const CountMatrix& x, std::span<const std::size_t> z,
                                             const RateMatrix& lambda) {
  if (z.size() != x.n_units()) throw DomainError("need one label per unit");
  if (lambda.n_features() != x.n_features()) throw DomainError("feature count mismatch");
  double out = 0.0;
  for (std::size_t i = 0; i < x.n_units(); ++i) {
    if (z[i] >= lambda.n_clusters()) throw DomainError("label out of range");
    out += mix_unit_log_likelihood(x, i, z[i], lambda);
  }
  return out;
}

/// log sum_k pi_k P_k(x_i | lambda_k)
inline double mix_unit_log_marginal(const CountMatrix& x, std::size_t i, std::span<const double> pi,
                                    const RateMatrix& lambda) {
  std::vector<double> terms(pi.size());
  for (std::size_t k = 0; k < pi.size(); ++k) {
    terms[k] = pi[k] > 0.0 ? std::log(pi[k]) + mix_unit_log_likelihood(x, i, k, lambda) : kNegInf;
  }
  return log_sum_exp(terms);
}

inline double mix_log_likelihood_marginal(const CountMatrix& x, std::span<const double> pi,
                                          const RateMatrix& lambda) {
  if (pi.size() != lambda.n_clusters()) throw DomainError("mixture weights must have length K");
  if (lambda.n_features() != x.n_features()) throw DomainError("feature count mismatch");
  double out = 0.0;
  for (std::size_t i = 0; i < x.n_units(); ++i) out += mix_unit_log_marginal(x, i, pi, lambda);
  return out;
}

/// log p(z, pi, lambda | x) up to the evidence.
inline double mix_log_posterior(const CountMatrix& x, const ChainDraw& draw,
                                const Hyperparams& hyper) {
  const std::size_t k_count = draw.lambda.n_clusters();
  if (draw.pi.size() != k_count) throw DomainError("mixture weights must have length K");
  double out = mix_log_likelihood_conditional(x, draw.z, draw.lambda);
  for (auto label : draw.z) out += draw.pi[label] > 0.0 ? std::log(draw.pi[label]) : kNegInf;
  out += detail::log_gamma_prior(draw.lambda, hyper);
  const std::vector<double> conc(k_count, hyper.gamma_mix);
  out += log_dirichlet_pdf(draw.pi, conc);
  return out;
}

struct MixSample {
  CountMatrix counts;
  std::vector<std::size_t> z;
};

inline MixSample mix_generate(std::size_t n_units, const RateMatrix& lambda,
                              std::span<const double> pi, RandomSource& rng) {
  if (pi.size() != lambda.n_clusters()) throw DomainError("mixture weights must have length K");
  if (n_units == 0) throw DomainError("need at least one unit");
  std::vector<std::size_t> z(n_units);
  Matrix<std::int64_t> counts(n_units, lambda.n_features());
  for (std::size_t i = 0; i < n_units; ++i) {
    z[i] = sample_categorical(pi, rng);
    for (std::size_t j = 0; j < lambda.n_features(); ++j) {
      counts(i, j) = sample_poisson(lambda(z[i], j), rng);
    }
  }
  return {validate_counts(std::move(counts), numbered_labels("u", n_units),
                          numbered_labels("f", lambda.n_features())),
          std::move(z)};
}

// ---------------------------------------------------------------------------

inline double log_posterior(const CountMatrix& x, const ChainDraw& draw, const ModelSpec& spec) {
  switch (spec.kind) {
    case ModelKind::PM: return pm_log_posterior(x, draw, spec.hyper, spec.pm_form);
    case ModelKind::MM: return mm_log_posterior(x, draw, spec.hyper);
    case ModelKind::Mixture: return mix_log_posterior(x, draw, spec.hyper);
  }
  return kNegInf;
}

}  // namespace pmclust

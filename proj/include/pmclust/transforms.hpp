// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "pmclust/core.hpp"
#include "pmclust/distributions.hpp"

namespace pmclust::mcmc {

/// Additive log-ratio transform y_k = log(tau_k / tau_K), k < K.
inline std::vector<double> simplex_to_unconstrained(std::span<const double> tau) {
  if (tau.empty()) throw DomainError("empty simplex");
  for (double t : tau) {
    if (!(t > 0.0)) throw DomainError("additive log-ratio needs an interior simplex point");
  }
  const double log_last = std::log(tau.back());
  std::vector<double> y(tau.size() - 1);
  for (std::size_t k = 0; k < y.size(); ++k) y[k] = std::log(tau[k]) - log_last;
  return y;
}

/// Inverse additive log-ratio. Writes tau and log(tau) (both length
/// y.size() + 1) and returns the log-Jacobian sum_k log tau_k.
inline double unconstrained_to_simplex_into(std::span<const double> y, std::span<double> tau,
                                            std::span<double> log_tau) {
  const std::size_t k_count = y.size() + 1;
  double m = 0.0;
  for (double v : y) m = std::max(m, v);
  double s = std::exp(-m);
  for (double v : y) s += std::exp(v - m);
  const double lse = m + std::log(s);
  double log_jac = 0.0;
  for (std::size_t k = 0; k < k_count; ++k) {
    log_tau[k] = (k + 1 < k_count ? y[k] : 0.0) - lse;
    tau[k] = std::exp(log_tau[k]);
    log_jac += log_tau[k];
  }
  return log_jac;
}

struct SimplexPoint {
  SimplexVector tau;
  double log_jacobian = 0.0;
};

inline SimplexPoint unconstrained_to_simplex(std::span<const double> y) {
  std::vector<double> tau(y.size() + 1);
  std::vector<double> log_tau(y.size() + 1);
  const double log_jac = unconstrained_to_simplex_into(y, tau, log_tau);
  return {SimplexVector(std::move(tau)), log_jac};
}

/// A transformed scalar together with log |d constrained / d unconstrained|
/// evaluated at that point.
struct IntervalPoint {
  double value = 0.0;
  double log_jacobian = 0.0;
};

inline double interval_log_jacobian(double delta, double a, double b) {
  return std::log((delta - a) * (b - delta) / (b - a));
}

/// Logit map from (a, b) to the real line.
inline IntervalPoint interval_to_unconstrained(double delta, double a, double b) {
  if (!(b > a)) throw DomainError("interval needs b > a");
  if (!(delta > a && delta < b)) throw DomainError("value outside the open interval");
  return {std::log((delta - a) / (b - delta)), interval_log_jacobian(delta, a, b)};
}

inline IntervalPoint unconstrained_to_interval(double y, double a, double b) {
  if (!(b > a)) throw DomainError("interval needs b > a");
  // log sigmoid(y) and log(1 - sigmoid(y)) without overflow.
  const double log_sig = -std::log1p(std::exp(-std::abs(y))) + std::min(y, 0.0);
  const double log_one_minus = log_sig - y;
  const double sig = std::exp(log_sig);
  double value = a + (b - a) * sig;
  if (!(value < b)) value = std::nextafter(b, a);
  if (!(value > a)) value = std::nextafter(a, b);
  return {value, std::log(b - a) + log_sig + log_one_minus};
}

}  // namespace pmclust::mcmc

// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "pmclust/core.hpp"

namespace pmclust {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Thread-safe log-gamma (glibc's lgamma writes the global signgam).
inline double log_gamma(double x) {
#if defined(__GLIBC__)
  int sign = 0;
  return ::lgamma_r(x, &sign);
#else
  return std::lgamma(x);
#endif
}

/// SplitMix64 finalizer.
constexpr std::uint64_t splitmix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derives a seed from a base seed and a list of stream coordinates by
/// folding each coordinate through SplitMix64. Distinct coordinate tuples
/// give distinct seeds with overwhelming probability.
inline std::uint64_t mix_seed(std::uint64_t base, std::initializer_list<std::uint64_t> coords) {
  std::uint64_t h = splitmix64(base);
  for (auto c : coords) h = splitmix64(h ^ splitmix64(c + 0x632be59bd9b4e019ULL));
  return h;
}

/// Seeded random stream. Each worker owns its own source; independent
/// streams come from substream().
class RandomSource {
 public:
  using engine_type = std::mt19937_64;

  explicit RandomSource(std::uint64_t seed = 0) : seed_(seed), engine_(splitmix64(seed)) {}

  std::uint64_t seed() const noexcept { return seed_; }
  engine_type& engine() noexcept { return engine_; }

  RandomSource substream(std::initializer_list<std::uint64_t> coords) const {
    return RandomSource(mix_seed(seed_, coords));
  }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on the open interval (0, 1).
  double uniform() {
    for (;;) {
      const double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
      if (u > 0.0) return u;
    }
  }

  double normal() { return normal_(engine_); }

 private:
  std::uint64_t seed_;
  engine_type engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

// ---------------------------------------------------------------------------
// Log densities

inline double log_poisson_pmf(std::int64_t x, double lambda) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw DomainError(detail::concat("Poisson rate must be positive and finite, got ", lambda));
  }
  if (x < 0) throw DomainError("Poisson count must be nonnegative");
  const double xd = static_cast<double>(x);
  return (x == 0 ? 0.0 : xd * std::log(lambda)) - lambda - log_gamma(xd + 1.0);
}

inline double log_gamma_pdf(double x, double alpha, double beta) {
  if (!(x > 0.0) || !(alpha > 0.0) || !(beta > 0.0) || !std::isfinite(x)) {
    throw DomainError("gamma density needs x > 0, alpha > 0, beta > 0");
  }
  return alpha * std::log(beta) - log_gamma(alpha) + (alpha - 1.0) * std::log(x) - beta * x;
}

/// Boundary points (any zero weight with delta != 1) are treated as outside
/// the support and score -inf.
inline double log_dirichlet_pdf(std::span<const double> tau, std::span<const double> delta) {
  if (tau.size() != delta.size() || tau.empty()) {
    throw DomainError("Dirichlet dimension mismatch");
  }
  double sum_delta = 0.0;
  double out = 0.0;
  for (std::size_t k = 0; k < tau.size(); ++k) {
    if (!(delta[k] > 0.0)) throw DomainError("Dirichlet concentration must be positive");
    sum_delta += delta[k];
    out -= log_gamma(delta[k]);
    if (delta[k] == 1.0) continue;
    if (!(tau[k] > 0.0)) return kNegInf;
    out += (delta[k] - 1.0) * std::log(tau[k]);
  }
  return out + log_gamma(sum_delta);
}

inline double log_sum_exp(std::span<const double> v) {
  if (v.empty()) return kNegInf;
  double m = kNegInf;
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

// ---------------------------------------------------------------------------
// Samplers

inline std::int64_t sample_poisson(double lambda, RandomSource& rng) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw DomainError(detail::concat("Poisson rate must be positive and finite, got ", lambda));
  }
  std::poisson_distribution<std::int64_t> dist(lambda);
  return dist(rng.engine());
}

/// Gamma with shape alpha and rate beta.
inline double sample_gamma(double alpha, double beta, RandomSource& rng) {
  if (!(alpha > 0.0) || !(beta > 0.0) || !std::isfinite(alpha) || !std::isfinite(beta)) {
    throw DomainError("gamma sampler needs alpha > 0 and beta > 0");
  }
  std::gamma_distribution<double> dist(alpha, 1.0 / beta);
  return dist(rng.engine());
}

/// log of a Gamma(alpha, 1) draw. Shapes below one use
/// G(alpha) = G(alpha + 1) * U^(1/alpha) so tiny draws do not underflow.
inline double sample_log_gamma_unit(double alpha, RandomSource& rng) {
  if (alpha >= 1.0) {
    std::gamma_distribution<double> dist(alpha, 1.0);
    return std::log(dist(rng.engine()));
  }
  std::gamma_distribution<double> dist(alpha + 1.0, 1.0);
  const double g = dist(rng.engine());
  return std::log(g) + std::log(rng.uniform()) / alpha;
}

/// Writes a Dirichlet(delta) draw into out (normalized independent gammas).
inline void sample_dirichlet_into(std::span<const double> delta, RandomSource& rng,
                                  std::span<double> out) {
  double m = kNegInf;
  for (std::size_t k = 0; k < delta.size(); ++k) {
    out[k] = sample_log_gamma_unit(delta[k], rng);
    m = std::max(m, out[k]);
  }
  double total = 0.0;
  for (double& v : out) {
    v = std::exp(v - m);
    total += v;
  }
  for (double& v : out) v /= total;
}

inline SimplexVector sample_dirichlet(std::span<const double> delta, RandomSource& rng) {
  if (delta.empty()) throw DomainError("Dirichlet needs at least one component");
  for (double d : delta) {
    if (!(d > 0.0) || !std::isfinite(d)) {
      throw DomainError("Dirichlet concentration must be positive");
    }
  }
  std::vector<double> w(delta.size());
  sample_dirichlet_into(delta, rng, w);
  return SimplexVector(std::move(w));
}

/// Zero-based category index drawn with the given probabilities.
inline std::size_t sample_categorical(std::span<const double> probs, RandomSource& rng) {
  if (!is_simplex(probs, 1e-9)) throw DomainError("categorical probabilities are not a simplex");
  const double u = rng.uniform();
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    if (probs[k] <= 0.0) continue;
    acc += probs[k];
    last = k;
    if (u < acc) return k;
  }
  return last;
}

/// Categorical draw from unnormalized log weights; no validation.
inline std::size_t sample_categorical_log(std::span<const double> log_w, RandomSource& rng) {
  const double m = *std::max_element(log_w.begin(), log_w.end());
  double total = 0.0;
  for (double v : log_w) total += std::exp(v - m);
  const double u = rng.uniform() * total;
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t k = 0; k < log_w.size(); ++k) {
    const double w = std::exp(log_w[k] - m);
    if (w <= 0.0) continue;
    acc += w;
    last = k;
    if (u < acc) return k;
  }
  return last;
}

}  // namespace pmclust

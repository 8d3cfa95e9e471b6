// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pmclust/core.hpp"

namespace pmclust {

/// perm[k] is the original label that becomes label k.
using Permutation = std::vector<std::size_t>;

/// Minimum-cost perfect assignment on a square cost matrix (Hungarian
/// method with potentials, O(K^3)). Returns perm with perm[row] = column.
inline Permutation best_assignment(const Matrix<double>& cost) {
  const std::size_t n = cost.rows();
  if (cost.cols() != n) throw DomainError("assignment cost matrix must be square");
  if (n == 0) return {};
  for (double c : cost.data()) {
    if (!std::isfinite(c)) throw DomainError("assignment cost matrix has a non-finite entry");
  }
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based potentials; p[col] is the row matched to col.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t row = 1; row <= n; ++row) {
    p[0] = row;
    std::size_t col0 = 0;
    std::vector<double> min_v(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[col0] = 1;
      const std::size_t row0 = p[col0];
      double delta = inf;
      std::size_t col1 = 0;
      for (std::size_t col = 1; col <= n; ++col) {
        if (used[col]) continue;
        const double cur = cost(row0 - 1, col - 1) - u[row0] - v[col];
        if (cur < min_v[col]) {
          min_v[col] = cur;
          way[col] = col0;
        }
        if (min_v[col] < delta) {
          delta = min_v[col];
          col1 = col;
        }
      }
      for (std::size_t col = 0; col <= n; ++col) {
        if (used[col]) {
          u[p[col]] += delta;
          v[col] -= delta;
        } else {
          min_v[col] -= delta;
        }
      }
      col0 = col1;
    } while (p[col0] != 0);
    do {
      const std::size_t col1 = way[col0];
      p[col0] = p[col1];
      col0 = col1;
    } while (col0 != 0);
  }
  Permutation perm(n);
  for (std::size_t col = 1; col <= n; ++col) perm[p[col] - 1] = col - 1;
  return perm;
}

inline Permutation invert(const Permutation& perm) {
  Permutation inv(perm.size());
  for (std::size_t k = 0; k < perm.size(); ++k) inv[perm[k]] = k;
  return inv;
}

inline bool is_identity(const Permutation& perm) {
  for (std::size_t k = 0; k < perm.size(); ++k) {
    if (perm[k] != k) return false;
  }
  return true;
}

/// Relabels one draw: new label k takes the parameters of old label perm[k].
inline ChainDraw apply_permutation(const ChainDraw& d, const Permutation& perm) {
  const std::size_t k_count = perm.size();
  ChainDraw out = d;
  Matrix<double> lam(k_count, d.lambda.n_features());
  for (std::size_t k = 0; k < k_count; ++k) {
    const auto src = d.lambda.row(perm[k]);
    std::copy(src.begin(), src.end(), lam.row(k).begin());
  }
  out.lambda = RateMatrix(std::move(lam));
  if (!d.tau.empty()) {
    for (std::size_t i = 0; i < d.tau.rows(); ++i) {
      for (std::size_t k = 0; k < k_count; ++k) out.tau(i, k) = d.tau(i, perm[k]);
    }
  }
  if (!d.delta.empty()) {
    for (std::size_t k = 0; k < k_count; ++k) out.delta[k] = d.delta[perm[k]];
  }
  if (!d.pi.empty()) {
    for (std::size_t k = 0; k < k_count; ++k) out.pi[k] = d.pi[perm[k]];
  }
  if (!d.z.empty()) {
    const auto inv = invert(perm);
    for (std::size_t i = 0; i < d.z.size(); ++i) out.z[i] = inv[d.z[i]];
  }
  return out;
}

struct RelabeledChain {
  Chain chain;
  std::vector<Permutation> permutations;
  std::size_t pivot_index = 0;
  int sweeps = 0;
  bool converged = false;
};

inline constexpr int kMaxRelabelSweeps = 20;

/// Pivot relabeling: each draw is permuted to minimize the squared distance
/// between its log-rate rows and a reference, first the highest-posterior
/// draw and then the running mean of the relabeled log rates, until the
/// permutations stop changing.
inline RelabeledChain relabel_chain(const Chain& chain) {
  if (chain.draws.empty()) throw ValidationError("cannot relabel an empty chain");
  const std::size_t s_count = chain.draws.size();
  const std::size_t k_count = chain.spec.k;
  const std::size_t n_features = chain.n_features;

  std::vector<Matrix<double>> log_lam(s_count, Matrix<double>(k_count, n_features));
  std::size_t pivot = 0;
  for (std::size_t s = 0; s < s_count; ++s) {
    const auto& lam = chain.draws[s].lambda;
    for (std::size_t v = 0; v < log_lam[s].data().size(); ++v) {
      log_lam[s].data()[v] = std::log(lam.matrix().data()[v]);
    }
    if (chain.draws[s].log_posterior > chain.draws[pivot].log_posterior) pivot = s;
  }

  Matrix<double> reference = log_lam[pivot];
  std::vector<Permutation> perms(s_count);
  std::vector<Permutation> previous;
  Matrix<double> cost(k_count, k_count);
  int sweeps = 0;
  bool converged = false;
  while (sweeps < kMaxRelabelSweeps) {
    ++sweeps;
    for (std::size_t s = 0; s < s_count; ++s) {
      for (std::size_t k = 0; k < k_count; ++k) {
        for (std::size_t l = 0; l < k_count; ++l) {
          double c = 0.0;
          for (std::size_t j = 0; j < n_features; ++j) {
            const double diff = log_lam[s](l, j) - reference(k, j);
            c += diff * diff;
          }
          cost(k, l) = c;
        }
      }
      perms[s] = best_assignment(cost);
    }
    if (perms == previous) {
      converged = true;
      break;
    }
    previous = perms;
    Matrix<double> mean(k_count, n_features, 0.0);
    for (std::size_t s = 0; s < s_count; ++s) {
      for (std::size_t k = 0; k < k_count; ++k) {
        for (std::size_t j = 0; j < n_features; ++j) mean(k, j) += log_lam[s](perms[s][k], j);
      }
    }
    for (double& v : mean.data()) v /= static_cast<double>(s_count);
    reference = std::move(mean);
  }

  RelabeledChain out;
  out.chain = chain;
  for (std::size_t s = 0; s < s_count; ++s) {
    out.chain.draws[s] = apply_permutation(chain.draws[s], perms[s]);
  }
  out.permutations = std::move(perms);
  out.pivot_index = pivot;
  out.sweeps = sweeps;
  out.converged = converged;
  return out;
}

/// Undoes relabel_chain, returning the draws in their original labeling.
inline Chain restore_original_labels(const RelabeledChain& r) {
  Chain out = r.chain;
  for (std::size_t s = 0; s < out.draws.size(); ++s) {
    out.draws[s] = apply_permutation(r.chain.draws[s], invert(r.permutations[s]));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Posterior summaries

inline Matrix<double> posterior_mean_rates(const Chain& chain) {
  if (chain.draws.empty()) throw ValidationError("chain has no draws");
  Matrix<double> out(chain.spec.k, chain.n_features, 0.0);
  for (const auto& d : chain.draws) {
    for (std::size_t v = 0; v < out.data().size(); ++v) out.data()[v] += d.lambda.matrix().data()[v];
  }
  for (double& v : out.data()) v /= static_cast<double>(chain.draws.size());
  return out;
}

/// Posterior mean memberships (PM/MM) or assignment frequencies (mixture).
inline Matrix<double> posterior_mean_memberships(const Chain& chain) {
  if (chain.draws.empty()) throw ValidationError("chain has no draws");
  Matrix<double> out(chain.n_units, chain.spec.k, 0.0);
  for (const auto& d : chain.draws) {
    if (has_memberships(chain.spec.kind)) {
      for (std::size_t v = 0; v < out.data().size(); ++v) out.data()[v] += d.tau.data()[v];
    } else {
      for (std::size_t i = 0; i < chain.n_units; ++i) out(i, d.z[i]) += 1.0;
    }
  }
  for (double& v : out.data()) v /= static_cast<double>(chain.draws.size());
  return out;
}

/// Posterior mean of delta (PM/MM) or pi (mixture).
inline std::vector<double> posterior_mean_concentration(const Chain& chain) {
  if (chain.draws.empty()) throw ValidationError("chain has no draws");
  std::vector<double> out(chain.spec.k, 0.0);
  for (const auto& d : chain.draws) {
    const auto& src = has_memberships(chain.spec.kind) ? d.delta : d.pi;
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += src[k];
  }
  for (double& v : out) v /= static_cast<double>(chain.draws.size());
  return out;
}

// ---------------------------------------------------------------------------
// Archetypal units

struct Archetype {
  std::size_t unit_index = 0;
  std::string unit_id;
  double membership = 0.0;
};

struct ArchetypeReport {
  double threshold = 0.9;
  std::vector<std::optional<Archetype>> clusters;

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& c : clusters) n += c.has_value() ? 1 : 0;
    return n;
  }
};

inline constexpr double kDefaultArchetypeThreshold = 0.9;

/// For each cluster, the unit with the largest mean membership (lowest
/// index on ties), kept only if that membership reaches the threshold.
inline ArchetypeReport archetypes_from_means(const Matrix<double>& tau_bar, double threshold,
                                             std::span<const std::string> unit_ids = {}) {
  if (!(threshold > 0.0 && threshold <= 1.0)) {
    throw ValidationError("archetype threshold must lie in (0, 1]");
  }
  ArchetypeReport out;
  out.threshold = threshold;
  out.clusters.resize(tau_bar.cols());
  for (std::size_t k = 0; k < tau_bar.cols(); ++k) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < tau_bar.rows(); ++i) {
      if (tau_bar(i, k) > tau_bar(best, k)) best = i;
    }
    if (tau_bar.rows() > 0 && tau_bar(best, k) >= threshold) {
      Archetype a;
      a.unit_index = best;
      a.unit_id = best < unit_ids.size() ? unit_ids[best] : std::to_string(best + 1);
      a.membership = tau_bar(best, k);
      out.clusters[k] = a;
    }
  }
  return out;
}

inline ArchetypeReport archetypes(const RelabeledChain& relabeled, double threshold,
                                  std::span<const std::string> unit_ids = {}) {
  if (!has_memberships(relabeled.chain.spec.kind)) {
    throw ValidationError("archetypes are defined for partial and mixed membership chains only");
  }
  return archetypes_from_means(posterior_mean_memberships(relabeled.chain), threshold, unit_ids);
}

}  // namespace pmclust

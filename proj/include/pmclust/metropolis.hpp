// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "pmclust/distributions.hpp"

namespace pmclust::mcmc {

/// Proposal scale and acceptance bookkeeping for one Metropolis block.
struct BlockState {
  double proposal_scale = 1.0;
  double target_rate = 0.44;
  std::int64_t accept_count = 0;
  std::int64_t propose_count = 0;
  std::int64_t adapt_steps = 0;

  double acceptance_rate() const {
    return propose_count == 0 ? 0.0
                              : static_cast<double>(accept_count) / static_cast<double>(propose_count);
  }

  /// Robbins-Monro step on log(scale) toward the target acceptance rate.
  void adapt(bool accepted, double kappa) {
    ++adapt_steps;
    const double step = kappa * ((accepted ? 1.0 : 0.0) - target_rate) /
                        std::sqrt(static_cast<double>(adapt_steps));
    proposal_scale *= std::exp(step);
  }

  void reset_counts() {
    accept_count = 0;
    propose_count = 0;
  }
};

/// Metropolis accept/reject. A non-finite proposed target is a rejection.
inline bool metropolis_accept(double current_log_target, double proposed_log_target,
                              RandomSource& rng) {
  if (std::isnan(proposed_log_target) || proposed_log_target == kNegInf ||
      proposed_log_target == std::numeric_limits<double>::infinity()) {
    return false;
  }
  const double log_ratio = proposed_log_target - current_log_target;
  if (log_ratio >= 0.0) return true;
  return std::log(rng.uniform()) < log_ratio;
}

struct StepOutcome {
  bool accepted = false;
  double log_target = 0.0;
};

struct AdaptOptions {
  bool enabled = false;
  double kappa = 1.0;
};

/// One symmetric Gaussian random-walk Metropolis update of `state`.
/// `log_target` maps a proposed point to its (possibly local) log target on
/// the unconstrained scale, Jacobian included. On acceptance `state` holds
/// the proposal.
template <class LogTarget>
StepOutcome metropolis_step(std::span<double> state, double current_log_target,
                            LogTarget&& log_target, RandomSource& rng, BlockState& block,
                            AdaptOptions adapt = {}) {
  std::vector<double> proposal(state.begin(), state.end());
  for (double& v : proposal) v += block.proposal_scale * rng.normal();
  const double proposed = log_target(std::span<const double>(proposal));
  const bool accepted = metropolis_accept(current_log_target, proposed, rng);
  ++block.propose_count;
  if (accepted) {
    ++block.accept_count;
    std::copy(proposal.begin(), proposal.end(), state.begin());
  }
  if (adapt.enabled) block.adapt(accepted, adapt.kappa);
  return {accepted, accepted ? proposed : current_log_target};
}

}  // namespace pmclust::mcmc

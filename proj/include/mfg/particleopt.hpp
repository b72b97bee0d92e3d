#pragma once

#include <cstdint>
#include <span>

#include "mfg/couplings.hpp"
#include "mfg/ensemble.hpp"

namespace mfg {

struct ObjectiveBreakdown {
  double dynamic = 0.0;
  double interaction = 0.0;
  double terminal = 0.0;
  double total = 0.0;
};

/// Discretized individual cost of the ensemble against frozen costs:
///   dynamic     = dynamic_cost(ens)
///   interaction = (dt/n) sum_i sum_{j=1..m} F_j(X_{i,t_j})
///   terminal    = (1/n) sum_i G(X_{i,t_m})
ObjectiveBreakdown objective(const ParticleEnsemble& ens, const FrozenCosts& costs);

/// Explicit proximal anchor: adds (1/alpha)(X - reference) to every update
/// direction, turning the inner gradient steps into a solve of the proximal
/// subproblem around `reference`.
struct ProximalAnchor {
  const ParticleEnsemble* reference = nullptr;
  double alpha = 0.0;
};

/// One Jacobi sweep over the batch:
///   interior j:  X_j -= beta dt (-(D_tt X)_j + grad F_j(X_j))
///   terminal:    X_m -= beta ((D_t X)_m + grad G(X_m))
/// Every stencil reads the pre-update state; node 0 is never written.
ParticleEnsemble particle_step(const ParticleEnsemble& ens, const FrozenCosts& costs, double beta,
                               std::span<const int> batch, const ProximalAnchor* anchor = nullptr);

/// In-place form of particle_step.
void apply_particle_step(ParticleEnsemble& ens, const FrozenCosts& costs, double beta,
                         std::span<const int> batch, const ProximalAnchor* anchor = nullptr);

/// Sample norm of the first-order variation: sqrt of
///   (dt/n) sum_i sum_{j=1..m-1} |-(D_tt X_i)_j + grad F_j(X_{i,j})|^2
///   + (1/n) sum_i |(D_t X_i)_m + grad G(X_{i,m})|^2
double residual(const ParticleEnsemble& ens, const FrozenCosts& costs);

struct ProximalOptions {
  double alpha = 0.0;  // recorded; only acts when explicit_penalty is set
  int inner_steps = 1;
  double beta = 0.01;
  int batch = 0;  // 0 or >= n means full batch
  std::uint64_t seed = 0;
  bool explicit_penalty = false;
};

/// inner_steps particle steps on seeded minibatches. With explicit_penalty the
/// steps are taken on the proximal subproblem anchored at the input ensemble.
ParticleEnsemble proximal_solve(ParticleEnsemble ens, const FrozenCosts& costs, const ProximalOptions& options);

/// Squared trajectory-space norm matching the proximal penalty:
/// (dt/n) sum_i sum_{j=1..m-1} |A_{i,j} - B_{i,j}|^2 + (1/n) sum_i |A_{i,m} - B_{i,m}|^2
double trajectory_distance_sq(const ParticleEnsemble& a, const ParticleEnsemble& b);

}  // namespace mfg

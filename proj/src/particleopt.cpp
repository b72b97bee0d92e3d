#include "mfg/particleopt.hpp"

#include <cmath>
#include <numeric>
#include <vector>

#include "mfg/errors.hpp"
#include "mfg/flowmatch.hpp"
#include "mfg/parallel.hpp"

namespace mfg {
namespace {

void check_costs(const ParticleEnsemble& ens, const FrozenCosts& costs) {
  if (static_cast<int>(costs.interaction.size()) != ens.nodes()) {
    throw ConfigError("expected " + std::to_string(ens.nodes()) + " interaction snapshots (t_0..t_m), got " +
                      std::to_string(costs.interaction.size()));
  }
}

// Positions of the listed particles at node j, one column each.
Matrix gather(const ParticleEnsemble& ens, std::span<const int> ids, int j) {
  Matrix out(ens.dim(), static_cast<Eigen::Index>(ids.size()));
  for (std::size_t c = 0; c < ids.size(); ++c) out.col(c) = ens.point(ids[c], j);
  return out;
}

std::vector<int> all_particles(const ParticleEnsemble& ens) {
  std::vector<int> ids(ens.size());
  std::iota(ids.begin(), ids.end(), 0);
  return ids;
}

}  // namespace

ObjectiveBreakdown objective(const ParticleEnsemble& ens, const FrozenCosts& costs) {
  check_costs(ens, costs);
  ObjectiveBreakdown out;
  if (ens.size() == 0) return out;
  const int m = ens.grid().steps();
  const double n = ens.size();
  out.dynamic = dynamic_cost(ens);
  double running = 0.0;
  for (int j = 1; j <= m; ++j) {
    if (costs.interaction[j].is_zero()) continue;
    running += costs.interaction[j].values(ens.slice(j)).sum();
  }
  out.interaction = ens.grid().dt() * running / n;
  out.terminal = costs.terminal.values(ens.slice(m)).sum() / n;
  out.total = out.dynamic + out.interaction + out.terminal;
  return out;
}

void apply_particle_step(ParticleEnsemble& ens, const FrozenCosts& costs, double beta, std::span<const int> batch,
                         const ProximalAnchor* anchor) {
  check_costs(ens, costs);
  const int m = ens.grid().steps();
  if (m < 2) throw ConfigError("particle update needs m >= 2");
  if (!(beta > 0.0)) throw ConfigError("particle step size beta must be positive");
  if (anchor != nullptr) {
    if (anchor->reference == nullptr || !(anchor->alpha > 0.0)) {
      throw ConfigError("proximal anchor needs a reference ensemble and alpha > 0");
    }
    if (anchor->reference->size() != ens.size() || anchor->reference->nodes() != ens.nodes()) {
      throw ConfigError("proximal anchor shape differs from the ensemble");
    }
  }
  for (int i : batch) {
    if (i < 0 || i >= ens.size()) throw ConfigError("batch index " + std::to_string(i) + " out of range");
  }
  const double dt = ens.grid().dt();
  const int d = ens.dim();
  const auto count = static_cast<Eigen::Index>(batch.size());
  if (count == 0) return;

  // Coupling gradients at the pre-update positions, node by node.
  std::vector<Matrix> grad_f(m);
  for (int j = 1; j < m; ++j) {
    grad_f[j] = costs.interaction[j].is_zero() ? Matrix::Zero(d, count)
                                               : costs.interaction[j].gradients(gather(ens, batch, j));
  }
  const Matrix grad_g = costs.terminal.gradients(gather(ens, batch, m));

  parallel_for(static_cast<int>(count), [&](int begin, int end) {
    Matrix old;
    for (int c = begin; c < end; ++c) {
      const int i = batch[c];
      old = ens.trajectory(i);
      auto x = ens.trajectory(i);
      for (int j = 1; j < m; ++j) {
        Vector dir = -(old.col(j + 1) - 2.0 * old.col(j) + old.col(j - 1)) / (dt * dt) + grad_f[j].col(c);
        if (anchor != nullptr) dir += (old.col(j) - anchor->reference->point(i, j)) / anchor->alpha;
        x.col(j) = old.col(j) - beta * dt * dir;
      }
      Vector dir = (old.col(m) - old.col(m - 1)) / dt + grad_g.col(c);
      if (anchor != nullptr) dir += (old.col(m) - anchor->reference->point(i, m)) / anchor->alpha;
      x.col(m) = old.col(m) - beta * dir;
      if (!x.allFinite()) {
        int bad = 1;
        while (bad <= m && x.col(bad).allFinite()) ++bad;
        throw OptimizationError("particle update produced a non-finite value at particle " + std::to_string(i) +
                                    ", node " + std::to_string(bad),
                                i, bad);
      }
    }
  });
}

ParticleEnsemble particle_step(const ParticleEnsemble& ens, const FrozenCosts& costs, double beta,
                               std::span<const int> batch, const ProximalAnchor* anchor) {
  ParticleEnsemble out = ens;
  apply_particle_step(out, costs, beta, batch, anchor);
  return out;
}

double residual(const ParticleEnsemble& ens, const FrozenCosts& costs) {
  check_costs(ens, costs);
  const int m = ens.grid().steps();
  if (m < 2) throw ConfigError("residual needs m >= 2");
  if (ens.size() == 0) return 0.0;
  const double dt = ens.grid().dt();
  const auto ids = all_particles(ens);
  double interior = 0.0;
  for (int j = 1; j < m; ++j) {
    const Matrix prev = ens.slice(j - 1);
    const Matrix cur = ens.slice(j);
    const Matrix next = ens.slice(j + 1);
    Matrix r = -(next - 2.0 * cur + prev) / (dt * dt);
    if (!costs.interaction[j].is_zero()) r += costs.interaction[j].gradients(cur);
    interior += r.squaredNorm();
  }
  const Matrix end = ens.slice(m);
  const Matrix r_end = (end - ens.slice(m - 1)) / dt + costs.terminal.gradients(end);
  const double n = ens.size();
  return std::sqrt(dt * interior / n + r_end.squaredNorm() / n);
}

ParticleEnsemble proximal_solve(ParticleEnsemble ens, const FrozenCosts& costs, const ProximalOptions& options) {
  if (options.inner_steps < 1) throw ConfigError("proximal solve needs at least one inner step (L1 >= 1)");
  if (options.explicit_penalty && !(options.alpha > 0.0)) {
    throw ConfigError("explicit proximal penalty needs alpha > 0");
  }
  if (ens.size() == 0) return ens;
  const int batch = (options.batch <= 0 || options.batch >= ens.size()) ? ens.size() : options.batch;
  BatchSampler sampler(ens.size(), batch, options.seed);
  const ParticleEnsemble reference = options.explicit_penalty ? ens : ParticleEnsemble(0, 1, ens.grid());
  const ProximalAnchor anchor{&reference, options.alpha};
  for (int s = 0; s < options.inner_steps; ++s) {
    apply_particle_step(ens, costs, options.beta, sampler.next(), options.explicit_penalty ? &anchor : nullptr);
  }
  return ens;
}

double trajectory_distance_sq(const ParticleEnsemble& a, const ParticleEnsemble& b) {
  if (a.size() != b.size() || a.nodes() != b.nodes() || a.dim() != b.dim()) {
    throw ConfigError("trajectory distance: ensembles differ in shape");
  }
  if (a.size() == 0) return 0.0;
  const int m = a.grid().steps();
  double interior = 0.0, terminal = 0.0;
  for (int i = 0; i < a.size(); ++i) {
    const Matrix diff = a.trajectory(i) - b.trajectory(i);
    interior += diff.middleCols(1, m - 1).squaredNorm();
    terminal += diff.col(m).squaredNorm();
  }
  return (a.grid().dt() * interior + terminal) / a.size();
}

}  // namespace mfg

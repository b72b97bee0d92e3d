#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mfg/ensemble.hpp"
#include "mfg/neuralnet.hpp"

namespace mfg {

enum class Integrator { kEuler, kRk4 };

std::string to_string(Integrator scheme);
Integrator parse_integrator(const std::string& name);

/// Regression pairs from whole trajectories: input (X_{i,t_{j-1}}, t_{j-1}),
/// target (X_{i,t_j} - X_{i,t_{j-1}}) / dt, for j = 1..m.
struct FmBatch {
  Matrix inputs;   // (d+1) x (|particles| * m)
  Matrix targets;  // d x (|particles| * m)
};

FmBatch make_fm_batch(const ParticleEnsemble& ens, std::span<const int> particles);

/// v(x, t) for every column of points.
Matrix velocity(const Mlp& net, const Matrix& points, double t);

/// (dt/n) sum_i sum_{j=1..m} |v(X_{i,t_{j-1}}, t_{j-1}) - (X_{i,t_j} - X_{i,t_{j-1}})/dt|^2
double fm_loss(const Mlp& net, const ParticleEnsemble& ens);

/// steps Adam updates on minibatches of `batch` whole trajectories (drawn
/// without replacement within each pass; 0 means all). Returns the per-step loss.
std::vector<double> fm_train(Mlp& net, AdamState& adam, const ParticleEnsemble& ens, int steps, int batch,
                             std::uint64_t seed);
std::vector<double> fm_train(Mlp& net, const ParticleEnsemble& ens, int steps, int batch, double lr,
                             std::uint64_t seed);

/// Solves dX/dt = v(X, t) from x0 (d x n) on the grid.
ParticleEnsemble integrate(const Mlp& net, const Matrix& x0, const TimeGrid& grid, Integrator scheme);

/// Cycles through seeded permutations of [0, n), handing out disjoint batches.
class BatchSampler {
 public:
  BatchSampler(int n, int batch, std::uint64_t seed);
  std::span<const int> next();

 private:
  void reshuffle();

  int n_;
  int batch_;
  std::vector<int> order_;
  std::vector<int> current_;
  std::size_t cursor_ = 0;
  std::uint64_t state_;
};

}  // namespace mfg

#include "mfg/flowmatch.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "mfg/errors.hpp"
#include "mfg/io.hpp"
#include "mfg/parallel.hpp"

namespace mfg {

namespace {
// Trajectories per forward/backward pass during training.
constexpr std::size_t kTrainChunk = 128;
}  // namespace

std::string to_string(Integrator scheme) { return scheme == Integrator::kEuler ? "euler" : "rk4"; }

Integrator parse_integrator(const std::string& name) {
  if (name == "euler") return Integrator::kEuler;
  if (name == "rk4") return Integrator::kRk4;
  throw ConfigError("unknown integrator '" + name + "' (expected euler or rk4)");
}

BatchSampler::BatchSampler(int n, int batch, std::uint64_t seed)
    : n_(n), batch_(std::min(batch, n)), order_(n), state_(seed) {
  if (n < 1 || batch < 1) throw ConfigError("batch sampler needs n >= 1 and batch >= 1");
  std::iota(order_.begin(), order_.end(), 0);
  cursor_ = order_.size();
}

void BatchSampler::reshuffle() {
  std::mt19937_64 rng(state_);
  state_ = mix_seed(state_, 17);
  std::shuffle(order_.begin(), order_.end(), rng);
  cursor_ = 0;
}

std::span<const int> BatchSampler::next() {
  if (batch_ == n_) {
    // Full batch: identity order, no randomness needed.
    if (current_.empty()) {
      current_.resize(n_);
      std::iota(current_.begin(), current_.end(), 0);
    }
    return current_;
  }
  if (cursor_ + batch_ > order_.size()) reshuffle();
  current_.assign(order_.begin() + cursor_, order_.begin() + cursor_ + batch_);
  cursor_ += batch_;
  std::sort(current_.begin(), current_.end());
  return current_;
}

FmBatch make_fm_batch(const ParticleEnsemble& ens, std::span<const int> particles) {
  const int m = ens.grid().steps();
  const int d = ens.dim();
  const double dt = ens.grid().dt();
  const Eigen::Index count = static_cast<Eigen::Index>(particles.size()) * m;
  FmBatch batch{Matrix(d + 1, count), Matrix(d, count)};
  Eigen::Index c = 0;
  for (int i : particles) {
    const auto x = ens.trajectory(i);
    for (int j = 1; j <= m; ++j, ++c) {
      batch.inputs.col(c).head(d) = x.col(j - 1);
      batch.inputs(d, c) = ens.grid().node(j - 1);
      batch.targets.col(c) = (x.col(j) - x.col(j - 1)) / dt;
    }
  }
  return batch;
}

Matrix velocity(const Mlp& net, const Matrix& points, double t) {
  Matrix in(points.rows() + 1, points.cols());
  in.topRows(points.rows()) = points;
  in.row(points.rows()).setConstant(t);
  return net.forward_batch(in);
}

double fm_loss(const Mlp& net, const ParticleEnsemble& ens) {
  if (ens.size() == 0) return 0.0;
  if (net.input_width() != ens.dim() + 1 || net.output_width() != ens.dim()) {
    throw ConfigError("velocity network must map d+1 inputs to d outputs");
  }
  // Chunked to bound memory on large ensembles; summation order is fixed.
  constexpr int kChunk = 512;
  double total = 0.0;
  std::vector<int> ids;
  for (int start = 0; start < ens.size(); start += kChunk) {
    const int end = std::min(ens.size(), start + kChunk);
    ids.resize(end - start);
    std::iota(ids.begin(), ids.end(), start);
    const FmBatch b = make_fm_batch(ens, ids);
    total += (net.forward_batch(b.inputs) - b.targets).squaredNorm();
  }
  return ens.grid().dt() * total / ens.size();
}

std::vector<double> fm_train(Mlp& net, AdamState& adam, const ParticleEnsemble& ens, int steps, int batch,
                             std::uint64_t seed) {
  if (steps < 0) throw ConfigError("flow matching steps must be >= 0");
  if (net.input_width() != ens.dim() + 1 || net.output_width() != ens.dim()) {
    throw ConfigError("velocity network must map d+1 inputs to d outputs");
  }
  std::vector<double> trace;
  if (steps == 0 || ens.size() == 0) return trace;
  trace.reserve(steps);
  BatchSampler sampler(ens.size(), (batch <= 0 || batch >= ens.size()) ? ens.size() : batch, seed);
  const double dt = ens.grid().dt();
  Vector grad(net.parameter_count());
  for (int s = 0; s < steps; ++s) {
    const auto ids = sampler.next();
    const double scale = dt / static_cast<double>(ids.size());
    grad.setZero();
    double sse = 0.0;
    for (std::size_t begin = 0; begin < ids.size(); begin += kTrainChunk) {
      const FmBatch b = make_fm_batch(ens, ids.subspan(begin, std::min(kTrainChunk, ids.size() - begin)));
      sse += net.accumulate_squared_error(b.inputs, b.targets, scale, grad);
    }
    const double loss = scale * sse;
    if (!std::isfinite(loss)) {
      throw TrainingError("flow matching loss is not finite at step " + std::to_string(s), s);
    }
    trace.push_back(loss);
    adam_step(adam, net.parameters(), grad);
  }
  return trace;
}

std::vector<double> fm_train(Mlp& net, const ParticleEnsemble& ens, int steps, int batch, double lr,
                             std::uint64_t seed) {
  AdamState adam(net.parameter_count(), lr);
  return fm_train(net, adam, ens, steps, batch, seed);
}

ParticleEnsemble integrate(const Mlp& net, const Matrix& x0, const TimeGrid& grid, Integrator scheme) {
  const int n = static_cast<int>(x0.cols());
  const int d = static_cast<int>(x0.rows());
  if (net.input_width() != d + 1 || net.output_width() != d) {
    throw ConfigError("velocity network must map d+1 inputs to d outputs");
  }
  ParticleEnsemble ens = init_trajectories(x0, grid);
  const double dt = grid.dt();
  parallel_for(n, [&](int begin, int end) {
    Matrix x = x0.middleCols(begin, end - begin);
    for (int j = 0; j < grid.steps(); ++j) {
      const double t = grid.node(j);
      if (scheme == Integrator::kEuler) {
        x += dt * velocity(net, x, t);
      } else {
        const Matrix k1 = velocity(net, x, t);
        const Matrix k2 = velocity(net, x + 0.5 * dt * k1, t + 0.5 * dt);
        const Matrix k3 = velocity(net, x + 0.5 * dt * k2, t + 0.5 * dt);
        const Matrix k4 = velocity(net, x + dt * k3, grid.node(j + 1));
        x += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      }
      for (int c = 0; c < x.cols(); ++c) {
        if (!x.col(c).allFinite()) {
          throw IntegrationError("trajectory of particle " + std::to_string(begin + c) +
                                     " became non-finite at step " + std::to_string(j + 1),
                                 begin + c, j + 1);
        }
        ens.point(begin + c, j + 1) = x.col(c);
      }
    }
  });
  return ens;
}

}  // namespace mfg

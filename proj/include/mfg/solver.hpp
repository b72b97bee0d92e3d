#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mfg/couplings.hpp"
#include "mfg/ensemble.hpp"
#include "mfg/flowmatch.hpp"
#include "mfg/neuralnet.hpp"
#include "mfg/particleopt.hpp"

namespace mfg {

inline constexpr const char* kLibraryVersion = "0.1.0";

struct SolverConfig {
  InitialDistribution initial = GaussianDistribution{Vector::Zero(1), Vector::Ones(1)};
  CouplingSpec interaction = ZeroCoupling{};
  CouplingSpec terminal = ZeroCoupling{};

  int epochs = 1;          // K
  int refresh_rounds = 1;  // L, cost refreshes per epoch
  int particles = 1000;    // n
  int timesteps = 20;      // m
  std::uint64_t seed = 0;

  int particle_steps = 100;  // L1
  int particle_batch = 0;    // n1, 0 = all particles
  double beta = 0.01;
  double proximal_alpha = 0.0;  // recorded only

  int fm_steps = 100;  // L2
  int fm_batch = 0;    // n2, 0 = all particles
  double fm_lr = 0.01;
  int fm_every = 1;
  std::vector<int> fm_hidden{4, 8, 16};
  Activation fm_activation = Activation::kRelu;
  bool fm_zero_output = true;  // zero last layer so v starts at 0
  Integrator integrator = Integrator::kEuler;
};

int dimension(const SolverConfig& config);
void validate(const SolverConfig& config);

/// Velocity network (d+1 -> hidden... -> d) as configured, before training.
Mlp initial_velocity(const SolverConfig& config);

struct EpochRecord {
  int epoch = 0;
  ObjectiveBreakdown objective;
  double residual = 0.0;
  double fm_loss = 0.0;
  double clf_loss = 0.0;  // NaN when no classifier is trained
  double wall_ms = 0.0;
};

struct EnsembleSummary {
  Vector mean;
  Vector cov_diag;
};

EnsembleSummary summarize(const Matrix& points);

struct RunReport {
  std::vector<EpochRecord> epochs;
  EnsembleSummary initial_summary;   // test particles at t = 0
  EnsembleSummary terminal_summary;  // test particles at t = 1, resampled from the final field
  bool aborted = false;
  std::string abort_reason;
};

struct RunOptions {
  bool record_wall_time = false;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct RunResult {
  Mlp velocity;
  std::optional<Mlp> classifier;
  RunReport report;
  std::optional<ParticleEnsemble> last_ensemble;  // optimized particles of the last epoch
};

/// Outer loop: resample through the velocity field, refresh costs and update
/// particles L times, then fit the field by flow matching.
RunResult run(const SolverConfig& config, const RunOptions& options = {});

struct FictitiousPlayRound {
  int round = 0;
  double alpha = 0.0;
  ObjectiveBreakdown objective;  // best response against the updated mixture
  double residual = 0.0;
  std::vector<double> masses;  // mixture ledger masses after the update
};

struct FictitiousPlayReport {
  std::vector<FictitiousPlayRound> rounds;
  std::optional<ParticleEnsemble> best_response;  // last round
};

/// Best response by L*L1 particle steps against the frozen mixture, followed by
/// rho <- (1 - alpha_l) rho + alpha_l rho_hat.
FictitiousPlayReport fictitious_play_run(const SolverConfig& config, const std::function<double(int)>& alpha);
FictitiousPlayReport fictitious_play_run(const SolverConfig& config);  // alpha_l = 1/l

/// Closed-form minimizer of int 1/2|X'|^2 + lambda/2 |X|^2 dt + g/2 |X(1)|^2
/// with X(0) = x0, sampled on the grid. Columns of x0 are start points.
ParticleEnsemble quadratic_oc_oracle(double lambda, double g, const Matrix& x0, const TimeGrid& grid);

/// Sorted-sample L2 distance between two equally sized 1-D samples.
double w2_1d(std::span<const double> a, std::span<const double> b);

// Report artifacts.
std::string report_csv(const RunReport& report);

}  // namespace mfg

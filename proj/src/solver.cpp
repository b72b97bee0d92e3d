#include "mfg/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "mfg/errors.hpp"
#include "mfg/io.hpp"

namespace mfg {
namespace {

// RNG stream ids.
constexpr std::uint64_t kVelocityInit = 1;
constexpr std::uint64_t kClassifierInit = 2;
constexpr std::uint64_t kTargetSamples = 3;
constexpr std::uint64_t kTestSamples = 7;
constexpr std::uint64_t kEpochBase = 1000;

std::uint64_t epoch_seed(std::uint64_t seed, int epoch) { return mix_seed(seed, kEpochBase + epoch); }

int effective_batch(int requested, int n) { return (requested <= 0 || requested >= n) ? n : requested; }

bool finite(const ObjectiveBreakdown& o) {
  return std::isfinite(o.dynamic) && std::isfinite(o.interaction) && std::isfinite(o.terminal) &&
         std::isfinite(o.total);
}

// Holds the classifier for KL terminal costs and decides how long to train it.
class TerminalModel {
 public:
  TerminalModel(const SolverConfig& config, int d) {
    if (const auto* kl = std::get_if<KLTerminal>(&config.terminal)) {
      spec_ = *kl;
      if (spec_.samples.cols() == 0) materialize_target(spec_, mix_seed(config.seed, kTargetSamples));
      trainer_.emplace(spec_, d, mix_seed(config.seed, kClassifierInit));
    }
  }

  bool active() const { return trainer_.has_value(); }
  const ClassifierConfig& schedule() const { return spec_.classifier; }

  // First call trains for init_steps, later calls for refresh_steps.
  void refresh(const PopulationSnapshot& terminal_pop, std::uint64_t seed) {
    if (!trainer_) return;
    const int steps = trained_ ? spec_.classifier.refresh_steps : spec_.classifier.init_steps;
    const double loss = trainer_->train(terminal_pop, steps, seed);
    if (steps > 0) last_loss_ = loss;
    trained_ = true;
    shared_ = trainer_->share();
  }

  std::shared_ptr<const Mlp> classifier() const { return shared_; }
  double last_loss() const { return last_loss_; }
  std::optional<Mlp> model() const {
    if (!trainer_) return std::nullopt;
    return trainer_->classifier();
  }

 private:
  KLTerminal spec_;
  std::optional<ClassifierTrainer> trainer_;
  std::shared_ptr<const Mlp> shared_;
  bool trained_ = false;
  double last_loss_ = std::nan("");
};

// One cost-estimation round followed by L1 particle steps. With a classifier,
// the terminal cost is re-estimated every refresh_every steps.
ParticleEnsemble optimize_round(ParticleEnsemble ens, const SolverConfig& config,
                                const std::vector<PopulationSnapshot>& pop, TerminalModel& terminal,
                                std::uint64_t seed) {
  const int n1 = effective_batch(config.particle_batch, ens.size());
  if (!terminal.active()) {
    const FrozenCosts costs = estimate_costs(config.interaction, config.terminal, pop);
    ProximalOptions opts{config.proximal_alpha, config.particle_steps, config.beta, n1, seed, false};
    return proximal_solve(std::move(ens), costs, opts);
  }
  const int block = terminal.schedule().refresh_every;
  int done = 0;
  int refresh = 0;
  while (done < config.particle_steps) {
    const int m = ens.grid().steps();
    const PopulationSnapshot end_pop(m, ens.slice(m));
    terminal.refresh(end_pop, mix_seed(seed, 500 + refresh));
    const FrozenCosts costs = estimate_costs(config.interaction, config.terminal, pop, terminal.classifier());
    const int steps = std::min(block, config.particle_steps - done);
    ProximalOptions opts{config.proximal_alpha, steps, config.beta, n1, mix_seed(seed, refresh), false};
    ens = proximal_solve(std::move(ens), costs, opts);
    done += steps;
    ++refresh;
  }
  return ens;
}

FrozenCosts diagnostic_costs(const SolverConfig& config, const ParticleEnsemble& ens,
                             const TerminalModel& terminal) {
  return estimate_costs(config.interaction, config.terminal, snapshots_of(ens), terminal.classifier());
}

}  // namespace

int dimension(const SolverConfig& config) { return dimension(config.initial); }

void validate(const SolverConfig& config) {
  validate(config.initial);
  const int d = dimension(config);
  validate(config.interaction, d);
  validate(config.terminal, d);
  if (std::holds_alternative<KLTerminal>(config.interaction) ||
      std::holds_alternative<QuadraticTerminal>(config.interaction)) {
    throw ConfigError("interaction coupling must be zero, kernel or potential");
  }
  if (std::holds_alternative<KernelInteraction>(config.terminal)) {
    throw ConfigError("terminal coupling must be zero, quadratic, potential or kl");
  }
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  require(config.epochs >= 0, "epochs (K) must be >= 0");
  require(config.refresh_rounds >= 1, "refresh rounds (L) must be >= 1");
  require(config.particles >= 1, "particle count (n) must be >= 1");
  require(config.timesteps >= 2, "timesteps (m) must be >= 2");
  require(config.particle_steps >= 1, "particle steps (L1) must be >= 1");
  require(config.particle_batch >= 0, "particle batch (n1) must be >= 0");
  require(config.beta > 0.0 && std::isfinite(config.beta), "beta must be positive");
  require(config.proximal_alpha >= 0.0, "proximal alpha must be >= 0");
  require(config.fm_steps >= 0, "flow matching steps (L2) must be >= 0");
  require(config.fm_batch >= 0, "flow matching batch (n2) must be >= 0");
  require(config.fm_lr > 0.0 && std::isfinite(config.fm_lr), "flow matching learning rate must be positive");
  require(config.fm_every >= 1, "fm_every must be >= 1");
  for (int w : config.fm_hidden) require(w >= 1, "velocity widths must be positive");
}

Mlp initial_velocity(const SolverConfig& config) {
  const int d = dimension(config);
  std::vector<int> widths{d + 1};
  widths.insert(widths.end(), config.fm_hidden.begin(), config.fm_hidden.end());
  widths.push_back(d);
  Mlp net = Mlp::glorot(widths, config.fm_activation, true, mix_seed(config.seed, kVelocityInit));
  if (config.fm_zero_output) {
    net.weight(net.layers() - 1).setZero();
    net.bias(net.layers() - 1).setZero();
  }
  return net;
}

EnsembleSummary summarize(const Matrix& points) {
  EnsembleSummary s;
  if (points.cols() == 0) return s;
  s.mean = points.rowwise().mean();
  s.cov_diag = (points.colwise() - s.mean).array().square().rowwise().mean();
  return s;
}

RunResult run(const SolverConfig& config, const RunOptions& options) {
  validate(config);
  const int d = dimension(config);
  const TimeGrid grid(config.timesteps);

  RunResult result{initial_velocity(config), std::nullopt, {}, std::nullopt};
  Mlp& net = result.velocity;
  AdamState adam(net.parameter_count(), config.fm_lr);
  TerminalModel terminal(config, d);
  const int n2 = effective_batch(config.fm_batch, config.particles);

  for (int k = 1; k <= config.epochs; ++k) {
    const auto start = std::chrono::steady_clock::now();
    const std::uint64_t base = epoch_seed(config.seed, k);
    try {
      const Matrix x0 = sample_initial(config.initial, config.particles, mix_seed(base, 1));
      ParticleEnsemble ens = integrate(net, x0, grid, config.integrator);
      for (int l = 0; l < config.refresh_rounds; ++l) {
        const auto pop = snapshots_of(ens);
        ens = optimize_round(std::move(ens), config, pop, terminal, mix_seed(base, 2 + l));
      }
      if (k % config.fm_every == 0) fm_train(net, adam, ens, config.fm_steps, n2, mix_seed(base, 100));

      EpochRecord rec;
      rec.epoch = k;
      const FrozenCosts costs = diagnostic_costs(config, ens, terminal);
      rec.objective = objective(ens, costs);
      rec.residual = residual(ens, costs);
      rec.fm_loss = fm_loss(net, ens);
      rec.clf_loss = terminal.last_loss();
      if (options.record_wall_time) {
        rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      }
      if (!finite(rec.objective) || !std::isfinite(rec.residual) || !std::isfinite(rec.fm_loss)) {
        throw NumericalError("non-finite diagnostics in epoch " + std::to_string(k));
      }
      result.report.epochs.push_back(rec);
      result.last_ensemble = std::move(ens);
      if (options.on_epoch) options.on_epoch(rec);
    } catch (const NumericalError& e) {
      result.report.aborted = true;
      result.report.abort_reason = "epoch " + std::to_string(k) + ": " + e.what();
      break;
    }
  }

  result.classifier = terminal.model();
  if (!result.report.aborted) {
    const Matrix test0 = sample_initial(config.initial, config.particles, mix_seed(config.seed, kTestSamples));
    result.report.initial_summary = summarize(test0);
    try {
      const ParticleEnsemble test = integrate(net, test0, grid, config.integrator);
      result.report.terminal_summary = summarize(test.slice(grid.steps()));
    } catch (const NumericalError& e) {
      result.report.aborted = true;
      result.report.abort_reason = std::string("test resample: ") + e.what();
    }
  }
  return result;
}

FictitiousPlayReport fictitious_play_run(const SolverConfig& config, const std::function<double(int)>& alpha) {
  validate(config);
  const int d = dimension(config);
  const TimeGrid grid(config.timesteps);
  TerminalModel terminal(config, d);
  FictitiousPlayReport report;

  // rho^(1): the initial population held still (the zero velocity field).
  std::vector<PopulationSnapshot> pop = snapshots_of(
      init_trajectories(sample_initial(config.initial, config.particles, mix_seed(epoch_seed(config.seed, 1), 1)),
                        grid),
      0);

  for (int round = 1; round <= config.epochs; ++round) {
    const double a = alpha(round);
    if (!(a > 0.0 && a <= 1.0)) {
      throw ConfigError("fictitious play weight for round " + std::to_string(round) + " must lie in (0, 1]");
    }
    const std::uint64_t base = epoch_seed(config.seed, round);
    const Matrix x0 = sample_initial(config.initial, config.particles, mix_seed(base, 1));
    ParticleEnsemble br = init_trajectories(x0, grid);
    if (terminal.active()) terminal.refresh(pop.back(), mix_seed(base, 400));
    for (int l = 0; l < config.refresh_rounds; ++l) {
      // Frozen mixture population; only the best response moves.
      ProximalOptions opts{config.proximal_alpha, config.particle_steps, config.beta,
                           effective_batch(config.particle_batch, br.size()), mix_seed(base, 2 + l), false};
      const FrozenCosts costs = estimate_costs(config.interaction, config.terminal, pop, terminal.classifier());
      br = proximal_solve(std::move(br), costs, opts);
    }
    pop = mixture_snapshots(pop, snapshots_of(br, round), a);

    FictitiousPlayRound rec;
    rec.round = round;
    rec.alpha = a;
    if (terminal.active()) terminal.refresh(pop.back(), mix_seed(base, 401));
    const FrozenCosts costs = estimate_costs(config.interaction, config.terminal, pop, terminal.classifier());
    rec.objective = objective(br, costs);
    rec.residual = residual(br, costs);
    for (const auto& c : pop.back().ledger()) rec.masses.push_back(c.mass);
    report.rounds.push_back(std::move(rec));
    report.best_response = std::move(br);
  }
  return report;
}

FictitiousPlayReport fictitious_play_run(const SolverConfig& config) {
  return fictitious_play_run(config, [](int round) { return 1.0 / round; });
}

ParticleEnsemble quadratic_oc_oracle(double lambda, double g, const Matrix& x0, const TimeGrid& grid) {
  if (!(lambda >= 0.0) || !(g >= 0.0)) throw ConfigError("oracle needs lambda >= 0 and g >= 0");
  ParticleEnsemble ens = init_trajectories(x0, grid);
  const double s = std::sqrt(lambda);
  auto profile = [&](double t) {
    if (lambda == 0.0) {
      if (std::isinf(g)) return 1.0 - t;
      return 1.0 - g * t / (1.0 + g);
    }
    const double kappa = std::isinf(g)
                             ? std::cosh(s) / std::sinh(s)
                             : (s * std::sinh(s) + g * std::cosh(s)) / (s * std::cosh(s) + g * std::sinh(s));
    return std::cosh(s * t) - kappa * std::sinh(s * t);
  };
  for (int j = 1; j <= grid.steps(); ++j) {
    const double f = profile(grid.node(j));
    for (int i = 0; i < ens.size(); ++i) ens.point(i, j) = f * x0.col(i);
  }
  return ens;
}

double w2_1d(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ConfigError("w2_1d: sample counts differ (" + std::to_string(a.size()) + " vs " +
                      std::to_string(b.size()) + ")");
  }
  if (a.empty()) return 0.0;
  std::vector<double> sa(a.begin(), a.end()), sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  double acc = 0.0;
  for (std::size_t k = 0; k < sa.size(); ++k) acc += (sa[k] - sb[k]) * (sa[k] - sb[k]);
  return std::sqrt(acc / sa.size());
}

}  // namespace mfg

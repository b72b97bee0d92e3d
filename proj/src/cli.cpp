#include "mfg/cli.hpp"

#include <CLI11.hpp>
#include <cmath>
#include <iostream>
#include <optional>
#include <json.hpp>

#include "mfg/config.hpp"
#include "mfg/errors.hpp"
#include "mfg/io.hpp"
#include "mfg/parallel.hpp"
#include "mfg/solver.hpp"

namespace mfg::cli {
namespace {

constexpr int kSchemaVersion = 1;

struct Common {
  std::string config_path;
  std::string preset;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
  int threads = 1;
};

void add_common(CLI::App* cmd, Common& c) {
  auto* cfg = cmd->add_option("--config", c.config_path, "configuration file");
  auto* pre = cmd->add_option("--preset", c.preset, "named experiment preset");
  cfg->excludes(pre);
  cmd->add_option("--set", c.overrides, "override a config key (key=value)");
  cmd->add_option("--seed", c.seed, "master seed (overrides solver.seed)");
  cmd->add_option("--out-dir", c.out_dir, "directory for written artifacts");
  cmd->add_option("--threads", c.threads, "worker threads")->check(CLI::PositiveNumber);
}

SolverConfig resolve(const Common& c) {
  SolverConfig config;
  if (!c.config_path.empty()) {
    config = load_config(c.config_path);
  } else if (!c.preset.empty()) {
    config = preset_config(c.preset);
  } else {
    throw ConfigError("one of --config or --preset is required");
  }
  std::vector<std::string> sets = c.overrides;
  if (c.seed) sets.push_back("solver.seed=" + std::to_string(*c.seed));
  config = apply_overrides(config, sets);
  set_thread_count(c.threads);
  return config;
}

std::filesystem::path out_path(const Common& c, const std::string& name) {
  std::filesystem::create_directories(c.out_dir);
  return std::filesystem::path(c.out_dir) / name;
}

nlohmann::ordered_json number(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

nlohmann::ordered_json vec_json(const Vector& v) {
  auto arr = nlohmann::ordered_json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) arr.push_back(number(v[k]));
  return arr;
}

std::string summary_json(const SolverConfig& config, const RunReport& report) {
  nlohmann::ordered_json j;
  j["schema_version"] = kSchemaVersion;
  j["library_version"] = kLibraryVersion;
  nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
  for (const auto& [k, v] : config_entries(config)) cfg[k] = v;
  j["config"] = cfg;
  j["epochs_completed"] = report.epochs.size();
  j["aborted"] = report.aborted;
  j["abort_reason"] = report.abort_reason;
  if (report.epochs.empty()) {
    j["final"] = nullptr;
  } else {
    const EpochRecord& e = report.epochs.back();
    j["final"] = {{"epoch", e.epoch},
                  {"dynamic", number(e.objective.dynamic)},
                  {"interaction", number(e.objective.interaction)},
                  {"terminal", number(e.objective.terminal)},
                  {"total", number(e.objective.total)},
                  {"residual", number(e.residual)},
                  {"fm_loss", number(e.fm_loss)},
                  {"clf_loss", number(e.clf_loss)}};
  }
  auto summary = [](const EnsembleSummary& s) -> nlohmann::ordered_json {
    if (s.mean.size() == 0) return nullptr;
    return {{"mean", vec_json(s.mean)}, {"cov_diag", vec_json(s.cov_diag)}};
  };
  j["initial_summary"] = summary(report.initial_summary);
  j["terminal_summary"] = summary(report.terminal_summary);
  return j.dump(2) + "\n";
}

int cmd_run(const Common& c, bool wall_clock) {
  const SolverConfig config = resolve(c);
  RunOptions opts;
  opts.record_wall_time = wall_clock;
  opts.on_epoch = [](const EpochRecord& e) {
    std::cerr << "epoch " << e.epoch << " total=" << format_double(e.objective.total)
              << " residual=" << format_double(e.residual) << " fm_loss=" << format_double(e.fm_loss) << "\n";
  };
  const RunResult result = run(config, opts);
  write_file_atomic(out_path(c, "config.txt"), echo_config(config));
  write_file_atomic(out_path(c, "report.csv"), report_csv(result.report));
  write_file_atomic(out_path(c, "summary.json"), summary_json(config, result.report));
  write_file_atomic(out_path(c, "velocity.bin"), serialize_mlp(result.velocity));
  if (result.classifier) write_file_atomic(out_path(c, "classifier.bin"), serialize_mlp(*result.classifier));
  if (result.last_ensemble) write_file_atomic(out_path(c, "ensemble.csv"), ensemble_to_csv(*result.last_ensemble));
  if (result.report.aborted) {
    std::cerr << "run aborted: " << result.report.abort_reason << "\n";
    return 1;
  }
  return 0;
}

int cmd_residual(const Common& c, const std::string& ensemble_path, const std::string& classifier_path) {
  const SolverConfig config = resolve(c);
  const ParticleEnsemble ens = read_ensemble_csv(ensemble_path);
  if (ens.dim() != dimension(config)) {
    throw ConfigError(ensemble_path + ": ensemble dimension " + std::to_string(ens.dim()) +
                      " does not match the config dimension " + std::to_string(dimension(config)));
  }
  std::shared_ptr<const Mlp> clf;
  if (std::holds_alternative<KLTerminal>(config.terminal)) {
    if (classifier_path.empty()) throw ConfigError("terminal.kind = kl needs --classifier");
    clf = std::make_shared<const Mlp>(load_mlp(classifier_path));
  }
  const FrozenCosts costs = estimate_costs(config.interaction, config.terminal, snapshots_of(ens), clf);
  std::cout << format_double(residual(ens, costs)) << "\n";
  return 0;
}

int cmd_sample(const Common& c, const std::string& net_path, int count) {
  const SolverConfig config = resolve(c);
  const Mlp net = load_mlp(net_path);
  const int d = dimension(config);
  if (net.input_width() != d + 1 || net.output_width() != d) {
    throw ConfigError(net_path + ": network shape does not match dimension " + std::to_string(d));
  }
  const int n = count > 0 ? count : config.particles;
  const Matrix x0 = sample_initial(config.initial, n, mix_seed(config.seed, 7));
  const ParticleEnsemble ens = integrate(net, x0, TimeGrid(config.timesteps), config.integrator);
  write_file_atomic(out_path(c, "samples.csv"), ensemble_to_csv(ens));
  return 0;
}

int cmd_oracle(const Common& c, int count) {
  const SolverConfig config = resolve(c);
  if (dimension(config) != 1) throw ConfigError("oracle needs a one-dimensional initial distribution");
  auto weight = [](const CouplingSpec& spec, const char* what) {
    if (std::holds_alternative<ZeroCoupling>(spec)) return 0.0;
    if (const auto* p = std::get_if<QuadraticPotential>(&spec)) return p->weight;
    throw ConfigError(std::string("oracle needs ") + what + ".kind = potential or zero");
  };
  const double lambda = weight(config.interaction, "interaction");
  const double g = weight(config.terminal, "terminal");
  const int n = count > 0 ? count : config.particles;
  const Matrix x0 = sample_initial(config.initial, n, mix_seed(config.seed, 7));
  const ParticleEnsemble ens = quadratic_oc_oracle(lambda, g, x0, TimeGrid(config.timesteps));
  write_file_atomic(out_path(c, "oracle.csv"), ensemble_to_csv(ens));
  return 0;
}

int cmd_config(const Common& c) {
  std::cout << echo_config(resolve(c));
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  keep_heap_resident();
  CLI::App app{"Particle solver for first-order mean-field games", "mfgflow"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kLibraryVersion));

  Common common;
  bool wall_clock = false;
  std::string ensemble_path, classifier_path, net_path;
  int count = 0;

  auto* run_cmd = app.add_subcommand("run", "run the solver and write report.csv, summary.json and networks");
  add_common(run_cmd, common);
  run_cmd->add_flag("--wall-clock", wall_clock, "record per-epoch wall time in report.csv");

  auto* res_cmd = app.add_subcommand("residual", "print the optimality residual of a saved ensemble");
  add_common(res_cmd, common);
  res_cmd->add_option("--ensemble", ensemble_path, "ensemble CSV")->required();
  res_cmd->add_option("--classifier", classifier_path, "classifier network for kl terminal costs");

  auto* sample_cmd = app.add_subcommand("sample", "integrate a saved velocity network from fresh draws");
  add_common(sample_cmd, common);
  sample_cmd->add_option("--net", net_path, "velocity network file")->required();
  sample_cmd->add_option("--count", count, "number of trajectories (default solver.particles)");

  auto* oracle_cmd = app.add_subcommand("oracle", "write closed-form quadratic control trajectories");
  add_common(oracle_cmd, common);
  oracle_cmd->add_option("--count", count, "number of trajectories (default solver.particles)");

  auto* config_cmd = app.add_subcommand("config", "print the resolved configuration");
  add_common(config_cmd, common);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (run_cmd->parsed()) return cmd_run(common, wall_clock);
    if (res_cmd->parsed()) return cmd_residual(common, ensemble_path, classifier_path);
    if (sample_cmd->parsed()) return cmd_sample(common, net_path, count);
    if (oracle_cmd->parsed()) return cmd_oracle(common, count);
    if (config_cmd->parsed()) return cmd_config(common);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace mfg::cli

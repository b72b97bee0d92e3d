#include "mfg/config.hpp"

#include <algorithm>
#include <cctype>
#include <iterator>
#include <cmath>
#include <limits>
#include <sstream>

#include "mfg/errors.hpp"
#include "mfg/io.hpp"

namespace mfg::cli {
namespace {

constexpr std::string_view kKeys[] = {
    "preset",
    "solver.epochs",
    "solver.refresh_rounds",
    "solver.particles",
    "solver.timesteps",
    "solver.seed",
    "solver.fm_every",
    "initial.kind",
    "initial.mean",
    "initial.cov_diag",
    "initial.cells",
    "initial.extent",
    "initial.path",
    "interaction.kind",
    "interaction.lambda",
    "interaction.a",
    "terminal.kind",
    "terminal.lambda",
    "terminal.center",
    "terminal.coordinate",
    "terminal.target.kind",
    "terminal.target.mean",
    "terminal.target.cov_diag",
    "terminal.target.cells",
    "terminal.target.extent",
    "terminal.target.path",
    "terminal.target.count",
    "classifier.widths",
    "classifier.activation",
    "classifier.batch",
    "classifier.lr",
    "classifier.init_steps",
    "classifier.refresh_every",
    "classifier.refresh_steps",
    "particle.steps",
    "particle.batch",
    "particle.beta",
    "particle.alpha",
    "flow.steps",
    "flow.batch",
    "flow.lr",
    "flow.widths",
    "flow.activation",
    "flow.integrator",
    "flow.zero_output",
};
constexpr std::string_view kExtraKey = "flow.zero_output";

struct Setting {
  std::string value;
  std::string origin;  // "file:line", "--set" or "preset <name>"
};
using Settings = std::map<std::string, Setting>;

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string join(const std::vector<int>& values) {
  std::string out;
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (k) out += ',';
    out += std::to_string(values[k]);
  }
  return out;
}

std::string join(const Vector& values) {
  std::string out;
  for (Eigen::Index k = 0; k < values.size(); ++k) {
    if (k) out += ',';
    out += format_double(values[k]);
  }
  return out;
}

// Reads typed values out of the merged settings, attributing errors to the
// line each value came from.
class Reader {
 public:
  explicit Reader(const Settings& s) : s_(s) {}

  bool has(const std::string& key) const { return s_.count(key) != 0; }

  const Setting& get(const std::string& key) const {
    auto it = s_.find(key);
    if (it == s_.end()) throw ConfigError("missing required key '" + key + "'");
    return it->second;
  }

  [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
    const auto it = s_.find(key);
    const std::string where = it == s_.end() ? std::string("config") : it->second.origin;
    throw ConfigError(where + ": " + key + ": " + msg);
  }

  std::string text(const std::string& key) const { return get(key).value; }

  double real(const std::string& key) const {
    try {
      const double v = parse_double(get(key).value);
      if (!std::isfinite(v)) fail(key, "must be finite");
      return v;
    } catch (const ConfigError& e) {
      if (!has(key)) throw;
      fail(key, "expected a number, got '" + get(key).value + "'");
    }
  }

  long long integer(const std::string& key, long long lo, long long hi = std::numeric_limits<int>::max()) const {
    const std::string& raw = get(key).value;
    long long v = 0;
    std::size_t used = 0;
    try {
      v = std::stoll(raw, &used);
    } catch (...) {
      fail(key, "expected an integer, got '" + raw + "'");
    }
    if (used != raw.size()) fail(key, "expected an integer, got '" + raw + "'");
    if (v < lo || v > hi) fail(key, "value " + raw + " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    return v;
  }

  std::uint64_t seed(const std::string& key) const {
    const std::string& raw = get(key).value;
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      if (!raw.empty() && raw.front() == '-') throw 0;
      v = std::stoull(raw, &used);
    } catch (...) {
      fail(key, "expected a non-negative integer, got '" + raw + "'");
    }
    if (used != raw.size()) fail(key, "expected a non-negative integer, got '" + raw + "'");
    return v;
  }

  bool boolean(const std::string& key) const {
    const std::string& raw = get(key).value;
    if (raw == "true" || raw == "1") return true;
    if (raw == "false" || raw == "0") return false;
    fail(key, "expected true or false, got '" + raw + "'");
  }

  Vector reals(const std::string& key) const {
    std::vector<double> values;
    std::string_view rest = get(key).value;
    while (true) {
      const auto pos = rest.find(',');
      const auto item = trim(rest.substr(0, pos));
      try {
        values.push_back(parse_double(item));
      } catch (const ConfigError&) {
        fail(key, "expected a comma separated list of numbers, got '" + get(key).value + "'");
      }
      if (pos == std::string_view::npos) break;
      rest.remove_prefix(pos + 1);
    }
    return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
  }

  std::vector<int> widths(const std::string& key) const {
    std::vector<int> out;
    const std::string& raw = get(key).value;
    if (trim(raw).empty()) return out;
    const Vector v = reals(key);
    for (Eigen::Index k = 0; k < v.size(); ++k) {
      if (v[k] < 1 || v[k] != std::floor(v[k]) || v[k] > 1e6) fail(key, "widths must be positive integers");
      out.push_back(static_cast<int>(v[k]));
    }
    return out;
  }

 private:
  const Settings& s_;
};

InitialDistribution read_distribution(const Reader& r, const std::string& prefix) {
  const std::string kind = r.text(prefix + "kind");
  if (kind == "gaussian") {
    GaussianDistribution g{r.reals(prefix + "mean"), r.reals(prefix + "cov_diag")};
    if (g.cov_diag.size() != g.mean.size()) r.fail(prefix + "cov_diag", "length differs from " + prefix + "mean");
    for (Eigen::Index k = 0; k < g.cov_diag.size(); ++k) {
      if (!(g.cov_diag[k] > 0.0)) r.fail(prefix + "cov_diag", "entries must be positive");
    }
    return g;
  }
  if (kind == "checkerboard") {
    CheckerboardDistribution c{static_cast<int>(r.integer(prefix + "cells", 2)), r.real(prefix + "extent")};
    if (c.cells % 2 != 0) r.fail(prefix + "cells", "must be even");
    if (!(c.extent > 0.0)) r.fail(prefix + "extent", "must be positive");
    return c;
  }
  if (kind == "empirical") {
    const std::string path = r.text(prefix + "path");
    try {
      return load_empirical(path);
    } catch (const ConfigError& e) {
      r.fail(prefix + "path", e.what());
    }
  }
  r.fail(prefix + "kind", "unknown distribution '" + kind + "' (expected gaussian, checkerboard or empirical)");
}

void write_distribution(Entries& e, const std::string& prefix, const InitialDistribution& dist) {
  if (const auto* g = std::get_if<GaussianDistribution>(&dist)) {
    e[prefix + "kind"] = "gaussian";
    e[prefix + "mean"] = join(g->mean);
    e[prefix + "cov_diag"] = join(g->cov_diag);
  } else if (const auto* c = std::get_if<CheckerboardDistribution>(&dist)) {
    e[prefix + "kind"] = "checkerboard";
    e[prefix + "cells"] = std::to_string(c->cells);
    e[prefix + "extent"] = format_double(c->extent);
  } else {
    e[prefix + "kind"] = "empirical";
    e[prefix + "path"] = std::get<EmpiricalDistribution>(dist).path.string();
  }
}

SolverConfig build(const Settings& s) {
  const Reader r(s);
  SolverConfig c;
  c.epochs = static_cast<int>(r.integer("solver.epochs", 0));
  c.refresh_rounds = static_cast<int>(r.integer("solver.refresh_rounds", 1));
  c.particles = static_cast<int>(r.integer("solver.particles", 1));
  c.timesteps = static_cast<int>(r.integer("solver.timesteps", 2));
  c.seed = r.seed("solver.seed");
  c.fm_every = static_cast<int>(r.integer("solver.fm_every", 1));

  c.initial = read_distribution(r, "initial.");
  const int d = dimension(c.initial);

  const std::string fkind = r.text("interaction.kind");
  if (fkind == "zero") {
    c.interaction = ZeroCoupling{};
  } else if (fkind == "kernel") {
    KernelInteraction k{r.real("interaction.lambda"), r.reals("interaction.a")};
    if (k.lambda < 0) r.fail("interaction.lambda", "must be >= 0");
    if (k.a.size() != d) r.fail("interaction.a", "needs " + std::to_string(d) + " entries");
    if (k.a.isZero(0.0)) r.fail("interaction.a", "must be nonzero");
    c.interaction = k;
  } else if (fkind == "potential") {
    QuadraticPotential p{r.real("interaction.lambda")};
    if (p.weight < 0) r.fail("interaction.lambda", "must be >= 0");
    c.interaction = p;
  } else {
    r.fail("interaction.kind", "unknown interaction '" + fkind + "' (expected zero, kernel or potential)");
  }

  const std::string gkind = r.text("terminal.kind");
  if (gkind == "zero") {
    c.terminal = ZeroCoupling{};
  } else if (gkind == "quadratic") {
    QuadraticTerminal q{r.real("terminal.lambda"), r.real("terminal.center"),
                        static_cast<int>(r.integer("terminal.coordinate", 0, d - 1))};
    if (q.lambda < 0) r.fail("terminal.lambda", "must be >= 0");
    c.terminal = q;
  } else if (gkind == "potential") {
    QuadraticPotential p{r.real("terminal.lambda")};
    if (p.weight < 0) r.fail("terminal.lambda", "must be >= 0");
    c.terminal = p;
  } else if (gkind == "kl") {
    KLTerminal kl;
    kl.target = read_distribution(r, "terminal.target.");
    if (dimension(kl.target) != d) r.fail("terminal.target.kind", "target dimension differs from initial");
    kl.target_count = static_cast<int>(r.integer("terminal.target.count", 1));
    kl.classifier.hidden = r.widths("classifier.widths");
    kl.classifier.activation = parse_activation(r.text("classifier.activation"));
    kl.classifier.batch = static_cast<int>(r.integer("classifier.batch", 1));
    kl.classifier.lr = r.real("classifier.lr");
    if (!(kl.classifier.lr > 0)) r.fail("classifier.lr", "must be positive");
    kl.classifier.init_steps = static_cast<int>(r.integer("classifier.init_steps", 0));
    kl.classifier.refresh_every = static_cast<int>(r.integer("classifier.refresh_every", 1));
    kl.classifier.refresh_steps = static_cast<int>(r.integer("classifier.refresh_steps", 0));
    c.terminal = kl;
  } else {
    r.fail("terminal.kind", "unknown terminal cost '" + gkind + "' (expected zero, quadratic, potential or kl)");
  }

  c.particle_steps = static_cast<int>(r.integer("particle.steps", 1));
  c.particle_batch = static_cast<int>(r.integer("particle.batch", 0));
  c.beta = r.real("particle.beta");
  if (!(c.beta > 0)) r.fail("particle.beta", "must be positive");
  c.proximal_alpha = r.real("particle.alpha");
  if (c.proximal_alpha < 0) r.fail("particle.alpha", "must be >= 0");

  c.fm_steps = static_cast<int>(r.integer("flow.steps", 0));
  c.fm_batch = static_cast<int>(r.integer("flow.batch", 0));
  c.fm_lr = r.real("flow.lr");
  if (!(c.fm_lr > 0)) r.fail("flow.lr", "must be positive");
  c.fm_hidden = r.widths("flow.widths");
  try {
    c.fm_activation = parse_activation(r.text("flow.activation"));
  } catch (const ConfigError& e) {
    r.fail("flow.activation", e.what());
  }
  try {
    c.integrator = parse_integrator(r.text("flow.integrator"));
  } catch (const ConfigError& e) {
    r.fail("flow.integrator", e.what());
  }
  c.fm_zero_output = r.boolean(std::string(kExtraKey));

  validate(c);
  return c;
}

Settings settings_from(const Entries& entries, const std::string& origin) {
  Settings s;
  for (const auto& [k, v] : entries) s[k] = Setting{v, origin};
  return s;
}

SolverConfig generic_defaults() {
  SolverConfig c;
  c.initial = GaussianDistribution{Vector::Zero(1), Vector::Ones(1)};
  return c;
}

}  // namespace

bool is_known_key(std::string_view key) {
  return std::find(std::begin(kKeys), std::end(kKeys), key) != std::end(kKeys);
}

std::vector<std::string> preset_names() {
  return {"non_potential_kernel", "checkerboard_to_gaussian", "quadratic_oc"};
}

SolverConfig preset_config(std::string_view name) {
  SolverConfig c;
  if (name == "non_potential_kernel") {
    c.initial = GaussianDistribution{Vector{{0.0, 1.0}}, Vector{{0.02, 0.1}}};
    c.interaction = KernelInteraction{10.0, Vector{{0.0, 1.0}}};
    c.terminal = QuadraticTerminal{1.0, -1.0, 1};
    c.epochs = 100;
    c.refresh_rounds = 1;
    c.particles = 2000;
    c.timesteps = 20;
    c.particle_steps = 100;
    c.beta = 0.01;
    c.fm_steps = 100;
    c.fm_lr = 0.01;
    c.fm_hidden = {4, 8, 16};
    c.fm_activation = Activation::kRelu;
    c.integrator = Integrator::kEuler;
  } else if (name == "checkerboard_to_gaussian") {
    c.initial = CheckerboardDistribution{4, 4.0};
    c.interaction = ZeroCoupling{};
    KLTerminal kl;
    kl.target = GaussianDistribution{Vector::Zero(2), Vector::Ones(2)};
    kl.target_count = 20000;
    kl.classifier = ClassifierConfig{{64, 64, 64}, Activation::kRelu, 2048, 1e-3, 1000, 10, 20};
    c.terminal = kl;
    c.epochs = 20;
    c.refresh_rounds = 1;
    c.particles = 4096;
    c.timesteps = 10;
    c.particle_steps = 1000;
    c.particle_batch = 2048;
    c.beta = 1e-3;
    c.fm_steps = 1000;
    c.fm_batch = 2048;
    c.fm_lr = 1e-3;
    c.fm_hidden = {64, 64, 64};
    c.fm_activation = Activation::kRelu;
    c.integrator = Integrator::kRk4;
  } else if (name == "quadratic_oc") {
    c.initial = GaussianDistribution{Vector::Ones(1), Vector::Constant(1, 0.25)};
    c.interaction = QuadraticPotential{1.0};
    c.terminal = QuadraticPotential{1.0};
    c.epochs = 5;
    c.refresh_rounds = 1;
    c.particles = 256;
    c.timesteps = 20;
    c.particle_steps = 500;
    c.beta = 0.02;
    c.fm_steps = 200;
    c.fm_lr = 0.01;
    c.fm_hidden = {32, 32};
    c.fm_activation = Activation::kRelu;
    c.integrator = Integrator::kRk4;
  } else {
    std::string known;
    for (const auto& p : preset_names()) known += (known.empty() ? "" : ", ") + p;
    throw ConfigError("unknown preset '" + std::string(name) + "' (known: " + known + ")");
  }
  return c;
}

Entries config_entries(const SolverConfig& c) {
  Entries e;
  e["solver.epochs"] = std::to_string(c.epochs);
  e["solver.refresh_rounds"] = std::to_string(c.refresh_rounds);
  e["solver.particles"] = std::to_string(c.particles);
  e["solver.timesteps"] = std::to_string(c.timesteps);
  e["solver.seed"] = std::to_string(c.seed);
  e["solver.fm_every"] = std::to_string(c.fm_every);
  write_distribution(e, "initial.", c.initial);

  if (const auto* k = std::get_if<KernelInteraction>(&c.interaction)) {
    e["interaction.kind"] = "kernel";
    e["interaction.lambda"] = format_double(k->lambda);
    e["interaction.a"] = join(k->a);
  } else if (const auto* p = std::get_if<QuadraticPotential>(&c.interaction)) {
    e["interaction.kind"] = "potential";
    e["interaction.lambda"] = format_double(p->weight);
  } else {
    e["interaction.kind"] = "zero";
  }

  if (const auto* q = std::get_if<QuadraticTerminal>(&c.terminal)) {
    e["terminal.kind"] = "quadratic";
    e["terminal.lambda"] = format_double(q->lambda);
    e["terminal.center"] = format_double(q->center);
    e["terminal.coordinate"] = std::to_string(q->coordinate);
  } else if (const auto* p = std::get_if<QuadraticPotential>(&c.terminal)) {
    e["terminal.kind"] = "potential";
    e["terminal.lambda"] = format_double(p->weight);
  } else if (const auto* kl = std::get_if<KLTerminal>(&c.terminal)) {
    e["terminal.kind"] = "kl";
    write_distribution(e, "terminal.target.", kl->target);
    e["terminal.target.count"] = std::to_string(kl->target_count);
    e["classifier.widths"] = join(kl->classifier.hidden);
    e["classifier.activation"] = to_string(kl->classifier.activation);
    e["classifier.batch"] = std::to_string(kl->classifier.batch);
    e["classifier.lr"] = format_double(kl->classifier.lr);
    e["classifier.init_steps"] = std::to_string(kl->classifier.init_steps);
    e["classifier.refresh_every"] = std::to_string(kl->classifier.refresh_every);
    e["classifier.refresh_steps"] = std::to_string(kl->classifier.refresh_steps);
  } else {
    e["terminal.kind"] = "zero";
  }

  e["particle.steps"] = std::to_string(c.particle_steps);
  e["particle.batch"] = std::to_string(c.particle_batch);
  e["particle.beta"] = format_double(c.beta);
  e["particle.alpha"] = format_double(c.proximal_alpha);
  e["flow.steps"] = std::to_string(c.fm_steps);
  e["flow.batch"] = std::to_string(c.fm_batch);
  e["flow.lr"] = format_double(c.fm_lr);
  e["flow.widths"] = join(c.fm_hidden);
  e["flow.activation"] = to_string(c.fm_activation);
  e["flow.integrator"] = to_string(c.integrator);
  e[std::string(kExtraKey)] = c.fm_zero_output ? "true" : "false";
  return e;
}

std::string echo_config(const SolverConfig& config) {
  std::string out;
  for (const auto& [k, v] : config_entries(config)) out += k + " = " + v + "\n";
  return out;
}

namespace {

// Defaults for keys that only matter for some kinds, so a file may switch
// kind without spelling out every field.
Entries kind_defaults() {
  Entries e;
  e["interaction.lambda"] = "0";
  e["interaction.a"] = "1";
  e["terminal.lambda"] = "0";
  e["terminal.center"] = "0";
  e["terminal.coordinate"] = "0";
  SolverConfig kl_base = preset_config("checkerboard_to_gaussian");
  for (const auto& [k, v] : config_entries(kl_base)) {
    if (k.rfind("classifier.", 0) == 0 || k.rfind("terminal.target.", 0) == 0) e[k] = v;
  }
  e["initial.cells"] = "4";
  e["initial.extent"] = "4";
  return e;
}

}  // namespace

SolverConfig parse_config(std::string_view text, std::string_view origin) {
  struct Line {
    std::string key, value;
    int number;
  };
  std::vector<Line> lines;
  std::string preset;
  int preset_line = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  int number = 0;
  const std::string where(origin);
  while (std::getline(in, raw)) {
    ++number;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(where + ":" + std::to_string(number) + ": expected 'key = value'");
    }
    std::string key(trim(line.substr(0, eq)));
    std::string value(trim(line.substr(eq + 1)));
    if (!is_known_key(key)) throw ConfigError(where + ":" + std::to_string(number) + ": unknown key '" + key + "'");
    for (const auto& l : lines) {
      if (l.key == key) {
        throw ConfigError(where + ":" + std::to_string(number) + ": duplicate key '" + key + "' (first set on line " +
                          std::to_string(l.number) + ")");
      }
    }
    if (key == "preset") {
      if (!preset.empty()) throw ConfigError(where + ":" + std::to_string(number) + ": duplicate key 'preset'");
      preset = value;
      preset_line = number;
      continue;
    }
    lines.push_back(Line{std::move(key), std::move(value), number});
  }

  SolverConfig base = generic_defaults();
  std::string base_origin = "defaults";
  if (!preset.empty()) {
    try {
      base = preset_config(preset);
    } catch (const ConfigError& e) {
      throw ConfigError(where + ":" + std::to_string(preset_line) + ": " + e.what());
    }
    base_origin = "preset " + preset;
  }
  Settings s = settings_from(kind_defaults(), base_origin);
  for (auto& [k, v] : settings_from(config_entries(base), base_origin)) s[k] = v;
  for (const auto& l : lines) s[l.key] = Setting{l.value, where + ":" + std::to_string(l.number)};
  try {
    return build(s);
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    if (msg.rfind(where + ":", 0) == 0 || msg.rfind("preset ", 0) == 0 || msg.rfind("defaults", 0) == 0) throw;
    throw ConfigError(where + ": " + msg);
  }
}

SolverConfig load_config(const std::filesystem::path& path) {
  return parse_config(read_file(path), path.string());
}

SolverConfig apply_overrides(const SolverConfig& base, const std::vector<std::string>& assignments) {
  if (assignments.empty()) return base;
  Settings s = settings_from(kind_defaults(), "defaults");
  for (auto& [k, v] : settings_from(config_entries(base), "base config")) s[k] = v;
  for (const auto& a : assignments) {
    const auto eq = a.find('=');
    if (eq == std::string::npos) throw ConfigError("--set: expected key=value, got '" + a + "'");
    const std::string key(trim(std::string_view(a).substr(0, eq)));
    if (!is_known_key(key) || key == "preset") throw ConfigError("--set: unknown key '" + key + "'");
    s[key] = Setting{std::string(trim(std::string_view(a).substr(eq + 1))), "--set " + key};
  }
  return build(s);
}

}  // namespace mfg::cli

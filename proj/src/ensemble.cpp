#include "mfg/ensemble.hpp"

#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mfg/errors.hpp"
#include "mfg/io.hpp"

namespace mfg {

TimeGrid::TimeGrid(int steps) : steps_(steps), dt_(0.0) {
  if (steps < 1) throw ConfigError("time grid needs at least one step, got " + std::to_string(steps));
  dt_ = 1.0 / steps;
}

double TimeGrid::node(int j) const { return static_cast<double>(j) / steps_; }

int dimension(const InitialDistribution& dist) {
  return std::visit(
      [](const auto& d) -> int {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, GaussianDistribution>) {
          return static_cast<int>(d.mean.size());
        } else if constexpr (std::is_same_v<T, CheckerboardDistribution>) {
          return 2;
        } else {
          return static_cast<int>(d.points.rows());
        }
      },
      dist);
}

void validate(const InitialDistribution& dist) {
  if (const auto* g = std::get_if<GaussianDistribution>(&dist)) {
    if (g->mean.size() == 0) throw ConfigError("gaussian: empty mean");
    if (g->cov_diag.size() != g->mean.size()) {
      throw ConfigError("gaussian: covariance diagonal has " + std::to_string(g->cov_diag.size()) +
                        " entries, mean has " + std::to_string(g->mean.size()));
    }
    for (Eigen::Index k = 0; k < g->cov_diag.size(); ++k) {
      if (!(g->cov_diag[k] > 0.0) || !std::isfinite(g->cov_diag[k])) {
        throw ConfigError("gaussian: covariance diagonal entries must be positive");
      }
    }
    if (!g->mean.allFinite()) throw ConfigError("gaussian: mean must be finite");
  } else if (const auto* c = std::get_if<CheckerboardDistribution>(&dist)) {
    if (c->cells < 2 || c->cells % 2 != 0) {
      throw ConfigError("checkerboard: cells per side must be a positive even integer");
    }
    if (!(c->extent > 0.0) || !std::isfinite(c->extent)) {
      throw ConfigError("checkerboard: extent must be positive");
    }
  } else {
    const auto& e = std::get<EmpiricalDistribution>(dist);
    if (e.points.cols() == 0 || e.points.rows() == 0) {
      throw ConfigError("empirical distribution " + e.path.string() + " has no points");
    }
  }
}

EmpiricalDistribution load_empirical(const std::filesystem::path& path) {
  return EmpiricalDistribution{path, read_points(path)};
}

bool checkerboard_cell_on(const CheckerboardDistribution& board, const Vector& x) {
  const double half = board.extent / 2.0;
  const double cell = board.extent / board.cells;
  if (x.size() != 2) return false;
  if (x[0] < -half || x[0] >= half || x[1] < -half || x[1] >= half) return false;
  const int col = static_cast<int>(std::floor((x[0] + half) / cell));
  const int row = static_cast<int>(std::floor((x[1] + half) / cell));
  return (row + col) % 2 == 0;
}

Matrix sample_initial(const InitialDistribution& dist, int n, std::uint64_t seed) {
  if (n < 1) throw ConfigError("sample_initial: need n >= 1, got " + std::to_string(n));
  validate(dist);
  std::mt19937_64 rng(seed);
  const int d = dimension(dist);
  Matrix out(d, n);
  if (const auto* g = std::get_if<GaussianDistribution>(&dist)) {
    std::normal_distribution<double> normal(0.0, 1.0);
    const Vector sd = g->cov_diag.cwiseSqrt();
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < d; ++k) out(k, i) = g->mean[k] + sd[k] * normal(rng);
    }
  } else if (const auto* c = std::get_if<CheckerboardDistribution>(&dist)) {
    // Enumerate "on" cells once, then pick one uniformly per draw.
    std::vector<std::pair<int, int>> on_cells;
    for (int r = 0; r < c->cells; ++r) {
      for (int col = 0; col < c->cells; ++col) {
        if ((r + col) % 2 == 0) on_cells.emplace_back(r, col);
      }
    }
    const double cell = c->extent / c->cells;
    const double half = c->extent / 2.0;
    std::uniform_int_distribution<std::size_t> pick(0, on_cells.size() - 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int i = 0; i < n; ++i) {
      const auto [r, col] = on_cells[pick(rng)];
      out(0, i) = -half + (col + unit(rng)) * cell;
      out(1, i) = -half + (r + unit(rng)) * cell;
    }
  } else {
    const auto& e = std::get<EmpiricalDistribution>(dist);
    std::uniform_int_distribution<Eigen::Index> pick(0, e.points.cols() - 1);
    for (int i = 0; i < n; ++i) out.col(i) = e.points.col(pick(rng));
  }
  return out;
}

ParticleEnsemble::ParticleEnsemble(int n, int d, TimeGrid grid)
    : n_(n), d_(d), grid_(grid), states_(Matrix::Zero(d, static_cast<Eigen::Index>(n) * (grid.steps() + 1))) {
  if (n < 0 || d < 1) throw ConfigError("ensemble needs n >= 0 and d >= 1");
}

Matrix ParticleEnsemble::slice(int j) const {
  Matrix out(d_, n_);
  for (int i = 0; i < n_; ++i) out.col(i) = point(i, j);
  return out;
}

ParticleEnsemble init_trajectories(const Matrix& x0, const TimeGrid& grid) {
  ParticleEnsemble ens(static_cast<int>(x0.cols()), std::max<int>(1, static_cast<int>(x0.rows())), grid);
  for (int i = 0; i < ens.size(); ++i) {
    ens.trajectory(i) = x0.col(i).replicate(1, ens.nodes());
  }
  return ens;
}

Matrix diff_t(const ParticleEnsemble& ens, int i) {
  const int m = ens.grid().steps();
  const auto x = ens.trajectory(i);
  return (x.rightCols(m) - x.leftCols(m)) / ens.grid().dt();
}

Matrix diff_tt(const ParticleEnsemble& ens, int i) {
  const int m = ens.grid().steps();
  if (m < 2) throw ConfigError("diff_tt needs m >= 2");
  const double dt = ens.grid().dt();
  const auto x = ens.trajectory(i);
  return (x.rightCols(m - 1) - 2.0 * x.middleCols(1, m - 1) + x.leftCols(m - 1)) / (dt * dt);
}

double dynamic_cost(const ParticleEnsemble& ens) {
  if (ens.size() == 0) return 0.0;
  const double dt = ens.grid().dt();
  double total = 0.0;
  for (int i = 0; i < ens.size(); ++i) total += 0.5 * diff_t(ens, i).squaredNorm();
  return dt * total / ens.size();
}

namespace {

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    parts.push_back(line.substr(start, pos == std::string_view::npos ? line.npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

double parse_field(std::string_view text, const std::filesystem::path& path, int line) {
  try {
    return parse_double(text);
  } catch (const ConfigError&) {
    throw ConfigError(path.string() + ":" + std::to_string(line) + ": not a number: '" +
                      std::string(text) + "'");
  }
}

}  // namespace

Matrix read_points(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  std::vector<double> values;
  long width = -1;
  long rows = 0;
  int line_no = 0;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    const auto trimmed = trim(line);
    if (trimmed.empty()) continue;
    const auto fields = split(trimmed, ',');
    if (width < 0) width = static_cast<long>(fields.size());
    if (static_cast<long>(fields.size()) != width) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                        std::to_string(width) + " values, found " + std::to_string(fields.size()));
    }
    for (auto f : fields) values.push_back(parse_field(f, path, line_no));
    ++rows;
  }
  if (rows == 0) throw ConfigError(path.string() + ": no points");
  Matrix out(width, rows);
  for (long r = 0; r < rows; ++r) {
    for (long k = 0; k < width; ++k) out(k, r) = values[r * width + k];
  }
  return out;
}

std::string ensemble_to_csv(const ParticleEnsemble& ens) {
  std::string out = "particle_id,time_index";
  for (int k = 0; k < ens.dim(); ++k) out += ",x_" + std::to_string(k);
  out += '\n';
  for (int i = 0; i < ens.size(); ++i) {
    for (int j = 0; j < ens.nodes(); ++j) {
      out += std::to_string(i);
      out += ',';
      out += std::to_string(j);
      const auto p = ens.point(i, j);
      for (int k = 0; k < ens.dim(); ++k) {
        out += ',';
        out += format_double(p[k]);
      }
      out += '\n';
    }
  }
  return out;
}

void write_ensemble_csv(const std::filesystem::path& path, const ParticleEnsemble& ens) {
  write_file_atomic(path, ensemble_to_csv(ens));
}

ParticleEnsemble read_ensemble_csv(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError(path.string() + ": empty file");
  const auto header = split(trim(line), ',');
  if (header.size() < 3 || trim(header[0]) != "particle_id" || trim(header[1]) != "time_index") {
    throw ConfigError(path.string() + ":1: expected header particle_id,time_index,x_0,...");
  }
  const int d = static_cast<int>(header.size()) - 2;
  struct Row {
    long i, j;
    std::vector<double> x;
  };
  std::vector<Row> rows;
  long max_i = -1, max_j = -1;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto trimmed = trim(line);
    if (trimmed.empty()) continue;
    const auto fields = split(trimmed, ',');
    if (static_cast<int>(fields.size()) != d + 2) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                        std::to_string(d + 2) + " fields");
    }
    Row r;
    const double fi = parse_field(fields[0], path, line_no);
    const double fj = parse_field(fields[1], path, line_no);
    if (fi < 0 || fj < 0 || fi != std::floor(fi) || fj != std::floor(fj)) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": bad indices");
    }
    r.i = static_cast<long>(fi);
    r.j = static_cast<long>(fj);
    for (int k = 0; k < d; ++k) r.x.push_back(parse_field(fields[k + 2], path, line_no));
    max_i = std::max(max_i, r.i);
    max_j = std::max(max_j, r.j);
    rows.push_back(std::move(r));
  }
  if (rows.empty() || max_j < 1) throw ConfigError(path.string() + ": need at least two time indices");
  ParticleEnsemble ens(static_cast<int>(max_i + 1), d, TimeGrid(static_cast<int>(max_j)));
  if (static_cast<long>(rows.size()) != (max_i + 1) * (max_j + 1)) {
    throw ConfigError(path.string() + ": expected " + std::to_string((max_i + 1) * (max_j + 1)) +
                      " rows, found " + std::to_string(rows.size()));
  }
  std::vector<char> seen(rows.size(), 0);
  for (const auto& r : rows) {
    const auto idx = static_cast<std::size_t>(r.i * (max_j + 1) + r.j);
    if (seen[idx]) {
      throw ConfigError(path.string() + ": duplicate row for particle " + std::to_string(r.i) +
                        " time " + std::to_string(r.j));
    }
    seen[idx] = 1;
    for (int k = 0; k < d; ++k) ens.point(static_cast<int>(r.i), static_cast<int>(r.j))[k] = r.x[k];
  }
  return ens;
}

}  // namespace mfg

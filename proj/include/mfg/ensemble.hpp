#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>

#include <Eigen/Dense>

namespace mfg {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Uniform grid t_j = j / m on [0, 1].
class TimeGrid {
 public:
  explicit TimeGrid(int steps);

  int steps() const { return steps_; }
  double dt() const { return dt_; }
  double node(int j) const;

 private:
  int steps_;
  double dt_;
};

struct GaussianDistribution {
  Vector mean;
  Vector cov_diag;
};

/// Square board [-extent/2, extent/2]^2 split into cells x cells squares; cell
/// (r, c) counted from the lower-left corner is "on" when r + c is even.
struct CheckerboardDistribution {
  int cells = 4;
  double extent = 4.0;
};

/// Uniform resampling (with replacement) of points read from a text file.
struct EmpiricalDistribution {
  std::filesystem::path path;
  Matrix points;  // d x count, filled by load_empirical
};

using InitialDistribution =
    std::variant<GaussianDistribution, CheckerboardDistribution, EmpiricalDistribution>;

int dimension(const InitialDistribution& dist);
void validate(const InitialDistribution& dist);
EmpiricalDistribution load_empirical(const std::filesystem::path& path);

/// Returns n i.i.d. draws as the columns of a d x n matrix.
Matrix sample_initial(const InitialDistribution& dist, int n, std::uint64_t seed);

bool checkerboard_cell_on(const CheckerboardDistribution& board, const Vector& x);

/// n trajectories on a shared grid. Trajectory i is a d x (m+1) block whose
/// column j is X_{i,t_j}.
class ParticleEnsemble {
 public:
  ParticleEnsemble(int n, int d, TimeGrid grid);

  int size() const { return n_; }
  int dim() const { return d_; }
  const TimeGrid& grid() const { return grid_; }
  int nodes() const { return grid_.steps() + 1; }

  auto trajectory(int i) { return states_.middleCols(static_cast<Eigen::Index>(i) * nodes(), nodes()); }
  auto trajectory(int i) const {
    return states_.middleCols(static_cast<Eigen::Index>(i) * nodes(), nodes());
  }
  auto point(int i, int j) { return states_.col(static_cast<Eigen::Index>(i) * nodes() + j); }
  auto point(int i, int j) const {
    return states_.col(static_cast<Eigen::Index>(i) * nodes() + j);
  }

  /// d x n matrix of all particles at t_j.
  Matrix slice(int j) const;
  const Matrix& states() const { return states_; }

  bool all_finite() const { return states_.allFinite(); }

 private:
  int n_;
  int d_;
  TimeGrid grid_;
  Matrix states_;
};

ParticleEnsemble init_trajectories(const Matrix& x0, const TimeGrid& grid);

/// Backward differences; column j-1 holds (D_t X_i)_{t_j}, j = 1..m.
Matrix diff_t(const ParticleEnsemble& ens, int i);

/// Central second differences; column j-1 holds (D_tt X_i)_{t_j}, j = 1..m-1.
Matrix diff_tt(const ParticleEnsemble& ens, int i);

/// (dt/n) sum_i sum_j 1/2 |(X_{i,t_j} - X_{i,t_{j-1}})/dt|^2
double dynamic_cost(const ParticleEnsemble& ens);

// Headerless text: one point per line, comma separated coordinates.
Matrix read_points(const std::filesystem::path& path);

// CSV with columns particle_id,time_index,x_0..x_{d-1}.
std::string ensemble_to_csv(const ParticleEnsemble& ens);
void write_ensemble_csv(const std::filesystem::path& path, const ParticleEnsemble& ens);
ParticleEnsemble read_ensemble_csv(const std::filesystem::path& path);

}  // namespace mfg

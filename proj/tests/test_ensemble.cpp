#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "mfg/ensemble.hpp"
#include "mfg/errors.hpp"
#include "mfg/io.hpp"

using namespace mfg;

namespace {

ParticleEnsemble from_function(int m, double (*f)(double)) {
  const TimeGrid grid(m);
  ParticleEnsemble ens(1, 1, grid);
  for (int j = 0; j <= m; ++j) ens.point(0, j)(0) = f(grid.node(j));
  return ens;
}

ParticleEnsemble crossing_pair(int m) {
  const TimeGrid grid(m);
  ParticleEnsemble ens(2, 1, grid);
  for (int j = 0; j <= m; ++j) {
    ens.point(0, j)(0) = grid.node(j);
    ens.point(1, j)(0) = 1.0 - grid.node(j);
  }
  return ens;
}

}  // namespace

TEST_CASE("time grid endpoints") {
  for (int m : {1, 3, 7, 10, 20, 49, 100}) {
    const TimeGrid g(m);
    CHECK(g.node(0) == 0.0);
    CHECK(g.node(m) == 1.0);
    for (int j = 1; j <= m; ++j) CHECK(g.node(j) > g.node(j - 1));
    CHECK(std::abs(g.dt() * m - 1.0) <= 2.3e-16);
  }
  CHECK_THROWS_AS(TimeGrid(0), ConfigError);
}

TEST_CASE("gaussian sampling moments") {
  const GaussianDistribution g{Vector{{0.0, 1.0}}, Vector{{0.02, 0.1}}};
  const Matrix x = sample_initial(g, 10000, 11);
  const Vector mean = x.rowwise().mean();
  CHECK(std::abs(mean(0) - 0.0) < 0.01);
  CHECK(std::abs(mean(1) - 1.0) < 0.01);
  for (int k = 0; k < 2; ++k) {
    const double var = (x.row(k).array() - mean(k)).square().mean();
    const double se = g.cov_diag(k) * std::sqrt(2.0 / 10000);
    CHECK(std::abs(var - g.cov_diag(k)) < 5 * se);
  }
}

TEST_CASE("sampling is deterministic in the seed") {
  const GaussianDistribution g{Vector::Zero(3), Vector::Ones(3)};
  CHECK(sample_initial(g, 50, 4) == sample_initial(g, 50, 4));
  CHECK(sample_initial(g, 50, 4) != sample_initial(g, 50, 5));
}

TEST_CASE("checkerboard samples avoid off cells") {
  const CheckerboardDistribution board{4, 4.0};
  const Matrix x = sample_initial(board, 100000, 2);
  int counts[4][4] = {};
  for (Eigen::Index i = 0; i < x.cols(); ++i) {
    const int col = static_cast<int>(std::floor(x(0, i) + 2.0));
    const int row = static_cast<int>(std::floor(x(1, i) + 2.0));
    REQUIRE(col >= 0);
    REQUIRE(col < 4);
    REQUIRE(row >= 0);
    REQUIRE(row < 4);
    ++counts[row][col];
    CHECK(checkerboard_cell_on(board, x.col(i)));
  }
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      if ((r + c) % 2 == 0) {
        CHECK(counts[r][c] > 11000);
      } else {
        CHECK(counts[r][c] == 0);
      }
    }
  }
}

TEST_CASE("invalid distributions") {
  CHECK_THROWS_AS(validate(GaussianDistribution{Vector::Zero(2), Vector{{1.0, 0.0}}}), ConfigError);
  CHECK_THROWS_AS(validate(GaussianDistribution{Vector::Zero(2), Vector::Ones(3)}), ConfigError);
  CHECK_THROWS_AS(sample_initial(GaussianDistribution{Vector::Zero(1), Vector::Ones(1)}, 0, 1), ConfigError);
}

TEST_CASE("empirical distribution resamples file points") {
  const auto path = std::filesystem::temp_directory_path() / "mfg_points.txt";
  {
    std::ofstream out(path);
    out << "1,2\n3,4\n\n5,6\n";
  }
  const EmpiricalDistribution dist = load_empirical(path);
  CHECK(dist.points.cols() == 3);
  CHECK(dimension(dist) == 2);
  const Matrix x = sample_initial(dist, 200, 1);
  for (Eigen::Index i = 0; i < x.cols(); ++i) {
    CHECK(x(1, i) == x(0, i) + 1.0);
  }
  {
    std::ofstream out(path);
    out << "1,2\n3\n";
  }
  try {
    read_points(path);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find(":2") != std::string::npos);
  }
  std::filesystem::remove(path);
}

TEST_CASE("init_trajectories broadcasts") {
  const ParticleEnsemble ens = init_trajectories(Matrix{{1.0}, {2.0}}, TimeGrid(2));
  for (int j = 0; j <= 2; ++j) {
    CHECK(ens.point(0, j)(0) == 1.0);
    CHECK(ens.point(0, j)(1) == 2.0);
  }
  CHECK(diff_t(ens, 0).isZero(0.0));

  const ParticleEnsemble empty = init_trajectories(Matrix(3, 0), TimeGrid(4));
  CHECK(empty.size() == 0);
  CHECK(empty.dim() == 3);
  CHECK(dynamic_cost(empty) == 0.0);

  const Matrix x0 = sample_initial(GaussianDistribution{Vector::Zero(2), Vector::Ones(2)}, 17, 9);
  const ParticleEnsemble e2 = init_trajectories(x0, TimeGrid(5));
  CHECK(e2.slice(0) == x0);
}

TEST_CASE("backward differences") {
  ParticleEnsemble ens(1, 1, TimeGrid(2));
  ens.point(0, 0)(0) = 0.0;
  ens.point(0, 1)(0) = 0.5;
  ens.point(0, 2)(0) = 1.0;
  const Matrix d = diff_t(ens, 0);
  CHECK(d.cols() == 2);
  CHECK(d(0, 0) == 1.0);
  CHECK(d(0, 1) == 1.0);

  const ParticleEnsemble sq = from_function(100, [](double t) { return t * t; });
  const Matrix dq = diff_t(sq, 0);
  const double dt = 0.01;
  double worst = 0.0;
  for (int j = 1; j <= 100; ++j) worst = std::max(worst, std::abs(dq(0, j - 1) - 2 * sq.grid().node(j)));
  CHECK(worst <= 2 * dt);
  CHECK(worst == doctest::Approx(dt).epsilon(1e-6));  // (t_j^2 - t_{j-1}^2)/dt = 2 t_j - dt
}

TEST_CASE("central second differences") {
  const ParticleEnsemble lin = from_function(10, [](double t) { return 3.0 * t - 1.0; });
  CHECK(diff_tt(lin, 0).cwiseAbs().maxCoeff() < 1e-12);

  const ParticleEnsemble sq = from_function(50, [](double t) { return t * t; });
  const Matrix d2 = diff_tt(sq, 0);
  CHECK(d2.cols() == 49);
  for (int j = 0; j < 49; ++j) CHECK(d2(0, j) == doctest::Approx(2.0).epsilon(1e-9));

  const ParticleEnsemble ch = from_function(100, [](double t) { return std::cosh(t); });
  const Matrix dc = diff_tt(ch, 0);
  const double bound = 1e-4 * std::cosh(1.0) / 12.0;
  for (int j = 1; j < 100; ++j) CHECK(std::abs(dc(0, j - 1) - std::cosh(ch.grid().node(j))) <= bound + 1e-9);

  CHECK_THROWS_AS(diff_tt(ParticleEnsemble(1, 1, TimeGrid(1)), 0), ConfigError);
}

TEST_CASE("dynamic cost examples") {
  for (int m : {1, 4, 13}) {
    const ParticleEnsemble line = from_function(m, [](double t) { return t; });
    CHECK(dynamic_cost(line) == doctest::Approx(0.5).epsilon(1e-12));
  }
  CHECK(dynamic_cost(init_trajectories(Matrix::Ones(2, 5), TimeGrid(6))) == 0.0);
  // Each crossing line costs 1/2; the ensemble cost is the per-particle mean.
  CHECK(dynamic_cost(crossing_pair(4)) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("ensemble csv round trip") {
  ParticleEnsemble ens(3, 2, TimeGrid(4));
  const Matrix x0 = sample_initial(GaussianDistribution{Vector::Zero(2), Vector::Ones(2)}, 15, 3);
  for (int i = 0; i < 3; ++i) ens.trajectory(i) = x0.middleCols(5 * i, 5);
  const auto path = std::filesystem::temp_directory_path() / "mfg_ens.csv";
  write_ensemble_csv(path, ens);
  const ParticleEnsemble back = read_ensemble_csv(path);
  CHECK(back.size() == 3);
  CHECK(back.dim() == 2);
  CHECK(back.grid().steps() == 4);
  CHECK(back.states() == ens.states());
  CHECK(read_file(path).substr(0, 30) == "particle_id,time_index,x_0,x_1");

  write_file_atomic(path, "particle_id,time_index,x_0\n0,0,1\n0,0,2\n");
  CHECK_THROWS_AS(read_ensemble_csv(path), ConfigError);
  std::filesystem::remove(path);
}

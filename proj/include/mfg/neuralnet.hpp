#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace mfg {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class Activation : std::uint32_t { kIdentity = 0, kRelu = 1, kSwish = 2 };

std::string to_string(Activation act);
Activation parse_activation(const std::string& name);

/// Fully connected network. Hidden layers share one activation; the output
/// layer is affine. All parameters live in one flat vector, layer by layer,
/// each layer's weight (row-major, out x in) followed by its bias.
class Mlp {
 public:
  using WeightMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ConstWeightMap =
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

  struct Gradients {
    Vector parameters;  // summed over the batch
    Matrix inputs;      // one column per sample
  };

  Mlp() = default;
  /// Zero-initialized network. widths = {input, hidden..., output}.
  Mlp(std::vector<int> widths, Activation hidden, bool time_input = false);

  /// Uniform Glorot initialization of weights, zero biases.
  static Mlp glorot(std::vector<int> widths, Activation hidden, bool time_input, std::uint64_t seed);

  const std::vector<int>& widths() const { return widths_; }
  int layers() const { return static_cast<int>(widths_.size()) - 1; }
  int input_width() const { return widths_.front(); }
  int output_width() const { return widths_.back(); }
  Activation activation() const { return hidden_; }
  bool time_input() const { return time_input_; }

  Vector& parameters() { return params_; }
  const Vector& parameters() const { return params_; }
  Eigen::Index parameter_count() const { return params_.size(); }

  WeightMap weight(int layer);
  ConstWeightMap weight(int layer) const;
  Eigen::Map<Vector> bias(int layer);
  Eigen::Map<const Vector> bias(int layer) const;

  Vector forward(const Vector& x) const;
  /// Columns of inputs are samples.
  Matrix forward_batch(const Matrix& inputs) const;

  Gradients backward(const Vector& x, const Vector& upstream) const;
  Gradients backward_batch(const Matrix& inputs, const Matrix& upstream) const;

  /// Adds scale * d/dparams sum_c |f(x_c) - y_c|^2 to grad and returns the
  /// unweighted sum of squared residuals. One forward pass.
  double accumulate_squared_error(const Matrix& inputs, const Matrix& targets, double scale, Vector& grad) const;

 private:
  void check_input(Eigen::Index rows) const;

  std::vector<int> widths_;
  Activation hidden_ = Activation::kRelu;
  bool time_input_ = false;
  std::vector<Eigen::Index> offsets_;  // start of each layer's weight block
  Vector params_;
};

/// Adam with bias correction. Moments are congruent to the parameter vector.
struct AdamState {
  AdamState() = default;
  AdamState(Eigen::Index size, double lr) : lr(lr), m(Vector::Zero(size)), v(Vector::Zero(size)) {}

  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  Vector m;
  Vector v;
};

/// Throws TrainingError on a non-finite gradient.
void adam_step(AdamState& state, Vector& params, const Vector& grads);

void save_mlp(const std::filesystem::path& path, const Mlp& net);
std::string serialize_mlp(const Mlp& net);
Mlp load_mlp(const std::filesystem::path& path);
Mlp deserialize_mlp(const std::string& bytes);

}  // namespace mfg

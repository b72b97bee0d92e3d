#include "mfg/neuralnet.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <random>

#include "mfg/errors.hpp"
#include "mfg/io.hpp"

namespace mfg {
namespace {

constexpr char kMagic[8] = {'M', 'F', 'G', 'M', 'L', 'P', '0', '1'};

template <typename Derived>
Matrix activate(const Eigen::MatrixBase<Derived>& z, Activation act) {
  switch (act) {
    case Activation::kRelu:
      return z.cwiseMax(0.0);
    case Activation::kSwish:
      return z.array() / (1.0 + (-z.array()).exp());
    case Activation::kIdentity:
      break;
  }
  return z;
}

// Elementwise derivative of the activation at pre-activation z.
Matrix activation_slope(const Matrix& z, Activation act) {
  switch (act) {
    case Activation::kRelu:
      return (z.array() > 0.0).cast<double>();
    case Activation::kSwish: {
      const Eigen::ArrayXXd s = 1.0 / (1.0 + (-z.array()).exp());
      return s + z.array() * s * (1.0 - s);
    }
    case Activation::kIdentity:
      break;
  }
  return Matrix::Ones(z.rows(), z.cols());
}

}  // namespace

std::string to_string(Activation act) {
  switch (act) {
    case Activation::kRelu:
      return "relu";
    case Activation::kSwish:
      return "swish";
    case Activation::kIdentity:
      return "identity";
  }
  return "unknown";
}

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "swish") return Activation::kSwish;
  if (name == "identity") return Activation::kIdentity;
  throw ConfigError("unknown activation '" + name + "' (expected relu, swish or identity)");
}

Mlp::Mlp(std::vector<int> widths, Activation hidden, bool time_input)
    : widths_(std::move(widths)), hidden_(hidden), time_input_(time_input) {
  if (widths_.size() < 2) throw ConfigError("network needs at least input and output widths");
  Eigen::Index total = 0;
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    if (widths_[l] < 1 || widths_[l + 1] < 1) throw ConfigError("layer widths must be positive");
    offsets_.push_back(total);
    total += static_cast<Eigen::Index>(widths_[l] + 1) * widths_[l + 1];
  }
  params_ = Vector::Zero(total);
}

Mlp Mlp::glorot(std::vector<int> widths, Activation hidden, bool time_input, std::uint64_t seed) {
  Mlp net(std::move(widths), hidden, time_input);
  std::mt19937_64 rng(seed);
  for (int l = 0; l < net.layers(); ++l) {
    const double fan_in = net.widths_[l];
    const double fan_out = net.widths_[l + 1];
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> unif(-bound, bound);
    auto w = net.weight(l);
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = unif(rng);
    }
  }
  return net;
}

Mlp::WeightMap Mlp::weight(int layer) {
  return WeightMap(params_.data() + offsets_[layer], widths_[layer + 1], widths_[layer]);
}

Mlp::ConstWeightMap Mlp::weight(int layer) const {
  return ConstWeightMap(params_.data() + offsets_[layer], widths_[layer + 1], widths_[layer]);
}

Eigen::Map<Vector> Mlp::bias(int layer) {
  return Eigen::Map<Vector>(params_.data() + offsets_[layer] +
                                static_cast<Eigen::Index>(widths_[layer]) * widths_[layer + 1],
                            widths_[layer + 1]);
}

Eigen::Map<const Vector> Mlp::bias(int layer) const {
  return Eigen::Map<const Vector>(params_.data() + offsets_[layer] +
                                      static_cast<Eigen::Index>(widths_[layer]) * widths_[layer + 1],
                                  widths_[layer + 1]);
}

void Mlp::check_input(Eigen::Index rows) const {
  if (widths_.empty()) throw ConfigError("network is empty");
  if (rows != widths_.front()) {
    throw ConfigError("network input has width " + std::to_string(rows) + ", expected " +
                      std::to_string(widths_.front()));
  }
}

Vector Mlp::forward(const Vector& x) const {
  Matrix in = x;
  return forward_batch(in).col(0);
}

Matrix Mlp::forward_batch(const Matrix& inputs) const {
  check_input(inputs.rows());
  Matrix a = inputs;
  for (int l = 0; l < layers(); ++l) {
    Matrix z = weight(l) * a;
    z.colwise() += bias(l);
    a = (l + 1 == layers()) ? z : activate(z, hidden_);
  }
  return a;
}

Mlp::Gradients Mlp::backward(const Vector& x, const Vector& upstream) const {
  Matrix in = x;
  Matrix up = upstream;
  return backward_batch(in, up);
}

Mlp::Gradients Mlp::backward_batch(const Matrix& inputs, const Matrix& upstream) const {
  check_input(inputs.rows());
  if (upstream.rows() != output_width() || upstream.cols() != inputs.cols()) {
    throw ConfigError("upstream cotangent shape does not match network output");
  }
  const int nl = layers();
  std::vector<Matrix> acts(nl + 1);  // acts[l] is the input to layer l
  std::vector<Matrix> pre(nl);
  acts[0] = inputs;
  for (int l = 0; l < nl; ++l) {
    pre[l] = weight(l) * acts[l];
    pre[l].colwise() += bias(l);
    acts[l + 1] = (l + 1 == nl) ? pre[l] : activate(pre[l], hidden_);
  }

  Gradients grads{Vector::Zero(params_.size()), Matrix()};
  Matrix delta = upstream;  // d loss / d pre-activation of the current layer
  for (int l = nl - 1; l >= 0; --l) {
    if (l + 1 != nl) delta.array() *= activation_slope(pre[l], hidden_).array();
    WeightMap gw(grads.parameters.data() + offsets_[l], widths_[l + 1], widths_[l]);
    gw.noalias() = delta * acts[l].transpose();
    Eigen::Map<Vector>(grads.parameters.data() + offsets_[l] +
                           static_cast<Eigen::Index>(widths_[l]) * widths_[l + 1],
                       widths_[l + 1]) = delta.rowwise().sum();
    delta = weight(l).transpose() * delta;
  }
  grads.inputs = std::move(delta);
  return grads;
}

double Mlp::accumulate_squared_error(const Matrix& inputs, const Matrix& targets, double scale,
                                     Vector& grad) const {
  check_input(inputs.rows());
  if (targets.rows() != output_width() || targets.cols() != inputs.cols() || grad.size() != params_.size()) {
    throw ConfigError("regression targets or gradient buffer have the wrong shape");
  }
  const int nl = layers();
  std::vector<Matrix> acts(nl + 1);
  std::vector<Matrix> pre(nl);
  acts[0] = inputs;
  for (int l = 0; l < nl; ++l) {
    pre[l] = weight(l) * acts[l];
    pre[l].colwise() += bias(l);
    acts[l + 1] = (l + 1 == nl) ? pre[l] : activate(pre[l], hidden_);
  }
  Matrix delta = acts[nl] - targets;
  const double sse = delta.squaredNorm();
  delta *= 2.0 * scale;
  for (int l = nl - 1; l >= 0; --l) {
    if (l + 1 != nl) delta.array() *= activation_slope(pre[l], hidden_).array();
    WeightMap gw(grad.data() + offsets_[l], widths_[l + 1], widths_[l]);
    gw.noalias() += delta * acts[l].transpose();
    Eigen::Map<Vector>(grad.data() + offsets_[l] + static_cast<Eigen::Index>(widths_[l]) * widths_[l + 1],
                       widths_[l + 1]) += delta.rowwise().sum();
    if (l > 0) delta = weight(l).transpose() * delta;
  }
  return sse;
}

void adam_step(AdamState& state, Vector& params, const Vector& grads) {
  if (state.m.size() != params.size() || state.v.size() != params.size() ||
      grads.size() != params.size()) {
    throw ConfigError("adam: moment/parameter/gradient sizes differ");
  }
  if (!grads.allFinite()) throw TrainingError("adam: non-finite gradient", state.step + 1);
  ++state.step;
  state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads;
  state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads.cwiseAbs2();
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  params.array() -= state.lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + state.eps);
}

namespace {

template <typename T>
void put_le(std::string& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.append(bytes, sizeof(T));
}

template <typename T>
T get_le(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw ConfigError("network file truncated");
  char bytes[sizeof(T)];
  std::memcpy(bytes, in.data() + pos, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  pos += sizeof(T);
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

}  // namespace

// Layout: magic[8], u32 width count, u32 widths..., u32 hidden activation,
// u32 time-input flag, then f64 parameters in flat order.
std::string serialize_mlp(const Mlp& net) {
  std::string out(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(net.widths().size()));
  for (int w : net.widths()) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(w));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(net.activation()));
  put_le<std::uint32_t>(out, net.time_input() ? 1u : 0u);
  for (Eigen::Index k = 0; k < net.parameter_count(); ++k) put_le<double>(out, net.parameters()[k]);
  return out;
}

Mlp deserialize_mlp(const std::string& bytes) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw ConfigError("not a network file (bad magic)");
  }
  std::size_t pos = sizeof(kMagic);
  const auto count = get_le<std::uint32_t>(bytes, pos);
  if (count < 2 || count > 1024) throw ConfigError("network file: implausible layer count");
  std::vector<int> widths;
  for (std::uint32_t k = 0; k < count; ++k) widths.push_back(static_cast<int>(get_le<std::uint32_t>(bytes, pos)));
  const auto act = get_le<std::uint32_t>(bytes, pos);
  if (act > 2) throw ConfigError("network file: unknown activation tag");
  const bool time_input = get_le<std::uint32_t>(bytes, pos) != 0;
  Mlp net(widths, static_cast<Activation>(act), time_input);
  for (Eigen::Index k = 0; k < net.parameter_count(); ++k) net.parameters()[k] = get_le<double>(bytes, pos);
  if (pos != bytes.size()) throw ConfigError("network file: trailing bytes");
  return net;
}

void save_mlp(const std::filesystem::path& path, const Mlp& net) {
  write_file_atomic(path, serialize_mlp(net));
}

Mlp load_mlp(const std::filesystem::path& path) { return deserialize_mlp(read_file(path)); }

}  // namespace mfg

#include "mfg/couplings.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "mfg/errors.hpp"
#include "mfg/io.hpp"

namespace mfg {

void validate(const CouplingSpec& spec, int d) {
  if (const auto* k = std::get_if<KernelInteraction>(&spec)) {
    if (!(k->lambda >= 0.0) || !std::isfinite(k->lambda)) throw ConfigError("kernel: lambda must be >= 0");
    if (k->a.size() != d) {
      throw ConfigError("kernel: vector a has " + std::to_string(k->a.size()) + " entries, state dimension is " +
                        std::to_string(d));
    }
    if (!k->a.allFinite() || k->a.isZero(0.0)) throw ConfigError("kernel: vector a must be finite and nonzero");
  } else if (const auto* q = std::get_if<QuadraticTerminal>(&spec)) {
    if (!(q->lambda >= 0.0) || !std::isfinite(q->lambda)) throw ConfigError("quadratic: lambda must be >= 0");
    if (q->coordinate < 0 || q->coordinate >= d) {
      throw ConfigError("quadratic: coordinate " + std::to_string(q->coordinate) + " outside [0, " +
                        std::to_string(d) + ")");
    }
    if (!std::isfinite(q->center)) throw ConfigError("quadratic: center must be finite");
  } else if (const auto* p = std::get_if<QuadraticPotential>(&spec)) {
    if (!(p->weight >= 0.0) || !std::isfinite(p->weight)) throw ConfigError("potential: weight must be >= 0");
  } else if (const auto* kl = std::get_if<KLTerminal>(&spec)) {
    validate(kl->target);
    if (dimension(kl->target) != d) throw ConfigError("kl: target dimension differs from state dimension");
    if (kl->target_count < 1) throw ConfigError("kl: target sample set must be nonempty");
    if (kl->samples.size() > 0 && kl->samples.rows() != d) throw ConfigError("kl: target samples have wrong width");
    const auto& c = kl->classifier;
    if (c.batch < 1 || !(c.lr > 0.0) || c.init_steps < 0 || c.refresh_every < 1 || c.refresh_steps < 0) {
      throw ConfigError("kl: classifier schedule needs batch >= 1, lr > 0, refresh_every >= 1, steps >= 0");
    }
    for (int w : c.hidden) {
      if (w < 1) throw ConfigError("kl: classifier widths must be positive");
    }
  }
}

bool is_population_dependent(const CouplingSpec& spec) {
  return std::holds_alternative<KernelInteraction>(spec) || std::holds_alternative<KLTerminal>(spec);
}

void materialize_target(KLTerminal& spec, std::uint64_t seed) {
  spec.samples = sample_initial(spec.target, spec.target_count, seed);
}

PopulationSnapshot::PopulationSnapshot(int time_index, Matrix samples, int source)
    : time_index_(time_index), samples_(std::move(samples)) {
  if (samples_.cols() == 0) throw ConfigError("population snapshot must be nonempty");
  if (!samples_.allFinite()) throw NumericalError("population snapshot contains non-finite samples");
  ledger_.push_back(MixtureComponent{source, 0, samples_.cols(), 1.0});
  rebuild_weights();
}

void PopulationSnapshot::rebuild_weights() {
  weights_.resize(samples_.cols());
  for (const auto& c : ledger_) {
    weights_.segment(c.begin, c.count).setConstant(c.mass / static_cast<double>(c.count));
  }
}

PopulationSnapshot mixture_snapshot(const PopulationSnapshot& old_pop, const PopulationSnapshot& new_pop,
                                    double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ConfigError("mixture weight alpha must lie in [0, 1], got " + format_double(alpha));
  }
  if (old_pop.dim() != new_pop.dim()) throw ConfigError("mixture: snapshots have different dimensions");
  if (old_pop.time_index() != new_pop.time_index()) throw ConfigError("mixture: snapshots are at different times");

  PopulationSnapshot out;
  out.time_index_ = new_pop.time_index();
  Eigen::Index total = 0;
  auto collect = [&](const PopulationSnapshot& src, double scale) {
    for (const auto& c : src.ledger()) {
      const double mass = c.mass * scale;
      if (mass <= 0.0) continue;
      out.ledger_.push_back(MixtureComponent{c.source, total, c.count, mass});
      total += c.count;
    }
  };
  collect(old_pop, 1.0 - alpha);
  collect(new_pop, alpha);

  out.samples_.resize(old_pop.dim(), total);
  std::size_t k = 0;
  auto copy = [&](const PopulationSnapshot& src, double scale) {
    for (const auto& c : src.ledger()) {
      if (c.mass * scale <= 0.0) continue;
      out.samples_.middleCols(out.ledger_[k].begin, c.count) = src.samples().middleCols(c.begin, c.count);
      ++k;
    }
  };
  copy(old_pop, 1.0 - alpha);
  copy(new_pop, alpha);
  out.rebuild_weights();
  return out;
}

std::vector<PopulationSnapshot> snapshots_of(const ParticleEnsemble& ens, int source) {
  std::vector<PopulationSnapshot> out;
  out.reserve(ens.nodes());
  for (int j = 0; j < ens.nodes(); ++j) out.emplace_back(j, ens.slice(j), source);
  return out;
}

std::vector<PopulationSnapshot> mixture_snapshots(const std::vector<PopulationSnapshot>& old_pop,
                                                  const std::vector<PopulationSnapshot>& new_pop,
                                                  double alpha) {
  if (old_pop.size() != new_pop.size()) throw ConfigError("mixture: snapshot sequences differ in length");
  std::vector<PopulationSnapshot> out;
  out.reserve(new_pop.size());
  for (std::size_t j = 0; j < new_pop.size(); ++j) out.push_back(mixture_snapshot(old_pop[j], new_pop[j], alpha));
  return out;
}

double kernel_F(const KernelInteraction& spec, const PopulationSnapshot& pop, const Vector& x) {
  return FrozenCost::freeze(spec, &pop, nullptr).value(x);
}

Vector kernel_grad_F(const KernelInteraction& spec, const PopulationSnapshot& pop, const Vector& x) {
  return FrozenCost::freeze(spec, &pop, nullptr).gradient(x);
}

double quadratic_G(const QuadraticTerminal& spec, const Vector& x) {
  const double r = x[spec.coordinate] - spec.center;
  return spec.lambda * r * r;
}

Vector quadratic_grad_G(const QuadraticTerminal& spec, const Vector& x) {
  Vector g = Vector::Zero(x.size());
  g[spec.coordinate] = 2.0 * spec.lambda * (x[spec.coordinate] - spec.center);
  return g;
}

FrozenCost FrozenCost::freeze(const CouplingSpec& spec, const PopulationSnapshot* pop,
                              std::shared_ptr<const Mlp> classifier) {
  FrozenCost cost;
  if (const auto* k = std::get_if<KernelInteraction>(&spec)) {
    if (pop == nullptr) throw ConfigError("kernel interaction needs a population snapshot");
    if (pop->dim() != k->a.size()) throw ConfigError("kernel: snapshot dimension differs from a");
    const Vector proj = pop->samples().transpose() * k->a;  // a^T y per sample
    const double shift = proj.minCoeff();
    const double mean = pop->weights().dot((shift - proj.array()).exp().matrix());
    cost.field_ = Kernel{k->lambda, k->a, shift, mean};
  } else if (const auto* q = std::get_if<QuadraticTerminal>(&spec)) {
    cost.field_ = *q;
  } else if (const auto* p = std::get_if<QuadraticPotential>(&spec)) {
    cost.field_ = *p;
  } else if (std::holds_alternative<KLTerminal>(spec)) {
    if (!classifier) throw ConfigError("kl terminal cost needs a trained classifier");
    if (classifier->output_width() != 1) throw ConfigError("kl classifier must have a scalar output");
    cost.field_ = Classifier{std::move(classifier)};
  }
  return cost;
}

bool FrozenCost::is_zero() const { return std::holds_alternative<ZeroCoupling>(field_); }

namespace {

void check_kernel_exponent(double e) {
  if (e > kKernelExponentLimit || std::isnan(e)) {
    throw CouplingError("kernel exponent a^T(x - y) = " + format_double(e) + " exceeds the limit " +
                            format_double(kKernelExponentLimit),
                        e);
  }
}

}  // namespace

Vector FrozenCost::values(const Matrix& points) const {
  const Eigen::Index count = points.cols();
  return std::visit(
      [&](const auto& f) -> Vector {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, ZeroCoupling>) {
          return Vector::Zero(count);
        } else if constexpr (std::is_same_v<T, Kernel>) {
          Vector out(count);
          for (Eigen::Index c = 0; c < count; ++c) {
            const double e = f.a.dot(points.col(c)) - f.shift;
            check_kernel_exponent(e);
            out[c] = f.lambda * std::exp(e) * f.scaled_mean;
          }
          return out;
        } else if constexpr (std::is_same_v<T, QuadraticTerminal>) {
          const Eigen::ArrayXd r = points.row(f.coordinate).transpose().array() - f.center;
          return (f.lambda * r.square()).matrix();
        } else if constexpr (std::is_same_v<T, QuadraticPotential>) {
          return 0.5 * f.weight * points.colwise().squaredNorm().transpose();
        } else {
          return f.net->forward_batch(points).row(0).transpose();
        }
      },
      field_);
}

Matrix FrozenCost::gradients(const Matrix& points) const {
  return std::visit(
      [&](const auto& f) -> Matrix {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, ZeroCoupling>) {
          return Matrix::Zero(points.rows(), points.cols());
        } else if constexpr (std::is_same_v<T, Kernel>) {
          Matrix out(points.rows(), points.cols());
          for (Eigen::Index c = 0; c < points.cols(); ++c) {
            const double e = f.a.dot(points.col(c)) - f.shift;
            check_kernel_exponent(e);
            out.col(c) = f.lambda * std::exp(e) * f.scaled_mean * f.a;
          }
          return out;
        } else if constexpr (std::is_same_v<T, QuadraticTerminal>) {
          Matrix out = Matrix::Zero(points.rows(), points.cols());
          out.row(f.coordinate) = 2.0 * f.lambda * (points.row(f.coordinate).array() - f.center).matrix();
          return out;
        } else if constexpr (std::is_same_v<T, QuadraticPotential>) {
          return f.weight * points;
        } else {
          const Matrix up = Matrix::Ones(1, points.cols());
          return f.net->backward_batch(points, up).inputs;
        }
      },
      field_);
}

double FrozenCost::value(const Vector& x) const {
  Matrix p = x;
  return values(p)[0];
}

Vector FrozenCost::gradient(const Vector& x) const {
  Matrix p = x;
  return gradients(p).col(0);
}

FrozenCosts estimate_costs(const CouplingSpec& interaction, const CouplingSpec& terminal,
                           const std::vector<PopulationSnapshot>& pop, std::shared_ptr<const Mlp> classifier) {
  if (pop.empty()) throw ConfigError("cost estimation needs at least one population snapshot");
  FrozenCosts costs;
  costs.interaction.reserve(pop.size());
  for (std::size_t j = 0; j < pop.size(); ++j) {
    if (pop[j].time_index() != static_cast<int>(j)) {
      throw ConfigError("snapshot for time index " + std::to_string(j) + " is missing");
    }
    costs.interaction.push_back(FrozenCost::freeze(interaction, &pop[j], classifier));
  }
  costs.terminal = FrozenCost::freeze(terminal, &pop.back(), std::move(classifier));
  return costs;
}

ClassifierTrainer::ClassifierTrainer(const KLTerminal& spec, int d, std::uint64_t seed)
    : target_(spec.samples), config_(spec.classifier) {
  if (target_.cols() == 0) throw ConfigError("kl: target sample set is empty");
  if (target_.rows() != d) throw ConfigError("kl: target samples have wrong dimension");
  std::vector<int> widths{d};
  widths.insert(widths.end(), config_.hidden.begin(), config_.hidden.end());
  widths.push_back(1);
  net_ = Mlp::glorot(widths, config_.activation, false, seed);
  adam_ = AdamState(net_.parameter_count(), config_.lr);
}

double ClassifierTrainer::train(const PopulationSnapshot& pop, int steps, std::uint64_t seed) {
  if (steps < 0) throw ConfigError("classifier steps must be >= 0");
  if (pop.dim() != target_.rows()) throw ConfigError("kl: population dimension differs from target");
  std::mt19937_64 rng(seed);
  std::discrete_distribution<Eigen::Index> pick_pop(pop.weights().data(),
                                                    pop.weights().data() + pop.weights().size());
  std::uniform_int_distribution<Eigen::Index> pick_target(0, target_.cols() - 1);
  const int b = config_.batch;
  Matrix inputs(target_.rows(), 2 * b);
  Vector labels(2 * b);
  double loss = std::nan("");
  for (int s = 0; s < steps; ++s) {
    for (int k = 0; k < b; ++k) {
      inputs.col(k) = pop.samples().col(pick_pop(rng));
      labels[k] = 1.0;
      inputs.col(b + k) = target_.col(pick_target(rng));
      labels[b + k] = 0.0;
    }
    const Eigen::ArrayXd z = net_.forward_batch(inputs).row(0).transpose().array();
    // softplus(z) - y z, computed stably.
    const Eigen::ArrayXd softplus = z.max(0.0) + (-z.abs()).exp().log1p();
    loss = (softplus - labels.array() * z).mean();
    if (!std::isfinite(loss)) throw TrainingError("classifier loss is not finite at step " + std::to_string(s), s);
    const Eigen::ArrayXd sig = 1.0 / (1.0 + (-z).exp());
    const Matrix upstream = ((sig - labels.array()) / static_cast<double>(2 * b)).matrix().transpose();
    const auto grads = net_.backward_batch(inputs, upstream);
    adam_step(adam_, net_.parameters(), grads.parameters);
  }
  return loss;
}

Mlp kl_train_classifier(const KLTerminal& spec, const PopulationSnapshot& pop, int steps, int batch, double lr,
                        std::uint64_t seed) {
  KLTerminal local = spec;
  local.classifier.batch = batch;
  local.classifier.lr = lr;
  if (local.samples.cols() == 0) throw ConfigError("kl: target sample set is empty");
  ClassifierTrainer trainer(local, pop.dim(), mix_seed(seed, 1));
  trainer.train(pop, steps, mix_seed(seed, 2));
  return trainer.classifier();
}

Vector kl_grad_G(const Mlp& classifier, const Vector& x) {
  return classifier.backward(x, Vector::Ones(1)).inputs.col(0);
}

}  // namespace mfg

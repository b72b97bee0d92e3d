#pragma once

#include <cstdint>
#include <memory>
#include <variant>
#include <vector>

#include "mfg/ensemble.hpp"
#include "mfg/neuralnet.hpp"

namespace mfg {

struct ZeroCoupling {};

/// F[rho](x) = lambda * E_{y~rho} exp(a^T (x - y)).
struct KernelInteraction {
  double lambda = 0.0;
  Vector a;
};

/// G(x) = lambda * (x_k - center)^2 on a single coordinate k.
struct QuadraticTerminal {
  double lambda = 0.0;
  double center = 0.0;
  int coordinate = 0;
};

/// 1/2 * weight * |x|^2, independent of the population. Used for the
/// quadratic optimal-control benchmark, as either F or G.
struct QuadraticPotential {
  double weight = 0.0;
};

struct ClassifierConfig {
  std::vector<int> hidden{64, 64, 64};
  Activation activation = Activation::kRelu;
  int batch = 256;
  double lr = 1e-3;
  int init_steps = 1000;
  int refresh_every = 10;  // particle steps between refreshes
  int refresh_steps = 20;
};

/// G[rho](x) = log(d rho / d nu)(x), estimated by the logit of a classifier
/// trained to separate rho (label 1) from target samples of nu (label 0).
struct KLTerminal {
  InitialDistribution target = GaussianDistribution{};
  int target_count = 10000;
  Matrix samples;  // d x N; drawn from target by materialize_target
  ClassifierConfig classifier;
};

using CouplingSpec =
    std::variant<ZeroCoupling, KernelInteraction, QuadraticTerminal, QuadraticPotential, KLTerminal>;

void validate(const CouplingSpec& spec, int d);
bool is_population_dependent(const CouplingSpec& spec);
void materialize_target(KLTerminal& spec, std::uint64_t seed);

struct MixtureComponent {
  int source = 0;
  Eigen::Index begin = 0;
  Eigen::Index count = 0;
  double mass = 1.0;
};

/// Empirical measure at one grid time: samples with per-sample weights that
/// sum to one, plus the mixture ledger the weights came from.
class PopulationSnapshot {
 public:
  PopulationSnapshot(int time_index, Matrix samples, int source = 0);

  int time_index() const { return time_index_; }
  int dim() const { return static_cast<int>(samples_.rows()); }
  Eigen::Index size() const { return samples_.cols(); }
  const Matrix& samples() const { return samples_; }
  const Vector& weights() const { return weights_; }
  const std::vector<MixtureComponent>& ledger() const { return ledger_; }

  friend PopulationSnapshot mixture_snapshot(const PopulationSnapshot& old_pop,
                                             const PopulationSnapshot& new_pop, double alpha);

 private:
  PopulationSnapshot() = default;
  void rebuild_weights();

  int time_index_ = 0;
  Matrix samples_;
  Vector weights_;
  std::vector<MixtureComponent> ledger_;
};

/// (1 - alpha) * old + alpha * new. Components whose mass drops to zero are
/// removed from the sample set.
PopulationSnapshot mixture_snapshot(const PopulationSnapshot& old_pop, const PopulationSnapshot& new_pop,
                                    double alpha);

/// One snapshot per grid time j = 0..m.
std::vector<PopulationSnapshot> snapshots_of(const ParticleEnsemble& ens, int source = 0);
std::vector<PopulationSnapshot> mixture_snapshots(const std::vector<PopulationSnapshot>& old_pop,
                                                  const std::vector<PopulationSnapshot>& new_pop,
                                                  double alpha);

double kernel_F(const KernelInteraction& spec, const PopulationSnapshot& pop, const Vector& x);
Vector kernel_grad_F(const KernelInteraction& spec, const PopulationSnapshot& pop, const Vector& x);
double quadratic_G(const QuadraticTerminal& spec, const Vector& x);
Vector quadratic_grad_G(const QuadraticTerminal& spec, const Vector& x);

/// Exponents of exp(a^T(x - y)) above this throw CouplingError.
inline constexpr double kKernelExponentLimit = 50.0;

/// A coupling frozen against one population snapshot: a plain function of x.
class FrozenCost {
 public:
  FrozenCost() = default;
  static FrozenCost freeze(const CouplingSpec& spec, const PopulationSnapshot* pop,
                           std::shared_ptr<const Mlp> classifier);

  /// Columns of points are query locations.
  Vector values(const Matrix& points) const;
  Matrix gradients(const Matrix& points) const;
  double value(const Vector& x) const;
  Vector gradient(const Vector& x) const;
  bool is_zero() const;

 private:
  struct Kernel {
    double lambda;
    Vector a;
    double shift;       // min over samples of a^T y
    double scaled_mean;  // sum_k w_k exp(shift - a^T y_k)
  };
  struct Classifier {
    std::shared_ptr<const Mlp> net;
  };
  using Field = std::variant<ZeroCoupling, Kernel, QuadraticTerminal, QuadraticPotential, Classifier>;

  Field field_ = ZeroCoupling{};
};

/// Costs frozen for one cost-estimation round: interaction[j] is F[rho_{t_j}]
/// and terminal is G[rho_{t_m}].
struct FrozenCosts {
  std::vector<FrozenCost> interaction;
  FrozenCost terminal;
};

FrozenCosts estimate_costs(const CouplingSpec& interaction, const CouplingSpec& terminal,
                           const std::vector<PopulationSnapshot>& pop,
                           std::shared_ptr<const Mlp> classifier = nullptr);

/// Owns a classifier and its optimizer so training can be resumed.
class ClassifierTrainer {
 public:
  ClassifierTrainer(const KLTerminal& spec, int d, std::uint64_t seed);

  /// Runs steps of Adam on the balanced logistic loss; returns the loss of the
  /// final step (NaN when steps == 0).
  double train(const PopulationSnapshot& pop, int steps, std::uint64_t seed);

  const Mlp& classifier() const { return net_; }
  std::shared_ptr<const Mlp> share() const { return std::make_shared<const Mlp>(net_); }

 private:
  Matrix target_;
  ClassifierConfig config_;
  Mlp net_;
  AdamState adam_;
};

Mlp kl_train_classifier(const KLTerminal& spec, const PopulationSnapshot& pop, int steps, int batch,
                        double lr, std::uint64_t seed);

/// Gradient of the classifier logit with respect to its input.
Vector kl_grad_G(const Mlp& classifier, const Vector& x);

}  // namespace mfg

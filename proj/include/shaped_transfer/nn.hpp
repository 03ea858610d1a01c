#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "shaped_transfer/random.hpp"

namespace shaped_transfer {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class Activation { rectifier, hyperbolic_tangent, identity };

const char* to_string(Activation activation);
Activation activation_from_string(const std::string& name);

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;
  Activation activation = Activation::identity;
};

// Intermediate values of a batched forward pass, one column per sample.
// inputs[k] is what layer k consumed; inputs.back() are the features.
struct ForwardCache {
  std::vector<Matrix> inputs;
  std::vector<Matrix> outputs;
};

struct Gradients {
  std::vector<Matrix> weight;
  std::vector<Vector> bias;
  Matrix input;  // d(loss)/d(input), one column per sample
};

/// Fully connected chain of dense layers. The last layer is always linear, so
/// the activations entering it are the network's feature vector and
/// `output == last.weight * features + last.bias`.
class DenseNet {
 public:
  DenseNet() = default;
  explicit DenseNet(std::vector<DenseLayer> layers);

  /// widths = {input, hidden..., output}. Hidden layers use `hidden`; weights
  /// and biases are drawn uniformly from +-1/sqrt(fan_in).
  static DenseNet initialized(std::span<const int> widths, Activation hidden, Rng& rng);

  int input_dim() const;
  int output_dim() const;
  int feature_dim() const;
  std::size_t parameter_count() const;

  const std::vector<DenseLayer>& layers() const { return layers_; }
  DenseLayer& layer(std::size_t k) { return layers_[k]; }

  Matrix forward(const Matrix& batch) const;
  Matrix forward(const Matrix& batch, ForwardCache& cache) const;
  Gradients backward(const ForwardCache& cache, const Matrix& output_grad) const;

  bool same_architecture(const DenseNet& other) const;

 private:
  std::vector<DenseLayer> layers_;
};

struct ForwardResult {
  Vector output;
  Vector features;
};

ForwardResult forward_with_features(const DenseNet& net, const Vector& x);
Gradients gradients(const DenseNet& net, const Vector& x, const Vector& loss_grad);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class AdamState {
 public:
  AdamState() = default;
  AdamState(const DenseNet& net, AdamConfig config);

  const AdamConfig& config() const { return config_; }
  long step() const { return step_; }

 private:
  friend void adam_step(DenseNet&, const Gradients&, AdamState&);

  AdamConfig config_;
  long step_ = 0;
  std::vector<Matrix> weight_m_, weight_v_;
  std::vector<Vector> bias_m_, bias_v_;
};

/// Bias-corrected Adam update. Throws training_divergence on non-finite
/// gradients, leaving parameters and state untouched.
void adam_step(DenseNet& net, const Gradients& grads, AdamState& state);

/// target <- tau * online + (1 - tau) * target
void sync_target(const DenseNet& online, DenseNet& target, double tau);

nlohmann::json to_json(const DenseNet& net);
DenseNet net_from_json(const nlohmann::json& doc);

}  // namespace shaped_transfer

#include "shaped_transfer/nn.hpp"

#include <cmath>
#include <string>

#include "shaped_transfer/errors.hpp"

namespace shaped_transfer {

const char* to_string(Activation activation) {
  switch (activation) {
    case Activation::rectifier: return "relu";
    case Activation::hyperbolic_tangent: return "tanh";
    case Activation::identity: return "identity";
  }
  return "?";
}

Activation activation_from_string(const std::string& name) {
  if (name == "relu") return Activation::rectifier;
  if (name == "tanh") return Activation::hyperbolic_tangent;
  if (name == "identity") return Activation::identity;
  fail(errc::contract, "unknown activation '" + name + "'");
}

namespace {

void activate(Matrix& m, Activation activation) {
  switch (activation) {
    case Activation::rectifier: m = m.cwiseMax(0.0); break;
    case Activation::hyperbolic_tangent: m = m.array().tanh().matrix(); break;
    case Activation::identity: break;
  }
}

// Multiplies upstream gradient by the activation derivative, expressed in
// terms of the activation output.
void activation_backward(Matrix& grad, const Matrix& output, Activation activation) {
  switch (activation) {
    case Activation::rectifier:
      grad = (output.array() > 0.0).select(grad, 0.0);
      break;
    case Activation::hyperbolic_tangent:
      grad.array() *= 1.0 - output.array().square();
      break;
    case Activation::identity: break;
  }
}

}  // namespace

DenseNet::DenseNet(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  require(!layers_.empty(), errc::input_shape, "network needs at least one layer");
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const auto& l = layers_[k];
    require(l.weight.rows() > 0 && l.weight.cols() > 0, errc::input_shape, "empty layer");
    require(l.bias.size() == l.weight.rows(), errc::input_shape,
            "bias size does not match layer " + std::to_string(k));
    if (k > 0) {
      require(l.weight.cols() == layers_[k - 1].weight.rows(), errc::input_shape,
              "layer " + std::to_string(k) + " does not chain with its predecessor");
    }
    require(l.weight.allFinite() && l.bias.allFinite(), errc::contract,
            "non-finite parameters in layer " + std::to_string(k));
  }
  require(layers_.back().activation == Activation::identity, errc::contract,
          "final layer must be linear");
}

DenseNet DenseNet::initialized(std::span<const int> widths, Activation hidden, Rng& rng) {
  require(widths.size() >= 2, errc::input_shape, "need input and output widths");
  std::vector<DenseLayer> layers;
  for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
    require(widths[k] > 0 && widths[k + 1] > 0, errc::input_shape, "widths must be positive");
    const double bound = 1.0 / std::sqrt(static_cast<double>(widths[k]));
    DenseLayer layer;
    layer.weight.resize(widths[k + 1], widths[k]);
    layer.bias.resize(widths[k + 1]);
    // Column-major fill order is fixed so initialization is reproducible.
    for (Eigen::Index c = 0; c < layer.weight.cols(); ++c)
      for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) layer.weight(r, c) = rng.uniform(-bound, bound);
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias(r) = rng.uniform(-bound, bound);
    layer.activation = (k + 2 == widths.size()) ? Activation::identity : hidden;
    layers.push_back(std::move(layer));
  }
  return DenseNet(std::move(layers));
}

int DenseNet::input_dim() const { return static_cast<int>(layers_.front().weight.cols()); }
int DenseNet::output_dim() const { return static_cast<int>(layers_.back().weight.rows()); }
int DenseNet::feature_dim() const { return static_cast<int>(layers_.back().weight.cols()); }

std::size_t DenseNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

Matrix DenseNet::forward(const Matrix& batch) const {
  require(!layers_.empty(), errc::contract, "forward on an empty network");
  require(batch.rows() == input_dim(), errc::input_shape,
          "expected input of dimension " + std::to_string(input_dim()) + ", got " +
              std::to_string(batch.rows()));
  Matrix x = batch;
  for (const auto& l : layers_) {
    Matrix y = l.weight * x;
    y.colwise() += l.bias;
    activate(y, l.activation);
    x = std::move(y);
  }
  return x;
}

Matrix DenseNet::forward(const Matrix& batch, ForwardCache& cache) const {
  require(!layers_.empty(), errc::contract, "forward on an empty network");
  require(batch.rows() == input_dim(), errc::input_shape,
          "expected input of dimension " + std::to_string(input_dim()) + ", got " +
              std::to_string(batch.rows()));
  cache.inputs.resize(layers_.size());
  cache.outputs.resize(layers_.size());
  cache.inputs[0] = batch;
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const auto& l = layers_[k];
    Matrix y = l.weight * cache.inputs[k];
    y.colwise() += l.bias;
    activate(y, l.activation);
    cache.outputs[k] = std::move(y);
    if (k + 1 < layers_.size()) cache.inputs[k + 1] = cache.outputs[k];
  }
  return cache.outputs.back();
}

Gradients DenseNet::backward(const ForwardCache& cache, const Matrix& output_grad) const {
  require(cache.inputs.size() == layers_.size(), errc::contract, "stale forward cache");
  require(output_grad.rows() == output_dim() && output_grad.cols() == cache.inputs[0].cols(),
          errc::input_shape, "output gradient shape mismatch");
  Gradients g;
  g.weight.resize(layers_.size());
  g.bias.resize(layers_.size());
  Matrix upstream = output_grad;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    const auto& l = layers_[k];
    activation_backward(upstream, cache.outputs[k], l.activation);
    g.weight[k].noalias() = upstream * cache.inputs[k].transpose();
    g.bias[k] = upstream.rowwise().sum();
    Matrix below = l.weight.transpose() * upstream;
    upstream = std::move(below);
  }
  g.input = std::move(upstream);
  return g;
}

bool DenseNet::same_architecture(const DenseNet& other) const {
  if (layers_.size() != other.layers_.size()) return false;
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const auto& a = layers_[k];
    const auto& b = other.layers_[k];
    if (a.weight.rows() != b.weight.rows() || a.weight.cols() != b.weight.cols() ||
        a.activation != b.activation)
      return false;
  }
  return true;
}

ForwardResult forward_with_features(const DenseNet& net, const Vector& x) {
  ForwardCache cache;
  Matrix out = net.forward(x, cache);
  return {out.col(0), cache.inputs.back().col(0)};
}

Gradients gradients(const DenseNet& net, const Vector& x, const Vector& loss_grad) {
  require(loss_grad.size() == net.output_dim(), errc::input_shape, "loss gradient dimension mismatch");
  ForwardCache cache;
  net.forward(x, cache);
  return net.backward(cache, loss_grad);
}

AdamState::AdamState(const DenseNet& net, AdamConfig config) : config_(config) {
  for (const auto& l : net.layers()) {
    weight_m_.push_back(Matrix::Zero(l.weight.rows(), l.weight.cols()));
    weight_v_.push_back(Matrix::Zero(l.weight.rows(), l.weight.cols()));
    bias_m_.push_back(Vector::Zero(l.bias.size()));
    bias_v_.push_back(Vector::Zero(l.bias.size()));
  }
}

void adam_step(DenseNet& net, const Gradients& grads, AdamState& state) {
  const std::size_t n = net.layers().size();
  require(grads.weight.size() == n && grads.bias.size() == n && state.weight_m_.size() == n,
          errc::input_shape, "gradient/optimizer shape mismatch");
  for (std::size_t k = 0; k < n; ++k) {
    require(grads.weight[k].rows() == state.weight_m_[k].rows() &&
                grads.weight[k].cols() == state.weight_m_[k].cols() &&
                grads.bias[k].size() == state.bias_m_[k].size(),
            errc::input_shape, "gradient shape mismatch in layer " + std::to_string(k));
    require(grads.weight[k].allFinite() && grads.bias[k].allFinite(), errc::training_divergence,
            "non-finite gradient in layer " + std::to_string(k));
  }

  const auto& c = state.config_;
  state.step_ += 1;
  const double correction1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step_));
  const double correction2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step_));
  const double step_size = c.learning_rate / correction1;
  const double root2 = std::sqrt(correction2);

  auto update = [&](auto& param, const auto& g, auto& m, auto& v) {
    m = c.beta1 * m + (1.0 - c.beta1) * g;
    v = c.beta2 * v + (1.0 - c.beta2) * g.cwiseProduct(g);
    param.array() -= step_size * m.array() / (v.array().sqrt() / root2 + c.epsilon);
  };
  for (std::size_t k = 0; k < n; ++k) {
    auto& layer = net.layer(k);
    update(layer.weight, grads.weight[k], state.weight_m_[k], state.weight_v_[k]);
    update(layer.bias, grads.bias[k], state.bias_m_[k], state.bias_v_[k]);
  }
}

void sync_target(const DenseNet& online, DenseNet& target, double tau) {
  require(online.same_architecture(target), errc::input_shape, "target architecture mismatch");
  require(tau >= 0.0 && tau <= 1.0, errc::contract, "tau must lie in [0, 1]");
  for (std::size_t k = 0; k < online.layers().size(); ++k) {
    const auto& src = online.layers()[k];
    auto& dst = target.layer(k);
    if (tau == 1.0) {
      dst.weight = src.weight;
      dst.bias = src.bias;
    } else if (tau != 0.0) {
      dst.weight = tau * src.weight + (1.0 - tau) * dst.weight;
      dst.bias = tau * src.bias + (1.0 - tau) * dst.bias;
    }
  }
}

nlohmann::json to_json(const DenseNet& net) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : net.layers()) {
    std::vector<double> weight;
    weight.reserve(static_cast<std::size_t>(l.weight.size()));
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) weight.push_back(l.weight(r, c));
    layers.push_back({{"in", l.weight.cols()},
                      {"out", l.weight.rows()},
                      {"activation", to_string(l.activation)},
                      {"weight", weight},
                      {"bias", std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size())}});
  }
  return {{"input_dim", net.input_dim()}, {"output_dim", net.output_dim()}, {"layers", layers}};
}

DenseNet net_from_json(const nlohmann::json& doc) {
  try {
    std::vector<DenseLayer> layers;
    for (const auto& l : doc.at("layers")) {
      const auto in = l.at("in").get<Eigen::Index>();
      const auto out = l.at("out").get<Eigen::Index>();
      const auto weight = l.at("weight").get<std::vector<double>>();
      const auto bias = l.at("bias").get<std::vector<double>>();
      require(in > 0 && out > 0 && weight.size() == static_cast<std::size_t>(in * out) &&
                  bias.size() == static_cast<std::size_t>(out),
              errc::input_shape, "layer array sizes do not match declared dims");
      DenseLayer layer;
      layer.weight.resize(out, in);
      for (Eigen::Index r = 0; r < out; ++r)
        for (Eigen::Index c = 0; c < in; ++c) layer.weight(r, c) = weight[static_cast<std::size_t>(r * in + c)];
      layer.bias = Eigen::Map<const Vector>(bias.data(), out);
      layer.activation = activation_from_string(l.at("activation").get<std::string>());
      layers.push_back(std::move(layer));
    }
    DenseNet net(std::move(layers));
    require(net.input_dim() == doc.at("input_dim").get<int>() &&
                net.output_dim() == doc.at("output_dim").get<int>(),
            errc::input_shape, "declared network dims do not match layers");
    return net;
  } catch (const nlohmann::json::exception& e) {
    fail(errc::io, std::string("malformed network document: ") + e.what());
  }
}

}  // namespace shaped_transfer

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>

#include "oracles.hpp"
#include "shaped_transfer/nn.hpp"
#include "shaped_transfer/random.hpp"

namespace support {

using namespace shaped_transfer;

inline oracle::Act to_oracle(Activation a) {
  switch (a) {
    case Activation::rectifier: return oracle::Act::relu;
    case Activation::hyperbolic_tangent: return oracle::Act::tanh;
    case Activation::identity: return oracle::Act::identity;
  }
  return oracle::Act::identity;
}

inline std::vector<oracle::Layer> to_oracle(const DenseNet& net) {
  std::vector<oracle::Layer> out;
  for (const auto& L : net.layers()) {
    oracle::Layer o;
    o.w.assign(static_cast<std::size_t>(L.weight.rows()), oracle::Vec(static_cast<std::size_t>(L.weight.cols())));
    for (Eigen::Index i = 0; i < L.weight.rows(); ++i)
      for (Eigen::Index j = 0; j < L.weight.cols(); ++j)
        o.w[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = L.weight(i, j);
    o.b.assign(L.bias.data(), L.bias.data() + L.bias.size());
    o.act = to_oracle(L.activation);
    out.push_back(std::move(o));
  }
  return out;
}

inline oracle::Vec to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

inline Vector random_vector(int n, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Vector v(n);
  for (int i = 0; i < n; ++i) v(i) = rng.uniform(lo, hi);
  return v;
}

// Random net whose hidden layers use `hidden`, final layer linear.
inline DenseNet random_net(std::vector<int> widths, Activation hidden, Rng& rng) {
  std::vector<DenseLayer> layers;
  for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
    DenseLayer L;
    L.weight = Matrix(widths[k + 1], widths[k]);
    for (Eigen::Index i = 0; i < L.weight.size(); ++i) L.weight.data()[i] = rng.uniform(-1.0, 1.0);
    L.bias = random_vector(widths[k + 1], rng);
    L.activation = k + 2 == widths.size() ? Activation::identity : hidden;
    layers.push_back(std::move(L));
  }
  return DenseNet(std::move(layers));
}

// Smallest |pre-activation| of any rectifier unit; finite differences are only
// meaningful away from the kink.
inline double min_kink_distance(const DenseNet& net, const Vector& x) {
  double best = INFINITY;
  Vector a = x;
  for (const auto& L : net.layers()) {
    const Vector z = L.weight * a + L.bias;
    if (L.activation == Activation::rectifier) best = std::min(best, z.cwiseAbs().minCoeff());
    a = L.activation == Activation::rectifier   ? Vector(z.cwiseMax(0.0))
        : L.activation == Activation::hyperbolic_tangent ? Vector(z.array().tanh())
                                                          : z;
  }
  return best;
}

// Max relative error of analytic vs central-difference gradients of
// L(params) = <loss_grad, net(x)>, over every weight and bias.
inline double gradient_check(const DenseNet& net, const Vector& x, const Vector& loss_grad, double h = 1e-5) {
  const Gradients g = gradients(net, x, loss_grad);
  DenseNet probe = net;
  auto loss = [&] {
    const auto out = oracle::mlp_forward(to_oracle(probe), to_std(x));
    long double s = 0;
    for (std::size_t i = 0; i < out.size(); ++i) s += static_cast<long double>(out[i]) * loss_grad(static_cast<Eigen::Index>(i));
    return static_cast<double>(s);
  };
  auto rel = [](double a, double n) { return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6}); };
  double worst = 0.0;
  for (std::size_t k = 0; k < net.layers().size(); ++k) {
    auto& L = probe.layer(k);
    for (Eigen::Index i = 0; i < L.weight.size(); ++i) {
      const double saved = L.weight.data()[i];
      L.weight.data()[i] = saved + h;
      const double up = loss();
      L.weight.data()[i] = saved - h;
      const double down = loss();
      L.weight.data()[i] = saved;
      worst = std::max(worst, rel(g.weight[k].data()[i], (up - down) / (2 * h)));
    }
    for (Eigen::Index i = 0; i < L.bias.size(); ++i) {
      const double saved = L.bias(i);
      L.bias(i) = saved + h;
      const double up = loss();
      L.bias(i) = saved - h;
      const double down = loss();
      L.bias(i) = saved;
      worst = std::max(worst, rel(g.bias[k](i), (up - down) / (2 * h)));
    }
  }
  return worst;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("shaped_transfer_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace support

#pragma once

// Reference evaluators written against the textbook formulas with plain
// loops and long double accumulation. They share no code with the library.

#include <algorithm>
#include <cmath>
#include <vector>

namespace oracle {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;  // row-major, rows = outputs

enum class Act { relu, tanh, identity };

struct Layer {
  Mat w;
  Vec b;
  Act act;
};

inline double activate(double x, Act a) {
  switch (a) {
    case Act::relu: return x > 0.0 ? x : 0.0;
    case Act::tanh: return std::tanh(x);
    case Act::identity: return x;
  }
  return x;
}

// Returns the output; `features` receives the input of the last layer.
inline Vec mlp_forward(const std::vector<Layer>& layers, Vec x, Vec* features = nullptr) {
  for (std::size_t k = 0; k < layers.size(); ++k) {
    if (k + 1 == layers.size() && features) *features = x;
    const auto& L = layers[k];
    Vec y(L.b.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
      long double s = L.b[i];
      for (std::size_t j = 0; j < x.size(); ++j) s += static_cast<long double>(L.w[i][j]) * x[j];
      y[i] = activate(static_cast<double>(s), L.act);
    }
    x = std::move(y);
  }
  return x;
}

// Mean over the set of cos(z, e_i) * q_i; a zero-norm side contributes 0.
inline double potential(const Mat& embeddings, const Vec& values, const Vec& z) {
  long double zz = 0;
  for (double v : z) zz += static_cast<long double>(v) * v;
  const long double zn = std::sqrt(zz);
  long double total = 0;
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    long double ee = 0, ez = 0;
    for (std::size_t k = 0; k < z.size(); ++k) {
      ee += static_cast<long double>(embeddings[i][k]) * embeddings[i][k];
      ez += static_cast<long double>(embeddings[i][k]) * z[k];
    }
    const long double en = std::sqrt(ee);
    if (zn < 1e-12L || en < 1e-12L) continue;
    total += ez / (zn * en) * values[i];
  }
  return static_cast<double>(total / static_cast<long double>(embeddings.size()));
}

// Classic-control pendulum, one step: velocity first, then angle with the
// new velocity.
struct PendulumState {
  double th, thdot;
};
inline PendulumState pendulum_step(PendulumState s, double u) {
  const double g = 10.0, m = 1.0, l = 1.0, dt = 0.05;
  double newthdot = s.thdot + (3.0 * g / (2.0 * l) * std::sin(s.th) + 3.0 / (m * l * l) * u) * dt;
  newthdot = std::min(8.0, std::max(-8.0, newthdot));
  return {s.th + newthdot * dt, newthdot};
}
inline double angle_normalize(double x) {
  const double pi = 3.14159265358979323846;
  double r = std::fmod(x + pi, 2.0 * pi);
  if (r < 0) r += 2.0 * pi;
  return r - pi;
}
inline double pendulum_reward(PendulumState s, double u) {
  const double th = angle_normalize(s.th);
  return -(th * th + 0.1 * s.thdot * s.thdot + 0.001 * u * u);
}

// Two-link acrobot ("book" dynamics), integrated by one classical RK4 step
// over dt = 0.2 with the torque held constant.
using State4 = std::vector<double>;
inline State4 acrobot_dsdt(const State4& s, double a) {
  const double pi = 3.14159265358979323846;
  const double m1 = 1, m2 = 1, l1 = 1, lc1 = 0.5, lc2 = 0.5, I1 = 1, I2 = 1, g = 9.8;
  const double theta1 = s[0], theta2 = s[1], dtheta1 = s[2], dtheta2 = s[3];
  const double d1 = m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2 * l1 * lc2 * std::cos(theta2)) + I1 + I2;
  const double d2 = m2 * (lc2 * lc2 + l1 * lc2 * std::cos(theta2)) + I2;
  const double phi2 = m2 * lc2 * g * std::cos(theta1 + theta2 - pi / 2.0);
  const double phi1 = -m2 * l1 * lc2 * dtheta2 * dtheta2 * std::sin(theta2) -
                      2 * m2 * l1 * lc2 * dtheta2 * dtheta1 * std::sin(theta2) +
                      (m1 * lc1 + m2 * l1) * g * std::cos(theta1 - pi / 2) + phi2;
  const double ddtheta2 =
      (a + d2 / d1 * phi1 - m2 * l1 * lc2 * dtheta1 * dtheta1 * std::sin(theta2) - phi2) /
      (m2 * lc2 * lc2 + I2 - d2 * d2 / d1);
  const double ddtheta1 = -(d2 * ddtheta2 + phi1) / d1;
  return {dtheta1, dtheta2, ddtheta1, ddtheta2};
}
inline State4 acrobot_step(const State4& s, double torque) {
  const double pi = 3.14159265358979323846, dt = 0.2;
  auto axpy = [](const State4& x, double h, const State4& k) {
    State4 r(4);
    for (int i = 0; i < 4; ++i) r[i] = x[i] + h * k[i];
    return r;
  };
  const State4 k1 = acrobot_dsdt(s, torque);
  const State4 k2 = acrobot_dsdt(axpy(s, dt / 2, k1), torque);
  const State4 k3 = acrobot_dsdt(axpy(s, dt / 2, k2), torque);
  const State4 k4 = acrobot_dsdt(axpy(s, dt, k3), torque);
  State4 ns(4);
  for (int i = 0; i < 4; ++i) ns[i] = s[i] + dt / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
  auto wrap = [](double x, double m, double M) {
    const double diff = M - m;
    while (x > M) x -= diff;
    while (x < m) x += diff;
    return x;
  };
  ns[0] = wrap(ns[0], -pi, pi);
  ns[1] = wrap(ns[1], -pi, pi);
  ns[2] = std::min(4 * pi, std::max(-4 * pi, ns[2]));
  ns[3] = std::min(9 * pi, std::max(-9 * pi, ns[3]));
  return ns;
}

inline double mean(const Vec& v) {
  long double s = 0;
  for (double x : v) s += x;
  return static_cast<double>(s / static_cast<long double>(v.size()));
}

inline double population_std(const Vec& v) {
  const double m = mean(v);
  long double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(static_cast<double>(s / static_cast<long double>(v.size())));
}

}  // namespace oracle

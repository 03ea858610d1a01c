#include "shaped_transfer/envs.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "shaped_transfer/errors.hpp"

namespace shaped_transfer {

bool BoxSpace::contains(const Vector& a) const {
  return a.size() == low.size() && (a.array() >= low.array()).all() && (a.array() <= high.array()).all();
}

ActionSpace ActionSpace::discrete(int count) {
  require(count >= 1, errc::invalid_restriction, "discrete space needs at least one action");
  DiscreteSpace d;
  for (int i = 0; i < count; ++i) d.retained.push_back(i);
  return ActionSpace(std::move(d));
}

ActionSpace ActionSpace::discrete_subset(std::vector<int> retained) {
  require(!retained.empty(), errc::invalid_restriction, "discrete space needs at least one action");
  return ActionSpace(DiscreteSpace{std::move(retained)});
}

ActionSpace ActionSpace::box(Vector low, Vector high) {
  require(low.size() == high.size() && low.size() > 0, errc::invalid_restriction, "box bounds dimension mismatch");
  require(low.allFinite() && high.allFinite(), errc::invalid_restriction, "box bounds must be finite");
  require((low.array() <= high.array()).all(), errc::invalid_restriction, "box low exceeds high");
  return ActionSpace(BoxSpace{std::move(low), std::move(high)});
}

const DiscreteSpace& ActionSpace::as_discrete() const {
  require(is_discrete(), errc::invalid_action, "expected a discrete action space");
  return std::get<DiscreteSpace>(space_);
}

const BoxSpace& ActionSpace::as_box() const {
  require(!is_discrete(), errc::invalid_action, "expected a box action space");
  return std::get<BoxSpace>(space_);
}

nlohmann::json ActionSpace::to_json() const {
  if (is_discrete()) return {{"type", "discrete"}, {"retained", as_discrete().retained}};
  const auto& b = as_box();
  return {{"type", "box"},
          {"low", std::vector<double>(b.low.data(), b.low.data() + b.low.size())},
          {"high", std::vector<double>(b.high.data(), b.high.data() + b.high.size())}};
}

ActionSpace ActionSpace::from_json(const nlohmann::json& doc) {
  const auto type = doc.at("type").get<std::string>();
  if (type == "discrete") return discrete_subset(doc.at("retained").get<std::vector<int>>());
  require(type == "box", errc::io, "unknown action space type '" + type + "'");
  const auto lo = doc.at("low").get<std::vector<double>>();
  const auto hi = doc.at("high").get<std::vector<double>>();
  return box(Eigen::Map<const Vector>(lo.data(), static_cast<Eigen::Index>(lo.size())),
             Eigen::Map<const Vector>(hi.data(), static_cast<Eigen::Index>(hi.size())));
}

ActionSpace restrict(const ActionSpace& space, const Restriction& restriction) {
  if (space.is_discrete()) {
    const auto* r = std::get_if<DiscreteRestriction>(&restriction);
    require(r != nullptr, errc::invalid_restriction, "box restriction applied to a discrete space");
    require(!r->keep.empty(), errc::invalid_restriction, "restriction keeps no actions");
    const auto& d = space.as_discrete();
    std::vector<int> retained;
    std::vector<bool> seen(static_cast<std::size_t>(d.count()), false);
    for (int k : r->keep) {
      require(k >= 0 && k < d.count(), errc::invalid_restriction,
              "restriction index " + std::to_string(k) + " outside Discrete(" + std::to_string(d.count()) + ")");
      require(!seen[static_cast<std::size_t>(k)], errc::invalid_restriction, "duplicate restriction index");
      seen[static_cast<std::size_t>(k)] = true;
      retained.push_back(d.retained[static_cast<std::size_t>(k)]);
    }
    return ActionSpace::discrete_subset(std::move(retained));
  }
  const auto* r = std::get_if<BoxRestriction>(&restriction);
  require(r != nullptr, errc::invalid_restriction, "discrete restriction applied to a box space");
  const auto& b = space.as_box();
  require(r->low.size() == b.dim() && r->high.size() == b.dim(), errc::invalid_restriction,
          "sub-box dimension mismatch");
  require(r->low.allFinite() && r->high.allFinite() && (r->low.array() <= r->high.array()).all(),
          errc::invalid_restriction, "sub-box must satisfy low <= high");
  require((r->low.array() >= b.low.array()).all() && (r->high.array() <= b.high.array()).all(),
          errc::invalid_restriction, "sub-box must lie inside the original box");
  return ActionSpace::box(r->low, r->high);
}

double wrap_angle(double x) {
  constexpr double pi = std::numbers::pi;
  double m = std::fmod(x + pi, 2.0 * pi);
  if (m < 0.0) m += 2.0 * pi;
  return m - pi;
}

namespace {

constexpr double pi = std::numbers::pi;

double wrap_into(double x, double lo, double hi) {
  const double span = hi - lo;
  while (x > hi) x -= span;
  while (x < lo) x += span;
  return x;
}

// Time derivative of (theta1, theta2, dtheta1, dtheta2) under joint-2 torque.
Eigen::Vector4d acrobot_derivative(const Eigen::Vector4d& s, double torque, const AcrobotParams& p) {
  const double m1 = p.link_mass_1, m2 = p.link_mass_2;
  const double l1 = p.link_length_1, lc1 = p.link_com_1, lc2 = p.link_com_2;
  const double inertia = p.link_moi, g = p.gravity;
  const double t1 = s(0), t2 = s(1), dt1 = s(2), dt2 = s(3);

  const double d1 = m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * std::cos(t2)) + 2.0 * inertia;
  const double d2 = m2 * (lc2 * lc2 + l1 * lc2 * std::cos(t2)) + inertia;
  // cos(x - pi/2) written as sin(x) so the hanging rest is an exact fixed point.
  const double phi2 = m2 * lc2 * g * std::sin(t1 + t2);
  const double phi1 = -m2 * l1 * lc2 * dt2 * dt2 * std::sin(t2) - 2.0 * m2 * l1 * lc2 * dt2 * dt1 * std::sin(t2) +
                      (m1 * lc1 + m2 * l1) * g * std::sin(t1) + phi2;
  const double ddt2 = (torque + d2 / d1 * phi1 - m2 * l1 * lc2 * dt1 * dt1 * std::sin(t2) - phi2) /
                      (m2 * lc2 * lc2 + inertia - d2 * d2 / d1);
  const double ddt1 = -(d2 * ddt2 + phi1) / d1;
  return {dt1, dt2, ddt1, ddt2};
}

}  // namespace

Vector pendulum_dynamics(const Vector& state, double torque, const PendulumParams& p) {
  const double th = state(0), thdot = state(1);
  const double accel = 3.0 * p.gravity / (2.0 * p.length) * std::sin(th) + 3.0 / (p.mass * p.length * p.length) * torque;
  const double next_thdot = std::clamp(thdot + accel * p.dt, -p.max_speed, p.max_speed);
  Vector next(2);
  next << th + next_thdot * p.dt, next_thdot;
  return next;
}

double pendulum_cost(const Vector& state, double torque) {
  const double th = wrap_angle(state(0));
  return th * th + 0.1 * state(1) * state(1) + 0.001 * torque * torque;
}

Vector acrobot_dynamics(const Vector& state, double torque, const AcrobotParams& p) {
  const Eigen::Vector4d s0 = state;
  const double h = p.dt;
  const Eigen::Vector4d k1 = acrobot_derivative(s0, torque, p);
  const Eigen::Vector4d k2 = acrobot_derivative(s0 + 0.5 * h * k1, torque, p);
  const Eigen::Vector4d k3 = acrobot_derivative(s0 + 0.5 * h * k2, torque, p);
  const Eigen::Vector4d k4 = acrobot_derivative(s0 + h * k3, torque, p);
  Eigen::Vector4d s1 = s0 + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  s1(0) = wrap_into(s1(0), -pi, pi);
  s1(1) = wrap_into(s1(1), -pi, pi);
  s1(2) = std::clamp(s1(2), -p.max_vel_1, p.max_vel_1);
  s1(3) = std::clamp(s1(3), -p.max_vel_2, p.max_vel_2);
  return s1;
}

bool acrobot_goal(const Vector& state) { return -std::cos(state(0)) - std::cos(state(1) + state(0)) > 1.0; }

Env::Env(EnvKind kind, std::string id, PendulumParams params)
    : kind_(kind),
      id_(std::move(id)),
      pendulum_(params),
      full_space_(ActionSpace::box(Vector::Constant(1, -params.max_torque), Vector::Constant(1, params.max_torque))),
      space_(full_space_),
      state_(Vector::Zero(2)) {
  require(kind == EnvKind::pendulum, errc::contract, "pendulum parameters for a non-pendulum env");
}

Env::Env(EnvKind kind, std::string id, AcrobotParams params)
    : kind_(kind),
      id_(std::move(id)),
      acrobot_(std::move(params)),
      full_space_(ActionSpace::discrete(static_cast<int>(acrobot_.torques.size()))),
      space_(full_space_),
      state_(Vector::Zero(4)) {
  require(kind == EnvKind::acrobot, errc::contract, "acrobot parameters for a non-acrobot env");
}

Env Env::make(std::string_view id, const std::optional<Restriction>& restriction) {
  if (id == "pendulum" || id == "pendulum-restricted") {
    Env env(EnvKind::pendulum, std::string(id), PendulumParams{});
    if (id == "pendulum-restricted") {
      const double high = env.pendulum_.max_torque;
      env.restrict_actions(restriction.value_or(BoxRestriction{Vector::Zero(1), Vector::Constant(1, high)}));
    } else {
      require(!restriction, errc::configuration, "restrictions apply only to -restricted env ids");
    }
    return env;
  }
  if (id == "acrobot" || id == "acrobot-restricted") {
    Env env(EnvKind::acrobot, std::string(id), AcrobotParams{});
    if (id == "acrobot-restricted") {
      // Drops the no-torque action.
      env.restrict_actions(restriction.value_or(DiscreteRestriction{{0, 2}}));
    } else {
      require(!restriction, errc::configuration, "restrictions apply only to -restricted env ids");
    }
    return env;
  }
  fail(errc::configuration, "unknown environment id '" + std::string(id) + "'");
}

void Env::restrict_actions(const Restriction& restriction) { space_ = restrict(full_space_, restriction); }

int Env::max_steps() const { return kind_ == EnvKind::pendulum ? pendulum_.max_steps : acrobot_.max_steps; }

Vector Env::reset(std::uint64_t seed) {
  rng_.reseed(seed);
  return reset();
}

Vector Env::reset() {
  steps_ = 0;
  if (kind_ == EnvKind::pendulum) {
    state_.resize(2);
    state_(0) = rng_.uniform(-pi, pi);
    state_(1) = rng_.uniform(-1.0, 1.0);
  } else {
    state_.resize(4);
    for (int i = 0; i < 4; ++i) state_(i) = rng_.uniform(-acrobot_.init_noise, acrobot_.init_noise);
  }
  return observation();
}

void Env::set_state(const Vector& state) {
  require(state.size() == (kind_ == EnvKind::pendulum ? 2 : 4), errc::input_shape, "state dimension mismatch");
  state_ = state;
}

Vector Env::observation() const {
  Vector obs(observation_dim());
  if (kind_ == EnvKind::pendulum) {
    obs << std::cos(state_(0)), std::sin(state_(0)), state_(1);
  } else {
    obs << std::cos(state_(0)), std::sin(state_(0)), std::cos(state_(1)), std::sin(state_(1)), state_(2), state_(3);
  }
  return obs;
}

double Env::torque_for(const Action& action) const {
  if (space_.is_discrete()) {
    const auto* index = std::get_if<int>(&action);
    require(index != nullptr, errc::invalid_action, "discrete env needs an action index");
    const auto& d = space_.as_discrete();
    require(*index >= 0 && *index < d.count(), errc::invalid_action,
            "action index " + std::to_string(*index) + " outside Discrete(" + std::to_string(d.count()) + ")");
    return acrobot_.torques[static_cast<std::size_t>(d.retained[static_cast<std::size_t>(*index)])];
  }
  const auto* value = std::get_if<Vector>(&action);
  require(value != nullptr, errc::invalid_action, "box env needs a real-valued action");
  const auto& b = space_.as_box();
  require(value->size() == b.dim(), errc::invalid_action, "action dimension mismatch");
  require(value->allFinite(), errc::invalid_action, "non-finite action");
  return b.clip(*value)(0);
}

StepResult Env::step(const Action& action) {
  const double torque = torque_for(action);
  StepResult out;
  steps_ += 1;
  if (kind_ == EnvKind::pendulum) {
    out.reward = -pendulum_cost(state_, torque);
    state_ = pendulum_dynamics(state_, torque, pendulum_);
    out.truncated = steps_ >= pendulum_.max_steps;
    out.terminal = out.truncated;
  } else {
    state_ = acrobot_dynamics(state_, torque, acrobot_);
    const bool goal = acrobot_goal(state_);
    out.reward = goal ? 0.0 : -1.0;
    out.terminal = goal || steps_ >= acrobot_.max_steps;
    out.truncated = !goal && out.terminal;
  }
  out.observation = observation();
  return out;
}

bool is_known_env(std::string_view id) {
  return id == "pendulum" || id == "pendulum-restricted" || id == "acrobot" || id == "acrobot-restricted";
}

bool is_discrete_env(std::string_view id) { return id == "acrobot" || id == "acrobot-restricted"; }

}  // namespace shaped_transfer

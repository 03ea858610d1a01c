#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "shaped_transfer/nn.hpp"
#include "shaped_transfer/random.hpp"

namespace shaped_transfer {

// Discrete choices. retained[i] is the index in the unrestricted space that
// target index i stands for; an unrestricted space retains {0..n-1}.
struct DiscreteSpace {
  std::vector<int> retained;
  int count() const { return static_cast<int>(retained.size()); }
};

struct BoxSpace {
  Vector low;
  Vector high;
  int dim() const { return static_cast<int>(low.size()); }
  Vector clip(const Vector& a) const { return a.cwiseMax(low).cwiseMin(high); }
  bool contains(const Vector& a) const;
};

class ActionSpace {
 public:
  static ActionSpace discrete(int count);
  static ActionSpace discrete_subset(std::vector<int> retained);
  static ActionSpace box(Vector low, Vector high);

  bool is_discrete() const { return std::holds_alternative<DiscreteSpace>(space_); }
  const DiscreteSpace& as_discrete() const;
  const BoxSpace& as_box() const;

  nlohmann::json to_json() const;
  static ActionSpace from_json(const nlohmann::json& doc);

 private:
  explicit ActionSpace(std::variant<DiscreteSpace, BoxSpace> space) : space_(std::move(space)) {}
  std::variant<DiscreteSpace, BoxSpace> space_;
};

// Either a discrete index into the space or a real vector inside the box.
using Action = std::variant<int, Vector>;

struct DiscreteRestriction {
  std::vector<int> keep;  // indices into the space being restricted
};
struct BoxRestriction {
  Vector low;
  Vector high;
};
using Restriction = std::variant<DiscreteRestriction, BoxRestriction>;

/// Subset of a discrete space (order of `keep` is preserved) or sub-box of a
/// box space. Throws invalid_restriction on empty/out-of-range/inverted input.
ActionSpace restrict(const ActionSpace& space, const Restriction& restriction);

enum class EnvKind { pendulum, acrobot };

struct PendulumParams {
  double gravity = 10.0;     // m/s^2
  double mass = 1.0;         // kg
  double length = 1.0;       // m
  double max_torque = 2.0;   // N m
  double max_speed = 8.0;    // rad/s
  double dt = 0.05;          // s
  int max_steps = 200;
};

struct AcrobotParams {
  double gravity = 9.8;
  double link_mass_1 = 1.0, link_mass_2 = 1.0;              // kg
  double link_length_1 = 1.0;                               // m
  double link_com_1 = 0.5, link_com_2 = 0.5;                // m
  double link_moi = 1.0;                                    // kg m^2, both links
  double max_vel_1 = 4.0 * 3.14159265358979323846;          // rad/s
  double max_vel_2 = 9.0 * 3.14159265358979323846;          // rad/s
  double dt = 0.2;                                          // s
  double init_noise = 0.1;
  int max_steps = 500;
  std::vector<double> torques{-1.0, 0.0, 1.0};
};

/// Wraps an angle into [-pi, pi).
double wrap_angle(double x);

/// One semi-implicit Euler step; state = (theta, theta_dot).
Vector pendulum_dynamics(const Vector& state, double torque, const PendulumParams& p);
double pendulum_cost(const Vector& state, double torque);

/// One RK4 step of the two-link underactuated arm over dt, followed by angle
/// wrapping and velocity clamping; state = (theta1, theta2, dtheta1, dtheta2).
Vector acrobot_dynamics(const Vector& state, double torque, const AcrobotParams& p);
bool acrobot_goal(const Vector& state);

struct StepResult {
  Vector observation;
  double reward = 0.0;
  bool terminal = false;   // episode over (goal reached or truncated)
  bool truncated = false;  // ended by the step limit rather than by absorption
};

/// A classic-control environment with a (possibly restricted) action space.
class Env {
 public:
  /// Ids: pendulum, pendulum-restricted, acrobot, acrobot-restricted. A
  /// restriction overrides the default one for the `-restricted` variants.
  static Env make(std::string_view id, const std::optional<Restriction>& restriction = std::nullopt);

  Env(EnvKind kind, std::string id, PendulumParams params);
  Env(EnvKind kind, std::string id, AcrobotParams params);

  void restrict_actions(const Restriction& restriction);

  Vector reset(std::uint64_t seed);
  Vector reset();  // continues the current random stream
  StepResult step(const Action& action);

  /// Maps an action of this env's space to the torque fed to the dynamics.
  double torque_for(const Action& action) const;

  EnvKind kind() const { return kind_; }
  const std::string& id() const { return id_; }
  const ActionSpace& action_space() const { return space_; }
  const ActionSpace& unrestricted_space() const { return full_space_; }
  int observation_dim() const { return kind_ == EnvKind::pendulum ? 3 : 6; }
  int max_steps() const;
  int steps() const { return steps_; }

  const Vector& state() const { return state_; }
  void set_state(const Vector& state);
  Vector observation() const;

  const PendulumParams& pendulum_params() const { return pendulum_; }
  const AcrobotParams& acrobot_params() const { return acrobot_; }

 private:
  EnvKind kind_;
  std::string id_;
  PendulumParams pendulum_;
  AcrobotParams acrobot_;
  ActionSpace full_space_;
  ActionSpace space_;
  Vector state_;
  int steps_ = 0;
  Rng rng_;
};

bool is_discrete_env(std::string_view id);
bool is_known_env(std::string_view id);

}  // namespace shaped_transfer

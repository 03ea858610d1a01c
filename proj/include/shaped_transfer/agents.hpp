#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "shaped_transfer/envs.hpp"
#include "shaped_transfer/nn.hpp"
#include "shaped_transfer/random.hpp"
#include "shaped_transfer/replay.hpp"

namespace shaped_transfer {

enum class Algorithm { dqn, ddpg, td3 };

const char* to_string(Algorithm algorithm);
Algorithm algorithm_from_string(const std::string& name);

struct Hyperparameters {
  int hidden_width = 64;
  double gamma = 0.99;
  std::size_t buffer_capacity = 100000;
  int batch_size = 64;
  double q_learning_rate = 1e-3;  // Q-network and critics
  double actor_learning_rate = 1e-4;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  double epsilon_fraction = 0.1;  // of the run's step budget
  int target_sync_interval = 500;  // DQN hard sync, in updates
  double tau = 0.005;
  double exploration_noise = 0.1;  // std, as a fraction of the box half-width
  int policy_delay = 2;
  double target_noise = 0.2;       // fraction of the box half-width
  double target_noise_clip = 0.5;  // fraction of the box half-width
  int warmup_episodes = 100;

  static Hyperparameters defaults(Algorithm algorithm);

  nlohmann::json to_json() const;
  /// Applies key/value overrides; unknown keys are a configuration error.
  void apply(const nlohmann::json& overrides);
};

using Batch = std::span<const Transition* const>;

class DqnAgent {
 public:
  DqnAgent(int observation_dim, int action_count, Hyperparameters hp, std::uint64_t seed);
  DqnAgent(DenseNet online, Hyperparameters hp, std::uint64_t seed);

  Vector q_values(const Vector& observation) const;
  /// Argmax over `allowed`, ties to the lowest index.
  int greedy(const Vector& observation, std::span<const int> allowed) const;
  /// epsilon-greedy over `allowed` when exploring, greedy otherwise.
  int act(const Vector& observation, std::span<const int> allowed, bool explore);
  int random_action(std::span<const int> allowed);

  /// TD targets r + gamma * max_allowed Q_target(s'), or r when absorbing.
  Vector targets(Batch batch) const;
  /// One Adam step on the mean squared TD error; returns the loss.
  double update(Batch batch);

  void set_epsilon(double epsilon) { epsilon_ = epsilon; }
  double epsilon() const { return epsilon_; }
  void set_bootstrap_actions(std::vector<int> allowed);

  const DenseNet& online() const { return online_; }
  DenseNet& online() { return online_; }
  const DenseNet& target() const { return target_; }
  DenseNet& target() { return target_; }
  const Hyperparameters& hyperparameters() const { return hp_; }
  long updates() const { return updates_; }
  int action_count() const { return online_.output_dim(); }

 private:
  Hyperparameters hp_;
  DenseNet online_;
  DenseNet target_;
  AdamState adam_;
  Rng rng_;
  double epsilon_ = 0.0;
  std::vector<int> bootstrap_;
  long updates_ = 0;
};

struct ActorCriticLosses {
  double critic = 0.0;
  std::optional<double> actor;  // absent when the actor update was delayed
};

/// DDPG (one critic) or TD3 (twin critics, delayed actor, target smoothing).
/// The actor network is linear at the top; actions are
/// center + half_width * tanh(actor(s)).
class ActorCriticAgent {
 public:
  ActorCriticAgent(Algorithm algorithm, int observation_dim, BoxSpace box, Hyperparameters hp, std::uint64_t seed);
  ActorCriticAgent(Algorithm algorithm, BoxSpace box, DenseNet actor, std::vector<DenseNet> critics,
                   Hyperparameters hp, std::uint64_t seed);

  Vector deterministic_action(const Vector& observation) const;
  Vector act(const Vector& observation, bool explore);
  Vector random_action();

  double q_value(const Vector& observation, const Vector& action, std::size_t critic = 0) const;

  /// Critic regression targets; TD3 draws smoothing noise from the agent stream.
  Vector targets(Batch batch);
  ActorCriticLosses update(Batch batch);
  ActorCriticLosses update(Batch batch, long update_index);

  Algorithm algorithm() const { return algorithm_; }
  const BoxSpace& box() const { return box_; }
  const Hyperparameters& hyperparameters() const { return hp_; }
  std::size_t critic_count() const { return critics_.size(); }
  long updates() const { return updates_; }

  const DenseNet& actor() const { return actor_; }
  DenseNet& actor() { return actor_; }
  const DenseNet& actor_target() const { return actor_target_; }
  const DenseNet& critic(std::size_t i) const { return critics_.at(i); }
  DenseNet& critic(std::size_t i) { return critics_.at(i); }
  const DenseNet& critic_target(std::size_t i) const { return critic_targets_.at(i); }
  DenseNet& critic_target(std::size_t i) { return critic_targets_.at(i); }

 private:
  struct InitialNets;
  static InitialNets initial_nets(Algorithm algorithm, int observation_dim, int act_dim, int hidden,
                                  std::uint64_t seed);
  ActorCriticAgent(Algorithm algorithm, BoxSpace box, Hyperparameters hp, std::uint64_t seed, InitialNets nets);

  Matrix squash(const Matrix& raw) const;
  void update_critics(Batch batch, const Matrix& obs, const Matrix& actions, const Vector& y,
                      ActorCriticLosses& out);
  double update_actor(const Matrix& obs);

  Algorithm algorithm_;
  BoxSpace box_;
  Vector center_, half_width_;
  Hyperparameters hp_;
  DenseNet actor_, actor_target_;
  std::vector<DenseNet> critics_, critic_targets_;
  AdamState actor_adam_;
  std::vector<AdamState> critic_adam_;
  Rng rng_;
  long updates_ = 0;
};

/// A trained agent plus the environment it was trained on.
struct TrainedAgent {
  std::string env_id;
  std::variant<DqnAgent, ActorCriticAgent> agent;

  Algorithm algorithm() const;
  bool discrete() const { return std::holds_alternative<DqnAgent>(agent); }
  const DqnAgent& dqn() const;
  const ActorCriticAgent& actor_critic() const;
};

nlohmann::json checkpoint_to_json(const TrainedAgent& agent);
TrainedAgent checkpoint_from_json(const nlohmann::json& doc);
void save_checkpoint(const TrainedAgent& agent, const std::string& path);
TrainedAgent load_checkpoint(const std::string& path);

// Stacks per-transition vectors into columns.
Matrix stack_observations(Batch batch, bool next);

}  // namespace shaped_transfer

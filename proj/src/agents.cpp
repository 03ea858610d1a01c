#include "shaped_transfer/agents.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "shaped_transfer/errors.hpp"

namespace shaped_transfer {

const char* to_string(Algorithm algorithm) {
  switch (algorithm) {
    case Algorithm::dqn: return "dqn";
    case Algorithm::ddpg: return "ddpg";
    case Algorithm::td3: return "td3";
  }
  return "?";
}

Algorithm algorithm_from_string(const std::string& name) {
  if (name == "dqn") return Algorithm::dqn;
  if (name == "ddpg") return Algorithm::ddpg;
  if (name == "td3") return Algorithm::td3;
  fail(errc::configuration, "unknown algorithm '" + name + "'");
}

Hyperparameters Hyperparameters::defaults(Algorithm algorithm) {
  Hyperparameters hp;
  hp.batch_size = algorithm == Algorithm::dqn ? 64 : 100;
  return hp;
}

nlohmann::json Hyperparameters::to_json() const {
  return {{"hidden_width", hidden_width},
          {"gamma", gamma},
          {"buffer_capacity", buffer_capacity},
          {"batch_size", batch_size},
          {"q_learning_rate", q_learning_rate},
          {"actor_learning_rate", actor_learning_rate},
          {"epsilon_start", epsilon_start},
          {"epsilon_end", epsilon_end},
          {"epsilon_fraction", epsilon_fraction},
          {"target_sync_interval", target_sync_interval},
          {"tau", tau},
          {"exploration_noise", exploration_noise},
          {"policy_delay", policy_delay},
          {"target_noise", target_noise},
          {"target_noise_clip", target_noise_clip},
          {"warmup_episodes", warmup_episodes}};
}

void Hyperparameters::apply(const nlohmann::json& overrides) {
  if (overrides.is_null()) return;
  require(overrides.is_object(), errc::configuration, "hyperparameter overrides must be an object");
  for (const auto& [key, value] : overrides.items()) {
    try {
      if (key == "hidden_width") hidden_width = value.get<int>();
      else if (key == "gamma") gamma = value.get<double>();
      else if (key == "buffer_capacity") buffer_capacity = value.get<std::size_t>();
      else if (key == "batch_size") batch_size = value.get<int>();
      else if (key == "q_learning_rate") q_learning_rate = value.get<double>();
      else if (key == "actor_learning_rate") actor_learning_rate = value.get<double>();
      else if (key == "epsilon_start") epsilon_start = value.get<double>();
      else if (key == "epsilon_end") epsilon_end = value.get<double>();
      else if (key == "epsilon_fraction") epsilon_fraction = value.get<double>();
      else if (key == "target_sync_interval") target_sync_interval = value.get<int>();
      else if (key == "tau") tau = value.get<double>();
      else if (key == "exploration_noise") exploration_noise = value.get<double>();
      else if (key == "policy_delay") policy_delay = value.get<int>();
      else if (key == "target_noise") target_noise = value.get<double>();
      else if (key == "target_noise_clip") target_noise_clip = value.get<double>();
      else if (key == "warmup_episodes") warmup_episodes = value.get<int>();
      else fail(errc::configuration, "unknown hyperparameter '" + key + "'");
    } catch (const nlohmann::json::exception&) {
      fail(errc::configuration, "hyperparameter '" + key + "' has the wrong type");
    }
  }
  require(gamma > 0.0 && gamma <= 1.0, errc::configuration, "gamma must lie in (0, 1]");
  require(hidden_width > 0 && batch_size > 0 && buffer_capacity > 0, errc::configuration,
          "widths, batch size and capacity must be positive");
  require(target_sync_interval > 0 && policy_delay > 0 && warmup_episodes >= 0, errc::configuration,
          "intervals must be positive");
  require(tau >= 0.0 && tau <= 1.0, errc::configuration, "tau must lie in [0, 1]");
}

Matrix stack_observations(Batch batch, bool next) {
  require(!batch.empty(), errc::contract, "empty batch");
  const auto& first = next ? batch[0]->next_observation : batch[0]->observation;
  Matrix out(first.size(), static_cast<Eigen::Index>(batch.size()));
  for (std::size_t j = 0; j < batch.size(); ++j) {
    const auto& v = next ? batch[j]->next_observation : batch[j]->observation;
    require(v.size() == first.size(), errc::input_shape, "inconsistent observation sizes in batch");
    out.col(static_cast<Eigen::Index>(j)) = v;
  }
  return out;
}

namespace {

std::vector<int> all_indices(int n) {
  std::vector<int> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = i;
  return v;
}

std::vector<int> layer_widths(int in, int hidden, int out) { return {in, hidden, hidden, out}; }

void require_finite_loss(double loss) {
  require(std::isfinite(loss), errc::training_divergence, "non-finite loss");
}

}  // namespace

// ---------------------------------------------------------------- DQN

DqnAgent::DqnAgent(int observation_dim, int action_count, Hyperparameters hp, std::uint64_t seed)
    : hp_(hp), rng_(seed) {
  Rng init(derive_seed(seed, 101));
  const auto widths = layer_widths(observation_dim, hp_.hidden_width, action_count);
  online_ = DenseNet::initialized(widths, Activation::rectifier, init);
  target_ = online_;
  adam_ = AdamState(online_, AdamConfig{.learning_rate = hp_.q_learning_rate});
  bootstrap_ = all_indices(action_count);
}

DqnAgent::DqnAgent(DenseNet online, Hyperparameters hp, std::uint64_t seed)
    : hp_(hp), online_(std::move(online)), target_(online_), rng_(seed) {
  adam_ = AdamState(online_, AdamConfig{.learning_rate = hp_.q_learning_rate});
  bootstrap_ = all_indices(online_.output_dim());
}

void DqnAgent::set_bootstrap_actions(std::vector<int> allowed) {
  require(!allowed.empty(), errc::invalid_restriction, "empty bootstrap action set");
  for (int a : allowed)
    require(a >= 0 && a < action_count(), errc::invalid_restriction, "bootstrap action outside the Q-network");
  bootstrap_ = std::move(allowed);
}

Vector DqnAgent::q_values(const Vector& observation) const { return online_.forward(observation).col(0); }

int DqnAgent::greedy(const Vector& observation, std::span<const int> allowed) const {
  require(!allowed.empty(), errc::invalid_restriction, "empty allowed action set");
  const Vector q = q_values(observation);
  int best = -1;
  for (int a : allowed) {
    require(a >= 0 && a < q.size(), errc::invalid_restriction, "allowed action outside the Q-network");
    if (best < 0 || q(a) > q(best) || (q(a) == q(best) && a < best)) best = a;
  }
  return best;
}

int DqnAgent::random_action(std::span<const int> allowed) {
  require(!allowed.empty(), errc::invalid_restriction, "empty allowed action set");
  return allowed[rng_.index(allowed.size())];
}

int DqnAgent::act(const Vector& observation, std::span<const int> allowed, bool explore) {
  require(!allowed.empty(), errc::invalid_restriction, "empty allowed action set");
  if (explore && rng_.uniform() < epsilon_) return random_action(allowed);
  return greedy(observation, allowed);
}

Vector DqnAgent::targets(Batch batch) const {
  const Matrix next_q = target_.forward(stack_observations(batch, true));
  Vector y(static_cast<Eigen::Index>(batch.size()));
  for (std::size_t j = 0; j < batch.size(); ++j) {
    const auto& t = *batch[j];
    if (t.absorbing()) {
      y(static_cast<Eigen::Index>(j)) = t.reward;
      continue;
    }
    double best = next_q(bootstrap_[0], static_cast<Eigen::Index>(j));
    for (int a : bootstrap_) best = std::max(best, next_q(a, static_cast<Eigen::Index>(j)));
    y(static_cast<Eigen::Index>(j)) = t.reward + hp_.gamma * best;
  }
  return y;
}

double DqnAgent::update(Batch batch) {
  require(!batch.empty(), errc::contract, "empty batch");
  const Vector y = targets(batch);
  ForwardCache cache;
  const Matrix q = online_.forward(stack_observations(batch, false), cache);
  const double n = static_cast<double>(batch.size());
  Matrix grad = Matrix::Zero(q.rows(), q.cols());
  double loss = 0.0;
  for (std::size_t j = 0; j < batch.size(); ++j) {
    const auto* index = std::get_if<int>(&batch[j]->action);
    require(index != nullptr && *index >= 0 && *index < q.rows(), errc::invalid_action,
            "batch action outside the Q-network");
    const auto col = static_cast<Eigen::Index>(j);
    const double diff = q(*index, col) - y(col);
    loss += diff * diff / n;
    grad(*index, col) = 2.0 * diff / n;
  }
  require_finite_loss(loss);
  adam_step(online_, online_.backward(cache, grad), adam_);
  updates_ += 1;
  if (updates_ % hp_.target_sync_interval == 0) sync_target(online_, target_, 1.0);
  return loss;
}

// ------------------------------------------------------ DDPG / TD3

struct ActorCriticAgent::InitialNets {
  DenseNet actor;
  std::vector<DenseNet> critics;
};

ActorCriticAgent::InitialNets ActorCriticAgent::initial_nets(Algorithm algorithm, int observation_dim, int act_dim,
                                                             int hidden, std::uint64_t seed) {
  Rng init(derive_seed(seed, 101));
  InitialNets nets;
  nets.actor = DenseNet::initialized(layer_widths(observation_dim, hidden, act_dim), Activation::rectifier, init);
  const std::size_t n_critics = algorithm == Algorithm::td3 ? 2 : 1;
  for (std::size_t i = 0; i < n_critics; ++i)
    nets.critics.push_back(
        DenseNet::initialized(layer_widths(observation_dim + act_dim, hidden, 1), Activation::rectifier, init));
  return nets;
}

ActorCriticAgent::ActorCriticAgent(Algorithm algorithm, int observation_dim, BoxSpace box, Hyperparameters hp,
                                   std::uint64_t seed)
    : ActorCriticAgent(algorithm, box, hp, seed,
                       initial_nets(algorithm, observation_dim, box.dim(), hp.hidden_width, seed)) {}

ActorCriticAgent::ActorCriticAgent(Algorithm algorithm, BoxSpace box, Hyperparameters hp, std::uint64_t seed,
                                   InitialNets nets)
    : ActorCriticAgent(algorithm, std::move(box), std::move(nets.actor), std::move(nets.critics), hp, seed) {}

ActorCriticAgent::ActorCriticAgent(Algorithm algorithm, BoxSpace box, DenseNet actor, std::vector<DenseNet> critics,
                                   Hyperparameters hp, std::uint64_t seed)
    : algorithm_(algorithm),
      box_(std::move(box)),
      hp_(hp),
      actor_(std::move(actor)),
      critics_(std::move(critics)),
      rng_(seed) {
  require(algorithm != Algorithm::dqn, errc::configuration, "DQN is not an actor-critic method");
  require(critics_.size() == (algorithm == Algorithm::td3 ? 2u : 1u), errc::configuration,
          "TD3 needs exactly two critics, DDPG one");
  require(actor_.output_dim() == box_.dim(), errc::input_shape, "actor output does not match the action box");
  for (const auto& c : critics_)
    require(c.input_dim() == actor_.input_dim() + box_.dim() && c.output_dim() == 1, errc::input_shape,
            "critic must map (observation, action) to a scalar");
  center_ = (box_.high + box_.low) / 2.0;
  half_width_ = (box_.high - box_.low) / 2.0;
  actor_target_ = actor_;
  critic_targets_ = critics_;
  actor_adam_ = AdamState(actor_, AdamConfig{.learning_rate = hp_.actor_learning_rate});
  critic_adam_.clear();
  for (const auto& c : critics_) critic_adam_.emplace_back(c, AdamConfig{.learning_rate = hp_.q_learning_rate});
}

Matrix ActorCriticAgent::squash(const Matrix& raw) const {
  Matrix a = raw.array().tanh().matrix();
  a = (a.array().colwise() * half_width_.array()).matrix();
  a.colwise() += center_;
  return a;
}

Vector ActorCriticAgent::deterministic_action(const Vector& observation) const {
  return squash(actor_.forward(observation)).col(0);
}

Vector ActorCriticAgent::act(const Vector& observation, bool explore) {
  Vector a = deterministic_action(observation);
  if (!explore) return a;
  for (Eigen::Index i = 0; i < a.size(); ++i) a(i) += hp_.exploration_noise * half_width_(i) * rng_.normal();
  return box_.clip(a);
}

Vector ActorCriticAgent::random_action() {
  Vector a(box_.dim());
  for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = rng_.uniform(box_.low(i), box_.high(i));
  return a;
}

double ActorCriticAgent::q_value(const Vector& observation, const Vector& action, std::size_t critic) const {
  require(action.size() == box_.dim(), errc::input_shape, "action dimension mismatch");
  Vector input(observation.size() + action.size());
  input << observation, action;
  return critics_.at(critic).forward(input)(0, 0);
}

namespace {

Matrix stack_actions(Batch batch, int dim) {
  Matrix out(dim, static_cast<Eigen::Index>(batch.size()));
  for (std::size_t j = 0; j < batch.size(); ++j) {
    const auto* v = std::get_if<Vector>(&batch[j]->action);
    require(v != nullptr && v->size() == dim, errc::invalid_action, "batch action does not match the action box");
    out.col(static_cast<Eigen::Index>(j)) = *v;
  }
  return out;
}

Matrix concat_rows(const Matrix& top, const Matrix& bottom) {
  Matrix out(top.rows() + bottom.rows(), top.cols());
  out << top, bottom;
  return out;
}

}  // namespace

Vector ActorCriticAgent::targets(Batch batch) {
  require(!batch.empty(), errc::contract, "empty batch");
  const Matrix next_obs = stack_observations(batch, true);
  Matrix next_act = squash(actor_target_.forward(next_obs));
  if (algorithm_ == Algorithm::td3) {
    for (Eigen::Index j = 0; j < next_act.cols(); ++j)
      for (Eigen::Index i = 0; i < next_act.rows(); ++i) {
        const double clip = hp_.target_noise_clip * half_width_(i);
        const double noise = std::clamp(hp_.target_noise * half_width_(i) * rng_.normal(), -clip, clip);
        next_act(i, j) = std::clamp(next_act(i, j) + noise, box_.low(i), box_.high(i));
      }
  }
  const Matrix input = concat_rows(next_obs, next_act);
  Matrix next_q = critic_targets_[0].forward(input);
  for (std::size_t c = 1; c < critic_targets_.size(); ++c) next_q = next_q.cwiseMin(critic_targets_[c].forward(input));

  Vector y(static_cast<Eigen::Index>(batch.size()));
  for (std::size_t j = 0; j < batch.size(); ++j) {
    const auto& t = *batch[j];
    const auto col = static_cast<Eigen::Index>(j);
    y(col) = t.absorbing() ? t.reward : t.reward + hp_.gamma * next_q(0, col);
  }
  return y;
}

void ActorCriticAgent::update_critics(Batch batch, const Matrix& obs, const Matrix& actions, const Vector& y,
                                      ActorCriticLosses& out) {
  const Matrix input = concat_rows(obs, actions);
  const double n = static_cast<double>(batch.size());
  for (std::size_t c = 0; c < critics_.size(); ++c) {
    ForwardCache cache;
    const Matrix q = critics_[c].forward(input, cache);
    const Matrix diff = q - y.transpose();
    const double loss = diff.squaredNorm() / n;
    require_finite_loss(loss);
    adam_step(critics_[c], critics_[c].backward(cache, 2.0 * diff / n), critic_adam_[c]);
    out.critic += loss;
  }
}

double ActorCriticAgent::update_actor(const Matrix& obs) {
  const double n = static_cast<double>(obs.cols());
  ForwardCache actor_cache;
  const Matrix raw = actor_.forward(obs, actor_cache);
  const Matrix tanh_raw = raw.array().tanh().matrix();
  const Matrix actions = squash(raw);

  ForwardCache critic_cache;
  const Matrix q = critics_[0].forward(concat_rows(obs, actions), critic_cache);
  const double loss = -q.sum() / n;
  require_finite_loss(loss);
  const Gradients through_critic = critics_[0].backward(critic_cache, Matrix::Constant(1, q.cols(), -1.0 / n));
  Matrix d_raw = through_critic.input.bottomRows(box_.dim());
  d_raw = (d_raw.array().colwise() * half_width_.array()).matrix();
  d_raw.array() *= 1.0 - tanh_raw.array().square();
  adam_step(actor_, actor_.backward(actor_cache, d_raw), actor_adam_);
  return loss;
}

ActorCriticLosses ActorCriticAgent::update(Batch batch) { return update(batch, updates_); }

ActorCriticLosses ActorCriticAgent::update(Batch batch, long update_index) {
  require(!batch.empty(), errc::contract, "empty batch");
  ActorCriticLosses out;
  const Vector y = targets(batch);
  const Matrix obs = stack_observations(batch, false);
  update_critics(batch, obs, stack_actions(batch, box_.dim()), y, out);

  const bool delayed_step = algorithm_ == Algorithm::ddpg || update_index % hp_.policy_delay == 0;
  if (delayed_step) {
    out.actor = update_actor(obs);
    sync_target(actor_, actor_target_, hp_.tau);
    for (std::size_t c = 0; c < critics_.size(); ++c) sync_target(critics_[c], critic_targets_[c], hp_.tau);
  }
  updates_ = update_index + 1;
  return out;
}

// ---------------------------------------------------------- checkpoints

Algorithm TrainedAgent::algorithm() const {
  if (discrete()) return Algorithm::dqn;
  return std::get<ActorCriticAgent>(agent).algorithm();
}

const DqnAgent& TrainedAgent::dqn() const {
  require(discrete(), errc::configuration, "checkpoint does not hold a DQN agent");
  return std::get<DqnAgent>(agent);
}

const ActorCriticAgent& TrainedAgent::actor_critic() const {
  require(!discrete(), errc::configuration, "checkpoint does not hold an actor-critic agent");
  return std::get<ActorCriticAgent>(agent);
}

nlohmann::json checkpoint_to_json(const TrainedAgent& trained) {
  nlohmann::json doc{{"format", "shaped-transfer-agent"},
                     {"version", 1},
                     {"algorithm", to_string(trained.algorithm())},
                     {"env", trained.env_id}};
  if (trained.discrete()) {
    const auto& a = trained.dqn();
    doc["hyperparameters"] = a.hyperparameters().to_json();
    doc["action_count"] = a.action_count();
    doc["networks"] = {{"q", to_json(a.online())}};
  } else {
    const auto& a = trained.actor_critic();
    doc["hyperparameters"] = a.hyperparameters().to_json();
    doc["action_space"] = ActionSpace::box(a.box().low, a.box().high).to_json();
    nlohmann::json critics = nlohmann::json::array();
    for (std::size_t c = 0; c < a.critic_count(); ++c) critics.push_back(to_json(a.critic(c)));
    doc["networks"] = {{"actor", to_json(a.actor())}, {"critics", critics}};
  }
  return doc;
}

TrainedAgent checkpoint_from_json(const nlohmann::json& doc) {
  try {
    require(doc.at("format") == "shaped-transfer-agent", errc::io, "not an agent checkpoint");
    const Algorithm algorithm = algorithm_from_string(doc.at("algorithm").get<std::string>());
    Hyperparameters hp = Hyperparameters::defaults(algorithm);
    hp.apply(doc.at("hyperparameters"));
    const auto env = doc.at("env").get<std::string>();
    const auto& nets = doc.at("networks");
    if (algorithm == Algorithm::dqn) return {env, DqnAgent(net_from_json(nets.at("q")), hp, 0)};
    const auto space = ActionSpace::from_json(doc.at("action_space"));
    std::vector<DenseNet> critics;
    for (const auto& c : nets.at("critics")) critics.push_back(net_from_json(c));
    return {env, ActorCriticAgent(algorithm, space.as_box(), net_from_json(nets.at("actor")), std::move(critics), hp, 0)};
  } catch (const nlohmann::json::exception& e) {
    fail(errc::io, std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const TrainedAgent& agent, const std::string& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), errc::io, "cannot write checkpoint '" + path + "'");
  out << checkpoint_to_json(agent).dump(1) << '\n';
  require(static_cast<bool>(out), errc::io, "failed writing checkpoint '" + path + "'");
}

TrainedAgent load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), errc::io, "cannot read checkpoint '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    fail(errc::io, "checkpoint '" + path + "' is not valid JSON: " + e.what());
  }
  return checkpoint_from_json(doc);
}

}  // namespace shaped_transfer

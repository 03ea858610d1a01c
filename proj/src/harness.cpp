#include "shaped_transfer/harness.hpp"

#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <mutex>
#include <thread>

#include "shaped_transfer/curves.hpp"
#include "shaped_transfer/errors.hpp"

namespace shaped_transfer {

namespace {

Vector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

nlohmann::json restriction_to_json(const Restriction& r) {
  if (const auto* d = std::get_if<DiscreteRestriction>(&r)) return {{"keep", d->keep}};
  const auto& b = std::get<BoxRestriction>(r);
  return {{"low", to_std(b.low)}, {"high", to_std(b.high)}};
}

Restriction restriction_from_json(const nlohmann::json& doc) {
  if (doc.contains("keep")) return DiscreteRestriction{doc.at("keep").get<std::vector<int>>()};
  return BoxRestriction{to_vector(doc.at("low").get<std::vector<double>>()),
                        to_vector(doc.at("high").get<std::vector<double>>())};
}

}  // namespace

long ExperimentConfig::default_timesteps(const std::string& env_id) {
  return is_discrete_env(env_id) ? 100000 : 50000;
}

Hyperparameters ExperimentConfig::hyperparameters() const {
  Hyperparameters hp = Hyperparameters::defaults(algorithm);
  hp.apply(hyperparameter_overrides);
  return hp;
}

void ExperimentConfig::validate() const {
  require(is_known_env(env_id), errc::configuration, "unknown environment id '" + env_id + "'");
  const bool discrete = is_discrete_env(env_id);
  require(discrete == (algorithm == Algorithm::dqn), errc::configuration,
          std::string("algorithm '") + to_string(algorithm) + "' does not fit environment '" + env_id +
              "' (dqn needs a discrete env, ddpg/td3 a box env)");
  require(total_timesteps > 0, errc::configuration, "total_timesteps must be positive");
  require(!seeds.empty(), errc::configuration, "at least one seed is required");
  require(smoothing_window >= 1, errc::configuration, "smoothing window must be >= 1");
  if (method == Method::shaped) {
    require(source_set.has_value(), errc::configuration, "method 'shaped' requires a source set (--source-set)");
    require(source_model.has_value(), errc::configuration,
            "method 'shaped' requires a source model checkpoint (--source-model)");
  }
  if (method == Method::direct_transfer)
    require(source_model.has_value(), errc::configuration,
            "method 'direct' requires a source model checkpoint (--source-model)");
  if (restriction) Env::make(env_id, restriction);  // throws on an invalid restriction
  (void)hyperparameters();
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json doc{{"env", env_id},
                     {"algorithm", to_string(algorithm)},
                     {"method", to_string(method)},
                     {"total_timesteps", total_timesteps},
                     {"seeds", seeds},
                     {"smoothing_window", smoothing_window},
                     {"smoothing", "trailing window, partial at the head"},
                     {"hyperparameters", hyperparameters().to_json()},
                     {"shaping_at", shaping_at == ShapingTiming::collection ? "collection" : "replay"}};
  doc["source_model"] = source_model ? nlohmann::json(*source_model) : nlohmann::json(nullptr);
  doc["source_set"] = source_set ? nlohmann::json(*source_set) : nlohmann::json(nullptr);
  const Env env = Env::make(env_id, restriction);
  doc["action_space"] = env.action_space().to_json();
  if (restriction) doc["restriction"] = restriction_to_json(*restriction);
  return doc;
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& doc) {
  try {
    ExperimentConfig c;
    c.env_id = doc.at("env").get<std::string>();
    c.algorithm = algorithm_from_string(doc.at("algorithm").get<std::string>());
    c.method = method_from_string(doc.value("method", std::string("scratch")));
    c.total_timesteps = doc.contains("total_timesteps") ? doc.at("total_timesteps").get<long>()
                                                        : default_timesteps(c.env_id);
    c.seeds = doc.contains("seeds") ? doc.at("seeds").get<std::vector<std::uint64_t>>()
                                    : std::vector<std::uint64_t>{0, 1, 2, 3, 4};
    if (doc.contains("source_model") && !doc.at("source_model").is_null())
      c.source_model = doc.at("source_model").get<std::string>();
    if (doc.contains("source_set") && !doc.at("source_set").is_null())
      c.source_set = doc.at("source_set").get<std::string>();
    c.smoothing_window = doc.value("smoothing_window", 7);
    if (doc.contains("hyperparameters")) c.hyperparameter_overrides = doc.at("hyperparameters");
    if (doc.contains("restriction") && !doc.at("restriction").is_null())
      c.restriction = restriction_from_json(doc.at("restriction"));
    const auto timing = doc.value("shaping_at", std::string("collection"));
    require(timing == "collection" || timing == "replay", errc::configuration,
            "shaping_at must be 'collection' or 'replay'");
    c.shaping_at = timing == "collection" ? ShapingTiming::collection : ShapingTiming::replay;
    return c;
  } catch (const nlohmann::json::exception& e) {
    fail(errc::configuration, std::string("malformed experiment config: ") + e.what());
  }
}

SourceArtifacts load_source_artifacts(const ExperimentConfig& config) {
  config.validate();
  SourceArtifacts out;
  if (config.method == Method::scratch) return out;
  out.agent = load_checkpoint(*config.source_model);
  const Env target = Env::make(config.env_id, config.restriction);
  require(out.agent->discrete() == target.action_space().is_discrete(), errc::configuration,
          "source checkpoint and target environment disagree on the action-space type");
  const Env source_env = Env::make(out.agent->env_id);
  require(source_env.observation_dim() == target.observation_dim(), errc::configuration,
          "source and target environments have different observation spaces");
  if (config.method == Method::shaped) {
    out.shaping = ShapingContext::from_agent(*out.agent, SourceSet::load(*config.source_set),
                                             config.hyperparameters().gamma);
  }
  return out;
}

namespace {

std::vector<int> all_indices(int n) {
  std::vector<int> v;
  for (int i = 0; i < n; ++i) v.push_back(i);
  return v;
}

void run_direct(Env& env, const TrainedAgent& source, std::uint64_t env_seed, long budget, RunRecord& record) {
  long steps = 0;
  Vector obs = env.reset(env_seed);
  for (int episode = 0; steps < budget; ++episode) {
    double total = 0.0;
    StepResult r;
    do {
      r = env.step(direct_transfer_act(source, obs, env.action_space()));
      ++steps;
      total += r.reward;
      obs = r.observation;
    } while (!r.terminal);
    record.episodes.push_back({episode, steps, total, r.truncated});
    obs = env.reset();
  }
}

// Recomputes the shaping bonus of sampled transitions with the current
// policy's choice of a'.
std::vector<Transition> shape_at_replay(Batch batch, const ShapingContext& shaping,
                                        const std::function<Action(const Vector&)>& policy) {
  std::vector<Transition> out;
  out.reserve(batch.size());
  const auto n = static_cast<Eigen::Index>(batch.size());
  const int obs_dim = static_cast<int>(batch[0]->observation.size());
  Matrix obs(obs_dim, n), next_obs(obs_dim, n);
  Matrix actions, next_actions;
  const bool continuous = shaping.mode() == ShapingMode::continuous;
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& t = *batch[static_cast<std::size_t>(j)];
    obs.col(j) = t.observation;
    next_obs.col(j) = t.next_observation;
    if (continuous) {
      const auto& a = std::get<Vector>(t.action);
      const Vector a_next = std::get<Vector>(policy(t.next_observation));
      if (j == 0) {
        actions.resize(a.size(), n);
        next_actions.resize(a.size(), n);
      }
      actions.col(j) = a;
      next_actions.col(j) = a_next;
    }
  }
  const Vector phi = shaping.potentials(shaping.embed_batch(obs, actions));
  const Vector phi_next = shaping.potentials(shaping.embed_batch(next_obs, next_actions));
  for (Eigen::Index j = 0; j < n; ++j) {
    Transition t = *batch[static_cast<std::size_t>(j)];
    const double f = shaping.bonus(phi(j), phi_next(j), t.absorbing());
    t.reward = shaped_reward(t.reward, f);
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace

TrainResult train_run(const ExperimentConfig& config, std::uint64_t seed, const SourceArtifacts& artifacts) {
  config.validate();
  const auto started = std::chrono::steady_clock::now();
  Env env = Env::make(config.env_id, config.restriction);
  const Hyperparameters hp = config.hyperparameters();
  TrainResult result;
  RunRecord& record = result.record;
  record.method = config.method;
  record.seed = seed;
  record.config = config.to_json();

  const std::uint64_t env_seed = derive_seed(seed, 1);
  const std::uint64_t agent_seed = derive_seed(seed, 2);
  const std::uint64_t buffer_seed = derive_seed(seed, 3);

  auto finish = [&] {
    record.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return result;
  };

  if (config.method == Method::direct_transfer) {
    require(artifacts.agent.has_value(), errc::configuration, "direct transfer needs a source model");
    run_direct(env, *artifacts.agent, env_seed, config.total_timesteps, record);
    return finish();
  }

  const ShapingContext* shaping = nullptr;
  if (config.method == Method::shaped) {
    require(artifacts.shaping.has_value(), errc::configuration, "shaped run needs a shaping context");
    shaping = &*artifacts.shaping;
  }
  const bool shape_online = shaping != nullptr && config.shaping_at == ShapingTiming::collection;
  const bool shape_replayed = shaping != nullptr && config.shaping_at == ShapingTiming::replay;

  const bool discrete = env.action_space().is_discrete();
  std::optional<DqnAgent> dqn;
  std::optional<ActorCriticAgent> ac;
  std::vector<int> allowed;
  if (discrete) {
    allowed = all_indices(env.action_space().as_discrete().count());
    dqn.emplace(env.observation_dim(), static_cast<int>(allowed.size()), hp, agent_seed);
  } else {
    ac.emplace(config.algorithm, env.observation_dim(), env.action_space().as_box(), hp, agent_seed);
  }
  ReplayBuffer buffer(hp.buffer_capacity, buffer_seed);

  long steps = 0;
  const double decay_steps = hp.epsilon_fraction * static_cast<double>(config.total_timesteps);
  auto epsilon_at = [&](long t) {
    if (decay_steps <= 0.0) return hp.epsilon_end;
    const double frac = std::min(1.0, static_cast<double>(t) / decay_steps);
    return hp.epsilon_start + frac * (hp.epsilon_end - hp.epsilon_start);
  };

  // Behavior policy: uniform random during warmup, then exploring.
  auto choose = [&](const Vector& obs, bool warm) -> Action {
    if (discrete) {
      if (warm) return dqn->random_action(allowed);
      dqn->set_epsilon(epsilon_at(steps));
      return dqn->act(obs, allowed, true);
    }
    if (warm) return ac->random_action();
    return ac->act(obs, true);
  };
  // Greedy/deterministic policy; draws no random numbers.
  auto greedy = [&](const Vector& obs) -> Action {
    if (discrete) return dqn->greedy(obs, allowed);
    return ac->deterministic_action(obs);
  };
  auto potential = [&](const Vector& obs, const Action& a) {
    return shape_online ? shaping->potential(obs, a) : 0.0;
  };
  auto learn = [&](bool warm) {
    if (warm || buffer.size() < static_cast<std::size_t>(hp.batch_size)) return;
    auto sampled = buffer.sample(static_cast<std::size_t>(hp.batch_size));
    std::vector<Transition> reshaped;
    if (shape_replayed) {
      reshaped = shape_at_replay(sampled, *shaping, greedy);
      for (std::size_t i = 0; i < reshaped.size(); ++i) sampled[i] = &reshaped[i];
    }
    if (discrete)
      dqn->update(sampled);
    else
      ac->update(sampled);
  };

  try {
    Vector obs = env.reset(env_seed);
    for (int episode = 0; steps < config.total_timesteps; ++episode) {
      const bool warm = episode < hp.warmup_episodes;
      double total = 0.0;
      bool truncated = false;
      Action action = choose(obs, warm);
      double phi = potential(obs, action);
      // Each transition is stored once its successor action is known.
      for (;;) {
        StepResult r = env.step(action);
        ++steps;
        total += r.reward;
        Transition t{obs, action, r.reward, r.observation, r.terminal, r.truncated, std::nullopt};
        if (r.terminal) {
          if (shape_online) {
            double f = 0.0;
            if (t.absorbing()) {
              f = shaping->bonus(phi, std::nullopt, true);
            } else {
              // Truncated: bootstrap continues, so a' comes from the greedy policy.
              t.next_action = greedy(r.observation);
              f = shaping->bonus(phi, potential(r.observation, *t.next_action), false);
            }
            t.reward = shaped_reward(r.reward, f);
          }
          buffer.push(std::move(t));
          learn(warm);
          truncated = r.truncated;
          break;
        }
        Action next_action = choose(r.observation, warm);
        const double phi_next = potential(r.observation, next_action);
        if (shape_online) t.reward = shaped_reward(r.reward, shaping->bonus(phi, phi_next, false));
        t.next_action = next_action;
        buffer.push(std::move(t));
        learn(warm);
        obs = r.observation;
        action = std::move(next_action);
        phi = phi_next;
      }
      record.episodes.push_back({episode, steps, total, truncated});
      obs = env.reset();
    }
  } catch (const error& e) {
    if (e.code() != errc::training_divergence) throw;
    record.failed = true;
    record.failure = e.what();
  }

  if (discrete)
    result.agent = TrainedAgent{config.env_id, std::move(*dqn)};
  else
    result.agent = TrainedAgent{config.env_id, std::move(*ac)};
  return finish();
}

std::size_t run_parallelism(std::size_t seed_count) {
  std::size_t n = std::max<std::size_t>(seed_count, 1);
  if (const char* env = std::getenv("SHAPED_TRANSFER_THREADS")) {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (end != env && cap >= 1) n = std::min(n, static_cast<std::size_t>(cap));
  }
  return n;
}

std::vector<RunRecord> run_experiment(const ExperimentConfig& config, const std::optional<std::string>& csv_path) {
  const SourceArtifacts artifacts = load_source_artifacts(config);
  return run_experiment(config, artifacts, csv_path);
}

std::vector<RunRecord> run_experiment(const ExperimentConfig& config, const SourceArtifacts& artifacts,
                                      const std::optional<std::string>& csv_path) {
  config.validate();
  const std::size_t n = config.seeds.size();
  std::vector<std::optional<RunRecord>> results(n);
  std::exception_ptr first_error;
  std::mutex mutex;
  std::condition_variable ready;
  std::size_t next = 0;

  std::ofstream csv;
  if (csv_path) {
    csv.open(*csv_path, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(csv), errc::io, "cannot write CSV '" + *csv_path + "'");
    csv << csv_header << '\n';
    csv.flush();
  }

  auto worker = [&] {
    for (;;) {
      std::size_t i;
      {
        std::lock_guard lock(mutex);
        if (next >= n || first_error) return;
        i = next++;
      }
      std::optional<RunRecord> rec;
      std::exception_ptr err;
      try {
        rec = train_run(config, config.seeds[i], artifacts).record;
      } catch (...) {
        err = std::current_exception();
      }
      std::lock_guard lock(mutex);
      if (err && !first_error) first_error = err;
      results[i] = std::move(rec);
      ready.notify_all();
    }
  };

  const std::size_t threads = run_parallelism(n);
  std::vector<std::thread> pool;
  if (threads > 1)
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  else
    worker();

  std::vector<RunRecord> records;
  for (std::size_t i = 0; i < n; ++i) {
    std::unique_lock lock(mutex);
    ready.wait(lock, [&] { return results[i].has_value() || first_error != nullptr; });
    if (!results[i]) break;
    records.push_back(*results[i]);
    lock.unlock();
    if (csv_path) {
      for (const auto& row : csv_rows(records.back(), config.smoothing_window)) csv << format_csv_row(row) << '\n';
      csv.flush();
    }
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
  require(!csv_path || static_cast<bool>(csv), errc::io, "failed writing CSV '" + csv_path.value_or("") + "'");

  if (csv_path) {
    nlohmann::json meta{{"config", config.to_json()},
                        {"csv_schema", std::string(csv_header)},
                        {"smoothing", {{"window", config.smoothing_window}, {"alignment", "trailing, partial head"}}},
                        {"runs", nlohmann::json::array()}};
    for (const auto& r : records)
      meta["runs"].push_back({{"seed", r.seed},
                              {"episodes", r.episodes.size()},
                              {"env_steps", r.episodes.empty() ? 0 : r.episodes.back().env_steps},
                              {"failed", r.failed},
                              {"failure", r.failure},
                              {"wall_seconds", r.wall_seconds}});
    std::ofstream out(*csv_path + ".meta.json");
    require(static_cast<bool>(out), errc::io, "cannot write run metadata");
    out << meta.dump(2) << '\n';
  }
  return records;
}

}  // namespace shaped_transfer

#include "shaped_transfer/c_api.h"

#include <cmath>
#include <cstring>
#include <new>
#include <string>

#include <nlohmann/json.hpp>

#include "shaped_transfer/curves.hpp"
#include "shaped_transfer/errors.hpp"
#include "shaped_transfer/harness.hpp"

using namespace shaped_transfer;

struct st_env {
  Env env;
};
struct st_agent {
  TrainedAgent agent;
};
struct st_source_set {
  SourceSet set;
};
struct st_shaping {
  ShapingContext context;
};

namespace {

thread_local std::string last_error;

st_status status_of(errc code) {
  switch (code) {
    case errc::input_shape: return ST_ERR_INPUT_SHAPE;
    case errc::invalid_action: return ST_ERR_INVALID_ACTION;
    case errc::invalid_restriction: return ST_ERR_INVALID_RESTRICTION;
    case errc::training_divergence: return ST_ERR_TRAINING_DIVERGENCE;
    case errc::contract: return ST_ERR_CONTRACT;
    case errc::configuration: return ST_ERR_CONFIGURATION;
    case errc::io: return ST_ERR_IO;
    case errc::empty_trajectory: return ST_ERR_EMPTY_TRAJECTORY;
  }
  return ST_ERR_INTERNAL;
}

template <typename F>
st_status guarded(F&& body) {
  try {
    body();
    last_error.clear();
    return ST_OK;
  } catch (const error& e) {
    last_error = e.what();
    return status_of(e.code());
  } catch (const nlohmann::json::exception& e) {
    last_error = std::string("malformed JSON: ") + e.what();
    return ST_ERR_CONFIGURATION;
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return ST_ERR_INTERNAL;
  } catch (const std::exception& e) {
    last_error = e.what();
    return ST_ERR_INTERNAL;
  } catch (...) {
    last_error = "unknown exception";
    return ST_ERR_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  require(p != nullptr, errc::contract, std::string(what) + " must not be null");
}

char* duplicate(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

Vector view(const double* data, size_t n) {
  need(data, "input array");
  return Eigen::Map<const Vector>(data, static_cast<Eigen::Index>(n));
}

void write_out(const Vector& v, double* out, size_t capacity) {
  need(out, "output array");
  require(static_cast<size_t>(v.size()) <= capacity, errc::input_shape,
          "output buffer holds " + std::to_string(capacity) + " values, need " + std::to_string(v.size()));
  std::memcpy(out, v.data(), sizeof(double) * static_cast<size_t>(v.size()));
}

Action action_for(const ActionSpace& space, const double* action, size_t len) {
  need(action, "action");
  if (space.is_discrete()) {
    require(len == 1, errc::input_shape, "discrete actions are passed as a single index");
    require(std::isfinite(action[0]) && action[0] == std::floor(action[0]), errc::invalid_action,
            "discrete action index must be an integer");
    return static_cast<int>(action[0]);
  }
  return view(action, len);
}

std::optional<Restriction> parse_restriction(const char* json) {
  if (json == nullptr) return std::nullopt;
  const auto doc = nlohmann::json::parse(json);
  if (doc.contains("keep")) return DiscreteRestriction{doc.at("keep").get<std::vector<int>>()};
  const auto lo = doc.at("low").get<std::vector<double>>();
  const auto hi = doc.at("high").get<std::vector<double>>();
  return BoxRestriction{view(lo.data(), lo.size()), view(hi.data(), hi.size())};
}

ExperimentConfig parse_config(const char* config_json) {
  need(config_json, "config");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(config_json);
  } catch (const nlohmann::json::exception& e) {
    fail(errc::configuration, std::string("config is not valid JSON: ") + e.what());
  }
  auto config = ExperimentConfig::from_json(doc);
  config.validate();
  return config;
}

std::vector<CsvRow> read_all(const char* const* paths, size_t count) {
  need(paths, "CSV path list");
  require(count > 0, errc::contract, "at least one CSV is required");
  std::vector<CsvRow> rows;
  for (size_t i = 0; i < count; ++i) {
    need(paths[i], "CSV path");
    auto part = read_csv(paths[i]);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  return rows;
}

}  // namespace

extern "C" {

const char* st_last_error(void) { return last_error.c_str(); }

const char* st_status_string(st_status status) {
  switch (status) {
    case ST_OK: return "ok";
    case ST_ERR_INPUT_SHAPE: return to_string(errc::input_shape);
    case ST_ERR_INVALID_ACTION: return to_string(errc::invalid_action);
    case ST_ERR_INVALID_RESTRICTION: return to_string(errc::invalid_restriction);
    case ST_ERR_TRAINING_DIVERGENCE: return to_string(errc::training_divergence);
    case ST_ERR_CONTRACT: return to_string(errc::contract);
    case ST_ERR_CONFIGURATION: return to_string(errc::configuration);
    case ST_ERR_IO: return to_string(errc::io);
    case ST_ERR_EMPTY_TRAJECTORY: return to_string(errc::empty_trajectory);
    case ST_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

void st_free_string(char* s) { delete[] s; }

st_status st_env_create(const char* id, const char* restriction_json, st_env** out) {
  return guarded([&] {
    need(id, "env id");
    need(out, "out");
    *out = new st_env{Env::make(id, parse_restriction(restriction_json))};
  });
}

void st_env_destroy(st_env* env) { delete env; }

int st_env_observation_dim(const st_env* env) { return env ? env->env.observation_dim() : -1; }

st_status st_env_action_space(const st_env* env, char** json_out) {
  return guarded([&] {
    need(env, "env");
    need(json_out, "out");
    *json_out = duplicate(env->env.action_space().to_json().dump());
  });
}

st_status st_env_reset(st_env* env, uint64_t seed, double* observation, size_t capacity) {
  return guarded([&] {
    need(env, "env");
    write_out(env->env.reset(seed), observation, capacity);
  });
}

st_status st_env_step(st_env* env, const double* action, size_t action_len, double* observation, size_t capacity,
                      double* reward, int* terminal, int* truncated) {
  return guarded([&] {
    need(env, "env");
    require(static_cast<size_t>(env->env.observation_dim()) <= capacity, errc::input_shape,
            "observation buffer too small");
    const auto r = env->env.step(action_for(env->env.action_space(), action, action_len));
    write_out(r.observation, observation, capacity);
    if (reward) *reward = r.reward;
    if (terminal) *terminal = r.terminal ? 1 : 0;
    if (truncated) *truncated = r.truncated ? 1 : 0;
  });
}

st_status st_agent_load(const char* path, st_agent** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new st_agent{load_checkpoint(path)};
  });
}

st_status st_agent_save(const st_agent* agent, const char* path) {
  return guarded([&] {
    need(agent, "agent");
    need(path, "path");
    save_checkpoint(agent->agent, path);
  });
}

st_status st_agent_info(const st_agent* agent, char** json_out) {
  return guarded([&] {
    need(agent, "agent");
    need(json_out, "out");
    const Env env = Env::make(agent->agent.env_id);
    nlohmann::json info{{"env", agent->agent.env_id},
                        {"algorithm", to_string(agent->agent.algorithm())},
                        {"observation_dim", env.observation_dim()},
                        {"action_space", env.action_space().to_json()}};
    *json_out = duplicate(info.dump());
  });
}

st_status st_agent_act(const st_agent* agent, const double* observation, size_t observation_len, double* action,
                       size_t capacity, size_t* action_len) {
  return guarded([&] {
    need(agent, "agent");
    const Vector obs = view(observation, observation_len);
    Vector a;
    if (agent->agent.discrete()) {
      const auto& dqn = agent->agent.dqn();
      std::vector<int> all(static_cast<size_t>(dqn.action_count()));
      for (size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
      a = Vector::Constant(1, dqn.greedy(obs, all));
    } else {
      a = agent->agent.actor_critic().deterministic_action(obs);
    }
    write_out(a, action, capacity);
    if (action_len) *action_len = static_cast<size_t>(a.size());
  });
}

void st_agent_destroy(st_agent* agent) { delete agent; }

st_status st_source_set_collect(const st_agent* source, const char* env_id, int episodes, uint64_t seed,
                                const char* checkpoint_id, st_source_set** out) {
  return guarded([&] {
    need(source, "source agent");
    need(env_id, "env id");
    need(out, "out");
    Env env = Env::make(env_id);
    *out = new st_source_set{
        collect_source_set(source->agent, env, episodes, seed, checkpoint_id ? checkpoint_id : "")};
  });
}

st_status st_source_set_load(const char* path, st_source_set** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new st_source_set{SourceSet::load(path)};
  });
}

st_status st_source_set_save(const st_source_set* set, const char* path) {
  return guarded([&] {
    need(set, "source set");
    need(path, "path");
    set->set.save(path);
  });
}

size_t st_source_set_size(const st_source_set* set) { return set ? set->set.size() : 0; }

void st_source_set_destroy(st_source_set* set) { delete set; }

st_status st_shaping_create(const st_agent* source, const st_source_set* set, double gamma, st_shaping** out) {
  return guarded([&] {
    need(source, "source agent");
    need(set, "source set");
    need(out, "out");
    *out = new st_shaping{ShapingContext::from_agent(source->agent, set->set, gamma)};
  });
}

st_status st_shaping_potential(const st_shaping* shaping, const double* observation, size_t observation_len,
                               const double* action, size_t action_len, double* out) {
  return guarded([&] {
    need(shaping, "shaping");
    need(out, "out");
    const Vector obs = view(observation, observation_len);
    Action a = 0;
    if (shaping->context.mode() == ShapingMode::continuous) a = view(action, action_len);
    *out = shaping->context.potential(obs, a);
  });
}

st_status st_shaping_bonus(const st_shaping* shaping, double phi, const double* phi_next, int terminal, double* out) {
  return guarded([&] {
    need(shaping, "shaping");
    need(out, "out");
    std::optional<double> next;
    if (phi_next) next = *phi_next;
    *out = shaping->context.bonus(phi, next, terminal != 0);
  });
}

void st_shaping_destroy(st_shaping* shaping) { delete shaping; }

st_status st_train_source(const char* config_json, const char* checkpoint_path, const char* csv_path) {
  return guarded([&] {
    need(checkpoint_path, "checkpoint path");
    const auto config = parse_config(config_json);
    require(config.method == Method::scratch, errc::configuration, "source training uses method 'scratch'");
    require(config.seeds.size() == 1, errc::configuration, "source training takes exactly one seed");
    auto result = train_run(config, config.seeds.front(), SourceArtifacts{});
    if (csv_path) emit_csv(std::span<const RunRecord>(&result.record, 1), config.smoothing_window, csv_path);
    require(!result.record.failed, errc::training_divergence, result.record.failure);
    save_checkpoint(*result.agent, checkpoint_path);
  });
}

st_status st_run_experiment(const char* config_json, const char* csv_path) {
  return guarded([&] {
    need(csv_path, "CSV path");
    const auto config = parse_config(config_json);
    const auto records = run_experiment(config, std::string(csv_path));
    for (const auto& r : records)
      require(!r.failed, errc::training_divergence, "seed " + std::to_string(r.seed) + ": " + r.failure);
  });
}

st_status st_plot(const char* const* csv_paths, size_t count, const char* svg_path, int align, const char* title) {
  return guarded([&] {
    need(svg_path, "SVG path");
    require(align == 0 || align == 1, errc::contract, "align must be 0 (episode) or 1 (steps)");
    emit_plot(curves_from_rows(read_all(csv_paths, count)), svg_path,
              align == 0 ? PlotAlignment::episode : PlotAlignment::env_steps, title ? title : "");
  });
}

st_status st_report(const char* const* csv_paths, size_t count, int final_episodes, char** json_out) {
  return guarded([&] {
    need(json_out, "out");
    *json_out = duplicate(report(read_all(csv_paths, count), final_episodes).dump(2));
  });
}

}  // extern "C"

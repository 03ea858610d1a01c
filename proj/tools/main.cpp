#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "shaped_transfer/c_api.h"

namespace {

constexpr int exit_ok = 0;
constexpr int exit_runtime = 1;
constexpr int exit_usage = 2;

struct usage_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

int exit_code_for(st_status status) {
  if (status == ST_OK) return exit_ok;
  if (status == ST_ERR_CONFIGURATION || status == ST_ERR_INVALID_RESTRICTION) return exit_usage;
  return exit_runtime;
}

int report_status(st_status status, const std::string& what) {
  if (status != ST_OK)
    std::cerr << "shaped-transfer: " << what << " failed (" << st_status_string(status) << "): " << st_last_error()
              << '\n';
  return exit_code_for(status);
}

nlohmann::json read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw usage_error("cannot read config file '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw usage_error("config file '" + path + "' is not valid JSON: " + e.what());
  }
}

// key=value, value parsed as JSON when possible, else kept as a string.
void apply_overrides(nlohmann::json& doc, const std::vector<std::string>& sets) {
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw usage_error("--set expects key=value, got '" + kv + "'");
    const std::string key = kv.substr(0, eq), value = kv.substr(eq + 1);
    auto parsed = nlohmann::json::parse(value, nullptr, false);
    doc["hyperparameters"][key] = parsed.is_discarded() ? nlohmann::json(value) : parsed;
  }
}

struct CommonRunOptions {
  std::string env, algo, config;
  std::optional<long> steps;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, CommonRunOptions& o) {
  cmd->add_option("--env", o.env, "environment id: pendulum, pendulum-restricted, acrobot, acrobot-restricted");
  cmd->add_option("--algo", o.algo, "dqn (discrete) or ddpg/td3 (continuous)")->check(CLI::IsMember({"dqn", "ddpg", "td3"}));
  cmd->add_option("--steps", o.steps, "environment-step budget per seed")->check(CLI::PositiveNumber);
  cmd->add_option("--config", o.config, "experiment config JSON; flags override its keys")->check(CLI::ExistingFile);
  cmd->add_option("--set", o.sets, "hyperparameter override key=value (repeatable)");
}

nlohmann::json base_config(const CommonRunOptions& o) {
  nlohmann::json doc = o.config.empty() ? nlohmann::json::object() : read_config_file(o.config);
  if (!doc.is_object()) throw usage_error("config must be a JSON object");
  if (!o.env.empty()) doc["env"] = o.env;
  if (!o.algo.empty()) doc["algorithm"] = o.algo;
  if (o.steps) doc["total_timesteps"] = *o.steps;
  apply_overrides(doc, o.sets);
  if (!doc.contains("env")) throw usage_error("--env is required");
  if (!doc.contains("algorithm")) throw usage_error("--algo is required");
  return doc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Similarity-weighted reward shaping for transfer across action spaces"};
  app.name("shaped-transfer");
  app.require_subcommand(1);

  CommonRunOptions train_opts;
  std::uint64_t train_seed = 0;
  std::string train_out, train_csv;
  auto* train = app.add_subcommand("train-source", "train a source agent and write its checkpoint");
  add_common(train, train_opts);
  train->add_option("--seed", train_seed, "random seed");
  train->add_option("--out", train_out, "checkpoint path")->required();
  train->add_option("--csv", train_csv, "optional learning-curve CSV");

  std::string collect_model, collect_env, collect_out;
  int collect_episodes = 10;
  std::uint64_t collect_seed = 0;
  auto* collect = app.add_subcommand("collect", "roll out a source policy and store its source set");
  collect->add_option("--model", collect_model, "source checkpoint")->required()->check(CLI::ExistingFile);
  collect->add_option("--env", collect_env, "environment to roll out in (default: the checkpoint's)");
  collect->add_option("--episodes", collect_episodes, "episodes to roll out")->check(CLI::PositiveNumber);
  collect->add_option("--seed", collect_seed, "random seed");
  collect->add_option("--out", collect_out, "source-set path")->required();

  CommonRunOptions run_opts;
  std::string run_method = "scratch", run_model, run_set, run_out, run_shaping_at;
  int run_seed_count = 5;
  std::optional<int> run_window;
  auto* run = app.add_subcommand("run", "run one experiment cell over several seeds");
  add_common(run, run_opts);
  run->add_option("--method", run_method, "scratch, direct or shaped")
      ->check(CLI::IsMember({"scratch", "direct", "shaped"}));
  run->add_option("--seeds", run_seed_count, "number of seeds (0..N-1)")->check(CLI::PositiveNumber);
  run->add_option("--source-model", run_model, "source checkpoint (direct, shaped)");
  run->add_option("--source-set", run_set, "source set (shaped)");
  run->add_option("--shaping-at", run_shaping_at, "attach the bonus at collection or replay time")
      ->check(CLI::IsMember({"collection", "replay"}));
  run->add_option("--window", run_window, "moving-average window")->check(CLI::PositiveNumber);
  run->add_option("--out", run_out, "CSV path")->required();

  std::vector<std::string> plot_csvs;
  std::string plot_out, plot_align = "episode", plot_title;
  auto* plot = app.add_subcommand("plot", "plot mean learning curves with +-1 std bands as SVG");
  plot->add_option("--csv", plot_csvs, "run CSVs")->required()->check(CLI::ExistingFile);
  plot->add_option("--out", plot_out, "SVG path")->required();
  plot->add_option("--align", plot_align, "x axis: episode or steps")->check(CLI::IsMember({"episode", "steps"}));
  plot->add_option("--title", plot_title, "plot title");

  std::vector<std::string> report_csvs;
  int report_final = 50;
  auto* rep = app.add_subcommand("report", "print per-method summary statistics as JSON");
  rep->add_option("--csv", report_csvs, "run CSVs")->required()->check(CLI::ExistingFile);
  rep->add_option("--final", report_final, "episodes in the final window")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return exit_usage;
  }

  try {
    if (*train) {
      auto doc = base_config(train_opts);
      doc["method"] = "scratch";
      doc["seeds"] = {train_seed};
      return report_status(
          st_train_source(doc.dump().c_str(), train_out.c_str(), train_csv.empty() ? nullptr : train_csv.c_str()),
          "train-source");
    }
    if (*collect) {
      st_agent* agent = nullptr;
      if (auto s = st_agent_load(collect_model.c_str(), &agent); s != ST_OK) return report_status(s, "loading model");
      std::string env = collect_env;
      if (env.empty()) {
        char* info = nullptr;
        if (auto s = st_agent_info(agent, &info); s != ST_OK) {
          st_agent_destroy(agent);
          return report_status(s, "reading model");
        }
        env = nlohmann::json::parse(info).at("env").get<std::string>();
        st_free_string(info);
      }
      st_source_set* set = nullptr;
      auto s = st_source_set_collect(agent, env.c_str(), collect_episodes, collect_seed, collect_model.c_str(), &set);
      st_agent_destroy(agent);
      if (s != ST_OK) return report_status(s, "collect");
      s = st_source_set_save(set, collect_out.c_str());
      std::cerr << "collected " << st_source_set_size(set) << " source entries\n";
      st_source_set_destroy(set);
      return report_status(s, "saving source set");
    }
    if (*run) {
      auto doc = base_config(run_opts);
      doc["method"] = run_method;
      std::vector<std::uint64_t> seeds;
      for (int i = 0; i < run_seed_count; ++i) seeds.push_back(static_cast<std::uint64_t>(i));
      doc["seeds"] = seeds;
      if (!run_model.empty()) doc["source_model"] = run_model;
      if (!run_set.empty()) doc["source_set"] = run_set;
      if (!run_shaping_at.empty()) doc["shaping_at"] = run_shaping_at;
      if (run_window) doc["smoothing_window"] = *run_window;
      return report_status(st_run_experiment(doc.dump().c_str(), run_out.c_str()), "run");
    }
    if (*plot) {
      std::vector<const char*> paths;
      for (const auto& p : plot_csvs) paths.push_back(p.c_str());
      return report_status(st_plot(paths.data(), paths.size(), plot_out.c_str(), plot_align == "steps" ? 1 : 0,
                                   plot_title.empty() ? nullptr : plot_title.c_str()),
                           "plot");
    }
    if (*rep) {
      std::vector<const char*> paths;
      for (const auto& p : report_csvs) paths.push_back(p.c_str());
      char* json = nullptr;
      const auto s = st_report(paths.data(), paths.size(), report_final, &json);
      if (s == ST_OK) {
        std::cout << json << '\n';
        st_free_string(json);
      }
      return report_status(s, "report");
    }
  } catch (const usage_error& e) {
    std::cerr << "shaped-transfer: " << e.what() << '\n';
    return exit_usage;
  } catch (const std::exception& e) {
    std::cerr << "shaped-transfer: " << e.what() << '\n';
    return exit_runtime;
  }
  return exit_usage;
}

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "shaped_transfer/agents.hpp"
#include "shaped_transfer/baselines.hpp"
#include "shaped_transfer/envs.hpp"
#include "shaped_transfer/shaping.hpp"

namespace shaped_transfer {

// When the shaping bonus is attached to a transition: as it is collected
// (using the behavior policy's next action), or each time it is replayed
// (using the current greedy/deterministic policy's next action).
enum class ShapingTiming { collection, replay };

struct ExperimentConfig {
  std::string env_id;
  Algorithm algorithm = Algorithm::dqn;
  Method method = Method::scratch;
  long total_timesteps = 0;
  std::vector<std::uint64_t> seeds;
  std::optional<std::string> source_model;
  std::optional<std::string> source_set;
  int smoothing_window = 7;
  nlohmann::json hyperparameter_overrides = nlohmann::json::object();
  std::optional<Restriction> restriction;
  ShapingTiming shaping_at = ShapingTiming::collection;

  /// Step budget used for an env id when none is given: 50k for pendulum,
  /// 100k for acrobot.
  static long default_timesteps(const std::string& env_id);

  Hyperparameters hyperparameters() const;
  /// Throws errc::configuration naming the first problem found.
  void validate() const;

  /// Fully resolved snapshot, defaults included.
  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& doc);
};

struct EpisodeRecord {
  int episode = 0;
  long env_steps = 0;  // cumulative, at the end of the episode
  double reward = 0.0;  // raw environment reward, never shaped
  bool truncated = false;
};

struct RunRecord {
  Method method = Method::scratch;
  std::uint64_t seed = 0;
  nlohmann::json config;
  std::vector<EpisodeRecord> episodes;
  bool failed = false;
  std::string failure;
  double wall_seconds = 0.0;
};

/// Source model and shaping context shared read-only by every seed.
struct SourceArtifacts {
  std::optional<TrainedAgent> agent;
  std::optional<ShapingContext> shaping;
};

/// Loads whatever the configured method needs; scratch runs load nothing.
SourceArtifacts load_source_artifacts(const ExperimentConfig& config);

struct TrainResult {
  RunRecord record;
  std::optional<TrainedAgent> agent;  // absent for direct transfer
};

/// One seeded run. Training divergence marks the record failed instead of
/// throwing.
TrainResult train_run(const ExperimentConfig& config, std::uint64_t seed, const SourceArtifacts& artifacts);

/// Runs every seed (in parallel up to SHAPED_TRANSFER_THREADS), appending
/// each finished seed to `csv_path` in seed order and writing
/// `<csv_path>.meta.json` at the end.
std::vector<RunRecord> run_experiment(const ExperimentConfig& config,
                                      const std::optional<std::string>& csv_path = std::nullopt);
std::vector<RunRecord> run_experiment(const ExperimentConfig& config, const SourceArtifacts& artifacts,
                                      const std::optional<std::string>& csv_path);

/// Number of worker threads for `seed_count` seeds.
std::size_t run_parallelism(std::size_t seed_count);

}  // namespace shaped_transfer

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "shaped_transfer/agents.hpp"
#include "shaped_transfer/envs.hpp"
#include "shaped_transfer/nn.hpp"

namespace shaped_transfer {

enum class ShapingMode { discrete, continuous };

const char* to_string(ShapingMode mode);

/// Below this norm an embedding is treated as zero and its cosine term as 0.
inline constexpr double zero_norm_threshold = 1e-12;

struct SourceEntry {
  Vector embedding;
  double value = 0.0;
};

struct SourceProvenance {
  std::string env_id;
  std::string checkpoint;
  std::string algorithm;
  int episodes = 0;
  std::uint64_t seed = 0;
};

/// Embedding/value pairs harvested from source-agent trajectories.
class SourceSet {
 public:
  SourceSet(std::vector<SourceEntry> entries, SourceProvenance provenance = {});

  std::size_t size() const { return entries_.size(); }
  int dim() const { return static_cast<int>(entries_.front().embedding.size()); }
  const std::vector<SourceEntry>& entries() const { return entries_; }
  const SourceProvenance& provenance() const { return provenance_; }

  nlohmann::json to_json() const;
  static SourceSet from_json(const nlohmann::json& doc);
  void save(const std::string& path) const;
  static SourceSet load(const std::string& path);

 private:
  std::vector<SourceEntry> entries_;
  SourceProvenance provenance_;
};

/// Runs the source agent's greedy (DQN) or deterministic (actor-critic)
/// policy for `episodes` episodes on `env` and stores one entry per visited
/// state-action pair.
SourceSet collect_source_set(const TrainedAgent& source, Env& env, int episodes, std::uint64_t seed,
                             const std::string& checkpoint_id = {});

/// Similarity-weighted potential over a source set and the shaping bonus
/// F = gamma * phi(s', a') - phi(s, a).
///
/// In discrete mode the embedding is the Q-network's feature vector for s
/// alone; in continuous mode it is the (first) critic's feature vector for
/// (s, a), which is defined for any real action, including ones outside the
/// box the source was trained on.
class ShapingContext {
 public:
  ShapingContext(ShapingMode mode, DenseNet network, SourceSet set, double gamma);
  static ShapingContext from_agent(const TrainedAgent& source, SourceSet set, double gamma);

  ShapingMode mode() const { return mode_; }
  double gamma() const { return gamma_; }
  const SourceSet& source_set() const { return set_; }
  int embedding_dim() const { return network_.feature_dim(); }

  Vector embed(const Vector& observation, const Action& action) const;

  /// (1/|Z|) sum_i cos(z, e_i) q_i
  double potential(const Vector& z) const;
  double potential(const Vector& observation, const Action& action) const;

  /// Batched forms: one column per sample. `actions` is ignored in discrete mode.
  Matrix embed_batch(const Matrix& observations, const Matrix& actions) const;
  Vector potentials(const Matrix& embeddings) const;

  /// With `terminal` (absorbing) the successor potential is 0 and no a' is
  /// needed; otherwise a missing a' is a contract error.
  double bonus(const Vector& s, const Action& a, const Vector& s_next, const std::optional<Action>& a_next,
               bool terminal) const;
  /// Same rule from precomputed potentials; phi_next is ignored when terminal.
  double bonus(double phi, std::optional<double> phi_next, bool terminal) const;

 private:
  ShapingMode mode_;
  DenseNet network_;
  SourceSet set_;
  double gamma_;
  Matrix unit_embeddings_;  // |Z| x dim, zero rows for zero-norm entries
  Vector values_;
};

double shaped_reward(double reward, double bonus);

}  // namespace shaped_transfer

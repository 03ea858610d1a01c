#include "shaped_transfer/shaping.hpp"

#include <cmath>
#include <fstream>

#include "shaped_transfer/errors.hpp"

namespace shaped_transfer {

const char* to_string(ShapingMode mode) { return mode == ShapingMode::discrete ? "discrete" : "continuous"; }

SourceSet::SourceSet(std::vector<SourceEntry> entries, SourceProvenance provenance)
    : entries_(std::move(entries)), provenance_(std::move(provenance)) {
  require(!entries_.empty(), errc::empty_trajectory, "source set needs at least one entry");
  const auto d = entries_.front().embedding.size();
  require(d > 0, errc::input_shape, "source embeddings must be non-empty");
  for (const auto& e : entries_) {
    require(e.embedding.size() == d, errc::input_shape, "source embeddings must share one dimension");
    require(e.embedding.allFinite() && std::isfinite(e.value), errc::contract, "non-finite source entry");
  }
}

nlohmann::json SourceSet::to_json() const {
  nlohmann::json embeddings = nlohmann::json::array();
  std::vector<double> values;
  values.reserve(entries_.size());
  for (const auto& e : entries_) {
    embeddings.push_back(std::vector<double>(e.embedding.data(), e.embedding.data() + e.embedding.size()));
    values.push_back(e.value);
  }
  return {{"format", "shaped-transfer-source-set"},
          {"version", 1},
          {"embedding_dim", dim()},
          {"provenance",
           {{"env", provenance_.env_id},
            {"checkpoint", provenance_.checkpoint},
            {"algorithm", provenance_.algorithm},
            {"episodes", provenance_.episodes},
            {"seed", provenance_.seed}}},
          {"embeddings", embeddings},
          {"values", values}};
}

SourceSet SourceSet::from_json(const nlohmann::json& doc) {
  try {
    require(doc.at("format") == "shaped-transfer-source-set", errc::io, "not a source-set document");
    const int dim = doc.at("embedding_dim").get<int>();
    const auto& embeddings = doc.at("embeddings");
    const auto values = doc.at("values").get<std::vector<double>>();
    require(embeddings.size() == values.size(), errc::io, "embedding and value counts differ");
    std::vector<SourceEntry> entries;
    entries.reserve(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
      const auto e = embeddings[i].get<std::vector<double>>();
      require(static_cast<int>(e.size()) == dim, errc::input_shape, "embedding does not match embedding_dim");
      entries.push_back({Eigen::Map<const Vector>(e.data(), dim), values[i]});
    }
    const auto& p = doc.at("provenance");
    SourceProvenance provenance{p.value("env", ""), p.value("checkpoint", ""), p.value("algorithm", ""),
                                p.value("episodes", 0), p.value("seed", std::uint64_t{0})};
    return SourceSet(std::move(entries), std::move(provenance));
  } catch (const nlohmann::json::exception& e) {
    fail(errc::io, std::string("malformed source set: ") + e.what());
  }
}

void SourceSet::save(const std::string& path) const {
  std::ofstream out(path);
  require(static_cast<bool>(out), errc::io, "cannot write source set '" + path + "'");
  out << to_json().dump() << '\n';
  require(static_cast<bool>(out), errc::io, "failed writing source set '" + path + "'");
}

SourceSet SourceSet::load(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), errc::io, "cannot read source set '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    fail(errc::io, "source set '" + path + "' is not valid JSON: " + e.what());
  }
  return from_json(doc);
}

namespace {

Vector critic_input(const Vector& observation, const Vector& action) {
  Vector x(observation.size() + action.size());
  x << observation, action;
  return x;
}

}  // namespace

SourceSet collect_source_set(const TrainedAgent& source, Env& env, int episodes, std::uint64_t seed,
                             const std::string& checkpoint_id) {
  require(episodes >= 1, errc::contract, "need at least one source episode");
  require(env.action_space().is_discrete() == source.discrete(), errc::configuration,
          "source agent and environment disagree on the action-space type");
  std::vector<SourceEntry> entries;
  std::vector<int> allowed;
  if (source.discrete()) {
    const auto& d = env.action_space().as_discrete();
    require(d.count() == source.dqn().action_count(), errc::configuration,
            "source Q-network does not match the environment's action count");
    for (int i = 0; i < d.count(); ++i) allowed.push_back(i);
  }

  for (int ep = 0; ep < episodes; ++ep) {
    Vector obs = ep == 0 ? env.reset(seed) : env.reset();
    std::size_t steps = 0;
    bool done = false;
    while (!done) {
      Action action;
      ForwardResult fr;
      if (source.discrete()) {
        const auto& agent = source.dqn();
        fr = forward_with_features(agent.online(), obs);
        int best = allowed.front();
        for (int a : allowed)
          if (fr.output(a) > fr.output(best)) best = a;
        action = best;
        entries.push_back({fr.features, fr.output(best)});
      } else {
        const auto& agent = source.actor_critic();
        const Vector a = agent.deterministic_action(obs);
        fr = forward_with_features(agent.critic(0), critic_input(obs, a));
        action = a;
        entries.push_back({fr.features, fr.output(0)});
      }
      const StepResult r = env.step(action);
      ++steps;
      obs = r.observation;
      done = r.terminal;
    }
    require(steps > 0, errc::empty_trajectory, "source episode of length 0");
  }
  return SourceSet(std::move(entries),
                   SourceProvenance{env.id(), checkpoint_id, to_string(source.algorithm()), episodes, seed});
}

ShapingContext::ShapingContext(ShapingMode mode, DenseNet network, SourceSet set, double gamma)
    : mode_(mode), network_(std::move(network)), set_(std::move(set)), gamma_(gamma) {
  require(gamma_ > 0.0 && gamma_ <= 1.0, errc::configuration, "gamma must lie in (0, 1]");
  require(network_.feature_dim() == set_.dim(), errc::input_shape,
          "source-set embedding dim " + std::to_string(set_.dim()) + " differs from the network's feature width " +
              std::to_string(network_.feature_dim()));
  if (mode_ == ShapingMode::continuous)
    require(network_.output_dim() == 1, errc::configuration, "continuous shaping needs a scalar critic");

  const auto n = static_cast<Eigen::Index>(set_.size());
  unit_embeddings_.resize(n, set_.dim());
  values_.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& e = set_.entries()[static_cast<std::size_t>(i)];
    const double norm = e.embedding.norm();
    if (norm < zero_norm_threshold)
      unit_embeddings_.row(i).setZero();
    else
      unit_embeddings_.row(i) = e.embedding.transpose() / norm;
    values_(i) = e.value;
  }
}

ShapingContext ShapingContext::from_agent(const TrainedAgent& source, SourceSet set, double gamma) {
  if (source.discrete()) return ShapingContext(ShapingMode::discrete, source.dqn().online(), std::move(set), gamma);
  // TD3 embeddings come from its first critic.
  return ShapingContext(ShapingMode::continuous, source.actor_critic().critic(0), std::move(set), gamma);
}

Vector ShapingContext::embed(const Vector& observation, const Action& action) const {
  if (mode_ == ShapingMode::discrete) {
    require(observation.size() == network_.input_dim(), errc::input_shape, "observation dimension mismatch");
    return forward_with_features(network_, observation).features;
  }
  const auto* a = std::get_if<Vector>(&action);
  require(a != nullptr, errc::input_shape, "continuous shaping needs a real-valued action");
  require(observation.size() + a->size() == network_.input_dim(), errc::input_shape,
          "observation/action dimensions do not match the source critic");
  return forward_with_features(network_, critic_input(observation, *a)).features;
}

double ShapingContext::potential(const Vector& z) const {
  require(z.size() == unit_embeddings_.cols(), errc::input_shape, "embedding dimension mismatch");
  const double norm = z.norm();
  if (norm < zero_norm_threshold) return 0.0;
  const Vector cosines = unit_embeddings_ * (z / norm);
  return cosines.dot(values_) / static_cast<double>(values_.size());
}

double ShapingContext::potential(const Vector& observation, const Action& action) const {
  return potential(embed(observation, action));
}

Matrix ShapingContext::embed_batch(const Matrix& observations, const Matrix& actions) const {
  ForwardCache cache;
  if (mode_ == ShapingMode::discrete) {
    network_.forward(observations, cache);
  } else {
    require(actions.cols() == observations.cols(), errc::input_shape, "observation/action batch sizes differ");
    Matrix input(observations.rows() + actions.rows(), observations.cols());
    input << observations, actions;
    network_.forward(input, cache);
  }
  return cache.inputs.back();
}

Vector ShapingContext::potentials(const Matrix& embeddings) const {
  require(embeddings.rows() == unit_embeddings_.cols(), errc::input_shape, "embedding dimension mismatch");
  Vector out(embeddings.cols());
  for (Eigen::Index j = 0; j < embeddings.cols(); ++j) out(j) = potential(Vector(embeddings.col(j)));
  return out;
}

double ShapingContext::bonus(double phi, std::optional<double> phi_next, bool terminal) const {
  if (terminal) return -phi;
  require(phi_next.has_value(), errc::contract, "non-terminal shaping needs the successor potential");
  return gamma_ * *phi_next - phi;
}

double ShapingContext::bonus(const Vector& s, const Action& a, const Vector& s_next,
                             const std::optional<Action>& a_next, bool terminal) const {
  const double phi = potential(s, a);
  if (terminal) return bonus(phi, std::nullopt, true);
  require(a_next.has_value(), errc::contract, "non-terminal shaping needs the next action a'");
  return bonus(phi, potential(s_next, *a_next), false);
}

double shaped_reward(double reward, double bonus) {
  require(std::isfinite(reward) && std::isfinite(bonus), errc::contract, "non-finite reward or shaping bonus");
  return reward + bonus;
}

}  // namespace shaped_transfer

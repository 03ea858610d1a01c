#include "shaped_transfer/baselines.hpp"

#include "shaped_transfer/errors.hpp"

namespace shaped_transfer {

const char* to_string(Method method) {
  switch (method) {
    case Method::scratch: return "scratch";
    case Method::direct_transfer: return "direct";
    case Method::shaped: return "shaped";
  }
  return "?";
}

Method method_from_string(const std::string& name) {
  if (name == "scratch") return Method::scratch;
  if (name == "direct" || name == "direct_transfer") return Method::direct_transfer;
  if (name == "shaped") return Method::shaped;
  fail(errc::configuration, "unknown method '" + name + "' (expected scratch|direct|shaped)");
}

Action direct_transfer_act(const TrainedAgent& source, const Vector& observation, const ActionSpace& target_space) {
  if (target_space.is_discrete()) {
    const auto& retained = target_space.as_discrete().retained;
    require(!retained.empty(), errc::invalid_restriction, "target space retains no actions");
    const auto& agent = source.dqn();
    const int chosen = agent.greedy(observation, retained);
    // Map the source index back to its position in the target space.
    for (std::size_t i = 0; i < retained.size(); ++i)
      if (retained[i] == chosen) return static_cast<int>(i);
    fail(errc::invalid_action, "source argmax outside the retained set");
  }
  const auto& agent = source.actor_critic();
  return target_space.as_box().clip(agent.deterministic_action(observation));
}

}  // namespace shaped_transfer

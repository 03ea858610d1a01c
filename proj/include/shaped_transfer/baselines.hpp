#pragma once

#include <string>

#include "shaped_transfer/agents.hpp"
#include "shaped_transfer/envs.hpp"

namespace shaped_transfer {

enum class Method { scratch, direct_transfer, shaped };

const char* to_string(Method method);
Method method_from_string(const std::string& name);  // scratch | direct | shaped

/// Frozen source policy adapted to a target action space: box actions are
/// clipped into the target box, discrete choices are the source argmax over
/// the retained indices. The returned action is expressed in the target
/// space (a target index, or a clipped vector).
Action direct_transfer_act(const TrainedAgent& source, const Vector& observation, const ActionSpace& target_space);

}  // namespace shaped_transfer

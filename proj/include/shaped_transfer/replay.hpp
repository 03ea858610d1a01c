#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "shaped_transfer/envs.hpp"
#include "shaped_transfer/random.hpp"

namespace shaped_transfer {

struct Transition {
  Vector observation;
  Action action;
  double reward = 0.0;
  Vector next_observation;
  bool terminal = false;
  bool truncated = false;
  std::optional<Action> next_action;

  // Truncation ends an episode but is not an absorbing state.
  bool absorbing() const { return terminal && !truncated; }
};

/// Bounded FIFO of transitions with uniform sampling (with replacement).
class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, std::uint64_t seed);

  void push(Transition t);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }

  // Oldest first.
  const Transition& at(std::size_t i) const;

  std::vector<const Transition*> sample(std::size_t batch);
  std::vector<std::size_t> sample_indices(std::size_t batch);

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;  // slot holding the oldest item once full
  std::vector<Transition> items_;
  Rng rng_;
};

}  // namespace shaped_transfer

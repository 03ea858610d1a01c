#include "shaped_transfer/replay.hpp"

#include <algorithm>

#include "shaped_transfer/errors.hpp"

namespace shaped_transfer {

ReplayBuffer::ReplayBuffer(std::size_t capacity, std::uint64_t seed) : capacity_(capacity), rng_(seed) {
  require(capacity > 0, errc::contract, "replay capacity must be positive");
  items_.reserve(std::min<std::size_t>(capacity, 1 << 16));
}

void ReplayBuffer::push(Transition t) {
  if (items_.size() < capacity_) {
    items_.push_back(std::move(t));
    return;
  }
  items_[head_] = std::move(t);
  head_ = (head_ + 1) % capacity_;
}

const Transition& ReplayBuffer::at(std::size_t i) const {
  require(i < items_.size(), errc::contract, "replay index out of range");
  return items_[(head_ + i) % items_.size()];
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t batch) {
  require(!items_.empty(), errc::contract, "sampling from an empty replay buffer");
  std::vector<std::size_t> out(batch);
  for (auto& i : out) i = rng_.index(items_.size());
  return out;
}

std::vector<const Transition*> ReplayBuffer::sample(std::size_t batch) {
  std::vector<const Transition*> out;
  out.reserve(batch);
  for (std::size_t i : sample_indices(batch)) out.push_back(&items_[i]);
  return out;
}

}  // namespace shaped_transfer

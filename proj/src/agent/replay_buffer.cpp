#include "wave/agent/replay_buffer.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace wave::agent {

ReplayBuffer::ReplayBuffer(std::size_t capacity, std::size_t obs_dim, std::size_t act_dim, std::uint64_t seed)
    : capacity_(capacity), rng_(seed) {
  if (capacity < 1) throw std::invalid_argument("ReplayBuffer: capacity must be >= 1");
  if (obs_dim < 1 || act_dim < 1) throw std::invalid_argument("ReplayBuffer: dimensions must be >= 1");
  const auto n = static_cast<Eigen::Index>(capacity);
  states_.resize(n, static_cast<Eigen::Index>(obs_dim));
  actions_.resize(n, static_cast<Eigen::Index>(act_dim));
  rewards_.resize(n);
  next_states_.resize(n, static_cast<Eigen::Index>(obs_dim));
  dones_.resize(n);
}

void ReplayBuffer::add(const Transition& t) {
  if (t.state.size() != states_.cols() || t.next_state.size() != states_.cols() ||
      t.action.size() != actions_.cols()) {
    throw std::invalid_argument("ReplayBuffer::add: transition dimensions do not match the buffer");
  }
  if (!t.state.allFinite() || !t.next_state.allFinite() || !t.action.allFinite() || !std::isfinite(t.reward)) {
    throw NumericError("ReplayBuffer::add: non-finite transition");
  }
  const auto i = static_cast<Eigen::Index>(next_);
  states_.row(i) = t.state.transpose();
  actions_.row(i) = t.action.transpose();
  rewards_[i] = t.reward;
  next_states_.row(i) = t.next_state.transpose();
  dones_[i] = t.done ? 1.0 : 0.0;
  next_ = (next_ + 1) % capacity_;
  if (size_ < capacity_) ++size_;
}

Transition ReplayBuffer::at(std::size_t i) const {
  if (i >= size_) throw std::out_of_range("ReplayBuffer::at: index " + std::to_string(i));
  const auto r = static_cast<Eigen::Index>(i);
  return {states_.row(r).transpose(), actions_.row(r).transpose(), rewards_[r], next_states_.row(r).transpose(),
          dones_[r] != 0.0};
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t n) {
  return static_cast<const ReplayBuffer&>(*this).sample_indices(n, rng_);
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t n, std::mt19937_64& rng) const {
  if (size_ == 0) throw std::logic_error("ReplayBuffer: sampling from an empty buffer");
  std::uniform_int_distribution<std::size_t> pick(0, size_ - 1);
  std::vector<std::size_t> out(n);
  for (auto& i : out) i = pick(rng);
  return out;
}

Batch ReplayBuffer::gather(const std::vector<std::size_t>& indices) const {
  const auto n = static_cast<Eigen::Index>(indices.size());
  Batch b;
  b.states.resize(n, states_.cols());
  b.actions.resize(n, actions_.cols());
  b.rewards.resize(n);
  b.next_states.resize(n, next_states_.cols());
  b.dones.resize(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const std::size_t i = indices[static_cast<std::size_t>(k)];
    if (i >= size_) throw std::out_of_range("ReplayBuffer::gather: index " + std::to_string(i));
    const auto r = static_cast<Eigen::Index>(i);
    b.states.row(k) = states_.row(r);
    b.actions.row(k) = actions_.row(r);
    b.rewards[k] = rewards_[r];
    b.next_states.row(k) = next_states_.row(r);
    b.dones[k] = dones_[r];
  }
  return b;
}

}  // namespace wave::agent

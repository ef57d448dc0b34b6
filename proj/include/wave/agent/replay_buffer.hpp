#pragma once

#include "wave/nn/tensor.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace wave::agent {

struct Transition {
  Vector state;
  Vector action;
  double reward = 0.0;
  Vector next_state;
  bool done = false;
};

/// Row i of every member belongs to the same transition.
struct Batch {
  Matrix states;
  Matrix actions;
  Vector rewards;
  Matrix next_states;
  Vector dones;

  Eigen::Index size() const { return states.rows(); }
};

/// Fixed-capacity ring of transitions with uniform sampling with replacement.
class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, std::size_t obs_dim, std::size_t act_dim, std::uint64_t seed);

  /// Throws std::invalid_argument on a dimension mismatch and NumericError on
  /// non-finite entries.
  void add(const Transition& t);

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  Transition at(std::size_t i) const;

  /// Uses the buffer's own generator.
  std::vector<std::size_t> sample_indices(std::size_t n);
  std::vector<std::size_t> sample_indices(std::size_t n, std::mt19937_64& rng) const;
  Batch gather(const std::vector<std::size_t>& indices) const;
  Batch sample(std::size_t n) { return gather(sample_indices(n)); }

 private:
  std::size_t capacity_;
  std::size_t size_ = 0;
  std::size_t next_ = 0;
  Matrix states_;
  Matrix actions_;
  Vector rewards_;
  Matrix next_states_;
  Vector dones_;
  std::mt19937_64 rng_;
};

}  // namespace wave::agent

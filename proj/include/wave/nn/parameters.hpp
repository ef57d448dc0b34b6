#pragma once

#include "wave/nn/tensor.hpp"

#include <filesystem>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace wave::nn {

/// Named tensors in fixed insertion order.
class ParameterSet {
 public:
  using Entry = std::pair<std::string, Tensor>;

  void add(std::string name, Tensor value);

  bool contains(const std::string& name) const { return index_.contains(name); }
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::size_t element_count() const;

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  Entry& entry(std::size_t i) { return entries_[i]; }
  const Entry& entry(std::size_t i) const { return entries_[i]; }

  /// True when both sets hold the same names in the same order with equal shapes.
  bool same_layout(const ParameterSet& other) const;
  /// Throws std::invalid_argument describing the first name or shape mismatch.
  void require_same_layout(const ParameterSet& other, std::string_view context) const;

  /// Zero-valued set with this layout.
  ParameterSet zeros_like() const;

  Vector flatten() const;
  void unflatten(const Eigen::Ref<const Vector>& flat);

  double squared_norm() const;
  bool all_finite() const;

  friend bool operator==(const ParameterSet& a, const ParameterSet& b) {
    return a.entries_ == b.entries_;
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Polyak averaging: target' = (1 - tau) * target + tau * source, elementwise.
ParameterSet soft_update(const ParameterSet& target, const ParameterSet& source, double tau);
void soft_update_in_place(ParameterSet& target, const ParameterSet& source, double tau);

// Checkpoint file layout (all integers and floats little-endian):
//   magic "WAVEPARM", u32 version (=1), u64 record count, then per record
//   u32 name length, name bytes, u32 rank, rank x u64 extents, f64 data.
void save_checkpoint(const ParameterSet& params, const std::filesystem::path& path);
ParameterSet load_checkpoint(const std::filesystem::path& path);

std::string encode_checkpoint(const ParameterSet& params);
ParameterSet decode_checkpoint(std::string_view bytes);

}  // namespace wave::nn

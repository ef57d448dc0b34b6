#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace wave {

/// Row-major dense matrix, the storage layout shared by tensors and the tape.
template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Matrix = RowMatrix<double>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// Thrown when a NaN or Inf shows up where only finite values are allowed.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace nn {

/// Dense n-dimensional array of doubles in row-major order. Storage is aligned
/// like Eigen's own, so vectorized kernels take the same path on every run.
///
/// The matrix view folds every leading dimension into rows and keeps the last
/// dimension as columns, which is the only layout the networks need.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor from_matrix(const Eigen::Ref<const Matrix>& m);
  static Tensor row(std::initializer_list<double> values);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t last_dim() const { return shape_.empty() ? 1 : shape_.back(); }
  std::size_t rows() const { return last_dim() == 0 ? 0 : size() / last_dim(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  Eigen::Map<Matrix> matrix();
  Eigen::Map<const Matrix> matrix() const;

  bool all_finite() const;
  /// Throws NumericError naming `what` if any entry is NaN or Inf.
  void check_finite(std::string_view what) const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double, Eigen::aligned_allocator<double>> data_;
};

std::string shape_string(const std::vector<std::size_t>& shape);

}  // namespace nn
}  // namespace wave

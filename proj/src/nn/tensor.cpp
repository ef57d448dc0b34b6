#include "wave/nn/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

namespace wave::nn {

namespace {

std::size_t element_count(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(element_count(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(data.begin(), data.end()) {
  if (element_count(shape_) != data_.size()) {
    throw std::invalid_argument("tensor shape " + shape_string(shape_) + " does not hold " +
                                std::to_string(data_.size()) + " elements");
  }
}

Tensor Tensor::from_matrix(const Eigen::Ref<const Matrix>& m) {
  Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  t.matrix() = m;
  return t;
}

Tensor Tensor::row(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

Eigen::Map<Matrix> Tensor::matrix() {
  return {data_.data(), static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(last_dim())};
}

Eigen::Map<const Matrix> Tensor::matrix() const {
  return {data_.data(), static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(last_dim())};
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Tensor::check_finite(std::string_view what) const {
  if (!all_finite()) throw NumericError("non-finite value in " + std::string(what));
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

}  // namespace wave::nn

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace uniada {

/// Dense n-dimensional array of 32-bit floats, row-major.
/// Construction validates that the extents match the payload and that every
/// value is finite.
class Tensor {
public:
  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::vector<std::size_t> shape, std::vector<float> data);

  static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<std::size_t> shape, float value);

  const std::vector<std::size_t> &shape() const { return shape_; }
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  const std::vector<float> &data() const { return data_; }
  std::vector<float> &data() { return data_; }

  float operator[](std::size_t i) const { return data_[i]; }
  float &operator[](std::size_t i) { return data_[i]; }

  bool same_shape(const Tensor &other) const { return shape_ == other.shape_; }

  /// Throws if any value is NaN or infinite.
  void check_finite(const std::string &context) const;

private:
  std::vector<std::size_t> shape_;
  std::vector<float> data_;
};

std::size_t shape_numel(const std::vector<std::size_t> &shape);
std::string shape_to_string(const std::vector<std::size_t> &shape);

/// Euclidean norm of the flattened data. Accumulated in 64-bit, rounded to
/// 32-bit on return.
float l2_norm(const Tensor &t);

float linf_norm(const Tensor &t);

} // namespace uniada

#include "uniada/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace uniada {

std::size_t shape_numel(const std::vector<std::size_t> &shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) {
    if (d == 0)
      throw std::invalid_argument("tensor shape has a zero extent");
    n *= d;
  }
  return n;
}

std::string shape_to_string(const std::vector<std::size_t> &shape) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape.size(); ++i)
    os << (i ? "," : "") << shape[i];
  os << ")";
  return os.str();
}

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_numel(shape_), 0.0f) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_numel(shape_) != data_.size())
    throw std::invalid_argument("tensor shape " + shape_to_string(shape_) + " does not match " +
                                std::to_string(data_.size()) + " values");
  check_finite("tensor construction");
}

Tensor Tensor::full(std::vector<std::size_t> shape, float value) {
  Tensor t(std::move(shape));
  for (float &v : t.data_)
    v = value;
  t.check_finite("tensor fill");
  return t;
}

void Tensor::check_finite(const std::string &context) const {
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i]))
      throw std::invalid_argument(context + ": non-finite value at flat index " + std::to_string(i));
  }
}

float l2_norm(const Tensor &t) {
  double acc = 0.0;
  for (float v : t.data())
    acc += static_cast<double>(v) * static_cast<double>(v);
  return static_cast<float>(std::sqrt(acc));
}

float linf_norm(const Tensor &t) {
  float m = 0.0f;
  for (float v : t.data())
    m = std::max(m, std::fabs(v));
  return m;
}

} // namespace uniada

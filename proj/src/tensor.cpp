#include "otkd/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "otkd/error.hpp"

namespace otkd {

Tensor3::Tensor3(std::size_t channels, std::size_t height, std::size_t width, double fill)
    : c_(channels), h_(height), w_(width), data_(channels * height * width, fill) {}

Tensor3::Tensor3(std::size_t channels, std::size_t height, std::size_t width, std::vector<double> values)
    : c_(channels), h_(height), w_(width), data_(std::move(values)) {
  if (data_.size() != c_ * h_ * w_) {
    fail(ErrorCode::ShapeMismatch, "tensor data has " + std::to_string(data_.size()) + " values, expected " +
                                       std::to_string(c_ * h_ * w_));
  }
}

void Tensor3::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor3::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace otkd

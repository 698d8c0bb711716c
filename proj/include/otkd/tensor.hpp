#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace otkd {

// Dense C x H x W array of doubles, channel-major then row-major.
class Tensor3 {
 public:
  Tensor3() = default;
  Tensor3(std::size_t channels, std::size_t height, std::size_t width, double fill = 0.0);
  Tensor3(std::size_t channels, std::size_t height, std::size_t width, std::vector<double> values);

  std::size_t channels() const noexcept { return c_; }
  std::size_t height() const noexcept { return h_; }
  std::size_t width() const noexcept { return w_; }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t plane() const noexcept { return h_ * w_; }
  bool same_shape(const Tensor3& other) const noexcept {
    return c_ == other.c_ && h_ == other.h_ && w_ == other.w_;
  }

  double& operator()(std::size_t c, std::size_t y, std::size_t x) { return data_[(c * h_ + y) * w_ + x]; }
  double operator()(std::size_t c, std::size_t y, std::size_t x) const { return data_[(c * h_ + y) * w_ + x]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  std::span<double> channel(std::size_t c) { return std::span<double>(data_).subspan(c * plane(), plane()); }
  std::span<const double> channel(std::size_t c) const {
    return std::span<const double>(data_).subspan(c * plane(), plane());
  }

  void fill(double value);
  bool all_finite() const;

  friend bool operator==(const Tensor3&, const Tensor3&) = default;

 private:
  std::size_t c_ = 0;
  std::size_t h_ = 0;
  std::size_t w_ = 0;
  std::vector<double> data_;
};

}  // namespace otkd

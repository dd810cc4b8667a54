#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "latax/error.hpp"
#include "latax/linalg.hpp"

namespace latax {

/// h x w grayscale raster, row-major, finite values. No range restriction:
/// analysis paths stay linear, clamping happens on export only.
class ImageGrid {
 public:
  ImageGrid(std::size_t h, std::size_t w, std::vector<double> pixels)
      : h_(h), w_(w), pixels_(std::move(pixels)) {
    if (h_ == 0 || w_ == 0) throw DimensionError("ImageGrid: h and w must be >= 1");
    if (pixels_.size() != h_ * w_) {
      throw DimensionError("ImageGrid: expected " + std::to_string(h_ * w_) + " pixels, got " +
                           std::to_string(pixels_.size()));
    }
    detail::require_finite(pixels_, "ImageGrid");
  }

  static ImageGrid filled(std::size_t h, std::size_t w, double value) {
    return ImageGrid(h, w, std::vector<double>(h * w, value));
  }

  std::size_t height() const noexcept { return h_; }
  std::size_t width() const noexcept { return w_; }
  std::size_t size() const noexcept { return pixels_.size(); }
  double operator()(std::size_t r, std::size_t c) const noexcept { return pixels_[r * w_ + c]; }
  std::span<const double> pixels() const noexcept { return pixels_; }
  const std::vector<double>& data() const noexcept { return pixels_; }

  Vec flatten() const { return Vec(pixels_); }

  ImageGrid clamped(double lo = 0.0, double hi = 1.0) const {
    std::vector<double> p(pixels_);
    for (double& x : p) x = std::clamp(x, lo, hi);
    return ImageGrid(h_, w_, std::move(p));
  }

  friend bool operator==(const ImageGrid&, const ImageGrid&) = default;

 private:
  std::size_t h_;
  std::size_t w_;
  std::vector<double> pixels_;
};

inline void require_same_shape(const ImageGrid& a, const ImageGrid& b, const char* what) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw DimensionError(std::string(what) + ": image shapes differ (" +
                         std::to_string(a.height()) + "x" + std::to_string(a.width()) + " vs " +
                         std::to_string(b.height()) + "x" + std::to_string(b.width()) + ")");
  }
}

}  // namespace latax

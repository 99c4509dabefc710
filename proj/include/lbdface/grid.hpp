#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lbdface/error.hpp"

namespace lbdface {

// Width x height pair. Used for feature dims, windows and image sizes.
struct Size {
  int width = 0;
  int height = 0;

  friend bool operator==(const Size&, const Size&) = default;
};

std::string to_string(Size size);

// Parses "WxH" (e.g. "40x40"). A bare integer "N" means NxN.
Size parse_size(const std::string& text);

/// Row-major rectangular grid of finite values.
///
/// Row index `row` runs over the height, `col` over the width. Accessors
/// with a `clamped` suffix implement replicate padding, which is the border
/// policy used by every filter in the library.
template <typename T>
class Grid {
 public:
  using value_type = T;

  Grid() = default;

  Grid(int width, int height, std::vector<T> values)
      : width_(width), height_(height), values_(std::move(values)) {
    if (width < 1 || height < 1) {
      throw ArgumentError("grid dimensions must be >= 1, got " +
                          std::to_string(width) + "x" + std::to_string(height));
    }
    if (values_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
      throw ArgumentError("grid value count does not match " + std::to_string(width) + "x" +
                          std::to_string(height));
    }
    for (T v : values_) {
      if (!std::isfinite(v)) throw ArgumentError("grid values must be finite");
    }
  }

  static Grid filled(int width, int height, T value) {
    return Grid(width, height,
                std::vector<T>(static_cast<std::size_t>(std::max(width, 0)) *
                                   static_cast<std::size_t>(std::max(height, 0)),
                               value));
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  Size size() const noexcept { return {width_, height_}; }
  std::size_t pixel_count() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  T at(int row, int col) const { return values_[index(row, col)]; }

  T clamped(int row, int col) const {
    row = std::clamp(row, 0, height_ - 1);
    col = std::clamp(col, 0, width_ - 1);
    return values_[index(row, col)];
  }

  std::span<const T> values() const& noexcept { return values_; }
  // Temporaries hand over their storage so range-for over f().values() is safe.
  std::vector<T> values() && noexcept { return std::move(values_); }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  std::size_t index(int row, int col) const noexcept {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(col);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<T> values_;
};

// Real-valued intermediate plane (filter responses, local deviations).
using Plane = Grid<double>;

/// Grayscale image with intensities on a normalized [0, 1] scale.
///
/// Values above 1 are accepted (scaled copies are legitimate inputs to the
/// feature pipeline); negative values are not.
class Image : public Grid<double> {
 public:
  Image() = default;
  Image(int width, int height, std::vector<double> pixels);

  static Image filled(int width, int height, double value);

  Image scaled(double factor) const;
};

}  // namespace lbdface

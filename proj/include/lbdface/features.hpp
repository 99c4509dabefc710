#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "lbdface/grid.hpp"

namespace lbdface {

// Sliding-window extent in pixels.
struct Window {
  int rows = 1;
  int cols = 1;

  friend bool operator==(const Window&, const Window&) = default;
};

/// Texture filter window with odd dimensions, applied in correlation form:
/// out(i, j) = sum_{s,t} w(s, t) * in(i + s, j + t), s and t centered on 0.
class Kernel {
 public:
  Kernel(int rows, int cols, std::vector<double> weights);

  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  int row_radius() const noexcept { return (rows_ - 1) / 2; }
  int col_radius() const noexcept { return (cols_ - 1) / 2; }

  // s in [-row_radius, row_radius], t in [-col_radius, col_radius].
  double weight(int s, int t) const {
    return weights_[static_cast<std::size_t>(s + row_radius()) * cols_ + (t + col_radius())];
  }

  std::span<const double> weights() const noexcept { return weights_; }

  friend bool operator==(const Kernel&, const Kernel&) = default;

 private:
  int rows_;
  int cols_;
  std::vector<double> weights_;
};

class FilterBank {
 public:
  explicit FilterBank(std::vector<Kernel> kernels);

  // Six 3x3 kernels: averaging, horizontal, vertical and two diagonal
  // differences, and a 4-neighbour Laplacian.
  static FilterBank default_bank();

  std::size_t size() const noexcept { return kernels_.size(); }
  const Kernel& operator[](std::size_t p) const { return kernels_[p]; }
  const std::vector<Kernel>& kernels() const noexcept { return kernels_; }

  friend bool operator==(const FilterBank&, const FilterBank&) = default;

 private:
  std::vector<Kernel> kernels_;
};

/// Filter bank text format:
///
///     # optional comment lines
///     P ROWS COLS
///     <ROWS lines of COLS decimal coefficients>
///     <blank line>
///     ... repeated P times
FilterBank parse_filter_bank(std::string_view text);
FilterBank load_filter_bank(const std::filesystem::path& path);
std::string format_filter_bank(const FilterBank& bank);

struct FeatureParams {
  Size feature_dims{60, 60};
  Window stddev_window{3, 3};
  Window norm_window{30, 30};
  double epsilon = 1e-6;

  void validate() const;

  friend bool operator==(const FeatureParams&, const FeatureParams&) = default;
};

using FeaturePlane = Grid<float>;

/// The P normalized spatial-change planes of one image, in bank order.
/// Values are stored in binary32, the same precision the feature cache uses.
class FeatureVector {
 public:
  FeatureVector() = default;
  explicit FeatureVector(std::vector<FeaturePlane> channels);

  std::size_t channel_count() const noexcept { return channels_.size(); }
  const FeaturePlane& channel(std::size_t p) const { return channels_[p]; }
  const std::vector<FeaturePlane>& channels() const noexcept { return channels_; }
  Size size() const { return channels_.front().size(); }
  std::size_t pixel_count() const { return channels_.front().pixel_count(); }

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;

 private:
  std::vector<FeaturePlane> channels_;
};

Plane convolve(const Plane& img, const Kernel& kern);

// Population standard deviation over a window centered on each pixel.
Plane local_stddev(const Plane& plane, Window window);

// Mean over a window anchored at each pixel; even extents reach one further
// toward increasing index. Replicate padding.
Plane local_mean(const Plane& plane, Window window);

// plane / max(local_mean, epsilon). Windows larger than the plane are
// clipped to the plane's dimensions.
Plane local_mean_normalize(const Plane& plane, Window window, double epsilon);

FeatureVector extract_features(const Image& img, const FilterBank& bank,
                               const FeatureParams& params);

}  // namespace lbdface

#pragma once

#include <Eigen/Core>

#include <cmath>
#include <concepts>
#include <functional>
#include <optional>
#include <vector>

#include "surfel/types.hpp"

namespace surfel {

using ImageArray = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Grayscale image, intensities in [0, 1], indexed (row = y, col = x).
class GrayImage {
 public:
  GrayImage() = default;
  GrayImage(int width, int height, double fill = 0.0) : data_(ImageArray::Constant(height, width, fill)) {}
  explicit GrayImage(ImageArray data) : data_(std::move(data)) {}

  int width() const { return static_cast<int>(data_.cols()); }
  int height() const { return static_cast<int>(data_.rows()); }
  bool empty() const { return data_.size() == 0; }

  double operator()(int x, int y) const { return data_(y, x); }
  double& operator()(int x, int y) { return data_(y, x); }

  const ImageArray& array() const { return data_; }
  ImageArray& array() { return data_; }

  /// Bilinear interpolation; nullopt outside [0, w-1] x [0, h-1].
  std::optional<double> sample(double x, double y) const;

  /// Central-difference gradient (I(x+1) - I(x-1)) / 2 through bilinear
  /// samples; nullopt closer than one pixel to the border.
  std::optional<Vec2d> gradient(double x, double y) const;

 private:
  ImageArray data_;
};

inline std::optional<double> bilinear_sample(const GrayImage& img, double x, double y) { return img.sample(x, y); }
inline std::optional<Vec2d> image_gradient(const GrayImage& img, double x, double y) { return img.gradient(x, y); }

/// Smooth image given by a closed-form intensity and gradient. Used where
/// an exact derivative is needed, e.g. finite-difference Jacobian checks.
struct AnalyticImage {
  std::function<double(double, double)> intensity;
  std::function<Vec2d(double, double)> grad;
  double width = 1e9;
  double height = 1e9;

  std::optional<double> sample(double x, double y) const {
    if (!(x >= 0.0 && y >= 0.0 && x <= width - 1 && y <= height - 1)) return std::nullopt;
    return intensity(x, y);
  }
  std::optional<Vec2d> gradient(double x, double y) const {
    if (!(x >= 0.0 && y >= 0.0 && x <= width - 1 && y <= height - 1)) return std::nullopt;
    return grad(x, y);
  }
};

/// Sum-of-sinusoids image with a known gradient.
AnalyticImage make_sinusoid_image(unsigned seed, int width, int height, int terms = 6);

template <typename T>
concept ImageSampler = requires(const T& img, double x, double y) {
  { img.sample(x, y) } -> std::same_as<std::optional<double>>;
  { img.gradient(x, y) } -> std::same_as<std::optional<Vec2d>>;
};

/// Multi-scale image, level 0 finest; each level halves the previous one.
struct ImagePyramid {
  std::vector<GrayImage> levels;
  int size() const { return static_cast<int>(levels.size()); }
  const GrayImage& level(int k) const { return levels.at(k); }
};

/// 2x2 box-filtered halving; odd trailing rows/columns average what exists.
GrayImage downsample2(const GrayImage& img);

ImagePyramid build_pyramid(const GrayImage& img, int levels);

/// Depth in scene units with a validity mask (invalid stored as 0).
class DepthMap {
 public:
  DepthMap() = default;
  DepthMap(int width, int height) : depth_(ImageArray::Zero(height, width)) {}

  int width() const { return static_cast<int>(depth_.cols()); }
  int height() const { return static_cast<int>(depth_.rows()); }

  bool valid(int x, int y) const {
    return x >= 0 && y >= 0 && x < width() && y < height() && std::isfinite(depth_(y, x)) && depth_(y, x) > 0.0;
  }
  double operator()(int x, int y) const { return depth_(y, x); }
  void set(int x, int y, double d) { depth_(y, x) = d; }
  void invalidate(int x, int y) { depth_(y, x) = 0.0; }

  const ImageArray& array() const { return depth_; }

 private:
  ImageArray depth_;
};

}  // namespace surfel

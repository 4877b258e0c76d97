#pragma once

// Photometric residuals of a surfel against an image,
//
//   r(u, v) = gain * I(pi(T_cw * S(u, v))) + bias - T(u, v),
//
// saturated at +-cap, with analytic Jacobians for every parameter block.

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <vector>

#include "surfel/camera.hpp"
#include "surfel/image.hpp"
#include "surfel/lie.hpp"
#include "surfel/surfel.hpp"

namespace surfel {

inline constexpr double kDefaultSaturation = 0.24;

/// Parameter blocks a Jacobian can be requested for. Columns are laid out in
/// this order: translation(3) rotation(3) deformation(3: F11, F12, F22)
/// camera(6: translation, rotation) gain/bias(2).
enum class Block : unsigned {
  Translation = 1u << 0,
  Rotation = 1u << 1,
  Deformation = 1u << 2,
  Camera = 1u << 3,
  GainBias = 1u << 4,
};

class ParameterSet {
 public:
  constexpr ParameterSet() = default;
  constexpr ParameterSet(std::initializer_list<Block> blocks) {
    for (Block b : blocks) mask_ |= static_cast<unsigned>(b);
  }

  constexpr bool has(Block b) const { return (mask_ & static_cast<unsigned>(b)) != 0; }
  constexpr ParameterSet with(Block b) const {
    ParameterSet p = *this;
    p.mask_ |= static_cast<unsigned>(b);
    return p;
  }

  static constexpr int width(Block b) {
    switch (b) {
      case Block::Translation:
      case Block::Rotation:
      case Block::Deformation: return 3;
      case Block::Camera: return 6;
      case Block::GainBias: return 2;
    }
    return 0;
  }

  /// Column offset of block b, or -1 when inactive.
  constexpr int offset(Block b) const {
    if (!has(b)) return -1;
    int off = 0;
    for (Block o : kOrder) {
      if (o == b) return off;
      if (has(o)) off += width(o);
    }
    return -1;
  }

  constexpr int columns() const {
    int n = 0;
    for (Block o : kOrder) {
      if (has(o)) n += width(o);
    }
    return n;
  }

 private:
  static constexpr Block kOrder[] = {Block::Translation, Block::Rotation, Block::Deformation, Block::Camera,
                                     Block::GainBias};
  unsigned mask_ = 0;
};

struct ResidualBlock {
  Eigen::VectorXd residuals;
  Eigen::MatrixXd jacobian;
  /// Sample reprojected in front of the camera and inside the image.
  std::vector<std::uint8_t> valid;
  std::vector<std::uint8_t> saturated;
  /// I at the reprojection (zero for invalid samples).
  Eigen::VectorXd intensities;
  double saturation_cap = kDefaultSaturation;

  int size() const { return static_cast<int>(residuals.size()); }
  int valid_count() const;
  double valid_fraction() const { return size() == 0 ? 0.0 : double(valid_count()) / size(); }
  /// RMS of residuals over valid samples.
  double rms() const;
  /// Sum of squared residuals; invalid samples contribute cap^2.
  double cost() const { return residuals.squaredNorm(); }
};

/// Evaluates residuals (and optionally the Jacobian of the active blocks).
/// Invalid samples get residual `cap` and a zero row; saturated samples are
/// clamped to +-cap with a zero row.
template <ImageSampler Image>
ResidualBlock photometric_block(const Surfel& surfel, const SurfelStated& state, const Posed& camera,
                                const Image& image, const Intrinsics& k, const TexturePatch& texture, double cap,
                                ParameterSet active, bool with_jacobian) {
  const int n = texture.size();
  ResidualBlock out;
  out.saturation_cap = cap;
  out.residuals.setZero(n);
  out.intensities.setZero(n);
  out.valid.assign(n, 0);
  out.saturated.assign(n, 0);
  if (with_jacobian) out.jacobian.setZero(n, active.columns());

  const Mat32d tangent = state.rotation * surfel.rest_jacobian;
  const Vec3d center = surfel.rest_position + state.translation;
  const int c_t = active.offset(Block::Translation);
  const int c_r = active.offset(Block::Rotation);
  const int c_f = active.offset(Block::Deformation);
  const int c_c = active.offset(Block::Camera);
  const int c_g = active.offset(Block::GainBias);

  for (int i = 0; i < n; ++i) {
    const Vec2d uv = texture.coords.col(i);
    const Vec2d fuv = state.deform * uv;
    const Vec3d world = center + tangent * fuv;
    const Vec3d xc = camera.apply(world);
    out.residuals(i) = cap;
    const auto px = project(k, xc);
    if (!px) continue;
    const auto value = image.sample(px->x(), px->y());
    const auto grad = image.gradient(px->x(), px->y());
    if (!value || !grad) continue;
    out.valid[i] = 1;
    out.intensities(i) = *value;
    const double r = state.gain * *value + state.bias - texture.values(i);
    if (std::abs(r) > cap) {
      out.saturated[i] = 1;
      out.residuals(i) = r > 0 ? cap : -cap;
      continue;
    }
    out.residuals(i) = r;
    if (!with_jacobian) continue;

    const Mat23d jp = *projection_jacobian(k, xc);
    const Eigen::RowVector3d dr_dxc = state.gain * grad->transpose() * jp;
    const Eigen::RowVector3d dr_dworld = dr_dxc * camera.rotation;
    if (c_t >= 0) out.jacobian.block<1, 3>(i, c_t) = dr_dworld;
    if (c_r >= 0) {
      // R <- R exp(w): d(R exp(w) a)/dw = -R [a]_x with a = J0 F uv.
      const Vec3d a = surfel.rest_jacobian * fuv;
      out.jacobian.block<1, 3>(i, c_r) = -dr_dworld * state.rotation * skew(a);
    }
    if (c_f >= 0) {
      Eigen::Matrix<double, 2, 3> df;
      df << uv.x(), uv.y(), 0.0,  //
          0.0, uv.x(), uv.y();
      out.jacobian.block<1, 3>(i, c_f) = dr_dworld * tangent * df;
    }
    if (c_c >= 0) {
      // T_cw <- exp(zeta) T_cw: d(xc)/d(zeta) = [I, -[xc]_x].
      out.jacobian.block<1, 3>(i, c_c) = dr_dxc;
      out.jacobian.block<1, 3>(i, c_c + 3) = -dr_dxc * skew(xc);
    }
    if (c_g >= 0) {
      out.jacobian(i, c_g) = *value;
      out.jacobian(i, c_g + 1) = 1.0;
    }
  }
  return out;
}

template <ImageSampler Image>
ResidualBlock photometric_residuals(const Surfel& surfel, const SurfelStated& state, const Posed& camera,
                                    const Image& image, const Intrinsics& k, const TexturePatch& texture,
                                    double cap = kDefaultSaturation) {
  return photometric_block(surfel, state, camera, image, k, texture, cap, ParameterSet{}, false);
}

template <ImageSampler Image>
Eigen::MatrixXd residual_jacobian(const Surfel& surfel, const SurfelStated& state, const Posed& camera,
                                  const Image& image, const Intrinsics& k, const TexturePatch& texture,
                                  ParameterSet active, double cap = kDefaultSaturation) {
  return photometric_block(surfel, state, camera, image, k, texture, cap, active, true).jacobian;
}

/// Samples the reference image on the surfel grid at rest. Throws OutOfImage
/// if any grid node falls outside.
template <ImageSampler Image>
TexturePatch extract_texture(const Vec3d& rest_position, const Mat32d& rest_jacobian, const Image& image,
                             const Posed& camera, const Intrinsics& k, int half_extent, double spacing = 1.0) {
  TexturePatch patch;
  patch.half_extent = half_extent;
  patch.spacing = spacing;
  patch.coords = texture_grid(half_extent, spacing);
  patch.values.resize(patch.coords.cols());
  for (int i = 0; i < patch.coords.cols(); ++i) {
    const Vec3d xc = camera.apply(rest_position + rest_jacobian * patch.coords.col(i));
    const auto px = project(k, xc);
    const auto v = px ? image.sample(px->x(), px->y()) : std::nullopt;
    if (!v) throw Error(ErrorCode::OutOfImage, "surfel texture leaves the reference image");
    patch.values(i) = *v;
  }
  return patch;
}

template <ImageSampler Image>
TexturePatch extract_texture(const Surfel& surfel, const Image& image, const Posed& camera, const Intrinsics& k,
                             int half_extent, double spacing = 1.0) {
  return extract_texture(surfel.rest_position, surfel.rest_jacobian, image, camera, k, half_extent, spacing);
}

/// Builds a surfel at integer reference pixel `pixel`: geometry from depth,
/// one texture per pyramid level. Level k keeps the node count and spaces
/// nodes 2^k local units apart, i.e. one level-k pixel, halving the spacing
/// where the wider patch would leave the image. Throws InvalidDepth, or
/// OutOfImage when the finest patch does not fit.
Surfel make_surfel(int id, const DepthMap& depth, const Intrinsics& k, const Eigen::Vector2i& pixel,
                   const ImagePyramid& reference, const Posed& reference_pose, int half_extent);

struct GainBias {
  double gain = 1.0;
  double bias = 0.0;
  bool degenerate = false;
};

/// Least-squares fit of gain * I + bias ~= T. With var(I) < 1e-12 returns
/// gain 1, bias mean(T - I) and flags the fit as degenerate.
GainBias estimate_gain_bias(const Eigen::VectorXd& texture, const Eigen::VectorXd& intensities);

/// Zero-mean normalized cross-correlation; 0 for degenerate signals.
double zncc(const Eigen::VectorXd& texture, const Eigen::VectorXd& intensities);

/// Texture and reprojected intensity of the valid samples of a block.
std::pair<Eigen::VectorXd, Eigen::VectorXd> valid_samples(const ResidualBlock& block, const TexturePatch& texture);

}  // namespace surfel

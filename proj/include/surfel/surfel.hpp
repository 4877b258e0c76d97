#pragma once

// Surfel parametrization: a rest point plus a tangent basis, moved per frame
// by a translation, a rotation of the tangent basis and a symmetric 2x2
// deformation tensor:
//
//   S(u, v) = (X0 + t) + R * J0 * F * [u; v]

#include <Eigen/Core>

#include <span>
#include <string>
#include <vector>

#include "surfel/camera.hpp"
#include "surfel/image.hpp"
#include "surfel/lie.hpp"
#include "surfel/types.hpp"

namespace surfel {

enum class DeformationModel { Isometry, Conformal, Equireal, General };

/// Equireal tensor variants: the published [[a, b], [b, (1 + b)/a]] or the
/// determinant-one [[a, b], [b, (1 + b^2)/a]].
enum class EquirealForm { Published, UnitDeterminant };

int deform_param_count(DeformationModel model);
std::string to_string(DeformationModel model);
DeformationModel parse_deformation_model(const std::string& name);

/// Builds F from the model's free parameters. Throws BadArity / Singular.
Mat2d materialize_deform(DeformationModel model, std::span<const double> params,
                         EquirealForm form = EquirealForm::Published);

/// Inverse of materialize_deform for tensors the model can represent.
Eigen::VectorXd deform_params(DeformationModel model, const Mat2d& f);

/// d(F11, F12, F22) / d(params), a 3 x deform_param_count(model) matrix.
Eigen::MatrixXd deform_param_jacobian(DeformationModel model, std::span<const double> params,
                                      EquirealForm form = EquirealForm::Published);

/// Reference texture on a symmetric uniform grid of local coordinates.
struct TexturePatch {
  int half_extent = 0;
  double spacing = 1.0;     // local units between grid nodes
  Eigen::Matrix2Xd coords;  // (u, v) per sample
  Eigen::VectorXd values;   // T(u, v)

  int size() const { return static_cast<int>(values.size()); }
};

/// Symmetric uniform grid, row-major in v then u.
Eigen::Matrix2Xd texture_grid(int half_extent, double spacing = 1.0);

struct Surfel {
  int id = 0;
  Vec3d rest_position = Vec3d::Zero();
  /// Scene units per local unit; one local unit is one reference-image pixel
  /// at the anchor.
  Mat32d rest_jacobian = Mat32d::Zero();
  Vec2d anchor_pixel = Vec2d::Zero();
  Vec2d anchor_normalized = Vec2d::Zero();
  /// One patch per pyramid level, extracted from the reference pyramid.
  std::vector<TexturePatch> textures;

  const TexturePatch& texture(int level = 0) const { return textures.at(level); }
};

template <typename Scalar>
struct SurfelState {
  Vec3<Scalar> translation = Vec3<Scalar>::Zero();
  Mat3<Scalar> rotation = Mat3<Scalar>::Identity();
  Mat2<Scalar> deform = Mat2<Scalar>::Identity();
  Scalar gain = Scalar(1);
  Scalar bias = Scalar(0);

  static SurfelState Identity() { return {}; }

  template <typename Other>
  SurfelState<Other> cast() const {
    SurfelState<Other> out;
    out.translation = translation.template cast<Other>();
    out.rotation = rotation.template cast<Other>();
    out.deform = deform.template cast<Other>();
    out.gain = Other(gain);
    out.bias = Other(bias);
    return out;
  }
};

using SurfelStated = SurfelState<double>;

/// World point of local coordinate (u, v).
template <typename Scalar>
Vec3<Scalar> surfel_point(const Vec3<Scalar>& rest_position, const Mat32<Scalar>& rest_jacobian,
                          const SurfelState<Scalar>& state, const Vec2<Scalar>& local) {
  return (rest_position + state.translation) + state.rotation * (rest_jacobian * (state.deform * local));
}

inline Vec3d surfel_point(const Surfel& s, const SurfelStated& state, const Vec2d& local) {
  return surfel_point<double>(s.rest_position, s.rest_jacobian, state, local);
}

/// Surfel centre X0 + t.
inline Vec3d surfel_center(const Surfel& s, const SurfelStated& state) { return s.rest_position + state.translation; }

/// State producing mu * S(u, v) for every (u, v): identical projections for a
/// camera at the origin.
SurfelStated scale_surfel(const Surfel& s, const SurfelStated& state, double mu);

/// Rest point and tangent basis per unit of normalized retina coordinates,
/// in the camera frame of the depth map.
struct SurfelGeometry {
  Vec3d position;
  Mat32d jacobian;
};

/// Initializes a surfel at integer pixel (x, y) from a depth map. Depth
/// partials are central differences over one pixel. Throws InvalidDepth.
SurfelGeometry init_surfel(const DepthMap& depth, const Intrinsics& k, int x, int y);

/// Rescales a normalized-coordinate tangent basis to one local unit per pixel.
Mat32d to_pixel_units(const Mat32d& normalized_jacobian, const Intrinsics& k);

}  // namespace surfel

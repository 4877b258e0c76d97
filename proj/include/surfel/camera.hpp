#pragma once

#include <cmath>
#include <optional>

#include "surfel/types.hpp"

namespace surfel {

inline constexpr double kMinDepth = 1e-6;

/// Pinhole intrinsics in pixels. Pixel centres sit at integer coordinates.
struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;

  /// Intrinsics of pyramid level `level` built by 2x2 box averaging: level-k
  /// pixel i covers level-0 pixels [2^k i, 2^k (i+1)), so its centre is at
  /// 2^k (i + 0.5) - 0.5.
  Intrinsics at_level(int level) const {
    const double s = std::ldexp(1.0, -level);
    return {fx * s, fy * s, (cx + 0.5) * s - 0.5, (cy + 0.5) * s - 0.5};
  }

  Vec2d normalized(const Vec2d& px) const { return {(px.x() - cx) / fx, (px.y() - cy) / fy}; }

  Vec3d unproject(const Vec2d& px, double depth) const {
    const Vec2d n = normalized(px);
    return depth * Vec3d(n.x(), n.y(), 1.0);
  }
};

template <typename Scalar>
std::optional<Vec2<Scalar>> project(const Intrinsics& k, const Vec3<Scalar>& xc,
                                    double min_depth = kMinDepth) {
  if (!(xc.z() > Scalar(min_depth))) return std::nullopt;
  return Vec2<Scalar>(Scalar(k.fx) * xc.x() / xc.z() + Scalar(k.cx),
                      Scalar(k.fy) * xc.y() / xc.z() + Scalar(k.cy));
}

/// Throwing variant of project().
inline Vec2d project_or_throw(const Intrinsics& k, const Vec3d& xc) {
  auto p = project(k, xc);
  if (!p) throw Error(ErrorCode::BehindCamera, "point has non-positive depth");
  return *p;
}

inline Vec2d normalized(const Intrinsics& k, const Vec2d& px) { return k.normalized(px); }

/// d(pixel)/d(camera-frame point).
template <typename Scalar>
std::optional<Mat23<Scalar>> projection_jacobian(const Intrinsics& k, const Vec3<Scalar>& xc,
                                                 double min_depth = kMinDepth) {
  if (!(xc.z() > Scalar(min_depth))) return std::nullopt;
  const Scalar iz = Scalar(1) / xc.z();
  const Scalar iz2 = iz * iz;
  Mat23<Scalar> j;
  j << Scalar(k.fx) * iz, Scalar(0), -Scalar(k.fx) * xc.x() * iz2,  //
      Scalar(0), Scalar(k.fy) * iz, -Scalar(k.fy) * xc.y() * iz2;
  return j;
}

}  // namespace surfel

#pragma once

// Rotation and rigid-motion utilities. Increments are 3-vectors (so3) and
// 6-vectors (se3, translation part first).

#include <Eigen/Geometry>

#include <cmath>

#include "surfel/types.hpp"

namespace surfel {

/// skew(v) * u == v.cross(u)
template <typename Scalar>
Mat3<Scalar> skew(const Vec3<Scalar>& v) {
  Mat3<Scalar> s;
  // clang-format off
  s << Scalar(0), -v.z(),     v.y(),
       v.z(),     Scalar(0), -v.x(),
      -v.y(),     v.x(),      Scalar(0);
  // clang-format on
  return s;
}

template <typename Scalar>
Mat3<Scalar> so3_exp(const Vec3<Scalar>& w) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  const Scalar theta2 = w.squaredNorm();
  const Mat3<Scalar> k = skew(w);
  if (theta2 < Scalar(1e-16)) {
    return Mat3<Scalar>::Identity() + k + Scalar(0.5) * k * k;
  }
  const Scalar theta = sqrt(theta2);
  return Mat3<Scalar>::Identity() + (sin(theta) / theta) * k +
         ((Scalar(1) - cos(theta)) / theta2) * k * k;
}

template <typename Scalar>
Vec3<Scalar> so3_log(const Mat3<Scalar>& r) {
  const Eigen::AngleAxis<Scalar> aa(r);
  return aa.angle() * aa.axis();
}

/// Rigid transform x -> rotation * x + translation.
template <typename Scalar>
struct Pose {
  Mat3<Scalar> rotation = Mat3<Scalar>::Identity();
  Vec3<Scalar> translation = Vec3<Scalar>::Zero();

  static Pose Identity() { return {}; }

  Vec3<Scalar> apply(const Vec3<Scalar>& x) const { return rotation * x + translation; }

  Pose inverse() const {
    Pose inv;
    inv.rotation = rotation.transpose();
    inv.translation = -(inv.rotation * translation);
    return inv;
  }

  Pose operator*(const Pose& other) const {
    Pose out;
    out.rotation = rotation * other.rotation;
    out.translation = rotation * other.translation + translation;
    return out;
  }

  /// Row-major 3x4 [R | t].
  Eigen::Matrix<Scalar, 3, 4> matrix3x4() const {
    Eigen::Matrix<Scalar, 3, 4> m;
    m.template leftCols<3>() = rotation;
    m.col(3) = translation;
    return m;
  }

  template <typename Other>
  Pose<Other> cast() const {
    Pose<Other> out;
    out.rotation = rotation.template cast<Other>();
    out.translation = translation.template cast<Other>();
    return out;
  }
};

using Posed = Pose<double>;

template <typename Scalar>
Pose<Scalar> pose_compose(const Pose<Scalar>& a, const Pose<Scalar>& b) {
  return a * b;
}

template <typename Scalar>
Vec3<Scalar> pose_apply(const Pose<Scalar>& p, const Vec3<Scalar>& x) {
  return p.apply(x);
}

/// Exponential map of se(3); zeta = (rho, omega).
template <typename Scalar>
Pose<Scalar> se3_exp(const Vec6<Scalar>& zeta) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  const Vec3<Scalar> rho = zeta.template head<3>();
  const Vec3<Scalar> w = zeta.template tail<3>();
  const Mat3<Scalar> k = skew(w);
  const Scalar theta2 = w.squaredNorm();
  Mat3<Scalar> v;
  if (theta2 < Scalar(1e-16)) {
    v = Mat3<Scalar>::Identity() + Scalar(0.5) * k + (Scalar(1) / Scalar(6)) * k * k;
  } else {
    const Scalar theta = sqrt(theta2);
    v = Mat3<Scalar>::Identity() + ((Scalar(1) - cos(theta)) / theta2) * k +
        ((theta - sin(theta)) / (theta2 * theta)) * k * k;
  }
  Pose<Scalar> out;
  out.rotation = so3_exp(w);
  out.translation = v * rho;
  return out;
}

/// Projects a nearly orthonormal matrix back onto SO(3).
template <typename Scalar>
Mat3<Scalar> orthonormalize(const Mat3<Scalar>& r) {
  return Eigen::Quaternion<Scalar>(r).normalized().toRotationMatrix();
}

template <typename Scalar>
Scalar orthonormality_error(const Mat3<Scalar>& r) {
  return (r.transpose() * r - Mat3<Scalar>::Identity()).cwiseAbs().maxCoeff();
}

}  // namespace surfel

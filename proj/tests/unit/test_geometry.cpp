#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "doctest.h"
#include "surfel/camera.hpp"
#include "surfel/lie.hpp"
#include "surfel/surfel.hpp"

using namespace surfel;

TEST_SUITE_BEGIN("geometry");

namespace {

Surfel random_surfel(std::mt19937& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Surfel s;
  s.rest_position = Vec3d(20 * u(rng), 20 * u(rng), 100 + 10 * u(rng));
  s.rest_jacobian = Mat32d::Random() * 0.2;
  s.rest_jacobian(0, 0) += 0.2;
  s.rest_jacobian(1, 1) += 0.2;
  return s;
}

SurfelStated random_state(std::mt19937& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  SurfelStated st;
  st.translation = Vec3d(u(rng), u(rng), u(rng)) * 3.0;
  st.rotation = so3_exp(Vec3d(Vec3d(u(rng), u(rng), u(rng)) * 0.3));
  st.deform << 1 + 0.2 * u(rng), 0.1 * u(rng), 0, 1 + 0.2 * u(rng);
  st.deform(1, 0) = st.deform(0, 1);
  return st;
}

// Depth z = a + b * xhat sampled at integer pixels.
DepthMap slanted_depth(const Intrinsics& k, double a, double b, int w, int h) {
  DepthMap d(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) d.set(x, y, a + b * (x - k.cx) / k.fx);
  return d;
}

}  // namespace

TEST_CASE("surfel_point reduces to the rest parametrization at identity") {
  std::mt19937 rng(3);
  const Surfel s = random_surfel(rng);
  const SurfelStated id = SurfelStated::Identity();
  CHECK((surfel_point(s, id, Vec2d::Zero()) - s.rest_position).norm() == 0.0);
  const Vec2d uv(3.0, -7.0);
  CHECK((surfel_point(s, id, uv) - (s.rest_position + s.rest_jacobian * uv)).norm() < 1e-12);
}

TEST_CASE("surfel_point matches an extended-precision evaluation") {
  std::mt19937 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const Surfel s = random_surfel(rng);
    const SurfelStated st = random_state(rng);
    const Vec2d uv = Vec2d::Random() * 11.0;
    const SurfelState<long double> stl = st.cast<long double>();
    const Vec3<long double> ref =
        (s.rest_position.cast<long double>() + stl.translation) +
        stl.rotation * (s.rest_jacobian.cast<long double>() * (stl.deform * uv.cast<long double>()));
    const Vec3d got = surfel_point(s, st, uv);
    for (int c = 0; c < 3; ++c) CHECK(std::abs(static_cast<long double>(got(c)) - ref(c)) < 1e-11L);
  }
}

TEST_CASE("surfel_point is affine in the local coordinates") {
  std::mt19937 rng(7);
  const Surfel s = random_surfel(rng);
  const SurfelStated st = random_state(rng);
  const Vec2d a(-4, 2);
  const Vec2d b(6, 1);
  const Vec3d pa = surfel_point(s, st, a);
  const Vec3d pb = surfel_point(s, st, b);
  const Vec3d pm = surfel_point(s, st, 0.25 * a + 0.75 * b);
  CHECK(((pm - pa).cross(pb - pa)).norm() < 1e-9);
  CHECK((pm - (0.25 * pa + 0.75 * pb)).norm() < 1e-9);
  const Mat32d linear = st.rotation * s.rest_jacobian * st.deform;
  CHECK((pb - pa - linear * (b - a)).norm() < 1e-9);
}

TEST_CASE("init_surfel on a fronto-parallel plane") {
  const Intrinsics k{500, 500, 32, 24};
  DepthMap d(64, 48);
  for (int y = 0; y < 48; ++y)
    for (int x = 0; x < 64; ++x) d.set(x, y, 7.5);
  const SurfelGeometry g = init_surfel(d, k, 40, 20);
  const Vec2d n = k.normalized(Vec2d(40, 20));
  CHECK((g.position - 7.5 * Vec3d(n.x(), n.y(), 1)).norm() < 1e-12);
  Mat32d expected;
  expected << 7.5, 0, 0, 7.5, 0, 0;
  CHECK((g.jacobian - expected).norm() < 1e-9);
}

TEST_CASE("init_surfel on a slanted plane matches the symbolic tangent") {
  const Intrinsics k{400, 400, 40, 30};
  const double a = 10.0;
  const double b = 3.0;
  const DepthMap d = slanted_depth(k, a, b, 80, 60);
  const int px = 55;
  const int py = 21;
  const SurfelGeometry g = init_surfel(d, k, px, py);
  const Vec2d n = k.normalized(Vec2d(px, py));
  const double z = a + b * n.x();
  // d/dxhat of z [xhat, yhat, 1] with dz/dxhat = b; z is linear, so the
  // central difference is exact up to rounding.
  const Vec3d col0(a + b * n.x() + n.x() * b, n.y() * b, b);
  const Vec3d col1(0.0, z, 0.0);
  CHECK((g.jacobian.col(0) - col0).norm() < 1e-9);
  CHECK((g.jacobian.col(1) - col1).norm() < 1e-9);
}

TEST_CASE("init_surfel on a cylinder spans the analytic tangent plane") {
  const Intrinsics k{500, 500, 100, 80};
  const double radius = 50.0;
  const double zc = 150.0;
  DepthMap d(200, 160);
  for (int y = 0; y < 160; ++y) {
    for (int x = 0; x < 200; ++x) {
      const double xh = (x - k.cx) / k.fx;
      const double qa = xh * xh + 1.0;
      const double qb = -2.0 * zc;
      const double qc = zc * zc - radius * radius;
      d.set(x, y, (-qb - std::sqrt(qb * qb - 4 * qa * qc)) / (2 * qa));
    }
  }
  double worst = 0.0;
  for (int px : {30, 70, 100, 140, 170}) {
    const SurfelGeometry g = init_surfel(d, k, px, 60);
    const Vec3d normal = Vec3d(g.position.x(), 0.0, g.position.z() - zc) / radius;
    for (int c = 0; c < 2; ++c) {
      const Vec3d t = g.jacobian.col(c);
      worst = std::max(worst, std::asin(std::abs(normal.dot(t)) / t.norm()));
    }
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("init_surfel rejects invalid depth") {
  const Intrinsics k{100, 100, 5, 5};
  DepthMap d(10, 10);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 10; ++x) d.set(x, y, 2.0);
  d.invalidate(5, 4);
  try {
    init_surfel(d, k, 5, 5);
    FAIL("expected InvalidDepth");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidDepth);
  }
  CHECK_NOTHROW(init_surfel(d, k, 2, 2));
}

TEST_CASE("materialize_deform follows the deformation table") {
  CHECK(materialize_deform(DeformationModel::Isometry, {}) == Mat2d::Identity());
  const std::vector<double> s{2.0};
  CHECK(materialize_deform(DeformationModel::Conformal, s) == 2.0 * Mat2d::Identity());
  const std::vector<double> g{1.0, 0.0, 1.0};
  CHECK(materialize_deform(DeformationModel::General, g) == Mat2d::Identity());
  const std::vector<double> e{1.5, 0.3};
  const Mat2d f = materialize_deform(DeformationModel::Equireal, e);
  CHECK(f(0, 0) == 1.5);
  CHECK(f(0, 1) == 0.3);
  CHECK(f(1, 0) == 0.3);
  CHECK(f(1, 1) == doctest::Approx((1 + 0.3) / 1.5));
  CHECK(f.determinant() == doctest::Approx(1.5 * (1 + 0.3) / 1.5 - 0.3 * 0.3));
  const Mat2d unit = materialize_deform(DeformationModel::Equireal, e, EquirealForm::UnitDeterminant);
  CHECK(unit.determinant() == doctest::Approx(1.0));
}

TEST_CASE("materialize_deform errors and symmetry") {
  const std::vector<double> two{1.0, 2.0};
  try {
    materialize_deform(DeformationModel::Conformal, two);
    FAIL("expected BadArity");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::BadArity);
  }
  const std::vector<double> zero{0.0, 0.5};
  try {
    materialize_deform(DeformationModel::Equireal, zero);
    FAIL("expected Singular");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Singular);
  }
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> u(0.5, 2.0);
  for (auto model : {DeformationModel::Isometry, DeformationModel::Conformal, DeformationModel::Equireal,
                     DeformationModel::General}) {
    std::vector<double> p(deform_param_count(model));
    for (double& v : p) v = u(rng);
    const Mat2d f = materialize_deform(model, p);
    CHECK(f(0, 1) == f(1, 0));
    const Eigen::VectorXd back = deform_params(model, f);
    for (int i = 0; i < back.size(); ++i) CHECK(back(i) == doctest::Approx(p[i]));
  }
}

TEST_CASE("deformation parameter counts") {
  CHECK(deform_param_count(DeformationModel::Isometry) == 0);
  CHECK(deform_param_count(DeformationModel::Conformal) == 1);
  CHECK(deform_param_count(DeformationModel::Equireal) == 2);
  CHECK(deform_param_count(DeformationModel::General) == 3);
  CHECK(parse_deformation_model(to_string(DeformationModel::Equireal)) == DeformationModel::Equireal);
}

TEST_CASE("exponential maps") {
  CHECK(so3_exp(Vec3d(Vec3d::Zero())) == Mat3d::Identity());
  const Vec3d r = so3_exp(Vec3d(0, 0, std::numbers::pi / 2)) * Vec3d(1, 0, 0);
  CHECK((r - Vec3d(0, 1, 0)).norm() < 1e-12);

  Vec6d zeta;
  zeta << 0.3, -1.2, 2.0, 0.4, -0.1, 0.7;
  const Posed p = se3_exp(zeta) * se3_exp(Vec6d(-zeta));
  CHECK((p.rotation - Mat3d::Identity()).norm() < 1e-10);
  CHECK(p.translation.norm() < 1e-10);

  // Small-angle branch agrees with the closed form just above the switch.
  const Vec3d tiny(3e-9, -2e-9, 1e-9);
  const Mat3d a = so3_exp(tiny);
  const Mat3d b = Eigen::AngleAxisd(tiny.norm(), tiny.normalized()).toRotationMatrix();
  CHECK((a - b).norm() < 1e-15);
}

TEST_CASE("skew is the cross product") {
  const Vec3d a(0.2, -3.0, 1.5);
  const Vec3d b(-1.0, 0.4, 2.2);
  CHECK((skew(a) * b - a.cross(b)).norm() < 1e-15);
}

TEST_CASE("pose composition is associative and inverts") {
  std::mt19937 rng(13);
  auto rand_pose = [&] {
    Vec6d z = Vec6d::Random();
    return se3_exp(z);
  };
  const Posed a = rand_pose();
  const Posed b = rand_pose();
  const Posed c = rand_pose();
  const Posed l = pose_compose(pose_compose(a, b), c);
  const Posed r = pose_compose(a, pose_compose(b, c));
  CHECK((l.rotation - r.rotation).norm() < 1e-12);
  CHECK((l.translation - r.translation).norm() < 1e-12);
  const Posed i = a * a.inverse();
  CHECK((i.rotation - Mat3d::Identity()).norm() < 1e-12);
  CHECK(i.translation.norm() < 1e-12);
  const Vec3d x(1, 2, 3);
  CHECK((pose_apply(a, x) - (a.rotation * x + a.translation)).norm() == 0.0);
}

TEST_CASE("repeated rotation updates stay orthonormal") {
  std::mt19937 rng(17);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  Mat3d r = Mat3d::Identity();
  for (int i = 0; i < 10000; ++i) r = r * so3_exp(Vec3d(u(rng), u(rng), u(rng)));
  CHECK(orthonormality_error(r) < 1e-6);
}

TEST_CASE("scale_surfel keeps projections for a camera at the origin") {
  std::mt19937 rng(19);
  const Intrinsics k{500, 500, 320, 240};
  const Surfel s = random_surfel(rng);
  const SurfelStated st = random_state(rng);

  const SurfelStated same = scale_surfel(s, st, 1.0);
  CHECK((same.translation - st.translation).norm() < 1e-12);
  CHECK((same.deform - st.deform).norm() < 1e-12);

  const SurfelStated doubled = scale_surfel(s, st, 2.0);
  double worst = 0.0;
  const Eigen::Matrix2Xd grid = texture_grid(11);
  for (int i = 0; i < grid.cols(); ++i) {
    const Vec2d p0 = project_or_throw(k, surfel_point(s, st, grid.col(i)));
    const Vec2d p1 = project_or_throw(k, surfel_point(s, doubled, grid.col(i)));
    worst = std::max(worst, (p1 - p0).norm());
  }
  CHECK(worst < 1e-9);

  const SurfelStated half = scale_surfel(s, st, 0.5);
  CHECK(surfel_center(s, half).z() == doctest::Approx(0.5 * surfel_center(s, st).z()));
  const Vec2d corner(11, 11);
  const double extent = (surfel_point(s, st, corner) - surfel_point(s, st, -corner)).norm();
  const double extent_half = (surfel_point(s, half, corner) - surfel_point(s, half, -corner)).norm();
  CHECK(extent_half == doctest::Approx(0.5 * extent));
}

TEST_CASE("texture grid is square and symmetric") {
  const Eigen::Matrix2Xd g = texture_grid(3, 2.0);
  CHECK(g.cols() == 49);
  CHECK(g.rowwise().sum().norm() < 1e-12);
  CHECK(g.row(0).maxCoeff() == 6.0);
  CHECK(g.row(1).minCoeff() == -6.0);
}

TEST_SUITE_END();

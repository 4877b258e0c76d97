#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "surfel/camera.hpp"
#include "surfel/synth.hpp"

using namespace surfel;

TEST_SUITE_BEGIN("synth");

namespace {

Scene plane_scene(double z) {
  Scene scene;
  scene.width = 160;
  scene.height = 120;
  scene.intrinsics = {300, 300, 79.5, 59.5};
  Body plane;
  plane.pose.translation = Vec3d(0, 0, z);
  plane.half_a = 200;
  plane.half_b = 200;
  scene.bodies.push_back(plane);
  return scene;
}

// Arc length of a -> point(a, b, t) between a0 and a1 (composite Simpson).
double arc_length(const Body& body, double a0, double a1, double b, double t) {
  const int n = 2000;
  const double h = (a1 - a0) / n;
  auto speed = [&](double a) { return body.tangents(a, b, t).col(0).norm(); };
  double sum = speed(a0) + speed(a1);
  for (int i = 1; i < n; ++i) sum += (i % 2 ? 4.0 : 2.0) * speed(a0 + i * h);
  return sum * h / 3.0;
}

}  // namespace

TEST_CASE("fronto-parallel plane renders constant depth") {
  const Rendering r = render_frame(plane_scene(42.0), 0.0);
  for (int y = 0; y < r.depth.height(); y += 7) {
    for (int x = 0; x < r.depth.width(); x += 7) {
      REQUIRE(r.depth.valid(x, y));
      CHECK(std::abs(r.depth(x, y) - 42.0) < 1e-9);
    }
  }
}

TEST_CASE("background pixels") {
  Scene scene = plane_scene(42.0);
  scene.bodies[0].half_a = 1.0;
  scene.bodies[0].half_b = 1.0;
  const Rendering r = render_frame(scene, 0.0);
  CHECK_FALSE(r.depth.valid(0, 0));
  CHECK(r.image(0, 0) == scene.background);
  CHECK(r.depth.valid(80, 60));
}

TEST_CASE("camera motion over a static plane is a homography") {
  Scene scene = plane_scene(50.0);
  scene.bodies[0].pose.rotation = so3_exp(Vec3d(0.2, -0.3, 0.1));
  scene.bodies[0].texture.cell = 25.6;
  scene.bodies[0].texture.octaves = 2;
  Vec6d zeta;
  zeta << 1.0, -0.5, 2.0, 0.01, 0.02, -0.015;
  const Posed cam1 = Posed::Identity();
  const Posed cam2 = se3_exp(zeta);
  const Rendering r1 = render_frame(scene, 0.0, cam1);
  const Rendering r2 = render_frame(scene, 0.0, cam2);

  // Plane n . X = d in camera-1 coordinates; X2 = R X1 + t.
  const Vec3d n = scene.bodies[0].pose.rotation.col(2);
  const double d = n.dot(scene.bodies[0].pose.translation);
  const Mat3d kk = (Mat3d() << 300, 0, 79.5, 0, 300, 59.5, 0, 0, 1).finished();
  const Mat3d h = kk * (cam2.rotation + cam2.translation * n.transpose() / d) * kk.inverse();
  double worst = 0.0;
  int checked = 0;
  for (int y = 10; y < 110; y += 5) {
    for (int x = 10; x < 150; x += 5) {
      const Vec3d p = h * Vec3d(x, y, 1);
      const auto v = r2.image.sample(p.x() / p.z(), p.y() / p.z());
      if (!v || !r2.depth.valid(static_cast<int>(p.x() / p.z()), static_cast<int>(p.y() / p.z()))) continue;
      worst = std::max(worst, std::abs(*v - r1.image(x, y)));
      ++checked;
    }
  }
  CHECK(checked > 200);
  CHECK(worst < 0.02);
}

TEST_CASE("illumination gain is applied before clamping") {
  Scene scene = plane_scene(30.0);
  scene.bodies[0].texture.low = 0.3;
  scene.bodies[0].texture.high = 0.3;
  const Rendering plain = render_frame(scene, 0.0);
  scene.illumination.gain_start = scene.illumination.gain_end = 2.0;
  const Rendering lit = render_frame(scene, 0.0);
  CHECK(plain.image(40, 40) == doctest::Approx(0.3));
  CHECK(lit.image(40, 40) == doctest::Approx(0.6));
  scene.illumination.gain_start = scene.illumination.gain_end = 4.0;
  CHECK(render_frame(scene, 0.0).image(40, 40) == 1.0);
}

TEST_CASE("illumination ramps linearly") {
  Illumination ill{1.0, 1.5, 0.0, 0.1, 10.0};
  CHECK(ill.gain(0) == 1.0);
  CHECK(ill.gain(5) == doctest::Approx(1.25));
  CHECK(ill.gain(20) == doctest::Approx(1.5));
  CHECK(ill.bias(10) == doctest::Approx(0.1));
}

TEST_CASE("ground truth of a static scene is constant") {
  Scene scene = plane_scene(40.0);
  const GroundTruth gt = gt_surfel_track(scene, {{80, 60}, {20, 30}}, {0, 1, 2, 3});
  REQUIRE(gt.frames.size() == 4);
  for (const auto& f : gt.frames) {
    for (std::size_t i = 0; i < f.surfels.size(); ++i) {
      CHECK((f.surfels[i].position - gt.frames[0].surfels[i].position).norm() == 0.0);
      CHECK(f.surfels[i].visible);
    }
  }
}

TEST_CASE("ground truth follows rigid motion exactly") {
  Scene scene = plane_scene(40.0);
  scene.bodies[0].motion.velocity = Vec3d(0.3, -0.1, 0.5);
  scene.bodies[0].motion.angular_velocity = Vec3d(0.01, 0.02, -0.01);
  const GroundTruth gt = gt_surfel_track(scene, {{80, 60}, {30, 90}}, {0, 2, 5});
  const Posed p0 = scene.bodies[0].pose_at(0.0);
  for (const auto& f : gt.frames) {
    const Posed pt = scene.bodies[0].pose_at(f.frame);
    for (std::size_t i = 0; i < f.surfels.size(); ++i) {
      const Vec3d expect = pt.apply(p0.inverse().apply(gt.frames[0].surfels[i].position));
      CHECK((f.surfels[i].position - expect).norm() < 1e-10);
    }
  }
}

TEST_CASE("cylindrical bending preserves geodesic distance") {
  Body body;
  body.half_a = 60;
  body.half_b = 40;
  body.bend = 0.005;
  body.bend_amplitude = 0.01;
  body.bend_period = 20;
  const double ref = arc_length(body, -25.0, 30.0, 7.0, 0.0);
  CHECK(ref == doctest::Approx(55.0).epsilon(1e-9));
  for (double t : {1.0, 3.0, 5.0, 11.0}) {
    CHECK(std::abs(arc_length(body, -25.0, 30.0, 7.0, t) - ref) < 1e-6);
  }
}

TEST_CASE("bending_sheet keeps its first fundamental form") {
  const Scene scene = make_scene("bending_sheet", 1);
  const Body& b = scene.bodies.at(0);
  for (double a : {-40.0, 0.0, 35.0}) {
    for (double v : {-20.0, 10.0}) {
      const Mat32d t0 = b.tangents(a, v, 0.0);
      const Mat2d g0 = t0.transpose() * t0;
      for (double t : {5.0, 17.0, 33.0}) {
        const Mat32d tt = b.tangents(a, v, t);
        CHECK((tt.transpose() * tt - g0).cwiseAbs().maxCoeff() < 1e-6);
      }
    }
  }
}

TEST_CASE("renderer and ground truth agree") {
  const Scene scene = make_scene("bending_sheet", 2);
  std::vector<Eigen::Vector2i> anchors{{320, 240}, {200, 150}, {450, 330}};
  const GroundTruth gt = gt_surfel_track(scene, anchors, {0, 10, 20});
  for (const auto& f : gt.frames) {
    for (const auto& s : f.surfels) {
      if (!s.visible) continue;
      const Vec3d xc = f.camera.apply(s.position);
      CHECK((project_or_throw(scene.intrinsics, xc) - s.pixel).norm() < 1e-9);
      const auto depth = render_depth_at(scene, f.frame, f.camera, s.pixel.x(), s.pixel.y());
      REQUIRE(depth.has_value());
      CHECK(std::abs(*depth - xc.z()) < 1e-6);
    }
  }
}

TEST_CASE("anchors off the surface are rejected") {
  Scene scene = plane_scene(40.0);
  scene.bodies[0].half_a = 1.0;
  scene.bodies[0].half_b = 1.0;
  try {
    gt_surfel_track(scene, {{0, 0}}, {0});
    FAIL("expected AnchorOffSurface");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::AnchorOffSurface);
  }
}

TEST_CASE("presets are deterministic") {
  for (const auto& name : preset_names()) {
    const Scene a = make_scene(name, 7);
    const Scene b = make_scene(name, 7);
    REQUIRE(a.bodies.size() == b.bodies.size());
    const Rendering ra = render_frame(a, 3.0, 2);
    const Rendering rb = render_frame(b, 3.0, 1);
    CHECK((ra.image.array() == rb.image.array()).all());
    CHECK((ra.depth.array() == rb.depth.array()).all());
  }
  CHECK(make_scene("rigid_plane", 1).bodies[0].texture.seed != make_scene("rigid_plane", 2).bodies[0].texture.seed);
}

TEST_CASE("rigid_plane does not deform") {
  const Scene s = make_scene("rigid_plane", 1);
  for (const auto& b : s.bodies) {
    CHECK(b.bend_amplitude == 0.0);
    CHECK(b.curvature(0.0) == b.curvature(25.0));
  }
}

TEST_CASE("two_bodies_sliding moves its bodies apart") {
  const Scene s = make_scene("two_bodies_sliding", 1);
  REQUIRE(s.bodies.size() >= 2);
  for (double t = 0.0; t <= 50.0; t += 0.5) {
    const double h = 1e-4;
    auto rel = [&](double tt) { return s.bodies[1].pose_at(tt).translation - s.bodies[0].pose_at(tt).translation; };
    CHECK(((rel(t + h) - rel(t - h)) / (2 * h)).norm() > 1e-6);
  }
}

TEST_CASE("missing_frames drops frame slots") {
  const Scene s = make_scene("missing_frames", 1);
  CHECK_FALSE(s.missing_frames.empty());
  const std::vector<int> f = frame_times(s, 40);
  for (int m : s.missing_frames) CHECK(std::find(f.begin(), f.end(), m) == f.end());
  CHECK(f.front() == 0);
}

TEST_CASE("unknown presets") {
  try {
    make_scene("teapot", 1);
    FAIL("expected UnknownPreset");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnknownPreset);
  }
}

TEST_CASE("noise texture stays in range") {
  NoiseTexture tex;
  tex.seed = 4;
  double lo = 1.0;
  double hi = 0.0;
  for (int i = 0; i < 2000; ++i) {
    const double v = tex.value(0.37 * i, -0.11 * i);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  CHECK(lo >= tex.low);
  CHECK(hi <= tex.high);
  CHECK(hi - lo > 0.5 * (tex.high - tex.low));
}

TEST_SUITE_END();

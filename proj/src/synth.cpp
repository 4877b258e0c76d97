#include "surfel/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "surfel/parallel.hpp"

namespace surfel {

namespace {

std::uint64_t mix(std::uint64_t x) {
  // splitmix64 finalizer
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

double lattice(std::uint64_t seed, std::int64_t i, std::int64_t j, int octave) {
  std::uint64_t h = mix(seed ^ mix(static_cast<std::uint64_t>(i) ^ mix(static_cast<std::uint64_t>(j) + 0x1234567ull * (octave + 1))));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double quintic(double t) { return t * t * t * (t * (6.0 * t - 15.0) + 10.0); }

double wave(double t, double period) { return period > 0.0 ? std::sin(2.0 * std::numbers::pi * t / period) : 0.0; }

}  // namespace

double NoiseTexture::value(double a, double b) const {
  double sum = 0.0;
  double weight = 0.0;
  double amp = 1.0;
  double c = cell;
  for (int o = 0; o < octaves; ++o, c *= 0.5, amp *= persistence) {
    const double x = a / c;
    const double y = b / c;
    const double fx = std::floor(x);
    const double fy = std::floor(y);
    const auto i = static_cast<std::int64_t>(fx);
    const auto j = static_cast<std::int64_t>(fy);
    const double tx = quintic(x - fx);
    const double ty = quintic(y - fy);
    const double v00 = lattice(seed, i, j, o);
    const double v10 = lattice(seed, i + 1, j, o);
    const double v01 = lattice(seed, i, j + 1, o);
    const double v11 = lattice(seed, i + 1, j + 1, o);
    sum += amp * ((1 - ty) * ((1 - tx) * v00 + tx * v10) + ty * ((1 - tx) * v01 + tx * v11));
    weight += amp;
  }
  const double mean = weight > 0 ? sum / weight : 0.5;
  const double v = std::clamp(0.5 + contrast * (mean - 0.5), 0.0, 1.0);
  return low + (high - low) * v;
}

Posed RigidMotion::apply(const Posed& initial, double t) const {
  Posed out;
  out.rotation = so3_exp<double>(angular_velocity * t) * initial.rotation;
  out.translation = initial.translation + velocity * t + oscillation * wave(t, period);
  return out;
}

double Body::curvature(double t) const { return bend + bend_amplitude * wave(t, bend_period); }

Vec3d Body::point(double a, double b, double t) const {
  if (shape == Shape::SphereCap) {
    const double r = std::hypot(a, b);
    const double th = r / radius;
    const double phi = std::atan2(b, a);
    return {radius * std::sin(th) * std::cos(phi), radius * std::sin(th) * std::sin(phi),
            radius * (1.0 - std::cos(th))};
  }
  const double k = curvature(t);
  if (std::abs(k) < 1e-12) return {a, b, 0.0};
  return {std::sin(k * a) / k, b, (1.0 - std::cos(k * a)) / k};
}

Mat32d Body::tangents(double a, double b, double t) const {
  Mat32d j;
  if (shape == Shape::SphereCap) {
    const double h = 1e-6;
    j.col(0) = (point(a + h, b, t) - point(a - h, b, t)) / (2 * h);
    j.col(1) = (point(a, b + h, t) - point(a, b - h, t)) / (2 * h);
    return j;
  }
  const double k = curvature(t);
  j.col(0) = Vec3d(std::cos(k * a), 0.0, std::sin(k * a));
  j.col(1) = Vec3d(0.0, 1.0, 0.0);
  return j;
}

bool Body::inside(double a, double b) const {
  if (round || shape == Shape::SphereCap) return a * a + b * b <= half_a * half_a;
  return std::abs(a) <= half_a && std::abs(b) <= half_b;
}

double Illumination::gain(double t) const {
  const double s = std::clamp(t / duration, 0.0, 1.0);
  return gain_start + (gain_end - gain_start) * s;
}

double Illumination::bias(double t) const {
  const double s = std::clamp(t / duration, 0.0, 1.0);
  return bias_start + (bias_end - bias_start) * s;
}

Posed Scene::camera_at(double t) const { return camera_motion.apply(camera_pose0, t).inverse(); }

namespace {

struct BodyHit {
  double s;  // ray parameter
  double a;
  double b;
};

/// Ray o + s d in body coordinates; smallest s > 0 on the valid surface.
std::optional<BodyHit> intersect(const Body& body, double t, const Vec3d& o, const Vec3d& d) {
  std::optional<BodyHit> best;
  auto consider = [&](double s, double a, double b) {
    if (!(s > 1e-9) || !body.inside(a, b)) return;
    if (!best || s < best->s) best = BodyHit{s, a, b};
  };
  if (body.shape == Shape::SphereCap) {
    const Vec3d c(0.0, 0.0, body.radius);
    const Vec3d oc = o - c;
    const double qa = d.squaredNorm();
    const double qb = 2.0 * oc.dot(d);
    const double qc = oc.squaredNorm() - body.radius * body.radius;
    const double disc = qb * qb - 4 * qa * qc;
    if (disc < 0) return best;
    const double sq = std::sqrt(disc);
    for (double s : {(-qb - sq) / (2 * qa), (-qb + sq) / (2 * qa)}) {
      const Vec3d p = o + s * d;
      const Vec3d u = (p - c) / body.radius;
      const double th = std::acos(std::clamp(-u.z(), -1.0, 1.0));
      const double rxy = std::hypot(u.x(), u.y());
      const double r = th * body.radius;
      const double a = rxy > 0 ? r * u.x() / rxy : 0.0;
      const double b = rxy > 0 ? r * u.y() / rxy : 0.0;
      consider(s, a, b);
    }
    return best;
  }
  const double k = body.curvature(t);
  if (std::abs(k) < 1e-12) {
    if (std::abs(d.z()) < 1e-15) return best;
    const double s = -o.z() / d.z();
    const Vec3d p = o + s * d;
    consider(s, p.x(), p.y());
    return best;
  }
  // Cylinder x^2 + (z - 1/k)^2 = 1/k^2 with axis along y.
  const double ik = 1.0 / k;
  const double qa = d.x() * d.x() + d.z() * d.z();
  if (qa < 1e-30) return best;
  const double qb = 2.0 * (o.x() * d.x() + (o.z() - ik) * d.z());
  const double qc = o.x() * o.x() + (o.z() - ik) * (o.z() - ik) - ik * ik;
  const double disc = qb * qb - 4 * qa * qc;
  if (disc < 0) return best;
  const double sq = std::sqrt(disc);
  for (double s : {(-qb - sq) / (2 * qa), (-qb + sq) / (2 * qa)}) {
    const Vec3d p = o + s * d;
    const double ka = std::atan2(k * p.x(), 1.0 - k * p.z());
    consider(s, ka / k, p.y());
  }
  return best;
}

}  // namespace

std::optional<SurfaceHit> cast_ray(const Scene& scene, double t, const Posed& camera, double x, double y) {
  const Intrinsics& k = scene.intrinsics;
  const Vec3d dir_c((x - k.cx) / k.fx, (y - k.cy) / k.fy, 1.0);
  const Posed wc = camera.inverse();
  const Vec3d o = wc.translation;
  const Vec3d d = wc.rotation * dir_c;
  std::optional<SurfaceHit> best;
  for (int i = 0; i < static_cast<int>(scene.bodies.size()); ++i) {
    const Body& body = scene.bodies[i];
    const Posed bw = body.pose_at(t);
    const Vec3d ob = bw.rotation.transpose() * (o - bw.translation);
    const Vec3d db = bw.rotation.transpose() * d;
    const auto hit = intersect(body, t, ob, db);
    // dir_c has unit z, so the ray parameter is the camera-frame depth.
    if (hit && (!best || hit->s < best->depth)) best = SurfaceHit{i, hit->s, hit->a, hit->b};
  }
  return best;
}

std::optional<double> render_depth_at(const Scene& scene, double t, const Posed& camera, double x, double y) {
  const auto hit = cast_ray(scene, t, camera, x, y);
  if (!hit) return std::nullopt;
  return hit->depth;
}

Rendering render_frame(const Scene& scene, double t, const Posed& camera, int threads) {
  Rendering out{GrayImage(scene.width, scene.height, scene.background), DepthMap(scene.width, scene.height)};
  const double gain = scene.illumination.gain(t);
  const double bias = scene.illumination.bias(t);
  parallel_for(scene.height, threads, [&](int y) {
    for (int x = 0; x < scene.width; ++x) {
      const auto hit = cast_ray(scene, t, camera, x, y);
      if (!hit) continue;
      const double v = scene.bodies[hit->body].texture.value(hit->a, hit->b);
      out.image(x, y) = std::clamp(gain * v + bias, 0.0, 1.0);
      out.depth.set(x, y, hit->depth);
    }
  });
  return out;
}

Rendering render_frame(const Scene& scene, double t, int threads) {
  return render_frame(scene, t, scene.camera_at(t), threads);
}

GroundTruth gt_surfel_track(const Scene& scene, const std::vector<Eigen::Vector2i>& anchors,
                            const std::vector<int>& frames) {
  struct Anchor {
    int body;
    double a;
    double b;
  };
  std::vector<Anchor> on_surface;
  const Posed cam0 = scene.camera_at(0.0);
  for (const auto& px : anchors) {
    const auto hit = cast_ray(scene, 0.0, cam0, px.x(), px.y());
    if (!hit || scene.bodies[hit->body].occluder) {
      throw Error(ErrorCode::AnchorOffSurface,
                  "anchor (" + std::to_string(px.x()) + ", " + std::to_string(px.y()) + ") is not on a body");
    }
    on_surface.push_back({hit->body, hit->a, hit->b});
  }
  GroundTruth gt;
  for (int f : frames) {
    const double t = f;
    GtFrame fr;
    fr.frame = f;
    fr.camera = scene.camera_at(t);
    for (std::size_t i = 0; i < on_surface.size(); ++i) {
      const Anchor& an = on_surface[i];
      const Body& body = scene.bodies[an.body];
      const Posed bw = body.pose_at(t);
      GtSurfel s;
      s.id = static_cast<int>(i);
      s.position = bw.apply(body.point(an.a, an.b, t));
      s.tangents = bw.rotation * body.tangents(an.a, an.b, t);
      const Vec3d xc = fr.camera.apply(s.position);
      if (const auto px = project(scene.intrinsics, xc)) {
        s.pixel = *px;
        const bool in_image = px->x() >= 0 && px->y() >= 0 && px->x() <= scene.width - 1 &&
                              px->y() <= scene.height - 1;
        if (in_image) {
          const auto hit = cast_ray(scene, t, fr.camera, px->x(), px->y());
          s.visible = hit && hit->body == an.body && std::abs(hit->depth - xc.z()) <= 1e-6 * std::max(1.0, xc.z());
        }
      }
      fr.surfels.push_back(s);
    }
    gt.frames.push_back(std::move(fr));
  }
  return gt;
}

std::vector<int> frame_times(const Scene& scene, int count) {
  std::vector<int> out;
  for (int i = 0; i < count; ++i) {
    if (std::find(scene.missing_frames.begin(), scene.missing_frames.end(), i) == scene.missing_frames.end()) {
      out.push_back(i);
    }
  }
  return out;
}

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"rigid_plane", "bending_sheet",    "two_bodies_sliding",
                                              "illumination_drift", "occlusion", "missing_frames"};
  return names;
}

namespace {

Posed body_pose(const Vec3d& position, const Vec3d& rotation) {
  Posed p;
  p.rotation = so3_exp<double>(rotation);
  p.translation = position;
  return p;
}

NoiseTexture texture_for(std::uint64_t seed, int body) {
  NoiseTexture tex;
  tex.seed = mix(seed * 1000003ull + static_cast<std::uint64_t>(body));
  return tex;
}

Body textured_plane(std::uint64_t seed, int index, const Vec3d& position, const Vec3d& rotation, double half_a,
                    double half_b) {
  Body b;
  b.pose = body_pose(position, rotation);
  b.half_a = half_a;
  b.half_b = half_b;
  b.texture = texture_for(seed, index);
  return b;
}

}  // namespace

Scene make_scene(const std::string& preset, std::uint64_t seed) {
  Scene s;
  s.preset = preset;
  s.seed = seed;
  if (preset == "rigid_plane" || preset == "missing_frames") {
    s.bodies.push_back(textured_plane(seed, 0, {0, 0, 100}, {0.05, 0.25, 0}, 130, 110));
    s.camera_motion.velocity = Vec3d(0.4, 0.2, 0.1);
    s.camera_motion.angular_velocity = Vec3d(0.0005, -0.002, 0.001);
    if (preset == "missing_frames") s.missing_frames = {7, 12, 13, 15};
  } else if (preset == "bending_sheet") {
    Body b = textured_plane(seed, 0, {0, 0, 100}, {0.1, 0, 0}, 120, 100);
    b.bend_amplitude = 1.0 / 150.0;
    b.bend_period = 40.0;
    b.motion.velocity = Vec3d(0.1, 0.05, 0.0);
    s.bodies.push_back(b);
  } else if (preset == "two_bodies_sliding") {
    s.bodies.push_back(textured_plane(seed, 0, {-30, 0, 95}, {0, 0, 0}, 40, 110));
    Body moving = textured_plane(seed, 1, {40, 0, 105}, {0, 0, 0}, 45, 110);
    moving.motion.velocity = Vec3d(0.0, 0.5, 0.0);
    s.bodies.push_back(moving);
    s.camera_motion.velocity = Vec3d(0.1, 0.0, 0.05);
    s.camera_motion.angular_velocity = Vec3d(0.0, 0.0005, 0.0);
  } else if (preset == "illumination_drift") {
    Body b = textured_plane(seed, 0, {0, 0, 100}, {0.05, 0.2, 0}, 130, 110);
    b.texture.low = 0.2;
    b.texture.high = 0.5;
    b.motion.velocity = Vec3d(0.3, 0.2, 0.0);
    b.motion.angular_velocity = Vec3d(0.001, 0.002, 0.0);
    s.bodies.push_back(b);
    s.illumination = {1.0, 1.5, 0.0, 0.1, 49.0};
  } else if (preset == "occlusion") {
    Body b = textured_plane(seed, 0, {0, 0, 100}, {0.05, 0.2, 0}, 130, 110);
    b.motion.velocity = Vec3d(0.1, 0.0, 0.0);
    s.bodies.push_back(b);
    Body disc = textured_plane(seed, 1, {-60, 0, 60}, {0, 0, 0}, 10, 10);
    disc.round = true;
    disc.occluder = true;
    disc.motion.velocity = Vec3d(2.0, 0.0, 0.0);
    s.bodies.push_back(disc);
  } else {
    throw Error(ErrorCode::UnknownPreset, "unknown preset '" + preset + "'");
  }
  return s;
}

}  // namespace surfel

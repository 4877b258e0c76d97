#pragma once

// Synthetic scenes made of analytic textured surfaces, rendered by exact
// ray intersection. Ground truth is evaluated on the same surfaces.
//
// Time is measured in frames. The world frame is the camera frame at t = 0
// unless a camera path says otherwise.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "surfel/camera.hpp"
#include "surfel/image.hpp"
#include "surfel/lie.hpp"

namespace surfel {

/// Band-limited value noise: a sum of octaves of quintic-interpolated
/// lattice noise, mapped to [low, high].
struct NoiseTexture {
  std::uint64_t seed = 1;
  /// Lattice spacing of the coarsest octave (surface units); each further
  /// octave halves it.
  double cell = 12.8;
  int octaves = 4;
  /// Amplitude ratio between successive octaves.
  double persistence = 1.0;
  double contrast = 3.0;
  double low = 0.1;
  double high = 0.9;

  double value(double a, double b) const;
};

/// x(t) = x0 + v t + A sin(2 pi t / period), R(t) = exp(w t) R0.
struct RigidMotion {
  Vec3d velocity = Vec3d::Zero();
  Vec3d angular_velocity = Vec3d::Zero();
  Vec3d oscillation = Vec3d::Zero();
  double period = 0.0;

  /// Applies the motion at time t to an initial pose (body or camera to world).
  Posed apply(const Posed& initial, double t) const;
};

enum class Shape {
  Plane,     // (a, b, 0); bent about the body y axis when curvature != 0
  SphereCap  // sphere of radius `radius` touching the origin, bulging to -z
};

struct Body {
  Shape shape = Shape::Plane;
  /// Body-to-world pose at t = 0.
  Posed pose;
  RigidMotion motion;
  double half_a = 50.0;
  double half_b = 50.0;
  /// Disc of radius half_a instead of a rectangle.
  bool round = false;
  /// Curvature k(t) = bend + bend_amplitude sin(2 pi t / bend_period) of a
  /// cylindrical, isometric bend: (sin(k a)/k, b, (1 - cos(k a))/k).
  double bend = 0.0;
  double bend_amplitude = 0.0;
  double bend_period = 0.0;
  double radius = 100.0;  // SphereCap only
  NoiseTexture texture;
  /// Occluders are rendered but never carry anchors.
  bool occluder = false;

  Posed pose_at(double t) const { return motion.apply(pose, t); }
  double curvature(double t) const;
  /// Surface point and tangents (d/da, d/db) in the body frame.
  Vec3d point(double a, double b, double t) const;
  Mat32d tangents(double a, double b, double t) const;
  bool inside(double a, double b) const;
};

/// gain(t), bias(t) ramp linearly from start to end over `duration` frames.
struct Illumination {
  double gain_start = 1.0;
  double gain_end = 1.0;
  double bias_start = 0.0;
  double bias_end = 0.0;
  double duration = 1.0;

  double gain(double t) const;
  double bias(double t) const;
};

struct Scene {
  std::string preset;
  std::uint64_t seed = 0;
  int width = 640;
  int height = 480;
  Intrinsics intrinsics{500.0, 500.0, 319.5, 239.5};
  std::vector<Body> bodies;
  Illumination illumination;
  /// Camera-to-world pose at t = 0 and its motion.
  Posed camera_pose0;
  RigidMotion camera_motion;
  std::vector<int> missing_frames;
  double background = 0.5;

  /// World-to-camera pose T_cw at time t.
  Posed camera_at(double t) const;
};

/// Scene with one of the presets rigid_plane, bending_sheet,
/// two_bodies_sliding, illumination_drift, occlusion, missing_frames.
/// Throws UnknownPreset.
Scene make_scene(const std::string& preset, std::uint64_t seed);

const std::vector<std::string>& preset_names();

/// Frame indices 0..count-1 without the scene's missing frames.
std::vector<int> frame_times(const Scene& scene, int count);

struct SurfaceHit {
  int body = -1;
  double depth = 0.0;  // camera-frame Z
  double a = 0.0;
  double b = 0.0;
};

/// Nearest surface along the ray through pixel (x, y) at time t.
std::optional<SurfaceHit> cast_ray(const Scene& scene, double t, const Posed& camera, double x, double y);

struct Rendering {
  GrayImage image;
  DepthMap depth;
};

/// Renders the scene at time t seen from camera T_cw (one ray per pixel
/// centre). Background pixels get `scene.background` and invalid depth.
Rendering render_frame(const Scene& scene, double t, const Posed& camera, int threads = 1);
Rendering render_frame(const Scene& scene, double t, int threads = 1);

/// Depth of the nearest surface along the ray through (x, y).
std::optional<double> render_depth_at(const Scene& scene, double t, const Posed& camera, double x, double y);

struct GtSurfel {
  int id = 0;
  Vec3d position = Vec3d::Zero();  // world
  Mat32d tangents = Mat32d::Zero();  // world d/da, d/db
  Vec2d pixel = Vec2d::Zero();
  bool visible = false;
};

struct GtFrame {
  int frame = 0;
  Posed camera;  // T_cw
  std::vector<GtSurfel> surfels;
};

struct GroundTruth {
  std::vector<GtFrame> frames;
};

/// Follows the surface points seen at the given frame-0 pixels through the
/// scene's motion. Throws AnchorOffSurface when a pixel sees background or
/// an occluder at t = 0.
GroundTruth gt_surfel_track(const Scene& scene, const std::vector<Eigen::Vector2i>& anchors,
                            const std::vector<int>& frames);

}  // namespace surfel

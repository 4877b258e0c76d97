#pragma once

// Sequential surfel tracking.
//
//  - track_static: fixed camera at the origin, every surfel aligned on its
//    own (optionally with the soft isometry energy).
//  - track_deformable: camera pose and all inlier surfels solved jointly,
//    surfel centres softly anchored to equilibrium points.
//  - track_rigid_map: surfels frozen at rest, camera pose only.
//
// Each frame is aligned coarse to fine starting from the previous frame's
// solution, then surfels are classified by ZNCC at the finest level.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "surfel/camera.hpp"
#include "surfel/image.hpp"
#include "surfel/optimizer.hpp"
#include "surfel/problems.hpp"
#include "surfel/surfel.hpp"

namespace surfel {

enum class GainBiasMode {
  Off,           // gain 1, bias 0
  FrozenCoarse,  // fitted once per frame at the coarsest level, then fixed
  Optimized,     // fitted at the coarsest level, then refined by LM
};

std::string to_string(GainBiasMode mode);
GainBiasMode parse_gain_bias_mode(const std::string& name);

enum class TrackMode { Static, Deform, RigidMap };

std::string to_string(TrackMode mode);
TrackMode parse_track_mode(const std::string& name);

struct TrackConfig {
  DeformationModel model = DeformationModel::Isometry;
  EquirealForm equireal_form = EquirealForm::Published;
  double omega_isometry = 1.0;
  double omega_equilibrium = 1.0;
  /// Isotropic equilibrium covariance sigma^2 I (scene units).
  double equilibrium_sigma = 10.0;
  int levels = 3;
  int half_extent = 11;
  double zncc_threshold = 0.95;
  double saturation = kDefaultSaturation;
  GainBiasMode gain_bias = GainBiasMode::FrozenCoarse;
  LmConfig lm;
  /// Surfels with fewer valid samples are dropped for the frame.
  double min_valid_fraction = 0.5;
  /// Re-test excluded surfels every frame and take them back on recovery.
  bool reaccept_outliers = true;
  int min_inliers = 4;
  int threads = 1;

  SurfelModel surfel_model() const;
};

struct SurfelResult {
  int id = 0;
  /// State carried to the next frame (previous state for outliers).
  SurfelStated state;
  /// State as optimized this frame, before outlier rejection.
  SurfelStated raw_state;
  double zncc = 0.0;
  bool inlier = false;
  double residual_rms = 0.0;
  double valid_fraction = 0.0;
};

struct SolveRecord {
  int surfel = -1;  // -1 for joint and pose-only solves
  int level = 0;
  SolveReport report;
};

struct FrameResult {
  int frame = 0;
  Posed camera;
  bool lost = false;
  std::vector<SurfelResult> surfels;
  std::vector<SolveRecord> reports;
  /// RMS photometric residual over valid samples of all inlier surfels.
  double residual_rms = 0.0;

  int inlier_count() const;
};

struct TrackOutcome {
  std::vector<FrameResult> frames;
  bool lost = false;
  /// Frames tracked before loss, the reference frame included.
  int frames_processed = 0;
};

/// Frames to track in order; `load(i)` returns the image of ids[i].
struct FrameSource {
  std::vector<int> ids;
  std::function<GrayImage(std::size_t)> load;

  std::size_t size() const { return ids.size(); }
  static FrameSource from_images(std::vector<GrayImage> images, std::vector<int> ids = {});
};

/// Builds surfels at the given reference pixels from the frame-0 image and
/// depth. Pixels whose patch leaves the image or hits invalid depth are
/// skipped.
std::vector<Surfel> build_surfels(const GrayImage& reference, const DepthMap& depth, const Intrinsics& k,
                                  const std::vector<Eigen::Vector2i>& pixels, const Posed& reference_pose,
                                  const TrackConfig& config);

/// Equilibrium anchors at the rest positions with covariance sigma^2 I.
std::vector<EquilibriumAnchor> rest_anchors(const std::vector<Surfel>& surfels, double sigma);

/// Anchors at the mean of each surfel's position trajectory.
std::vector<EquilibriumAnchor> mean_anchors(const std::vector<std::vector<Vec3d>>& trajectories, double sigma);

/// inlier <=> zncc >= threshold. Returns the inlier count.
int classify_outliers(FrameResult& frame, double threshold);

/// The first frame of `frames` is the reference: it is reported with rest
/// states and is not optimized.
TrackOutcome track_static(const FrameSource& frames, const std::vector<Surfel>& surfels, const Intrinsics& k,
                          const TrackConfig& config, const Posed& camera = Posed::Identity());

TrackOutcome track_deformable(const FrameSource& frames, const std::vector<Surfel>& surfels,
                              const std::vector<EquilibriumAnchor>& anchors, const Posed& pose0,
                              const Intrinsics& k, const TrackConfig& config);

TrackOutcome track_rigid_map(const FrameSource& frames, const std::vector<Surfel>& surfels, const Posed& pose0,
                             const Intrinsics& k, const TrackConfig& config);

}  // namespace surfel

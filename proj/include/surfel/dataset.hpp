#pragma once

// Dataset directories and result files.
//
//   frame_%05d.pgm      8-bit grayscale frames (missing indices allowed)
//   depth_00000.pgm     16-bit depth of frame 0, depth = count * depth_scale
//   intrinsics.cfg      key=value: width height fx fy cx cy depth_scale pose0 ...
//   anchors.csv         id,px,py (optional; detected when absent)
//   gt_trajectory.csv   frame,tx,ty,tz,qw,qx,qy,qz (camera-to-world)
//   gt_surfels.csv      frame,id,px,py,x,y,z,visible (world positions)

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "surfel/camera.hpp"
#include "surfel/features.hpp"
#include "surfel/image.hpp"
#include "surfel/lie.hpp"
#include "surfel/synth.hpp"
#include "surfel/tracker.hpp"

namespace surfel {

using Config = std::map<std::string, std::string>;

/// Flat key=value text; '#' starts a comment, blank lines are ignored.
Config parse_config(const std::string& text);
Config read_config(const std::filesystem::path& path);
void write_config(const std::filesystem::path& path, const Config& config);

double config_double(const Config& c, const std::string& key, std::optional<double> fallback = std::nullopt);
int config_int(const Config& c, const std::string& key, std::optional<int> fallback = std::nullopt);
std::string config_string(const Config& c, const std::string& key, std::optional<std::string> fallback = std::nullopt);

/// Applies recognised tracking keys (model, levels, zncc_threshold, ...) to
/// a TrackConfig. Unknown keys are ignored.
void apply_config(const Config& c, TrackConfig& config);
Config to_config(const TrackConfig& config);

std::string format_pose(const Posed& pose);
Posed parse_pose(const std::string& text);

struct SynthOptions {
  int frames = 50;
  int threads = 1;
  double depth_scale = 0.005;
  AnchorSelection anchors;
};

struct SynthSummary {
  std::vector<int> frames;
  int anchors = 0;
};

/// Renders `scene` into `dir` with ground truth.
SynthSummary write_dataset(const std::filesystem::path& dir, const Scene& scene, const SynthOptions& options);

class Dataset {
 public:
  /// Throws BadInput when the directory is not a dataset.
  explicit Dataset(std::filesystem::path dir);

  const std::filesystem::path& dir() const { return dir_; }
  const Config& config() const { return config_; }
  const Intrinsics& intrinsics() const { return k_; }
  const Posed& pose0() const { return pose0_; }
  const std::vector<int>& frames() const { return frames_; }
  const std::optional<std::vector<Eigen::Vector2i>>& anchors() const { return anchors_; }

  GrayImage frame(int id) const;
  DepthMap depth() const;
  FrameSource source() const;

 private:
  std::filesystem::path dir_;
  Config config_;
  Intrinsics k_;
  Posed pose0_;
  double depth_scale_ = 1.0;
  std::vector<int> frames_;
  std::optional<std::vector<Eigen::Vector2i>> anchors_;
};

struct DatasetRun {
  TrackConfig config;
  std::vector<Surfel> surfels;
  TrackOutcome outcome;
};

/// Reads `overrides` on top of the dataset's own config, builds surfels at
/// the stored anchors (detected when absent) and tracks in `mode`.
DatasetRun track_dataset(const Dataset& ds, TrackMode mode, const Config& overrides = {}, int threads = 1);

std::filesystem::path frame_path(const std::filesystem::path& dir, int id);

/// T_wc per frame.
void write_trajectory_csv(const std::filesystem::path& path, const std::vector<std::pair<int, Posed>>& camera_to_world);
std::map<int, Posed> read_trajectory_csv(const std::filesystem::path& path);

void write_gt_surfels(const std::filesystem::path& path, const GroundTruth& gt);
/// frame -> surfels ordered by id.
std::map<int, std::vector<GtSurfel>> read_gt_surfels(const std::filesystem::path& path);

void write_anchors(const std::filesystem::path& path, const std::vector<Eigen::Vector2i>& anchors);
std::vector<Eigen::Vector2i> read_anchors(const std::filesystem::path& path);

struct SurfelRecord {
  int id = 0;
  Vec3d position = Vec3d::Zero();      // X0 + t of the carried state
  Vec3d raw_position = Vec3d::Zero();  // X0 + t as optimized this frame
  Mat3d rotation = Mat3d::Identity();
  Mat2d deform = Mat2d::Identity();
  double gain = 1.0;
  double bias = 0.0;
  double zncc = 0.0;
  bool inlier = false;
  double residual_rms = 0.0;
};

struct FrameRecord {
  int frame = 0;
  Posed camera;  // T_cw
  bool lost = false;
  double residual_rms = 0.0;
  std::vector<SurfelRecord> surfels;
};

std::vector<FrameRecord> to_records(const TrackOutcome& outcome, const std::vector<Surfel>& surfels);

/// One JSON object per line; pose as a row-major 3x4 [R | t] of T_cw.
void write_results(const std::filesystem::path& path, const std::vector<FrameRecord>& records);
std::vector<FrameRecord> read_results(const std::filesystem::path& path);

}  // namespace surfel

#pragma once

#include <filesystem>
#include <map>
#include <vector>

#include "surfel/dataset.hpp"
#include "surfel/synth.hpp"

namespace surfel {

struct RocPoint {
  double threshold = 0.0;
  double tpr = 0.0;
  double fpr = 0.0;
};

/// Operating points for "positive iff score >= threshold", from the
/// strictest threshold (nothing positive) to the loosest (everything).
std::vector<RocPoint> roc_curve(const std::vector<double>& scores, const std::vector<bool>& labels);

/// Probability that a random positive outscores a random negative (ties
/// count one half). NaN without positives or negatives.
double roc_auc(const std::vector<double>& scores, const std::vector<bool>& labels);

struct EvalOptions {
  /// ROC ground truth: an observation is positive when the surfel is
  /// visible and its error is below this fraction of the mean depth.
  double label_threshold = 0.02;
};

struct SurfelError {
  int id = 0;
  double rmse = 0.0;
  int observations = 0;
};

struct Metrics {
  std::vector<SurfelError> surfels;
  double mean_rmse = 0.0;
  double mean_depth = 0.0;
  double ate = 0.0;
  double traveled = 0.0;
  int frames_processed = 0;
  int frames_total = 0;
  bool lost = false;
  double inlier_ratio = 0.0;
  double mean_residual_rms = 0.0;
  std::vector<RocPoint> roc;
  double auc = 0.0;
};

/// Errors are measured in the camera frame, ||T_cw X - T_cw_gt X_gt||, over
/// inlier observations of visible surfels.
Metrics evaluate(const std::vector<FrameRecord>& results, const std::map<int, Posed>& gt_camera_to_world,
                 const std::map<int, std::vector<GtSurfel>>& gt_surfels, const EvalOptions& options = {});

/// metrics.json, surfel_rmse.csv and roc.csv in `dir`.
void write_metrics(const std::filesystem::path& dir, const Metrics& m);

}  // namespace surfel

#pragma once

#include <Eigen/Core>

#include <vector>

#include "surfel/image.hpp"

namespace surfel {

struct AnchorSelection {
  int max_count = 60;
  /// Minimum distance between anchors (px).
  int min_distance = 30;
  /// Distance from the image border (px); must cover the surfel patch.
  int border = 24;
  /// Grid stride of candidate pixels.
  int stride = 4;
  /// Half width of the structure-tensor window.
  int window = 5;
  /// Reject patches whose depth varies more than this fraction.
  double max_depth_spread = 0.05;
  int patch_half_extent = 11;
};

/// Shi-Tomasi corners (minimum eigenvalue of the structure tensor), picked
/// greedily by score with a minimum spacing. With a depth map, candidates
/// whose patch has invalid or strongly varying depth are skipped.
std::vector<Eigen::Vector2i> select_anchors(const GrayImage& img, const DepthMap* depth,
                                            const AnchorSelection& options = {});

}  // namespace surfel

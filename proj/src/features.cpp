#include "surfel/features.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace surfel {

namespace {

bool depth_ok(const DepthMap& depth, int x, int y, int r, double max_spread) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      if (!depth.valid(x + dx, y + dy)) return false;
      const double d = depth(x + dx, y + dy);
      lo = std::min(lo, d);
      hi = std::max(hi, d);
    }
  }
  return hi - lo <= max_spread * lo;
}

}  // namespace

std::vector<Eigen::Vector2i> select_anchors(const GrayImage& img, const DepthMap* depth,
                                            const AnchorSelection& options) {
  struct Candidate {
    double score;
    int x;
    int y;
  };
  const int w = img.width();
  const int h = img.height();
  const int margin = std::max(options.border, options.window + 1);
  std::vector<Candidate> candidates;
  for (int y = margin; y < h - margin; y += options.stride) {
    for (int x = margin; x < w - margin; x += options.stride) {
      double sxx = 0.0;
      double sxy = 0.0;
      double syy = 0.0;
      for (int dy = -options.window; dy <= options.window; ++dy) {
        for (int dx = -options.window; dx <= options.window; ++dx) {
          const int px = x + dx;
          const int py = y + dy;
          const double gx = 0.5 * (img(px + 1, py) - img(px - 1, py));
          const double gy = 0.5 * (img(px, py + 1) - img(px, py - 1));
          sxx += gx * gx;
          sxy += gx * gy;
          syy += gy * gy;
        }
      }
      const double tr = 0.5 * (sxx + syy);
      const double det = sxx * syy - sxy * sxy;
      const double min_eig = tr - std::sqrt(std::max(0.0, tr * tr - det));
      if (min_eig <= 0.0) continue;
      if (depth && !depth_ok(*depth, x, y, options.patch_half_extent + 1, options.max_depth_spread)) continue;
      candidates.push_back({min_eig, x, y});
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Candidate& a, const Candidate& b) { return a.score > b.score; });
  std::vector<Eigen::Vector2i> out;
  const double d2 = double(options.min_distance) * options.min_distance;
  for (const auto& c : candidates) {
    if (static_cast<int>(out.size()) >= options.max_count) break;
    const bool far = std::all_of(out.begin(), out.end(), [&](const Eigen::Vector2i& p) {
      const double dx = p.x() - c.x;
      const double dy = p.y() - c.y;
      return dx * dx + dy * dy >= d2;
    });
    if (far) out.emplace_back(c.x, c.y);
  }
  return out;
}

}  // namespace surfel

#include "surfel/evaluation.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>

namespace surfel {

std::vector<RocPoint> roc_curve(const std::vector<double>& scores, const std::vector<bool>& labels) {
  if (scores.size() != labels.size()) throw Error(ErrorCode::BadInput, "scores and labels differ in length");
  const double pos = static_cast<double>(std::count(labels.begin(), labels.end(), true));
  const double neg = static_cast<double>(labels.size()) - pos;
  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return scores[a] > scores[b]; });
  std::vector<RocPoint> out{{std::numeric_limits<double>::infinity(), 0.0, 0.0}};
  double tp = 0;
  double fp = 0;
  for (size_t i = 0; i < order.size();) {
    const double thr = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == thr; ++i) (labels[order[i]] ? tp : fp) += 1;
    out.push_back({thr, pos > 0 ? tp / pos : 0.0, neg > 0 ? fp / neg : 0.0});
  }
  return out;
}

double roc_auc(const std::vector<double>& scores, const std::vector<bool>& labels) {
  const auto roc = roc_curve(scores, labels);
  const bool has_pos = std::find(labels.begin(), labels.end(), true) != labels.end();
  const bool has_neg = std::find(labels.begin(), labels.end(), false) != labels.end();
  if (!has_pos || !has_neg) return std::numeric_limits<double>::quiet_NaN();
  // Trapezoids over the curve equal the Mann-Whitney statistic with ties as 1/2.
  double area = 0.0;
  for (size_t i = 1; i < roc.size(); ++i) area += (roc[i].fpr - roc[i - 1].fpr) * 0.5 * (roc[i].tpr + roc[i - 1].tpr);
  return area;
}

Metrics evaluate(const std::vector<FrameRecord>& results, const std::map<int, Posed>& gt_camera_to_world,
                 const std::map<int, std::vector<GtSurfel>>& gt_surfels, const EvalOptions& options) {
  Metrics m;
  m.frames_total = static_cast<int>(gt_camera_to_world.size());
  struct Acc {
    double sum_sq = 0.0;
    int n = 0;
  };
  std::map<int, Acc> per_surfel;
  double depth_sum = 0.0;
  int depth_n = 0;
  double ate_sq = 0.0;
  int ate_n = 0;
  double inlier_sum = 0.0;
  int inlier_frames = 0;
  double residual_sum = 0.0;
  struct Observation {
    double zncc;
    double error;
    bool visible;
  };
  std::vector<Observation> observations;

  const int first = results.empty() ? 0 : results.front().frame;
  for (const auto& rec : results) {
    if (rec.lost) {
      m.lost = true;
      continue;
    }
    ++m.frames_processed;
    const auto gt_pose = gt_camera_to_world.find(rec.frame);
    const auto gt_s = gt_surfels.find(rec.frame);
    if (gt_pose == gt_camera_to_world.end() || gt_s == gt_surfels.end()) {
      throw Error(ErrorCode::BadInput, "no ground truth for frame " + std::to_string(rec.frame));
    }
    const Posed gt_cw = gt_pose->second.inverse();
    const Vec3d c_est = rec.camera.inverse().translation;
    ate_sq += (c_est - gt_pose->second.translation).squaredNorm();
    ++ate_n;
    std::map<int, const GtSurfel*> by_id;
    for (const auto& s : gt_s->second) by_id[s.id] = &s;
    int inliers = 0;
    for (const auto& s : rec.surfels) {
      const auto it = by_id.find(s.id);
      if (it == by_id.end()) throw Error(ErrorCode::BadInput, "no ground truth for surfel " + std::to_string(s.id));
      const GtSurfel& g = *it->second;
      const Vec3d gt_c = gt_cw.apply(g.position);
      inliers += s.inlier;
      if (g.visible) {
        depth_sum += gt_c.z();
        ++depth_n;
      }
      if (s.inlier && g.visible) {
        Acc& a = per_surfel[s.id];
        a.sum_sq += (rec.camera.apply(s.position) - gt_c).squaredNorm();
        ++a.n;
      }
      if (rec.frame != first) {
        observations.push_back({s.zncc, (rec.camera.apply(s.raw_position) - gt_c).norm(), g.visible});
      }
    }
    if (rec.frame != first && !rec.surfels.empty()) {
      inlier_sum += double(inliers) / rec.surfels.size();
      ++inlier_frames;
      residual_sum += rec.residual_rms;
    }
  }

  m.mean_depth = depth_n ? depth_sum / depth_n : 0.0;
  m.ate = ate_n ? std::sqrt(ate_sq / ate_n) : 0.0;
  m.inlier_ratio = inlier_frames ? inlier_sum / inlier_frames : 1.0;
  m.mean_residual_rms = inlier_frames ? residual_sum / inlier_frames : 0.0;
  double rmse_sum = 0.0;
  for (const auto& [id, a] : per_surfel) {
    const double r = std::sqrt(a.sum_sq / a.n);
    m.surfels.push_back({id, r, a.n});
    rmse_sum += r;
  }
  m.mean_rmse = m.surfels.empty() ? 0.0 : rmse_sum / m.surfels.size();

  const Posed* prev = nullptr;
  for (const auto& [f, p] : gt_camera_to_world) {
    if (prev) m.traveled += (p.translation - prev->translation).norm();
    prev = &p;
  }

  const double tau = options.label_threshold * m.mean_depth;
  std::vector<double> scores;
  std::vector<bool> labels;
  for (const auto& o : observations) {
    scores.push_back(o.zncc);
    labels.push_back(o.visible && o.error < tau);
  }
  m.roc = roc_curve(scores, labels);
  m.auc = roc_auc(scores, labels);
  return m;
}

void write_metrics(const std::filesystem::path& dir, const Metrics& m) {
  using nlohmann::json;
  std::filesystem::create_directories(dir);
  auto finite_or_null = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  json j;
  j["mean_rmse"] = m.mean_rmse;
  j["mean_depth"] = m.mean_depth;
  j["relative_rmse"] = m.mean_depth > 0 ? json(m.mean_rmse / m.mean_depth) : json(nullptr);
  j["ate"] = m.ate;
  j["traveled"] = m.traveled;
  j["frames_processed"] = m.frames_processed;
  j["frames_total"] = m.frames_total;
  j["lost"] = m.lost;
  j["inlier_ratio"] = m.inlier_ratio;
  j["mean_residual_rms"] = m.mean_residual_rms;
  j["auc"] = finite_or_null(m.auc);
  json surfels = json::array();
  for (const auto& s : m.surfels) surfels.push_back({{"id", s.id}, {"rmse", s.rmse}, {"observations", s.observations}});
  j["surfels"] = surfels;
  std::ofstream(dir / "metrics.json") << std::setw(2) << j << '\n';

  std::ofstream rmse(dir / "surfel_rmse.csv");
  rmse << std::setprecision(17) << "id,rmse,observations\n";
  for (const auto& s : m.surfels) rmse << s.id << ',' << s.rmse << ',' << s.observations << '\n';

  std::ofstream roc(dir / "roc.csv");
  roc << std::setprecision(17) << "threshold,tpr,fpr\n";
  for (const auto& p : m.roc) roc << p.threshold << ',' << p.tpr << ',' << p.fpr << '\n';
}

}  // namespace surfel

#include "harness.hpp"

#include <cmath>

namespace fs = std::filesystem;

namespace surfel::testing {

fs::path scratch(const std::string& name) {
#ifdef SURFEL_SCRATCH_DIR
  const fs::path root = SURFEL_SCRATCH_DIR;
#else
  const fs::path root = fs::temp_directory_path() / "surfeltrack-tests";
#endif
  const fs::path dir = root / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Dataset synthesize(const Scene& scene, const std::string& name, int frames, int threads) {
  const fs::path dir = scratch(name);
  SynthOptions opt;
  opt.frames = frames;
  opt.threads = threads;
  write_dataset(dir, scene, opt);
  return Dataset(dir);
}

Truth load_truth(const Dataset& ds) {
  return {read_trajectory_csv(ds.dir() / "gt_trajectory.csv"), read_gt_surfels(ds.dir() / "gt_surfels.csv")};
}

OracleErrors oracle_errors(const DatasetRun& run, const Truth& truth) {
  std::map<int, std::pair<double, int>> acc;
  double depth = 0.0;
  int depth_n = 0;
  int inliers = 0;
  int observed = 0;
  const auto& frames = run.outcome.frames;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const FrameResult& fr = frames[f];
    if (fr.lost) continue;
    const Posed gt_cw = truth.camera_to_world.at(fr.frame).inverse();
    const auto& gts = truth.surfels.at(fr.frame);
    for (std::size_t i = 0; i < fr.surfels.size(); ++i) {
      const Surfel& s = run.surfels[i];
      const SurfelResult& r = fr.surfels[i];
      const GtSurfel* g = nullptr;
      for (const auto& c : gts) {
        if (c.id == s.id) g = &c;
      }
      if (!g) continue;
      const Vec3d truth_c = gt_cw.rotation * g->position + gt_cw.translation;
      const Vec3d est_w = s.rest_position + r.state.translation;
      const Vec3d est_c = fr.camera.rotation * est_w + fr.camera.translation;
      if (g->visible) {
        depth += truth_c.z();
        ++depth_n;
      }
      if (f > 0) {
        inliers += r.inlier;
        ++observed;
      }
      if (r.inlier && g->visible) {
        auto& [sum, n] = acc[s.id];
        sum += (est_c - truth_c).squaredNorm();
        ++n;
      }
    }
  }
  OracleErrors out;
  for (const auto& [id, a] : acc) out.rmse[id] = std::sqrt(a.first / a.second);
  for (const auto& [id, r] : out.rmse) out.mean_rmse += r / static_cast<double>(out.rmse.size());
  out.mean_depth = depth_n ? depth / depth_n : 0.0;
  out.inlier_ratio = observed ? static_cast<double>(inliers) / observed : 1.0;
  return out;
}

bool costs_monotone(const TrackOutcome& outcome) {
  for (const auto& f : outcome.frames) {
    for (const auto& rec : f.reports) {
      double last = rec.report.initial_cost;
      for (const auto& it : rec.report.history) {
        if (!it.accepted) continue;
        if (it.cost > last) return false;
        last = it.cost;
      }
    }
  }
  return true;
}

double mean_residual_rms(const TrackOutcome& outcome) {
  double sum = 0.0;
  int n = 0;
  for (std::size_t i = 1; i < outcome.frames.size(); ++i) {
    if (outcome.frames[i].lost) continue;
    sum += outcome.frames[i].residual_rms;
    ++n;
  }
  return n ? sum / n : 0.0;
}

}  // namespace surfel::testing

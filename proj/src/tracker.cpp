#include "surfel/tracker.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>

#include "surfel/parallel.hpp"

namespace surfel {

std::string to_string(GainBiasMode mode) {
  switch (mode) {
    case GainBiasMode::Off: return "off";
    case GainBiasMode::FrozenCoarse: return "frozen";
    case GainBiasMode::Optimized: return "optimized";
  }
  return "unknown";
}

GainBiasMode parse_gain_bias_mode(const std::string& name) {
  if (name == "off") return GainBiasMode::Off;
  if (name == "frozen") return GainBiasMode::FrozenCoarse;
  if (name == "optimized") return GainBiasMode::Optimized;
  throw Error(ErrorCode::BadInput, "unknown gain/bias mode '" + name + "'");
}

std::string to_string(TrackMode mode) {
  switch (mode) {
    case TrackMode::Static: return "static";
    case TrackMode::Deform: return "deform";
    case TrackMode::RigidMap: return "rigid_map";
  }
  return "unknown";
}

TrackMode parse_track_mode(const std::string& name) {
  if (name == "static") return TrackMode::Static;
  if (name == "deform") return TrackMode::Deform;
  if (name == "rigid_map") return TrackMode::RigidMap;
  throw Error(ErrorCode::BadInput, "unknown track mode '" + name + "'");
}

SurfelModel TrackConfig::surfel_model() const {
  SurfelModel m;
  m.model = model;
  m.equireal_form = equireal_form;
  m.omega_isometry = omega_isometry;
  m.saturation = saturation;
  m.optimize_gain_bias = gain_bias == GainBiasMode::Optimized;
  return m;
}

int FrameResult::inlier_count() const {
  return static_cast<int>(std::count_if(surfels.begin(), surfels.end(), [](const auto& s) { return s.inlier; }));
}

FrameSource FrameSource::from_images(std::vector<GrayImage> images, std::vector<int> ids) {
  if (ids.empty()) {
    ids.resize(images.size());
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i);
  }
  auto shared = std::make_shared<std::vector<GrayImage>>(std::move(images));
  return {std::move(ids), [shared](std::size_t i) { return shared->at(i); }};
}

EquilibriumResidual equilibrium_residual(const Surfel& s, const SurfelStated& state, const EquilibriumAnchor& anchor,
                                         double omega) {
  const Eigen::LLT<Mat3d> llt(anchor.information);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::Singular, "equilibrium information is not positive definite");
  const Mat3d l = std::sqrt(omega) * Mat3d(llt.matrixU());
  EquilibriumResidual e;
  e.residual = l * (surfel_center(s, state) - anchor.position);
  e.d_translation = l;
  e.d_rotation.setZero();
  return e;
}

DeformationEnergyResidual deformation_energy_residual(const Mat2d& f, double omega) {
  const double w = std::sqrt(omega);
  return {w * Vec3d(f(0, 0) - 1.0, f(0, 1), f(1, 1) - 1.0), w * Mat3d::Identity()};
}

std::vector<Surfel> build_surfels(const GrayImage& reference, const DepthMap& depth, const Intrinsics& k,
                                  const std::vector<Eigen::Vector2i>& pixels, const Posed& reference_pose,
                                  const TrackConfig& config) {
  const ImagePyramid pyr = build_pyramid(reference, config.levels);
  std::vector<Surfel> out;
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    try {
      out.push_back(make_surfel(static_cast<int>(i), depth, k, pixels[i], pyr, reference_pose, config.half_extent));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::InvalidDepth && e.code() != ErrorCode::OutOfImage) throw;
    }
  }
  return out;
}

std::vector<EquilibriumAnchor> rest_anchors(const std::vector<Surfel>& surfels, double sigma) {
  std::vector<EquilibriumAnchor> out;
  out.reserve(surfels.size());
  for (const auto& s : surfels) out.push_back(rest_anchor(s, sigma));
  return out;
}

std::vector<EquilibriumAnchor> mean_anchors(const std::vector<std::vector<Vec3d>>& trajectories, double sigma) {
  std::vector<EquilibriumAnchor> out;
  for (const auto& traj : trajectories) {
    if (traj.empty()) throw Error(ErrorCode::BadInput, "empty trajectory for equilibrium anchor");
    Vec3d mean = Vec3d::Zero();
    for (const auto& p : traj) mean += p;
    out.push_back({mean / static_cast<double>(traj.size()), Mat3d::Identity() / (sigma * sigma)});
  }
  return out;
}

int classify_outliers(FrameResult& frame, double threshold) {
  int n = 0;
  for (auto& s : frame.surfels) {
    s.inlier = s.zncc >= threshold;
    n += s.inlier;
  }
  return n;
}

namespace {

int effective_levels(const std::vector<Surfel>& surfels, const TrackConfig& config) {
  int levels = std::max(1, config.levels);
  for (const auto& s : surfels) levels = std::min(levels, static_cast<int>(s.textures.size()));
  return std::max(1, levels);
}

/// Matches mean and spread of I to T. Unlike the least-squares fit this does
/// not shrink the gain when the patch is still misaligned.
void fit_gain_bias(const ResidualBlock& block, const TexturePatch& texture, SurfelStated& state) {
  const auto [t, i] = valid_samples(block, texture);
  if (t.size() < 2) return;
  const double mt = t.mean();
  const double mi = i.mean();
  const double st = std::sqrt((t.array() - mt).square().mean());
  const double si = std::sqrt((i.array() - mi).square().mean());
  if (si < 1e-6 || st < 1e-6) {
    state.gain = 1.0;
    state.bias = mt - mi;
    return;
  }
  state.gain = st / si;
  state.bias = mt - state.gain * mi;
}

void init_gain_bias(const Surfel& s, SurfelStated& state, const Posed& camera, const GrayImage& img,
                    const Intrinsics& k, const TexturePatch& tex, const TrackConfig& config) {
  state.gain = 1.0;
  state.bias = 0.0;
  if (config.gain_bias == GainBiasMode::Off) return;
  const ResidualBlock block = photometric_residuals(s, state, camera, img, k, tex, config.saturation);
  fit_gain_bias(block, tex, state);
}

struct Score {
  double zncc = 0.0;
  double rms = 0.0;
  double valid_fraction = 0.0;
  double sum_sq = 0.0;
  int valid = 0;
};

Score score_surfel(const Surfel& s, const SurfelStated& state, const Posed& camera, const GrayImage& img,
                   const Intrinsics& k, const TrackConfig& config) {
  const TexturePatch& tex = s.texture(0);
  const ResidualBlock block = photometric_residuals(s, state, camera, img, k, tex, config.saturation);
  Score sc;
  sc.valid_fraction = block.valid_fraction();
  if (sc.valid_fraction < config.min_valid_fraction) return sc;
  const auto [t, i] = valid_samples(block, tex);
  sc.zncc = zncc(t, i);
  sc.rms = block.rms();
  sc.valid = static_cast<int>(t.size());
  sc.sum_sq = sc.rms * sc.rms * sc.valid;
  return sc;
}

struct SurfelSolve {
  SurfelStated state;
  std::vector<SolveRecord> reports;
};

/// Coarse-to-fine alignment of one surfel against a fixed camera.
SurfelSolve solve_surfel(const Surfel& s, SurfelStated state, const Posed& camera, const ImagePyramid& pyr,
                         const Intrinsics& k, const TrackConfig& config, int levels,
                         const EquilibriumAnchor* anchor = nullptr) {
  SurfelSolve out;
  const SurfelModel model = config.surfel_model();
  for (int level = levels - 1; level >= 0; --level) {
    const GrayImage& img = pyr.level(level);
    const Intrinsics kl = k.at_level(level);
    const TexturePatch& tex = s.texture(level);
    if (level == levels - 1) init_gain_bias(s, state, camera, img, kl, tex, config);
    const SurfelProblem<GrayImage> problem(s, tex, img, kl, camera, model, anchor,
                                           anchor ? config.omega_equilibrium : 0.0);
    auto res = lm_solve(problem, state, config.lm);
    state = res.solution;
    out.reports.push_back({s.id, level, std::move(res.report)});
    if (level == levels - 1 && config.gain_bias == GainBiasMode::FrozenCoarse) {
      // The first fit sees a misaligned patch; refit by least squares once
      // aligned, where that fit is no longer biased toward a small gain.
      const ResidualBlock block = photometric_residuals(s, state, camera, img, kl, tex, config.saturation);
      const auto [t, i] = valid_samples(block, tex);
      if (t.size() >= 2) {
        const GainBias gb = estimate_gain_bias(t, i);
        state.gain = gb.gain;
        state.bias = gb.bias;
      }
      res = lm_solve(problem, state, config.lm);
      state = res.solution;
      out.reports.push_back({s.id, level, std::move(res.report)});
    }
  }
  out.state = state;
  return out;
}

FrameResult reference_frame(int id, const std::vector<Surfel>& surfels, const Posed& camera, const GrayImage& img,
                            const Intrinsics& k, const TrackConfig& config) {
  FrameResult fr;
  fr.frame = id;
  fr.camera = camera;
  double sum = 0.0;
  int count = 0;
  for (const auto& s : surfels) {
    SurfelResult r;
    r.id = s.id;
    const Score sc = score_surfel(s, r.state, camera, img, k, config);
    r.zncc = sc.zncc;
    r.residual_rms = sc.rms;
    r.valid_fraction = sc.valid_fraction;
    sum += sc.sum_sq;
    count += sc.valid;
    fr.surfels.push_back(r);
  }
  classify_outliers(fr, config.zncc_threshold);
  // The reference frame defines the textures; every surfel starts as inlier.
  for (auto& r : fr.surfels) r.inlier = true;
  fr.residual_rms = count ? std::sqrt(sum / count) : 0.0;
  return fr;
}

void finish_frame(FrameResult& fr, const std::vector<Score>& scores) {
  double sum = 0.0;
  int count = 0;
  for (const auto& sc : scores) {
    sum += sc.sum_sq;
    count += sc.valid;
  }
  fr.residual_rms = count ? std::sqrt(sum / count) : 0.0;
}

/// Camera-only coarse-to-fine alignment with the surfels of `members` held at
/// `states`, whose gain/bias is refit at the coarsest level. nullopt when the
/// linear system fails before any step is taken.
std::optional<Posed> align_camera(const ImagePyramid& pyr, const Intrinsics& k, const std::vector<Surfel>& surfels,
                                  const std::vector<int>& members, std::vector<SurfelStated>& states, Posed x,
                                  const TrackConfig& config, int levels, std::vector<SolveRecord>& reports) {
  for (int level = levels - 1; level >= 0; --level) {
    const GrayImage& img = pyr.level(level);
    const Intrinsics kl = k.at_level(level);
    if (level == levels - 1) {
      for (int i : members) init_gain_bias(surfels[i], states[i], x, img, kl, surfels[i].texture(level), config);
    }
    std::vector<typename PoseProblem<GrayImage>::Term> terms;
    terms.reserve(members.size());
    for (int i : members) terms.push_back({&surfels[i], &surfels[i].texture(level), states[i]});
    const PoseProblem<GrayImage> problem(std::move(terms), img, kl, config.saturation);
    auto res = lm_solve(problem, x, config.lm);
    const bool failed = res.report.termination == Termination::LinearSolveFailure && res.report.accepted == 0;
    reports.push_back({-1, level, std::move(res.report)});
    if (failed) return std::nullopt;
    x = res.solution;
  }
  return x;
}

}  // namespace

TrackOutcome track_static(const FrameSource& frames, const std::vector<Surfel>& surfels, const Intrinsics& k,
                          const TrackConfig& config, const Posed& camera) {
  TrackOutcome out;
  if (frames.size() == 0) return out;
  const int levels = effective_levels(surfels, config);
  const std::size_t n = surfels.size();
  std::vector<SurfelStated> states(n);

  out.frames.push_back(reference_frame(frames.ids[0], surfels, camera, frames.load(0), k, config));
  out.frames_processed = 1;

  for (std::size_t f = 1; f < frames.size(); ++f) {
    const ImagePyramid pyr = build_pyramid(frames.load(f), levels);
    FrameResult fr;
    fr.frame = frames.ids[f];
    fr.camera = camera;
    fr.surfels.resize(n);
    std::vector<std::vector<SolveRecord>> reports(n);
    std::vector<Score> scores(n);
    parallel_for(static_cast<int>(n), config.threads, [&](int i) {
      const Surfel& s = surfels[i];
      SurfelSolve sol = solve_surfel(s, states[i], camera, pyr, k, config, levels);
      scores[i] = score_surfel(s, sol.state, camera, pyr.level(0), k, config);
      SurfelResult& r = fr.surfels[i];
      r.id = s.id;
      r.raw_state = sol.state;
      r.zncc = scores[i].zncc;
      r.residual_rms = scores[i].rms;
      r.valid_fraction = scores[i].valid_fraction;
      reports[i] = std::move(sol.reports);
    });
    classify_outliers(fr, config.zncc_threshold);
    for (std::size_t i = 0; i < n; ++i) {
      SurfelResult& r = fr.surfels[i];
      if (r.inlier) states[i] = r.raw_state;
      r.state = states[i];
      for (auto& rec : reports[i]) fr.reports.push_back(std::move(rec));
    }
    finish_frame(fr, scores);
    out.frames.push_back(std::move(fr));
    ++out.frames_processed;
  }
  return out;
}

TrackOutcome track_deformable(const FrameSource& frames, const std::vector<Surfel>& surfels,
                              const std::vector<EquilibriumAnchor>& anchors, const Posed& pose0,
                              const Intrinsics& k, const TrackConfig& config) {
  if (anchors.size() != surfels.size()) throw Error(ErrorCode::BadInput, "one equilibrium anchor per surfel required");
  TrackOutcome out;
  if (frames.size() == 0) return out;
  const int levels = effective_levels(surfels, config);
  const SurfelModel model = config.surfel_model();
  const std::size_t n = surfels.size();
  std::vector<SurfelStated> states(n);
  std::vector<bool> active(n, true);
  Posed camera = pose0;

  out.frames.push_back(reference_frame(frames.ids[0], surfels, camera, frames.load(0), k, config));
  out.frames_processed = 1;

  for (std::size_t f = 1; f < frames.size(); ++f) {
    const ImagePyramid pyr = build_pyramid(frames.load(f), levels);
    FrameResult fr;
    fr.frame = frames.ids[f];
    fr.surfels.resize(n);

    std::vector<int> idx;
    for (std::size_t i = 0; i < n; ++i) {
      if (active[i]) idx.push_back(static_cast<int>(i));
    }
    auto lose = [&] {
      fr.lost = true;
      fr.camera = camera;
      for (std::size_t i = 0; i < n; ++i) {
        fr.surfels[i].id = surfels[i].id;
        fr.surfels[i].state = fr.surfels[i].raw_state = states[i];
      }
      out.frames.push_back(std::move(fr));
      out.lost = true;
    };
    if (static_cast<int>(idx.size()) < config.min_inliers) {
      lose();
      break;
    }

    // Joint coarse-to-fine solve over the camera and the active surfels.
    auto joint_solve = [&](JointState x, const std::vector<int>& members, int from_level) -> std::optional<JointState> {
      for (int level = from_level; level >= 0; --level) {
        const GrayImage& img = pyr.level(level);
        const Intrinsics kl = k.at_level(level);
        if (level == levels - 1) {
          for (std::size_t j = 0; j < members.size(); ++j) {
            const Surfel& s = surfels[members[j]];
            init_gain_bias(s, x.surfels[j], x.camera, img, kl, s.texture(level), config);
          }
        }
        std::vector<typename JointProblem<GrayImage>::Term> terms;
        terms.reserve(members.size());
        for (int i : members) terms.push_back({&surfels[i], &surfels[i].texture(level), &anchors[i]});
        const JointProblem<GrayImage> problem(std::move(terms), img, kl, model, config.omega_equilibrium,
                                              config.threads);
        auto res = lm_solve(problem, x, config.lm);
        const bool failed = res.report.termination == Termination::LinearSolveFailure && res.report.accepted == 0;
        fr.reports.push_back({-1, level, std::move(res.report)});
        if (failed) return std::nullopt;
        x = std::move(res.solution);
      }
      return x;
    };

    // Camera-only prealignment: the joint problem is nearly flat along the
    // camera-map gauge and damped steps hardly move along it, so the rigid
    // part of the motion is given to the camera first.
    JointState x0{camera, {}};
    {
      std::vector<SurfelStated> held = states;
      if (auto pre = align_camera(pyr, k, surfels, idx, held, camera, config, levels, fr.reports)) x0.camera = *pre;
    }
    for (int i : idx) x0.surfels.push_back(states[i]);
    auto solved = joint_solve(x0, idx, levels - 1);
    if (!solved) {
      lose();
      break;
    }

    std::vector<Score> scores(n);
    auto score_members = [&](const JointState& x, const std::vector<int>& members) {
      parallel_for(static_cast<int>(members.size()), config.threads, [&](int j) {
        const int i = members[j];
        scores[i] = score_surfel(surfels[i], x.surfels[j], x.camera, pyr.level(0), k, config);
      });
    };
    score_members(*solved, idx);

    // Refine at the finest level without this frame's outliers.
    std::vector<int> kept;
    std::vector<SurfelStated> kept_states;
    for (std::size_t j = 0; j < idx.size(); ++j) {
      if (scores[idx[j]].zncc >= config.zncc_threshold) {
        kept.push_back(idx[j]);
        kept_states.push_back(solved->surfels[j]);
      }
    }
    JointState final_state = *solved;
    std::vector<int> members = idx;
    if (kept.size() < idx.size() && static_cast<int>(kept.size()) >= config.min_inliers) {
      auto refined = joint_solve(JointState{solved->camera, kept_states}, kept, 0);
      if (refined) {
        final_state = *refined;
        members = kept;
        score_members(final_state, members);
      }
    }
    fr.camera = final_state.camera;

    std::vector<bool> solved_now(n, false);
    std::vector<SurfelStated> raw = states;
    for (std::size_t j = 0; j < members.size(); ++j) {
      raw[members[j]] = final_state.surfels[j];
      solved_now[members[j]] = true;
    }
    // Surfels dropped by the refinement keep their joint-solve estimate.
    for (std::size_t j = 0; j < idx.size(); ++j) {
      if (!solved_now[idx[j]]) raw[idx[j]] = solved->surfels[j];
    }

    // Excluded surfels: re-align against the new pose and re-test.
    std::vector<int> retry;
    for (std::size_t i = 0; i < n; ++i) {
      if (!active[i] && config.reaccept_outliers) retry.push_back(static_cast<int>(i));
    }
    std::vector<std::vector<SolveRecord>> retry_reports(retry.size());
    parallel_for(static_cast<int>(retry.size()), config.threads, [&](int j) {
      const int i = retry[j];
      SurfelSolve sol = solve_surfel(surfels[i], states[i], fr.camera, pyr, k, config, levels, &anchors[i]);
      raw[i] = sol.state;
      scores[i] = score_surfel(surfels[i], sol.state, fr.camera, pyr.level(0), k, config);
      retry_reports[j] = std::move(sol.reports);
    });
    for (auto& recs : retry_reports) {
      for (auto& rec : recs) fr.reports.push_back(std::move(rec));
    }
    std::vector<bool> scored(n, false);
    for (int i : idx) scored[i] = true;
    for (int i : retry) scored[i] = true;
    for (std::size_t i = 0; i < n; ++i) {
      if (!scored[i]) scores[i] = score_surfel(surfels[i], states[i], fr.camera, pyr.level(0), k, config);
    }

    for (std::size_t i = 0; i < n; ++i) {
      SurfelResult& r = fr.surfels[i];
      r.id = surfels[i].id;
      r.raw_state = raw[i];
      r.zncc = scores[i].zncc;
      r.residual_rms = scores[i].rms;
      r.valid_fraction = scores[i].valid_fraction;
    }
    const int inliers = classify_outliers(fr, config.zncc_threshold);
    for (std::size_t i = 0; i < n; ++i) {
      SurfelResult& r = fr.surfels[i];
      if (r.inlier) states[i] = r.raw_state;
      r.state = states[i];
      active[i] = r.inlier;
    }
    finish_frame(fr, scores);
    camera = fr.camera;
    if (inliers < config.min_inliers) {
      fr.lost = true;
      out.frames.push_back(std::move(fr));
      out.lost = true;
      break;
    }
    out.frames.push_back(std::move(fr));
    ++out.frames_processed;
  }
  return out;
}

TrackOutcome track_rigid_map(const FrameSource& frames, const std::vector<Surfel>& surfels, const Posed& pose0,
                             const Intrinsics& k, const TrackConfig& config) {
  TrackOutcome out;
  if (frames.size() == 0) return out;
  const int levels = effective_levels(surfels, config);
  const std::size_t n = surfels.size();
  std::vector<bool> active(n, true);
  Posed camera = pose0;

  out.frames.push_back(reference_frame(frames.ids[0], surfels, camera, frames.load(0), k, config));
  out.frames_processed = 1;

  for (std::size_t f = 1; f < frames.size(); ++f) {
    const ImagePyramid pyr = build_pyramid(frames.load(f), levels);
    FrameResult fr;
    fr.frame = frames.ids[f];
    fr.surfels.resize(n);
    std::vector<int> idx;
    for (std::size_t i = 0; i < n; ++i) {
      if (active[i]) idx.push_back(static_cast<int>(i));
    }
    std::vector<SurfelStated> gb(n);
    std::optional<Posed> x;
    if (static_cast<int>(idx.size()) >= config.min_inliers) {
      x = align_camera(pyr, k, surfels, idx, gb, camera, config, levels, fr.reports);
    }
    const bool failed = !x;
    fr.camera = failed ? camera : *x;
    std::vector<Score> scores(n);
    for (std::size_t i = 0; i < n; ++i) {
      // Excluded surfels get a fresh gain/bias fit under the new pose.
      if (!active[i]) init_gain_bias(surfels[i], gb[i], fr.camera, pyr.level(levels - 1), k.at_level(levels - 1),
                                     surfels[i].texture(levels - 1), config);
      scores[i] = score_surfel(surfels[i], gb[i], fr.camera, pyr.level(0), k, config);
      SurfelResult& r = fr.surfels[i];
      r.id = surfels[i].id;
      r.state = r.raw_state = gb[i];
      r.zncc = scores[i].zncc;
      r.residual_rms = scores[i].rms;
      r.valid_fraction = scores[i].valid_fraction;
    }
    const int inliers = classify_outliers(fr, config.zncc_threshold);
    for (std::size_t i = 0; i < n; ++i) active[i] = fr.surfels[i].inlier;
    finish_frame(fr, scores);
    camera = fr.camera;
    if (failed || inliers < config.min_inliers) {
      fr.lost = true;
      out.frames.push_back(std::move(fr));
      out.lost = true;
      break;
    }
    out.frames.push_back(std::move(fr));
    ++out.frames_processed;
  }
  return out;
}

}  // namespace surfel

// surfel_track: synthetic datasets, tracking, evaluation and self-checks.
//
// Exit codes: 0 success, 2 usage or input error, 3 tracking lost,
// 4 diagnostic failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

#include "surfel/dataset.hpp"
#include "surfel/diagnostics.hpp"
#include "surfel/evaluation.hpp"
#include "surfel/features.hpp"
#include "surfel/parallel.hpp"
#include "surfel/synth.hpp"
#include "surfel/tracker.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace surfel;

namespace {

constexpr const char* kVersion = "0.1.0";
constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitLost = 3;
constexpr int kExitDiagnostic = 4;

int resolve_threads(int requested) { return requested > 0 ? requested : default_thread_count(); }

void write_manifest(const fs::path& path, const std::string& command, const json& config, const std::string& dataset,
                    const std::string& output, std::uint64_t seed, double seconds) {
  json m;
  m["command"] = command;
  m["config"] = config;
  m["dataset"] = dataset;
  m["output"] = output;
  m["seed"] = seed;
  m["version"] = kVersion;
  m["timings"] = {{"total_seconds", seconds}};
  std::ofstream(path) << std::setw(2) << m << '\n';
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

struct SynthArgs {
  std::string preset;
  std::uint64_t seed = 1;
  std::string out;
  int frames = 50;
};

int run_synth(const SynthArgs& a, int threads) {
  const auto start = std::chrono::steady_clock::now();
  if (a.frames <= 0) {
    std::cerr << "synth: --frames must be positive\n";
    return kExitUsage;
  }
  const Scene scene = make_scene(a.preset, a.seed);
  SynthOptions opt;
  opt.frames = a.frames;
  opt.threads = threads;
  const SynthSummary summary = write_dataset(a.out, scene, opt);
  const json config = {{"preset", a.preset}, {"seed", a.seed}, {"frames", a.frames}};
  write_manifest(fs::path(a.out) / "manifest.json", "synth", config, "", a.out, a.seed, seconds_since(start));
  std::cout << "wrote " << summary.frames.size() << " frames and " << summary.anchors << " anchors to " << a.out
            << '\n';
  return kExitOk;
}

struct TrackArgs {
  std::string dataset;
  std::string mode = "deform";
  std::string out;
  std::string config_file;
  std::vector<std::string> overrides;
};

int run_track(const TrackArgs& a, int threads) {
  const auto start = std::chrono::steady_clock::now();
  const Dataset ds(a.dataset);
  const TrackMode mode = parse_track_mode(a.mode);
  Config overrides;
  if (!a.config_file.empty()) overrides = read_config(a.config_file);
  for (const auto& o : a.overrides) {
    for (const auto& [k, v] : parse_config(o)) overrides[k] = v;
  }
  const DatasetRun run = track_dataset(ds, mode, overrides, threads);
  const TrackConfig& tc = run.config;
  const std::vector<Surfel>& surfels = run.surfels;
  const TrackOutcome& outcome = run.outcome;

  const fs::path out(a.out);
  fs::create_directories(out);
  write_results(out / "results.ndjson", to_records(outcome, surfels));
  std::vector<std::pair<int, Posed>> traj;
  for (const auto& f : outcome.frames) {
    if (!f.lost) traj.emplace_back(f.frame, f.camera.inverse());
  }
  write_trajectory_csv(out / "trajectory.csv", traj);
  {
    std::ofstream solves(out / "solves.csv");
    solves << std::setprecision(10)
           << "frame,surfel,level,iterations,accepted,initial_cost,final_cost,termination,monotone\n";
    for (const auto& f : outcome.frames) {
      for (const auto& r : f.reports) {
        solves << f.frame << ',' << r.surfel << ',' << r.level << ',' << r.report.iterations << ','
               << r.report.accepted << ',' << r.report.initial_cost << ',' << r.report.final_cost << ','
               << to_string(r.report.termination) << ',' << (r.report.monotone() ? 1 : 0) << '\n';
      }
    }
  }
  json config;
  for (const auto& [k, v] : to_config(tc)) config[k] = v;
  config["mode"] = a.mode;
  config["surfels"] = surfels.size();
  write_manifest(out / "manifest.json", "track", config, a.dataset, a.out,
                 static_cast<std::uint64_t>(config_int(ds.config(), "seed", 0)), seconds_since(start));

  double rms = 0.0;
  int n = 0;
  for (size_t i = 1; i < outcome.frames.size(); ++i) {
    if (outcome.frames[i].lost) continue;
    rms += outcome.frames[i].residual_rms;
    ++n;
  }
  std::cout << "mode " << a.mode << ": " << surfels.size() << " surfels, " << outcome.frames_processed << "/"
            << ds.frames().size() << " frames processed, mean residual rms " << (n ? rms / n : 0.0) << '\n';
  if (outcome.lost) {
    std::cerr << "tracking lost after " << outcome.frames_processed << " frames\n";
    return kExitLost;
  }
  return kExitOk;
}

struct EvalArgs {
  std::string results;
  std::string dataset;
  std::string out;
  double label_threshold = 0.02;
};

int run_eval(const EvalArgs& a) {
  const fs::path results_dir(a.results);
  const fs::path results_file = fs::is_directory(results_dir) ? results_dir / "results.ndjson" : results_dir;
  if (!fs::exists(results_file)) throw Error(ErrorCode::BadInput, "no results at " + results_file.string());
  const fs::path gt(a.dataset);
  if (!fs::exists(gt / "gt_trajectory.csv") || !fs::exists(gt / "gt_surfels.csv")) {
    throw Error(ErrorCode::BadInput, "dataset " + gt.string() + " has no ground truth");
  }
  EvalOptions opt;
  opt.label_threshold = a.label_threshold;
  const Metrics m = evaluate(read_results(results_file), read_trajectory_csv(gt / "gt_trajectory.csv"),
                             read_gt_surfels(gt / "gt_surfels.csv"), opt);
  const fs::path out = a.out.empty() ? results_file.parent_path() : fs::path(a.out);
  write_metrics(out, m);
  std::cout << "mean rmse " << m.mean_rmse << " (" << 100.0 * m.mean_rmse / std::max(m.mean_depth, 1e-12)
            << "% of depth), ate " << m.ate << ", frames " << m.frames_processed << "/" << m.frames_total
            << ", inlier ratio " << m.inlier_ratio << ", auc " << m.auc << '\n';
  return kExitOk;
}

struct CheckArgs {
  std::uint64_t seed = 1;
  int trials = 200;
  std::string csv;
  bool inject = false;
};

int run_check(const CheckArgs& a) {
  if (a.trials <= 0) {
    std::cerr << "check-jacobians: --trials must be positive\n";
    return kExitUsage;
  }
  JacobianCheckOptions opt;
  opt.seed = a.seed;
  opt.trials = a.trials;
  opt.inject_sign_flip = a.inject;
  const JacobianCheckReport rep = check_jacobians(opt);
  for (const auto& r : rep.rows) {
    std::cout << std::left << std::setw(22) << r.block << (r.pass ? "ok  " : "FAIL") << "  max rel err "
              << std::scientific << std::setprecision(3) << r.max_relative_error << std::defaultfloat << '\n';
  }
  if (!a.csv.empty()) {
    std::ofstream out(a.csv);
    write_csv(out, rep);
  }
  return rep.pass() ? kExitOk : kExitDiagnostic;
}

struct AmbiguityArgs {
  std::string which;
  std::uint64_t seed = 1;
  std::vector<double> mus{0.5, 2.0, 10.0};
  std::vector<double> omegas{0.0, 1.0};
  double sigma = 1.0;
};

int run_ambiguity(const AmbiguityArgs& a) {
  bool ok = true;
  if (a.which == "growing") {
    GrowingAmbiguityOptions opt;
    opt.seed = a.seed;
    opt.mus = a.mus;
    const auto rep = growing_ambiguity(opt);
    std::cout << "max pixel displacement " << rep.max_displacement << "\n"
              << "general-F sigma_min/sigma_max (worst) " << rep.worst_ratio_general << "\n"
              << "near-null vs scale direction cosine (worst) " << rep.worst_cosine << "\n"
              << "isometry conditioning gain (worst) " << rep.worst_improvement << "\n"
              << "near-null vector (t, w, F11, F12, F22): " << rep.null_vector.transpose() << "\n";
    ok = rep.pass();
  } else {
    for (double w : a.omegas) {
      FloatingAmbiguityOptions opt;
      opt.seed = a.seed;
      opt.omega_equilibrium = w;
      opt.sigma = a.sigma;
      const auto rep = floating_ambiguity(opt);
      const bool holds = w == 0.0 ? rep.near_zero >= 6 : rep.full_rank(opt.relative_threshold);
      std::cout << "omega_E " << w << ": " << rep.near_zero << " singular values below 1e-8 sigma_max, ratio "
                << rep.ratio << (w == 0.0 ? " (gauge freedom)" : (holds ? " (full rank)" : " (rank deficient)"))
                << "\n  smallest:";
      const auto& sv = rep.spectrum.singular_values;
      for (Eigen::Index i = std::max<Eigen::Index>(0, sv.size() - 8); i < sv.size(); ++i) std::cout << ' ' << sv(i);
      std::cout << '\n';
      ok = ok && holds;
    }
  }
  return ok ? kExitOk : kExitDiagnostic;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Direct sparse deformable surfel tracking"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "Worker threads (default: SURFEL_TRACK_THREADS or all cores)");

  SynthArgs synth;
  auto* cs = app.add_subcommand("synth", "Render a synthetic dataset with ground truth");
  cs->add_option("preset", synth.preset, "rigid_plane|bending_sheet|two_bodies_sliding|illumination_drift|occlusion|missing_frames")
      ->required();
  cs->add_option("--seed", synth.seed, "Scene seed");
  cs->add_option("--out", synth.out, "Output directory")->required();
  cs->add_option("--frames", synth.frames, "Number of frame slots");

  TrackArgs track;
  auto* ct = app.add_subcommand("track", "Track surfels through a dataset");
  ct->add_option("--dataset", track.dataset, "Dataset directory")->required();
  ct->add_option("--mode", track.mode, "static|deform|rigid_map")
      ->check(CLI::IsMember({"static", "deform", "rigid_map"}));
  ct->add_option("--out", track.out, "Output directory")->required();
  ct->add_option("--config", track.config_file, "key=value file overriding dataset settings");
  ct->add_option("--set", track.overrides, "key=value override (repeatable, last wins)");

  EvalArgs ev;
  auto* ce = app.add_subcommand("eval", "Compare tracking results with ground truth");
  ce->add_option("--results", ev.results, "Results directory or results.ndjson")->required();
  ce->add_option("--dataset", ev.dataset, "Dataset directory with ground truth")->required();
  ce->add_option("--out", ev.out, "Metrics directory (default: next to the results)");
  ce->add_option("--label-threshold", ev.label_threshold, "ROC label error threshold, fraction of mean depth");

  CheckArgs check;
  auto* cj = app.add_subcommand("check-jacobians", "Analytic Jacobians against finite differences");
  cj->add_option("--seed", check.seed, "Random seed");
  cj->add_option("--trials", check.trials, "Random configurations per block");
  cj->add_option("--csv", check.csv, "Write max errors as CSV");
  cj->add_flag("--inject-sign-flip", check.inject, "Flip the rotation block (self-test of the checker)")
      ->group("");

  AmbiguityArgs amb;
  auto* ca = app.add_subcommand("ambiguity", "Gauge ambiguity analyses");
  ca->add_option("which", amb.which, "growing|floating")->required()->check(CLI::IsMember({"growing", "floating"}));
  ca->add_option("--seed", amb.seed, "Random seed");
  ca->add_option("--mu", amb.mus, "Scale factors for the growing-map check");
  ca->add_option("--omega-e", amb.omegas, "Equilibrium weights for the floating-map check");
  ca->add_option("--sigma", amb.sigma, "Equilibrium standard deviation for the floating-map check");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  const int workers = resolve_threads(threads);
  try {
    if (*cs) return run_synth(synth, workers);
    if (*ct) return run_track(track, workers);
    if (*ce) return run_eval(ev);
    if (*cj) return run_check(check);
    if (*ca) return run_ambiguity(amb);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

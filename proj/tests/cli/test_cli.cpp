// Runs the surfel_track executable end to end.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "harness.hpp"
#include <json.hpp>
#include "surfel/dataset.hpp"

namespace fs = std::filesystem;
using namespace surfel;

namespace {

int run(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("\"") + SURFEL_TRACK_EXE + "\" " + args + " >\"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Same file names and bytes, manifest.json excepted (it records timings).
bool same_outputs(const fs::path& a, const fs::path& b) {
  int files = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    const auto name = e.path().filename();
    if (name == "manifest.json") continue;
    if (!fs::exists(b / name) || slurp(e.path()) != slurp(b / name)) return false;
    ++files;
  }
  for (const auto& e : fs::directory_iterator(b)) {
    if (e.path().filename() != "manifest.json" && !fs::exists(a / e.path().filename())) return false;
  }
  return files > 0;
}

double mean_residual(const fs::path& results) {
  double sum = 0.0;
  int n = 0;
  for (const auto& f : read_results(results)) {
    if (f.frame == 0 || f.lost) continue;
    sum += f.residual_rms;
    ++n;
  }
  return n ? sum / n : 0.0;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

}  // namespace

TEST_CASE("synth writes a dataset deterministically") {
  const fs::path dir = testing::scratch("cli_synth");
  REQUIRE(run("synth rigid_plane --seed 3 --frames 10 --out " + q(dir / "a"), dir / "a.log") == 0);
  for (int i = 0; i < 10; ++i) CHECK(fs::exists(frame_path(dir / "a", i)));
  CHECK(fs::exists(dir / "a" / "depth_00000.pgm"));
  CHECK(fs::exists(dir / "a" / "intrinsics.cfg"));
  CHECK(fs::exists(dir / "a" / "gt_trajectory.csv"));
  CHECK(fs::exists(dir / "a" / "gt_surfels.csv"));
  CHECK(fs::exists(dir / "a" / "manifest.json"));
  REQUIRE(run("synth rigid_plane --seed 3 --frames 10 --out " + q(dir / "b"), dir / "b.log") == 0);
  CHECK(same_outputs(dir / "a", dir / "b"));
}

TEST_CASE("usage errors exit with 2") {
  const fs::path dir = testing::scratch("cli_usage");
  CHECK(run("synth rigid_plane --frames 0 --out " + q(dir / "x"), dir / "frames.log") == 2);
  CHECK(run("synth teapot --out " + q(dir / "y"), dir / "preset.log") == 2);
  CHECK(run("track --dataset " + q(dir / "nowhere") + " --mode static --out " + q(dir / "t"), dir / "track.log") == 2);
  CHECK(run("check-jacobians --trials 0", dir / "trials.log") == 2);
  CHECK(run("no-such-command", dir / "cmd.log") == 2);
  CHECK(run("", dir / "empty.log") == 2);
}

TEST_CASE("check-jacobians") {
  const fs::path dir = testing::scratch("cli_jacobians");
  CHECK(run("check-jacobians --csv " + q(dir / "errors.csv"), dir / "ok.log") == 0);
  const std::string csv = slurp(dir / "errors.csv");
  for (const char* block : {"translation", "rotation", "camera", "equilibrium", "projection"}) {
    CHECK(csv.find(block) != std::string::npos);
  }
  CHECK(run("check-jacobians --trials 5 --inject-sign-flip", dir / "flip.log") == 4);
}

TEST_CASE("ambiguity reports") {
  const fs::path dir = testing::scratch("cli_ambiguity");
  CHECK(run("ambiguity growing --mu 2", dir / "growing.log") == 0);
  CHECK(run("ambiguity floating --omega-e 0", dir / "floating0.log") == 0);
  CHECK(run("ambiguity floating --omega-e 1", dir / "floating1.log") == 0);
}

TEST_CASE("static scene tracked in deform mode has no trajectory error") {
  const fs::path dir = testing::scratch("cli_static");
  Scene scene = make_scene("rigid_plane", 1);
  scene.camera_motion = {};
  for (auto& b : scene.bodies) b.motion = {};
  SynthOptions opt;
  opt.frames = 4;
  write_dataset(dir / "data", scene, opt);

  REQUIRE(run("--threads 2 track --dataset " + q(dir / "data") + " --mode deform --out " + q(dir / "run"),
              dir / "track.log") == 0);
  CHECK(fs::exists(dir / "run" / "results.ndjson"));
  CHECK(fs::exists(dir / "run" / "trajectory.csv"));
  CHECK(fs::exists(dir / "run" / "manifest.json"));

  REQUIRE(run("eval --results " + q(dir / "run") + " --dataset " + q(dir / "data") + " --out " + q(dir / "eval"),
              dir / "eval.log") == 0);
  const auto metrics = nlohmann::json::parse(slurp(dir / "eval" / "metrics.json"));
  CHECK(metrics["ate"].get<double>() < 1e-6);
  CHECK(metrics["frames_processed"].get<int>() == 4);
  CHECK(fs::exists(dir / "eval" / "roc.csv"));
  CHECK(fs::exists(dir / "eval" / "surfel_rmse.csv"));
}

TEST_CASE("tracking output is deterministic") {
  const fs::path dir = testing::scratch("cli_determinism");
  REQUIRE(run("synth bending_sheet --frames 4 --out " + q(dir / "data"), dir / "synth.log") == 0);
  for (const char* name : {"a", "b"}) {
    REQUIRE(run("--threads 3 track --dataset " + q(dir / "data") + " --mode static --set model=general --out " +
                    q(dir / name),
                dir / (std::string(name) + ".log")) == 0);
  }
  CHECK(same_outputs(dir / "a", dir / "b"));
  const auto manifest = nlohmann::json::parse(slurp(dir / "a" / "manifest.json"));
  CHECK(manifest["command"] == "track");
}

TEST_CASE("a global rigid fit cannot explain two sliding bodies") {
  const fs::path dir = testing::scratch("cli_two_bodies");
  REQUIRE(run("synth two_bodies_sliding --frames 8 --out " + q(dir / "data"), dir / "synth.log") == 0);
  REQUIRE(run("track --dataset " + q(dir / "data") + " --mode deform --out " + q(dir / "deform"),
              dir / "deform.log") == 0);
  REQUIRE(run("track --dataset " + q(dir / "data") + " --mode rigid_map --out " + q(dir / "rigid"),
              dir / "rigid.log") == 0);
  const double deform = mean_residual(dir / "deform" / "results.ndjson");
  const double rigid = mean_residual(dir / "rigid" / "results.ndjson");
  MESSAGE("residual RMS deform " << deform << ", rigid_map " << rigid);
  CHECK(rigid > 5.0 * deform);
}

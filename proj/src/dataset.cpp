#include "surfel/dataset.hpp"

#include <Eigen/Geometry>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <regex>
#include <sstream>

#include "surfel/parallel.hpp"
#include "surfel/pgm.hpp"

namespace surfel {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(trim(item));
  return out;
}

double to_double(const std::string& s, const std::string& what) {
  try {
    size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::BadInput, "cannot parse '" + s + "' as a number (" + what + ")");
  }
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::BadInput, "cannot write " + path.string());
  out << std::setprecision(17);
  return out;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::BadInput, "cannot read " + path.string());
  return in;
}

/// Rows of a CSV file with a header line, as maps keyed by column name.
std::vector<std::map<std::string, std::string>> read_csv(const fs::path& path) {
  std::ifstream in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) return {};
  const auto header = split(line, ',');
  std::vector<std::map<std::string, std::string>> rows;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != header.size()) throw Error(ErrorCode::BadInput, "ragged row in " + path.string());
    std::map<std::string, std::string> row;
    for (size_t i = 0; i < cells.size(); ++i) row[header[i]] = cells[i];
    rows.push_back(std::move(row));
  }
  return rows;
}

const std::string& cell(const std::map<std::string, std::string>& row, const std::string& key) {
  const auto it = row.find(key);
  if (it == row.end()) throw Error(ErrorCode::BadInput, "missing column '" + key + "'");
  return it->second;
}

}  // namespace

Config parse_config(const std::string& text) {
  Config c;
  std::stringstream ss(text);
  std::string line;
  int n = 0;
  while (std::getline(ss, line)) {
    ++n;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::BadInput, "config line " + std::to_string(n) + " has no '='");
    c[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return c;
}

Config read_config(const fs::path& path) {
  std::ifstream in = open_in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void write_config(const fs::path& path, const Config& config) {
  std::ofstream out = open_out(path);
  for (const auto& [k, v] : config) out << k << '=' << v << '\n';
}

double config_double(const Config& c, const std::string& key, std::optional<double> fallback) {
  const auto it = c.find(key);
  if (it == c.end()) {
    if (fallback) return *fallback;
    throw Error(ErrorCode::BadInput, "missing config key '" + key + "'");
  }
  return to_double(it->second, key);
}

int config_int(const Config& c, const std::string& key, std::optional<int> fallback) {
  const auto it = c.find(key);
  if (it == c.end()) {
    if (fallback) return *fallback;
    throw Error(ErrorCode::BadInput, "missing config key '" + key + "'");
  }
  const double v = to_double(it->second, key);
  if (v != std::floor(v)) throw Error(ErrorCode::BadInput, "config key '" + key + "' must be an integer");
  return static_cast<int>(v);
}

std::string config_string(const Config& c, const std::string& key, std::optional<std::string> fallback) {
  const auto it = c.find(key);
  if (it == c.end()) {
    if (fallback) return *fallback;
    throw Error(ErrorCode::BadInput, "missing config key '" + key + "'");
  }
  return it->second;
}

void apply_config(const Config& c, TrackConfig& t) {
  if (c.count("model")) t.model = parse_deformation_model(c.at("model"));
  if (c.count("equireal_form")) {
    const std::string f = c.at("equireal_form");
    if (f == "published") t.equireal_form = EquirealForm::Published;
    else if (f == "unit_determinant") t.equireal_form = EquirealForm::UnitDeterminant;
    else throw Error(ErrorCode::BadInput, "unknown equireal_form '" + f + "'");
  }
  t.omega_isometry = config_double(c, "omega_isometry", t.omega_isometry);
  t.omega_equilibrium = config_double(c, "omega_equilibrium", t.omega_equilibrium);
  t.equilibrium_sigma = config_double(c, "equilibrium_sigma", t.equilibrium_sigma);
  t.levels = config_int(c, "levels", t.levels);
  t.half_extent = config_int(c, "half_extent", t.half_extent);
  t.zncc_threshold = config_double(c, "zncc_threshold", t.zncc_threshold);
  t.saturation = config_double(c, "saturation", t.saturation);
  if (c.count("gain_bias")) t.gain_bias = parse_gain_bias_mode(c.at("gain_bias"));
  t.min_valid_fraction = config_double(c, "min_valid_fraction", t.min_valid_fraction);
  t.reaccept_outliers = config_int(c, "reaccept_outliers", t.reaccept_outliers ? 1 : 0) != 0;
  t.min_inliers = config_int(c, "min_inliers", t.min_inliers);
  t.lm.lambda0 = config_double(c, "lm_lambda0", t.lm.lambda0);
  t.lm.max_iters = config_int(c, "lm_max_iters", t.lm.max_iters);
  t.lm.early_phase_iters = config_int(c, "lm_early_phase_iters", t.lm.early_phase_iters);
  t.lm.precondition = config_int(c, "lm_precondition", t.lm.precondition ? 1 : 0) != 0;
  if (t.levels < 1) throw Error(ErrorCode::BadInput, "levels must be >= 1");
  if (t.half_extent < 0) throw Error(ErrorCode::BadInput, "half_extent must be >= 0");
  if (t.omega_isometry < 0 || t.omega_equilibrium < 0) throw Error(ErrorCode::BadInput, "weights must be >= 0");
  if (!(t.equilibrium_sigma > 0)) throw Error(ErrorCode::BadInput, "equilibrium_sigma must be > 0");
}

Config to_config(const TrackConfig& t) {
  auto num = [](double v) {
    std::ostringstream ss;
    ss << std::setprecision(17) << v;
    return ss.str();
  };
  return {
      {"model", to_string(t.model)},
      {"equireal_form", t.equireal_form == EquirealForm::Published ? "published" : "unit_determinant"},
      {"omega_isometry", num(t.omega_isometry)},
      {"omega_equilibrium", num(t.omega_equilibrium)},
      {"equilibrium_sigma", num(t.equilibrium_sigma)},
      {"levels", std::to_string(t.levels)},
      {"half_extent", std::to_string(t.half_extent)},
      {"zncc_threshold", num(t.zncc_threshold)},
      {"saturation", num(t.saturation)},
      {"gain_bias", to_string(t.gain_bias)},
      {"min_valid_fraction", num(t.min_valid_fraction)},
      {"reaccept_outliers", t.reaccept_outliers ? "1" : "0"},
      {"min_inliers", std::to_string(t.min_inliers)},
      {"lm_lambda0", num(t.lm.lambda0)},
      {"lm_max_iters", std::to_string(t.lm.max_iters)},
      {"lm_early_phase_iters", std::to_string(t.lm.early_phase_iters)},
      {"lm_precondition", t.lm.precondition ? "1" : "0"},
  };
}

std::string format_pose(const Posed& pose) {
  std::ostringstream ss;
  ss << std::setprecision(17);
  const auto m = pose.matrix3x4();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) ss << (r || c ? " " : "") << m(r, c);
  }
  return ss.str();
}

Posed parse_pose(const std::string& text) {
  std::istringstream ss(text);
  Posed p;
  double v[12];
  for (double& x : v) {
    if (!(ss >> x)) throw Error(ErrorCode::BadInput, "pose needs 12 numbers (row-major 3x4)");
  }
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) p.rotation(r, c) = v[4 * r + c];
    p.translation(r) = v[4 * r + 3];
  }
  return p;
}

DatasetRun track_dataset(const Dataset& ds, TrackMode mode, const Config& overrides, int threads) {
  Config cfg = ds.config();
  for (const auto& [k, v] : overrides) cfg[k] = v;
  DatasetRun run;
  TrackConfig& tc = run.config;
  apply_config(cfg, tc);
  tc.threads = threads;

  const GrayImage ref = ds.frame(ds.frames().front());
  const DepthMap depth = ds.depth();
  std::vector<Eigen::Vector2i> pixels;
  if (ds.anchors()) {
    pixels = *ds.anchors();
  } else {
    AnchorSelection sel;
    sel.patch_half_extent = tc.half_extent;
    sel.border = tc.half_extent * 2 + 2;
    pixels = select_anchors(ref, &depth, sel);
  }
  run.surfels = build_surfels(ref, depth, ds.intrinsics(), pixels, ds.pose0(), tc);
  if (run.surfels.empty()) throw Error(ErrorCode::BadInput, "no usable surfels in the reference frame");

  switch (mode) {
    case TrackMode::Static:
      run.outcome = track_static(ds.source(), run.surfels, ds.intrinsics(), tc, ds.pose0());
      break;
    case TrackMode::Deform:
      run.outcome = track_deformable(ds.source(), run.surfels, rest_anchors(run.surfels, tc.equilibrium_sigma),
                                     ds.pose0(), ds.intrinsics(), tc);
      break;
    case TrackMode::RigidMap:
      run.outcome = track_rigid_map(ds.source(), run.surfels, ds.pose0(), ds.intrinsics(), tc);
      break;
  }
  return run;
}

fs::path frame_path(const fs::path& dir, int id) {
  char name[32];
  std::snprintf(name, sizeof name, "frame_%05d.pgm", id);
  return dir / name;
}

SynthSummary write_dataset(const fs::path& dir, const Scene& scene, const SynthOptions& options) {
  if (options.frames <= 0) throw Error(ErrorCode::BadInput, "frame count must be positive");
  fs::create_directories(dir);
  SynthSummary summary;
  summary.frames = frame_times(scene, options.frames);

  std::vector<Eigen::Vector2i> anchors;
  std::vector<std::pair<int, Posed>> trajectory;
  for (int f : summary.frames) {
    const Rendering r = render_frame(scene, f, options.threads);
    write_pgm(frame_path(dir, f), r.image);
    if (f == summary.frames.front()) {
      write_depth_pgm(dir / "depth_00000.pgm", r.depth, options.depth_scale);
      // Anchors on anchor-bearing bodies only.
      const Posed cam = scene.camera_at(f);
      for (const auto& px : select_anchors(r.image, &r.depth, options.anchors)) {
        const auto hit = cast_ray(scene, f, cam, px.x(), px.y());
        if (hit && !scene.bodies[hit->body].occluder) anchors.push_back(px);
      }
    }
    trajectory.emplace_back(f, scene.camera_at(f).inverse());
  }
  summary.anchors = static_cast<int>(anchors.size());

  const Intrinsics& k = scene.intrinsics;
  auto num = [](double v) {
    std::ostringstream ss;
    ss << std::setprecision(17) << v;
    return ss.str();
  };
  Config cfg{{"width", std::to_string(scene.width)},
             {"height", std::to_string(scene.height)},
             {"fx", num(k.fx)},
             {"fy", num(k.fy)},
             {"cx", num(k.cx)},
             {"cy", num(k.cy)},
             {"depth_scale", num(options.depth_scale)},
             {"pose0", format_pose(scene.camera_at(summary.frames.front()))},
             {"preset", scene.preset},
             {"seed", std::to_string(scene.seed)},
             {"frames", std::to_string(options.frames)}};
  write_config(dir / "intrinsics.cfg", cfg);
  write_anchors(dir / "anchors.csv", anchors);
  write_trajectory_csv(dir / "gt_trajectory.csv", trajectory);
  write_gt_surfels(dir / "gt_surfels.csv", gt_surfel_track(scene, anchors, summary.frames));
  return summary;
}

Dataset::Dataset(fs::path dir) : dir_(std::move(dir)) {
  if (!fs::is_directory(dir_)) throw Error(ErrorCode::BadInput, "dataset directory " + dir_.string() + " not found");
  const fs::path cfg = dir_ / "intrinsics.cfg";
  if (!fs::exists(cfg)) throw Error(ErrorCode::BadInput, "missing " + cfg.string());
  config_ = read_config(cfg);
  k_ = {config_double(config_, "fx"), config_double(config_, "fy"), config_double(config_, "cx"),
        config_double(config_, "cy")};
  if (!(k_.fx > 0 && k_.fy > 0)) throw Error(ErrorCode::BadInput, "focal lengths must be positive");
  depth_scale_ = config_double(config_, "depth_scale", 1.0);
  if (config_.count("pose0")) pose0_ = parse_pose(config_.at("pose0"));
  const std::regex pattern(R"(frame_(\d+)\.pgm)");
  for (const auto& entry : fs::directory_iterator(dir_)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (std::regex_match(name, m, pattern)) frames_.push_back(std::stoi(m[1]));
  }
  std::sort(frames_.begin(), frames_.end());
  if (frames_.empty()) throw Error(ErrorCode::BadInput, "no frame_*.pgm in " + dir_.string());
  if (!fs::exists(dir_ / "depth_00000.pgm")) throw Error(ErrorCode::BadInput, "missing depth_00000.pgm");
  if (fs::exists(dir_ / "anchors.csv")) anchors_ = read_anchors(dir_ / "anchors.csv");
}

GrayImage Dataset::frame(int id) const { return read_pgm(frame_path(dir_, id)); }

DepthMap Dataset::depth() const { return read_depth_pgm(dir_ / "depth_00000.pgm", depth_scale_); }

FrameSource Dataset::source() const {
  const fs::path dir = dir_;
  const std::vector<int> ids = frames_;
  return {ids, [dir, ids](std::size_t i) { return read_pgm(frame_path(dir, ids.at(i))); }};
}

void write_trajectory_csv(const fs::path& path, const std::vector<std::pair<int, Posed>>& camera_to_world) {
  std::ofstream out = open_out(path);
  out << "frame,tx,ty,tz,qw,qx,qy,qz\n";
  for (const auto& [f, p] : camera_to_world) {
    const Eigen::Quaterniond q(p.rotation);
    out << f << ',' << p.translation.x() << ',' << p.translation.y() << ',' << p.translation.z() << ',' << q.w()
        << ',' << q.x() << ',' << q.y() << ',' << q.z() << '\n';
  }
}

std::map<int, Posed> read_trajectory_csv(const fs::path& path) {
  std::map<int, Posed> out;
  for (const auto& row : read_csv(path)) {
    Posed p;
    p.translation = Vec3d(to_double(cell(row, "tx"), "tx"), to_double(cell(row, "ty"), "ty"),
                          to_double(cell(row, "tz"), "tz"));
    const Eigen::Quaterniond q(to_double(cell(row, "qw"), "qw"), to_double(cell(row, "qx"), "qx"),
                               to_double(cell(row, "qy"), "qy"), to_double(cell(row, "qz"), "qz"));
    p.rotation = q.normalized().toRotationMatrix();
    out[static_cast<int>(to_double(cell(row, "frame"), "frame"))] = p;
  }
  return out;
}

void write_gt_surfels(const fs::path& path, const GroundTruth& gt) {
  std::ofstream out = open_out(path);
  out << "frame,id,px,py,x,y,z,visible\n";
  for (const auto& fr : gt.frames) {
    for (const auto& s : fr.surfels) {
      out << fr.frame << ',' << s.id << ',' << s.pixel.x() << ',' << s.pixel.y() << ',' << s.position.x() << ','
          << s.position.y() << ',' << s.position.z() << ',' << (s.visible ? 1 : 0) << '\n';
    }
  }
}

std::map<int, std::vector<GtSurfel>> read_gt_surfels(const fs::path& path) {
  std::map<int, std::vector<GtSurfel>> out;
  for (const auto& row : read_csv(path)) {
    GtSurfel s;
    s.id = static_cast<int>(to_double(cell(row, "id"), "id"));
    s.pixel = Vec2d(to_double(cell(row, "px"), "px"), to_double(cell(row, "py"), "py"));
    s.position = Vec3d(to_double(cell(row, "x"), "x"), to_double(cell(row, "y"), "y"), to_double(cell(row, "z"), "z"));
    s.visible = to_double(cell(row, "visible"), "visible") != 0.0;
    out[static_cast<int>(to_double(cell(row, "frame"), "frame"))].push_back(s);
  }
  for (auto& [f, v] : out) {
    std::sort(v.begin(), v.end(), [](const GtSurfel& a, const GtSurfel& b) { return a.id < b.id; });
  }
  return out;
}

void write_anchors(const fs::path& path, const std::vector<Eigen::Vector2i>& anchors) {
  std::ofstream out = open_out(path);
  out << "id,px,py\n";
  for (size_t i = 0; i < anchors.size(); ++i) out << i << ',' << anchors[i].x() << ',' << anchors[i].y() << '\n';
}

std::vector<Eigen::Vector2i> read_anchors(const fs::path& path) {
  std::vector<std::pair<int, Eigen::Vector2i>> rows;
  for (const auto& row : read_csv(path)) {
    rows.emplace_back(static_cast<int>(to_double(cell(row, "id"), "id")),
                      Eigen::Vector2i(static_cast<int>(to_double(cell(row, "px"), "px")),
                                      static_cast<int>(to_double(cell(row, "py"), "py"))));
  }
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<Eigen::Vector2i> out;
  for (size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].first != static_cast<int>(i)) throw Error(ErrorCode::BadInput, "anchor ids must be 0..n-1");
    out.push_back(rows[i].second);
  }
  return out;
}

std::vector<FrameRecord> to_records(const TrackOutcome& outcome, const std::vector<Surfel>& surfels) {
  std::map<int, const Surfel*> by_id;
  for (const auto& s : surfels) by_id[s.id] = &s;
  std::vector<FrameRecord> out;
  for (const auto& fr : outcome.frames) {
    FrameRecord rec;
    rec.frame = fr.frame;
    rec.camera = fr.camera;
    rec.lost = fr.lost;
    rec.residual_rms = fr.residual_rms;
    for (const auto& r : fr.surfels) {
      const Surfel& s = *by_id.at(r.id);
      SurfelRecord sr;
      sr.id = r.id;
      sr.position = surfel_center(s, r.state);
      sr.raw_position = surfel_center(s, r.raw_state);
      sr.rotation = r.state.rotation;
      sr.deform = r.state.deform;
      sr.gain = r.raw_state.gain;
      sr.bias = r.raw_state.bias;
      sr.zncc = r.zncc;
      sr.inlier = r.inlier;
      sr.residual_rms = r.residual_rms;
      rec.surfels.push_back(sr);
    }
    out.push_back(std::move(rec));
  }
  return out;
}

namespace {

json vec(const Eigen::Ref<const Eigen::VectorXd>& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

template <int R, int C>
json row_major(const Eigen::Matrix<double, R, C>& m) {
  json a = json::array();
  for (int r = 0; r < m.rows(); ++r) {
    for (int c = 0; c < m.cols(); ++c) a.push_back(m(r, c));
  }
  return a;
}

Vec3d vec3(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

}  // namespace

void write_results(const fs::path& path, const std::vector<FrameRecord>& records) {
  std::ofstream out = open_out(path);
  for (const auto& rec : records) {
    json j;
    j["frame"] = rec.frame;
    j["pose"] = row_major(rec.camera.matrix3x4());
    j["lost"] = rec.lost;
    j["residual_rms"] = rec.residual_rms;
    json ss = json::array();
    for (const auto& s : rec.surfels) {
      ss.push_back({{"id", s.id},
                    {"position", vec(s.position)},
                    {"raw_position", vec(s.raw_position)},
                    {"rotation", row_major(s.rotation)},
                    {"deform", {s.deform(0, 0), s.deform(0, 1), s.deform(1, 1)}},
                    {"gain", s.gain},
                    {"bias", s.bias},
                    {"zncc", s.zncc},
                    {"inlier", s.inlier},
                    {"residual_rms", s.residual_rms}});
    }
    j["surfels"] = std::move(ss);
    out << j.dump() << '\n';
  }
}

std::vector<FrameRecord> read_results(const fs::path& path) {
  std::ifstream in = open_in(path);
  std::vector<FrameRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    try {
      const json j = json::parse(line);
      FrameRecord rec;
      rec.frame = j.at("frame").get<int>();
      const auto& p = j.at("pose");
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) rec.camera.rotation(r, c) = p.at(4 * r + c).get<double>();
        rec.camera.translation(r) = p.at(4 * r + 3).get<double>();
      }
      rec.lost = j.value("lost", false);
      rec.residual_rms = j.value("residual_rms", 0.0);
      for (const auto& s : j.at("surfels")) {
        SurfelRecord sr;
        sr.id = s.at("id").get<int>();
        sr.position = vec3(s.at("position"));
        sr.raw_position = vec3(s.at("raw_position"));
        const auto& rot = s.at("rotation");
        for (int r = 0; r < 3; ++r) {
          for (int c = 0; c < 3; ++c) sr.rotation(r, c) = rot.at(3 * r + c).get<double>();
        }
        const auto& d = s.at("deform");
        sr.deform << d.at(0).get<double>(), d.at(1).get<double>(), d.at(1).get<double>(), d.at(2).get<double>();
        sr.gain = s.at("gain").get<double>();
        sr.bias = s.at("bias").get<double>();
        sr.zncc = s.at("zncc").get<double>();
        sr.inlier = s.at("inlier").get<bool>();
        sr.residual_rms = s.at("residual_rms").get<double>();
        rec.surfels.push_back(sr);
      }
      out.push_back(std::move(rec));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::BadInput, "malformed results line in " + path.string() + ": " + e.what());
    }
  }
  return out;
}

}  // namespace surfel

#include "surfel/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <random>

#include "surfel/photometric.hpp"
#include "surfel/problems.hpp"

namespace surfel {

bool JacobianCheckReport::pass() const {
  return std::all_of(rows.begin(), rows.end(), [](const auto& r) { return r.pass; });
}

void write_csv(std::ostream& out, const JacobianCheckReport& report) {
  out << "block,max_relative_error,comparisons,pass\n" << std::setprecision(6);
  for (const auto& r : report.rows) {
    out << r.block << ',' << r.max_relative_error << ',' << r.comparisons << ',' << (r.pass ? 1 : 0) << '\n';
  }
}

namespace {

const Intrinsics kCheckCamera{500.0, 500.0, 319.5, 239.5};
constexpr int kWidth = 640;
constexpr int kHeight = 480;

class Sampler {
 public:
  explicit Sampler(std::uint64_t seed) : rng_(seed) {}
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  Vec3d vec3(double r) { return {uniform(-r, r), uniform(-r, r), uniform(-r, r)}; }
  unsigned seed() { return static_cast<unsigned>(rng_()); }

 private:
  std::mt19937_64 rng_;
};

/// Surfel at a random pixel and depth, tangent plane tilted at random, one
/// local unit about one pixel. Texture from `img` seen by an identity camera.
Surfel random_surfel(Sampler& s, const AnalyticImage& img, double zmin, double zmax, int half_extent, int id = 0) {
  const Vec2d px(s.uniform(100, kWidth - 100), s.uniform(100, kHeight - 100));
  const double z = s.uniform(zmin, zmax);
  const Vec3d normal = (Vec3d(0, 0, -1) + s.vec3(0.6)).normalized();
  const Vec3d e1 = normal.cross(Vec3d::UnitY()).normalized();
  const Vec3d e2 = normal.cross(e1);
  Surfel out;
  out.id = id;
  out.rest_position = kCheckCamera.unproject(px, z);
  out.rest_jacobian.col(0) = e1 * (z / kCheckCamera.fx);
  out.rest_jacobian.col(1) = e2 * (z / kCheckCamera.fy);
  out.anchor_pixel = px;
  out.anchor_normalized = kCheckCamera.normalized(px);
  out.textures.push_back(extract_texture(out, img, Posed::Identity(), kCheckCamera, half_extent));
  return out;
}

SurfelStated random_state(Sampler& s, double depth) {
  SurfelStated x;
  x.translation = s.vec3(0.01 * depth);
  x.rotation = so3_exp<double>(s.vec3(0.05));
  const double off = s.uniform(-0.05, 0.05);
  x.deform << 1.0 + s.uniform(-0.05, 0.05), off, off, 1.0 + s.uniform(-0.05, 0.05);
  x.gain = s.uniform(0.9, 1.1);
  x.bias = s.uniform(-0.03, 0.03);
  return x;
}

Posed random_camera(Sampler& s, double depth) {
  Vec6d z;
  z << s.vec3(0.005 * depth), s.vec3(0.01);
  return se3_exp<double>(z);
}

/// Worst relative error accumulator for one named block.
struct Tracker {
  JacobianCheckRow row;
  void add(const Eigen::MatrixXd& analytic, const Eigen::MatrixXd& numeric) {
    if (analytic.size() == 0) return;
    const double scale = std::max(numeric.cwiseAbs().maxCoeff(), 1e-12);
    const double err = (analytic - numeric).cwiseAbs().maxCoeff() / scale;
    row.max_relative_error = std::max(row.max_relative_error, std::isfinite(err) ? err : 1e300);
    row.comparisons += static_cast<int>(analytic.size());
  }
};

// Column layout of photometric_block with every block active.
constexpr int kColT = 0;
constexpr int kColR = 3;
constexpr int kColF = 6;
constexpr int kColC = 9;
constexpr int kColG = 15;
constexpr int kCols = 17;

void perturb(SurfelStated& x, Posed& cam, int col, double d) {
  if (col < kColR) {
    x.translation(col) += d;
  } else if (col < kColF) {
    Vec3d w = Vec3d::Zero();
    w(col - kColR) = d;
    x.rotation = x.rotation * so3_exp<double>(w);
  } else if (col < kColC) {
    const int e = col - kColF;
    if (e == 0) x.deform(0, 0) += d;
    if (e == 1) {
      x.deform(0, 1) += d;
      x.deform(1, 0) += d;
    }
    if (e == 2) x.deform(1, 1) += d;
  } else if (col < kColG) {
    Vec6d z = Vec6d::Zero();
    z(col - kColC) = d;
    cam = se3_exp<double>(z) * cam;
  } else if (col == kColG) {
    x.gain += d;
  } else {
    x.bias += d;
  }
}

void check_photometric(Sampler& s, bool flip, std::vector<Tracker>& blocks) {
  const AnalyticImage img = make_sinusoid_image(s.seed(), kWidth, kHeight);
  const Surfel surfel = random_surfel(s, img, 20, 80, 5);
  const double depth = surfel.rest_position.z();
  const SurfelStated x = random_state(s, depth);
  const Posed cam = random_camera(s, depth);
  const ParameterSet all{Block::Translation, Block::Rotation, Block::Deformation, Block::Camera, Block::GainBias};
  const TexturePatch& tex = surfel.texture();
  const double cap = kDefaultSaturation;
  const ResidualBlock base = photometric_block(surfel, x, cam, img, kCheckCamera, tex, cap, all, true);
  Eigen::MatrixXd analytic = base.jacobian;
  if (flip) analytic.middleCols(kColR, 3) *= -1.0;

  const int n = base.size();
  std::vector<bool> usable(n);
  for (int i = 0; i < n; ++i) usable[i] = base.valid[i] && !base.saturated[i];
  Eigen::MatrixXd numeric(n, kCols);
  for (int c = 0; c < kCols; ++c) {
    const double h = c >= kColG ? 1e-6 : 1e-5;
    SurfelStated xp = x;
    SurfelStated xm = x;
    Posed cp = cam;
    Posed cm = cam;
    perturb(xp, cp, c, h);
    perturb(xm, cm, c, -h);
    const ResidualBlock rp = photometric_block(surfel, xp, cp, img, kCheckCamera, tex, cap, ParameterSet{}, false);
    const ResidualBlock rm = photometric_block(surfel, xm, cm, img, kCheckCamera, tex, cap, ParameterSet{}, false);
    numeric.col(c) = (rp.residuals - rm.residuals) / (2 * h);
    for (int i = 0; i < n; ++i) {
      usable[i] = usable[i] && rp.valid[i] && rm.valid[i] && !rp.saturated[i] && !rm.saturated[i];
    }
  }
  std::vector<int> rows;
  for (int i = 0; i < n; ++i) {
    if (usable[i]) rows.push_back(i);
  }
  const int offsets[] = {kColT, kColR, kColF, kColC, kColG};
  const int widths[] = {3, 3, 3, 6, 2};
  for (int b = 0; b < 5; ++b) {
    Eigen::MatrixXd a(rows.size(), widths[b]);
    Eigen::MatrixXd m(rows.size(), widths[b]);
    for (size_t r = 0; r < rows.size(); ++r) {
      a.row(r) = analytic.block(rows[r], offsets[b], 1, widths[b]);
      m.row(r) = numeric.block(rows[r], offsets[b], 1, widths[b]);
    }
    blocks[b].add(a, m);
  }
}

void check_projection(Sampler& s, Tracker& t) {
  const double z = s.uniform(0.1, 100.0);
  const Vec3d xc(s.uniform(-z, z), s.uniform(-z, z), z);
  const Mat23d analytic = *projection_jacobian(kCheckCamera, xc);
  Mat23d numeric;
  const double h = 1e-6 * z;
  for (int c = 0; c < 3; ++c) {
    Vec3d d = Vec3d::Zero();
    d(c) = h;
    numeric.col(c) = (*project(kCheckCamera, Vec3d(xc + d)) - *project(kCheckCamera, Vec3d(xc - d))) / (2 * h);
  }
  t.add(analytic, numeric);
}

Mat3d random_information(Sampler& s) {
  Mat3d a;
  for (int i = 0; i < 3; ++i) a.col(i) = s.vec3(1.0);
  return a * a.transpose() + 0.1 * Mat3d::Identity();
}

void check_equilibrium(Sampler& s, Tracker& jac, Tracker& grad) {
  Surfel surfel;
  surfel.rest_position = Vec3d(s.uniform(-5, 5), s.uniform(-5, 5), s.uniform(20, 80));
  SurfelStated x;
  x.translation = s.vec3(3.0);
  x.rotation = so3_exp<double>(s.vec3(0.5));
  const EquilibriumAnchor anchor{surfel.rest_position + s.vec3(2.0), random_information(s)};
  const double omega = s.uniform(0.1, 3.0);
  const EquilibriumResidual e = equilibrium_residual(surfel, x, anchor, omega);
  Eigen::Matrix<double, 3, 6> analytic;
  analytic << e.d_translation, e.d_rotation;
  Eigen::Matrix<double, 3, 6> numeric;
  Eigen::Matrix<double, 1, 6> num_grad;
  auto cost = [&](const SurfelStated& y) {
    const Vec3d d = surfel_center(surfel, y) - anchor.position;
    return omega * d.dot(anchor.information * d);
  };
  const double h = 1e-6;
  for (int c = 0; c < 6; ++c) {
    SurfelStated xp = x;
    SurfelStated xm = x;
    Posed dummy;
    perturb(xp, dummy, c, h);
    perturb(xm, dummy, c, -h);
    numeric.col(c) = (equilibrium_residual(surfel, xp, anchor, omega).residual -
                      equilibrium_residual(surfel, xm, anchor, omega).residual) / (2 * h);
    num_grad(c) = (cost(xp) - cost(xm)) / (2 * h);
  }
  jac.add(analytic, numeric);
  grad.add(2.0 * e.residual.transpose() * analytic, num_grad);
}

void check_energy(Sampler& s, Tracker& t) {
  Mat2d f;
  const double off = s.uniform(-0.5, 0.5);
  f << s.uniform(0.5, 1.5), off, off, s.uniform(0.5, 1.5);
  const double omega = s.uniform(0.1, 5.0);
  const auto e = deformation_energy_residual(f, omega);
  Mat3d numeric;
  const double h = 1e-6;
  for (int c = 0; c < 3; ++c) {
    SurfelStated xp;
    SurfelStated xm;
    xp.deform = xm.deform = f;
    Posed dummy;
    perturb(xp, dummy, kColF + c, h);
    perturb(xm, dummy, kColF + c, -h);
    numeric.col(c) = (deformation_energy_residual(xp.deform, omega).residual -
                      deformation_energy_residual(xm.deform, omega).residual) / (2 * h);
  }
  t.add(e.jacobian, numeric);
}

/// Assembled problems: deformation models through their parameter chain,
/// energy and equilibrium rows, and the joint and pose-only problems.
void check_problems(Sampler& s, int trial, Tracker& single, Tracker& joint, Tracker& pose) {
  const AnalyticImage img = make_sinusoid_image(s.seed(), kWidth, kHeight);
  const double big_cap = 1e6;
  const DeformationModel models[] = {DeformationModel::Conformal, DeformationModel::Equireal,
                                     DeformationModel::General, DeformationModel::Isometry};
  SurfelModel model;
  model.model = models[trial % 4];
  model.equireal_form = (trial / 4) % 2 ? EquirealForm::UnitDeterminant : EquirealForm::Published;
  model.omega_isometry = s.uniform(0.1, 2.0);
  model.saturation = big_cap;
  model.optimize_gain_bias = trial % 3 != 0;

  const Surfel surfel = random_surfel(s, img, 20, 80, 4);
  const double depth = surfel.rest_position.z();
  SurfelStated x = random_state(s, depth);
  const int k = deform_param_count(model.model);
  Eigen::VectorXd p = deform_params(model.model, x.deform);
  if (model.model == DeformationModel::Equireal) p = Eigen::Vector2d(1.0 + s.uniform(-0.05, 0.05), s.uniform(-0.05, 0.05));
  x.deform = materialize_deform(model.model, std::span<const double>(p.data(), k), model.equireal_form);
  const Posed cam = random_camera(s, depth);
  const EquilibriumAnchor anchor{surfel.rest_position + s.vec3(1.0), random_information(s)};

  {
    const SurfelProblem<AnalyticImage> problem(surfel, surfel.texture(), img, kCheckCamera, cam, model, &anchor, 0.7);
    Eigen::VectorXd r;
    Eigen::MatrixXd j;
    problem.evaluate(x, r, &j);
    single.add(j, fd_jacobian(problem, x, 1e-6));
  }
  {
    std::vector<Surfel> surfels{surfel, random_surfel(s, img, 20, 80, 4, 1), random_surfel(s, img, 20, 80, 4, 2)};
    std::vector<EquilibriumAnchor> anchors;
    JointState js{cam, {}};
    for (const auto& sf : surfels) {
      anchors.push_back({sf.rest_position + s.vec3(1.0), random_information(s)});
      SurfelStated y = random_state(s, depth);
      y.deform = x.deform;
      js.surfels.push_back(y);
    }
    std::vector<JointProblem<AnalyticImage>::Term> terms;
    for (size_t i = 0; i < surfels.size(); ++i) terms.push_back({&surfels[i], &surfels[i].texture(), &anchors[i]});
    const JointProblem<AnalyticImage> problem(std::move(terms), img, kCheckCamera, model, 0.7);
    Eigen::VectorXd r;
    Eigen::MatrixXd j;
    problem.evaluate(js, r, &j);
    joint.add(j, fd_jacobian(problem, js, 1e-6));
    // The block-assembled normal equations must match the dense ones.
    const NormalEquations ne = problem.linearize(js);
    joint.add(ne.hessian, j.transpose() * j);

    std::vector<PoseProblem<AnalyticImage>::Term> pterms;
    for (size_t i = 0; i < surfels.size(); ++i) pterms.push_back({&surfels[i], &surfels[i].texture(), js.surfels[i]});
    const PoseProblem<AnalyticImage> pp(std::move(pterms), img, kCheckCamera, big_cap);
    pp.evaluate(cam, r, &j);
    pose.add(j, fd_jacobian(pp, cam, 1e-6));
  }
}

}  // namespace

JacobianCheckReport check_jacobians(const JacobianCheckOptions& options) {
  if (options.trials <= 0) throw Error(ErrorCode::BadInput, "trials must be positive");
  const char* names[] = {"translation", "rotation", "deformation", "camera", "gain_bias"};
  std::vector<Tracker> photometric(5);
  for (int b = 0; b < 5; ++b) photometric[b].row.block = names[b];
  Tracker projection{{"projection"}};
  Tracker equilibrium{{"equilibrium"}};
  Tracker equilibrium_grad{{"equilibrium_gradient"}};
  Tracker energy{{"deformation_energy"}};
  Tracker single{{"surfel_problem"}};
  Tracker joint{{"joint_problem"}};
  Tracker pose{{"pose_problem"}};

  Sampler s(options.seed);
  for (int t = 0; t < options.trials; ++t) {
    check_photometric(s, options.inject_sign_flip, photometric);
    check_projection(s, projection);
    check_equilibrium(s, equilibrium, equilibrium_grad);
    check_energy(s, energy);
    check_problems(s, t, single, joint, pose);
  }
  JacobianCheckReport report;
  for (auto& b : photometric) report.rows.push_back(b.row);
  for (Tracker* t : {&projection, &equilibrium, &equilibrium_grad, &energy, &single, &joint, &pose}) {
    report.rows.push_back(t->row);
  }
  for (auto& r : report.rows) r.pass = r.comparisons > 0 && r.max_relative_error < options.tolerance;
  return report;
}

GrowingAmbiguityReport growing_ambiguity(const GrowingAmbiguityOptions& options) {
  Sampler s(options.seed);
  GrowingAmbiguityReport rep;
  rep.worst_improvement = std::numeric_limits<double>::infinity();
  const AnalyticImage img = make_sinusoid_image(s.seed(), kWidth, kHeight);
  for (int i = 0; i < options.surfels; ++i) {
    const Surfel surfel = random_surfel(s, img, 20, 80, 11, i);
    const SurfelStated x = random_state(s, surfel.rest_position.z());
    const TexturePatch& tex = surfel.texture();
    for (double mu : options.mus) {
      const SurfelStated y = scale_surfel(surfel, x, mu);
      for (int c = 0; c < tex.size(); ++c) {
        const Vec2d uv = tex.coords.col(c);
        const Vec2d a = project_or_throw(kCheckCamera, surfel_point(surfel, x, uv));
        const Vec2d b = project_or_throw(kCheckCamera, surfel_point(surfel, y, uv));
        rep.max_displacement = std::max(rep.max_displacement, (a - b).norm());
      }
    }

    // At rest the texture matches the image exactly: a solution.
    SurfelModel general;
    general.model = DeformationModel::General;
    general.omega_isometry = 0.0;
    general.saturation = 1e6;
    SurfelModel iso = general;
    iso.model = DeformationModel::Isometry;
    const SurfelStated rest;
    Eigen::VectorXd r;
    Eigen::MatrixXd j;
    SurfelProblem<AnalyticImage>(surfel, tex, img, kCheckCamera, Posed::Identity(), general).evaluate(rest, r, &j);
    const HessianSpectrum hg = hessian_spectrum(j);
    SurfelProblem<AnalyticImage>(surfel, tex, img, kCheckCamera, Posed::Identity(), iso).evaluate(rest, r, &j);
    const HessianSpectrum hi = hessian_spectrum(j);

    Eigen::VectorXd dir(9);
    dir << surfel.rest_position, Vec3d::Zero(), 1.0, 0.0, 1.0;
    const Eigen::VectorXd null = hg.vectors.col(hg.vectors.cols() - 1);
    const double cosine = std::abs(null.dot(dir)) / (null.norm() * dir.norm());
    const double ratio_general = hg.ratio();
    rep.worst_ratio_general = std::max(rep.worst_ratio_general, ratio_general);
    rep.worst_cosine = std::min(rep.worst_cosine, cosine);
    const double improvement = ratio_general > 0 ? hi.ratio() / ratio_general : std::numeric_limits<double>::infinity();
    rep.worst_improvement = std::min(rep.worst_improvement, improvement);
    if (i == 0) {
      rep.null_vector = null * (null.dot(dir) < 0 ? -1.0 : 1.0);
      rep.scale_direction = dir.normalized();
    }
  }
  return rep;
}

FloatingAmbiguityReport floating_ambiguity(const FloatingAmbiguityOptions& options) {
  Sampler s(options.seed);
  const AnalyticImage img = make_sinusoid_image(s.seed(), kWidth, kHeight);
  // Slanted plane z = 5 + 0.5 x seen off-centre.
  const Vec3d e1 = Vec3d(1.0, 0.0, 0.5).normalized();
  const Vec3d e2 = Vec3d::UnitY();
  std::vector<Surfel> surfels;
  for (int i = 0; i < options.surfels; ++i) {
    const Vec2d px(s.uniform(80, kWidth - 80), s.uniform(80, kHeight - 80));
    const Vec2d n = kCheckCamera.normalized(px);
    const double z = 5.0 / (1.0 - 0.5 * n.x());
    Surfel sf;
    sf.id = i;
    sf.rest_position = z * Vec3d(n.x(), n.y(), 1.0);
    sf.rest_jacobian.col(0) = e1 * (z / kCheckCamera.fx);
    sf.rest_jacobian.col(1) = e2 * (z / kCheckCamera.fy);
    sf.anchor_pixel = px;
    sf.anchor_normalized = n;
    sf.textures.push_back(extract_texture(sf, img, Posed::Identity(), kCheckCamera, 11));
    surfels.push_back(std::move(sf));
  }
  std::vector<EquilibriumAnchor> anchors;
  for (const auto& sf : surfels) anchors.push_back(rest_anchor(sf, options.sigma));
  std::vector<JointProblem<AnalyticImage>::Term> terms;
  for (size_t i = 0; i < surfels.size(); ++i) terms.push_back({&surfels[i], &surfels[i].texture(), &anchors[i]});
  SurfelModel model;
  model.saturation = 1e6;
  const JointProblem<AnalyticImage> problem(std::move(terms), img, kCheckCamera, model, options.omega_equilibrium);
  const JointState x{Posed::Identity(), std::vector<SurfelStated>(surfels.size())};
  Eigen::VectorXd r;
  Eigen::MatrixXd j;
  problem.evaluate(x, r, &j);
  FloatingAmbiguityReport rep;
  rep.omega_equilibrium = options.omega_equilibrium;
  rep.spectrum = hessian_spectrum(j);
  rep.near_zero = rep.spectrum.count_below(options.relative_threshold);
  rep.ratio = rep.spectrum.ratio();
  return rep;
}

}  // namespace surfel

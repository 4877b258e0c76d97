#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "surfel/diagnostics.hpp"
#include "surfel/optimizer.hpp"
#include "surfel/photometric.hpp"
#include "surfel/problems.hpp"

using namespace surfel;

TEST_SUITE_BEGIN("optimizer");

namespace {

struct Linear {
  using Parameters = Eigen::VectorXd;
  Eigen::VectorXd a;
  int dimension() const { return static_cast<int>(a.size()); }
  void evaluate(const Parameters& x, Eigen::VectorXd& r, Eigen::MatrixXd* j) const {
    r = x - a;
    if (j) *j = Eigen::MatrixXd::Identity(a.size(), a.size());
  }
  Parameters apply_increment(const Parameters& x, const Eigen::VectorXd& dx) const { return x + dx; }
};

// Rosenbrock with the first coordinate stored divided by `scale`.
struct Rosenbrock {
  using Parameters = Eigen::Vector2d;
  double scale = 1.0;
  int dimension() const { return 2; }
  void evaluate(const Parameters& y, Eigen::VectorXd& r, Eigen::MatrixXd* j) const {
    const double x0 = scale * y(0);
    r.resize(2);
    r << 10.0 * (y(1) - x0 * x0), 1.0 - x0;
    if (j) {
      j->resize(2, 2);
      *j << -20.0 * x0 * scale, 10.0, -scale, 0.0;
    }
  }
  Parameters apply_increment(const Parameters& x, const Eigen::VectorXd& dx) const { return x + dx; }
};

// Smooth residuals with a large offset, so rounding dominates tiny steps.
struct Wavy {
  using Parameters = Eigen::Vector2d;
  int dimension() const { return 2; }
  void evaluate(const Parameters& x, Eigen::VectorXd& r, Eigen::MatrixXd* j) const {
    r.resize(3);
    r << 1e3 + std::sin(5 * x(0)) * std::cos(3 * x(1)), 1e3 + std::exp(2 * x(0)), 1e3 + x(0) * x(1) * x(1) * x(1);
    if (j) {
      j->resize(3, 2);
      *j << 5 * std::cos(5 * x(0)) * std::cos(3 * x(1)), -3 * std::sin(5 * x(0)) * std::sin(3 * x(1)),
          2 * std::exp(2 * x(0)), 0.0, x(1) * x(1) * x(1), 3 * x(0) * x(1) * x(1);
    }
  }
  Parameters apply_increment(const Parameters& x, const Eigen::VectorXd& dx) const { return x + dx; }
};

}  // namespace

TEST_CASE("linear least squares converges in a few steps") {
  Linear p{Eigen::Vector3d(1.0, -2.0, 0.5)};
  LmConfig cfg;
  cfg.lambda0 = 1e-12;
  cfg.early_phase_iters = 0;
  const auto res = lm_solve(p, Eigen::VectorXd(Eigen::Vector3d::Zero()), cfg);
  CHECK(res.report.accepted <= 3);
  CHECK(res.report.final_cost < 1e-20);
  CHECK((res.solution - p.a).norm() < 1e-10);
}

TEST_CASE("early phase keeps lambda at least one") {
  Linear p{Eigen::Vector3d(1.0, -2.0, 0.5)};
  LmConfig cfg;
  cfg.lambda0 = 1e-3;
  const auto res = lm_solve(p, Eigen::VectorXd(Eigen::Vector3d::Zero()), cfg);
  int accepted = 0;
  for (const auto& it : res.report.history) {
    if (accepted < cfg.early_phase_iters) CHECK(it.lambda >= 1.0);
    accepted += it.accepted;
  }
  CHECK(res.report.accepted > cfg.early_phase_iters);
  CHECK(res.report.final_cost < 1e-12);
}

TEST_CASE("Rosenbrock") {
  const auto res = lm_solve(Rosenbrock{}, Eigen::Vector2d(-1.2, 1.0));
  CHECK((res.solution - Eigen::Vector2d(1, 1)).lpNorm<Eigen::Infinity>() < 1e-6);
  CHECK(res.report.iterations <= 50);
  CHECK(res.report.monotone());
  double last = res.report.initial_cost;
  for (const auto& it : res.report.history) {
    if (!it.accepted) continue;
    CHECK(it.cost < last);
    last = it.cost;
  }

  // Reparametrizing a coordinate by 1000 barely changes the outcome.
  Rosenbrock scaled{1000.0};
  const auto rs = lm_solve(scaled, Eigen::Vector2d(-1.2e-3, 1.0));
  CHECK(std::abs(rs.report.final_cost - res.report.final_cost) < 1e-8);
  CHECK(std::abs(1000.0 * rs.solution(0) - 1.0) < 1e-6);
}

TEST_CASE("diagonal preconditioning on a badly scaled problem") {
  const Eigen::Matrix2d h = Eigen::Vector2d(1.0, 1e8).asDiagonal();
  CHECK(inner_condition_number(h, 1.0, true) <= 10.0);
  CHECK(inner_condition_number(h, 1.0, false) >= 1e7);

  Eigen::Matrix3d hh;
  hh << 4, 1, 0.5, 1, 3e6, 2, 0.5, 2, 1e-3;
  const auto [m, ds] = preconditioned_system(hh, 0.7);
  CHECK((m.diagonal().array() - 1.0).abs().maxCoeff() < 1e-12);
  CHECK(ds.size() == 3);
}

TEST_CASE("huge damping gives scaled steepest descent") {
  Eigen::Matrix3d h;
  h << 4, 1, 0.5, 1, 30, 2, 0.5, 2, 0.1;
  const Eigen::Vector3d g(0.3, -2.0, 0.05);
  const Eigen::VectorXd step = *damped_step(h, g, 1e12);
  const Eigen::Vector3d sd = -(g.array() / h.diagonal().array()).matrix();
  CHECK(step.normalized().dot(sd.normalized()) > 1 - 1e-9);
}

TEST_CASE("arrow elimination equals a dense solve") {
  std::mt19937 rng(2);
  const std::vector<int> blocks{3, 2, 3, 6};
  const int n = 14;
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd r = Eigen::MatrixXd::Random(n + 4, n);
  Eigen::MatrixXd full = r.transpose() * r + Eigen::MatrixXd::Identity(n, n);
  // Keep only diagonal blocks and the trailing coupling.
  int off = 0;
  for (std::size_t b = 0; b + 1 < blocks.size(); ++b) {
    a.block(off, off, blocks[b], blocks[b]) = full.block(off, off, blocks[b], blocks[b]);
    off += blocks[b];
  }
  a.bottomRows(6) = full.bottomRows(6);
  a.rightCols(6) = full.rightCols(6);
  const Eigen::VectorXd b = Eigen::VectorXd::Random(n);
  const Eigen::VectorXd x = *solve_arrow(a, b, blocks);
  CHECK((a * x - b).norm() < 1e-9);
}

TEST_CASE("finite-difference Jacobians") {
  Linear lin{Eigen::Vector3d(1.0, -2.0, 0.5)};
  const Eigen::MatrixXd jl = fd_jacobian(lin, Eigen::VectorXd(Eigen::Vector3d(0.2, 0.1, -4.0)), 1e-3);
  CHECK((jl - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-10);

  // Truncation shrinks with h until rounding takes over: a V-shaped curve.
  Wavy w;
  const Eigen::Vector2d x(0.3, 0.7);
  Eigen::VectorXd r;
  Eigen::MatrixXd ja;
  w.evaluate(x, r, &ja);
  std::vector<double> err;
  for (double h : {1e-3, 1e-5, 1e-8}) err.push_back((fd_jacobian(w, x, h) - ja).cwiseAbs().maxCoeff());
  CHECK(err[1] < err[0]);
  CHECK(err[1] < err[2]);
}

TEST_CASE("finite differences certify the photometric problem") {
  const AnalyticImage img = make_sinusoid_image(4, 200, 160);
  const Intrinsics k{250, 250, 100, 80};
  Surfel s;
  s.rest_position = k.unproject(Vec2d(97, 76), 10.0);
  s.rest_jacobian << 0.04, 0, 0, 0.04, 0.01, 0;
  const TexturePatch tex = extract_texture(s, img, Posed::Identity(), k, 11);
  SurfelModel model;
  model.model = DeformationModel::General;
  model.saturation = 1e9;
  const SurfelProblem problem(s, tex, img, k, Posed::Identity(), model);
  SurfelStated x;
  x.translation = Vec3d(0.05, -0.02, 0.1);
  x.rotation = so3_exp(Vec3d(0.02, 0.01, -0.03));
  x.deform << 1.03, 0.01, 0.01, 0.98;
  Eigen::VectorXd r;
  Eigen::MatrixXd ja;
  problem.evaluate(x, r, &ja);
  const Eigen::MatrixXd jn = fd_jacobian(problem, x, 1e-5);
  CHECK((ja - jn).cwiseAbs().maxCoeff() / jn.cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("Hessian spectra") {
  const HessianSpectrum id = hessian_spectrum(Eigen::MatrixXd::Identity(4, 4));
  CHECK((id.singular_values.array() - 1.0).abs().maxCoeff() < 1e-14);

  Eigen::MatrixXd dup = Eigen::MatrixXd::Random(6, 3);
  dup.col(2) = dup.col(0);
  const HessianSpectrum d = hessian_spectrum(dup);
  CHECK(d.singular_values(2) < 1e-12);
  CHECK(d.singular_values(0) >= d.singular_values(1));
  CHECK(d.count_below(1e-8) == 1);

  const Eigen::MatrixXd j = Eigen::MatrixXd::Random(8, 4);
  const HessianSpectrum a = hessian_spectrum(j);
  const HessianSpectrum b = hessian_spectrum_from_normal(j.transpose() * j);
  CHECK((a.singular_values - b.singular_values).norm() < 1e-10 * a.singular_values(0));
}

TEST_CASE("general deformation leaves a scale direction nearly free") {
  GrowingAmbiguityOptions opt;
  opt.surfels = 8;
  const GrowingAmbiguityReport rep = growing_ambiguity(opt);
  CHECK(rep.worst_ratio_general < 1e-6);
  CHECK(rep.worst_cosine > 0.99);
  CHECK(rep.max_displacement < 1e-9);
  CHECK(rep.pass());
}

TEST_CASE("solve reports serialize as CSV") {
  const auto res = lm_solve(Rosenbrock{}, Eigen::Vector2d(-1.2, 1.0));
  std::ostringstream out;
  write_csv(out, res.report);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "iteration,cost,lambda,step_norm");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == static_cast<int>(res.report.history.size()));
}

TEST_SUITE_END();

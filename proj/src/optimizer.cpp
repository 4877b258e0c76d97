#include "surfel/optimizer.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>

namespace surfel {

std::string to_string(Termination t) {
  switch (t) {
    case Termination::GradientTolerance: return "gradient_tolerance";
    case Termination::StepTolerance: return "step_tolerance";
    case Termination::CostTolerance: return "cost_tolerance";
    case Termination::MaxIterations: return "max_iterations";
    case Termination::LinearSolveFailure: return "linear_solve_failure";
  }
  return "unknown";
}

bool SolveReport::monotone() const {
  double last = initial_cost;
  for (const auto& rec : history) {
    if (!rec.accepted) continue;
    if (rec.cost > last) return false;
    last = rec.cost;
  }
  return true;
}

void write_csv(std::ostream& out, const SolveReport& report) {
  out << "iteration,cost,lambda,step_norm\n";
  out << std::setprecision(17);
  for (const auto& rec : report.history) {
    out << rec.iteration << ',' << rec.cost << ',' << rec.lambda << ',' << rec.step_norm << '\n';
  }
}

std::pair<Eigen::MatrixXd, Eigen::VectorXd> preconditioned_system(const Eigen::MatrixXd& h, double lambda) {
  const Eigen::VectorXd dw = h.diagonal().cwiseMax(1e-12);
  Eigen::MatrixXd a = h;
  a.diagonal() += lambda * dw;
  const Eigen::VectorXd ds = a.diagonal().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
  Eigen::MatrixXd m = ds.asDiagonal() * a * ds.asDiagonal();
  return {m, ds};
}

double inner_condition_number(const Eigen::MatrixXd& h, double lambda, bool precondition) {
  Eigen::MatrixXd m;
  if (precondition) {
    m = preconditioned_system(h, lambda).first;
  } else {
    m = h;
    m.diagonal() += lambda * h.diagonal().cwiseMax(1e-12);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  const Eigen::VectorXd ev = es.eigenvalues().cwiseAbs();
  const double lo = ev.minCoeff();
  return lo > 0.0 ? ev.maxCoeff() / lo : std::numeric_limits<double>::infinity();
}

namespace {

std::optional<Eigen::VectorXd> solve_dense(const Eigen::MatrixXd& m, const Eigen::VectorXd& b) {
  Eigen::LDLT<Eigen::MatrixXd> ldlt(m);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return std::nullopt;
  // LDLT keeps going on singular input; reject tiny pivots explicitly.
  const Eigen::VectorXd d = ldlt.vectorD();
  const double dmax = d.cwiseAbs().maxCoeff();
  if (!(dmax > 0.0) || d.minCoeff() <= 1e-14 * dmax) return std::nullopt;
  Eigen::VectorXd x = ldlt.solve(b);
  if (!x.allFinite()) return std::nullopt;
  return x;
}

}  // namespace

std::optional<Eigen::VectorXd> solve_arrow(const Eigen::MatrixXd& m, const Eigen::VectorXd& b,
                                           const std::vector<int>& blocks) {
  if (blocks.empty()) return solve_dense(m, b);
  const int nb = static_cast<int>(blocks.size()) - 1;
  const int nc = blocks.back();
  const int n = static_cast<int>(m.rows());
  const int co = n - nc;

  Eigen::MatrixXd schur = m.bottomRightCorner(nc, nc);
  Eigen::VectorXd rhs_c = b.tail(nc);
  std::vector<Eigen::LDLT<Eigen::MatrixXd>> factors;
  factors.reserve(nb);
  int off = 0;
  for (int i = 0; i < nb; ++i) {
    const int d = blocks[i];
    const Eigen::MatrixXd bi = m.block(off, off, d, d);
    factors.emplace_back(bi);
    auto& f = factors.back();
    if (f.info() != Eigen::Success || !f.isPositive()) return std::nullopt;
    const Eigen::MatrixXd ci = m.block(off, co, d, nc);
    const Eigen::MatrixXd binv_ci = f.solve(ci);
    schur.noalias() -= ci.transpose() * binv_ci;
    rhs_c.noalias() -= binv_ci.transpose() * b.segment(off, d);
    off += d;
  }
  const auto xc = solve_dense(schur, rhs_c);
  if (!xc) return std::nullopt;
  Eigen::VectorXd x(n);
  x.tail(nc) = *xc;
  off = 0;
  for (int i = 0; i < nb; ++i) {
    const int d = blocks[i];
    x.segment(off, d) = factors[i].solve(b.segment(off, d) - m.block(off, co, d, nc) * *xc);
    off += d;
  }
  if (!x.allFinite()) return std::nullopt;
  return x;
}

std::optional<Eigen::VectorXd> damped_step(const Eigen::MatrixXd& h, const Eigen::VectorXd& g, double lambda,
                                           bool precondition, const std::vector<int>* arrow) {
  const std::vector<int> none;
  const std::vector<int>& blocks = arrow ? *arrow : none;
  if (precondition) {
    const auto [m, ds] = preconditioned_system(h, lambda);
    const Eigen::VectorXd rhs = -(ds.asDiagonal() * g);
    const auto y = solve_arrow(m, rhs, blocks);
    if (!y) return std::nullopt;
    return Eigen::VectorXd(ds.asDiagonal() * *y);
  }
  Eigen::MatrixXd a = h;
  a.diagonal() += lambda * h.diagonal().cwiseMax(1e-12);
  return solve_arrow(a, -g, blocks);
}

int HessianSpectrum::count_below(double relative) const {
  if (singular_values.size() == 0) return 0;
  const double thr = relative * singular_values(0);
  int n = 0;
  for (int i = 0; i < singular_values.size(); ++i) n += singular_values(i) < thr;
  return n;
}

HessianSpectrum hessian_spectrum(const Eigen::MatrixXd& j) {
  Eigen::BDCSVD<Eigen::MatrixXd> svd(j, Eigen::ComputeThinV);
  HessianSpectrum s;
  s.singular_values = svd.singularValues().array().square().matrix();
  s.vectors = svd.matrixV();
  // J may have fewer rows than columns.
  if (s.singular_values.size() < j.cols()) {
    return hessian_spectrum_from_normal(j.transpose() * j);
  }
  return s;
}

HessianSpectrum hessian_spectrum_from_normal(const Eigen::MatrixXd& h) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h);
  const int n = static_cast<int>(h.rows());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  const Eigen::VectorXd ev = es.eigenvalues().cwiseAbs();
  std::sort(order.begin(), order.end(), [&](int a, int b) { return ev(a) > ev(b); });
  HessianSpectrum s;
  s.singular_values.resize(n);
  s.vectors.resize(n, n);
  for (int i = 0; i < n; ++i) {
    s.singular_values(i) = ev(order[i]);
    s.vectors.col(i) = es.eigenvectors().col(order[i]);
  }
  return s;
}

}  // namespace surfel

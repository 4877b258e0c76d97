#pragma once

// Levenberg-Marquardt with an ellipsoidal trust region (damping lambda *
// diag(H)) and a diagonal scaling preconditioner D_s = diag(1/sqrt(s_i)),
// s_i = (H + lambda D_w)_ii:
//
//   D_s (H + lambda D_w) D_s dx* = -D_s J^T r,   dx = D_s dx*
//
// lambda is held >= min_lambda_early during the first accepted steps.

#include <Eigen/Core>

#include <concepts>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace surfel {

/// Residual/Jacobian provider. apply_increment composes rotations and poses
/// multiplicatively and adds scalars.
template <class P>
concept NlsProblem = requires(const P& p, const typename P::Parameters& x, const Eigen::VectorXd& dx,
                              Eigen::VectorXd& r, Eigen::MatrixXd* j) {
  { p.dimension() } -> std::convertible_to<int>;
  p.evaluate(x, r, j);
  { p.apply_increment(x, dx) } -> std::convertible_to<typename P::Parameters>;
};

struct NormalEquations {
  Eigen::MatrixXd hessian;   // J^T J
  Eigen::VectorXd gradient;  // J^T r
  double cost = 0.0;         // r^T r
};

struct LmConfig {
  double lambda0 = 1.0;
  double lambda_up = 2.0;
  double lambda_down = 0.5;
  double min_lambda_early = 1.0;
  int early_phase_iters = 5;
  int max_iters = 50;
  double gradient_tol = 1e-8;
  double step_tol = 1e-8;
  double cost_tol = 1e-10;
  /// Record the condition number of the inner linear system per iteration.
  bool record_condition = false;
  bool precondition = true;
};

enum class Termination { GradientTolerance, StepTolerance, CostTolerance, MaxIterations, LinearSolveFailure };

std::string to_string(Termination t);

struct IterationRecord {
  int iteration = 0;
  double cost = 0.0;  // cost after the iteration
  double lambda = 0.0;
  double step_norm = 0.0;
  bool accepted = false;
  double inner_condition = 0.0;
};

struct SolveReport {
  int iterations = 0;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int accepted = 0;
  int rejected = 0;
  Termination termination = Termination::MaxIterations;
  std::vector<IterationRecord> history;

  /// Accepted-step costs never increase.
  bool monotone() const;
};

/// Writes `iteration,cost,lambda,step_norm` lines (with header).
void write_csv(std::ostream& out, const SolveReport& report);

template <class X>
struct SolveResult {
  X solution;
  SolveReport report;
};

/// D_s (H + lambda D_w) D_s and D_s. D_w = diag(H) floored at 1e-12.
std::pair<Eigen::MatrixXd, Eigen::VectorXd> preconditioned_system(const Eigen::MatrixXd& h, double lambda);

/// 2-norm condition number of the inner system, with or without D_s.
double inner_condition_number(const Eigen::MatrixXd& h, double lambda, bool precondition);

/// Solves a symmetric system with arrow structure: diagonal blocks of sizes
/// blocks[0..n-2] coupled only through the trailing block blocks[n-1],
/// which is eliminated last via its Schur complement.
std::optional<Eigen::VectorXd> solve_arrow(const Eigen::MatrixXd& m, const Eigen::VectorXd& b,
                                           const std::vector<int>& blocks);

/// One damped step; nullopt when the linear system is numerically singular.
std::optional<Eigen::VectorXd> damped_step(const Eigen::MatrixXd& h, const Eigen::VectorXd& g, double lambda,
                                           bool precondition = true, const std::vector<int>* arrow = nullptr);

template <NlsProblem P>
NormalEquations linearize(const P& problem, const typename P::Parameters& x) {
  if constexpr (requires { { problem.linearize(x) } -> std::convertible_to<NormalEquations>; }) {
    return problem.linearize(x);
  } else {
    Eigen::VectorXd r;
    Eigen::MatrixXd j;
    problem.evaluate(x, r, &j);
    NormalEquations ne;
    ne.hessian = j.transpose() * j;
    ne.gradient = j.transpose() * r;
    ne.cost = r.squaredNorm();
    return ne;
  }
}

template <NlsProblem P>
double evaluate_cost(const P& problem, const typename P::Parameters& x) {
  if constexpr (requires { { problem.cost(x) } -> std::convertible_to<double>; }) {
    return problem.cost(x);
  } else {
    Eigen::VectorXd r;
    problem.evaluate(x, r, nullptr);
    return r.squaredNorm();
  }
}

template <NlsProblem P>
SolveResult<typename P::Parameters> lm_solve(const P& problem, typename P::Parameters x0, const LmConfig& config = {}) {
  using X = typename P::Parameters;
  std::vector<int> arrow;
  if constexpr (requires { { problem.arrow_blocks() } -> std::convertible_to<std::vector<int>>; }) {
    arrow = problem.arrow_blocks();
  }
  const std::vector<int>* arrow_ptr = arrow.empty() ? nullptr : &arrow;

  SolveResult<X> result{std::move(x0), {}};
  SolveReport& report = result.report;
  NormalEquations ne = linearize(problem, result.solution);
  report.initial_cost = ne.cost;
  double cost = ne.cost;
  double lambda = config.lambda0;
  bool done = false;

  while (!done && report.iterations < config.max_iters) {
    if (ne.gradient.size() == 0 || ne.gradient.lpNorm<Eigen::Infinity>() < config.gradient_tol) {
      report.termination = Termination::GradientTolerance;
      done = true;
      break;
    }
    if (report.accepted < config.early_phase_iters) lambda = std::max(lambda, config.min_lambda_early);

    std::optional<Eigen::VectorXd> step = damped_step(ne.hessian, ne.gradient, lambda, config.precondition, arrow_ptr);
    for (int retry = 0; !step && retry < 5; ++retry) {
      lambda *= 10.0;
      step = damped_step(ne.hessian, ne.gradient, lambda, config.precondition, arrow_ptr);
    }
    ++report.iterations;
    IterationRecord rec;
    rec.iteration = report.iterations;
    rec.lambda = lambda;
    if (config.record_condition) rec.inner_condition = inner_condition_number(ne.hessian, lambda, config.precondition);
    if (!step) {
      rec.cost = cost;
      report.history.push_back(rec);
      report.termination = Termination::LinearSolveFailure;
      done = true;
      break;
    }
    rec.step_norm = step->norm();
    if (rec.step_norm < config.step_tol) {
      rec.cost = cost;
      report.history.push_back(rec);
      report.termination = Termination::StepTolerance;
      done = true;
      break;
    }

    X candidate = problem.apply_increment(result.solution, *step);
    const double new_cost = evaluate_cost(problem, candidate);
    if (std::isfinite(new_cost) && new_cost < cost) {
      const double decrease = cost - new_cost;
      result.solution = std::move(candidate);
      ++report.accepted;
      rec.accepted = true;
      rec.cost = new_cost;
      report.history.push_back(rec);
      const double previous = cost;
      lambda *= config.lambda_down;
      ne = linearize(problem, result.solution);
      cost = ne.cost;
      if (decrease <= config.cost_tol * previous) {
        report.termination = Termination::CostTolerance;
        done = true;
      }
    } else {
      ++report.rejected;
      rec.cost = cost;
      report.history.push_back(rec);
      lambda *= config.lambda_up;
    }
  }
  if (!done) report.termination = Termination::MaxIterations;
  report.final_cost = cost;
  return result;
}

/// Central differences through apply_increment along each coordinate.
template <NlsProblem P>
Eigen::MatrixXd fd_jacobian(const P& problem, const typename P::Parameters& x, double h) {
  const int n = problem.dimension();
  Eigen::VectorXd r0;
  problem.evaluate(x, r0, nullptr);
  Eigen::MatrixXd j(r0.size(), n);
  Eigen::VectorXd rp;
  Eigen::VectorXd rm;
  for (int c = 0; c < n; ++c) {
    Eigen::VectorXd d = Eigen::VectorXd::Zero(n);
    d(c) = h;
    problem.evaluate(problem.apply_increment(x, d), rp, nullptr);
    problem.evaluate(problem.apply_increment(x, -d), rm, nullptr);
    j.col(c) = (rp - rm) / (2.0 * h);
  }
  return j;
}

struct HessianSpectrum {
  Eigen::VectorXd singular_values;  // descending
  Eigen::MatrixXd vectors;          // column k pairs with singular_values(k)

  double ratio() const {
    return singular_values.size() == 0 || singular_values(0) == 0.0
               ? 0.0
               : singular_values(singular_values.size() - 1) / singular_values(0);
  }
  int count_below(double relative) const;
};

/// Singular values of H = J^T J, computed as squared singular values of J.
HessianSpectrum hessian_spectrum(const Eigen::MatrixXd& j);

/// Singular values of a symmetric positive semidefinite H.
HessianSpectrum hessian_spectrum_from_normal(const Eigen::MatrixXd& h);

}  // namespace surfel

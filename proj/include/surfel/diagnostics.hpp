#pragma once

// Self-checks: analytic Jacobians against central differences, and the two
// gauge ambiguities of the surfel model.

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "surfel/optimizer.hpp"

namespace surfel {

struct JacobianCheckOptions {
  std::uint64_t seed = 1;
  int trials = 200;
  double tolerance = 1e-4;
  /// Test fixture: flips the sign of the analytic rotation block.
  bool inject_sign_flip = false;
};

struct JacobianCheckRow {
  std::string block;
  double max_relative_error = 0.0;
  int comparisons = 0;
  bool pass = true;
};

struct JacobianCheckReport {
  std::vector<JacobianCheckRow> rows;
  bool pass() const;
};

/// Relative error max|A - N| / max|N| per block, worst case over trials.
/// Photometric rows saturated or invalid at any evaluated point are skipped.
JacobianCheckReport check_jacobians(const JacobianCheckOptions& options);

void write_csv(std::ostream& out, const JacobianCheckReport& report);

struct GrowingAmbiguityOptions {
  std::uint64_t seed = 1;
  int surfels = 100;
  std::vector<double> mus{0.5, 2.0, 10.0};
};

struct GrowingAmbiguityReport {
  /// Largest pixel displacement between S and its mu-scaled copy.
  double max_displacement = 0.0;
  /// Worst sigma_min / sigma_max of the general-F Hessian.
  double worst_ratio_general = 0.0;
  /// Worst |cos| between its near-null vector and the scale direction.
  double worst_cosine = 1.0;
  /// Smallest ratio(isometry) / ratio(general).
  double worst_improvement = 0.0;
  /// Example near-null vector (t, w, F11, F12, F22) and scale direction.
  Eigen::VectorXd null_vector;
  Eigen::VectorXd scale_direction;

  bool pass() const {
    return max_displacement < 1e-9 && worst_ratio_general < 1e-6 && worst_cosine > 0.99 && worst_improvement >= 1e3;
  }
};

GrowingAmbiguityReport growing_ambiguity(const GrowingAmbiguityOptions& options);

struct FloatingAmbiguityOptions {
  std::uint64_t seed = 1;
  int surfels = 10;
  double omega_equilibrium = 0.0;
  /// Equilibrium covariance sigma^2 I; the instance sits at depth ~5.
  double sigma = 1.0;
  double relative_threshold = 1e-8;
};

struct FloatingAmbiguityReport {
  double omega_equilibrium = 0.0;
  HessianSpectrum spectrum;
  int near_zero = 0;
  double ratio = 0.0;

  bool full_rank(double relative) const { return ratio > relative; }
};

/// Joint camera + surfel Hessian at an exact solution.
FloatingAmbiguityReport floating_ambiguity(const FloatingAmbiguityOptions& options);

}  // namespace surfel

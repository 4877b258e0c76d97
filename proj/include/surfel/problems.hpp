#pragma once

// Least-squares problems solved by the trackers:
//  - SurfelProblem: one surfel against one image with a fixed camera, plus
//    optional deformation-energy and equilibrium residuals.
//  - JointProblem: camera pose and a set of surfels, arrow-structured with
//    the camera block last.
//  - PoseProblem: camera pose only, surfels frozen.

#include <Eigen/Core>

#include <cmath>
#include <vector>

#include "surfel/image.hpp"
#include "surfel/lie.hpp"
#include "surfel/optimizer.hpp"
#include "surfel/parallel.hpp"
#include "surfel/photometric.hpp"
#include "surfel/surfel.hpp"

namespace surfel {

/// Soft anchor of a surfel centre, cost (X - X_e)^T information (X - X_e).
struct EquilibriumAnchor {
  Vec3d position = Vec3d::Zero();
  Mat3d information = Mat3d::Identity();
};

/// Anchor at the rest position with isotropic covariance sigma^2 I.
inline EquilibriumAnchor rest_anchor(const Surfel& s, double sigma) {
  return {s.rest_position, Mat3d::Identity() / (sigma * sigma)};
}

struct EquilibriumResidual {
  Vec3d residual = Vec3d::Zero();
  Mat3d d_translation = Mat3d::Zero();
  Mat3d d_rotation = Mat3d::Zero();
};

/// r = sqrt(omega) L (X0 + t - X_e) with L^T L = information. The centre does
/// not depend on the surfel rotation, so d_rotation is zero.
EquilibriumResidual equilibrium_residual(const Surfel& s, const SurfelStated& state, const EquilibriumAnchor& anchor,
                                         double omega);

/// sqrt(omega) (F11 - 1, F12, F22 - 1) and its Jacobian wrt (F11, F12, F22).
struct DeformationEnergyResidual {
  Vec3d residual;
  Mat3d jacobian;
};
DeformationEnergyResidual deformation_energy_residual(const Mat2d& f, double omega);

/// Model-specific settings shared by the problems.
struct SurfelModel {
  DeformationModel model = DeformationModel::Isometry;
  EquirealForm equireal_form = EquirealForm::Published;
  double omega_isometry = 1.0;
  double saturation = kDefaultSaturation;
  bool optimize_gain_bias = false;

  int deform_count() const { return deform_param_count(model); }
  int dimension() const { return 6 + deform_count() + (optimize_gain_bias ? 2 : 0); }
  bool has_energy() const { return deform_count() > 0 && omega_isometry > 0.0; }

  ParameterSet active() const {
    ParameterSet p{Block::Translation, Block::Rotation};
    if (deform_count() > 0) p = p.with(Block::Deformation);
    if (optimize_gain_bias) p = p.with(Block::GainBias);
    return p;
  }

  /// t += d[0:3], R <- R exp(d[3:6]), deformation params += d, gain/bias += d.
  SurfelStated apply(const SurfelStated& x, const Eigen::Ref<const Eigen::VectorXd>& d) const {
    SurfelStated out = x;
    out.translation += d.head<3>();
    out.rotation = x.rotation * so3_exp<double>(d.segment<3>(3));
    const int k = deform_count();
    if (k > 0) {
      const Eigen::VectorXd p = deform_params(model, x.deform) + d.segment(6, k);
      out.deform = materialize_deform(model, std::span<const double>(p.data(), p.size()), equireal_form);
    }
    if (optimize_gain_bias) {
      out.gain += d(6 + k);
      out.bias += d(7 + k);
    }
    return out;
  }

  /// Photometric (+ energy) residual rows and their Jacobian in model
  /// coordinates; `camera_cols` adds the 6 camera columns at the end.
  template <ImageSampler Image>
  void residuals(const Surfel& s, const SurfelStated& x, const Posed& camera, const Image& image, const Intrinsics& k,
                 const TexturePatch& texture, bool camera_cols, Eigen::VectorXd& r, Eigen::MatrixXd* j) const {
    ParameterSet set = active();
    if (camera_cols) set = set.with(Block::Camera);
    const ResidualBlock block = photometric_block(s, x, camera, image, k, texture, saturation, set, j != nullptr);
    const int n = block.size();
    const int kd = deform_count();
    const int rows = n + (has_energy() ? 3 : 0);
    const int cols = dimension() + (camera_cols ? 6 : 0);
    r.resize(rows);
    r.head(n) = block.residuals;
    Eigen::MatrixXd dfdp;
    if (kd > 0) {
      const Eigen::VectorXd p = deform_params(model, x.deform);
      dfdp = deform_param_jacobian(model, std::span<const double>(p.data(), p.size()), equireal_form);
    }
    if (has_energy()) r.tail<3>() = deformation_energy_residual(x.deform, omega_isometry).residual;
    if (!j) return;
    j->setZero(rows, cols);
    j->topLeftCorner(n, 6) = block.jacobian.leftCols(6);
    int col = 6;
    if (kd > 0) {
      j->block(0, 6, n, kd) = block.jacobian.middleCols(set.offset(Block::Deformation), 3) * dfdp;
      col += kd;
    }
    if (optimize_gain_bias) {
      j->block(0, col, n, 2) = block.jacobian.middleCols(set.offset(Block::GainBias), 2);
      col += 2;
    }
    if (camera_cols) j->block(0, col, n, 6) = block.jacobian.middleCols(set.offset(Block::Camera), 6);
    if (has_energy()) {
      j->block(n, 6, 3, kd) = deformation_energy_residual(x.deform, omega_isometry).jacobian * dfdp;
    }
  }
};

template <ImageSampler Image>
class SurfelProblem {
 public:
  using Parameters = SurfelStated;

  SurfelProblem(const Surfel& surfel, const TexturePatch& texture, const Image& image, const Intrinsics& k,
                const Posed& camera, SurfelModel model, const EquilibriumAnchor* anchor = nullptr,
                double omega_equilibrium = 0.0)
      : surfel_(surfel),
        texture_(texture),
        image_(image),
        k_(k),
        camera_(camera),
        model_(model),
        anchor_(anchor),
        omega_e_(omega_equilibrium) {}

  int dimension() const { return model_.dimension(); }

  void evaluate(const Parameters& x, Eigen::VectorXd& r, Eigen::MatrixXd* j) const {
    model_.residuals(surfel_, x, camera_, image_, k_, texture_, false, r, j);
    if (!anchor_ || omega_e_ <= 0.0) return;
    const EquilibriumResidual e = equilibrium_residual(surfel_, x, *anchor_, omega_e_);
    const int n = static_cast<int>(r.size());
    r.conservativeResize(n + 3);
    r.tail<3>() = e.residual;
    if (j) {
      j->conservativeResize(n + 3, Eigen::NoChange);
      j->bottomRows<3>().setZero();
      j->block<3, 3>(n, 0) = e.d_translation;
      j->block<3, 3>(n, 3) = e.d_rotation;
    }
  }

  Parameters apply_increment(const Parameters& x, const Eigen::VectorXd& d) const { return model_.apply(x, d); }

 private:
  const Surfel& surfel_;
  const TexturePatch& texture_;
  const Image& image_;
  Intrinsics k_;
  Posed camera_;
  SurfelModel model_;
  const EquilibriumAnchor* anchor_;
  double omega_e_;
};

struct JointState {
  Posed camera;
  std::vector<SurfelStated> surfels;
};

/// Camera pose plus surfel states; surfel blocks first, camera last.
template <ImageSampler Image>
class JointProblem {
 public:
  using Parameters = JointState;

  struct Term {
    const Surfel* surfel;
    const TexturePatch* texture;
    const EquilibriumAnchor* anchor;
  };

  JointProblem(std::vector<Term> terms, const Image& image, const Intrinsics& k, SurfelModel model,
               double omega_equilibrium, int threads = 1)
      : terms_(std::move(terms)), image_(image), k_(k), model_(model), omega_e_(omega_equilibrium), threads_(threads) {}

  int surfel_count() const { return static_cast<int>(terms_.size()); }
  int dimension() const { return surfel_count() * model_.dimension() + 6; }

  std::vector<int> arrow_blocks() const {
    std::vector<int> b(terms_.size(), model_.dimension());
    b.push_back(6);
    return b;
  }

  /// Residuals of surfel i, Jacobian columns [surfel block | camera(6)].
  void surfel_residuals(int i, const Parameters& x, Eigen::VectorXd& r, Eigen::MatrixXd* j) const {
    const Term& t = terms_[i];
    model_.residuals(*t.surfel, x.surfels[i], x.camera, image_, k_, *t.texture, true, r, j);
    if (!t.anchor || omega_e_ <= 0.0) return;
    const EquilibriumResidual e = equilibrium_residual(*t.surfel, x.surfels[i], *t.anchor, omega_e_);
    const int n = static_cast<int>(r.size());
    r.conservativeResize(n + 3);
    r.tail<3>() = e.residual;
    if (j) {
      j->conservativeResize(n + 3, Eigen::NoChange);
      j->bottomRows<3>().setZero();
      j->block<3, 3>(n, 0) = e.d_translation;
      j->block<3, 3>(n, 3) = e.d_rotation;
    }
  }

  void evaluate(const Parameters& x, Eigen::VectorXd& r, Eigen::MatrixXd* j) const {
    const int ds = model_.dimension();
    std::vector<Eigen::VectorXd> rs(terms_.size());
    std::vector<Eigen::MatrixXd> js(terms_.size());
    parallel_for(surfel_count(), threads_, [&](int i) { surfel_residuals(i, x, rs[i], j ? &js[i] : nullptr); });
    int rows = 0;
    for (const auto& ri : rs) rows += static_cast<int>(ri.size());
    r.resize(rows);
    if (j) j->setZero(rows, dimension());
    int row = 0;
    const int cam = surfel_count() * ds;
    for (int i = 0; i < surfel_count(); ++i) {
      const int n = static_cast<int>(rs[i].size());
      r.segment(row, n) = rs[i];
      if (j) {
        j->block(row, i * ds, n, ds) = js[i].leftCols(ds);
        j->block(row, cam, n, 6) = js[i].rightCols(6);
      }
      row += n;
    }
  }

  NormalEquations linearize(const Parameters& x) const {
    const int ds = model_.dimension();
    const int n = dimension();
    const int cam = surfel_count() * ds;
    struct Local {
      Eigen::MatrixXd h;
      Eigen::VectorXd g;
      double cost = 0.0;
    };
    std::vector<Local> locals(terms_.size());
    parallel_for(surfel_count(), threads_, [&](int i) {
      Eigen::VectorXd r;
      Eigen::MatrixXd j;
      surfel_residuals(i, x, r, &j);
      locals[i].h = j.transpose() * j;
      locals[i].g = j.transpose() * r;
      locals[i].cost = r.squaredNorm();
    });
    NormalEquations ne;
    ne.hessian.setZero(n, n);
    ne.gradient.setZero(n);
    for (int i = 0; i < surfel_count(); ++i) {
      const Local& l = locals[i];
      const int o = i * ds;
      ne.hessian.block(o, o, ds, ds) = l.h.topLeftCorner(ds, ds);
      ne.hessian.block(o, cam, ds, 6) = l.h.topRightCorner(ds, 6);
      ne.hessian.block(cam, o, 6, ds) = l.h.bottomLeftCorner(6, ds);
      ne.hessian.block(cam, cam, 6, 6) += l.h.bottomRightCorner(6, 6);
      ne.gradient.segment(o, ds) = l.g.head(ds);
      ne.gradient.tail<6>() += l.g.tail(6);
      ne.cost += l.cost;
    }
    return ne;
  }

  double cost(const Parameters& x) const {
    std::vector<double> costs(terms_.size());
    parallel_for(surfel_count(), threads_, [&](int i) {
      Eigen::VectorXd r;
      surfel_residuals(i, x, r, nullptr);
      costs[i] = r.squaredNorm();
    });
    double c = 0.0;
    for (double v : costs) c += v;
    return c;
  }

  Parameters apply_increment(const Parameters& x, const Eigen::VectorXd& d) const {
    const int ds = model_.dimension();
    Parameters out;
    out.surfels.resize(x.surfels.size());
    for (int i = 0; i < surfel_count(); ++i) out.surfels[i] = model_.apply(x.surfels[i], d.segment(i * ds, ds));
    out.camera = se3_exp<double>(d.tail<6>()) * x.camera;
    return out;
  }

 private:
  std::vector<Term> terms_;
  const Image& image_;
  Intrinsics k_;
  SurfelModel model_;
  double omega_e_;
  int threads_;
};

/// Camera pose only; surfel states fixed.
template <ImageSampler Image>
class PoseProblem {
 public:
  using Parameters = Posed;

  struct Term {
    const Surfel* surfel;
    const TexturePatch* texture;
    SurfelStated state;
  };

  PoseProblem(std::vector<Term> terms, const Image& image, const Intrinsics& k, double saturation)
      : terms_(std::move(terms)), image_(image), k_(k), saturation_(saturation) {}

  int dimension() const { return 6; }

  void evaluate(const Parameters& x, Eigen::VectorXd& r, Eigen::MatrixXd* j) const {
    int rows = 0;
    for (const auto& t : terms_) rows += t.texture->size();
    r.resize(rows);
    if (j) j->setZero(rows, 6);
    int row = 0;
    for (const auto& t : terms_) {
      const ResidualBlock b = photometric_block(*t.surfel, t.state, x, image_, k_, *t.texture, saturation_,
                                                ParameterSet{Block::Camera}, j != nullptr);
      r.segment(row, b.size()) = b.residuals;
      if (j) j->block(row, 0, b.size(), 6) = b.jacobian;
      row += b.size();
    }
  }

  Parameters apply_increment(const Parameters& x, const Eigen::VectorXd& d) const {
    return se3_exp<double>(d.head<6>()) * x;
  }

 private:
  std::vector<Term> terms_;
  const Image& image_;
  Intrinsics k_;
  double saturation_;
};

}  // namespace surfel

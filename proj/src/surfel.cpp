#include "surfel/surfel.hpp"

#include <cmath>

namespace surfel {

int deform_param_count(DeformationModel model) {
  switch (model) {
    case DeformationModel::Isometry: return 0;
    case DeformationModel::Conformal: return 1;
    case DeformationModel::Equireal: return 2;
    case DeformationModel::General: return 3;
  }
  return 0;
}

std::string to_string(DeformationModel model) {
  switch (model) {
    case DeformationModel::Isometry: return "isometry";
    case DeformationModel::Conformal: return "conformal";
    case DeformationModel::Equireal: return "equireal";
    case DeformationModel::General: return "general";
  }
  return "unknown";
}

DeformationModel parse_deformation_model(const std::string& name) {
  if (name == "isometry") return DeformationModel::Isometry;
  if (name == "conformal") return DeformationModel::Conformal;
  if (name == "equireal") return DeformationModel::Equireal;
  if (name == "general") return DeformationModel::General;
  throw Error(ErrorCode::BadInput, "unknown deformation model '" + name + "'");
}

Mat2d materialize_deform(DeformationModel model, std::span<const double> params, EquirealForm form) {
  if (static_cast<int>(params.size()) != deform_param_count(model)) {
    throw Error(ErrorCode::BadArity, to_string(model) + " expects " + std::to_string(deform_param_count(model)) +
                                         " parameters, got " + std::to_string(params.size()));
  }
  Mat2d f;
  switch (model) {
    case DeformationModel::Isometry:
      f.setIdentity();
      break;
    case DeformationModel::Conformal:
      f = params[0] * Mat2d::Identity();
      break;
    case DeformationModel::Equireal: {
      const double a = params[0];
      const double b = params[1];
      if (a == 0.0) throw Error(ErrorCode::Singular, "equireal tensor with alpha = 0");
      const double d = form == EquirealForm::Published ? (1.0 + b) / a : (1.0 + b * b) / a;
      f << a, b, b, d;
      break;
    }
    case DeformationModel::General:
      f << params[0], params[1], params[1], params[2];
      break;
  }
  return f;
}

Eigen::VectorXd deform_params(DeformationModel model, const Mat2d& f) {
  switch (model) {
    case DeformationModel::Isometry: return Eigen::VectorXd(0);
    case DeformationModel::Conformal: return Eigen::VectorXd::Constant(1, f(0, 0));
    case DeformationModel::Equireal: return Eigen::Vector2d(f(0, 0), f(0, 1));
    case DeformationModel::General: return Eigen::Vector3d(f(0, 0), f(0, 1), f(1, 1));
  }
  return {};
}

Eigen::MatrixXd deform_param_jacobian(DeformationModel model, std::span<const double> params, EquirealForm form) {
  const int n = deform_param_count(model);
  if (static_cast<int>(params.size()) != n) throw Error(ErrorCode::BadArity, "parameter count mismatch");
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(3, n);
  switch (model) {
    case DeformationModel::Isometry:
      break;
    case DeformationModel::Conformal:
      j << 1.0, 0.0, 1.0;
      break;
    case DeformationModel::Equireal: {
      const double a = params[0];
      const double b = params[1];
      if (a == 0.0) throw Error(ErrorCode::Singular, "equireal tensor with alpha = 0");
      j(0, 0) = 1.0;
      j(1, 1) = 1.0;
      if (form == EquirealForm::Published) {
        j(2, 0) = -(1.0 + b) / (a * a);
        j(2, 1) = 1.0 / a;
      } else {
        j(2, 0) = -(1.0 + b * b) / (a * a);
        j(2, 1) = 2.0 * b / a;
      }
      break;
    }
    case DeformationModel::General:
      j.setIdentity();
      break;
  }
  return j;
}

Eigen::Matrix2Xd texture_grid(int half_extent, double spacing) {
  const int side = 2 * half_extent + 1;
  Eigen::Matrix2Xd grid(2, side * side);
  int i = 0;
  for (int v = -half_extent; v <= half_extent; ++v) {
    for (int u = -half_extent; u <= half_extent; ++u) grid.col(i++) = spacing * Vec2d(u, v);
  }
  return grid;
}

SurfelStated scale_surfel(const Surfel& s, const SurfelStated& state, double mu) {
  SurfelStated out = state;
  out.translation = mu * (s.rest_position + state.translation) - s.rest_position;
  out.deform = mu * state.deform;
  return out;
}

SurfelGeometry init_surfel(const DepthMap& depth, const Intrinsics& k, int x, int y) {
  for (int dy = -1; dy <= 1; ++dy) {
    for (int dx = -1; dx <= 1; ++dx) {
      if (!depth.valid(x + dx, y + dy)) {
        throw Error(ErrorCode::InvalidDepth, "missing depth around pixel (" + std::to_string(x) + ", " +
                                                 std::to_string(y) + ")");
      }
    }
  }
  const Vec2d n = k.normalized(Vec2d(x, y));
  const double z = depth(x, y);
  // One pixel step is 1/f in normalized coordinates.
  const double dz_dx = 0.5 * (depth(x + 1, y) - depth(x - 1, y)) * k.fx;
  const double dz_dy = 0.5 * (depth(x, y + 1) - depth(x, y - 1)) * k.fy;

  SurfelGeometry g;
  g.position = z * Vec3d(n.x(), n.y(), 1.0);
  g.jacobian << z + n.x() * dz_dx, n.x() * dz_dy,  //
      n.y() * dz_dx, z + n.y() * dz_dy,            //
      dz_dx, dz_dy;
  return g;
}

Mat32d to_pixel_units(const Mat32d& normalized_jacobian, const Intrinsics& k) {
  Mat32d j = normalized_jacobian;
  j.col(0) /= k.fx;
  j.col(1) /= k.fy;
  return j;
}

}  // namespace surfel

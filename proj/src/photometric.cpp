#include "surfel/photometric.hpp"

#include <algorithm>
#include <cmath>

namespace surfel {

int ResidualBlock::valid_count() const {
  int n = 0;
  for (auto v : valid) n += v;
  return n;
}

double ResidualBlock::rms() const {
  double sum = 0.0;
  int n = 0;
  for (int i = 0; i < size(); ++i) {
    if (!valid[i]) continue;
    sum += residuals(i) * residuals(i);
    ++n;
  }
  return n == 0 ? 0.0 : std::sqrt(sum / n);
}

Surfel make_surfel(int id, const DepthMap& depth, const Intrinsics& k, const Eigen::Vector2i& pixel,
                   const ImagePyramid& reference, const Posed& reference_pose, int half_extent) {
  const SurfelGeometry g = init_surfel(depth, k, pixel.x(), pixel.y());
  const Posed world_from_camera = reference_pose.inverse();
  Surfel s;
  s.id = id;
  s.rest_position = world_from_camera.apply(g.position);
  s.rest_jacobian = world_from_camera.rotation * to_pixel_units(g.jacobian, k);
  s.anchor_pixel = pixel.cast<double>();
  s.anchor_normalized = k.normalized(s.anchor_pixel);
  for (int level = 0; level < reference.size(); ++level) {
    for (double spacing = std::ldexp(1.0, level);; spacing *= 0.5) {
      try {
        s.textures.push_back(
            extract_texture(s, reference.level(level), reference_pose, k.at_level(level), half_extent, spacing));
        break;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::OutOfImage || spacing <= 1.0) throw;
      }
    }
  }
  return s;
}

GainBias estimate_gain_bias(const Eigen::VectorXd& texture, const Eigen::VectorXd& intensities) {
  if (texture.size() != intensities.size() || texture.size() < 2) {
    throw Error(ErrorCode::DegenerateFit, "gain/bias fit needs at least two paired samples");
  }
  const double mi = intensities.mean();
  const double mt = texture.mean();
  const Eigen::ArrayXd di = intensities.array() - mi;
  const Eigen::ArrayXd dt = texture.array() - mt;
  const double var_i = di.square().mean();
  GainBias gb;
  if (var_i < 1e-12) {
    gb.degenerate = true;
    gb.bias = mt - mi;
    return gb;
  }
  gb.gain = (di * dt).mean() / var_i;
  gb.bias = mt - gb.gain * mi;
  return gb;
}

double zncc(const Eigen::VectorXd& texture, const Eigen::VectorXd& intensities) {
  if (texture.size() != intensities.size() || texture.size() < 2) return 0.0;
  const Eigen::ArrayXd a = texture.array() - texture.mean();
  const Eigen::ArrayXd b = intensities.array() - intensities.mean();
  const double na = a.matrix().squaredNorm();
  const double nb = b.matrix().squaredNorm();
  if (na < 1e-18 || nb < 1e-18) return 0.0;
  return std::clamp((a * b).sum() / std::sqrt(na * nb), -1.0, 1.0);
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> valid_samples(const ResidualBlock& block, const TexturePatch& texture) {
  const int n = block.valid_count();
  Eigen::VectorXd t(n);
  Eigen::VectorXd i(n);
  int j = 0;
  for (int s = 0; s < block.size(); ++s) {
    if (!block.valid[s]) continue;
    t(j) = texture.values(s);
    i(j) = block.intensities(s);
    ++j;
  }
  return {t, i};
}

}  // namespace surfel

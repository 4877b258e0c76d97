#include "surfel/image.hpp"

#include <cmath>
#include <random>

namespace surfel {

std::optional<double> GrayImage::sample(double x, double y) const {
  const int w = width();
  const int h = height();
  if (!(x >= 0.0 && y >= 0.0 && x <= w - 1 && y <= h - 1)) return std::nullopt;
  int x0 = static_cast<int>(std::floor(x));
  int y0 = static_cast<int>(std::floor(y));
  x0 = std::min(x0, std::max(w - 2, 0));
  y0 = std::min(y0, std::max(h - 2, 0));
  const double ax = x - x0;
  const double ay = y - y0;
  const int x1 = std::min(x0 + 1, w - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  const double top = (1.0 - ax) * data_(y0, x0) + ax * data_(y0, x1);
  const double bottom = (1.0 - ax) * data_(y1, x0) + ax * data_(y1, x1);
  return (1.0 - ay) * top + ay * bottom;
}

std::optional<Vec2d> GrayImage::gradient(double x, double y) const {
  if (!(x >= 1.0 && y >= 1.0 && x <= width() - 2 && y <= height() - 2)) return std::nullopt;
  const double gx = (*sample(x + 1.0, y) - *sample(x - 1.0, y)) * 0.5;
  const double gy = (*sample(x, y + 1.0) - *sample(x, y - 1.0)) * 0.5;
  return Vec2d(gx, gy);
}

AnalyticImage make_sinusoid_image(unsigned seed, int width, int height, int terms) {
  struct Term {
    double amp, kx, ky, phase;
  };
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> freq(0.04, 0.25);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * M_PI);
  std::vector<Term> ts;
  for (int i = 0; i < terms; ++i) {
    const double f = freq(rng);
    const double a = angle(rng);
    ts.push_back({0.25 / terms, f * std::cos(a), f * std::sin(a), angle(rng)});
  }
  AnalyticImage img;
  img.width = width;
  img.height = height;
  img.intensity = [ts](double x, double y) {
    double v = 0.5;
    for (const auto& t : ts) v += t.amp * std::sin(t.kx * x + t.ky * y + t.phase);
    return v;
  };
  img.grad = [ts](double x, double y) {
    Vec2d g = Vec2d::Zero();
    for (const auto& t : ts) {
      const double c = t.amp * std::cos(t.kx * x + t.ky * y + t.phase);
      g += c * Vec2d(t.kx, t.ky);
    }
    return g;
  };
  return img;
}

GrayImage downsample2(const GrayImage& img) {
  const int w = (img.width() + 1) / 2;
  const int h = (img.height() + 1) / 2;
  GrayImage out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double sum = 0.0;
      int n = 0;
      for (int dy = 0; dy < 2; ++dy) {
        for (int dx = 0; dx < 2; ++dx) {
          const int sx = 2 * x + dx;
          const int sy = 2 * y + dy;
          if (sx < img.width() && sy < img.height()) {
            sum += img(sx, sy);
            ++n;
          }
        }
      }
      out(x, y) = sum / n;
    }
  }
  return out;
}

ImagePyramid build_pyramid(const GrayImage& img, int levels) {
  if (levels < 1) throw Error(ErrorCode::TooSmall, "pyramid needs at least one level");
  const long min_size = 1L << (levels - 1);
  if (img.width() <= min_size || img.height() <= min_size) {
    throw Error(ErrorCode::TooSmall, "image too small for the requested pyramid depth");
  }
  ImagePyramid pyr;
  pyr.levels.reserve(levels);
  pyr.levels.push_back(img);
  for (int k = 1; k < levels; ++k) pyr.levels.push_back(downsample2(pyr.levels.back()));
  return pyr;
}

}  // namespace surfel

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "surfel/camera.hpp"
#include "surfel/image.hpp"
#include "surfel/pgm.hpp"

using namespace surfel;

TEST_SUITE_BEGIN("imaging");

namespace {

GrayImage random_image(int w, int h, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  GrayImage img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) img(x, y) = u(rng);
  return img;
}

// Straightforward bilinear interpolation written from the definition.
double bilinear_oracle(const GrayImage& img, double x, double y) {
  const int x0 = std::min(static_cast<int>(std::floor(x)), img.width() - 2);
  const int y0 = std::min(static_cast<int>(std::floor(y)), img.height() - 2);
  const double fx = x - x0;
  const double fy = y - y0;
  const double top = (1 - fx) * img(x0, y0) + fx * img(x0 + 1, y0);
  const double bottom = (1 - fx) * img(x0, y0 + 1) + fx * img(x0 + 1, y0 + 1);
  return (1 - fy) * top + fy * bottom;
}

}  // namespace

TEST_CASE("bilinear sampling") {
  const GrayImage img = random_image(17, 13, 1);
  CHECK(*bilinear_sample(img, 4, 7) == img(4, 7));
  CHECK(*bilinear_sample(img, 16, 12) == img(16, 12));
  CHECK(*bilinear_sample(img, 4.5, 7) == doctest::Approx((img(4, 7) + img(5, 7)) / 2).epsilon(1e-14));

  std::mt19937 rng(2);
  std::uniform_real_distribution<double> ux(0.0, 16.0);
  std::uniform_real_distribution<double> uy(0.0, 12.0);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double x = ux(rng);
    const double y = uy(rng);
    worst = std::max(worst, std::abs(*bilinear_sample(img, x, y) - bilinear_oracle(img, x, y)));
  }
  CHECK(worst < 1e-12);

  CHECK_FALSE(bilinear_sample(img, -0.01, 3).has_value());
  CHECK_FALSE(bilinear_sample(img, 3, 12.01).has_value());
}

TEST_CASE("bilinear sampling is continuous") {
  const GrayImage img = random_image(9, 9, 3);
  for (double x : {1.0, 2.5, 3.999999999, 7.0}) {
    CHECK(std::abs(*img.sample(x, 4.2) - *img.sample(x + 1e-9, 4.2)) < 1e-7);
  }
}

TEST_CASE("central-difference gradients") {
  GrayImage flat(10, 10, 0.3);
  CHECK(flat.gradient(5.2, 4.7)->norm() == 0.0);

  GrayImage ramp(20, 10);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 20; ++x) ramp(x, y) = 0.01 * x;
  const Vec2d g = *ramp.gradient(7.3, 4.4);
  CHECK(std::abs(g.x() - 0.01) < 1e-12);
  CHECK(std::abs(g.y()) < 1e-12);

  const GrayImage img = random_image(15, 15, 4);
  for (double x : {1.0, 3.3, 8.75}) {
    const double y = 6.6;
    const Vec2d gi = *img.gradient(x, y);
    CHECK(gi.x() == (*img.sample(x + 1, y) - *img.sample(x - 1, y)) / 2);
    CHECK(gi.y() == (*img.sample(x, y + 1) - *img.sample(x, y - 1)) / 2);
  }
  CHECK_FALSE(img.gradient(0.5, 5).has_value());
}

TEST_CASE("pyramid construction") {
  const GrayImage img = random_image(16, 12, 5);
  const ImagePyramid one = build_pyramid(img, 1);
  REQUIRE(one.size() == 1);
  CHECK((one.level(0).array() == img.array()).all());

  const ImagePyramid flat = build_pyramid(GrayImage(4, 4, 0.7), 2);
  CHECK(flat.level(1).width() == 2);
  CHECK(flat.level(1).height() == 2);
  CHECK((flat.level(1).array() - 0.7).abs().maxCoeff() < 1e-15);

  GrayImage checker(8, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) checker(x, y) = (x + y) % 2;
  const GrayImage half = build_pyramid(checker, 2).level(1);
  CHECK((half.array() - 0.5).abs().maxCoeff() == 0.0);

  const ImagePyramid odd = build_pyramid(random_image(11, 7, 6), 3);
  CHECK(odd.level(1).width() == 6);
  CHECK(odd.level(1).height() == 4);
  CHECK(odd.level(2).width() == 3);
  CHECK(odd.level(2).height() == 2);
}

TEST_CASE("pyramid rejects undersized images") {
  try {
    build_pyramid(GrayImage(3, 3), 3);
    FAIL("expected TooSmall");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TooSmall);
  }
}

TEST_CASE("coarse levels approximate the smooth fine image") {
  GrayImage img(128, 96);
  for (int y = 0; y < 96; ++y)
    for (int x = 0; x < 128; ++x) img(x, y) = 0.5 + 0.3 * std::sin(x / 13.0) * std::cos(y / 17.0);
  const ImagePyramid pyr = build_pyramid(img, 3);
  const Intrinsics k{100, 100, 63.5, 47.5};
  double worst = 0.0;
  for (int level = 1; level < 3; ++level) {
    const Intrinsics kl = k.at_level(level);
    for (int y = 2; y < pyr.level(level).height() - 2; ++y) {
      for (int x = 2; x < pyr.level(level).width() - 2; ++x) {
        // Same ray on both levels.
        const Vec2d n = kl.normalized(Vec2d(x, y));
        const double x0 = n.x() * k.fx + k.cx;
        const double y0 = n.y() * k.fy + k.cy;
        worst = std::max(worst, std::abs(pyr.level(level)(x, y) - *img.sample(x0, y0)));
      }
    }
  }
  CHECK(worst < 0.05);
}

TEST_CASE("projection") {
  const Intrinsics k{500, 480, 320, 240};
  CHECK((*project(k, Vec3d(0, 0, 1)) - Vec2d(320, 240)).norm() == 0.0);

  const Vec2d px(101.25, 377.5);
  CHECK((*project(k, k.unproject(px, 3.7)) - px).norm() < 1e-12);

  Eigen::Matrix3d km;
  km << k.fx, 0, k.cx, 0, k.fy, k.cy, 0, 0, 1;
  std::mt19937 rng(8);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  std::uniform_real_distribution<double> z(0.1, 100.0);
  for (int i = 0; i < 100; ++i) {
    const Vec3d xc(u(rng), u(rng), z(rng));
    const Vec3d h = km * xc;
    CHECK((*project(k, xc) - h.head<2>() / h.z()).norm() < 1e-12 * (1 + h.head<2>().norm() / h.z()));
  }

  CHECK_FALSE(project(k, Vec3d(1, 1, 0)).has_value());
  CHECK_FALSE(project(k, Vec3d(1, 1, -2)).has_value());
  CHECK_THROWS_AS(project_or_throw(k, Vec3d(0, 0, 1e-7)), Error);
  CHECK((normalized(k, Vec2d(320 + 500, 240)) - Vec2d(1, 0)).norm() < 1e-15);
}

TEST_CASE("projection Jacobian") {
  const Intrinsics unit{1, 1, 0, 0};
  Mat23d expect;
  expect << 1, 0, 0, 0, 1, 0;
  CHECK((*projection_jacobian(unit, Vec3d(0, 0, 1)) - expect).norm() == 0.0);

  const Intrinsics k{500, 450, 320, 240};
  std::mt19937 rng(9);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  std::uniform_real_distribution<double> z(0.1, 100.0);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Vec3d xc(u(rng), u(rng), z(rng));
    const Mat23d j = *projection_jacobian(k, xc);
    Mat23d fd;
    for (int c = 0; c < 3; ++c) {
      const double h = 1e-6 * std::max(1.0, std::abs(xc(c)));
      Vec3d a = xc;
      Vec3d b = xc;
      a(c) += h;
      b(c) -= h;
      fd.col(c) = (*project(k, a) - *project(k, b)) / (2 * h);
    }
    worst = std::max(worst, (j - fd).cwiseAbs().maxCoeff() / fd.cwiseAbs().maxCoeff());
  }
  CHECK(worst < 1e-5);

  const Vec3d p(0.3, -0.2, 2.0);
  const Mat23d j1 = *projection_jacobian(k, p);
  const Mat23d j2 = *projection_jacobian(k, Vec3d(p.x(), p.y(), 4.0));
  CHECK((j2.leftCols<2>() - 0.5 * j1.leftCols<2>()).norm() < 1e-12);
  CHECK_FALSE(projection_jacobian(k, Vec3d(0, 0, 0)).has_value());
}

TEST_CASE("level intrinsics track box-filter pixel centres") {
  const Intrinsics k{500, 500, 319.5, 239.5};
  const Intrinsics k1 = k.at_level(1);
  CHECK(k1.fx == 250);
  CHECK(k1.cx == doctest::Approx(159.5));
  // Level-1 pixel 0 covers level-0 pixels 0 and 1: same ray as x0 = 0.5.
  CHECK(k1.normalized(Vec2d(0, 0)).x() == doctest::Approx(k.normalized(Vec2d(0.5, 0.5)).x()));
}

TEST_CASE("PGM round trips") {
  const auto dir = std::filesystem::temp_directory_path() / "surfeltrack-unit-pgm";
  std::filesystem::create_directories(dir);
  const GrayImage img = random_image(23, 11, 10);

  write_pgm(dir / "a8.pgm", img, 255);
  const GrayImage back8 = read_pgm(dir / "a8.pgm");
  CHECK(back8.width() == 23);
  CHECK(back8.height() == 11);
  CHECK((back8.array() - img.array()).abs().maxCoeff() <= 0.5 / 255 + 1e-12);

  write_pgm(dir / "a16.pgm", img, 65535);
  CHECK((read_pgm(dir / "a16.pgm").array() - img.array()).abs().maxCoeff() <= 0.5 / 65535 + 1e-12);

  DepthMap d(5, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 5; ++x) d.set(x, y, 1.0 + 0.25 * x + y);
  d.invalidate(2, 2);
  write_depth_pgm(dir / "d.pgm", d, 0.005);
  const DepthMap db = read_depth_pgm(dir / "d.pgm", 0.005);
  CHECK_FALSE(db.valid(2, 2));
  CHECK(db(4, 3) == doctest::Approx(5.0).epsilon(1e-3));

  {
    std::ofstream ascii(dir / "p2.pgm");
    ascii << "P2\n# comment\n3 2\n4\n0 1 2\n3 4 4\n";
  }
  const GrayImage p2 = read_pgm(dir / "p2.pgm");
  CHECK(p2(1, 0) == 0.25);
  CHECK(p2(2, 1) == 1.0);
  std::filesystem::remove_all(dir);
}

TEST_SUITE_END();

#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <random>

#include "cforb/geometry.hpp"

namespace {

using cforb::CameraSide;
using cforb::MotionParams;
using cforb::StereoCalib;

const StereoCalib kToyCalib{100.0, 50.0, 50.0, 0.5};

MotionParams identity_motion() { return MotionParams{}; }

}  // namespace

TEST_CASE("triangulate recovers the textbook point exactly") {
  // d = 10 px, Z = 100 * 0.5 / 10 = 5, X = (60-50) * 5 / 100 = 0.5. All values
  // are binary-exact, so compare with == rather than a tolerance.
  auto X = cforb::triangulate({60.0, 50.0}, {50.0, 50.0}, kToyCalib);
  REQUIRE(X.has_value());
  CHECK(X->x() == 0.5);
  CHECK(X->y() == 0.0);
  CHECK(X->z() == 5.0);
}

TEST_CASE("triangulate rejects non-positive disparity") {
  CHECK_FALSE(cforb::triangulate({50.0, 50.0}, {50.0, 50.0}, kToyCalib).has_value());
  CHECK_FALSE(cforb::triangulate({49.0, 50.0}, {50.0, 50.0}, kToyCalib).has_value());
}

TEST_CASE("triangulate honours the minimum-disparity floor") {
  CHECK_FALSE(cforb::triangulate({52.0, 50.0}, {50.0, 50.0}, kToyCalib, 3.0).has_value());
  CHECK(cforb::triangulate({53.0, 50.0}, {50.0, 50.0}, kToyCalib, 3.0).has_value());
  // A tiny positive disparity is accepted when no floor is requested.
  CHECK(cforb::triangulate({50.0 + 1e-6, 50.0}, {50.0, 50.0}, kToyCalib).has_value());
}

TEST_CASE("triangulate uses the left row when the rows disagree slightly") {
  auto X = cforb::triangulate({60.0, 52.0}, {50.0, 51.0}, kToyCalib);
  REQUIRE(X.has_value());
  CHECK(X->y() == Catch::Approx((52.0 - 50.0) * 5.0 / 100.0).margin(1e-15));
}

TEST_CASE("project reproduces the textbook pixels") {
  auto on_axis_left =
      cforb::project({0.0, 0.0, 5.0}, identity_motion(), kToyCalib, CameraSide::left);
  REQUIRE(on_axis_left.has_value());
  CHECK(on_axis_left->x() == 50.0);
  CHECK(on_axis_left->y() == 50.0);

  auto on_axis_right =
      cforb::project({0.0, 0.0, 5.0}, identity_motion(), kToyCalib, CameraSide::right);
  REQUIRE(on_axis_right.has_value());
  CHECK(on_axis_right->x() == 40.0);
  CHECK(on_axis_right->y() == 50.0);

  auto off_axis_left =
      cforb::project({0.5, 0.0, 5.0}, identity_motion(), kToyCalib, CameraSide::left);
  REQUIRE(off_axis_left.has_value());
  CHECK(off_axis_left->x() == 60.0);
  CHECK(off_axis_left->y() == 50.0);
}

TEST_CASE("project rejects points on or behind the image plane") {
  CHECK_FALSE(
      cforb::project({0.0, 0.0, -1.0}, identity_motion(), kToyCalib, CameraSide::left)
          .has_value());
  CHECK_FALSE(cforb::project({1.0, 2.0, 0.0}, identity_motion(), kToyCalib, CameraSide::left)
                  .has_value());

  // A translation that drags the point behind the camera must also reject.
  MotionParams back;
  back.t = Eigen::Vector3d(0.0, 0.0, -6.0);
  CHECK_FALSE(cforb::project({0.0, 0.0, 5.0}, back, kToyCalib, CameraSide::left).has_value());
}

TEST_CASE("project then triangulate is the identity on random in-front points") {
  std::mt19937_64 gen(12345);
  std::uniform_real_distribution<double> lateral(-3.0, 3.0);
  std::uniform_real_distribution<double> depth(1.0, 40.0);

  for (int i = 0; i < 1000; ++i) {
    const Eigen::Vector3d X(lateral(gen), lateral(gen), depth(gen));
    auto p_l = cforb::project(X, identity_motion(), kToyCalib, CameraSide::left);
    auto p_r = cforb::project(X, identity_motion(), kToyCalib, CameraSide::right);
    REQUIRE(p_l.has_value());
    REQUIRE(p_r.has_value());
    auto back = cforb::triangulate(*p_l, *p_r, kToyCalib);
    REQUIRE(back.has_value());
    CHECK((*back - X).norm() < 1e-9);
  }
}

TEST_CASE("triangulate then project is the identity on valid pixel pairs") {
  std::mt19937_64 gen(777);
  std::uniform_real_distribution<double> u(0.0, 100.0);
  std::uniform_real_distribution<double> v(0.0, 100.0);
  std::uniform_real_distribution<double> disp(0.5, 30.0);

  for (int i = 0; i < 1000; ++i) {
    const double ul = u(gen), vl = v(gen), d = disp(gen);
    auto X = cforb::triangulate({ul, vl}, {ul - d, vl}, kToyCalib);
    REQUIRE(X.has_value());
    auto p_l = cforb::project(*X, identity_motion(), kToyCalib, CameraSide::left);
    auto p_r = cforb::project(*X, identity_motion(), kToyCalib, CameraSide::right);
    REQUIRE(p_l.has_value());
    REQUIRE(p_r.has_value());
    CHECK((*p_l - Eigen::Vector2d(ul, vl)).norm() < 1e-9);
    CHECK((*p_r - Eigen::Vector2d(ul - d, vl)).norm() < 1e-9);
  }
}

TEST_CASE("triangulated depth strictly decreases as disparity grows") {
  double prev = std::numeric_limits<double>::infinity();
  for (double d = 0.25; d <= 40.0; d += 0.25) {
    auto X = cforb::triangulate({50.0 + d, 50.0}, {50.0, 50.0}, kToyCalib);
    REQUIRE(X.has_value());
    CHECK(X->z() < prev);
    prev = X->z();
  }
}

TEST_CASE("epipolar residual on the rectified fundamental matrix") {
  const Eigen::Matrix3d F = cforb::rectified_fundamental();

  // Same-row correspondence is exact regardless of the horizontal coordinates.
  CHECK(cforb::epipolar_residual({10.0, 7.0, 1.0}, {99.0, 7.0, 1.0}, F) == 0.0);

  // A two-row disagreement yields a residual of magnitude 2 (the sign follows
  // from the m'ᵀFm convention: the residual equals v - v').
  const double r = cforb::epipolar_residual({10.0, 7.0, 1.0}, {99.0, 9.0, 1.0}, F);
  CHECK(std::abs(r) == 2.0);
  CHECK(r == 7.0 - 9.0);
}

TEST_CASE("rectified fundamental matrix reduces to the row difference") {
  std::mt19937_64 gen(4242);
  std::uniform_real_distribution<double> coord(-200.0, 200.0);
  const Eigen::Matrix3d F = cforb::rectified_fundamental();
  for (int i = 0; i < 100; ++i) {
    const Eigen::Vector3d m(coord(gen), coord(gen), 1.0);
    const Eigen::Vector3d mp(coord(gen), coord(gen), 1.0);
    CHECK(cforb::epipolar_residual(m, mp, F) == Catch::Approx(m.y() - mp.y()).margin(1e-12));
  }
}

TEST_CASE("residual vanishes for correspondences from a general synthetic rig") {
  // Build a non-rectified rig: the second camera is rotated and displaced.
  // F = K'^{-T} [t]x R K^{-1}; true correspondences must satisfy m'ᵀFm = 0.
  const double f = 320.0, cu = 310.0, cv = 245.0;
  Eigen::Matrix3d K;
  K << f, 0.0, cu, 0.0, f, cv, 0.0, 0.0, 1.0;

  const Eigen::Matrix3d R = cforb::rotation_from_euler({0.03, -0.05, 0.02});
  const Eigen::Vector3d t(-0.3, 0.05, 0.02);

  Eigen::Matrix3d t_cross;
  t_cross << 0.0, -t.z(), t.y(), t.z(), 0.0, -t.x(), -t.y(), t.x(), 0.0;

  Eigen::Matrix3d F = K.transpose().inverse() * t_cross * R * K.inverse();
  F /= F.cwiseAbs().maxCoeff();

  std::mt19937_64 gen(99);
  std::uniform_real_distribution<double> lateral(-2.0, 2.0);
  std::uniform_real_distribution<double> depth(2.0, 25.0);

  for (int i = 0; i < 200; ++i) {
    const Eigen::Vector3d X(lateral(gen), lateral(gen), depth(gen));
    const Eigen::Vector3d x0 = K * X;
    const Eigen::Vector3d X1 = R * X + t;
    REQUIRE(X1.z() > 0.0);
    const Eigen::Vector3d x1 = K * X1;
    const Eigen::Vector3d m(x0.x() / x0.z(), x0.y() / x0.z(), 1.0);
    const Eigen::Vector3d mp(x1.x() / x1.z(), x1.y() / x1.z(), 1.0);
    CHECK(std::abs(cforb::epipolar_residual(m, mp, F)) < 1e-9);
  }
}

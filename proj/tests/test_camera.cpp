#include <doctest.h>

#include <Eigen/Geometry>
#include <cmath>
#include <numbers>

#include "animax/camera.hpp"
#include "animax/error.hpp"
#include "test_support.hpp"

using namespace animax;

namespace {

Camera random_camera(Rng& rng) {
  const Quat q = animax::testing::random_rotation(rng);
  const Vec3 t(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(2.0, 5.0));
  return Camera(q.toRotationMatrix(), t, rng.uniform(200, 800), rng.uniform(200, 800), rng.uniform(100, 300),
                rng.uniform(100, 300), 400, 400);
}

}  // namespace

TEST_CASE("projection matches the 3x4 projection matrix") {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const Camera cam = random_camera(rng);
    const Vec3 x(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    const Eigen::Vector3d h = cam.projection_matrix() * x.homogeneous();
    const auto p = project(cam, x);
    CHECK_FALSE(p.behind);
    CHECK((p.pixel - h.hnormalized()).norm() < 1e-9);
    CHECK(p.depth == doctest::Approx(h.z()));
  }
}

TEST_CASE("unproject inverts project") {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const Camera cam = random_camera(rng);
    const Vec3 x(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    const auto p = project(cam, x);
    const Vec3 back = unproject(cam, p.pixel, p.depth);
    CHECK((back - x).norm() < 1e-9);
    CHECK((project(cam, back).pixel - p.pixel).norm() < 1e-9);
  }
}

TEST_CASE("pinhole formula on an axis-aligned camera") {
  const Camera cam(Mat3::Identity(), Vec3(0, 0, 4), 500, 500, 256, 256, 512, 512);
  const auto p = project(cam, Vec3(0.2, 0, 0));
  CHECK(p.pixel.x() == doctest::Approx(256 + 500 * 0.2 / 4));
  CHECK(p.pixel.y() == doctest::Approx(256));
  CHECK(project(cam, Vec3(0, 0, -5)).behind);
  // Scale consistency along the viewing ray.
  const Vec3 c = cam.center();
  const Vec3 x(0.3, -0.1, 0.2);
  CHECK((project(cam, c + 2.5 * (x - c)).pixel - project(cam, x).pixel).norm() < 1e-9);
}

TEST_CASE("camera invariants are enforced") {
  CHECK_THROWS_AS(Camera(Mat3::Identity(), Vec3::Zero(), 0, 1, 1, 1, 4, 4), ValidationError);
  CHECK_THROWS_AS(Camera(Mat3::Identity(), Vec3::Zero(), 1, 1, 4, 1, 4, 4), ValidationError);
  CHECK_THROWS_AS(Camera(2.0 * Mat3::Identity(), Vec3::Zero(), 1, 1, 1, 1, 4, 4), ValidationError);
  CHECK_THROWS_AS(Camera(-Mat3::Identity(), Vec3::Zero(), 1, 1, 1, 1, 4, 4), ValidationError);
  CHECK_THROWS_AS(look_at(Vec3(0, 0, 3), Vec3::Zero(), Vec3::UnitZ(), 1, 1, 1, 1, 4, 4), ValidationError);
}

TEST_CASE("canonical rig geometry") {
  const double d = default_rig_distance();
  CHECK(d == doctest::Approx(1.0 / (0.8 * std::tan(20.0 * std::numbers::pi / 180.0))));
  const auto rig = canonical_rig(d, 512);
  REQUIRE(rig.size() == 4);
  const auto az = canonical_azimuths_deg();
  CHECK(az == std::vector<double>{0.0, 90.0, 180.0, 270.0});
  for (size_t v = 0; v < rig.size(); ++v) {
    const auto& cam = rig[v];
    CHECK(cam.cx() == 256.0);
    CHECK(cam.cy() == 256.0);
    CHECK(cam.fx() == doctest::Approx(256.0 / std::tan(20.0 * std::numbers::pi / 180.0)));
    const double a = az[v] * std::numbers::pi / 180.0;
    CHECK((cam.center() - d * Vec3(std::cos(a), std::sin(a), 0.0)).norm() < 1e-12);
    const auto o = project(cam, Vec3::Zero());
    CHECK((o.pixel - Vec2(256, 256)).norm() < 1e-9);
    CHECK(o.depth == doctest::Approx(d));
    // +Z (up) appears above the center.
    CHECK(project(cam, Vec3(0, 0, 0.5)).pixel.y() < 256.0);
  }
  // Mirrored side cameras see a point on +X with opposite horizontal offsets.
  const Vec3 px(0.7, 0, 0);
  const double left = project(rig[1], px).pixel.x() - 256.0;
  const double right = project(rig[3], px).pixel.x() - 256.0;
  CHECK(std::abs(left) > 1.0);
  CHECK(left == doctest::Approx(-right));

  const std::vector<double> custom{0, 90, 190, 270};
  CHECK(canonical_rig(d, 64, custom).size() == 4);
}

TEST_CASE("Plucker maps") {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const Camera cam = random_camera(rng);
    const int h = 3 + static_cast<int>(rng.below(6)), w = 3 + static_cast<int>(rng.below(6));
    const auto map = plucker_map(cam, h, w);
    REQUIRE(map.rays.rows() == h * w);
    const double sx = double(w) / cam.width(), sy = double(h) / cam.height();
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const Vec3 d = map.rays.row(y * w + x).head<3>().transpose();
        const Vec3 m = map.rays.row(y * w + x).tail<3>().transpose();
        CHECK(std::abs(d.norm() - 1.0) < 1e-9);
        CHECK(std::abs(d.dot(m)) < 1e-9);
        CHECK((m - cam.center().cross(d)).norm() < 1e-9);
        // The latent cell (x, y) covers full-resolution pixel ((x + 0.5)/s - 0.5, ...).
        const Vec2 pix((x + 0.5) / sx - 0.5, (y + 0.5) / sy - 0.5);
        const Vec3 expect = (unproject(cam, pix, 1.0) - cam.center()).normalized();
        CHECK((d - expect).norm() < 1e-9);
      }
  }
}

TEST_CASE("Plucker map special cases") {
  const auto rig = canonical_rig(default_rig_distance(), 64);
  // Odd latent grid: the center cell sits on the principal ray through the origin.
  const auto map = plucker_map(rig[0], 64, 64);
  const Eigen::RowVectorXd center = map.rays.row(32 * 64 + 32);
  const Vec3 d = center.head<3>().transpose();
  CHECK((d - (Vec3::Zero() - rig[0].center()).normalized()).norm() < 1e-9);
  CHECK(center.tail<3>().norm() < 1e-9);

  // Rotating the rig 90 degrees about +Z rotates every (d, m).
  const Mat3 rz = Eigen::AngleAxisd(std::numbers::pi / 2, Vec3::UnitZ()).toRotationMatrix();
  const auto a = plucker_map(rig[0], 5, 7);
  const auto b = plucker_map(rig[1], 5, 7);
  for (Eigen::Index r = 0; r < a.rays.rows(); ++r) {
    CHECK((rz * a.rays.row(r).head<3>().transpose() - b.rays.row(r).head<3>().transpose()).norm() < 1e-9);
    CHECK((rz * a.rays.row(r).tail<3>().transpose() - b.rays.row(r).tail<3>().transpose()).norm() < 1e-9);
  }
  CHECK_THROWS_AS(plucker_map(rig[0], 0, 4), ValidationError);
}

TEST_CASE("camera JSON round trip") {
  const auto rig = canonical_rig(3.0, 128);
  const auto back = cameras_from_json_text(cameras_to_json_text(rig));
  REQUIRE(back.size() == rig.size());
  for (size_t i = 0; i < rig.size(); ++i) {
    CHECK(back[i].rotation() == rig[i].rotation());
    CHECK(back[i].translation() == rig[i].translation());
    CHECK(back[i].fx() == rig[i].fx());
    CHECK(back[i].width() == rig[i].width());
  }
  CHECK_THROWS_AS(cameras_from_json_text("{\"cameras\":[{\"fx\":1}]}"), ValidationError);
}

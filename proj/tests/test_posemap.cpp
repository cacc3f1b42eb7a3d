#include <doctest.h>

#include "animax/error.hpp"
#include "animax/posemap.hpp"
#include "test_support.hpp"

using namespace animax;

namespace {

const Camera kCam(Mat3::Identity(), Vec3(0, 0, 4), 600, 600, 256, 256, 512, 512);

// World point that projects onto `pixel` at camera depth `depth`.
Vec3 at_pixel(const Vec2& pixel, double depth) { return unproject(kCam, pixel, depth); }

JointPositions3D positions_of(std::initializer_list<Vec3> pts) {
  JointPositions3D out(static_cast<int>(pts.size()));
  int j = 0;
  for (const auto& p : pts) out.positions.col(j++) = p;
  return out;
}

Skeleton chain(int n) {
  std::vector<JointDef> joints;
  for (int j = 0; j < n; ++j)
    joints.push_back({"j" + std::to_string(j), j == 0 ? std::nullopt : std::optional<int>(j - 1), Vec3(0, 0.1 * (j > 0), 0)});
  return Skeleton(std::move(joints));
}

double min_pairwise(const ColorPalette& p) {
  double best = 1e9;
  for (int a = 0; a < p.size(); ++a)
    for (int b = a + 1; b < p.size(); ++b) best = std::min(best, rgb_distance(p.joints[size_t(a)], p.joints[size_t(b)]));
  return best;
}

}  // namespace

TEST_CASE("palettes are separated and deterministic") {
  for (int n : {1, 2, 5, 20, 64}) {
    const auto p = make_palette(n, 7);
    REQUIRE(p.size() == n);
    CHECK_NOTHROW(p.validate());
    if (n > 1) CHECK(min_pairwise(p) >= kMinColorSeparation);
    for (const auto& c : p.joints) {
      CHECK(rgb_distance(c, p.line) >= kMinColorSeparation);
      CHECK(rgb_distance(c, p.background) >= kMinColorSeparation);
    }
    CHECK(make_palette(n, 7).joints == p.joints);
  }
  CHECK(make_palette(4, 1).joints != make_palette(4, 2).joints);
  CHECK_THROWS_AS(make_palette(0, 0), ValidationError);
  CHECK_THROWS_AS(make_palette(256, 0), ValidationError);
  const auto back = palette_from_json_text(palette_to_json_text(make_palette(9, 3)));
  CHECK(back.joints == make_palette(9, 3).joints);
}

TEST_CASE("single joint renders a disc at the principal point") {
  const Skeleton s = chain(1);
  const auto pal = make_palette(1, 0);
  const auto map = render_posemap(s, positions_of({Vec3::Zero()}), kCam, pal);
  CHECK(map.image.at(256, 256) == pal.joints[0]);
  const int r = default_marker_radius(512);
  CHECK(r == 6);
  CHECK(map.image.at(256 + r + 2, 256) == pal.background);
  const auto dec = decode_posemap(map, pal);
  REQUIRE(dec.valid[0]);
  CHECK((dec.positions.col(0) - Vec2(256, 256)).norm() < 0.5);
}

TEST_CASE("marker at a fractional pixel decodes within half a pixel") {
  const Skeleton s = chain(1);
  const auto pal = make_palette(1, 3);
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const Vec2 target(rng.uniform(20, 490), rng.uniform(20, 490));
    const auto map = render_posemap(s, positions_of({at_pixel(target, 4.0)}), kCam, pal);
    const auto dec = decode_posemap(map, pal);
    REQUIRE(dec.valid[0]);
    CHECK((dec.positions.col(0) - target).norm() < 0.5);
  }
  const auto map = render_posemap(s, positions_of({at_pixel(Vec2(100.0, 50.0), 4.0)}), kCam, pal);
  CHECK((decode_posemap(map, pal).positions.col(0) - Vec2(100.0, 50.0)).norm() < 0.5);
}

TEST_CASE("line pixels lie on the projected segment") {
  const Skeleton s = chain(2);
  const auto pal = make_palette(2, 0);
  const Vec2 a(80.3, 100.7), b(400.2, 300.9);
  const auto map = render_posemap(s, positions_of({at_pixel(a, 4.0), at_pixel(b, 3.5)}), kCam, pal);
  int line_pixels = 0;
  for (int y = 0; y < 512; ++y)
    for (int x = 0; x < 512; ++x) {
      if (map.image.at(x, y) != pal.line) continue;
      ++line_pixels;
      const Vec2 q(x, y);
      const Vec2 ab = b - a;
      const double s01 = std::clamp((q - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
      CHECK((a + s01 * ab - q).norm() <= 1.0);
    }
  CHECK(line_pixels > 300);
}

TEST_CASE("occlusion: nearer marker wins, farther joint is lost") {
  const Skeleton s = chain(2);
  const auto pal = make_palette(2, 0);
  const Vec2 pix(200.0, 220.0);
  // Joint 1 sits in front of joint 0 on the same ray.
  const auto map = render_posemap(s, positions_of({at_pixel(pix, 4.5), at_pixel(pix, 3.0)}), kCam, pal);
  CHECK(map.image.at(200, 220) == pal.joints[1]);
  const auto dec = decode_posemap(map, pal);
  CHECK_FALSE(dec.valid[0]);
  REQUIRE(dec.valid[1]);
  CHECK((dec.positions.col(1) - pix).norm() < 0.5);
  // Reversed depth order flips the winner.
  const auto flipped = decode_posemap(render_posemap(s, positions_of({at_pixel(pix, 3.0), at_pixel(pix, 4.5)}), kCam, pal), pal);
  CHECK(flipped.valid[0]);
  CHECK_FALSE(flipped.valid[1]);
}

TEST_CASE("blank images and out-of-view joints decode as invalid") {
  const auto pal = make_palette(5, 0);
  const auto dec = decode_posemap(Image(64, 64), pal);
  for (bool v : dec.valid) CHECK_FALSE(v);
  const Skeleton s = chain(2);
  const auto map = render_posemap(s, positions_of({Vec3(0, 0, -10), Vec3::Zero()}), kCam, make_palette(2, 0));
  const auto d2 = decode_posemap(map, make_palette(2, 0));
  CHECK_FALSE(d2.valid[0]);
  CHECK(d2.valid[1]);
}

TEST_CASE("round trip recovers well-separated random poses") {
  Rng rng(31);
  const auto rig = canonical_rig(default_rig_distance(), 512);
  int checked = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 2 + static_cast<int>(rng.below(12));
    const Skeleton s = animax::testing::random_skeleton(n, rng, false);
    auto fk = forward_kinematics(s, animax::testing::random_pose(n, rng));
    // Shrink into the unit sphere around the origin.
    const Vec3 c = fk.positions.rowwise().mean();
    const double rmax = (fk.positions.colwise() - c).colwise().norm().maxCoeff();
    fk.positions = ((fk.positions.colwise() - c) * (0.9 / std::max(rmax, 1e-9))).eval();
    const auto pal = make_palette(n, static_cast<std::uint64_t>(trial));
    for (const auto& cam : rig) {
      std::vector<Vec2> proj;
      for (int j = 0; j < n; ++j) proj.push_back(project(cam, fk.positions.col(j)).pixel);
      bool separated = true;
      for (int a = 0; a < n && separated; ++a)
        for (int b = a + 1; b < n; ++b)
          if ((proj[size_t(a)] - proj[size_t(b)]).norm() < 2.0 * default_marker_radius(512) + 1.0) separated = false;
      if (!separated) continue;
      const auto dec = decode_posemap(render_posemap(s, fk, cam, pal), pal);
      for (int j = 0; j < n; ++j) {
        REQUIRE(dec.valid[size_t(j)]);
        CHECK((dec.positions.col(j) - proj[size_t(j)]).norm() < 0.5);
        CHECK(dec.positions(0, j) >= 0.0);
        CHECK(dec.positions(0, j) < 512.0);
      }
      ++checked;
    }
  }
  CHECK(checked > 20);
}

TEST_CASE("PNG encoding is lossless") {
  const auto map = render_posemap(chain(2), positions_of({Vec3(0.1, 0, 0), Vec3(-0.2, 0.1, 0)}), kCam, make_palette(2, 0));
  const Image back = decode_png(encode_png(map.image));
  CHECK(back.width == 512);
  CHECK(back.data == map.image.data);
}

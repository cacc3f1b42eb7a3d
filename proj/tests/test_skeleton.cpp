#include <doctest.h>

#include "animax/error.hpp"
#include "animax/skeleton.hpp"
#include "test_support.hpp"

using namespace animax;
using animax::testing::random_pose;
using animax::testing::random_skeleton;

namespace {

// Independent FK: chain 4x4 homogeneous transforms built from rotation matrices.
Eigen::Matrix3Xd fk_homogeneous(const Skeleton& s, const Pose& pose) {
  std::vector<Eigen::Matrix4d> world(static_cast<size_t>(s.size()));
  Eigen::Matrix3Xd out(3, s.size());
  for (int j = 0; j < s.size(); ++j) {
    Eigen::Matrix4d local = Eigen::Matrix4d::Identity();
    local.topLeftCorner<3, 3>() = pose.rotations[static_cast<size_t>(j)].toRotationMatrix();
    const int p = s.parent(j);
    if (p < 0) {
      local.topRightCorner<3, 1>() = s.joint(j).rest_offset + pose.root_translation;
      world[static_cast<size_t>(j)] = local;
    } else {
      local.topRightCorner<3, 1>() = s.joint(j).rest_offset;
      world[static_cast<size_t>(j)] = world[static_cast<size_t>(p)] * local;
    }
    out.col(j) = world[static_cast<size_t>(j)].topRightCorner<3, 1>();
  }
  return out;
}

}  // namespace

TEST_CASE("forward kinematics agrees with a homogeneous-matrix chain") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + static_cast<int>(rng.below(18));
    const Skeleton s = random_skeleton(n, rng, trial % 2 == 0);
    const Pose pose = random_pose(n, rng);
    const auto fk = forward_kinematics(s, pose);
    CHECK((fk.positions - fk_homogeneous(s, pose)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(fk.all_valid());
  }
}

TEST_CASE("identity pose reproduces accumulated rest offsets") {
  const Skeleton s({{"root", std::nullopt, Vec3(0.1, 0, 0)}, {"a", 0, Vec3(0, 0, 1)}, {"b", 1, Vec3(0, 0.5, 0)}});
  const auto fk = forward_kinematics(s, Pose::identity(3));
  CHECK(fk.positions.col(2).isApprox(Vec3(0.1, 0.5, 1.0)));
  CHECK(rest_bbox_diagonal(s) == doctest::Approx(std::sqrt(0.5 * 0.5 + 1.0)));
}

TEST_CASE("bone lengths are invariant under any pose") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const Skeleton s = random_skeleton(8, rng, false);
    const auto fk = forward_kinematics(s, random_pose(8, rng));
    const auto rest = bone_lengths(s);
    size_t b = 0;
    for (int j = 0; j < s.size(); ++j) {
      if (s.parent(j) < 0) continue;
      CHECK((fk.positions.col(j) - fk.positions.col(s.parent(j))).norm() == doctest::Approx(rest[b++]).epsilon(1e-12));
    }
  }
}

TEST_CASE("rotating the root rotates the whole rest pose") {
  Rng rng(3);
  const Skeleton s = random_skeleton(6, rng, false);
  Pose pose = Pose::identity(6);
  const Quat r(Eigen::AngleAxisd(0.7, Vec3(1, 2, 3).normalized()));
  pose.rotations[0] = r;
  const auto rest = forward_kinematics(s, Pose::identity(6));
  const auto moved = forward_kinematics(s, pose);
  const Vec3 root = rest.positions.col(0);
  for (int j = 0; j < 6; ++j) CHECK((moved.positions.col(j) - (root + r * (rest.positions.col(j) - root))).norm() < 1e-12);
}

TEST_CASE("skeleton validation rejects malformed hierarchies") {
  using J = JointDef;
  CHECK_THROWS_AS(Skeleton(std::vector<JointDef>{}), ValidationError);
  CHECK_THROWS_AS(Skeleton({J{"a", std::nullopt, Vec3::Zero()}, J{"b", std::nullopt, Vec3::UnitX()}}), ValidationError);
  CHECK_THROWS_AS(Skeleton({J{"a", 1, Vec3::UnitX()}, J{"b", std::nullopt, Vec3::Zero()}}), ValidationError);
  CHECK_THROWS_AS(Skeleton({J{"a", std::nullopt, Vec3::Zero()}, J{"a", 0, Vec3::UnitX()}}), ValidationError);
  CHECK_THROWS_AS(Skeleton({J{"a", std::nullopt, Vec3::Zero()}, J{"b", 0, Vec3::Zero()}}), ValidationError);
  CHECK_THROWS_AS(Skeleton({J{"a", std::nullopt, Vec3(NAN, 0, 0)}}), ValidationError);
  CHECK_NOTHROW(Skeleton({J{"a", std::nullopt, Vec3::Zero()}}));
}

TEST_CASE("clip validation") {
  AnimationClip clip;
  clip.frames.push_back(Pose::identity(3));
  CHECK_NOTHROW(clip.validate(3));
  CHECK_THROWS_AS(clip.validate(4), ValidationError);
  clip.frames[0].rotations[1] = Quat(1.0, 0.0, 0.01, 0.0);
  CHECK_THROWS_AS(clip.validate(3), ValidationError);
  clip.frames[0].rotations[1] = Quat::Identity();
  clip.fps = 0.0;
  CHECK_THROWS_AS(clip.validate(3), ValidationError);
}

TEST_CASE("JSON round trip preserves skeletons and clips") {
  Rng rng(21);
  const Skeleton s = random_skeleton(7, rng, false);
  const Skeleton back = skeleton_from_json_text(skeleton_to_json_text(s));
  REQUIRE(back.size() == s.size());
  for (int j = 0; j < s.size(); ++j) {
    CHECK(back.joint(j).name == s.joint(j).name);
    CHECK(back.parent(j) == s.parent(j));
    CHECK(back.joint(j).rest_offset == s.joint(j).rest_offset);
  }
  AnimationClip clip;
  clip.fps = 24.0;
  for (int f = 0; f < 5; ++f) clip.frames.push_back(random_pose(7, rng));
  const AnimationClip cb = clip_from_json_text(clip_to_json_text(clip));
  REQUIRE(cb.frame_count() == 5);
  CHECK(cb.fps == 24.0);
  for (int f = 0; f < 5; ++f) {
    CHECK(cb.frames[static_cast<size_t>(f)].root_translation == clip.frames[static_cast<size_t>(f)].root_translation);
    for (int j = 0; j < 7; ++j)
      CHECK(cb.frames[static_cast<size_t>(f)].rotations[static_cast<size_t>(j)].coeffs() ==
            clip.frames[static_cast<size_t>(f)].rotations[static_cast<size_t>(j)].coeffs());
  }
  CHECK_THROWS_AS(skeleton_from_json_text("{\"joints\": 3}"), ValidationError);
  CHECK_THROWS_AS(clip_from_json_text("{not json"), ValidationError);
  CHECK_THROWS_AS(load_skeleton("/nonexistent/skeleton.json"), IoError);
}

#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace animax {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;

// A joint is the head of a bone. rest_offset is the head position relative to
// the parent's head in the rest pose; for the root it is the rest world position.
struct JointDef {
  std::string name;
  std::optional<int> parent;
  Vec3 rest_offset = Vec3::Zero();
};

// Joint hierarchy in topological order (parent index < child index).
class Skeleton {
 public:
  Skeleton() = default;
  // Throws ValidationError naming the violated invariant.
  explicit Skeleton(std::vector<JointDef> joints);

  int size() const { return static_cast<int>(joints_.size()); }
  int root_index() const { return root_; }
  const std::vector<JointDef>& joints() const { return joints_; }
  const JointDef& joint(int j) const { return joints_[static_cast<size_t>(j)]; }
  int parent(int j) const { return joint(j).parent.value_or(-1); }
  const std::vector<int>& children(int j) const { return children_[static_cast<size_t>(j)]; }

 private:
  std::vector<JointDef> joints_;
  std::vector<std::vector<int>> children_;
  int root_ = 0;
};

// Local rotations (parent frame) per joint plus root translation.
struct Pose {
  std::vector<Quat> rotations;
  Vec3 root_translation = Vec3::Zero();

  static Pose identity(int joint_count);
  int size() const { return static_cast<int>(rotations.size()); }
};

struct AnimationClip {
  double fps = 30.0;
  std::vector<Pose> frames;

  int frame_count() const { return static_cast<int>(frames.size()); }
  // Throws ValidationError if fps <= 0, joint counts differ or a rotation is not unit.
  void validate(int joint_count) const;
};

// World-space joint head positions, one column per joint.
struct JointPositions3D {
  Eigen::Matrix3Xd positions;
  std::vector<bool> valid;

  JointPositions3D() = default;
  explicit JointPositions3D(int joint_count)
      : positions(Eigen::Matrix3Xd::Zero(3, joint_count)), valid(static_cast<size_t>(joint_count), true) {}

  int size() const { return static_cast<int>(positions.cols()); }
  bool all_valid() const;
  int valid_count() const;
};

inline constexpr double kUnitQuatTolerance = 1e-9;

// World joint positions for a pose. The root sits at rest_offset + root_translation
// and each child at parent + GlobalRot(parent) * rest_offset, where
// GlobalRot(j) = GlobalRot(parent) * LocalRot(j).
JointPositions3D forward_kinematics(const Skeleton& skeleton, const Pose& pose);

// Global joint rotations for a pose, same accumulation as forward_kinematics.
std::vector<Quat> global_rotations(const Skeleton& skeleton, const Pose& pose);

// Rest length per bone, ordered as the non-root joints.
std::vector<double> bone_lengths(const Skeleton& skeleton);

// Axis-aligned bounding-box diagonal of the rest pose.
double rest_bbox_diagonal(const Skeleton& skeleton);
double bbox_diagonal(const Eigen::Matrix3Xd& points);

Skeleton skeleton_from_json_text(const std::string& text);
std::string skeleton_to_json_text(const Skeleton& skeleton);
AnimationClip clip_from_json_text(const std::string& text);
std::string clip_to_json_text(const AnimationClip& clip);

Skeleton load_skeleton(const std::filesystem::path& path);
void save_skeleton(const std::filesystem::path& path, const Skeleton& skeleton);
AnimationClip load_clip(const std::filesystem::path& path);
void save_clip(const std::filesystem::path& path, const AnimationClip& clip);

}  // namespace animax

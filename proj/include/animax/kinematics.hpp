#pragma once

#include <span>
#include <string>
#include <vector>

#include "animax/skeleton.hpp"

namespace animax {

// Shortest-arc rotation taking `from` onto `to`. Antiparallel inputs rotate by pi
// about an axis perpendicular to `from` built from the least-aligned basis vector.
// Throws ValidationError on zero-length or non-unit input.
template <typename Scalar>
Eigen::Quaternion<Scalar> rotation_between(const Eigen::Matrix<Scalar, 3, 1>& from, const Eigen::Matrix<Scalar, 3, 1>& to);

struct IkFrameResult {
  Pose pose;
  std::vector<double> residuals;  // |FK(pose)_j - target_j| per joint, 0 for invalid targets
  bool used_fallback = false;     // set by solve_clip when the frame inherited a previous pose
};

// Root-to-leaf traversal: one child aims by shortest arc, several children by
// determinant-corrected orthogonal alignment, leaves keep identity.
IkFrameResult solve_frame(const Skeleton& skeleton, const JointPositions3D& templ, const JointPositions3D& target);

struct IkClipResult {
  AnimationClip clip;
  std::vector<IkFrameResult> frames;
};

// Frames with no valid target joint inherit the previous pose (rest for the first).
IkClipResult solve_clip(const Skeleton& skeleton, const JointPositions3D& templ, std::span<const JointPositions3D> targets,
                        double fps);

std::string ik_report_json(const IkClipResult& result);

}  // namespace animax

#pragma once

#include <span>
#include <string>
#include <vector>

#include "animax/camera.hpp"
#include "animax/posemap.hpp"
#include "animax/skeleton.hpp"

namespace animax {

// Multi-view observations of one frame. A joint's observation in a view carries
// weight 1 when flagged valid and 0 otherwise.
struct TriangulationProblem {
  std::vector<Joints2D> observations;  // one per view
  std::vector<Camera> cameras;         // one per view
  Skeleton skeleton;
  double lambda_bone = 100.0;
  // Pixels per model unit used to bring bone residuals into pixel scale. When
  // not positive, mean image height / scene_scale is used.
  double bone_scale = 0.0;
  double scene_scale = 1.0;

  int view_count() const { return static_cast<int>(cameras.size()); }
  double effective_bone_scale() const;
  // Throws ValidationError on shape mismatch or fewer than two views.
  void validate() const;
};

struct LmOptions {
  int max_iterations = 200;
  double relative_cost_tolerance = 1e-10;
  double gradient_tolerance = 1e-10;
  double initial_damping = 1e-3;  // times max diagonal of J^T J
};

struct TriangulationResult {
  JointPositions3D positions;
  double reprojection_rms_px = 0.0;
  double bone_rms = 0.0;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Homogeneous linear triangulation over every view where `joint` is valid.
// Throws ValidationError when fewer than two views observe the joint.
Vec3 dlt_triangulate(std::span<const Joints2D> observations, std::span<const Camera> cameras, int joint);

// E = sum_v sum_j w * |project(C_v, P_j) - p_vj|^2 + lambda * sum_b (s * (|P_parent - P_child| - L_b))^2
// with s = effective_bone_scale().
double triangulation_cost(const TriangulationProblem& problem, const Eigen::Matrix3Xd& positions);

// Levenberg-Marquardt from `init`; the returned cost never exceeds the cost of `init`.
// Throws NumericalError when the initial cost is not finite.
TriangulationResult refine(const TriangulationProblem& problem, const JointPositions3D& init, const LmOptions& options = {});

// DLT initialization with kinematic fallback for under-observed joints, then refine.
// Throws ValidationError when no joint is observed in any view.
TriangulationResult triangulate_frame(const TriangulationProblem& problem, const LmOptions& options = {});

std::string frame_report_json(int frame, const TriangulationResult& result);

}  // namespace animax

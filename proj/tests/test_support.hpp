#pragma once

#include <Eigen/Geometry>
#include <filesystem>
#include <string>

#include "animax/random.hpp"
#include "animax/skeleton.hpp"

namespace animax::testing {

inline Quat random_rotation(Rng& rng, double max_angle = 3.14159) {
  Vec3 axis(rng.normal(), rng.normal(), rng.normal());
  axis.normalize();
  return Quat(Eigen::AngleAxisd(rng.uniform(-max_angle, max_angle), axis));
}

inline Pose random_pose(int n, Rng& rng, double max_angle = 3.14159) {
  Pose p = Pose::identity(n);
  for (auto& q : p.rotations) q = random_rotation(rng, max_angle);
  p.root_translation = Vec3(rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3));
  return p;
}

// Random tree in topological order; `chain` forces single-child links.
inline Skeleton random_skeleton(int n, Rng& rng, bool chain) {
  std::vector<JointDef> joints(static_cast<size_t>(n));
  joints[0].name = "j0";
  joints[0].rest_offset = Vec3(rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2));
  for (int j = 1; j < n; ++j) {
    auto& d = joints[static_cast<size_t>(j)];
    d.name = "j" + std::to_string(j);
    d.parent = chain ? j - 1 : static_cast<int>(rng.below(static_cast<std::uint64_t>(j)));
    Vec3 dir(rng.normal(), rng.normal(), rng.normal());
    d.rest_offset = rng.uniform(0.1, 0.4) * dir.normalized();
  }
  return Skeleton(std::move(joints));
}

// Fourth-order central difference of f() with respect to the scalar `w`.
template <typename F>
double central_difference(double& w, double h, F&& f) {
  const double old = w;
  auto at = [&](double x) {
    w = old + x;
    return f();
  };
  const double d = (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12 * h);
  w = old;
  return d;
}

// Fresh scratch directory under the build tree.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("animax_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace animax::testing

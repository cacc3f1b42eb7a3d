#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "animax/skeleton.hpp"

namespace animax {

// Pinhole camera, OpenCV axes (x right, y down, z forward). Pixel (x, y) has its
// center at continuous coordinate (x, y).
class Camera {
 public:
  Camera() = default;
  // Throws ValidationError when an invariant does not hold.
  Camera(const Mat3& rotation, const Vec3& translation, double fx, double fy, double cx, double cy, int width,
         int height);

  const Mat3& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }
  double fx() const { return fx_; }
  double fy() const { return fy_; }
  double cx() const { return cx_; }
  double cy() const { return cy_; }
  int width() const { return width_; }
  int height() const { return height_; }

  Vec3 center() const { return -rotation_.transpose() * translation_; }
  Mat3 intrinsic_matrix() const;
  Eigen::Matrix<double, 3, 4> projection_matrix() const;

  Vec3 to_camera(const Vec3& world) const { return rotation_ * world + translation_; }

 private:
  Mat3 rotation_ = Mat3::Identity();
  Vec3 translation_ = Vec3::Zero();
  double fx_ = 1.0, fy_ = 1.0, cx_ = 0.0, cy_ = 0.0;
  int width_ = 1, height_ = 1;
};

struct Projection {
  Vec2 pixel = Vec2::Zero();
  double depth = 0.0;
  bool behind = false;  // depth <= 0
};

Projection project(const Camera& camera, const Vec3& point);

// Pinhole projection of a camera-frame point; usable with any scalar type.
template <typename Scalar>
Eigen::Matrix<Scalar, 2, 1> project_camera_point(const Camera& camera, const Eigen::Matrix<Scalar, 3, 1>& pc) {
  return {Scalar(camera.fx()) * pc.x() / pc.z() + Scalar(camera.cx()),
          Scalar(camera.fy()) * pc.y() / pc.z() + Scalar(camera.cy())};
}

// World point at camera-frame depth `depth` along the ray through `pixel`.
Vec3 unproject(const Camera& camera, const Vec2& pixel, double depth);

// Camera at `eye` looking at `target`; `up` fixes the roll (image y points away from it).
Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fx, double fy, double cx, double cy,
               int width, int height);

// Per-latent-pixel Plücker coordinates (d, m), m = o x d, row index y * width + x.
struct PluckerMap {
  int height = 0;
  int width = 0;
  Eigen::Matrix<double, Eigen::Dynamic, 6, Eigen::RowMajor> rays;
};

// Intrinsics are rescaled to the (h_lat, w_lat) grid before unprojecting each cell center.
PluckerMap plucker_map(const Camera& camera, int h_lat, int w_lat);

inline constexpr double kDefaultVerticalFovDeg = 40.0;

// Distance at which a unit bounding sphere fills `fill` of the vertical frame.
double default_rig_distance(double vertical_fov_deg = kDefaultVerticalFovDeg, double fill = 0.8);

std::vector<double> canonical_azimuths_deg();

// Look-at cameras around the origin, +Z up, azimuth measured from +X toward +Y.
std::vector<Camera> canonical_rig(double distance, int resolution);
std::vector<Camera> canonical_rig(double distance, int resolution, std::span<const double> azimuths_deg,
                                  double elevation_deg = 0.0, double vertical_fov_deg = kDefaultVerticalFovDeg);

std::string cameras_to_json_text(std::span<const Camera> cameras);
std::vector<Camera> cameras_from_json_text(const std::string& text);
void save_cameras(const std::filesystem::path& path, std::span<const Camera> cameras);
std::vector<Camera> load_cameras(const std::filesystem::path& path);

}  // namespace animax

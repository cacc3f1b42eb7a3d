#include "animax/camera.hpp"

#include <cmath>
#include <json.hpp>
#include <numbers>

#include "animax/error.hpp"
#include "animax/io_util.hpp"

namespace animax {

using nlohmann::json;

namespace {
constexpr double deg2rad(double d) { return d * std::numbers::pi / 180.0; }
}  // namespace

Camera::Camera(const Mat3& rotation, const Vec3& translation, double fx, double fy, double cx, double cy, int width,
               int height)
    : rotation_(rotation), translation_(translation), fx_(fx), fy_(fy), cx_(cx), cy_(cy), width_(width),
      height_(height) {
  if (width <= 0 || height <= 0) throw ValidationError("camera: image size must be positive");
  if (!(fx > 0.0) || !(fy > 0.0)) throw ValidationError("camera: focal lengths must be positive");
  if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height))
    throw ValidationError("camera: principal point outside image");
  if (!rotation.allFinite() || !translation.allFinite()) throw ValidationError("camera: non-finite extrinsics");
  const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (ortho > 1e-9 || rotation.determinant() < 0.0) throw ValidationError("camera: rotation is not orthonormal");
}

Mat3 Camera::intrinsic_matrix() const {
  Mat3 k;
  k << fx_, 0.0, cx_, 0.0, fy_, cy_, 0.0, 0.0, 1.0;
  return k;
}

Eigen::Matrix<double, 3, 4> Camera::projection_matrix() const {
  Eigen::Matrix<double, 3, 4> rt;
  rt << rotation_, translation_;
  return intrinsic_matrix() * rt;
}

Projection project(const Camera& camera, const Vec3& point) {
  const Vec3 pc = camera.to_camera(point);
  Projection p;
  p.depth = pc.z();
  p.behind = pc.z() <= 0.0;
  if (pc.z() != 0.0) p.pixel = project_camera_point<double>(camera, pc);
  return p;
}

Vec3 unproject(const Camera& camera, const Vec2& pixel, double depth) {
  const Vec3 pc((pixel.x() - camera.cx()) / camera.fx() * depth, (pixel.y() - camera.cy()) / camera.fy() * depth, depth);
  return camera.rotation().transpose() * (pc - camera.translation());
}

Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fx, double fy, double cx, double cy,
               int width, int height) {
  const Vec3 forward = (target - eye).normalized();
  Vec3 right = forward.cross(up);
  if (right.norm() < 1e-12) throw ValidationError("look_at: view direction parallel to up vector");
  right.normalize();
  const Vec3 down = forward.cross(right);
  Mat3 r;
  r.row(0) = right.transpose();
  r.row(1) = down.transpose();
  r.row(2) = forward.transpose();
  return Camera(r, -r * eye, fx, fy, cx, cy, width, height);
}

PluckerMap plucker_map(const Camera& camera, int h_lat, int w_lat) {
  if (h_lat < 1 || w_lat < 1) throw ValidationError("plucker_map: latent size must be >= 1");
  const double sx = static_cast<double>(w_lat) / camera.width();
  const double sy = static_cast<double>(h_lat) / camera.height();
  const double fx = camera.fx() * sx, fy = camera.fy() * sy;
  const double cx = (camera.cx() + 0.5) * sx - 0.5, cy = (camera.cy() + 0.5) * sy - 0.5;
  const Mat3 rt = camera.rotation().transpose();
  const Vec3 origin = camera.center();

  PluckerMap map;
  map.height = h_lat;
  map.width = w_lat;
  map.rays.resize(static_cast<Eigen::Index>(h_lat) * w_lat, 6);
  for (int y = 0; y < h_lat; ++y) {
    for (int x = 0; x < w_lat; ++x) {
      const Vec3 d = (rt * Vec3((x - cx) / fx, (y - cy) / fy, 1.0)).normalized();
      const Vec3 m = origin.cross(d);
      map.rays.row(static_cast<Eigen::Index>(y) * w_lat + x) << d.transpose(), m.transpose();
    }
  }
  return map;
}

double default_rig_distance(double vertical_fov_deg, double fill) {
  return 1.0 / (fill * std::tan(deg2rad(vertical_fov_deg) / 2.0));
}

std::vector<double> canonical_azimuths_deg() { return {0.0, 90.0, 180.0, 270.0}; }

std::vector<Camera> canonical_rig(double distance, int resolution) {
  const auto az = canonical_azimuths_deg();
  return canonical_rig(distance, resolution, az);
}

std::vector<Camera> canonical_rig(double distance, int resolution, std::span<const double> azimuths_deg,
                                  double elevation_deg, double vertical_fov_deg) {
  if (!(distance > 0.0)) throw ValidationError("canonical_rig: distance must be positive");
  if (resolution < 1) throw ValidationError("canonical_rig: resolution must be >= 1");
  const double f = (resolution / 2.0) / std::tan(deg2rad(vertical_fov_deg) / 2.0);
  const double c = resolution / 2.0;
  const double el = deg2rad(elevation_deg);
  std::vector<Camera> rig;
  for (double az_deg : azimuths_deg) {
    const double az = deg2rad(az_deg);
    const Vec3 eye = distance * Vec3(std::cos(az) * std::cos(el), std::sin(az) * std::cos(el), std::sin(el));
    rig.push_back(look_at(eye, Vec3::Zero(), Vec3::UnitZ(), f, f, c, c, resolution, resolution));
  }
  return rig;
}

std::string cameras_to_json_text(std::span<const Camera> cameras) {
  json arr = json::array();
  for (const auto& cam : cameras) {
    json rot = json::array();
    for (int r = 0; r < 3; ++r)
      rot.push_back(json::array({cam.rotation()(r, 0), cam.rotation()(r, 1), cam.rotation()(r, 2)}));
    arr.push_back(json{{"rotation", rot},
                       {"translation", json::array({cam.translation().x(), cam.translation().y(), cam.translation().z()})},
                       {"fx", cam.fx()},
                       {"fy", cam.fy()},
                       {"cx", cam.cx()},
                       {"cy", cam.cy()},
                       {"width", cam.width()},
                       {"height", cam.height()}});
  }
  return json{{"cameras", arr}}.dump(2) + "\n";
}

std::vector<Camera> cameras_from_json_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("cameras: malformed JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("cameras") || !doc["cameras"].is_array())
    throw ValidationError("cameras: missing 'cameras' array");
  std::vector<Camera> cams;
  try {
    for (const auto& cj : doc["cameras"]) {
      Mat3 r;
      for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 3; ++k) r(i, k) = cj.at("rotation").at(static_cast<size_t>(i)).at(static_cast<size_t>(k)).get<double>();
      const auto& tj = cj.at("translation");
      const Vec3 t(tj.at(0).get<double>(), tj.at(1).get<double>(), tj.at(2).get<double>());
      cams.emplace_back(r, t, cj.at("fx").get<double>(), cj.at("fy").get<double>(), cj.at("cx").get<double>(),
                        cj.at("cy").get<double>(), cj.at("width").get<int>(), cj.at("height").get<int>());
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("cameras: ") + e.what());
  }
  return cams;
}

void save_cameras(const std::filesystem::path& path, std::span<const Camera> cameras) {
  write_file_atomic(path, cameras_to_json_text(cameras));
}

std::vector<Camera> load_cameras(const std::filesystem::path& path) {
  return cameras_from_json_text(read_text_file(path));
}

}  // namespace animax

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "animax/camera.hpp"
#include "animax/image.hpp"
#include "animax/skeleton.hpp"

namespace animax {

inline constexpr double kMinColorSeparation = 48.0;

struct ColorPalette {
  std::vector<Rgb> joints;
  Rgb line{128, 128, 128};
  Rgb background{0, 0, 0};

  int size() const { return static_cast<int>(joints.size()); }
  // Throws ValidationError when two colors are closer than kMinColorSeparation.
  void validate() const;
};

// Farthest-point selection over an RGB lattice; the seed picks the starting color.
// Throws ValidationError (capacity) when joint_count colors cannot be separated.
ColorPalette make_palette(int joint_count, std::uint64_t seed);

struct PoseMap {
  Image image;
  int view = 0;
  int frame = 0;
};

// 2D joint pixel coordinates, one column per joint.
struct Joints2D {
  Eigen::Matrix2Xd positions;
  std::vector<bool> valid;

  Joints2D() = default;
  explicit Joints2D(int joint_count)
      : positions(Eigen::Matrix2Xd::Zero(2, joint_count)), valid(static_cast<size_t>(joint_count), false) {}
  int size() const { return static_cast<int>(positions.cols()); }
};

// max(2, round(0.012 * height))
int default_marker_radius(int image_height);

struct RenderOptions {
  std::optional<int> marker_radius;  // default_marker_radius when unset
  double line_half_width = 1.0;
};

// Lines first in the line color, then joint discs far-to-near. Joints behind the
// camera or flagged invalid are skipped together with their bones.
PoseMap render_posemap(const Skeleton& skeleton, const JointPositions3D& positions, const Camera& camera,
                       const ColorPalette& palette, const RenderOptions& options = {});

struct DecodeOptions {
  double color_threshold = 40.0;  // Euclidean RGB distance
  int min_pixels = 4;
  int max_refine_iterations = 10;
};

Joints2D decode_posemap(const Image& image, const ColorPalette& palette, const DecodeOptions& options = {});
inline Joints2D decode_posemap(const PoseMap& map, const ColorPalette& palette, const DecodeOptions& options = {}) {
  return decode_posemap(map.image, palette, options);
}

std::string palette_to_json_text(const ColorPalette& palette);
ColorPalette palette_from_json_text(const std::string& text);
void save_palette(const std::filesystem::path& path, const ColorPalette& palette);
ColorPalette load_palette(const std::filesystem::path& path);

}  // namespace animax

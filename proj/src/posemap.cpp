#include "animax/posemap.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <limits>
#include <numeric>

#include "animax/error.hpp"
#include "animax/io_util.hpp"
#include "animax/random.hpp"

namespace animax {

using nlohmann::json;

void ColorPalette::validate() const {
  for (size_t a = 0; a < joints.size(); ++a) {
    if (rgb_distance(joints[a], line) < kMinColorSeparation)
      throw ValidationError("palette: joint " + std::to_string(a) + " too close to line color");
    if (rgb_distance(joints[a], background) < kMinColorSeparation)
      throw ValidationError("palette: joint " + std::to_string(a) + " too close to background color");
    for (size_t b = a + 1; b < joints.size(); ++b)
      if (rgb_distance(joints[a], joints[b]) < kMinColorSeparation)
        throw ValidationError("palette: joints " + std::to_string(a) + " and " + std::to_string(b) + " too close");
  }
  if (rgb_distance(line, background) < kMinColorSeparation) throw ValidationError("palette: line too close to background");
}

ColorPalette make_palette(int joint_count, std::uint64_t seed) {
  if (joint_count < 1 || joint_count > 256) throw ValidationError("make_palette: joint_count must be in [1, 256]");
  ColorPalette palette;

  constexpr int kStep = 15;  // 18 levels per channel, 0..255
  std::vector<Rgb> candidates;
  for (int r = 0; r <= 255; r += kStep)
    for (int g = 0; g <= 255; g += kStep)
      for (int b = 0; b <= 255; b += kStep) candidates.push_back({std::uint8_t(r), std::uint8_t(g), std::uint8_t(b)});

  // Distance from each candidate to the nearest color chosen so far.
  std::vector<double> nearest(candidates.size());
  for (size_t i = 0; i < candidates.size(); ++i)
    nearest[i] = std::min(rgb_distance(candidates[i], palette.line), rgb_distance(candidates[i], palette.background));

  Rng rng(seed);
  for (int k = 0; k < joint_count; ++k) {
    size_t pick = 0;
    if (k == 0) {
      std::vector<size_t> admissible;
      for (size_t i = 0; i < candidates.size(); ++i)
        if (nearest[i] >= kMinColorSeparation) admissible.push_back(i);
      pick = admissible[rng.below(admissible.size())];
    } else {
      pick = static_cast<size_t>(std::max_element(nearest.begin(), nearest.end()) - nearest.begin());
    }
    if (nearest[pick] < kMinColorSeparation)
      throw ValidationError("make_palette: cannot separate " + std::to_string(joint_count) + " joint colors (capacity " +
                            std::to_string(k) + ")");
    palette.joints.push_back(candidates[pick]);
    for (size_t i = 0; i < candidates.size(); ++i)
      nearest[i] = std::min(nearest[i], rgb_distance(candidates[i], candidates[pick]));
  }
  return palette;
}

int default_marker_radius(int image_height) {
  return std::max(2, static_cast<int>(std::lround(0.012 * image_height)));
}

namespace {

void draw_segment(Image& img, const Vec2& a, const Vec2& b, double half_width, Rgb color) {
  const int x0 = std::max(0, static_cast<int>(std::floor(std::min(a.x(), b.x()) - half_width)));
  const int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(std::max(a.x(), b.x()) + half_width)));
  const int y0 = std::max(0, static_cast<int>(std::floor(std::min(a.y(), b.y()) - half_width)));
  const int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(std::max(a.y(), b.y()) + half_width)));
  const Vec2 ab = b - a;
  const double len2 = ab.squaredNorm();
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const Vec2 p(x, y);
      const double s = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
      if ((p - (a + s * ab)).norm() <= half_width) img.set(x, y, color);
    }
  }
}

void draw_disc(Image& img, const Vec2& c, int radius, Rgb color) {
  const double r2 = double(radius) * radius;
  const int x0 = std::max(0, static_cast<int>(std::floor(c.x() - radius)));
  const int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(c.x() + radius)));
  const int y0 = std::max(0, static_cast<int>(std::floor(c.y() - radius)));
  const int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(c.y() + radius)));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const double dx = x - c.x(), dy = y - c.y();
      if (dx * dx + dy * dy <= r2) img.set(x, y, color);
    }
}

}  // namespace

PoseMap render_posemap(const Skeleton& skeleton, const JointPositions3D& positions, const Camera& camera,
                       const ColorPalette& palette, const RenderOptions& options) {
  if (positions.size() != skeleton.size()) throw ValidationError("render_posemap: position count does not match skeleton");
  if (palette.size() < skeleton.size()) throw ValidationError("render_posemap: palette has fewer colors than joints");
  PoseMap map;
  map.image = Image(camera.width(), camera.height(), palette.background);
  const int radius = options.marker_radius.value_or(default_marker_radius(camera.height()));

  const int n = skeleton.size();
  std::vector<Projection> proj(static_cast<size_t>(n));
  std::vector<bool> drawable(static_cast<size_t>(n));
  for (int j = 0; j < n; ++j) {
    proj[static_cast<size_t>(j)] = project(camera, positions.positions.col(j));
    drawable[static_cast<size_t>(j)] = positions.valid[static_cast<size_t>(j)] && !proj[static_cast<size_t>(j)].behind;
  }

  for (int j = 0; j < n; ++j) {
    const int p = skeleton.parent(j);
    if (p < 0 || !drawable[static_cast<size_t>(j)] || !drawable[static_cast<size_t>(p)]) continue;
    draw_segment(map.image, proj[static_cast<size_t>(p)].pixel, proj[static_cast<size_t>(j)].pixel, options.line_half_width,
                 palette.line);
  }

  std::vector<int> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return proj[static_cast<size_t>(a)].depth > proj[static_cast<size_t>(b)].depth; });
  for (int j : order)
    if (drawable[static_cast<size_t>(j)])
      draw_disc(map.image, proj[static_cast<size_t>(j)].pixel, radius, palette.joints[static_cast<size_t>(j)]);
  return map;
}

Joints2D decode_posemap(const Image& image, const ColorPalette& palette, const DecodeOptions& options) {
  const int n = palette.size();
  Joints2D out(n);

  struct Sample {
    double x, y, w;
  };
  std::vector<std::vector<Sample>> samples(static_cast<size_t>(n));
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const Rgb c = image.at(x, y);
      if (c == palette.background || c == palette.line) continue;
      int best = -1;
      double best_d = std::numeric_limits<double>::infinity();
      for (int j = 0; j < n; ++j) {
        const double d = rgb_distance(c, palette.joints[static_cast<size_t>(j)]);
        if (d < best_d) {
          best_d = d;
          best = j;
        }
      }
      if (best >= 0 && best_d <= options.color_threshold)
        samples[static_cast<size_t>(best)].push_back({double(x), double(y), 1.0 - 0.5 * best_d / options.color_threshold});
    }
  }

  for (int j = 0; j < n; ++j) {
    const auto& s = samples[static_cast<size_t>(j)];
    if (static_cast<int>(s.size()) < options.min_pixels) continue;

    // Weighted centroid, then k=1 k-means refinement restricted to pixels near
    // the current center so stray matches far from the marker drop out.
    auto centroid = [&](const Vec2* center, double gate, int& count) {
      Vec2 acc = Vec2::Zero();
      double wsum = 0.0;
      count = 0;
      for (const auto& p : s) {
        if (center && (Vec2(p.x, p.y) - *center).norm() > gate) continue;
        acc += p.w * Vec2(p.x, p.y);
        wsum += p.w;
        ++count;
      }
      return wsum > 0.0 ? Vec2(acc / wsum) : Vec2(center ? *center : Vec2::Zero());
    };
    int count = 0;
    Vec2 c = centroid(nullptr, 0.0, count);
    for (int it = 0; it < options.max_refine_iterations; ++it) {
      const double gate = 2.0 * std::sqrt(static_cast<double>(count) / 3.141592653589793) + 1.5;
      const Vec2 next = centroid(&c, gate, count);
      const bool done = (next - c).norm() < 1e-9;
      c = next;
      if (done) break;
    }
    if (count < options.min_pixels) continue;
    out.positions.col(j) = c;
    out.valid[static_cast<size_t>(j)] = true;
  }
  return out;
}

namespace {
json rgb_json(const Rgb& c) { return json::array({c[0], c[1], c[2]}); }
Rgb rgb_from(const json& j) {
  if (!j.is_array() || j.size() != 3) throw ValidationError("palette: color must be [r,g,b]");
  Rgb c{};
  for (size_t i = 0; i < 3; ++i) {
    const int v = j[i].get<int>();
    if (v < 0 || v > 255) throw ValidationError("palette: channel out of range");
    c[i] = static_cast<std::uint8_t>(v);
  }
  return c;
}
}  // namespace

std::string palette_to_json_text(const ColorPalette& palette) {
  json joints = json::array();
  for (const auto& c : palette.joints) joints.push_back(rgb_json(c));
  return json{{"line", rgb_json(palette.line)}, {"background", rgb_json(palette.background)}, {"joints", joints}}.dump() +
         "\n";
}

ColorPalette palette_from_json_text(const std::string& text) {
  ColorPalette p;
  try {
    const json doc = json::parse(text);
    p.line = rgb_from(doc.at("line"));
    p.background = rgb_from(doc.at("background"));
    for (const auto& c : doc.at("joints")) p.joints.push_back(rgb_from(c));
  } catch (const json::exception& e) {
    throw ValidationError(std::string("palette: ") + e.what());
  }
  p.validate();
  return p;
}

void save_palette(const std::filesystem::path& path, const ColorPalette& palette) {
  write_file_atomic(path, palette_to_json_text(palette));
}

ColorPalette load_palette(const std::filesystem::path& path) { return palette_from_json_text(read_text_file(path)); }

}  // namespace animax

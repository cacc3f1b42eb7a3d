#include "animax/toy_latents.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "animax/error.hpp"

namespace animax {

void ToyLatentOptions::validate() const {
  if (patch < 1 || image_size < patch || image_size % patch != 0)
    throw ValidationError("toy latents: image size must be a positive multiple of the patch");
  if (f < 1) throw ValidationError("toy latents: f must be >= 1");
  if (views < 2) throw ValidationError("toy latents: at least two views are required for reconstruction");
  if (views > 4) throw ValidationError("toy latents: at most four canonical views");
}

std::vector<Camera> toy_cameras(const ToyLatentOptions& options) {
  options.validate();
  auto az = canonical_azimuths_deg();
  az.resize(static_cast<size_t>(options.views));
  return canonical_rig(default_rig_distance(), options.image_size, az);
}

nn::Matrix<float> patchify(const Image& image, int patch) {
  if (patch < 1 || image.width % patch != 0 || image.height % patch != 0)
    throw ValidationError("patchify: image size must be a multiple of the patch");
  const int gh = image.height / patch, gw = image.width / patch;
  nn::Matrix<float> cells(gh * gw, 3 * patch * patch);
  for (int gy = 0; gy < gh; ++gy)
    for (int gx = 0; gx < gw; ++gx)
      for (int dy = 0; dy < patch; ++dy)
        for (int dx = 0; dx < patch; ++dx) {
          const Rgb c = image.at(gx * patch + dx, gy * patch + dy);
          for (int k = 0; k < 3; ++k) cells(gy * gw + gx, (dy * patch + dx) * 3 + k) = c[static_cast<size_t>(k)] / 127.5f - 1.0f;
        }
  return cells;
}

Image unpatchify(const nn::Matrix<float>& cells, int grid_h, int grid_w, int patch) {
  if (cells.rows() != static_cast<Eigen::Index>(grid_h) * grid_w || cells.cols() != 3 * patch * patch)
    throw ValidationError("unpatchify: cell matrix has the wrong shape");
  Image img(grid_w * patch, grid_h * patch);
  for (int gy = 0; gy < grid_h; ++gy)
    for (int gx = 0; gx < grid_w; ++gx)
      for (int dy = 0; dy < patch; ++dy)
        for (int dx = 0; dx < patch; ++dx) {
          Rgb c;
          for (int k = 0; k < 3; ++k) {
            const float v = std::round((cells(gy * grid_w + gx, (dy * patch + dx) * 3 + k) + 1.0f) * 127.5f);
            c[static_cast<size_t>(k)] = static_cast<std::uint8_t>(std::clamp(v, 0.0f, 255.0f));
          }
          img.set(gx * patch + dx, gy * patch + dy, c);
        }
  return img;
}

Image render_rgb_proxy(const Skeleton& skeleton, const JointPositions3D& positions, const Camera& camera) {
  Image img(camera.width(), camera.height(), {96, 96, 96});
  std::vector<Projection> proj;
  for (int j = 0; j < skeleton.size(); ++j) proj.push_back(project(camera, positions.positions.col(j)));
  const double radius = std::max(1.5, 0.03 * camera.height());
  const double ref = camera.center().norm();
  std::vector<double> zbuf(static_cast<size_t>(img.width) * static_cast<size_t>(img.height),
                           std::numeric_limits<double>::infinity());
  for (int j = 0; j < skeleton.size(); ++j) {
    const int p = skeleton.parent(j);
    if (p < 0) continue;
    const auto& a = proj[static_cast<size_t>(p)];
    const auto& b = proj[static_cast<size_t>(j)];
    if (a.behind || b.behind) continue;
    const Vec2 ab = b.pixel - a.pixel;
    const double len2 = ab.squaredNorm();
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min(a.pixel.x(), b.pixel.x()) - radius)));
    const int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(std::max(a.pixel.x(), b.pixel.x()) + radius)));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min(a.pixel.y(), b.pixel.y()) - radius)));
    const int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(std::max(a.pixel.y(), b.pixel.y()) + radius)));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        const Vec2 q(x, y);
        const double s = len2 > 0.0 ? std::clamp((q - a.pixel).dot(ab) / len2, 0.0, 1.0) : 0.0;
        if ((a.pixel + s * ab - q).norm() > radius) continue;
        const double depth = (1.0 - s) * a.depth + s * b.depth;
        double& z = zbuf[static_cast<size_t>(y) * static_cast<size_t>(img.width) + static_cast<size_t>(x)];
        if (depth >= z) continue;
        z = depth;
        // Nearer surfaces are brighter.
        const double shade = std::clamp(0.65 + 0.35 * (ref - depth), 0.2, 1.0);
        img.set(x, y, {static_cast<std::uint8_t>(std::lround(250 * shade)), static_cast<std::uint8_t>(std::lround(170 * shade)),
                       static_cast<std::uint8_t>(std::lround(70 * shade))});
      }
  }
  return img;
}

std::vector<int> toy_frame_indices(const ToyLatentOptions& options) {
  std::vector<int> idx;
  for (int i = 0; i <= options.f; ++i) idx.push_back(4 * i);
  return idx;
}

nn::Matrix<float> toy_rays(const ToyLatentOptions& options) {
  const auto cams = toy_cameras(options);
  const int g = options.grid();
  nn::Matrix<float> rays(static_cast<Eigen::Index>(options.views) * g * g, 6);
  for (int v = 0; v < options.views; ++v)
    rays.middleRows(static_cast<Eigen::Index>(v) * g * g, g * g) = plucker_matrix<float>(plucker_map(cams[static_cast<size_t>(v)], g, g));
  return rays;
}

std::vector<ClipRecord> toy_records(const ToyDatasetSpec& spec) {
  SynthOptions so;
  so.min_joints = spec.min_joints;
  so.max_joints = spec.max_joints;
  so.frames = spec.frames;
  return synth_clips(spec.count, spec.seed, so);
}

std::vector<JointPositions3D> toy_targets(const ClipRecord& record, const ToyLatentOptions& options) {
  std::vector<JointPositions3D> out;
  for (int fi : toy_frame_indices(options)) {
    if (fi >= record.clip.frame_count())
      throw ValidationError("toy latents: clip " + record.id + " is shorter than " + std::to_string(fi + 1) + " frames");
    out.push_back(forward_kinematics(record.skeleton, record.clip.frames[static_cast<size_t>(fi)]));
  }
  return out;
}

ToyExample<float> make_toy_example(const ClipRecord& record, const ToyLatentOptions& options) {
  options.validate();
  const auto cams = toy_cameras(options);
  const auto palette = make_palette(record.skeleton.size(), options.palette_seed);
  const auto targets = toy_targets(record, options);
  const LatentDims d = options.dims();
  const int hw = d.tokens_per_slot();

  ToyExample<float> ex;
  ex.dims = d;
  ex.rays = toy_rays(options);
  ex.label = record.label;
  ex.source = static_cast<int>(record.source);
  ex.clean.resize(d.total_tokens(), d.c);
  for (int v = 0; v < d.views; ++v) {
    const Camera& cam = cams[static_cast<size_t>(v)];
    nn::Matrix<float> noisy_rgb(static_cast<Eigen::Index>(d.video_frames()) * hw, d.c);
    nn::Matrix<float> noisy_pose(static_cast<Eigen::Index>(d.video_frames()) * hw, d.c);
    for (int i = 0; i < d.video_frames(); ++i) {
      const auto& pos = targets[static_cast<size_t>(i)];
      noisy_rgb.middleRows(static_cast<Eigen::Index>(i) * hw, hw) = patchify(render_rgb_proxy(record.skeleton, pos, cam), options.patch);
      noisy_pose.middleRows(static_cast<Eigen::Index>(i) * hw, hw) =
          patchify(render_posemap(record.skeleton, pos, cam, palette).image, options.patch);
    }
    const auto grid = build_token_sequence<float>(d, noisy_rgb.topRows(hw), noisy_rgb, noisy_pose.topRows(hw), noisy_pose);
    ex.clean.middleRows(static_cast<Eigen::Index>(v) * d.tokens_per_view(), d.tokens_per_view()) = grid.values;
  }
  return ex;
}

SequenceReconstruction decode_toy_pose(const ClipRecord& record, const ToyLatentOptions& options,
                                       const nn::Matrix<float>& stacked, const ReconstructOptions& reconstruct) {
  options.validate();
  const LatentDims d = options.dims();
  const auto parts = split_views<float>(d, stacked);
  const int hw = d.tokens_per_slot();
  std::vector<std::vector<Image>> maps(static_cast<size_t>(d.views));
  for (int v = 0; v < d.views; ++v)
    for (int i = 0; i < d.video_frames(); ++i)
      maps[static_cast<size_t>(v)].push_back(unpatchify(parts[static_cast<size_t>(v)].noisy_pose.middleRows(static_cast<Eigen::Index>(i) * hw, hw),
                                                        d.h, d.w, options.patch));
  return reconstruct_sequence(record.skeleton, make_palette(record.skeleton.size(), options.palette_seed), toy_cameras(options),
                              maps, record.clip.fps / 4.0, reconstruct);
}

}  // namespace animax

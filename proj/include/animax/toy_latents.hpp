#pragma once

#include <cstdint>
#include <vector>

#include "animax/camera.hpp"
#include "animax/datakit.hpp"
#include "animax/denoiser.hpp"
#include "animax/image.hpp"
#include "animax/pipeline.hpp"
#include "animax/posemap.hpp"

namespace animax {

// Synthetic stand-in for the video VAE: small rasters are folded losslessly
// into latent cells (space-to-depth), one latent frame per 4 clip frames.
struct ToyLatentOptions {
  int image_size = 32;
  int patch = 4;
  int f = 2;
  int views = 2;
  std::uint64_t palette_seed = 0;

  int grid() const { return image_size / patch; }
  int channels() const { return 3 * patch * patch; }
  LatentDims dims() const { return {f, grid(), grid(), channels(), views}; }
  // Throws ValidationError when the size is not a multiple of the patch.
  void validate() const;
};

// Views of the toy rig: the first `views` canonical azimuths.
std::vector<Camera> toy_cameras(const ToyLatentOptions& options);

// (size/p)^2 x 3p^2 cells with values in [-1, 1]; cell channels ordered (dy, dx, rgb).
nn::Matrix<float> patchify(const Image& image, int patch);
// Inverse of patchify with rounding and clamping to 8 bits.
Image unpatchify(const nn::Matrix<float>& cells, int grid_h, int grid_w, int patch);

// Shaded stick figure used as the RGB stream: bones as depth-shaded capsules on
// a gray backdrop, so the image carries the motion but not the joint colors.
Image render_rgb_proxy(const Skeleton& skeleton, const JointPositions3D& positions, const Camera& camera);

// Clip frames represented by the 1 + f latent frames.
std::vector<int> toy_frame_indices(const ToyLatentOptions& options);

// Condition slots carry the first frame (the template pose), noisy slots the
// frames listed by toy_frame_indices.
ToyExample<float> make_toy_example(const ClipRecord& record, const ToyLatentOptions& options);

// Ray maps of the toy rig at latent resolution, stacked per view.
nn::Matrix<float> toy_rays(const ToyLatentOptions& options);

// Decodes the pose stream of a stacked grid back to 3D through the
// reconstruction pipeline.
SequenceReconstruction decode_toy_pose(const ClipRecord& record, const ToyLatentOptions& options,
                                       const nn::Matrix<float>& stacked, const ReconstructOptions& reconstruct = {});

// Small skeletons so joint markers stay separable on toy rasters.
struct ToyDatasetSpec {
  int count = 50;
  std::uint64_t seed = 0;
  int min_joints = 2;
  int max_joints = 5;
  int frames = 32;
};

std::vector<ClipRecord> toy_records(const ToyDatasetSpec& spec);

// Ground-truth FK positions for the toy frames.
std::vector<JointPositions3D> toy_targets(const ClipRecord& record, const ToyLatentOptions& options);

}  // namespace animax

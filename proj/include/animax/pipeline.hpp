#pragma once

#include <functional>
#include <string>
#include <vector>

#include "animax/camera.hpp"
#include "animax/image.hpp"
#include "animax/kinematics.hpp"
#include "animax/posemap.hpp"
#include "animax/reconstruct.hpp"
#include "animax/skeleton.hpp"

namespace animax {

struct ReconstructOptions {
  double lambda_bone = 100.0;
  DecodeOptions decode;
  LmOptions lm;
  int threads = 1;
};

// Decode -> triangulate -> IK over a multi-view pose-map sequence.
struct SequenceReconstruction {
  std::vector<std::vector<Joints2D>> observations;  // [frame][view]
  std::vector<TriangulationResult> frames;          // positions all invalid when nothing was decoded
  std::vector<bool> frame_empty;
  IkClipResult ik;
  std::vector<JointPositions3D> fk;  // FK of the solved poses
};

// `maps` is indexed [view][frame]. Frames are processed independently on up to
// `threads` workers; results do not depend on the worker count.
SequenceReconstruction reconstruct_sequence(const Skeleton& skeleton, const ColorPalette& palette,
                                            const std::vector<Camera>& cameras,
                                            const std::vector<std::vector<Image>>& maps, double fps,
                                            const ReconstructOptions& options = {});

// Position errors in model units and as fractions of the rest bounding-box diagonal.
struct PositionErrors {
  double bbox_diagonal = 0.0;
  std::vector<double> frame_mean;  // model units
  std::vector<double> frame_max;
  double mean = 0.0;
  double max = 0.0;
  double mean_relative() const { return mean / bbox_diagonal; }
  double max_relative() const { return max / bbox_diagonal; }
};

PositionErrors position_errors(const Skeleton& skeleton, const std::vector<JointPositions3D>& truth,
                               const std::vector<JointPositions3D>& estimate);

// Runs fn(i) for i in [0, n) on up to `threads` workers (interleaved assignment).
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

}  // namespace animax

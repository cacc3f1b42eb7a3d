#include "animax/pipeline.hpp"

#include <algorithm>
#include <exception>
#include <mutex>
#include <thread>

#include "animax/error.hpp"

namespace animax {

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  const int workers = std::max(1, std::min(threads, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr first;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      for (int i = w; i < n; i += workers) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!first) first = std::current_exception();
          return;
        }
      }
    });
  for (auto& t : pool) t.join();
  if (first) std::rethrow_exception(first);
}

SequenceReconstruction reconstruct_sequence(const Skeleton& skeleton, const ColorPalette& palette,
                                            const std::vector<Camera>& cameras,
                                            const std::vector<std::vector<Image>>& maps, double fps,
                                            const ReconstructOptions& options) {
  if (maps.size() != cameras.size()) throw ValidationError("reconstruct: view count differs between maps and cameras");
  if (cameras.size() < 2) throw ValidationError("reconstruct: at least two views are required");
  if (palette.size() != skeleton.size()) throw ValidationError("reconstruct: palette size does not match the skeleton");
  const size_t frames = maps.front().size();
  for (size_t v = 0; v < maps.size(); ++v)
    if (maps[v].size() != frames) throw ValidationError("reconstruct: view " + std::to_string(v) + " has a different frame count");
  if (frames == 0) throw ValidationError("reconstruct: no frames");

  const int n = skeleton.size();
  SequenceReconstruction out;
  out.observations.resize(frames);
  out.frames.resize(frames);
  out.frame_empty.assign(frames, false);
  std::vector<char> empty(frames, 0);

  parallel_for(static_cast<int>(frames), options.threads, [&](int f) {
    const auto fi = static_cast<size_t>(f);
    TriangulationProblem pb;
    pb.skeleton = skeleton;
    pb.cameras = cameras;
    pb.lambda_bone = options.lambda_bone;
    int visible = 0;
    for (size_t v = 0; v < maps.size(); ++v) {
      const Image& img = maps[v][fi];
      if (img.width != cameras[v].width() || img.height != cameras[v].height())
        throw ValidationError("reconstruct: view " + std::to_string(v) + " frame " + std::to_string(f) +
                              " does not match the camera resolution");
      pb.observations.push_back(decode_posemap(img, palette, options.decode));
      for (int j = 0; j < n; ++j) visible += pb.observations.back().valid[static_cast<size_t>(j)] ? 1 : 0;
    }
    out.observations[fi] = pb.observations;
    if (visible == 0) {
      empty[fi] = 1;
      out.frames[fi].positions = JointPositions3D(n);
      std::fill(out.frames[fi].positions.valid.begin(), out.frames[fi].positions.valid.end(), false);
      return;
    }
    out.frames[fi] = triangulate_frame(pb, options.lm);
  });

  std::vector<JointPositions3D> targets;
  for (size_t f = 0; f < frames; ++f) {
    out.frame_empty[f] = empty[f] != 0;
    targets.push_back(out.frames[f].positions);
  }
  const JointPositions3D templ = forward_kinematics(skeleton, Pose::identity(n));
  out.ik = solve_clip(skeleton, templ, targets, fps);
  for (const auto& pose : out.ik.clip.frames) out.fk.push_back(forward_kinematics(skeleton, pose));
  return out;
}

PositionErrors position_errors(const Skeleton& skeleton, const std::vector<JointPositions3D>& truth,
                               const std::vector<JointPositions3D>& estimate) {
  if (truth.size() != estimate.size()) throw ValidationError("position_errors: frame counts differ");
  PositionErrors e;
  e.bbox_diagonal = rest_bbox_diagonal(skeleton);
  if (!(e.bbox_diagonal > 0.0)) throw ValidationError("position_errors: degenerate skeleton bounding box");
  double sum = 0.0;
  size_t count = 0;
  for (size_t f = 0; f < truth.size(); ++f) {
    if (truth[f].size() != skeleton.size() || estimate[f].size() != skeleton.size())
      throw ValidationError("position_errors: joint counts differ");
    const Eigen::VectorXd d = (truth[f].positions - estimate[f].positions).colwise().norm().transpose();
    e.frame_mean.push_back(d.mean());
    e.frame_max.push_back(d.maxCoeff());
    sum += d.sum();
    count += static_cast<size_t>(d.size());
    e.max = std::max(e.max, d.maxCoeff());
  }
  e.mean = count ? sum / static_cast<double>(count) : 0.0;
  return e;
}

}  // namespace animax

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "animax/camera.hpp"
#include "animax/posemap.hpp"
#include "animax/random.hpp"
#include "animax/skeleton.hpp"

namespace animax {

enum class SourceTag { MixamoLike = 0, VroidLike = 1, ObjaverseLike = 2 };
inline constexpr int kSourceCount = 3;

std::string source_name(SourceTag tag);
SourceTag source_from_name(const std::string& name);

inline const std::array<std::string, 8> kMotionLabels = {"walk", "run",  "jump",       "wave",
                                                          "turn", "idle-sway", "open-close", "swing"};

struct ClipRecord {
  std::string id;
  Skeleton skeleton;
  AnimationClip clip;
  SourceTag source = SourceTag::ObjaverseLike;
  int label = 0;
  double motion_score = 0.0;
};

// Mean per-frame joint displacement |P_t - P_{t-1}| over all joints and
// consecutive frame pairs; 0 for clips shorter than two frames.
double motion_score(const Skeleton& skeleton, const AnimationClip& clip);

struct FilterOptions {
  int min_frames = 16;        // strictly more frames required
  double min_motion = 0.002;  // model units per frame
};

struct FilterDecision {
  bool accepted = true;
  std::string reason;  // "frame_count" or "motion" when rejected
};

FilterDecision filter_clip(const ClipRecord& record, const FilterOptions& options = {});

struct SamplerConfig {
  std::array<double, kSourceCount> probabilities{0.25, 0.25, 0.5};
  // Throws ValidationError unless nonnegative and summing to 1 within 1e-9.
  void validate() const;
};

// Draws a source by probability, then a record uniformly within it.
class WeightedSampler {
 public:
  WeightedSampler(std::vector<int> source_of_record, const SamplerConfig& config, std::uint64_t seed);
  size_t next();

 private:
  std::array<std::vector<size_t>, kSourceCount> by_source_;
  std::array<double, kSourceCount> cumulative_{};
  Rng rng_;
};

WeightedSampler weighted_sampler(const std::vector<ClipRecord>& records, const SamplerConfig& config, std::uint64_t seed);

struct SynthOptions {
  int min_joints = 2;
  int max_joints = 20;
  int frames = 32;
  double fps = 30.0;
};

// Procedural skeletons (chains, quadruped-like and branching trees) with periodic
// label-driven motion, normalized so every frame lies in the unit sphere. Frame 0
// is the rest pose. Deterministic for (count, seed, options).
std::vector<ClipRecord> synth_clips(int count, std::uint64_t seed, const SynthOptions& options = {});

// FK positions of every frame.
std::vector<JointPositions3D> clip_positions(const Skeleton& skeleton, const AnimationClip& clip);

// Pose maps indexed [view][frame].
std::vector<std::vector<PoseMap>> render_sequence(const Skeleton& skeleton, const AnimationClip& clip,
                                                  const std::vector<Camera>& cameras, const ColorPalette& palette);

struct DatasetWriteOptions {
  bool render = true;
  int resolution = 512;
  int views = 4;
  std::uint64_t palette_seed = 0;
};

// Writes skeleton/clip JSON per record, optional pose-map PNGs under
// <id>/view{v}/frame{NNN}.png, palette and camera JSON, and manifest.json.
void write_dataset(const std::filesystem::path& dir, const std::vector<ClipRecord>& records,
                   const DatasetWriteOptions& options);

struct ManifestEntry {
  std::string id;
  std::filesystem::path skeleton;
  std::filesystem::path clip;
  std::filesystem::path posemaps;  // empty when not rendered
  SourceTag source = SourceTag::ObjaverseLike;
  int label = 0;
};

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);
ClipRecord load_record(const ManifestEntry& entry);

}  // namespace animax

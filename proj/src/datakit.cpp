#include "animax/datakit.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <json.hpp>
#include <limits>
#include <numbers>

#include "animax/error.hpp"
#include "animax/image.hpp"
#include "animax/io_util.hpp"

namespace animax {

using nlohmann::json;

std::string source_name(SourceTag tag) {
  switch (tag) {
    case SourceTag::MixamoLike:
      return "mixamo-like";
    case SourceTag::VroidLike:
      return "vroid-like";
    case SourceTag::ObjaverseLike:
      return "objaverse-like";
  }
  throw ValidationError("unknown source tag");
}

SourceTag source_from_name(const std::string& name) {
  for (int s = 0; s < kSourceCount; ++s)
    if (source_name(static_cast<SourceTag>(s)) == name) return static_cast<SourceTag>(s);
  throw ValidationError("unknown source tag '" + name + "'");
}

std::vector<JointPositions3D> clip_positions(const Skeleton& skeleton, const AnimationClip& clip) {
  std::vector<JointPositions3D> out;
  out.reserve(clip.frames.size());
  for (const auto& pose : clip.frames) out.push_back(forward_kinematics(skeleton, pose));
  return out;
}

double motion_score(const Skeleton& skeleton, const AnimationClip& clip) {
  if (clip.frame_count() < 2) return 0.0;
  const auto pos = clip_positions(skeleton, clip);
  double sum = 0.0;
  for (size_t t = 1; t < pos.size(); ++t) sum += (pos[t].positions - pos[t - 1].positions).colwise().norm().sum();
  return sum / (static_cast<double>(pos.size() - 1) * skeleton.size());
}

FilterDecision filter_clip(const ClipRecord& record, const FilterOptions& options) {
  if (record.clip.frame_count() <= options.min_frames) return {false, "frame_count"};
  if (record.motion_score < options.min_motion) return {false, "motion"};
  return {true, ""};
}

void SamplerConfig::validate() const {
  double sum = 0.0;
  for (double p : probabilities) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw ValidationError("sampler: probabilities must be nonnegative");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ValidationError("sampler: probabilities must sum to 1");
}

WeightedSampler::WeightedSampler(std::vector<int> source_of_record, const SamplerConfig& config, std::uint64_t seed)
    : rng_(seed, 0x73616d70ULL) {
  config.validate();
  for (size_t i = 0; i < source_of_record.size(); ++i) {
    const int s = source_of_record[i];
    if (s < 0 || s >= kSourceCount) throw ValidationError("sampler: source tag out of range");
    by_source_[static_cast<size_t>(s)].push_back(i);
  }
  double acc = 0.0;
  for (int s = 0; s < kSourceCount; ++s) {
    const double p = config.probabilities[static_cast<size_t>(s)];
    if (p > 0.0 && by_source_[static_cast<size_t>(s)].empty())
      throw ValidationError("sampler: source " + source_name(static_cast<SourceTag>(s)) + " has weight but no records");
    acc += p;
    cumulative_[static_cast<size_t>(s)] = acc;
  }
}

size_t WeightedSampler::next() {
  const double u = rng_.uniform() * cumulative_.back();
  size_t s = 0;
  // Skip zero-weight sources so a draw landing on a boundary never selects them.
  while (s + 1 < cumulative_.size() && (u >= cumulative_[s] || by_source_[s].empty())) ++s;
  while (by_source_[s].empty() && s > 0) --s;
  const auto& pool = by_source_[s];
  return pool[static_cast<size_t>(rng_.below(pool.size()))];
}

WeightedSampler weighted_sampler(const std::vector<ClipRecord>& records, const SamplerConfig& config, std::uint64_t seed) {
  std::vector<int> sources;
  for (const auto& r : records) sources.push_back(static_cast<int>(r.source));
  return WeightedSampler(std::move(sources), config, seed);
}

namespace {

Vec3 random_unit(Rng& rng) {
  Vec3 v(rng.normal(), rng.normal(), rng.normal());
  while (v.norm() < 1e-6) v = Vec3(rng.normal(), rng.normal(), rng.normal());
  return v.normalized();
}

// Direction near `base`, perturbed by up to `spread` radians on average.
Vec3 jitter(const Vec3& base, double spread, Rng& rng) { return (base.normalized() + spread * random_unit(rng)).normalized(); }

enum class Topology { Chain, Quadruped, Tree };

std::vector<JointDef> make_chain(int n, Rng& rng) {
  std::vector<JointDef> j(static_cast<size_t>(n));
  j[0].name = "root";
  Vec3 dir = jitter(Vec3::UnitZ(), 0.5, rng);
  for (int i = 1; i < n; ++i) {
    dir = jitter(dir, 0.6, rng);
    j[static_cast<size_t>(i)].name = "chain" + std::to_string(i);
    j[static_cast<size_t>(i)].parent = i - 1;
    j[static_cast<size_t>(i)].rest_offset = rng.uniform(0.8, 1.2) * dir;
  }
  return j;
}

std::vector<JointDef> make_quadruped(int n, Rng& rng) {
  std::vector<JointDef> j;
  auto push = [&](std::string name, int parent, const Vec3& off) {
    JointDef d;
    d.name = std::move(name);
    if (parent >= 0) d.parent = parent;
    d.rest_offset = off;
    j.push_back(std::move(d));
    return static_cast<int>(j.size()) - 1;
  };
  const int spine = std::clamp(n / 4 + 1, 2, 5);
  int prev = push("pelvis", -1, Vec3::Zero());
  const int hip = prev;
  for (int s = 1; s < spine; ++s) prev = push("spine" + std::to_string(s), prev, Vec3(rng.uniform(0.9, 1.3), 0.0, rng.uniform(-0.1, 0.1)));
  const int shoulder = prev;
  // Remaining joints become legs (front pair, back pair), then head and tail.
  const int anchors[4] = {shoulder, shoulder, hip, hip};
  const double side[4] = {1.0, -1.0, 1.0, -1.0};
  std::vector<int> tips(4, -1);
  int leg = 0, guard = 0;
  while (static_cast<int>(j.size()) < n && guard++ < 4 * n) {
    if (leg < 4) {
      const int parent = tips[static_cast<size_t>(leg)] < 0 ? anchors[leg] : tips[static_cast<size_t>(leg)];
      const Vec3 off = tips[static_cast<size_t>(leg)] < 0 ? Vec3(0.0, 0.45 * side[leg], -0.3) : Vec3(rng.uniform(-0.15, 0.15), 0.05 * side[leg], -rng.uniform(0.7, 0.9));
      tips[static_cast<size_t>(leg)] = push("leg" + std::to_string(leg) + "_" + std::to_string(j.size()), parent, off);
    } else if (leg == 4) {
      push("head", shoulder, Vec3(rng.uniform(0.5, 0.7), 0.0, rng.uniform(0.4, 0.6)));
    } else if (leg == 5) {
      push("tail", hip, Vec3(-rng.uniform(0.6, 0.8), 0.0, rng.uniform(0.1, 0.3)));
    } else {
      // Extend legs further once every limb exists.
      const int l = (leg - 6) % 4;
      tips[static_cast<size_t>(l)] = push("leg" + std::to_string(l) + "_" + std::to_string(j.size()), tips[static_cast<size_t>(l)],
                                          Vec3(rng.uniform(-0.2, 0.2), 0.0, -rng.uniform(0.6, 0.8)));
    }
    ++leg;
  }
  return j;
}

std::vector<JointDef> make_tree(int n, Rng& rng) {
  std::vector<JointDef> j(static_cast<size_t>(n));
  std::vector<Vec3> rest(static_cast<size_t>(n), Vec3::Zero());
  j[0].name = "root";
  for (int i = 1; i < n; ++i) {
    // Favor recent joints so branches grow into limbs rather than a star.
    const int lo = std::max(0, i - 4);
    const int p = lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(i - lo)));
    const Vec3 outward = rest[static_cast<size_t>(p)].norm() > 1e-9 ? Vec3(rest[static_cast<size_t>(p)]) : random_unit(rng);
    const Vec3 off = rng.uniform(0.8, 1.2) * jitter(outward, 0.9, rng);
    j[static_cast<size_t>(i)].name = "node" + std::to_string(i);
    j[static_cast<size_t>(i)].parent = p;
    j[static_cast<size_t>(i)].rest_offset = off;
    rest[static_cast<size_t>(i)] = rest[static_cast<size_t>(p)] + off;
  }
  return j;
}

struct JointMotion {
  Vec3 axis;
  double amplitude;
  double harmonic;
  double phase;
};

// Periodic local rotations and root motion, all zero at frame 0.
AnimationClip animate(int n, int label, int frames, double fps, Rng& rng) {
  double period = 24.0, amp = 0.4, root_amp = 0.25, bob = 0.0, travel = 0.0, yaw = 0.0;
  bool in_phase = false;
  int focus = -1;
  switch (label) {
    case 0:  // walk
      period = 24.0, amp = 0.45, bob = 0.03, travel = 0.1;
      break;
    case 1:  // run
      period = 14.0, amp = 0.7, bob = 0.06, travel = 0.2;
      break;
    case 2:  // jump
      period = 20.0, amp = 0.3, bob = 0.25;
      break;
    case 3:  // wave
      period = 18.0, amp = 0.15, focus = n > 1 ? 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - 1))) : -1;
      break;
    case 4:  // turn
      period = 32.0, amp = 0.2, yaw = 0.9;
      break;
    case 5:  // idle-sway
      period = 40.0, amp = 0.2, root_amp = 0.3;
      break;
    case 6:  // open-close
      period = 22.0, amp = 0.6, in_phase = true;
      break;
    default:  // swing
      period = 30.0, amp = 0.7, root_amp = 0.5;
      break;
  }
  period *= rng.uniform(0.85, 1.15);
  const double omega = 2.0 * std::numbers::pi / period;
  const Vec3 shared_axis = random_unit(rng);
  std::vector<JointMotion> m(static_cast<size_t>(n));
  for (int j = 0; j < n; ++j) {
    auto& jm = m[static_cast<size_t>(j)];
    jm.axis = in_phase ? jitter(shared_axis, 0.2, rng) : random_unit(rng);
    jm.amplitude = (j == 0 ? root_amp : amp) * rng.uniform(0.6, 1.0) * (j == focus ? 5.0 : 1.0);
    jm.harmonic = in_phase ? 1.0 : static_cast<double>(1 + rng.below(2));
    jm.phase = in_phase ? 0.0 : rng.uniform(0.0, 2.0 * std::numbers::pi);
  }
  const double travel_dir = rng.uniform(0.0, 2.0 * std::numbers::pi);

  AnimationClip clip;
  clip.fps = fps;
  for (int t = 0; t < frames; ++t) {
    Pose pose = Pose::identity(n);
    for (int j = 0; j < n; ++j) {
      const auto& jm = m[static_cast<size_t>(j)];
      const double angle = jm.amplitude * (std::sin(jm.harmonic * omega * t + jm.phase) - std::sin(jm.phase));
      pose.rotations[static_cast<size_t>(j)] = Quat(Eigen::AngleAxisd(angle, jm.axis)).normalized();
    }
    if (yaw != 0.0)
      pose.rotations[0] = (Quat(Eigen::AngleAxisd(yaw * std::sin(omega * t), Vec3::UnitZ())) * pose.rotations[0]).normalized();
    const double s = std::sin(omega * t);
    pose.root_translation = Vec3(travel * s * std::cos(travel_dir), travel * s * std::sin(travel_dir), bob * std::abs(std::sin(omega * t)));
    clip.frames.push_back(pose);
  }
  return clip;
}

// Rescales offsets and root motion so every frame fits in a sphere of radius
// `radius` centered at the origin.
void normalize_into_sphere(std::vector<JointDef>& joints, AnimationClip& clip, double radius) {
  joints[0].rest_offset = Vec3::Zero();
  const Skeleton raw(joints);
  const auto pos = clip_positions(raw, clip);
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity()), hi = -lo;
  for (const auto& p : pos) {
    lo = lo.cwiseMin(p.positions.rowwise().minCoeff());
    hi = hi.cwiseMax(p.positions.rowwise().maxCoeff());
  }
  const Vec3 center = 0.5 * (lo + hi);
  double r = 0.0;
  for (const auto& p : pos) r = std::max(r, (p.positions.colwise() - center).colwise().norm().maxCoeff());
  const double s = r > 0.0 ? radius / r : 1.0;
  for (size_t j = 1; j < joints.size(); ++j) joints[j].rest_offset *= s;
  joints[0].rest_offset = -s * center;
  for (auto& f : clip.frames) f.root_translation *= s;
}

}  // namespace

std::vector<ClipRecord> synth_clips(int count, std::uint64_t seed, const SynthOptions& options) {
  if (count < 1) throw ValidationError("synth: count must be >= 1");
  if (options.min_joints < 2 || options.max_joints < options.min_joints || options.max_joints > 20)
    throw ValidationError("synth: joint range must lie within [2, 20]");
  if (options.frames < 1 || !(options.fps > 0.0)) throw ValidationError("synth: frames and fps must be positive");
  std::vector<ClipRecord> out;
  for (int i = 0; i < count; ++i) {
    Rng rng(seed, static_cast<std::uint64_t>(i));
    const int n = options.min_joints + static_cast<int>(rng.below(static_cast<std::uint64_t>(options.max_joints - options.min_joints + 1)));
    const auto topo = static_cast<Topology>(rng.below(3));
    std::vector<JointDef> joints;
    if (topo == Topology::Quadruped && n >= 6)
      joints = make_quadruped(n, rng);
    else if (topo == Topology::Chain || n < 4)
      joints = make_chain(n, rng);
    else
      joints = make_tree(n, rng);

    ClipRecord rec;
    rec.label = static_cast<int>(rng.below(kMotionLabels.size()));
    rec.source = static_cast<SourceTag>(rng.below(kSourceCount));
    rec.clip = animate(n, rec.label, options.frames, options.fps, rng);
    normalize_into_sphere(joints, rec.clip, 0.95);
    rec.skeleton = Skeleton(std::move(joints));
    rec.motion_score = motion_score(rec.skeleton, rec.clip);
    char id[32];
    std::snprintf(id, sizeof(id), "clip%04d", i);
    rec.id = id;
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<std::vector<PoseMap>> render_sequence(const Skeleton& skeleton, const AnimationClip& clip,
                                                  const std::vector<Camera>& cameras, const ColorPalette& palette) {
  const auto pos = clip_positions(skeleton, clip);
  std::vector<std::vector<PoseMap>> maps(cameras.size());
  for (size_t v = 0; v < cameras.size(); ++v)
    for (size_t f = 0; f < pos.size(); ++f) {
      PoseMap m = render_posemap(skeleton, pos[f], cameras[v], palette);
      m.view = static_cast<int>(v);
      m.frame = static_cast<int>(f);
      maps[v].push_back(std::move(m));
    }
  return maps;
}

namespace {

std::string frame_file(int frame) {
  char name[32];
  std::snprintf(name, sizeof(name), "frame%03d.png", frame);
  return name;
}

}  // namespace

void write_dataset(const std::filesystem::path& dir, const std::vector<ClipRecord>& records,
                   const DatasetWriteOptions& options) {
  std::vector<ManifestEntry> entries;
  std::vector<Camera> cams;
  if (options.render) {
    if (options.views < 1 || options.views > 4) throw ValidationError("dataset: views must lie in [1, 4]");
    auto az = canonical_azimuths_deg();
    az.resize(static_cast<size_t>(options.views));
    cams = canonical_rig(default_rig_distance(), options.resolution, az);
    save_cameras(dir / "cameras.json", cams);
  }
  for (const auto& rec : records) {
    ManifestEntry e;
    e.id = rec.id;
    e.source = rec.source;
    e.label = rec.label;
    e.skeleton = std::filesystem::path(rec.id) / "skeleton.json";
    e.clip = std::filesystem::path(rec.id) / "clip.json";
    save_skeleton(dir / e.skeleton, rec.skeleton);
    save_clip(dir / e.clip, rec.clip);
    if (options.render) {
      e.posemaps = std::filesystem::path(rec.id) / "posemaps";
      const auto palette = make_palette(rec.skeleton.size(), options.palette_seed);
      save_palette(dir / e.posemaps / "palette.json", palette);
      save_cameras(dir / e.posemaps / "cameras.json", cams);
      const auto maps = render_sequence(rec.skeleton, rec.clip, cams, palette);
      for (size_t v = 0; v < maps.size(); ++v)
        for (const auto& m : maps[v])
          write_png(dir / e.posemaps / ("view" + std::to_string(v)) / frame_file(m.frame), m.image);
    }
    entries.push_back(std::move(e));
  }
  write_manifest(dir / "manifest.json", entries);
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries) {
  json recs = json::array();
  for (const auto& e : entries) {
    json r = {{"id", e.id},
              {"skeleton", e.skeleton.generic_string()},
              {"clip", e.clip.generic_string()},
              {"source", source_name(e.source)},
              {"label", kMotionLabels[static_cast<size_t>(e.label)]}};
    if (!e.posemaps.empty()) r["posemaps"] = e.posemaps.generic_string();
    recs.push_back(std::move(r));
  }
  write_file_atomic(path, json{{"records", recs}}.dump(2) + "\n");
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw ValidationError("manifest " + path.string() + ": " + e.what());
  }
  if (!doc.is_object() || !doc.contains("records") || !doc["records"].is_array())
    throw ValidationError("manifest " + path.string() + ": expected an object with a records array");
  const auto base = path.parent_path();
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path fp(p);
    return fp.is_absolute() ? fp : base / fp;
  };
  std::vector<ManifestEntry> out;
  for (const auto& r : doc["records"]) {
    ManifestEntry e;
    try {
      e.id = r.at("id").get<std::string>();
      e.skeleton = resolve(r.at("skeleton").get<std::string>());
      e.clip = resolve(r.at("clip").get<std::string>());
      if (r.contains("posemaps")) e.posemaps = resolve(r["posemaps"].get<std::string>());
      e.source = source_from_name(r.value("source", std::string("objaverse-like")));
      const auto label = r.value("label", std::string(kMotionLabels[0]));
      const auto it = std::find(kMotionLabels.begin(), kMotionLabels.end(), label);
      if (it == kMotionLabels.end()) throw ValidationError("manifest: unknown label '" + label + "'");
      e.label = static_cast<int>(it - kMotionLabels.begin());
    } catch (const json::exception& ex) {
      throw ValidationError("manifest " + path.string() + ": " + ex.what());
    }
    out.push_back(std::move(e));
  }
  return out;
}

ClipRecord load_record(const ManifestEntry& entry) {
  ClipRecord r;
  r.id = entry.id;
  r.skeleton = load_skeleton(entry.skeleton);
  r.clip = load_clip(entry.clip);
  r.clip.validate(r.skeleton.size());
  r.source = entry.source;
  r.label = entry.label;
  r.motion_score = motion_score(r.skeleton, r.clip);
  return r;
}

}  // namespace animax

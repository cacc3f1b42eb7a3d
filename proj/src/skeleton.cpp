#include "animax/skeleton.hpp"

#include <cmath>
#include <json.hpp>
#include <set>

#include "animax/error.hpp"
#include "animax/io_util.hpp"

namespace animax {

using nlohmann::json;

Skeleton::Skeleton(std::vector<JointDef> joints) : joints_(std::move(joints)) {
  if (joints_.empty()) throw ValidationError("skeleton: no joints");
  int roots = 0;
  std::set<std::string> names;
  for (int j = 0; j < size(); ++j) {
    const auto& jd = joints_[static_cast<size_t>(j)];
    if (!names.insert(jd.name).second) throw ValidationError("skeleton: duplicate joint name '" + jd.name + "'");
    if (!jd.rest_offset.allFinite()) throw ValidationError("skeleton: non-finite rest_offset at joint " + std::to_string(j));
    if (!jd.parent) {
      ++roots;
      root_ = j;
      continue;
    }
    const int p = *jd.parent;
    if (p < 0 || p >= j)
      throw ValidationError("skeleton: topological order violated, joint " + std::to_string(j) + " has parent " +
                            std::to_string(p));
    if (!(jd.rest_offset.norm() > 0.0))
      throw ValidationError("skeleton: zero bone rest length at joint " + std::to_string(j));
  }
  if (roots != 1) throw ValidationError("skeleton: expected exactly one root, found " + std::to_string(roots));
  children_.assign(joints_.size(), {});
  for (int j = 0; j < size(); ++j)
    if (joints_[static_cast<size_t>(j)].parent) children_[static_cast<size_t>(*joints_[static_cast<size_t>(j)].parent)].push_back(j);
}

Pose Pose::identity(int joint_count) {
  Pose p;
  p.rotations.assign(static_cast<size_t>(joint_count), Quat::Identity());
  return p;
}

void AnimationClip::validate(int joint_count) const {
  if (!(fps > 0.0) || !std::isfinite(fps)) throw ValidationError("clip: fps must be positive");
  for (size_t f = 0; f < frames.size(); ++f) {
    const auto& pose = frames[f];
    if (pose.size() != joint_count)
      throw ValidationError("clip: frame " + std::to_string(f) + " has " + std::to_string(pose.size()) +
                            " rotations, expected " + std::to_string(joint_count));
    if (!pose.root_translation.allFinite()) throw ValidationError("clip: non-finite root translation in frame " + std::to_string(f));
    for (const auto& q : pose.rotations)
      if (!(std::abs(q.norm() - 1.0) <= kUnitQuatTolerance))
        throw ValidationError("clip: non-unit quaternion in frame " + std::to_string(f));
  }
}

bool JointPositions3D::all_valid() const {
  for (bool v : valid)
    if (!v) return false;
  return true;
}

int JointPositions3D::valid_count() const {
  int n = 0;
  for (bool v : valid) n += v ? 1 : 0;
  return n;
}

std::vector<Quat> global_rotations(const Skeleton& skeleton, const Pose& pose) {
  if (pose.size() != skeleton.size())
    throw ValidationError("pose has " + std::to_string(pose.size()) + " joints, skeleton has " +
                          std::to_string(skeleton.size()));
  std::vector<Quat> global(static_cast<size_t>(skeleton.size()));
  for (int j = 0; j < skeleton.size(); ++j) {
    const auto& local = pose.rotations[static_cast<size_t>(j)];
    const int p = skeleton.parent(j);
    global[static_cast<size_t>(j)] = p < 0 ? local : global[static_cast<size_t>(p)] * local;
  }
  return global;
}

JointPositions3D forward_kinematics(const Skeleton& skeleton, const Pose& pose) {
  const auto global = global_rotations(skeleton, pose);
  JointPositions3D out(skeleton.size());
  for (int j = 0; j < skeleton.size(); ++j) {
    const auto& offset = skeleton.joint(j).rest_offset;
    const int p = skeleton.parent(j);
    if (p < 0)
      out.positions.col(j) = offset + pose.root_translation;
    else
      out.positions.col(j) = out.positions.col(p) + global[static_cast<size_t>(p)] * offset;
  }
  return out;
}

std::vector<double> bone_lengths(const Skeleton& skeleton) {
  std::vector<double> lengths;
  lengths.reserve(static_cast<size_t>(skeleton.size()));
  for (const auto& jd : skeleton.joints())
    if (jd.parent) lengths.push_back(jd.rest_offset.norm());
  return lengths;
}

double bbox_diagonal(const Eigen::Matrix3Xd& points) {
  if (points.cols() == 0) return 0.0;
  return (points.rowwise().maxCoeff() - points.rowwise().minCoeff()).norm();
}

double rest_bbox_diagonal(const Skeleton& skeleton) {
  return bbox_diagonal(forward_kinematics(skeleton, Pose::identity(skeleton.size())).positions);
}

namespace {

Vec3 vec3_from_json(const json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3) throw ValidationError(what + ": expected [x,y,z]");
  Vec3 v;
  for (int i = 0; i < 3; ++i) {
    if (!j[static_cast<size_t>(i)].is_number()) throw ValidationError(what + ": expected number");
    v[i] = j[static_cast<size_t>(i)].get<double>();
  }
  return v;
}

json vec3_to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

json parse_json(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string(what) + ": malformed JSON: " + e.what());
  }
}

}  // namespace

Skeleton skeleton_from_json_text(const std::string& text) {
  const json doc = parse_json(text, "skeleton");
  if (!doc.is_object() || !doc.contains("joints") || !doc["joints"].is_array())
    throw ValidationError("skeleton: missing 'joints' array");
  std::vector<JointDef> joints;
  for (const auto& jj : doc["joints"]) {
    JointDef jd;
    if (!jj.contains("name") || !jj["name"].is_string()) throw ValidationError("skeleton: joint without name");
    jd.name = jj["name"].get<std::string>();
    if (jj.contains("parent") && !jj["parent"].is_null()) {
      if (!jj["parent"].is_number_integer()) throw ValidationError("skeleton: parent must be int or null");
      jd.parent = jj["parent"].get<int>();
    }
    if (!jj.contains("rest_offset")) throw ValidationError("skeleton: joint '" + jd.name + "' without rest_offset");
    jd.rest_offset = vec3_from_json(jj["rest_offset"], "skeleton rest_offset");
    joints.push_back(std::move(jd));
  }
  return Skeleton(std::move(joints));
}

std::string skeleton_to_json_text(const Skeleton& skeleton) {
  json joints = json::array();
  for (const auto& jd : skeleton.joints()) {
    json jj;
    jj["name"] = jd.name;
    jj["parent"] = jd.parent ? json(*jd.parent) : json(nullptr);
    jj["rest_offset"] = vec3_to_json(jd.rest_offset);
    joints.push_back(std::move(jj));
  }
  return json{{"joints", std::move(joints)}}.dump(2) + "\n";
}

AnimationClip clip_from_json_text(const std::string& text) {
  const json doc = parse_json(text, "clip");
  if (!doc.is_object() || !doc.contains("fps") || !doc["fps"].is_number() || !doc.contains("frames") ||
      !doc["frames"].is_array())
    throw ValidationError("clip: expected {\"fps\":number,\"frames\":[...]}");
  AnimationClip clip;
  clip.fps = doc["fps"].get<double>();
  for (const auto& fj : doc["frames"]) {
    Pose pose;
    if (!fj.contains("root_translation") || !fj.contains("rotations") || !fj["rotations"].is_array())
      throw ValidationError("clip: frame without root_translation/rotations");
    pose.root_translation = vec3_from_json(fj["root_translation"], "clip root_translation");
    for (const auto& qj : fj["rotations"]) {
      if (!qj.is_array() || qj.size() != 4) throw ValidationError("clip: rotation must be [w,x,y,z]");
      pose.rotations.emplace_back(qj[0].get<double>(), qj[1].get<double>(), qj[2].get<double>(), qj[3].get<double>());
    }
    clip.frames.push_back(std::move(pose));
  }
  const int joints = clip.frames.empty() ? 0 : clip.frames.front().size();
  clip.validate(joints);
  return clip;
}

std::string clip_to_json_text(const AnimationClip& clip) {
  json frames = json::array();
  for (const auto& pose : clip.frames) {
    json rots = json::array();
    for (const auto& q : pose.rotations) rots.push_back(json::array({q.w(), q.x(), q.y(), q.z()}));
    frames.push_back(json{{"root_translation", vec3_to_json(pose.root_translation)}, {"rotations", std::move(rots)}});
  }
  return json{{"fps", clip.fps}, {"frames", std::move(frames)}}.dump() + "\n";
}

Skeleton load_skeleton(const std::filesystem::path& path) { return skeleton_from_json_text(read_text_file(path)); }

void save_skeleton(const std::filesystem::path& path, const Skeleton& skeleton) {
  write_file_atomic(path, skeleton_to_json_text(skeleton));
}

AnimationClip load_clip(const std::filesystem::path& path) { return clip_from_json_text(read_text_file(path)); }

void save_clip(const std::filesystem::path& path, const AnimationClip& clip) {
  write_file_atomic(path, clip_to_json_text(clip));
}

}  // namespace animax

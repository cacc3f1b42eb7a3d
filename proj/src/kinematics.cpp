#include "animax/kinematics.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <json.hpp>

#include "animax/error.hpp"

namespace animax {

template <typename Scalar>
Eigen::Quaternion<Scalar> rotation_between(const Eigen::Matrix<Scalar, 3, 1>& from, const Eigen::Matrix<Scalar, 3, 1>& to) {
  using V = Eigen::Matrix<Scalar, 3, 1>;
  const Scalar nf = from.norm(), nt = to.norm();
  if (!(nf > Scalar(0)) || !(nt > Scalar(0))) throw ValidationError("rotation_between: degenerate (zero-length) direction");
  if (std::abs(nf - Scalar(1)) > Scalar(1e-6) || std::abs(nt - Scalar(1)) > Scalar(1e-6))
    throw ValidationError("rotation_between: directions must be unit length");
  const V a = from / nf, b = to / nt;
  const Scalar c = a.dot(b);
  if (c < Scalar(-1) + Scalar(1e-12)) {
    Eigen::Index k = 0;
    a.cwiseAbs().minCoeff(&k);
    const V axis = a.cross(V::Unit(k)).normalized();
    return Eigen::Quaternion<Scalar>(Scalar(0), axis.x(), axis.y(), axis.z());
  }
  // q = (1 + c, a x b) normalized is the half-angle form of the shortest arc.
  const V axis = a.cross(b);
  Eigen::Quaternion<Scalar> q(Scalar(1) + c, axis.x(), axis.y(), axis.z());
  q.normalize();
  return q;
}

template Eigen::Quaternion<double> rotation_between(const Eigen::Matrix<double, 3, 1>&, const Eigen::Matrix<double, 3, 1>&);
template Eigen::Quaternion<float> rotation_between(const Eigen::Matrix<float, 3, 1>&, const Eigen::Matrix<float, 3, 1>&);

namespace {

// Rotation R minimizing sum w |R a_i - b_i|^2.
Mat3 orthogonal_alignment(const std::vector<Vec3>& a, const std::vector<Vec3>& b, const std::vector<double>& w) {
  Mat3 cov = Mat3::Zero();
  for (size_t i = 0; i < a.size(); ++i) cov += w[i] * b[i] * a[i].transpose();
  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  return svd.matrixU() * d * svd.matrixV().transpose();
}

}  // namespace

IkFrameResult solve_frame(const Skeleton& skeleton, const JointPositions3D& templ, const JointPositions3D& target) {
  const int n = skeleton.size();
  if (templ.size() != n || target.size() != n) throw ValidationError("solve_frame: joint count mismatch");

  IkFrameResult res;
  res.pose = Pose::identity(n);
  const int root = skeleton.root_index();
  if (target.valid[static_cast<size_t>(root)])
    res.pose.root_translation = target.positions.col(root) - templ.positions.col(root);

  std::vector<Quat> global(static_cast<size_t>(n), Quat::Identity());
  Eigen::Matrix3Xd pos(3, n);
  for (int j = 0; j < n; ++j) {
    const int p = skeleton.parent(j);
    const Quat parent_rot = p < 0 ? Quat::Identity() : global[static_cast<size_t>(p)];
    pos.col(j) = p < 0 ? Vec3(skeleton.joint(j).rest_offset + res.pose.root_translation)
                       : Vec3(pos.col(p) + parent_rot * skeleton.joint(j).rest_offset);

    // Rest-frame child directions versus target directions seen from where the
    // joint actually sits.
    std::vector<Vec3> from, to;
    std::vector<double> weight;
    for (int c : skeleton.children(j)) {
      if (!target.valid[static_cast<size_t>(c)]) continue;
      const Vec3 d = target.positions.col(c) - pos.col(j);
      if (d.norm() < 1e-12) continue;
      const Vec3& offset = skeleton.joint(c).rest_offset;
      from.push_back(parent_rot * offset.normalized());
      to.push_back(d.normalized());
      weight.push_back(offset.norm());
    }

    Quat delta = Quat::Identity();  // world-frame correction applied on top of parent_rot
    if (from.size() == 1) {
      delta = rotation_between<double>(from[0], to[0]);
    } else if (from.size() > 1) {
      Mat3 cov = Mat3::Zero();
      for (size_t i = 0; i < from.size(); ++i) cov += weight[i] * to[i] * from[i].transpose();
      Eigen::JacobiSVD<Mat3> svd(cov);
      const auto sv = svd.singularValues();
      if (sv(1) > 1e-9 * sv(0)) {
        delta = Quat(orthogonal_alignment(from, to, weight));
      } else {
        // Collinear children only pin the shared axis.
        Vec3 mf = Vec3::Zero(), mt = Vec3::Zero();
        for (size_t i = 0; i < from.size(); ++i) {
          mf += weight[i] * from[i];
          mt += weight[i] * to[i];
        }
        if (mf.norm() > 1e-12 && mt.norm() > 1e-12) delta = rotation_between<double>(mf.normalized(), mt.normalized());
      }
    }
    const Quat g = (delta * parent_rot).normalized();
    global[static_cast<size_t>(j)] = g;
    res.pose.rotations[static_cast<size_t>(j)] = (parent_rot.conjugate() * g).normalized();
  }

  const auto fk = forward_kinematics(skeleton, res.pose);
  res.residuals.assign(static_cast<size_t>(n), 0.0);
  for (int j = 0; j < n; ++j)
    if (target.valid[static_cast<size_t>(j)])
      res.residuals[static_cast<size_t>(j)] = (fk.positions.col(j) - target.positions.col(j)).norm();
  return res;
}

IkClipResult solve_clip(const Skeleton& skeleton, const JointPositions3D& templ, std::span<const JointPositions3D> targets,
                        double fps) {
  if (targets.empty()) throw ValidationError("solve_clip: no target frames");
  if (!(fps > 0.0)) throw ValidationError("solve_clip: fps must be positive");
  IkClipResult out;
  out.clip.fps = fps;
  for (size_t f = 0; f < targets.size(); ++f) {
    IkFrameResult fr;
    if (targets[f].valid_count() == 0) {
      fr.pose = f == 0 ? Pose::identity(skeleton.size()) : out.clip.frames.back();
      fr.residuals.assign(static_cast<size_t>(skeleton.size()), 0.0);
      fr.used_fallback = true;
    } else {
      try {
        fr = solve_frame(skeleton, templ, targets[f]);
      } catch (const Error& e) {
        throw ValidationError("solve_clip: frame " + std::to_string(f) + ": " + e.what());
      }
    }
    out.clip.frames.push_back(fr.pose);
    out.frames.push_back(std::move(fr));
  }
  return out;
}

std::string ik_report_json(const IkClipResult& result) {
  nlohmann::json frames = nlohmann::json::array();
  for (size_t f = 0; f < result.frames.size(); ++f) {
    double max_res = 0.0;
    for (double r : result.frames[f].residuals) max_res = std::max(max_res, r);
    frames.push_back({{"frame", f}, {"max_residual", max_res}, {"fallback", result.frames[f].used_fallback}});
  }
  return nlohmann::json{{"frames", frames}}.dump();
}

}  // namespace animax

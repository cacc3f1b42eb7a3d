#include "animax/reconstruct.hpp"

#include <Eigen/Cholesky>
#include <Eigen/SVD>
#include <cmath>
#include <json.hpp>
#include <limits>

#include "animax/error.hpp"

namespace animax {

namespace {

// Observations with depth below this are treated as behind the camera.
constexpr double kMinDepth = 1e-9;

bool observed(const Joints2D& obs, int j) { return obs.valid[static_cast<size_t>(j)]; }

// Residual vector and (optionally) Jacobian over all 3J coordinates.
struct Linearization {
  Eigen::VectorXd residuals;
  Eigen::MatrixXd jacobian;
  bool finite = true;
};

Linearization linearize(const TriangulationProblem& pb, const Eigen::Matrix3Xd& x, bool with_jacobian) {
  const int n = pb.skeleton.size();
  int rows = 0;
  for (const auto& obs : pb.observations)
    for (int j = 0; j < n; ++j) rows += observed(obs, j) ? 2 : 0;
  const bool use_bones = pb.lambda_bone > 0.0;
  if (use_bones) rows += n - 1;

  Linearization lin;
  lin.residuals.setZero(rows);
  if (with_jacobian) lin.jacobian.setZero(rows, 3 * n);

  int row = 0;
  for (int v = 0; v < pb.view_count(); ++v) {
    const Camera& cam = pb.cameras[static_cast<size_t>(v)];
    const Joints2D& obs = pb.observations[static_cast<size_t>(v)];
    for (int j = 0; j < n; ++j) {
      if (!observed(obs, j)) continue;
      const Vec3 pc = cam.to_camera(x.col(j));
      if (!(pc.z() > kMinDepth)) {
        lin.finite = false;
        return lin;
      }
      lin.residuals.segment<2>(row) = project_camera_point<double>(cam, pc) - obs.positions.col(j);
      if (with_jacobian) {
        const double iz = 1.0 / pc.z();
        Eigen::Matrix<double, 2, 3> dproj;
        dproj << cam.fx() * iz, 0.0, -cam.fx() * pc.x() * iz * iz, 0.0, cam.fy() * iz, -cam.fy() * pc.y() * iz * iz;
        lin.jacobian.block<2, 3>(row, 3 * j) = dproj * cam.rotation();
      }
      row += 2;
    }
  }
  if (use_bones) {
    const double k = std::sqrt(pb.lambda_bone) * pb.effective_bone_scale();
    for (int j = 0; j < n; ++j) {
      const int p = pb.skeleton.parent(j);
      if (p < 0) continue;
      const Vec3 d = x.col(j) - x.col(p);
      const double len = d.norm();
      lin.residuals(row) = k * (len - pb.skeleton.joint(j).rest_offset.norm());
      if (with_jacobian && len > 0.0) {
        const Vec3 g = k * d / len;
        lin.jacobian.block<1, 3>(row, 3 * j) = g.transpose();
        lin.jacobian.block<1, 3>(row, 3 * p) = -g.transpose();
      }
      ++row;
    }
  }
  lin.finite = lin.residuals.allFinite();
  return lin;
}

double squared_cost(const Linearization& lin) {
  return lin.finite ? lin.residuals.squaredNorm() : std::numeric_limits<double>::infinity();
}

void fill_metrics(const TriangulationProblem& pb, TriangulationResult& res) {
  const auto& x = res.positions.positions;
  double sum = 0.0;
  int count = 0;
  for (int v = 0; v < pb.view_count(); ++v) {
    const auto& obs = pb.observations[static_cast<size_t>(v)];
    for (int j = 0; j < pb.skeleton.size(); ++j) {
      if (!observed(obs, j)) continue;
      const Vec3 pc = pb.cameras[static_cast<size_t>(v)].to_camera(x.col(j));
      sum += (project_camera_point<double>(pb.cameras[static_cast<size_t>(v)], pc) - obs.positions.col(j)).squaredNorm();
      ++count;
    }
  }
  res.reprojection_rms_px = count ? std::sqrt(sum / count) : 0.0;
  double bsum = 0.0;
  int bones = 0;
  for (int j = 0; j < pb.skeleton.size(); ++j) {
    const int p = pb.skeleton.parent(j);
    if (p < 0) continue;
    const double e = (x.col(j) - x.col(p)).norm() - pb.skeleton.joint(j).rest_offset.norm();
    bsum += e * e;
    ++bones;
  }
  res.bone_rms = bones ? std::sqrt(bsum / bones) : 0.0;
}

}  // namespace

double TriangulationProblem::effective_bone_scale() const {
  if (bone_scale > 0.0) return bone_scale;
  double h = 0.0;
  for (const auto& c : cameras) h += c.height();
  return (cameras.empty() ? 1.0 : h / static_cast<double>(cameras.size())) / scene_scale;
}

void TriangulationProblem::validate() const {
  if (cameras.size() < 2) throw ValidationError("triangulation: at least two views required");
  if (observations.size() != cameras.size()) throw ValidationError("triangulation: one observation set per camera required");
  for (const auto& obs : observations)
    if (obs.size() != skeleton.size() || obs.valid.size() != static_cast<size_t>(skeleton.size()))
      throw ValidationError("triangulation: observation joint count does not match skeleton");
  if (!(lambda_bone >= 0.0)) throw ValidationError("triangulation: lambda_bone must be nonnegative");
  if (!(scene_scale > 0.0)) throw ValidationError("triangulation: scene_scale must be positive");
}

Vec3 dlt_triangulate(std::span<const Joints2D> observations, std::span<const Camera> cameras, int joint) {
  if (observations.size() != cameras.size()) throw ValidationError("dlt_triangulate: views mismatch");
  std::vector<size_t> views;
  for (size_t v = 0; v < observations.size(); ++v)
    if (observed(observations[v], joint)) views.push_back(v);
  if (views.size() < 2)
    throw ValidationError("dlt_triangulate: joint " + std::to_string(joint) + " underdetermined (" +
                          std::to_string(views.size()) + " valid views)");

  // Rows in normalized image coordinates: x * (r3.X + t3) - (r1.X + t1) = 0.
  Eigen::MatrixXd a(2 * static_cast<Eigen::Index>(views.size()), 4);
  for (size_t i = 0; i < views.size(); ++i) {
    const Camera& cam = cameras[views[i]];
    const Vec2 px = observations[views[i]].positions.col(joint);
    const double xn = (px.x() - cam.cx()) / cam.fx();
    const double yn = (px.y() - cam.cy()) / cam.fy();
    Eigen::Matrix<double, 3, 4> rt;
    rt << cam.rotation(), cam.translation();
    a.row(static_cast<Eigen::Index>(2 * i)) = xn * rt.row(2) - rt.row(0);
    a.row(static_cast<Eigen::Index>(2 * i + 1)) = yn * rt.row(2) - rt.row(1);
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::Vector4d h = svd.matrixV().col(3);
  if (std::abs(h(3)) < 1e-14 * h.head<3>().norm()) throw NumericalError("dlt_triangulate: point at infinity");
  return h.head<3>() / h(3);
}

double triangulation_cost(const TriangulationProblem& problem, const Eigen::Matrix3Xd& positions) {
  return squared_cost(linearize(problem, positions, false));
}

TriangulationResult refine(const TriangulationProblem& problem, const JointPositions3D& init, const LmOptions& options) {
  problem.validate();
  if (init.size() != problem.skeleton.size()) throw ValidationError("refine: init joint count mismatch");
  if (!init.positions.allFinite()) throw ValidationError("refine: init not finite");

  const int n = problem.skeleton.size();
  Eigen::Matrix3Xd x = init.positions;
  Linearization lin = linearize(problem, x, true);
  double cost = squared_cost(lin);
  if (!std::isfinite(cost)) throw NumericalError("refine: initial cost is not finite (joint behind a camera?)");

  TriangulationResult res;
  res.initial_cost = cost;
  Eigen::MatrixXd h = lin.jacobian.transpose() * lin.jacobian;
  Eigen::VectorXd g = lin.jacobian.transpose() * lin.residuals;
  const double max_diag = h.diagonal().maxCoeff();
  double mu = options.initial_damping * (max_diag > 0.0 ? max_diag : 1.0);

  int it = 0;
  for (; it < options.max_iterations; ++it) {
    if (g.lpNorm<Eigen::Infinity>() < options.gradient_tolerance) {
      res.converged = true;
      break;
    }
    Eigen::MatrixXd damped = h;
    damped.diagonal().array() += mu;
    const Eigen::VectorXd step = damped.ldlt().solve(-g);
    if (!step.allFinite()) throw NumericalError("refine: non-finite step at iteration " + std::to_string(it));
    Eigen::Matrix3Xd trial = x + Eigen::Map<const Eigen::Matrix3Xd>(step.data(), 3, n);
    Linearization trial_lin = linearize(problem, trial, true);
    const double trial_cost = squared_cost(trial_lin);
    if (std::isnan(trial_cost)) throw NumericalError("refine: NaN cost at iteration " + std::to_string(it));
    if (trial_cost < cost) {
      const double decrease = (cost - trial_cost) / cost;
      x = trial;
      cost = trial_cost;
      lin = std::move(trial_lin);
      h = lin.jacobian.transpose() * lin.jacobian;
      g = lin.jacobian.transpose() * lin.residuals;
      mu /= 3.0;
      if (decrease < options.relative_cost_tolerance) {
        res.converged = true;
        ++it;
        break;
      }
    } else {
      mu *= 2.0;
      if (mu > 1e30 * (1.0 + max_diag)) {
        res.converged = true;  // no descent direction left at machine precision
        ++it;
        break;
      }
    }
  }
  res.iterations = it;
  res.final_cost = cost;
  res.positions = JointPositions3D(n);
  res.positions.positions = x;
  fill_metrics(problem, res);
  return res;
}

TriangulationResult triangulate_frame(const TriangulationProblem& problem, const LmOptions& options) {
  problem.validate();
  const int n = problem.skeleton.size();
  std::vector<int> view_count(static_cast<size_t>(n), 0);
  int total = 0;
  for (const auto& obs : problem.observations)
    for (int j = 0; j < n; ++j)
      if (observed(obs, j)) {
        ++view_count[static_cast<size_t>(j)];
        ++total;
      }
  if (total == 0) throw ValidationError("triangulate_frame: empty observations (no joint visible in any view)");

  JointPositions3D init(n);
  std::vector<bool> known(static_cast<size_t>(n), false);
  for (int j = 0; j < n; ++j) {
    if (view_count[static_cast<size_t>(j)] < 2) continue;
    init.positions.col(j) = dlt_triangulate(problem.observations, problem.cameras, j);
    known[static_cast<size_t>(j)] = true;
  }

  const int root = problem.skeleton.root_index();
  if (!known[static_cast<size_t>(root)]) {
    init.positions.col(root) = problem.skeleton.joint(root).rest_offset;
    for (int c : problem.skeleton.children(root))
      if (known[static_cast<size_t>(c)]) {
        init.positions.col(root) = init.positions.col(c) - problem.skeleton.joint(c).rest_offset;
        break;
      }
  }
  // Kinematic prior for under-observed joints; with a single view the prior is
  // slid along that view's ray to its own depth.
  for (int j = 0; j < n; ++j) {
    if (known[static_cast<size_t>(j)]) continue;
    const int p = problem.skeleton.parent(j);
    Vec3 prior = p < 0 ? Vec3(init.positions.col(j)) : Vec3(init.positions.col(p) + problem.skeleton.joint(j).rest_offset);
    if (view_count[static_cast<size_t>(j)] == 1) {
      for (int v = 0; v < problem.view_count(); ++v) {
        if (!observed(problem.observations[static_cast<size_t>(v)], j)) continue;
        const Camera& cam = problem.cameras[static_cast<size_t>(v)];
        double depth = cam.to_camera(prior).z();
        if (!(depth > kMinDepth)) depth = cam.center().norm();
        prior = unproject(cam, problem.observations[static_cast<size_t>(v)].positions.col(j), depth);
      }
    }
    init.positions.col(j) = prior;
  }
  return refine(problem, init, options);
}

std::string frame_report_json(int frame, const TriangulationResult& result) {
  return nlohmann::json{{"frame", frame},
                        {"reproj_rms_px", result.reprojection_rms_px},
                        {"bone_rms", result.bone_rms},
                        {"iterations", result.iterations},
                        {"converged", result.converged}}
      .dump();
}

}  // namespace animax

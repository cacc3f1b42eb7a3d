#include <doctest.h>

#include <Eigen/Geometry>

#include "animax/datakit.hpp"
#include "animax/error.hpp"
#include "animax/reconstruct.hpp"
#include "test_support.hpp"

using namespace animax;
using animax::testing::random_pose;
using animax::testing::random_skeleton;

namespace {

std::vector<Joints2D> observe(const std::vector<Camera>& cams, const JointPositions3D& pos, Rng* noise = nullptr,
                              double sigma = 0.0) {
  std::vector<Joints2D> obs;
  for (const auto& cam : cams) {
    Joints2D o(pos.size());
    for (int j = 0; j < pos.size(); ++j) {
      o.positions.col(j) = project(cam, pos.positions.col(j)).pixel;
      if (noise) o.positions.col(j) += sigma * Vec2(noise->normal(), noise->normal());
      o.valid[size_t(j)] = true;
    }
    obs.push_back(o);
  }
  return obs;
}

// A posed skeleton squeezed into the unit sphere (rest offsets rescaled so bone
// lengths stay consistent with the pose).
std::pair<Skeleton, JointPositions3D> scene(int n, Rng& rng, bool chain) {
  const Skeleton raw = random_skeleton(n, rng, chain);
  const Pose pose = random_pose(n, rng);
  const auto fk = forward_kinematics(raw, pose);
  const Vec3 c = fk.positions.rowwise().mean();
  const double r = std::max(1e-6, (fk.positions.colwise() - c).colwise().norm().maxCoeff());
  const double s = 0.8 / r;
  std::vector<JointDef> joints;
  for (int j = 0; j < n; ++j) {
    JointDef d = raw.joint(j);
    d.rest_offset *= s;
    joints.push_back(d);
  }
  joints[0].rest_offset -= s * c;
  Pose scaled = pose;
  scaled.root_translation *= s;
  Skeleton sk(std::move(joints));
  return {sk, forward_kinematics(sk, scaled)};
}

std::vector<Camera> rig() { return canonical_rig(default_rig_distance(), 512); }

double max_bone_deviation(const Skeleton& s, const Eigen::Matrix3Xd& p) {
  const auto rest = bone_lengths(s);
  double worst = 0.0;
  size_t b = 0;
  for (int j = 0; j < s.size(); ++j) {
    if (s.parent(j) < 0) continue;
    worst = std::max(worst, std::abs((p.col(j) - p.col(s.parent(j))).norm() - rest[b]) / rest[b]);
    ++b;
  }
  return worst;
}

}  // namespace

TEST_CASE("DLT: origin at the image center of every canonical view") {
  const auto cams = rig();
  std::vector<Joints2D> obs(4, Joints2D(1));
  for (auto& o : obs) {
    o.positions.col(0) = Vec2(256, 256);
    o.valid[0] = true;
  }
  CHECK(dlt_triangulate(obs, cams, 0).norm() < 1e-9);
}

TEST_CASE("DLT recovers exact projections from two views") {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const Camera a = look_at(Vec3(rng.uniform(2, 4), rng.uniform(-1, 1), rng.uniform(-1, 1)), Vec3::Zero(), Vec3::UnitZ(),
                             500, 500, 256, 256, 512, 512);
    const Camera b = look_at(Vec3(rng.uniform(-1, 1), rng.uniform(2, 4), rng.uniform(-1, 1)), Vec3::Zero(), Vec3::UnitZ(),
                             500, 500, 256, 256, 512, 512);
    JointPositions3D p(1);
    p.positions.col(0) = Vec3(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5));
    const std::vector<Camera> cams{a, b};
    const Vec3 x = dlt_triangulate(observe(cams, p), cams, 0);
    CHECK((x - p.positions.col(0)).norm() <= 1e-7 * std::max(1.0, p.positions.col(0).norm()));
  }
}

TEST_CASE("DLT error under half-pixel noise stays near the back-projection uncertainty") {
  const auto cams = canonical_rig(3.0, 512);
  Rng rng(5);
  // A 0.5 px shift at depth ~3 moves the ray by 0.5 * 3 / fx model units.
  const double single_ray = 0.5 * 3.0 / cams[0].fx();
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    JointPositions3D p(1);
    p.positions.col(0) = Vec3(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5));
    const Vec3 x = dlt_triangulate(observe(cams, p, &rng, 0.5), cams, 0);
    worst = std::max(worst, (x - p.positions.col(0)).norm());
  }
  CHECK(worst < 10.0 * single_ray);
}

TEST_CASE("DLT needs two views") {
  const auto cams = rig();
  std::vector<Joints2D> obs(4, Joints2D(1));
  obs[2].valid[0] = true;
  CHECK_THROWS_AS(dlt_triangulate(obs, cams, 0), ValidationError);
}

TEST_CASE("refine reaches ground truth on exact observations without the bone term") {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    auto [s, gt] = scene(2 + int(rng.below(10)), rng, false);
    TriangulationProblem prob{observe(rig(), gt), rig(), s, 0.0};
    JointPositions3D init = gt;
    init.positions += 0.05 * Eigen::Matrix3Xd::Random(3, gt.size());
    const auto r = refine(prob, init);
    CHECK(r.final_cost < 1e-12);
    CHECK(r.final_cost <= r.initial_cost);
    CHECK((r.positions.positions - gt.positions).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(triangulation_cost(prob, gt.positions) < 1e-18);
  }
}

TEST_CASE("cost matches a direct evaluation") {
  Rng rng(12);
  auto [s, gt] = scene(5, rng, false);
  TriangulationProblem prob{observe(rig(), gt, &rng, 2.0), rig(), s, 7.0};
  Eigen::Matrix3Xd p = gt.positions + 0.02 * Eigen::Matrix3Xd::Random(3, 5);
  double expect = 0.0;
  for (int v = 0; v < 4; ++v)
    for (int j = 0; j < 5; ++j) expect += (project(prob.cameras[size_t(v)], p.col(j)).pixel - prob.observations[size_t(v)].positions.col(j)).squaredNorm();
  const double kappa = 512.0 / 1.0;
  CHECK(prob.effective_bone_scale() == doctest::Approx(kappa));
  const auto rest = bone_lengths(s);
  size_t b = 0;
  for (int j = 1; j < 5; ++j) {
    const double e = kappa * ((p.col(j) - p.col(s.parent(j))).norm() - rest[b++]);
    expect += 7.0 * e * e;
  }
  CHECK(triangulation_cost(prob, p) == doctest::Approx(expect).epsilon(1e-12));
  // Invalid observations carry no weight.
  prob.observations[1].valid[3] = false;
  const double dropped = (project(prob.cameras[1], p.col(3)).pixel - prob.observations[1].positions.col(3)).squaredNorm();
  CHECK(triangulation_cost(prob, p) == doctest::Approx(expect - dropped).epsilon(1e-12));
}

TEST_CASE("a strong bone term holds rest lengths under noise") {
  Rng rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    auto [s, gt] = scene(3 + int(rng.below(10)), rng, false);
    TriangulationProblem prob{observe(rig(), gt, &rng, 1.0), rig(), s, 1000.0};
    const auto r = triangulate_frame(prob);
    CHECK(max_bone_deviation(s, r.positions.positions) < 0.01);
  }
}

TEST_CASE("LM beats a brute-force grid on a two-joint problem") {
  Rng rng(14);
  auto [s, gt] = scene(2, rng, true);
  TriangulationProblem prob{observe(rig(), gt, &rng, 1.5), rig(), s, 100.0};
  const auto r = triangulate_frame(prob);
  // Grid over the child around the LM solution with the root held at its optimum.
  double grid_best = std::numeric_limits<double>::infinity();
  Eigen::Matrix3Xd p = r.positions.positions;
  const Vec3 c = p.col(1);
  for (int a = -10; a <= 10; ++a)
    for (int b = -10; b <= 10; ++b)
      for (int d = -10; d <= 10; ++d) {
        p.col(1) = c + 1e-3 * Vec3(a, b, d);
        grid_best = std::min(grid_best, triangulation_cost(prob, p));
      }
  CHECK(r.final_cost <= grid_best + 1e-9 * grid_best);
}

TEST_CASE("refine is monotone and deterministic") {
  Rng rng(15);
  for (int trial = 0; trial < 30; ++trial) {
    auto [s, gt] = scene(2 + int(rng.below(15)), rng, false);
    TriangulationProblem prob{observe(rig(), gt, &rng, 3.0), rig(), s, 100.0};
    JointPositions3D init = gt;
    init.positions += 0.1 * Eigen::Matrix3Xd::Random(3, gt.size());
    const auto a = refine(prob, init);
    const auto b = refine(prob, init);
    CHECK(a.final_cost <= triangulation_cost(prob, init.positions));
    CHECK(a.positions.positions == b.positions.positions);
    CHECK(a.iterations == b.iterations);
  }
}

TEST_CASE("reconstruction is equivariant under a global rotation of the rig") {
  Rng rng(16);
  auto [s, gt] = scene(6, rng, false);
  const Mat3 R = animax::testing::random_rotation(rng).toRotationMatrix();
  std::vector<Camera> rotated;
  for (const auto& c : rig()) rotated.emplace_back(c.rotation() * R.transpose(), c.translation(), c.fx(), c.fy(), c.cx(), c.cy(), c.width(), c.height());
  const auto obs = observe(rig(), gt, &rng, 1.0);
  const auto a = triangulate_frame({obs, rig(), s, 100.0});
  const auto b = triangulate_frame({obs, rotated, s, 100.0});
  CHECK((R * a.positions.positions - b.positions.positions).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("triangulate_frame: exact views and a dropped view") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    auto [s, gt] = scene(4 + int(rng.below(10)), rng, false);
    TriangulationProblem full{observe(rig(), gt), rig(), s, 100.0};
    const auto r = triangulate_frame(full);
    CHECK(r.reprojection_rms_px < 1e-6);

    TriangulationProblem three = full;
    three.observations.pop_back();
    three.cameras.pop_back();
    const auto r3 = triangulate_frame(three);
    CHECK((r3.positions.positions - gt.positions).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(max_bone_deviation(s, r3.positions.positions) < 1e-6);
  }

  TriangulationProblem none{std::vector<Joints2D>(4, Joints2D(3)), rig(), random_skeleton(3, rng, true), 100.0};
  CHECK_THROWS_AS(triangulate_frame(none), ValidationError);
  TriangulationProblem one_view{{Joints2D(3)}, {rig()[0]}, random_skeleton(3, rng, true), 100.0};
  CHECK_THROWS_AS(one_view.validate(), ValidationError);
}

TEST_CASE("a joint seen in one view is recovered through the bone prior on synthetic clips") {
  Rng rng(18);
  int recovered = 0, trials = 0;
  for (const auto& rec : synth_clips(25, 0)) {
    const auto frames = clip_positions(rec.skeleton, rec.clip);
    const auto& gt = frames[size_t(rng.below(frames.size()))];
    const double diag = rest_bbox_diagonal(rec.skeleton);
    const int j = 1 + int(rng.below(size_t(rec.skeleton.size() - 1)));
    TriangulationProblem prob{observe(rig(), gt), rig(), rec.skeleton, 100.0};
    for (int v = 1; v < 4; ++v) prob.observations[size_t(v)].valid[size_t(j)] = false;
    const auto r = triangulate_frame(prob);
    ++trials;
    if ((r.positions.positions.col(j) - gt.positions.col(j)).norm() < 0.05 * diag) ++recovered;
  }
  MESSAGE("recovered " << recovered << " / " << trials);
  CHECK(recovered == trials);
}

TEST_CASE("frame report carries the documented keys") {
  TriangulationResult r;
  r.reprojection_rms_px = 0.25;
  r.iterations = 3;
  r.converged = true;
  const std::string text = frame_report_json(4, r);
  for (const char* key : {"\"frame\":4", "\"reproj_rms_px\"", "\"bone_rms\"", "\"iterations\":3", "\"converged\":true"})
    CHECK(text.find(key) != std::string::npos);
}

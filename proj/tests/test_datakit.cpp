#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "animax/datakit.hpp"
#include "animax/error.hpp"
#include "animax/pipeline.hpp"
#include "test_support.hpp"

using namespace animax;

namespace {

// Two-joint record: the tip swings about Z by `amplitude` radians over the clip.
ClipRecord swing_record(int frames, double amplitude) {
  ClipRecord r;
  r.id = "swing";
  r.skeleton = Skeleton({{"root", std::nullopt, Vec3::Zero()}, {"tip", 0, Vec3(0.5, 0, 0)}});
  for (int f = 0; f < frames; ++f) {
    Pose p = Pose::identity(2);
    p.rotations[0] = Quat(Eigen::AngleAxisd(amplitude * std::sin(0.3 * f), Vec3::UnitZ()));
    r.clip.frames.push_back(p);
  }
  r.motion_score = motion_score(r.skeleton, r.clip);
  return r;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("filter: frame count and motion thresholds") {
  const auto short_clip = filter_clip(swing_record(16, 0.5));
  CHECK_FALSE(short_clip.accepted);
  CHECK(short_clip.reason == "frame_count");
  CHECK(filter_clip(swing_record(17, 0.5)).accepted);
  const auto still = filter_clip(swing_record(17, 0.0));
  CHECK_FALSE(still.accepted);
  CHECK(still.reason == "motion");
  FilterOptions loose;
  loose.min_frames = 4;
  loose.min_motion = 0.0;
  CHECK(filter_clip(swing_record(5, 0.0), loose).accepted);
}

TEST_CASE("filtering is idempotent") {
  auto recs = synth_clips(20, 3);
  recs.push_back(swing_record(10, 0.5));
  recs.push_back(swing_record(30, 0.0));
  std::vector<ClipRecord> once, twice;
  for (const auto& r : recs)
    if (filter_clip(r).accepted) once.push_back(r);
  for (const auto& r : once)
    if (filter_clip(r).accepted) twice.push_back(r);
  CHECK(once.size() == 20);
  CHECK(twice.size() == once.size());
}

TEST_CASE("motion score: oracle and time-reversal symmetry") {
  const auto r = swing_record(20, 0.4);
  const auto pos = clip_positions(r.skeleton, r.clip);
  double sum = 0.0;
  for (size_t t = 1; t < pos.size(); ++t)
    for (int j = 0; j < 2; ++j) sum += (pos[t].positions.col(j) - pos[t - 1].positions.col(j)).norm();
  CHECK(r.motion_score == doctest::Approx(sum / (19.0 * 2.0)).epsilon(1e-12));
  for (const auto& rec : synth_clips(10, 4)) {
    AnimationClip rev = rec.clip;
    std::reverse(rev.frames.begin(), rev.frames.end());
    CHECK(motion_score(rec.skeleton, rev) == doctest::Approx(rec.motion_score).epsilon(1e-12));
  }
  AnimationClip one;
  one.frames.push_back(Pose::identity(2));
  CHECK(motion_score(r.skeleton, one) == 0.0);
}

TEST_CASE("weighted sampler matches the configured frequencies") {
  std::vector<int> sources;
  for (int i = 0; i < 30; ++i) sources.push_back(i % 3);
  WeightedSampler s(sources, SamplerConfig{}, 11);
  std::array<int, 3> counts{};
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++counts[size_t(sources[s.next()])];
  CHECK(std::abs(counts[0] / double(n) - 0.25) < 0.01);
  CHECK(std::abs(counts[1] / double(n) - 0.25) < 0.01);
  CHECK(std::abs(counts[2] / double(n) - 0.50) < 0.01);

  SamplerConfig only_first;
  only_first.probabilities = {1.0, 0.0, 0.0};
  WeightedSampler single(sources, only_first, 2);
  for (int i = 0; i < 1000; ++i) CHECK(sources[single.next()] == 0);

  // A zero-weight source may be empty.
  SamplerConfig no_middle;
  no_middle.probabilities = {0.5, 0.0, 0.5};
  const std::vector<int> gap_sources{0, 0, 2, 2};
  WeightedSampler gap(gap_sources, no_middle, 3);
  for (int i = 0; i < 1000; ++i) CHECK(gap_sources[gap.next()] != 1);
  CHECK_THROWS_AS(WeightedSampler({0, 0}, SamplerConfig{}, 1), ValidationError);
  SamplerConfig bad;
  bad.probabilities = {0.5, 0.5, 0.5};
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("sampler draws are reproducible per seed") {
  const auto recs = synth_clips(12, 5);
  auto a = weighted_sampler(recs, SamplerConfig{}, 7);
  auto b = weighted_sampler(recs, SamplerConfig{}, 7);
  auto c = weighted_sampler(recs, SamplerConfig{}, 8);
  bool differs = false;
  for (int i = 0; i < 200; ++i) {
    const size_t x = a.next();
    CHECK(x == b.next());
    differs = differs || x != c.next();
  }
  CHECK(differs);
}

TEST_CASE("synthetic clips: ranges, rest first frame, unit sphere, filter") {
  const auto recs = synth_clips(40, 9);
  std::set<int> sizes, labels;
  for (const auto& r : recs) {
    CHECK(r.skeleton.size() >= 2);
    CHECK(r.skeleton.size() <= 20);
    CHECK(r.clip.frame_count() == 32);
    CHECK(filter_clip(r).accepted);
    for (const auto& q : r.clip.frames[0].rotations) CHECK(q.angularDistance(Quat::Identity()) < 1e-12);
    CHECK(r.clip.frames[0].root_translation.norm() < 1e-12);
    for (const auto& p : clip_positions(r.skeleton, r.clip)) CHECK(p.positions.colwise().norm().maxCoeff() <= 0.95 + 1e-9);
    sizes.insert(r.skeleton.size());
    labels.insert(r.label);
  }
  CHECK(sizes.size() > 5);
  CHECK(labels.size() > 4);
  const auto again = synth_clips(40, 9);
  for (size_t i = 0; i < recs.size(); ++i) CHECK(clip_to_json_text(again[i].clip) == clip_to_json_text(recs[i].clip));
  SynthOptions bad;
  bad.max_joints = 21;
  CHECK_THROWS_AS(synth_clips(1, 0, bad), ValidationError);
}

TEST_CASE("synthetic clips round-trip through the reconstruction pipeline") {
  SynthOptions so;
  so.frames = 8;
  const auto cams = canonical_rig(default_rig_distance(), 512);
  for (const auto& r : synth_clips(4, 21, so)) {
    const auto pal = make_palette(r.skeleton.size(), 0);
    const auto maps = render_sequence(r.skeleton, r.clip, cams, pal);
    std::vector<std::vector<Image>> images(4);
    for (size_t v = 0; v < 4; ++v)
      for (const auto& m : maps[v]) images[v].push_back(m.image);
    const auto rec = reconstruct_sequence(r.skeleton, pal, cams, images, r.clip.fps);
    const auto err = position_errors(r.skeleton, clip_positions(r.skeleton, r.clip), rec.fk);
    CHECK(err.mean_relative() < 0.01);
    CHECK(err.max_relative() < 0.03);
  }
}

TEST_CASE("dataset files and manifests") {
  const auto dir = animax::testing::scratch_dir("datakit");
  SynthOptions so;
  so.frames = 3;
  const auto recs = synth_clips(3, 2, so);
  DatasetWriteOptions wo;
  wo.resolution = 64;
  wo.views = 2;
  write_dataset(dir / "a", recs, wo);
  write_dataset(dir / "b", recs, wo);
  CHECK(slurp(dir / "a" / "manifest.json") == slurp(dir / "b" / "manifest.json"));
  CHECK(slurp(dir / "a" / "clip0001" / "posemaps" / "view1" / "frame002.png") ==
        slurp(dir / "b" / "clip0001" / "posemaps" / "view1" / "frame002.png"));
  const auto entries = read_manifest(dir / "a" / "manifest.json");
  REQUIRE(entries.size() == 3);
  for (size_t i = 0; i < 3; ++i) {
    CHECK(entries[i].id == recs[i].id);
    CHECK(entries[i].label == recs[i].label);
    CHECK(entries[i].source == recs[i].source);
    const auto back = load_record(entries[i]);
    CHECK(back.skeleton.size() == recs[i].skeleton.size());
    CHECK(back.motion_score == doctest::Approx(recs[i].motion_score));
  }
  wo.render = false;
  write_dataset(dir / "c", recs, wo);
  CHECK_FALSE(std::filesystem::exists(dir / "c" / "clip0000" / "posemaps"));
  CHECK(read_manifest(dir / "c" / "manifest.json")[0].posemaps.empty());
  CHECK_THROWS_AS(read_manifest(dir / "missing.json"), IoError);
  CHECK(source_from_name(source_name(SourceTag::VroidLike)) == SourceTag::VroidLike);
  CHECK_THROWS_AS(source_from_name("nope"), ValidationError);
}

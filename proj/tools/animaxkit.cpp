// animaxkit: render, reconstruct and toy-train from the command line.

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <iostream>
#include <json.hpp>
#include <map>
#include <optional>
#include <random>

#include "animax/checkpoint.hpp"
#include "animax/datakit.hpp"
#include "animax/error.hpp"
#include "animax/io_util.hpp"
#include "animax/pipeline.hpp"
#include "animax/toy_latents.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace animax;

namespace {

// Collected for every run, success or failure.
struct Report {
  json doc = json::object();
  std::vector<std::pair<std::string, double>> timings;

  class Stage {
   public:
    Stage(Report& r, std::string name) : r_(r), name_(std::move(name)), t0_(std::chrono::steady_clock::now()) {}
    ~Stage() {
      r_.timings.emplace_back(name_, std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0_).count());
    }

   private:
    Report& r_;
    std::string name_;
    std::chrono::steady_clock::time_point t0_;
  };
};

struct Common {
  std::uint64_t seed = 0;
  int threads = 0;
  std::string out;
};

int resolve_threads(int flag) {
  if (flag > 0) return flag;
  if (const char* env = std::getenv("ANIMAXKIT_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<int>(v);
    throw ValidationError("ANIMAXKIT_THREADS must be a positive integer");
  }
  return 1;
}

std::vector<Camera> rig_from_flags(int views, const std::vector<double>& azimuths, int resolution, double distance,
                                   double elevation) {
  std::vector<double> az = azimuths.empty() ? canonical_azimuths_deg() : azimuths;
  if (views < 1) throw ValidationError("--views must be >= 1");
  if (azimuths.empty()) {
    if (views > static_cast<int>(az.size())) throw ValidationError("--views exceeds the canonical rig; pass --azimuths");
    az.resize(static_cast<size_t>(views));
  } else if (static_cast<int>(az.size()) != views) {
    throw ValidationError("--azimuths must list one angle per view");
  }
  return canonical_rig(distance > 0.0 ? distance : default_rig_distance(), resolution, az, elevation);
}

std::string frame_name(int frame) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame%03d.png", frame);
  return buf;
}

// NumPy .npy v1.0, little-endian float32, C order.
std::string encode_npy(const nn::Matrix<float>& m) {
  std::string header = "{'descr': '<f4', 'fortran_order': False, 'shape': (" + std::to_string(m.rows()) + ", " +
                       std::to_string(m.cols()) + "), }";
  const size_t total = 10 + header.size() + 1;
  header.append((64 - total % 64) % 64, ' ');
  header += '\n';
  std::string out("\x93NUMPY\x01\x00", 8);
  out += static_cast<char>(header.size() & 0xff);
  out += static_cast<char>((header.size() >> 8) & 0xff);
  out += header;
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    std::uint32_t bits;
    const float v = m.data()[i];
    std::memcpy(&bits, &v, 4);
    for (int b = 0; b < 4; ++b) out += static_cast<char>((bits >> (8 * b)) & 0xff);
  }
  return out;
}

json joints_json(const Joints2D& j) {
  json a = json::array();
  for (int k = 0; k < j.size(); ++k)
    a.push_back(j.valid[static_cast<size_t>(k)] ? json{j.positions(0, k), j.positions(1, k)} : json(nullptr));
  return a;
}

// ---- render ----

struct RenderArgs {
  std::string skeleton, clip, cameras, out_dir;
  int views = 4, resolution = 512;
  std::vector<double> azimuths;
  double distance = 0.0, elevation = 0.0;
  std::optional<std::uint64_t> palette_seed;
};

void cmd_render(const RenderArgs& a, const Common& c, Report& rep) {
  rep.doc["inputs"] = {a.skeleton, a.clip};
  Skeleton skel;
  AnimationClip clip;
  std::vector<Camera> cams;
  {
    Report::Stage s(rep, "load");
    skel = load_skeleton(a.skeleton);
    clip = load_clip(a.clip);
    clip.validate(skel.size());
    cams = a.cameras.empty() ? rig_from_flags(a.views, a.azimuths, a.resolution, a.distance, a.elevation) : load_cameras(a.cameras);
  }
  const auto palette = make_palette(skel.size(), a.palette_seed.value_or(c.seed));
  const fs::path out(a.out_dir);
  std::vector<std::vector<PoseMap>> maps;
  {
    Report::Stage s(rep, "render");
    maps = render_sequence(skel, clip, cams, palette);
  }
  {
    Report::Stage s(rep, "write");
    save_palette(out / "palette.json", palette);
    save_cameras(out / "cameras.json", cams);
    std::vector<std::pair<size_t, size_t>> jobs;
    for (size_t v = 0; v < maps.size(); ++v)
      for (size_t f = 0; f < maps[v].size(); ++f) jobs.emplace_back(v, f);
    parallel_for(static_cast<int>(jobs.size()), c.threads, [&](int i) {
      const auto [v, f] = jobs[static_cast<size_t>(i)];
      write_png(out / ("view" + std::to_string(v)) / frame_name(static_cast<int>(f)), maps[v][f].image);
    });
  }
  rep.doc["outputs"] = {{"directory", a.out_dir}, {"views", cams.size()}, {"frames", clip.frame_count()},
                        {"images", cams.size() * static_cast<size_t>(clip.frame_count())}};
}

// ---- reconstruct ----

struct ReconstructArgs {
  std::string posemaps, skeleton, cameras, palette, out_clip;
  double lambda_bone = 100.0, tau = 40.0, fps = 30.0;
};

std::vector<std::vector<Image>> read_posemap_dir(const fs::path& dir, int views) {
  std::vector<std::vector<Image>> maps(static_cast<size_t>(views));
  int frames = -1;
  for (int v = 0; v < views; ++v) {
    const fs::path vd = dir / ("view" + std::to_string(v));
    if (!fs::is_directory(vd)) throw IoError("missing view directory " + vd.string());
    int count = 0;
    while (fs::exists(vd / frame_name(count))) ++count;
    if (count == 0) throw IoError("view directory " + vd.string() + " holds no frame000.png");
    if (frames >= 0 && count != frames)
      throw ValidationError("view" + std::to_string(v) + " has " + std::to_string(count) + " frames, expected " + std::to_string(frames));
    frames = count;
    for (int f = 0; f < count; ++f) maps[static_cast<size_t>(v)].push_back(read_png(vd / frame_name(f)));
  }
  return maps;
}

void cmd_reconstruct(const ReconstructArgs& a, const Common& c, Report& rep) {
  rep.doc["inputs"] = {a.posemaps, a.skeleton};
  const fs::path dir(a.posemaps);
  Skeleton skel;
  std::vector<Camera> cams;
  ColorPalette palette;
  std::vector<std::vector<Image>> maps;
  {
    Report::Stage s(rep, "load");
    skel = load_skeleton(a.skeleton);
    cams = load_cameras(a.cameras.empty() ? dir / "cameras.json" : fs::path(a.cameras));
    palette = load_palette(a.palette.empty() ? dir / "palette.json" : fs::path(a.palette));
    maps = read_posemap_dir(dir, static_cast<int>(cams.size()));
  }
  ReconstructOptions opt;
  opt.lambda_bone = a.lambda_bone;
  opt.decode.color_threshold = a.tau;
  opt.threads = c.threads;
  SequenceReconstruction rec;
  {
    Report::Stage s(rep, "reconstruct");
    rec = reconstruct_sequence(skel, palette, cams, maps, a.fps, opt);
  }
  {
    Report::Stage s(rep, "write");
    save_clip(a.out_clip, rec.ik.clip);
  }
  json frames = json::array();
  for (size_t f = 0; f < rec.frames.size(); ++f) {
    json fr = json::parse(frame_report_json(static_cast<int>(f), rec.frames[f]));
    const auto& res = rec.ik.frames[f].residuals;
    fr["ik_residual_max"] = res.empty() ? 0.0 : *std::max_element(res.begin(), res.end());
    fr["empty"] = rec.frame_empty[f];
    fr["fallback"] = rec.ik.frames[f].used_fallback;
    frames.push_back(std::move(fr));
  }
  rep.doc["frames"] = std::move(frames);
  rep.doc["outputs"] = {{"clip", a.out_clip}};
}

// ---- roundtrip ----

struct RoundtripArgs {
  std::string skeleton, clip, out_clip;
  int views = 4, resolution = 512;
  std::vector<double> azimuths;
  double lambda_bone = 100.0, tau = 40.0;
};

void cmd_roundtrip(const RoundtripArgs& a, const Common& c, Report& rep) {
  rep.doc["inputs"] = {a.skeleton, a.clip};
  Skeleton skel;
  AnimationClip clip;
  {
    Report::Stage s(rep, "load");
    skel = load_skeleton(a.skeleton);
    clip = load_clip(a.clip);
    clip.validate(skel.size());
  }
  const auto cams = rig_from_flags(a.views, a.azimuths, a.resolution, 0.0, 0.0);
  const auto palette = make_palette(skel.size(), c.seed);
  std::vector<std::vector<Image>> maps(cams.size());
  {
    Report::Stage s(rep, "render");
    const auto rendered = render_sequence(skel, clip, cams, palette);
    for (size_t v = 0; v < rendered.size(); ++v)
      for (const auto& m : rendered[v]) maps[v].push_back(m.image);
  }
  ReconstructOptions opt;
  opt.lambda_bone = a.lambda_bone;
  opt.decode.color_threshold = a.tau;
  opt.threads = c.threads;
  SequenceReconstruction rec;
  {
    Report::Stage s(rep, "reconstruct");
    rec = reconstruct_sequence(skel, palette, cams, maps, clip.fps, opt);
  }
  const auto err = position_errors(skel, clip_positions(skel, clip), rec.fk);
  if (!a.out_clip.empty()) save_clip(a.out_clip, rec.ik.clip);
  json frames = json::array();
  for (size_t f = 0; f < rec.frames.size(); ++f) {
    json fr = json::parse(frame_report_json(static_cast<int>(f), rec.frames[f]));
    fr["mean_error"] = err.frame_mean[f];
    fr["max_error"] = err.frame_max[f];
    fr["mean_error_rel"] = err.frame_mean[f] / err.bbox_diagonal;
    fr["max_error_rel"] = err.frame_max[f] / err.bbox_diagonal;
    frames.push_back(std::move(fr));
  }
  rep.doc["frames"] = std::move(frames);
  rep.doc["metrics"] = {{"bbox_diagonal", err.bbox_diagonal},
                        {"mean_error", err.mean},
                        {"max_error", err.max},
                        {"mean_error_rel", err.mean_relative()},
                        {"max_error_rel", err.max_relative()}};
}

// ---- toy-train / toy-sample ----

struct ToyArgs {
  std::string manifest, config;
  int count = 50, min_joints = 2, max_joints = 5;
  int image_size = 32, patch = 8, f = 2, views = 2;
};

json toy_metadata(const ToyArgs& t, std::uint64_t seed) {
  json ds = t.manifest.empty()
                ? json{{"synth", {{"count", t.count}, {"seed", seed}, {"min_joints", t.min_joints}, {"max_joints", t.max_joints}}}}
                : json{{"manifest", t.manifest}};
  return {{"toy", {{"image_size", t.image_size}, {"patch", t.patch}, {"f", t.f}, {"views", t.views}, {"palette_seed", 0}}},
          {"dataset", ds}};
}

ToyLatentOptions toy_options(const json& meta) {
  ToyLatentOptions o;
  const auto& t = meta.at("toy");
  o.image_size = t.at("image_size").get<int>();
  o.patch = t.at("patch").get<int>();
  o.f = t.at("f").get<int>();
  o.views = t.at("views").get<int>();
  o.palette_seed = t.at("palette_seed").get<std::uint64_t>();
  o.validate();
  return o;
}

std::vector<ClipRecord> toy_dataset(const json& meta) {
  const auto& ds = meta.at("dataset");
  if (ds.contains("manifest")) {
    std::vector<ClipRecord> out;
    for (const auto& e : read_manifest(ds["manifest"].get<std::string>())) out.push_back(load_record(e));
    if (out.empty()) throw ValidationError("toy dataset manifest is empty");
    return out;
  }
  const auto& s = ds.at("synth");
  ToyDatasetSpec spec;
  spec.count = s.at("count").get<int>();
  spec.seed = s.at("seed").get<std::uint64_t>();
  spec.min_joints = s.at("min_joints").get<int>();
  spec.max_joints = s.at("max_joints").get<int>();
  return toy_records(spec);
}

struct TrainArgs {
  ToyArgs toy;
  std::string out_dir;
  int steps = 2000, batch = 4;
  double lr = 2e-3, cond_drop = 0.2, shift = 5.0;
  std::vector<double> source_weights;
};

void cmd_toy_train(const TrainArgs& a, const Common& c, Report& rep) {
  json meta = toy_metadata(a.toy, c.seed);
  meta["timestep_shift"] = a.shift;
  rep.doc["inputs"] = a.toy.manifest.empty() ? json::array() : json{a.toy.manifest};
  const auto opts = toy_options(meta);
  std::vector<ToyExample<float>> examples;
  {
    Report::Stage s(rep, "dataset");
    const auto records = toy_dataset(meta);
    for (const auto& r : records) examples.push_back(make_toy_example(r, opts));
  }
  DenoiserConfig cfg = a.toy.config.empty() ? DenoiserConfig{} : config_from_json_text(read_text_file(a.toy.config));
  cfg.channels = opts.channels();
  cfg.cond_drop = a.cond_drop;
  cfg.validate();
  TrainConfig tc;
  tc.steps = a.steps;
  tc.batch = a.batch;
  tc.learning_rate = a.lr;
  tc.timestep_shift = a.shift;
  tc.seed = c.seed;
  tc.threads = c.threads;
  tc.source_probabilities = a.source_weights;
  TrainResult res;
  {
    Report::Stage s(rep, "train");
    res = train_toy(examples, cfg, tc);
  }
  const fs::path out(a.out_dir);
  {
    Report::Stage s(rep, "write");
    save_checkpoint(out / "checkpoint.bin", res.model, meta.dump());
    write_file_atomic(out / "loss.csv", loss_curve_csv(res.loss_curve));
  }
  rep.doc["metrics"] = {{"examples", examples.size()},
                        {"steps", a.steps},
                        {"parameters", res.model.parameter_count()},
                        {"initial_eval_loss", res.initial_eval_loss},
                        {"final_eval_loss", res.final_eval_loss},
                        {"loss_ratio", res.final_eval_loss / res.initial_eval_loss},
                        {"timestep_shift", a.shift},
                        {"uniform_loss_ratio", res.final_uniform_loss / res.initial_uniform_loss}};
  rep.doc["outputs"] = {(out / "checkpoint.bin").string(), (out / "loss.csv").string()};
}

struct SampleArgs {
  std::string checkpoint, out_dir;
  int index = 0, steps = 50, label = -1;
  double guidance = 3.0;
  std::optional<double> shift;
};

void cmd_toy_sample(const SampleArgs& a, const Common& c, Report& rep) {
  rep.doc["inputs"] = {a.checkpoint};
  std::string meta_text;
  Denoiser<float> model;
  {
    Report::Stage s(rep, "load");
    model = load_checkpoint(a.checkpoint, &meta_text);
  }
  const json meta = json::parse(meta_text);
  if (!meta.contains("toy") || !meta.contains("dataset")) throw ValidationError("checkpoint lacks toy dataset metadata");
  const auto opts = toy_options(meta);
  const auto records = toy_dataset(meta);
  if (a.index < 0 || a.index >= static_cast<int>(records.size()))
    throw ValidationError("--index must lie in [0, " + std::to_string(records.size()) + ")");
  const auto& rec = records[static_cast<size_t>(a.index)];
  const auto ex = make_toy_example(rec, opts);
  SampleOptions so;
  so.steps = a.steps;
  so.guidance = a.guidance;
  so.shift = a.shift.value_or(meta.value("timestep_shift", 1.0));
  so.seed = c.seed;
  nn::Matrix<float> out;
  {
    Report::Stage s(rep, "sample");
    out = sample(model, ex.dims, ex.clean, ex.rays, a.label >= 0 ? a.label : ex.label, so);
  }
  const fs::path dir(a.out_dir);
  SequenceReconstruction recon;
  {
    Report::Stage s(rep, "decode");
    ReconstructOptions ro;
    ro.threads = c.threads;
    recon = decode_toy_pose(rec, opts, out, ro);
  }
  {
    Report::Stage s(rep, "write");
    write_file_atomic(dir / "latents.npy", encode_npy(out));
    const auto parts = split_views(ex.dims, out);
    const int hw = ex.dims.tokens_per_slot();
    for (size_t v = 0; v < parts.size(); ++v)
      for (int i = 0; i < ex.dims.video_frames(); ++i)
        write_png(dir / ("view" + std::to_string(v)) / frame_name(i),
                  unpatchify(parts[v].noisy_pose.middleRows(static_cast<Eigen::Index>(i) * hw, hw), ex.dims.h, ex.dims.w, opts.patch));
    json joints = json::array();
    for (const auto& frame : recon.observations) {
      json views = json::array();
      for (const auto& j : frame) views.push_back(joints_json(j));
      joints.push_back(std::move(views));
    }
    write_file_atomic(dir / "joints2d.json", joints.dump(2) + "\n");
    save_clip(dir / "clip.json", recon.ik.clip);
  }
  const auto err = position_errors(rec.skeleton, toy_targets(rec, opts), recon.fk);
  // How much of the sample decoded to markers, and how close the pose latent is to the target.
  int seen = 0, total = 0;
  for (const auto& frame : recon.observations)
    for (const auto& j : frame)
      for (bool v : j.valid) seen += v, ++total;
  double diff = 0.0, norm = 0.0;
  const auto target = split_views(ex.dims, ex.clean);
  const auto got = split_views(ex.dims, out);
  for (size_t v = 0; v < got.size(); ++v) {
    diff += (got[v].noisy_pose - target[v].noisy_pose).cast<double>().squaredNorm();
    norm += target[v].noisy_pose.cast<double>().squaredNorm();
  }
  rep.doc["metrics"] = {{"clip", rec.id},
                        {"guidance", a.guidance},
                        {"steps", a.steps},
                        {"timestep_shift", so.shift},
                        {"detected_fraction", total ? double(seen) / total : 0.0},
                        {"pose_latent_error_rel", norm > 0 ? std::sqrt(diff / norm) : 0.0},
                        {"latent_shape", {out.rows(), out.cols()}},
                        {"mean_error_rel", err.mean_relative()},
                        {"max_error_rel", err.max_relative()}};
  rep.doc["outputs"] = {(dir / "latents.npy").string(), (dir / "joints2d.json").string(), (dir / "clip.json").string()};
}

// ---- filter ----

struct FilterArgs {
  std::string manifest, out;
  int min_frames = 16;
  double min_motion = 0.002;
};

void cmd_filter(const FilterArgs& a, const Common&, Report& rep) {
  rep.doc["inputs"] = {a.manifest};
  const auto entries = read_manifest(a.manifest);
  FilterOptions fo;
  fo.min_frames = a.min_frames;
  fo.min_motion = a.min_motion;
  std::vector<ManifestEntry> kept;
  json rejected = json::array();
  std::map<std::string, int> reasons;
  {
    Report::Stage s(rep, "filter");
    for (const auto& e : entries) {
      const auto d = filter_clip(load_record(e), fo);
      if (d.accepted) {
        kept.push_back(e);
      } else {
        rejected.push_back({{"id", e.id}, {"reason", d.reason}});
        ++reasons[d.reason];
      }
    }
  }
  if (!a.out.empty()) {
    // Paths are rewritten relative to the output manifest.
    const fs::path base = fs::absolute(fs::path(a.out)).parent_path();
    for (auto& e : kept) {
      e.skeleton = fs::absolute(e.skeleton).lexically_relative(base);
      e.clip = fs::absolute(e.clip).lexically_relative(base);
      if (!e.posemaps.empty()) e.posemaps = fs::absolute(e.posemaps).lexically_relative(base);
    }
    write_manifest(a.out, kept);
  }
  json accepted = json::array();
  for (const auto& e : kept) accepted.push_back(e.id);
  rep.doc["metrics"] = {{"input", entries.size()}, {"accepted", kept.size()}, {"rejected", rejected.size()}, {"reasons", reasons}};
  rep.doc["accepted"] = std::move(accepted);
  rep.doc["rejected"] = std::move(rejected);
}

// ---- rig / synth ----

struct RigArgs {
  std::string out;
  int views = 4, resolution = 512;
  std::vector<double> azimuths;
  double distance = 0.0, elevation = 0.0;
};

void cmd_rig(const RigArgs& a, const Common&, Report& rep) {
  const auto cams = rig_from_flags(a.views, a.azimuths, a.resolution, a.distance, a.elevation);
  save_cameras(a.out, cams);
  rep.doc["outputs"] = {a.out};
  rep.doc["metrics"] = {{"views", cams.size()}};
}

struct SynthArgs {
  std::string out_dir;
  int count = 25, frames = 32, min_joints = 2, max_joints = 20, views = 4, resolution = 512;
  bool no_render = false;
};

void cmd_synth(const SynthArgs& a, const Common& c, Report& rep) {
  SynthOptions so;
  so.frames = a.frames;
  so.min_joints = a.min_joints;
  so.max_joints = a.max_joints;
  std::vector<ClipRecord> records;
  {
    Report::Stage s(rep, "generate");
    records = synth_clips(a.count, c.seed, so);
  }
  DatasetWriteOptions wo;
  wo.render = !a.no_render;
  wo.views = a.views;
  wo.resolution = a.resolution;
  wo.palette_seed = c.seed;
  {
    Report::Stage s(rep, "write");
    write_dataset(a.out_dir, records, wo);
  }
  rep.doc["outputs"] = {(fs::path(a.out_dir) / "manifest.json").string()};
  rep.doc["metrics"] = {{"records", records.size()}};
}

int exit_code_for(ErrorKind k) { return static_cast<int>(k); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"animaxkit: multi-view pose maps, 3D reconstruction and a toy joint video-pose denoiser"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", common.seed, "Random seed")->capture_default_str();
    sub->add_option("--threads", common.threads, "Worker threads (falls back to ANIMAXKIT_THREADS, then 1)");
    sub->add_option("--out", common.out, "Write the JSON report here instead of stdout");
  };

  RenderArgs render;
  auto* s_render = app.add_subcommand("render", "Render multi-view pose maps for a clip");
  s_render->add_option("--skeleton", render.skeleton)->required();
  s_render->add_option("--clip", render.clip)->required();
  s_render->add_option("--cameras", render.cameras, "Camera JSON (default: canonical rig)");
  s_render->add_flag("--canonical", "Use the canonical rig (default when --cameras is absent)");
  s_render->add_option("--views", render.views)->capture_default_str();
  s_render->add_option("--azimuths", render.azimuths, "Comma-separated azimuths in degrees")->delimiter(',');
  s_render->add_option("--resolution", render.resolution)->capture_default_str();
  s_render->add_option("--distance", render.distance, "Camera distance (default: unit sphere fills 80% of the frame)");
  s_render->add_option("--elevation", render.elevation)->capture_default_str();
  s_render->add_option("--palette-seed", render.palette_seed, "Palette seed (default: --seed)");
  s_render->add_option("--out-dir", render.out_dir)->required();
  add_common(s_render);

  ReconstructArgs recon;
  auto* s_recon = app.add_subcommand("reconstruct", "Recover an animation clip from a pose-map directory");
  s_recon->add_option("--posemaps", recon.posemaps)->required();
  s_recon->add_option("--skeleton", recon.skeleton)->required();
  s_recon->add_option("--cameras", recon.cameras, "Camera JSON (default: <posemaps>/cameras.json)");
  s_recon->add_option("--palette", recon.palette, "Palette JSON (default: <posemaps>/palette.json)");
  s_recon->add_option("--out-clip", recon.out_clip)->required();
  s_recon->add_option("--lambda-bone", recon.lambda_bone)->capture_default_str();
  s_recon->add_option("--tau", recon.tau, "Color-match threshold")->capture_default_str();
  s_recon->add_option("--fps", recon.fps)->capture_default_str();
  add_common(s_recon);

  RoundtripArgs rt;
  auto* s_rt = app.add_subcommand("roundtrip", "Render, decode, triangulate, solve IK and compare with the input clip");
  s_rt->add_option("--skeleton", rt.skeleton)->required();
  s_rt->add_option("--clip", rt.clip)->required();
  s_rt->add_option("--views", rt.views)->capture_default_str();
  s_rt->add_option("--azimuths", rt.azimuths)->delimiter(',');
  s_rt->add_option("--resolution", rt.resolution)->capture_default_str();
  s_rt->add_option("--lambda-bone", rt.lambda_bone)->capture_default_str();
  s_rt->add_option("--tau", rt.tau)->capture_default_str();
  s_rt->add_option("--out-clip", rt.out_clip, "Also save the reconstructed clip");
  add_common(s_rt);

  auto add_toy = [](CLI::App* sub, ToyArgs& t) {
    sub->add_option("--dataset", t.manifest, "Dataset manifest (default: synthesize)");
    sub->add_option("--count", t.count, "Synthetic clip count")->capture_default_str();
    sub->add_option("--min-joints", t.min_joints)->capture_default_str();
    sub->add_option("--max-joints", t.max_joints)->capture_default_str();
    sub->add_option("--image-size", t.image_size)->capture_default_str();
    sub->add_option("--patch", t.patch)->capture_default_str();
    sub->add_option("--latent-f", t.f)->capture_default_str();
    sub->add_option("--views", t.views)->capture_default_str();
    sub->add_option("--config", t.config, "Denoiser config JSON");
  };
  TrainArgs train;
  auto* s_train = app.add_subcommand("toy-train", "Train the toy joint video-pose denoiser");
  add_toy(s_train, train.toy);
  s_train->add_option("--steps", train.steps)->capture_default_str();
  s_train->add_option("--batch", train.batch)->capture_default_str();
  s_train->add_option("--lr", train.lr)->capture_default_str();
  s_train->add_option("--cond-drop", train.cond_drop)->capture_default_str();
  s_train->add_option("--shift", train.shift, "Timestep shift for training draws; sampling reuses it")->capture_default_str();
  s_train->add_option("--source-weights", train.source_weights, "Per-source sampling probabilities")->delimiter(',');
  s_train->add_option("--out-dir", train.out_dir)->required();
  add_common(s_train);

  SampleArgs samp;
  auto* s_samp = app.add_subcommand("toy-sample", "Sample pose and RGB latents from a toy checkpoint");
  s_samp->add_option("--checkpoint", samp.checkpoint)->required();
  s_samp->add_option("--index", samp.index, "Training clip whose condition frames are used")->capture_default_str();
  s_samp->add_option("--label", samp.label, "Override the motion label id");
  s_samp->add_option("--guidance", samp.guidance)->capture_default_str();
  s_samp->add_option("--shift", samp.shift, "Timestep grid shift (default: the training shift)");
  s_samp->add_option("--steps", samp.steps)->capture_default_str();
  s_samp->add_option("--out-dir", samp.out_dir)->required();
  add_common(s_samp);

  FilterArgs filt;
  auto* s_filt = app.add_subcommand("filter", "Apply the frame-count and motion filters to a manifest");
  s_filt->add_option("--manifest", filt.manifest)->required();
  s_filt->add_option("--min-frames", filt.min_frames, "Clips need strictly more frames")->capture_default_str();
  s_filt->add_option("--min-motion", filt.min_motion)->capture_default_str();
  s_filt->add_option("--out-manifest", filt.out, "Write the accepted records here");
  add_common(s_filt);

  RigArgs rig;
  auto* s_rig = app.add_subcommand("rig", "Emit canonical camera JSON");
  s_rig->add_option("--views", rig.views)->capture_default_str();
  s_rig->add_option("--azimuths", rig.azimuths)->delimiter(',');
  s_rig->add_option("--resolution", rig.resolution)->capture_default_str();
  s_rig->add_option("--distance", rig.distance);
  s_rig->add_option("--elevation", rig.elevation)->capture_default_str();
  s_rig->add_option("--cameras-out", rig.out)->required();
  add_common(s_rig);

  SynthArgs synth;
  auto* s_synth = app.add_subcommand("synth", "Generate a synthetic dataset with manifest");
  s_synth->add_option("--count", synth.count)->capture_default_str();
  s_synth->add_option("--frames", synth.frames)->capture_default_str();
  s_synth->add_option("--min-joints", synth.min_joints)->capture_default_str();
  s_synth->add_option("--max-joints", synth.max_joints)->capture_default_str();
  s_synth->add_option("--views", synth.views)->capture_default_str();
  s_synth->add_option("--resolution", synth.resolution)->capture_default_str();
  s_synth->add_flag("--no-render", synth.no_render, "Skip pose-map PNGs");
  s_synth->add_option("--out-dir", synth.out_dir)->required();
  add_common(s_synth);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return exit_code_for(ErrorKind::Validation);
  }

  CLI::App* sub = app.get_subcommands().front();
  Report rep;
  rep.doc["command"] = sub->get_name();
  rep.doc["seed"] = common.seed;
  int code = 0;
  try {
    common.threads = resolve_threads(common.threads);
    rep.doc["threads"] = common.threads;
    const std::string name = sub->get_name();
    if (name == "render") cmd_render(render, common, rep);
    else if (name == "reconstruct") cmd_reconstruct(recon, common, rep);
    else if (name == "roundtrip") cmd_roundtrip(rt, common, rep);
    else if (name == "toy-train") cmd_toy_train(train, common, rep);
    else if (name == "toy-sample") cmd_toy_sample(samp, common, rep);
    else if (name == "filter") cmd_filter(filt, common, rep);
    else if (name == "rig") cmd_rig(rig, common, rep);
    else if (name == "synth") cmd_synth(synth, common, rep);
  } catch (const Error& e) {
    code = exit_code_for(e.kind());
    rep.doc["error"] = e.what();
  } catch (const fs::filesystem_error& e) {
    code = exit_code_for(ErrorKind::Io);
    rep.doc["error"] = e.what();
  } catch (const json::exception& e) {
    code = exit_code_for(ErrorKind::Validation);
    rep.doc["error"] = e.what();
  } catch (const std::exception& e) {
    code = 1;
    rep.doc["error"] = e.what();
  }
  json timings = json::object();
  for (const auto& [stage, ms] : rep.timings) timings[stage] = ms;
  rep.doc["timings_ms"] = std::move(timings);
  rep.doc["status"] = code == 0 ? "ok" : "error";
  rep.doc["exit_code"] = code;
  const std::string text = rep.doc.dump(2) + "\n";
  if (!common.out.empty()) {
    try {
      write_file_atomic(common.out, text);
    } catch (const Error& e) {
      std::cerr << "animaxkit: " << e.what() << "\n";
      std::cout << text;
      return code ? code : exit_code_for(ErrorKind::Io);
    }
  } else {
    std::cout << text;
  }
  if (code != 0) std::cerr << "animaxkit " << sub->get_name() << ": " << rep.doc["error"].get<std::string>() << "\n";
  return code;
}

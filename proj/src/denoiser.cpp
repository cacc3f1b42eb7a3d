#include "animax/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <memory>
#include <thread>

#include "animax/datakit.hpp"
#include "animax/error.hpp"
#include "animax/random.hpp"

namespace animax {

void DenoiserConfig::validate() const {
  if (blocks < 1) throw ValidationError("denoiser: blocks must be >= 1");
  if (heads < 1 || width < 1 || width % heads != 0) throw ValidationError("denoiser: width must be a positive multiple of heads");
  if (head_dim() % 2 != 0 || head_dim() < 6) throw ValidationError("denoiser: head dim must be even and >= 6");
  if (slot_freqs < 0) throw ValidationError("denoiser: slot_freqs must be >= 0");
  if (patch_hidden < 0) throw ValidationError("denoiser: patch_hidden must be >= 0");
  if (mlp_ratio < 1 || channels < 1) throw ValidationError("denoiser: mlp_ratio and channels must be >= 1");
  if (label_vocab < 1 || label_tokens < 1) throw ValidationError("denoiser: label vocab and tokens must be >= 1");
  if (time_freqs < 1 || modality_freqs < 1) throw ValidationError("denoiser: frequency counts must be >= 1");
  if (!(cond_drop >= 0.0 && cond_drop <= 1.0)) throw ValidationError("denoiser: cond_drop must lie in [0, 1]");
  if (!std::isfinite(guidance)) throw ValidationError("denoiser: guidance must be finite");
  if (steps < 1) throw ValidationError("denoiser: steps must be >= 1");
  if (!(rope_base > 1.0)) throw ValidationError("denoiser: rope base must exceed 1");
}

std::vector<int> noisy_rows(const LatentDims& d) {
  std::vector<int> rows;
  const int hw = d.tokens_per_slot();
  for (int v = 0; v < d.views; ++v)
    for (int s = 0; s < d.slots(); ++s)
      if (!is_condition_slot(s, d.f))
        for (int r = 0; r < hw; ++r) rows.push_back(v * d.tokens_per_view() + s * hw + r);
  return rows;
}

std::vector<int> condition_rows(const LatentDims& d) {
  std::vector<int> rows;
  const int hw = d.tokens_per_slot();
  for (int v = 0; v < d.views; ++v)
    for (int s = 0; s < d.slots(); ++s)
      if (is_condition_slot(s, d.f))
        for (int r = 0; r < hw; ++r) rows.push_back(v * d.tokens_per_view() + s * hw + r);
  return rows;
}

namespace {

template <typename Scalar>
nn::Matrix<Scalar> normal_matrix(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  nn::Matrix<Scalar> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(stddev * rng.normal());
  return m;
}

template <typename Scalar>
void check_input(const DenoiserConfig& cfg, const DenoiserInput<Scalar>& in) {
  in.dims.validate();
  const auto& d = in.dims;
  if (d.c != cfg.channels) throw ValidationError("denoiser: latent channels do not match the model");
  if (in.tokens.rows() != d.total_tokens() || in.tokens.cols() != d.c)
    throw ValidationError("denoiser: token matrix must be " + std::to_string(d.total_tokens()) + "x" + std::to_string(d.c));
  if (in.rays.rows() != static_cast<Eigen::Index>(d.views) * d.tokens_per_slot() || in.rays.cols() != 6)
    throw ValidationError("denoiser: ray matrix must be (views*h*w)x6");
  if (in.label < 0 || in.label >= cfg.label_vocab) throw ValidationError("denoiser: label out of range");
  if (!(in.t >= 0.0 && in.t <= 1.0)) throw ValidationError("denoiser: t must lie in [0, 1]");
}

}  // namespace

template <typename Scalar>
void Denoiser<Scalar>::add(std::string name, nn::Matrix<Scalar> value) {
  names_.push_back(std::move(name));
  params_.push_back(std::move(value));
}

template <typename Scalar>
Denoiser<Scalar>::Denoiser(const DenoiserConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed, 0x64656e6fULL);
  const int D = config_.width, c = config_.channels;
  auto lin = [&](const std::string& name, int in, int out, bool zero = false) {
    add(name + ".w", zero ? nn::Matrix<Scalar>::Zero(in, out) : normal_matrix<Scalar>(in, out, 1.0 / std::sqrt(double(in)), rng));
    add(name + ".b", nn::Matrix<Scalar>::Zero(1, out));
  };
  const int H = config_.patch_hidden;
  if (H > 0) {
    lin("in.fc", c + 6 + 2 * config_.slot_freqs, H);
    lin("in", H, D);
  } else {
    lin("in", c + 6 + 2 * config_.slot_freqs, D);
  }
  add("time.w1", normal_matrix<Scalar>(2 * config_.time_freqs, D, 1.0 / std::sqrt(2.0 * config_.time_freqs), rng));
  add("time.b1", nn::Matrix<Scalar>::Zero(1, D));
  add("time.w2", normal_matrix<Scalar>(D, D, 1.0 / std::sqrt(double(D)), rng));
  add("time.b2", nn::Matrix<Scalar>::Zero(1, D));
  const auto me = ModalityEmbedding<Scalar>::init(D, config_.modality_freqs, rng.next_u64());
  add("modality.w1", me.w1);
  add("modality.b1", me.b1);
  add("modality.w2", me.w2);
  add("modality.b2", me.b2);
  add("label.table", normal_matrix<Scalar>(static_cast<Eigen::Index>(config_.label_vocab) * config_.label_tokens, D, 1.0, rng));
  for (int b = 0; b < config_.blocks; ++b) {
    const std::string p = "blk" + std::to_string(b) + ".";
    for (const char* m : {"shift1", "scale1", "shift2", "scale2"}) lin(p + m, D, D, true);
    for (const char* a : {"attn", "mv", "cross"})
      for (const char* l : {"q", "k", "v", "o"}) lin(p + a + "." + l, D, D);
    lin(p + "mlp.fc1", D, D * config_.mlp_ratio);
    lin(p + "mlp.fc2", D * config_.mlp_ratio, D);
  }
  lin("final.shift", D, D, true);
  lin("final.scale", D, D, true);
  if (H > 0) {
    lin("out.fc", D, H);
    lin("out", H, c, true);
  } else {
    lin("out", D, c, true);
  }
  // Per-channel gain on x_t; bias -1 makes the initial prediction exactly zero.
  lin("skip", D, c, true);
  params_.back().setConstant(Scalar(-1));
}

template <typename Scalar>
const nn::Matrix<Scalar>& Denoiser<Scalar>::param(const std::string& name) const {
  const auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw ValidationError("denoiser: no parameter named " + name);
  return params_[static_cast<size_t>(it - names_.begin())];
}

template <typename Scalar>
Eigen::Index Denoiser<Scalar>::parameter_count() const {
  Eigen::Index n = 0;
  for (const auto& p : params_) n += p.size();
  return n;
}

template <typename Scalar>
struct Denoiser<Scalar>::Graph {
  nn::Tape<Scalar> tape;
  std::vector<typename nn::Tape<Scalar>::Var> params;
  typename nn::Tape<Scalar>::Var out = -1;
  std::vector<nn::AttentionGroup> view_groups, slot_groups, cross_groups;
  nn::RotaryAngles<Scalar> angles;
  std::vector<int> modality_index;
  std::vector<int> ray_index;

  typename nn::Tape<Scalar>::Var p(const std::vector<std::string>& names, const std::string& name) {
    const auto it = std::find(names.begin(), names.end(), name);
    return params[static_cast<size_t>(it - names.begin())];
  }
};

template <typename Scalar>
void Denoiser<Scalar>::build(Graph& g, const DenoiserInput<Scalar>& in, bool with_grad) const {
  check_input(config_, in);
  const auto& d = in.dims;
  auto& tp = g.tape;
  for (const auto& m : params_) g.params.push_back(tp.leaf(m, with_grad));
  auto P = [&](const std::string& name) { return g.p(names_, name); };
  auto lin = [&](typename nn::Tape<Scalar>::Var x, const std::string& name) { return tp.linear(x, P(name + ".w"), P(name + ".b")); };

  const int hw = d.tokens_per_slot();
  const int rows = d.total_tokens();
  g.modality_index.resize(static_cast<size_t>(rows));
  g.ray_index.resize(static_cast<size_t>(rows));
  const int heads = config_.heads;
  const int hd = config_.head_dim();
  const RopeTable table(config_.shared_pe ? d.f + 2 : d.slots(), d.h, d.w, hd, config_.rope_base);
  g.angles.cos.resize(rows, table.pairs());
  g.angles.sin.resize(rows, table.pairs());
  for (int v = 0; v < d.views; ++v)
    for (int s = 0; s < d.slots(); ++s)
      for (int y = 0; y < d.h; ++y)
        for (int x = 0; x < d.w; ++x) {
          const int r = v * d.tokens_per_view() + s * hw + y * d.w + x;
          g.modality_index[static_cast<size_t>(r)] = modality_of_slot(s, d.f);
          g.ray_index[static_cast<size_t>(r)] = v * hw + y * d.w + x;
          const Eigen::VectorXd a = table.angles(rope_temporal_index(s, d.f, config_.shared_pe), x, y);
          g.angles.cos.row(r) = a.array().cos().template cast<Scalar>().transpose();
          g.angles.sin.row(r) = a.array().sin().template cast<Scalar>().transpose();
        }
  g.view_groups = per_view_groups(d);
  g.slot_groups = per_slot_groups(d);
  g.cross_groups.assign(1, {});
  for (int r = 0; r < rows; ++r) g.cross_groups[0].queries.push_back(r);
  for (int k = 0; k < config_.label_tokens; ++k) g.cross_groups[0].keys.push_back(k);

  // Per-token input: latent channels followed by the view's Plücker ray.
  const int sf = config_.slot_freqs;
  nn::Matrix<Scalar> features(rows, d.c + 6 + 2 * sf);
  features.leftCols(d.c) = in.tokens;
  features.middleCols(d.c, 6) = in.rays(g.ray_index, Eigen::all);
  if (sf > 0)
    for (int r = 0; r < rows; ++r)
      features.block(r, d.c + 6, 1, 2 * sf) =
          frequency_encode<Scalar>(rope_temporal_index((r % d.tokens_per_view()) / hw, d.f, config_.shared_pe), sf);
  const auto tokens = tp.leaf(in.tokens, false);
  auto h = tp.leaf(std::move(features), false);
  h = config_.patch_hidden > 0 ? lin(tp.silu(lin(h, "in.fc")), "in") : lin(h, "in");

  // Conditioning rows: timestep embedding plus the modality identifier embedding.
  auto te = tp.leaf(frequency_encode<Scalar>(in.t * 1000.0, config_.time_freqs), false);
  te = tp.linear(tp.silu(tp.linear(te, P("time.w1"), P("time.b1"))), P("time.w2"), P("time.b2"));
  nn::Matrix<Scalar> ids(2, 2 * config_.modality_freqs);
  ids.row(0) = frequency_encode<Scalar>(0.0, config_.modality_freqs);
  ids.row(1) = frequency_encode<Scalar>(1.0, config_.modality_freqs);
  auto me = tp.linear(tp.silu(tp.linear(tp.leaf(std::move(ids), false), P("modality.w1"), P("modality.b1"))), P("modality.w2"),
                      P("modality.b2"));
  const auto cond = tp.silu(tp.add(tp.gather_rows(te, {0, 0}), me));
  auto per_token = [&](const std::string& name) { return tp.gather_rows(lin(cond, name), g.modality_index); };

  std::vector<int> label_rows;
  for (int k = 0; k < config_.label_tokens; ++k) label_rows.push_back(in.label * config_.label_tokens + k);
  const auto context = tp.gather_rows(P("label.table"), label_rows);

  for (int b = 0; b < config_.blocks; ++b) {
    const std::string p = "blk" + std::to_string(b) + ".";
    // 3D attention within each view, rotary positions on q and k.
    auto x = tp.modulate(tp.layer_norm(h), per_token(p + "scale1"), per_token(p + "shift1"));
    auto q = tp.rotary(lin(x, p + "attn.q"), heads, &g.angles);
    auto k = tp.rotary(lin(x, p + "attn.k"), heads, &g.angles);
    h = tp.add(h, lin(tp.attention(q, k, lin(x, p + "attn.v"), heads, &g.view_groups), p + "attn.o"));
    // Multi-view attention across views at each temporal slot.
    x = tp.layer_norm(h);
    h = tp.add(h, lin(tp.attention(lin(x, p + "mv.q"), lin(x, p + "mv.k"), lin(x, p + "mv.v"), heads, &g.slot_groups), p + "mv.o"));
    // Cross-attention to the label context.
    x = tp.layer_norm(h);
    h = tp.add(h, lin(tp.attention(lin(x, p + "cross.q"), lin(context, p + "cross.k"), lin(context, p + "cross.v"), heads,
                                   &g.cross_groups),
                      p + "cross.o"));
    x = tp.modulate(tp.layer_norm(h), per_token(p + "scale2"), per_token(p + "shift2"));
    h = tp.add(h, lin(tp.silu(lin(x, p + "mlp.fc1")), p + "mlp.fc2"));
  }
  const auto x = tp.modulate(tp.layer_norm(h), per_token("final.scale"), per_token("final.shift"));
  // x_t (1 + gain(t, modality)) + head: the skip carries the noise component
  // that a narrow residual stream cannot.
  const auto head = config_.patch_hidden > 0 ? lin(tp.silu(lin(x, "out.fc")), "out") : lin(x, "out");
  g.out = tp.modulate(tokens, per_token("skip"), head);
}

template <typename Scalar>
nn::Matrix<Scalar> Denoiser<Scalar>::predict(const DenoiserInput<Scalar>& in) const {
  Graph g;
  build(g, in, false);
  return g.tape.value(g.out);
}

template <typename Scalar>
Scalar Denoiser<Scalar>::loss(const DenoiserInput<Scalar>& in, const nn::Matrix<Scalar>& target,
                              std::vector<nn::Matrix<Scalar>>* grads) const {
  if (target.rows() != in.tokens.rows() || target.cols() != in.tokens.cols())
    throw ValidationError("denoiser loss: target shape must match tokens");
  Graph g;
  build(g, in, grads != nullptr);
  const auto rows = noisy_rows(in.dims);
  const auto l = g.tape.masked_mse(g.out, &target, &rows);
  const Scalar value = g.tape.value(l)(0, 0);
  if (grads) {
    g.tape.backward(l);
    if (grads->size() != params_.size()) {
      grads->clear();
      for (const auto& m : params_) grads->push_back(nn::Matrix<Scalar>::Zero(m.rows(), m.cols()));
    }
    for (size_t i = 0; i < params_.size(); ++i) {
      const auto& gr = g.tape.grad(g.params[i]);
      if (gr.size() != 0) (*grads)[i] += gr;
    }
  }
  return value;
}

template <typename Scalar>
ModalityEmbedding<Scalar> Denoiser<Scalar>::modality_embedding() const {
  ModalityEmbedding<Scalar> e;
  e.n_freq = config_.modality_freqs;
  e.w1 = param("modality.w1");
  e.b1 = param("modality.b1");
  e.w2 = param("modality.w2");
  e.b2 = param("modality.b2");
  return e;
}

template <typename Scalar>
nn::Matrix<Scalar> Denoiser<Scalar>::timestep_embedding(double t) const {
  nn::Matrix<Scalar> h = frequency_encode<Scalar>(t * 1000.0, config_.time_freqs) * param("time.w1") + param("time.b1");
  h = (h.array() / (Scalar(1) + (-h.array()).exp())).matrix();
  return h * param("time.w2") + param("time.b2");
}

template <typename Scalar>
nn::Matrix<Scalar> Denoiser<Scalar>::conditioned_embeddings(double t) const {
  const auto te = timestep_embedding(t);
  const auto me = modality_embedding();
  nn::Matrix<Scalar> out(2, config_.width);
  out.row(0) = modality_bias(me, te, 0);
  out.row(1) = modality_bias(me, te, 1);
  return out;
}

template <typename Scalar>
std::pair<DenoiserInput<Scalar>, nn::Matrix<Scalar>> make_flow_pair(const ToyExample<Scalar>& ex, double t,
                                                                    const nn::Matrix<Scalar>& noise, bool drop_condition) {
  if (noise.rows() != ex.clean.rows() || noise.cols() != ex.clean.cols())
    throw ValidationError("make_flow_pair: noise shape must match the clean latents");
  DenoiserInput<Scalar> in;
  in.dims = ex.dims;
  in.rays = ex.rays;
  in.label = ex.label;
  in.t = t;
  in.tokens = ex.clean;
  nn::Matrix<Scalar> target = nn::Matrix<Scalar>::Zero(ex.clean.rows(), ex.clean.cols());
  const auto ts = static_cast<Scalar>(t);
  for (int r : noisy_rows(ex.dims)) {
    in.tokens.row(r) = (Scalar(1) - ts) * ex.clean.row(r) + ts * noise.row(r);
    target.row(r) = noise.row(r) - ex.clean.row(r);
  }
  if (drop_condition)
    for (int r : condition_rows(ex.dims)) in.tokens.row(r).setZero();
  return {std::move(in), std::move(target)};
}

namespace {

nn::Matrix<float> normal_like(const nn::Matrix<float>& m, Rng& rng) { return normal_matrix<float>(m.rows(), m.cols(), 1.0, rng); }

}  // namespace

double shift_timestep(double u, double shift) { return shift * u / (1.0 + (shift - 1.0) * u); }

double evaluation_loss(const Denoiser<float>& model, const std::vector<ToyExample<float>>& examples, std::uint64_t seed,
                       int draws, double shift) {
  if (examples.empty()) throw ValidationError("evaluation_loss: no examples");
  if (draws < 1) throw ValidationError("evaluation_loss: draws must be >= 1");
  if (!(shift > 0.0)) throw ValidationError("evaluation_loss: shift must be positive");
  double sum = 0.0;
  for (size_t i = 0; i < examples.size(); ++i)
    for (int k = 0; k < draws; ++k) {
      Rng rng(seed ^ 0x6576616cULL, i * static_cast<size_t>(draws) + static_cast<size_t>(k));
      // Stratified t so every draw set covers the whole interval.
      const double t = shift_timestep((k + rng.uniform()) / draws, shift);
      const auto [in, target] = make_flow_pair(examples[i], t, normal_like(examples[i].clean, rng), false);
      sum += model.loss(in, target);
    }
  return sum / (static_cast<double>(examples.size()) * draws);
}

TrainResult train_toy(const std::vector<ToyExample<float>>& examples, const DenoiserConfig& config, const TrainConfig& train) {
  if (examples.empty()) throw ValidationError("train_toy: no examples");
  if (train.steps < 0 || train.batch < 1) throw ValidationError("train_toy: steps must be >= 0 and batch >= 1");
  if (!(train.timestep_shift > 0.0)) throw ValidationError("train_toy: timestep shift must be positive");
  if (!(train.learning_rate > 0.0) || !(train.grad_clip > 0.0)) throw ValidationError("train_toy: lr and grad clip must be positive");
  for (const auto& ex : examples) {
    if (ex.dims.c != config.channels) throw ValidationError("train_toy: example channels do not match the config");
    if (ex.label < 0 || ex.label >= config.label_vocab) throw ValidationError("train_toy: example label out of range");
  }

  TrainResult result;
  result.model = Denoiser<float>(config, train.seed);
  auto& model = result.model;
  const std::uint64_t eval_seed = Rng::mix(train.seed, 0xe7a1ULL);
  result.initial_eval_loss = evaluation_loss(model, examples, eval_seed, train.eval_draws, train.timestep_shift);
  result.initial_uniform_loss = evaluation_loss(model, examples, eval_seed, train.eval_draws);

  std::unique_ptr<WeightedSampler> sampler;
  if (!train.source_probabilities.empty()) {
    SamplerConfig sc;
    if (train.source_probabilities.size() != sc.probabilities.size())
      throw ValidationError("train_toy: source probabilities need one entry per source");
    std::copy(train.source_probabilities.begin(), train.source_probabilities.end(), sc.probabilities.begin());
    std::vector<int> sources;
    for (const auto& ex : examples) sources.push_back(ex.source);
    sampler = std::make_unique<WeightedSampler>(std::move(sources), sc, Rng::mix(train.seed, 0x5a3bULL));
  }

  const size_t n_params = model.params().size();
  std::vector<nn::Matrix<float>> m1, m2;
  for (const auto& p : model.params()) {
    m1.push_back(nn::Matrix<float>::Zero(p.rows(), p.cols()));
    m2.push_back(nn::Matrix<float>::Zero(p.rows(), p.cols()));
  }
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  const int threads = std::max(1, std::min(train.threads, train.batch));
  Rng draw(train.seed, 0x7472ULL);

  struct Item {
    DenoiserInput<float> in;
    nn::Matrix<float> target;
  };
  for (int step = 0; step < train.steps; ++step) {
    // All randomness is drawn on this thread in a fixed order, so results do
    // not depend on the thread count.
    std::vector<Item> items;
    for (int b = 0; b < train.batch; ++b) {
      const size_t idx = sampler ? sampler->next() : static_cast<size_t>(draw.below(examples.size()));
      const double t = shift_timestep(draw.uniform(), train.timestep_shift);
      const bool drop = draw.uniform() < config.cond_drop;
      auto noise = normal_like(examples[idx].clean, draw);
      auto [in, target] = make_flow_pair(examples[idx], t, noise, drop);
      items.push_back({std::move(in), std::move(target)});
    }
    std::vector<std::vector<nn::Matrix<float>>> grads(static_cast<size_t>(train.batch));
    std::vector<double> losses(static_cast<size_t>(train.batch));
    auto work = [&](int first) {
      for (int b = first; b < train.batch; b += threads)
        losses[static_cast<size_t>(b)] = model.loss(items[static_cast<size_t>(b)].in, items[static_cast<size_t>(b)].target,
                                                    &grads[static_cast<size_t>(b)]);
    };
    if (threads == 1) {
      work(0);
    } else {
      std::vector<std::thread> pool;
      for (int i = 0; i < threads; ++i) pool.emplace_back(work, i);
      for (auto& th : pool) th.join();
    }

    double batch_loss = 0.0;
    std::vector<nn::Matrix<float>> g = std::move(grads[0]);
    batch_loss += losses[0];
    for (int b = 1; b < train.batch; ++b) {
      for (size_t i = 0; i < n_params; ++i) g[i] += grads[static_cast<size_t>(b)][i];
      batch_loss += losses[static_cast<size_t>(b)];
    }
    batch_loss /= train.batch;
    if (!std::isfinite(batch_loss)) throw NumericalError("train_toy: loss became non-finite at step " + std::to_string(step));
    result.loss_curve.push_back(batch_loss);

    double norm2 = 0.0;
    for (auto& gi : g) {
      gi /= static_cast<float>(train.batch);
      norm2 += static_cast<double>(gi.squaredNorm());
    }
    const double norm = std::sqrt(norm2);
    const float clip = norm > train.grad_clip ? static_cast<float>(train.grad_clip / norm) : 1.0f;
    const double bc1 = 1.0 - std::pow(beta1, step + 1), bc2 = 1.0 - std::pow(beta2, step + 1);
    const double base = train.cosine_decay ? 0.5 * train.learning_rate * (1.0 + std::cos(std::numbers::pi * step / train.steps))
                                           : train.learning_rate;
    const auto lr = static_cast<float>(base * std::sqrt(bc2) / bc1);
    for (size_t i = 0; i < n_params; ++i) {
      const nn::Matrix<float> gi = g[i] * clip;
      m1[i] = float(beta1) * m1[i] + float(1 - beta1) * gi;
      m2[i] = float(beta2) * m2[i] + float(1 - beta2) * gi.cwiseProduct(gi);
      model.params()[i].array() -= lr * m1[i].array() / (m2[i].array().sqrt() + float(eps));
    }
  }
  result.final_eval_loss = evaluation_loss(model, examples, eval_seed, train.eval_draws, train.timestep_shift);
  result.final_uniform_loss = evaluation_loss(model, examples, eval_seed, train.eval_draws);
  return result;
}

template <typename Scalar>
nn::Matrix<Scalar> sample(const Denoiser<Scalar>& model, const LatentDims& dims, const nn::Matrix<Scalar>& conditions,
                          const nn::Matrix<Scalar>& rays, int label, const SampleOptions& options) {
  dims.validate();
  if (conditions.rows() != dims.total_tokens() || conditions.cols() != dims.c)
    throw ValidationError("sample: condition matrix must hold the full stacked grid");
  if (options.steps < 1) throw ValidationError("sample: steps must be >= 1");
  if (!std::isfinite(options.guidance)) throw ValidationError("sample: guidance must be finite");
  if (!(options.shift > 0.0)) throw ValidationError("sample: shift must be positive");
  const auto noisy = noisy_rows(dims);
  const auto cond = condition_rows(dims);
  Rng rng(options.seed, 0x73616dULL);

  DenoiserInput<Scalar> in;
  in.dims = dims;
  in.rays = rays;
  in.label = label;
  in.tokens = nn::Matrix<Scalar>::Zero(conditions.rows(), conditions.cols());
  for (int r : cond) in.tokens.row(r) = conditions.row(r);
  for (int r : noisy)
    for (Eigen::Index c = 0; c < dims.c; ++c) in.tokens(r, c) = static_cast<Scalar>(rng.normal());

  const bool guided = options.guidance != 1.0;
  for (int i = 0; i < options.steps; ++i) {
    in.t = shift_timestep(1.0 - static_cast<double>(i) / options.steps, options.shift);
    const double dt = in.t - shift_timestep(1.0 - static_cast<double>(i + 1) / options.steps, options.shift);
    nn::Matrix<Scalar> v = model.predict(in);
    if (guided) {
      DenoiserInput<Scalar> un = in;
      for (int r : cond) un.tokens.row(r).setZero();
      const nn::Matrix<Scalar> vu = model.predict(un);
      v = vu + static_cast<Scalar>(options.guidance) * (v - vu);
    }
    for (int r : noisy) in.tokens.row(r) -= static_cast<Scalar>(dt) * v.row(r);
  }
  if (!in.tokens.allFinite()) throw NumericalError("sample: latents became non-finite");
  return in.tokens;
}

template <typename Scalar>
std::vector<TokenParts<Scalar>> split_views(const LatentDims& dims, const nn::Matrix<Scalar>& stacked) {
  dims.validate();
  if (stacked.rows() != dims.total_tokens() || stacked.cols() != dims.c)
    throw ValidationError("split_views: stacked grid has the wrong shape");
  std::vector<TokenParts<Scalar>> out;
  for (int v = 0; v < dims.views; ++v) {
    TokenGrid<Scalar> grid;
    grid.dims = dims;
    grid.values = stacked.middleRows(static_cast<Eigen::Index>(v) * dims.tokens_per_view(), dims.tokens_per_view());
    out.push_back(split_token_sequence(grid));
  }
  return out;
}

template class Denoiser<float>;
template class Denoiser<double>;

#define ANIMAX_INSTANTIATE_DENOISER(S)                                                                                  \
  template std::pair<DenoiserInput<S>, nn::Matrix<S>> make_flow_pair(const ToyExample<S>&, double, const nn::Matrix<S>&, \
                                                                     bool);                                             \
  template nn::Matrix<S> sample(const Denoiser<S>&, const LatentDims&, const nn::Matrix<S>&, const nn::Matrix<S>&, int,  \
                                const SampleOptions&);                                                                  \
  template std::vector<TokenParts<S>> split_views(const LatentDims&, const nn::Matrix<S>&);

ANIMAX_INSTANTIATE_DENOISER(float)
ANIMAX_INSTANTIATE_DENOISER(double)

}  // namespace animax

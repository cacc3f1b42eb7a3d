#include "animax/tokens.hpp"

#include <cmath>

#include "animax/error.hpp"
#include "animax/random.hpp"

namespace animax {

void LatentDims::validate() const {
  if (f < 1) throw ValidationError("latent dims: f must be >= 1");
  if (h < 1 || w < 1 || c < 1) throw ValidationError("latent dims: h, w, c must be >= 1");
  if (views < 1) throw ValidationError("latent dims: views must be >= 1");
}

SlotKind slot_kind(int slot, int f) {
  if (slot < 0 || slot >= 2 * f + 4) throw ValidationError("slot index out of range");
  if (slot == 0) return SlotKind::CondRgb;
  if (slot <= f + 1) return SlotKind::NoisyRgb;
  if (slot == f + 2) return SlotKind::CondPose;
  return SlotKind::NoisyPose;
}

template <typename Scalar>
TokenGrid<Scalar> build_token_sequence(const LatentDims& dims, const nn::Matrix<Scalar>& cond_rgb,
                                       const nn::Matrix<Scalar>& noisy_rgb, const nn::Matrix<Scalar>& cond_pose,
                                       const nn::Matrix<Scalar>& noisy_pose) {
  dims.validate();
  const Eigen::Index hw = dims.tokens_per_slot();
  const Eigen::Index video = hw * dims.video_frames();
  auto check = [&](const nn::Matrix<Scalar>& m, Eigen::Index rows, const char* what) {
    if (m.rows() != rows || m.cols() != dims.c)
      throw ValidationError(std::string("build_token_sequence: ") + what + " has shape " + std::to_string(m.rows()) + "x" +
                            std::to_string(m.cols()) + ", expected " + std::to_string(rows) + "x" + std::to_string(dims.c));
  };
  check(cond_rgb, hw, "cond_rgb");
  check(noisy_rgb, video, "noisy_rgb");
  check(cond_pose, hw, "cond_pose");
  check(noisy_pose, video, "noisy_pose");

  TokenGrid<Scalar> g;
  g.dims = dims;
  g.values.resize(static_cast<Eigen::Index>(dims.tokens_per_view()), dims.c);
  g.values.middleRows(0, hw) = cond_rgb;
  g.values.middleRows(hw, video) = noisy_rgb;
  g.values.middleRows(hw + video, hw) = cond_pose;
  g.values.middleRows(2 * hw + video, video) = noisy_pose;
  return g;
}

template <typename Scalar>
TokenParts<Scalar> split_token_sequence(const TokenGrid<Scalar>& grid) {
  const auto& d = grid.dims;
  const Eigen::Index hw = d.tokens_per_slot();
  const Eigen::Index video = hw * d.video_frames();
  return {grid.values.middleRows(0, hw), grid.values.middleRows(hw, video), grid.values.middleRows(hw + video, hw),
          grid.values.middleRows(2 * hw + video, video)};
}

template <typename Scalar>
TokenGrid<Scalar> shared_rope(const TokenGrid<Scalar>& grid, const RopeTable& table) {
  const auto& d = grid.dims;
  if (table.temporal() != d.f + 2 || table.height() != d.h || table.width() != d.w)
    throw ValidationError("shared_rope: table dims do not match grid");
  if (d.c % table.head_dim() != 0) throw ValidationError("shared_rope: channels not a multiple of head_dim");
  TokenGrid<Scalar> out = grid;
  for (int s = 0; s < d.slots(); ++s) {
    const int i = rope_temporal_index(s, d.f, true);
    for (int y = 0; y < d.h; ++y)
      for (int x = 0; x < d.w; ++x) {
        auto row = out.values.row(out.row(s, y, x));
        apply_rope(table, i, x, y, row);
      }
  }
  return out;
}

template <typename Scalar>
nn::Matrix<Scalar> MultiViewGrid<Scalar>::stacked_values() const {
  const auto& d = views.front().dims;
  nn::Matrix<Scalar> out(static_cast<Eigen::Index>(view_count()) * d.tokens_per_view(), d.c);
  for (int v = 0; v < view_count(); ++v)
    out.middleRows(static_cast<Eigen::Index>(v) * d.tokens_per_view(), d.tokens_per_view()) = views[static_cast<size_t>(v)].values;
  return out;
}

template <typename Scalar>
nn::Matrix<Scalar> MultiViewGrid<Scalar>::stacked_features() const {
  if (rays.size() != views.size()) throw ValidationError("multi-view grid: one ray map per view required");
  const auto& d = views.front().dims;
  const Eigen::Index hw = d.tokens_per_slot();
  nn::Matrix<Scalar> out(static_cast<Eigen::Index>(view_count()) * d.tokens_per_view(), d.c + 6);
  for (int v = 0; v < view_count(); ++v) {
    const auto& vg = views[static_cast<size_t>(v)];
    if (!(vg.dims == d)) throw ValidationError("multi-view grid: views disagree on latent dims");
    if (rays[static_cast<size_t>(v)].rows() != hw || rays[static_cast<size_t>(v)].cols() != 6)
      throw ValidationError("multi-view grid: ray map shape mismatch");
    for (int s = 0; s < d.slots(); ++s) {
      const Eigen::Index base = static_cast<Eigen::Index>(v) * d.tokens_per_view() + static_cast<Eigen::Index>(s) * hw;
      out.block(base, 0, hw, d.c) = vg.slot_block(s);
      out.block(base, d.c, hw, 6) = rays[static_cast<size_t>(v)];
    }
  }
  return out;
}

template <typename Scalar>
std::vector<nn::Matrix<Scalar>> inflate_views(const MultiViewGrid<Scalar>& grid) {
  const auto& d = grid.views.front().dims;
  const Eigen::Index hw = d.tokens_per_slot();
  std::vector<nn::Matrix<Scalar>> out;
  for (int s = 0; s < d.slots(); ++s) {
    nn::Matrix<Scalar> m(static_cast<Eigen::Index>(grid.view_count()) * hw, d.c);
    for (int v = 0; v < grid.view_count(); ++v) m.middleRows(static_cast<Eigen::Index>(v) * hw, hw) = grid.views[static_cast<size_t>(v)].slot_block(s);
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<nn::AttentionGroup> per_view_groups(const LatentDims& d) {
  std::vector<nn::AttentionGroup> groups(static_cast<size_t>(d.views));
  for (int v = 0; v < d.views; ++v) {
    auto& g = groups[static_cast<size_t>(v)];
    for (int r = 0; r < d.tokens_per_view(); ++r) g.queries.push_back(v * d.tokens_per_view() + r);
    g.keys = g.queries;
  }
  return groups;
}

std::vector<nn::AttentionGroup> per_slot_groups(const LatentDims& d) {
  std::vector<nn::AttentionGroup> groups(static_cast<size_t>(d.slots()));
  const int hw = d.tokens_per_slot();
  for (int s = 0; s < d.slots(); ++s) {
    auto& g = groups[static_cast<size_t>(s)];
    for (int v = 0; v < d.views; ++v)
      for (int r = 0; r < hw; ++r) g.queries.push_back(v * d.tokens_per_view() + s * hw + r);
    g.keys = g.queries;
  }
  return groups;
}

namespace {
template <typename Scalar>
nn::Matrix<Scalar> random_matrix(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  nn::Matrix<Scalar> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(stddev * rng.normal());
  return m;
}
}  // namespace

template <typename Scalar>
MultiViewAttentionWeights<Scalar> MultiViewAttentionWeights<Scalar>::random(int channels, int width, int heads,
                                                                            std::uint64_t seed) {
  Rng rng(seed);
  MultiViewAttentionWeights w;
  w.heads = heads;
  const double s_in = 1.0 / std::sqrt(channels + 6.0), s_out = 1.0 / std::sqrt(double(width));
  w.wq = random_matrix<Scalar>(channels + 6, width, s_in, rng);
  w.wk = random_matrix<Scalar>(channels + 6, width, s_in, rng);
  w.wv = random_matrix<Scalar>(channels + 6, width, s_in, rng);
  w.wo = random_matrix<Scalar>(width, channels, s_out, rng);
  return w;
}

template <typename Scalar>
MultiViewGrid<Scalar> multiview_attention(const MultiViewGrid<Scalar>& grid, const MultiViewAttentionWeights<Scalar>& weights) {
  if (grid.views.empty()) throw ValidationError("multiview_attention: no views");
  LatentDims d = grid.views.front().dims;
  d.views = grid.view_count();
  const auto groups = per_slot_groups(d);

  nn::Tape<Scalar> tape;
  const auto x = tape.leaf(grid.stacked_features(), false);
  const auto q = tape.matmul(x, tape.leaf(weights.wq, false));
  const auto k = tape.matmul(x, tape.leaf(weights.wk, false));
  const auto v = tape.matmul(x, tape.leaf(weights.wv, false));
  const auto a = tape.attention(q, k, v, weights.heads, &groups);
  const auto o = tape.matmul(a, tape.leaf(weights.wo, false));

  MultiViewGrid<Scalar> out = grid;
  const auto& delta = tape.value(o);
  for (int vi = 0; vi < d.views; ++vi)
    out.views[static_cast<size_t>(vi)].values += delta.middleRows(static_cast<Eigen::Index>(vi) * d.tokens_per_view(), d.tokens_per_view());
  return out;
}

template <typename Scalar>
nn::Matrix<Scalar> frequency_encode(double x, int n_freq) {
  nn::Matrix<Scalar> e(1, 2 * n_freq);
  for (int k = 0; k < n_freq; ++k) {
    const double w = std::exp(-std::log(10000.0) * k / n_freq);
    e(0, k) = static_cast<Scalar>(std::cos(x * w));
    e(0, n_freq + k) = static_cast<Scalar>(std::sin(x * w));
  }
  return e;
}

template <typename Scalar>
ModalityEmbedding<Scalar> ModalityEmbedding<Scalar>::init(int width, int n_freq, std::uint64_t seed) {
  Rng rng(seed);
  ModalityEmbedding e;
  e.n_freq = n_freq;
  e.w1 = random_matrix<Scalar>(2 * n_freq, width, 1.0 / std::sqrt(2.0 * n_freq), rng);
  e.b1 = nn::Matrix<Scalar>::Zero(1, width);
  e.w2 = nn::Matrix<Scalar>::Zero(width, width);
  e.b2 = nn::Matrix<Scalar>::Zero(1, width);
  return e;
}

template <typename Scalar>
nn::Matrix<Scalar> ModalityEmbedding<Scalar>::embed(int identifier) const {
  const nn::Matrix<Scalar> enc = frequency_encode<Scalar>(identifier, n_freq);
  nn::Matrix<Scalar> hdn = enc * w1 + b1;
  hdn = (hdn.array() / (Scalar(1) + (-hdn.array()).exp())).matrix();
  return hdn * w2 + b2;
}

template <typename Scalar>
nn::Matrix<Scalar> modality_bias(const ModalityEmbedding<Scalar>& emb, const nn::Matrix<Scalar>& timestep_emb, int identifier) {
  if (identifier != 0 && identifier != 1) throw ValidationError("modality_bias: identifier must be 0 or 1");
  if (timestep_emb.rows() != 1 || timestep_emb.cols() != emb.w2.cols())
    throw ValidationError("modality_bias: timestep embedding width mismatch");
  return timestep_emb + emb.embed(identifier);
}

#define ANIMAX_INSTANTIATE_TOKENS(S)                                                                                  \
  template TokenGrid<S> build_token_sequence(const LatentDims&, const nn::Matrix<S>&, const nn::Matrix<S>&,          \
                                             const nn::Matrix<S>&, const nn::Matrix<S>&);                            \
  template TokenParts<S> split_token_sequence(const TokenGrid<S>&);                                                  \
  template TokenGrid<S> shared_rope(const TokenGrid<S>&, const RopeTable&);                                          \
  template struct MultiViewGrid<S>;                                                                                  \
  template std::vector<nn::Matrix<S>> inflate_views(const MultiViewGrid<S>&);                                        \
  template struct MultiViewAttentionWeights<S>;                                                                      \
  template MultiViewGrid<S> multiview_attention(const MultiViewGrid<S>&, const MultiViewAttentionWeights<S>&);       \
  template nn::Matrix<S> frequency_encode<S>(double, int);                                                           \
  template struct ModalityEmbedding<S>;                                                                              \
  template nn::Matrix<S> modality_bias(const ModalityEmbedding<S>&, const nn::Matrix<S>&, int);

ANIMAX_INSTANTIATE_TOKENS(float)
ANIMAX_INSTANTIATE_TOKENS(double)

}  // namespace animax

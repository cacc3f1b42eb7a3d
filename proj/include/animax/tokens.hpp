#pragma once

#include <Eigen/Core>
#include <array>
#include <vector>

#include "animax/camera.hpp"
#include "animax/rope.hpp"
#include "animax/tape.hpp"

namespace animax {

// Latent geometry. Each view carries 1 + f video latents per modality, which
// with the two condition frames gives T = 2f + 4 temporal slots.
struct LatentDims {
  int f = 1;
  int h = 1;
  int w = 1;
  int c = 1;
  int views = 1;

  int slots() const { return 2 * f + 4; }
  int video_frames() const { return f + 1; }
  // Pixel-space frames covered by one latent video (temporal compression 4).
  int pixel_frames() const { return 4 * f; }
  int tokens_per_slot() const { return h * w; }
  int tokens_per_view() const { return slots() * h * w; }
  int total_tokens() const { return views * tokens_per_view(); }
  void validate() const;
  bool operator==(const LatentDims&) const = default;
};

enum class SlotKind { CondRgb, NoisyRgb, CondPose, NoisyPose };

// Slot 0 cond_rgb, 1..f+1 noisy_rgb, f+2 cond_pose, f+3..2f+3 noisy_pose.
SlotKind slot_kind(int slot, int f);
inline bool is_condition_slot(int slot, int f) {
  const auto k = slot_kind(slot, f);
  return k == SlotKind::CondRgb || k == SlotKind::CondPose;
}
// 0 for RGB slots, 1 for pose slots.
inline int modality_of_slot(int slot, int f) { return slot < f + 2 ? 0 : 1; }
// Temporal RoPE index. With sharing, slot s and s + f + 2 map to the same index.
inline int rope_temporal_index(int slot, int f, bool shared) { return shared && slot >= f + 2 ? slot - (f + 2) : slot; }

// One view's unified sequence x^total: rows are tokens ordered (slot, y, x), columns channels.
template <typename Scalar>
struct TokenGrid {
  LatentDims dims;
  nn::Matrix<Scalar> values;

  Eigen::Index row(int slot, int y, int x) const {
    return (static_cast<Eigen::Index>(slot) * dims.h + y) * dims.w + x;
  }
  auto slot_block(int slot) { return values.middleRows(static_cast<Eigen::Index>(slot) * dims.tokens_per_slot(), dims.tokens_per_slot()); }
  auto slot_block(int slot) const {
    return values.middleRows(static_cast<Eigen::Index>(slot) * dims.tokens_per_slot(), dims.tokens_per_slot());
  }
};

template <typename Scalar>
struct TokenParts {
  nn::Matrix<Scalar> cond_rgb;    // h*w x c
  nn::Matrix<Scalar> noisy_rgb;   // (1+f)*h*w x c
  nn::Matrix<Scalar> cond_pose;
  nn::Matrix<Scalar> noisy_pose;
};

// Concatenates the four streams along time. Throws ValidationError on shape mismatch.
template <typename Scalar>
TokenGrid<Scalar> build_token_sequence(const LatentDims& dims, const nn::Matrix<Scalar>& cond_rgb,
                                       const nn::Matrix<Scalar>& noisy_rgb, const nn::Matrix<Scalar>& cond_pose,
                                       const nn::Matrix<Scalar>& noisy_pose);

template <typename Scalar>
TokenParts<Scalar> split_token_sequence(const TokenGrid<Scalar>& grid);

// Position-encodes every token; slots s and s + f + 2 receive identical rotations.
// Throws ValidationError when the table does not match the grid.
template <typename Scalar>
TokenGrid<Scalar> shared_rope(const TokenGrid<Scalar>& grid, const RopeTable& table);

// N views plus their Plücker maps (h*w x 6 each), concatenated channel-wise on use.
template <typename Scalar>
struct MultiViewGrid {
  std::vector<TokenGrid<Scalar>> views;
  std::vector<nn::Matrix<Scalar>> rays;

  int view_count() const { return static_cast<int>(views.size()); }
  // All views stacked view-major: N*T*h*w x c.
  nn::Matrix<Scalar> stacked_values() const;
  // Stacked values with each token's ray appended: N*T*h*w x (c + 6).
  nn::Matrix<Scalar> stacked_features() const;
};

template <typename Scalar>
nn::Matrix<Scalar> plucker_matrix(const PluckerMap& map) {
  return map.rays.template cast<Scalar>();
}

// Inflated layout: T matrices, each (N*h*w) x c, view-major within a slot.
template <typename Scalar>
std::vector<nn::Matrix<Scalar>> inflate_views(const MultiViewGrid<Scalar>& grid);
template <typename Scalar>
std::array<Eigen::Index, 3> inflated_shape(const MultiViewGrid<Scalar>& grid) {
  const auto& d = grid.views.front().dims;
  return {d.slots(), static_cast<Eigen::Index>(grid.view_count()) * d.h * d.w, d.c};
}

// Attention groups over stacked rows: one group per view (3D attention) or one
// per temporal slot spanning all views (multi-view attention).
std::vector<nn::AttentionGroup> per_view_groups(const LatentDims& dims);
std::vector<nn::AttentionGroup> per_slot_groups(const LatentDims& dims);

template <typename Scalar>
struct MultiViewAttentionWeights {
  int heads = 1;
  nn::Matrix<Scalar> wq, wk, wv;  // (c + 6) x d
  nn::Matrix<Scalar> wo;          // d x c

  static MultiViewAttentionWeights random(int channels, int width, int heads, std::uint64_t seed);
};

// Residual self-attention over the N*h*w tokens of every temporal slot.
template <typename Scalar>
MultiViewGrid<Scalar> multiview_attention(const MultiViewGrid<Scalar>& grid, const MultiViewAttentionWeights<Scalar>& weights);

// [cos(x w_k), sin(x w_k)] with w_k = exp(-ln(10000) k / n), k < n.
template <typename Scalar>
nn::Matrix<Scalar> frequency_encode(double x, int n_freq);

// Identifier embedding added to the timestep embedding: frequency encoding of
// the identifier followed by Linear-SiLU-Linear, last layer zero at init.
template <typename Scalar>
struct ModalityEmbedding {
  int n_freq = 16;
  nn::Matrix<Scalar> w1, b1, w2, b2;

  static ModalityEmbedding init(int width, int n_freq, std::uint64_t seed);
  nn::Matrix<Scalar> embed(int identifier) const;
};

// timestep_emb + MLP(frequency_encode(identifier)); identifier must be 0 or 1.
template <typename Scalar>
nn::Matrix<Scalar> modality_bias(const ModalityEmbedding<Scalar>& emb, const nn::Matrix<Scalar>& timestep_emb, int identifier);

}  // namespace animax

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "animax/tape.hpp"
#include "animax/tokens.hpp"

namespace animax {

struct DenoiserConfig {
  int blocks = 2;
  int heads = 2;
  int width = 32;
  int mlp_ratio = 4;
  int patch_hidden = 0;    // > 0: one-hidden-layer MLPs replace the token in/out linears
  int channels = 8;        // latent channels c
  int label_vocab = 8;     // stand-in for the text prompt
  int label_tokens = 4;    // context length per label
  int time_freqs = 32;
  int modality_freqs = 16;
  int slot_freqs = 0;      // > 0: frequency code of the shared temporal index appended to token features
  double cond_drop = 0.2;  // probability of zeroing the image condition in training
  double guidance = 3.0;
  int steps = 50;
  bool shared_pe = true;
  double rope_base = 10000.0;

  int head_dim() const { return width / heads; }
  // Throws ValidationError when width % heads != 0, drop probability is outside [0, 1], etc.
  void validate() const;
};

// One forward-pass input: stacked x^mv (N*T*h*w x c, view-major, slot-major within
// a view), per-view Plücker rays (N*h*w x 6), label and timestep.
template <typename Scalar>
struct DenoiserInput {
  LatentDims dims;
  nn::Matrix<Scalar> tokens;
  nn::Matrix<Scalar> rays;
  int label = 0;
  double t = 0.0;
};

// Rows of the stacked layout that hold noisy (generated) tokens.
std::vector<int> noisy_rows(const LatentDims& dims);
std::vector<int> condition_rows(const LatentDims& dims);

template <typename Scalar>
class Denoiser {
 public:
  Denoiser() = default;
  Denoiser(const DenoiserConfig& config, std::uint64_t seed);

  const DenoiserConfig& config() const { return config_; }
  const std::vector<std::string>& names() const { return names_; }
  const std::vector<nn::Matrix<Scalar>>& params() const { return params_; }
  std::vector<nn::Matrix<Scalar>>& params() { return params_; }
  const nn::Matrix<Scalar>& param(const std::string& name) const;
  Eigen::Index parameter_count() const;

  // Predicted velocity for every row (condition rows included; callers ignore them).
  nn::Matrix<Scalar> predict(const DenoiserInput<Scalar>& in) const;

  // Mean squared error over noisy rows; accumulates parameter gradients into
  // `grads` (same layout as params) when non-null.
  Scalar loss(const DenoiserInput<Scalar>& in, const nn::Matrix<Scalar>& target,
              std::vector<nn::Matrix<Scalar>>* grads = nullptr) const;

  ModalityEmbedding<Scalar> modality_embedding() const;
  // Time embedding of t before the modality bias, 1 x width.
  nn::Matrix<Scalar> timestep_embedding(double t) const;
  // timestep + modality embedding as computed inside the network (row = identifier).
  nn::Matrix<Scalar> conditioned_embeddings(double t) const;

  template <typename Other>
  Denoiser<Other> cast() const {
    Denoiser<Other> out;
    out.config_ = config_;
    out.names_ = names_;
    for (const auto& p : params_) out.params_.push_back(p.template cast<Other>());
    return out;
  }

 private:
  template <typename>
  friend class Denoiser;

  void add(std::string name, nn::Matrix<Scalar> value);
  struct Graph;
  void build(Graph& g, const DenoiserInput<Scalar>& in, bool with_grad) const;

  DenoiserConfig config_;
  std::vector<std::string> names_;
  std::vector<nn::Matrix<Scalar>> params_;
};

// A clean multi-view clip: condition slots hold the template latents, noisy
// slots the clean video latents.
template <typename Scalar>
struct ToyExample {
  LatentDims dims;
  nn::Matrix<Scalar> clean;
  nn::Matrix<Scalar> rays;
  int label = 0;
  int source = 0;
};

// Rectified-flow pair: x_t = (1 - t) x0 + t eps on noisy rows, target eps - x0.
// Condition rows stay clean, or are zeroed when `drop_condition`.
template <typename Scalar>
std::pair<DenoiserInput<Scalar>, nn::Matrix<Scalar>> make_flow_pair(const ToyExample<Scalar>& ex, double t,
                                                                    const nn::Matrix<Scalar>& noise, bool drop_condition);

struct TrainConfig {
  int steps = 2000;
  int batch = 4;
  double learning_rate = 2e-3;
  bool cosine_decay = true;  // anneal the rate to zero over `steps`
  double timestep_shift = 1.0;  // t = s u / (1 + (s - 1) u), u uniform; s > 1 favors noisy inputs
  double grad_clip = 1.0;
  std::uint64_t seed = 0;
  std::vector<double> source_probabilities;  // empty: uniform over examples
  int threads = 1;
  int eval_draws = 4;
};

struct TrainResult {
  Denoiser<float> model;
  std::vector<double> loss_curve;  // per step batch loss
  double initial_eval_loss = 0.0;
  double final_eval_loss = 0.0;
  // Same evaluation with uniform timesteps, for comparing runs with different shifts.
  double initial_uniform_loss = 0.0;
  double final_uniform_loss = 0.0;
};

double shift_timestep(double u, double shift);

// Fixed-draw evaluation loss (no condition drop) under the training timestep
// distribution, deterministic for a seed.
double evaluation_loss(const Denoiser<float>& model, const std::vector<ToyExample<float>>& examples, std::uint64_t seed,
                       int draws, double shift = 1.0);

TrainResult train_toy(const std::vector<ToyExample<float>>& examples, const DenoiserConfig& config,
                      const TrainConfig& train);

struct SampleOptions {
  int steps = 50;
  double guidance = 3.0;
  double shift = 1.0;  // timestep grid shift_timestep(1 - i / steps)
  std::uint64_t seed = 0;
};

// Euler integration from t = 1 to 0 with classifier-free guidance on the image
// condition: v = v_uncond + s (v_cond - v_uncond); s = 1 uses v_cond alone.
// `conditions` supplies the condition rows; noisy rows are ignored. Returns the
// stacked grid with noisy rows replaced by the generated latents.
template <typename Scalar>
nn::Matrix<Scalar> sample(const Denoiser<Scalar>& model, const LatentDims& dims, const nn::Matrix<Scalar>& conditions,
                          const nn::Matrix<Scalar>& rays, int label, const SampleOptions& options);

// Per-view split of a stacked grid.
template <typename Scalar>
std::vector<TokenParts<Scalar>> split_views(const LatentDims& dims, const nn::Matrix<Scalar>& stacked);

}  // namespace animax

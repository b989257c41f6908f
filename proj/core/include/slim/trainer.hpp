#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "slim/embedding_store.hpp"
#include "slim/losses.hpp"
#include "slim/metrics.hpp"
#include "slim/model.hpp"
#include "slim/params.hpp"

namespace slim::train {

// Checkpoint entry holding the frame count used in training.
inline constexpr const char* kTargetFramesKey = "config/target_frames";

struct TrainConfig {
  model::Stage stage = model::Stage::stage1;
  std::size_t batch_size = 16;
  std::size_t epochs = 50;
  double lr_start = 0.005;
  double lr_end = 0.0001;
  std::size_t patience = 3;
  double lambda = loss::kDefaultLambda;
  std::size_t target_frames = 50;
  std::uint64_t seed = 0;
  loss::LossMode loss_mode = loss::LossMode::gram_scaled;
  std::size_t accumulation_steps = 1;
  double grad_clip = 5.0;  // global L2 norm; 0 disables
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  // Stage-2 embedding-level augmentation (applied to the projector inputs).
  bool augment = false;
  double augment_noise_std = 0.05;
  double augment_time_mask = 0.1;     // max share of frames zeroed
  double augment_feature_mask = 0.1;  // max share of features zeroed

  // Architecture. Feature widths are taken from the data at stage 1 and from
  // the stage-1 checkpoint at stage 2; only `variant` may differ at stage 2.
  model::ModelConfig model;

  static TrainConfig defaults(model::Stage stage);
  void validate() const;
};

// ---------------------------------------------------------------------------
// Optimisation primitives

struct AdamWState {
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
  std::size_t step = 0;
};

struct AdamWOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

using GradientList = std::vector<std::pair<std::string, Tensor>>;

// One AdamW step with decoupled weight decay:
//   p <- p - lr * wd * p;  p <- p - lr * m_hat / (sqrt(v_hat) + eps)
// Throws NumericalError naming the parameter when a gradient is not finite.
void adamw_step(model::ParamTable& params, const GradientList& grads, AdamWState& state, double lr,
                const AdamWOptions& opt = {});

// Affine decay from lr_start at epoch 0 to lr_end at epoch total - 1.
double linear_lr(std::size_t epoch, std::size_t total_epochs, double lr_start, double lr_end);

// Rescales `grads` in place when their global L2 norm exceeds max_norm.
// Returns the norm before clipping.
double clip_global_norm(GradientList& grads, double max_norm);

// ---------------------------------------------------------------------------
// Progress records

struct EpochRecord {
  std::size_t epoch = 0;
  std::string split;  // "train" or "valid"
  double loss = 0.0;
  std::optional<double> cross, intra, style, linguistics;  // stage 1
  double lr = 0.0;
  std::optional<double> eer;  // stage-2 validation
  std::size_t clipped_steps = 0;
};

std::string to_json_line(const EpochRecord& r);

using ProgressSink = std::function<void(const EpochRecord&)>;

struct TrainResult {
  model::ModelCheckpoint checkpoint;  // best-validation parameters
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
  bool early_stopped = false;
};

// ---------------------------------------------------------------------------
// Data

// One aligned sample with its layers averaged: both views are [T x F].
struct PooledSample {
  std::string id;
  store::Label label = store::Label::real;
  Tensor style;
  Tensor linguistics;
};

// Aligns one in-memory pair to `target_frames` and averages its layers.
PooledSample pool_sample(std::string id, store::Label label, const store::EmbeddingTensor& style,
                         const store::EmbeddingTensor& linguistics, std::size_t target_frames);

std::vector<PooledSample> load_pooled(const std::vector<store::ManifestRecord>& records,
                                      std::size_t target_frames);

// Frame count recorded in a checkpoint, or `fallback` when absent.
std::size_t checkpoint_target_frames(const model::ModelCheckpoint& ckpt, std::size_t fallback);

// ---------------------------------------------------------------------------
// Training

// Trains both compression modules on real speech only. Any fake record in the
// manifest is rejected before training starts.
TrainResult train_stage1(const std::vector<store::ManifestRecord>& manifest, const TrainConfig& cfg,
                         const ProgressSink& sink = {});
TrainResult train_stage1(const std::vector<PooledSample>& train_set,
                         const std::vector<PooledSample>& valid_set, const TrainConfig& cfg,
                         const ProgressSink& sink = {});

// Loads the frozen stage-1 modules and trains the projectors and the head.
TrainResult train_stage2(const std::vector<store::ManifestRecord>& manifest,
                         const model::ModelCheckpoint& stage1, const TrainConfig& cfg,
                         const ProgressSink& sink = {});
TrainResult train_stage2(const std::vector<PooledSample>& train_set,
                         const std::vector<PooledSample>& valid_set,
                         const model::ModelCheckpoint& stage1, const TrainConfig& cfg,
                         const ProgressSink& sink = {});

// ---------------------------------------------------------------------------
// Inference

struct ScoredSample {
  std::string id;
  store::Label label = store::Label::real;
  double logit = 0.0;  // fake-ness
  double score = 0.0;  // real-ness = -logit
};

// Eval-mode scores for every sample under a stage-2 checkpoint.
std::vector<ScoredSample> score_samples(const std::vector<PooledSample>& samples,
                                        const model::ModelCheckpoint& ckpt);

// EER over the scores (higher = more real); F1 calls a sample fake when its
// logit is positive.
metrics::EvalReport evaluate(const std::vector<ScoredSample>& scored);

// "id label score" lines for external DET tooling.
std::string score_file(const std::vector<ScoredSample>& scored);

// Stage-1 dependency features (eval mode): temporal means S-bar and L-bar.
struct DependencyPair {
  std::vector<double> style;
  std::vector<double> linguistics;
};
std::vector<DependencyPair> dependency_features(const std::vector<PooledSample>& samples,
                                                const model::ModelCheckpoint& ckpt);

}  // namespace slim::train

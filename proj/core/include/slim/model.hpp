#pragma once

#include <optional>
#include <string>

#include "slim/autodiff.hpp"
#include "slim/params.hpp"

namespace slim::model {

enum class Activation { relu, tanh };
std::string to_string(Activation a);
Activation parse_activation(const std::string& s);

// Which feature families enter the classification head.
enum class Variant { full, dependency, subspace, style, linguistics };
std::string to_string(Variant v);
Variant parse_variant(const std::string& s);

// Forward-pass mode. Dropout draws from `rng` only when train is set.
struct Mode {
  bool train = false;
  ad::Rng* rng = nullptr;

  static Mode eval() { return {}; }
};

struct ModelConfig {
  std::size_t style_features = 1024;
  std::size_t linguistics_features = 1024;
  std::size_t bottleneck = 256;
  std::size_t dependency_dim = 256;
  std::size_t projection_dim = 256;  // ASP + MLP output per subspace
  std::size_t head_hidden = 256;
  double bottleneck_dropout = 0.1;
  double projection_dropout = 0.1;
  double asp_dropout = 0.1;
  double head_dropout = 0.25;
  Activation activation = Activation::relu;
  Variant variant = Variant::full;

  std::size_t fusion_width() const;

  // Stored in checkpoints as rank-0 "config/<key>" entries.
  void write_to(ParamTable& params) const;
  static ModelConfig read_from(const ParamTable& params);
};

// Dependency features of one sample: the compressed series (D x T) and its
// temporal mean (D).
struct DependencyFeature {
  ad::Var series;
  ad::Var average;
};

// Layer pooling, a single residual bottleneck and a projection head:
//   x = mean_k X[k]                      (per frame, F)
//   h = act(x W_down + b_down)           (bottleneck)
//   r = dropout(x + dropout(h) W_up + b_up)   (recovered F)
//   S = r W_proj + b_proj                (D)
class CompressionModule {
 public:
  CompressionModule(std::string prefix, std::size_t features, const ModelConfig& cfg);

  void init(ParamTable& params, ad::Rng& rng) const;

  // frames: [N x F] already layer-pooled; returns [N x D].
  ad::Var forward_frames(const Bindings& p, ad::Var frames, const Mode& mode) const;
  // x: [K x F x T] subspace embedding.
  DependencyFeature compress(const Bindings& p, ad::Var x, const Mode& mode) const;

  const std::string& prefix() const { return prefix_; }
  std::size_t features() const { return features_; }

 private:
  std::string prefix_;
  std::size_t features_;
  std::size_t bottleneck_;
  std::size_t out_;
  double bottleneck_dropout_;
  double projection_dropout_;
  Activation act_;
};

// Attentive statistics pooling over time followed by a linear projection:
// per-frame scores -> softmax -> weighted mean and std -> [mu | sigma] W + b.
class AspProjector {
 public:
  AspProjector(std::string prefix, std::size_t features, const ModelConfig& cfg);

  void init(ParamTable& params, ad::Rng& rng) const;

  // frames: [T x F] layer-pooled; returns the [T x 1] attention weights.
  ad::Var attention(const Bindings& p, ad::Var frames) const;
  // Weighted statistics [1 x 2F] before the projection.
  ad::Var pooled_statistics(const Bindings& p, ad::Var frames) const;
  // Returns [1 x projection_dim].
  ad::Var project_frames(const Bindings& p, ad::Var frames, const Mode& mode) const;
  // x: [K x F x T].
  ad::Var project(const Bindings& p, ad::Var x, const Mode& mode) const;

  const std::string& prefix() const { return prefix_; }

 private:
  std::string prefix_;
  std::size_t features_;
  std::size_t out_;
  double dropout_;
};

// fc1 -> act -> dropout -> fc2, producing one logit per row (fake-ness).
class ClassifierHead {
 public:
  ClassifierHead(std::string prefix, std::size_t input, const ModelConfig& cfg);

  void init(ParamTable& params, ad::Rng& rng) const;
  // fused: [B x input] -> [B x 1].
  ad::Var forward(const Bindings& p, ad::Var fused, const Mode& mode) const;

  std::size_t input() const { return input_; }

 private:
  std::string prefix_;
  std::size_t input_;
  std::size_t hidden_;
  double dropout_;
  Activation act_;
};

// Layer mean of a [K x F x T] tensor, transposed to time-major [T x F].
ad::Var pool_layers(ad::Var x);

// The full two-stage model. Stage-1 parameters live under "style_compress."
// and "ling_compress."; stage-2 parameters under "style_asp.", "ling_asp."
// and "head.".
class SlimModel {
 public:
  explicit SlimModel(ModelConfig cfg);

  const ModelConfig& config() const { return cfg_; }
  const CompressionModule& style_compression() const { return style_compress_; }
  const CompressionModule& linguistics_compression() const { return ling_compress_; }
  const AspProjector& style_projector() const { return style_asp_; }
  const AspProjector& linguistics_projector() const { return ling_asp_; }
  const ClassifierHead& head() const { return head_; }

  void init_stage1(ParamTable& params, ad::Rng& rng) const;
  void init_stage2(ParamTable& params, ad::Rng& rng) const;

  static bool is_stage1_param(const std::string& name);
  static bool is_stage2_param(const std::string& name);

  bool uses_dependency() const;
  bool uses_style_projection() const;
  bool uses_linguistics_projection() const;

  // Concatenates the enabled feature families for one sample into [1 x W].
  // Absent inputs (invalid Vars) are allowed for families the variant skips.
  ad::Var fuse(ad::Var style_proj, ad::Var ling_proj, ad::Var style_dep, ad::Var ling_dep) const;

  struct Output {
    ad::Var logit;  // [1 x 1]
    DependencyFeature style;
    DependencyFeature linguistics;
  };
  // Compression modules always run in eval mode; `mode` applies to the ASP
  // projectors and the head.
  Output forward_full(const Bindings& p, ad::Var style, ad::Var linguistics,
                      const Mode& mode) const;

 private:
  ModelConfig cfg_;
  CompressionModule style_compress_;
  CompressionModule ling_compress_;
  AspProjector style_asp_;
  AspProjector ling_asp_;
  ClassifierHead head_;
};

}  // namespace slim::model

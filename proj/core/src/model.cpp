#include "slim/model.hpp"

#include <cmath>
#include <vector>

#include "slim/error.hpp"

namespace slim::model {

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  throw ConfigError("unknown activation \"" + s + "\" (expected relu or tanh)");
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::dependency: return "dependency";
    case Variant::subspace: return "subspace";
    case Variant::style: return "style";
    case Variant::linguistics: return "linguistics";
  }
  return "?";
}

Variant parse_variant(const std::string& s) {
  if (s == "full") return Variant::full;
  if (s == "dependency") return Variant::dependency;
  if (s == "subspace") return Variant::subspace;
  if (s == "style") return Variant::style;
  if (s == "linguistics") return Variant::linguistics;
  throw ConfigError("unknown variant \"" + s +
                    "\" (expected full, dependency, subspace, style or linguistics)");
}

namespace {

ad::Var activate(ad::Var x, Activation a) {
  return a == Activation::relu ? ad::relu(x) : ad::tanh(x);
}

// U(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero bias.
void init_linear(ParamTable& params, const std::string& name, std::size_t in, std::size_t out,
                 ad::Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor w({in, out});
  for (auto& v : w.data()) v = dist(rng);
  params.set(name + ".weight", std::move(w));
  params.set(name + ".bias", Tensor({out}));
}

ad::Var apply_linear(const Bindings& p, const std::string& name, ad::Var x) {
  return ad::linear(x, p(name + ".weight"), p(name + ".bias"));
}

void require_features(ad::Var frames, std::size_t features, const std::string& who) {
  if (frames.value().rank() != 2 || frames.shape()[1] != features) {
    throw DimensionError(who + ": expected frames [N x " + std::to_string(features) + "], got " +
                         shape_str(frames.shape()));
  }
}

double config_value(const ParamTable& params, const std::string& key) {
  return params.get("config/" + key).item();
}

}  // namespace

// ---------------------------------------------------------------------------
// ModelConfig

std::size_t ModelConfig::fusion_width() const {
  switch (variant) {
    case Variant::full: return 2 * projection_dim + 2 * dependency_dim;
    case Variant::dependency: return 2 * dependency_dim;
    case Variant::subspace: return 2 * projection_dim;
    case Variant::style:
    case Variant::linguistics: return projection_dim;
  }
  return 0;
}

void ModelConfig::write_to(ParamTable& params) const {
  auto put = [&params](const std::string& key, double v) {
    params.set("config/" + key, Tensor::scalar(v));
  };
  put("style_features", static_cast<double>(style_features));
  put("linguistics_features", static_cast<double>(linguistics_features));
  put("bottleneck", static_cast<double>(bottleneck));
  put("dependency_dim", static_cast<double>(dependency_dim));
  put("projection_dim", static_cast<double>(projection_dim));
  put("head_hidden", static_cast<double>(head_hidden));
  put("bottleneck_dropout", bottleneck_dropout);
  put("projection_dropout", projection_dropout);
  put("asp_dropout", asp_dropout);
  put("head_dropout", head_dropout);
  put("activation", static_cast<double>(activation == Activation::relu ? 0 : 1));
  put("variant", static_cast<double>(static_cast<int>(variant)));
}

ModelConfig ModelConfig::read_from(const ParamTable& params) {
  ModelConfig c;
  auto size = [&params](const std::string& key) {
    return static_cast<std::size_t>(config_value(params, key));
  };
  c.style_features = size("style_features");
  c.linguistics_features = size("linguistics_features");
  c.bottleneck = size("bottleneck");
  c.dependency_dim = size("dependency_dim");
  c.projection_dim = size("projection_dim");
  c.head_hidden = size("head_hidden");
  c.bottleneck_dropout = config_value(params, "bottleneck_dropout");
  c.projection_dropout = config_value(params, "projection_dropout");
  c.asp_dropout = config_value(params, "asp_dropout");
  c.head_dropout = config_value(params, "head_dropout");
  c.activation = config_value(params, "activation") == 0.0 ? Activation::relu : Activation::tanh;
  const int v = static_cast<int>(config_value(params, "variant"));
  if (v < 0 || v > 4) throw FormatError("checkpoint holds unknown variant code " + std::to_string(v));
  c.variant = static_cast<Variant>(v);
  return c;
}

// ---------------------------------------------------------------------------
// CompressionModule

CompressionModule::CompressionModule(std::string prefix, std::size_t features,
                                     const ModelConfig& cfg)
    : prefix_(std::move(prefix)),
      features_(features),
      bottleneck_(cfg.bottleneck),
      out_(cfg.dependency_dim),
      bottleneck_dropout_(cfg.bottleneck_dropout),
      projection_dropout_(cfg.projection_dropout),
      act_(cfg.activation) {}

void CompressionModule::init(ParamTable& params, ad::Rng& rng) const {
  init_linear(params, prefix_ + ".down", features_, bottleneck_, rng);
  init_linear(params, prefix_ + ".up", bottleneck_, features_, rng);
  init_linear(params, prefix_ + ".proj", features_, out_, rng);
}

ad::Var CompressionModule::forward_frames(const Bindings& p, ad::Var frames,
                                          const Mode& mode) const {
  require_features(frames, features_, prefix_);
  ad::Rng* rng = mode.rng;
  if (mode.train && !rng) throw ConfigError("training-mode forward needs an rng");
  ad::Rng unused;
  ad::Rng& r = rng ? *rng : unused;

  ad::Var h = activate(apply_linear(p, prefix_ + ".down", frames), act_);
  h = ad::dropout(h, bottleneck_dropout_, r, mode.train);
  ad::Var recovered = ad::add(frames, apply_linear(p, prefix_ + ".up", h));
  recovered = ad::dropout(recovered, projection_dropout_, r, mode.train);
  return apply_linear(p, prefix_ + ".proj", recovered);
}

DependencyFeature CompressionModule::compress(const Bindings& p, ad::Var x,
                                              const Mode& mode) const {
  if (x.value().rank() != 3 || x.shape()[1] != features_) {
    throw DimensionError(prefix_ + ": expected [K x " + std::to_string(features_) +
                         " x T] input, got " + shape_str(x.shape()));
  }
  ad::Var series = forward_frames(p, pool_layers(x), mode);  // [T x D]
  DependencyFeature out;
  out.average = ad::reduce_mean(series, 0);
  out.series = ad::transpose(series);
  return out;
}

// ---------------------------------------------------------------------------
// AspProjector

AspProjector::AspProjector(std::string prefix, std::size_t features, const ModelConfig& cfg)
    : prefix_(std::move(prefix)),
      features_(features),
      out_(cfg.projection_dim),
      dropout_(cfg.asp_dropout) {}

void AspProjector::init(ParamTable& params, ad::Rng& rng) const {
  init_linear(params, prefix_ + ".attn", features_, 1, rng);
  init_linear(params, prefix_ + ".mlp", 2 * features_, out_, rng);
}

ad::Var AspProjector::attention(const Bindings& p, ad::Var frames) const {
  require_features(frames, features_, prefix_);
  return ad::softmax(apply_linear(p, prefix_ + ".attn", frames));
}

ad::Var AspProjector::pooled_statistics(const Bindings& p, ad::Var frames) const {
  ad::Var w = attention(p, frames);
  const ad::Var parts[] = {ad::weighted_mean(frames, w), ad::weighted_std(frames, w)};
  return ad::concat(parts, 1);
}

ad::Var AspProjector::project_frames(const Bindings& p, ad::Var frames, const Mode& mode) const {
  ad::Var stats = pooled_statistics(p, frames);
  ad::Var out = apply_linear(p, prefix_ + ".mlp", stats);
  if (mode.train && !mode.rng) throw ConfigError("training-mode forward needs an rng");
  ad::Rng unused;
  return ad::dropout(out, dropout_, mode.rng ? *mode.rng : unused, mode.train);
}

ad::Var AspProjector::project(const Bindings& p, ad::Var x, const Mode& mode) const {
  if (x.value().rank() != 3 || x.shape()[1] != features_) {
    throw DimensionError(prefix_ + ": expected [K x " + std::to_string(features_) +
                         " x T] input, got " + shape_str(x.shape()));
  }
  return project_frames(p, pool_layers(x), mode);
}

// ---------------------------------------------------------------------------
// ClassifierHead

ClassifierHead::ClassifierHead(std::string prefix, std::size_t input, const ModelConfig& cfg)
    : prefix_(std::move(prefix)),
      input_(input),
      hidden_(cfg.head_hidden),
      dropout_(cfg.head_dropout),
      act_(cfg.activation) {}

void ClassifierHead::init(ParamTable& params, ad::Rng& rng) const {
  init_linear(params, prefix_ + ".fc1", input_, hidden_, rng);
  init_linear(params, prefix_ + ".fc2", hidden_, 1, rng);
}

ad::Var ClassifierHead::forward(const Bindings& p, ad::Var fused, const Mode& mode) const {
  if (fused.value().rank() != 2 || fused.shape()[1] != input_) {
    throw DimensionError("classifier head expects [B x " + std::to_string(input_) + "], got " +
                         shape_str(fused.shape()));
  }
  if (mode.train && !mode.rng) throw ConfigError("training-mode forward needs an rng");
  ad::Rng unused;
  ad::Var h = activate(apply_linear(p, prefix_ + ".fc1", fused), act_);
  h = ad::dropout(h, dropout_, mode.rng ? *mode.rng : unused, mode.train);
  return apply_linear(p, prefix_ + ".fc2", h);
}

// ---------------------------------------------------------------------------
// SlimModel

ad::Var pool_layers(ad::Var x) {
  if (x.value().rank() != 3) {
    throw DimensionError("pool_layers expects [K x F x T], got " + shape_str(x.shape()));
  }
  return ad::transpose(ad::reduce_mean(x, 0));
}

SlimModel::SlimModel(ModelConfig cfg)
    : cfg_(cfg),
      style_compress_("style_compress", cfg.style_features, cfg),
      ling_compress_("ling_compress", cfg.linguistics_features, cfg),
      style_asp_("style_asp", cfg.style_features, cfg),
      ling_asp_("ling_asp", cfg.linguistics_features, cfg),
      head_("head", cfg.fusion_width(), cfg) {}

void SlimModel::init_stage1(ParamTable& params, ad::Rng& rng) const {
  style_compress_.init(params, rng);
  ling_compress_.init(params, rng);
}

void SlimModel::init_stage2(ParamTable& params, ad::Rng& rng) const {
  if (uses_style_projection()) style_asp_.init(params, rng);
  if (uses_linguistics_projection()) ling_asp_.init(params, rng);
  head_.init(params, rng);
}

bool SlimModel::is_stage1_param(const std::string& name) {
  return name.rfind("style_compress.", 0) == 0 || name.rfind("ling_compress.", 0) == 0;
}

bool SlimModel::is_stage2_param(const std::string& name) {
  return name.rfind("style_asp.", 0) == 0 || name.rfind("ling_asp.", 0) == 0 ||
         name.rfind("head.", 0) == 0;
}

bool SlimModel::uses_dependency() const {
  return cfg_.variant == Variant::full || cfg_.variant == Variant::dependency;
}

bool SlimModel::uses_style_projection() const {
  return cfg_.variant == Variant::full || cfg_.variant == Variant::subspace ||
         cfg_.variant == Variant::style;
}

bool SlimModel::uses_linguistics_projection() const {
  return cfg_.variant == Variant::full || cfg_.variant == Variant::subspace ||
         cfg_.variant == Variant::linguistics;
}

ad::Var SlimModel::fuse(ad::Var style_proj, ad::Var ling_proj, ad::Var style_dep,
                        ad::Var ling_dep) const {
  std::vector<ad::Var> parts;
  auto take = [&parts](ad::Var v, const char* what) {
    if (!v.valid()) throw ConfigError(std::string("fusion is missing the ") + what + " input");
    parts.push_back(v.value().rank() == 1 ? ad::reshape(v, {1, v.shape()[0]}) : v);
  };
  if (uses_style_projection()) take(style_proj, "style projection");
  if (uses_linguistics_projection()) take(ling_proj, "linguistics projection");
  if (uses_dependency()) {
    take(style_dep, "style dependency");
    take(ling_dep, "linguistics dependency");
  }
  return ad::concat(parts, 1);
}

SlimModel::Output SlimModel::forward_full(const Bindings& p, ad::Var style, ad::Var linguistics,
                                          const Mode& mode) const {
  Output out;
  out.style = style_compress_.compress(p, style, Mode::eval());
  out.linguistics = ling_compress_.compress(p, linguistics, Mode::eval());
  ad::Var sp, lp;
  if (uses_style_projection()) sp = style_asp_.project(p, style, mode);
  if (uses_linguistics_projection()) lp = ling_asp_.project(p, linguistics, mode);
  ad::Var fused = fuse(sp, lp, out.style.average, out.linguistics.average);
  out.logit = head_.forward(p, fused, mode);
  return out;
}

}  // namespace slim::model

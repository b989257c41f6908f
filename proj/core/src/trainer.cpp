#include "slim/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "slim/error.hpp"

namespace slim::train {

using model::ModelCheckpoint;
using model::ParamTable;
using model::SlimModel;
using store::Label;

TrainConfig TrainConfig::defaults(model::Stage stage) {
  TrainConfig c;
  c.stage = stage;
  if (stage == model::Stage::stage2) {
    c.batch_size = 2;
    c.epochs = 10;
    c.lr_start = 0.0001;
    c.lr_end = 0.00001;
  }
  return c;
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ValidationError("Batch size must be at least 1");
  if (stage == model::Stage::stage1 && batch_size < 2) {
    throw ValidationError("stage-1 Batch size must be at least 2 (batch standardization)");
  }
  if (epochs < 1) throw ValidationError("Epochs must be at least 1");
  if (!(lr_end > 0.0)) throw ValidationError("End LR must be positive");
  if (!(lr_start >= lr_end)) throw ValidationError("Starting LR must be >= End LR");
  if (patience < 1) throw ValidationError("Early-stop patience must be at least 1");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ValidationError("lambda must lie in [0, 1]");
  if (target_frames < 1) throw ValidationError("Target frames must be at least 1");
  if (accumulation_steps < 1) throw ValidationError("Accumulation steps must be at least 1");
  if (!(grad_clip >= 0.0)) throw ValidationError("Gradient clip must be >= 0");
  if (!(weight_decay >= 0.0)) throw ValidationError("Weight decay must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw ValidationError("AdamW betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ValidationError("AdamW epsilon must be positive");
  if (!(augment_noise_std >= 0.0)) throw ValidationError("Augment noise std must be >= 0");
  if (!(augment_time_mask >= 0.0 && augment_time_mask <= 1.0) ||
      !(augment_feature_mask >= 0.0 && augment_feature_mask <= 1.0)) {
    throw ValidationError("augment mask shares must lie in [0, 1]");
  }
  for (double d : {model.bottleneck_dropout, model.projection_dropout, model.asp_dropout,
                   model.head_dropout}) {
    if (!(d >= 0.0 && d < 1.0)) throw ValidationError("dropout rates must lie in [0, 1)");
  }
  if (model.bottleneck < 1 || model.dependency_dim < 1 || model.projection_dim < 1 ||
      model.head_hidden < 1) {
    throw ValidationError("layer widths must be at least 1");
  }
}

// ---------------------------------------------------------------------------
// Optimisation primitives

void adamw_step(ParamTable& params, const GradientList& grads, AdamWState& state, double lr,
                const AdamWOptions& opt) {
  for (const auto& [name, g] : grads) {
    if (!g.all_finite()) throw NumericalError("non-finite gradient for parameter \"" + name + "\"");
    if (params.get(name).shape() != g.shape()) {
      throw DimensionError("gradient for \"" + name + "\" has shape " + shape_str(g.shape()) +
                           ", parameter has " + shape_str(params.get(name).shape()));
    }
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(state.step));
  for (const auto& [name, g] : grads) {
    Tensor p = params.get(name);
    auto [mit, m_new] = state.m.try_emplace(name, Tensor(g.shape()));
    auto [vit, v_new] = state.v.try_emplace(name, Tensor(g.shape()));
    if (mit->second.shape() != g.shape() || vit->second.shape() != g.shape()) {
      throw DimensionError("optimizer state for \"" + name + "\" does not match its gradient");
    }
    auto pd = p.data();
    auto md = mit->second.data();
    auto vd = vit->second.data();
    const auto gd = g.data();
    for (std::size_t i = 0; i < pd.size(); ++i) {
      pd[i] -= lr * opt.weight_decay * pd[i];
      md[i] = opt.beta1 * md[i] + (1.0 - opt.beta1) * gd[i];
      vd[i] = opt.beta2 * vd[i] + (1.0 - opt.beta2) * gd[i] * gd[i];
      const double m_hat = md[i] / bc1;
      const double v_hat = vd[i] / bc2;
      pd[i] -= lr * m_hat / (std::sqrt(v_hat) + opt.eps);
    }
    params.set(name, std::move(p));
  }
}

double linear_lr(std::size_t epoch, std::size_t total_epochs, double lr_start, double lr_end) {
  if (total_epochs == 0 || epoch >= total_epochs) {
    throw ValidationError("linear_lr: epoch " + std::to_string(epoch) + " outside [0, " +
                          std::to_string(total_epochs) + ")");
  }
  if (total_epochs == 1) return lr_start;
  const double frac = static_cast<double>(epoch) / static_cast<double>(total_epochs - 1);
  return (1.0 - frac) * lr_start + frac * lr_end;
}

double clip_global_norm(GradientList& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, g] : grads) {
    for (double v : g.data()) sq += v * v;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for (auto& [name, g] : grads) {
      for (double& v : g.data()) v *= factor;
    }
  }
  return norm;
}

// ---------------------------------------------------------------------------
// Progress records

namespace {

std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

std::string to_json_line(const EpochRecord& r) {
  std::ostringstream os;
  os << "{\"epoch\":" << r.epoch << ",\"split\":\"" << r.split << "\",\"loss\":" << num(r.loss);
  auto opt = [&os](const char* key, const std::optional<double>& v) {
    if (v) os << ",\"" << key << "\":" << num(*v);
  };
  opt("cross", r.cross);
  opt("intra", r.intra);
  opt("style", r.style);
  opt("linguistics", r.linguistics);
  os << ",\"lr\":" << num(r.lr);
  opt("eer", r.eer);
  os << ",\"clipped_steps\":" << r.clipped_steps << "}";
  return os.str();
}

// ---------------------------------------------------------------------------
// Data

namespace {

// [K, F, T] -> layer mean, time-major [T, F].
Tensor pool_tensor(const Tensor& x) {
  const std::size_t k = x.dim(0), f = x.dim(1), t = x.dim(2);
  Tensor out({t, f});
  auto src = x.data();
  auto dst = out.data();
  for (std::size_t l = 0; l < k; ++l) {
    for (std::size_t j = 0; j < f; ++j) {
      const double* row = src.data() + (l * f + j) * t;
      for (std::size_t s = 0; s < t; ++s) dst[s * f + j] += row[s];
    }
  }
  const double inv = 1.0 / static_cast<double>(k);
  for (double& v : dst) v *= inv;
  return out;
}

}  // namespace

PooledSample pool_sample(std::string id, Label label, const store::EmbeddingTensor& style,
                         const store::EmbeddingTensor& linguistics, std::size_t target_frames) {
  if (style.subspace != store::Subspace::style) {
    throw ValidationError(id + ": first view is not a style embedding");
  }
  if (linguistics.subspace != store::Subspace::linguistics) {
    throw ValidationError(id + ": second view is not a linguistics embedding");
  }
  const auto pair = store::align_pair(style, linguistics, target_frames);
  return {std::move(id), label, pool_tensor(pair.style), pool_tensor(pair.linguistics)};
}

std::vector<PooledSample> load_pooled(const std::vector<store::ManifestRecord>& records,
                                      std::size_t target_frames) {
  std::vector<PooledSample> out;
  out.reserve(records.size());
  for (const auto& rec : records) {
    out.push_back(pool_sample(rec.id, rec.label, store::read_embedding(rec.style_path),
                              store::read_embedding(rec.linguistics_path), target_frames));
  }
  return out;
}

std::size_t checkpoint_target_frames(const ModelCheckpoint& ckpt, std::size_t fallback) {
  if (!ckpt.params.contains(kTargetFramesKey)) return fallback;
  return static_cast<std::size_t>(ckpt.params.get(kTargetFramesKey).item());
}

// ---------------------------------------------------------------------------
// Training helpers

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kDropoutStream = 2;
constexpr std::uint64_t kShuffleStream = 1000;

// Stacks the [T x F] views of the selected samples into [(B*T) x F].
Tensor stack_frames(const std::vector<const Tensor*>& parts) {
  const std::size_t t = parts.front()->dim(0), f = parts.front()->dim(1);
  std::vector<double> data;
  data.reserve(parts.size() * t * f);
  for (const Tensor* p : parts) {
    if (p->dim(0) != t || p->dim(1) != f) {
      throw DimensionError("samples in one batch differ in shape: " + shape_str(p->shape()) +
                           " vs " + shape_str(parts.front()->shape()));
    }
    data.insert(data.end(), p->data().begin(), p->data().end());
  }
  return Tensor({parts.size() * t, f}, std::move(data));
}

void require_uniform(const std::vector<PooledSample>& samples, const std::string& what) {
  for (const auto& s : samples) {
    if (s.style.shape() != samples.front().style.shape() ||
        s.linguistics.shape() != samples.front().linguistics.shape()) {
      throw DimensionError(what + ": sample " + s.id + " has views " + shape_str(s.style.shape()) +
                           "/" + shape_str(s.linguistics.shape()) + ", expected " +
                           shape_str(samples.front().style.shape()) + "/" +
                           shape_str(samples.front().linguistics.shape()));
    }
  }
}

// Accumulates per-name gradients over micro-batches and applies AdamW.
class Optimizer {
 public:
  Optimizer(const TrainConfig& cfg) : cfg_(cfg) {
    opt_.beta1 = cfg.beta1;
    opt_.beta2 = cfg.beta2;
    opt_.eps = cfg.adam_eps;
    opt_.weight_decay = cfg.weight_decay;
  }

  void accumulate(const ad::Graph& g, const model::Bindings& b) {
    for (const auto& [name, v] : b.trainable_vars()) {
      Tensor grad = g.grad(v);
      auto it = pending_.find(name);
      if (it == pending_.end()) {
        pending_.emplace(name, std::move(grad));
      } else {
        auto dst = it->second.data();
        const auto src = grad.data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
      }
    }
    ++micro_;
    if (micro_ == cfg_.accumulation_steps) flush();
  }

  // Applies any pending gradient (also the tail of an epoch).
  void flush() {
    if (micro_ == 0) return;
    GradientList grads;
    const double inv = 1.0 / static_cast<double>(micro_);
    for (auto& [name, g] : pending_) {
      for (double& v : g.data()) v *= inv;
      grads.emplace_back(name, std::move(g));
    }
    pending_.clear();
    micro_ = 0;
    const double norm = clip_global_norm(grads, cfg_.grad_clip);
    if (cfg_.grad_clip > 0.0 && norm > cfg_.grad_clip) ++clipped_;
    adamw_step(*params_, grads, state_, lr_, opt_);
  }

  void bind(ParamTable& params) { params_ = &params; }
  void set_lr(double lr) { lr_ = lr; }
  std::size_t take_clipped() { return std::exchange(clipped_, 0); }

 private:
  const TrainConfig& cfg_;
  AdamWOptions opt_;
  AdamWState state_;
  ParamTable* params_ = nullptr;
  std::map<std::string, Tensor> pending_;
  std::size_t micro_ = 0;
  std::size_t clipped_ = 0;
  double lr_ = 0.0;
};

struct Stage1Batch {
  Tensor style;  // [(B*T) x F]
  Tensor linguistics;
  std::size_t batch = 0;
  std::size_t frames = 0;
};

Stage1Batch make_stage1_batch(const std::vector<PooledSample>& set,
                              const std::vector<std::size_t>& idx) {
  std::vector<const Tensor*> s, l;
  for (auto i : idx) {
    s.push_back(&set[i].style);
    l.push_back(&set[i].linguistics);
  }
  return {stack_frames(s), stack_frames(l), idx.size(), set[idx.front()].style.dim(0)};
}

loss::Stage1Loss stage1_forward(const SlimModel& m, const model::Bindings& b, const Stage1Batch& x,
                                const model::Mode& mode, const TrainConfig& cfg) {
  ad::Graph& g = b.graph();
  const std::size_t d = m.config().dependency_dim;
  ad::Var s = m.style_compression().forward_frames(b, g.constant(x.style), mode);
  ad::Var l = m.linguistics_compression().forward_frames(b, g.constant(x.linguistics), mode);
  s = ad::reshape(s, {x.batch, x.frames, d});
  l = ad::reshape(l, {x.batch, x.frames, d});
  return loss::stage1_loss(s, l, cfg.lambda, cfg.loss_mode);
}

struct LossSums {
  double total = 0, cross = 0, intra = 0, style = 0, ling = 0, weight = 0;

  void add(const loss::Stage1LossBreakdown& br, double w) {
    total += w * br.total;
    cross += w * br.cross;
    intra += w * br.intra;
    style += w * br.style;
    ling += w * br.linguistics;
    weight += w;
  }

  EpochRecord record(std::size_t epoch, const char* split, double lr) const {
    EpochRecord r;
    r.epoch = epoch;
    r.split = split;
    r.loss = total / weight;
    r.cross = cross / weight;
    r.intra = intra / weight;
    r.style = style / weight;
    r.linguistics = ling / weight;
    r.lr = lr;
    return r;
  }
};

double stage1_validation(const SlimModel& m, const ParamTable& params,
                         const std::vector<PooledSample>& valid, const TrainConfig& cfg,
                         LossSums& sums) {
  for (const auto& idx : store::batch_plan(valid.size(), cfg.batch_size, std::nullopt)) {
    if (idx.size() < 2) continue;
    ad::Graph g;
    model::Bindings b(g, params, nullptr);
    const auto br = stage1_forward(m, b, make_stage1_batch(valid, idx), model::Mode::eval(), cfg)
                        .breakdown();
    sums.add(br, static_cast<double>(idx.size()));
  }
  if (sums.weight == 0.0) throw ValidationError("validation split has no batch of at least 2 samples");
  return sums.total / sums.weight;
}

void check_views(const std::vector<PooledSample>& set, std::size_t fs, std::size_t fl,
                 const std::string& what) {
  for (const auto& s : set) {
    if (s.style.dim(1) != fs || s.linguistics.dim(1) != fl) {
      throw DimensionError(what + ": sample " + s.id + " has feature widths " +
                           std::to_string(s.style.dim(1)) + "/" +
                           std::to_string(s.linguistics.dim(1)) + ", model expects " +
                           std::to_string(fs) + "/" + std::to_string(fl));
    }
  }
}

std::vector<PooledSample> load_split(const std::vector<store::ManifestRecord>& manifest,
                                     store::Split split, std::size_t target_frames) {
  return load_pooled(store::filter_split(manifest, split), target_frames);
}

}  // namespace

// ---------------------------------------------------------------------------
// Stage 1

TrainResult train_stage1(const std::vector<store::ManifestRecord>& manifest, const TrainConfig& cfg,
                         const ProgressSink& sink) {
  for (const auto& r : manifest) {
    if (r.label != Label::real) {
      throw ValidationError("stage 1 trains on real speech only; record \"" + r.id +
                            "\" is labeled fake");
    }
  }
  cfg.validate();
  return train_stage1(load_split(manifest, store::Split::train, cfg.target_frames),
                      load_split(manifest, store::Split::valid, cfg.target_frames), cfg, sink);
}

TrainResult train_stage1(const std::vector<PooledSample>& train_set,
                         const std::vector<PooledSample>& valid_set, const TrainConfig& cfg,
                         const ProgressSink& sink) {
  cfg.validate();
  for (const auto* set : {&train_set, &valid_set}) {
    for (const auto& s : *set) {
      if (s.label != Label::real) {
        throw ValidationError("stage 1 trains on real speech only; sample \"" + s.id +
                              "\" is labeled fake");
      }
    }
  }
  if (train_set.size() < 2) throw ValidationError("stage 1 needs at least 2 training samples");
  if (valid_set.size() < 2) throw ValidationError("stage 1 needs at least 2 validation samples");
  require_uniform(train_set, "stage-1 training set");
  require_uniform(valid_set, "stage-1 validation set");

  model::ModelConfig mc = cfg.model;
  mc.style_features = train_set.front().style.dim(1);
  mc.linguistics_features = train_set.front().linguistics.dim(1);
  check_views(valid_set, mc.style_features, mc.linguistics_features, "stage-1 validation set");
  const SlimModel m(mc);

  ParamTable params;
  ad::Rng init_rng(mix_seed(cfg.seed, kInitStream));
  m.init_stage1(params, init_rng);
  mc.write_to(params);
  params.set(std::string(kTargetFramesKey), Tensor::scalar(static_cast<double>(cfg.target_frames)));

  ad::Rng dropout_rng(mix_seed(cfg.seed, kDropoutStream));
  Optimizer opt(cfg);
  opt.bind(params);

  TrainResult result;
  double best = std::numeric_limits<double>::infinity();
  ParamTable best_params = params;
  std::size_t stale = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = linear_lr(epoch, cfg.epochs, cfg.lr_start, cfg.lr_end);
    opt.set_lr(lr);
    LossSums train_sums;
    const auto plan = store::batch_plan(train_set.size(), cfg.batch_size,
                                        mix_seed(cfg.seed, kShuffleStream + epoch));
    for (const auto& idx : plan) {
      if (idx.size() < 2) continue;
      ad::Graph g;
      model::Bindings b(g, params, SlimModel::is_stage1_param);
      const model::Mode mode{true, &dropout_rng};
      const auto l = stage1_forward(m, b, make_stage1_batch(train_set, idx), mode, cfg);
      g.backward(l.total);
      train_sums.add(l.breakdown(), static_cast<double>(idx.size()));
      opt.accumulate(g, b);
    }
    opt.flush();

    EpochRecord tr = train_sums.record(epoch, "train", lr);
    tr.clipped_steps = opt.take_clipped();
    LossSums valid_sums;
    const double val = stage1_validation(m, params, valid_set, cfg, valid_sums);
    EpochRecord vr = valid_sums.record(epoch, "valid", lr);
    for (const auto& r : {tr, vr}) {
      result.history.push_back(r);
      if (sink) sink(r);
    }
    result.epochs_run = epoch + 1;

    if (val < best) {
      best = val;
      best_params = params;
      result.best_epoch = epoch;
      stale = 0;
    } else if (++stale >= cfg.patience) {
      result.early_stopped = true;
      break;
    }
  }
  result.checkpoint = {model::Stage::stage1, std::move(best_params)};
  return result;
}

// ---------------------------------------------------------------------------
// Stage 2

namespace {

struct Stage2Sample {
  const PooledSample* sample;
  Tensor style_dep;  // [1 x D]
  Tensor ling_dep;
  double target;
};

// Eval-mode S-bar / L-bar of one sample under frozen compression modules.
std::pair<Tensor, Tensor> frozen_dependency(const SlimModel& m, const ParamTable& params,
                                            const PooledSample& s) {
  ad::Graph g;
  model::Bindings b(g, params, nullptr);
  const auto mode = model::Mode::eval();
  ad::Var sd = ad::reduce_mean(m.style_compression().forward_frames(b, g.constant(s.style), mode), 0);
  ad::Var ld = ad::reduce_mean(
      m.linguistics_compression().forward_frames(b, g.constant(s.linguistics), mode), 0);
  const std::size_t d = m.config().dependency_dim;
  return {sd.value().reshaped({1, d}), ld.value().reshaped({1, d})};
}

std::vector<Stage2Sample> prepare_stage2(const SlimModel& m, const ParamTable& params,
                                         const std::vector<PooledSample>& set) {
  std::vector<Stage2Sample> out;
  out.reserve(set.size());
  for (const auto& s : set) {
    auto [sd, ld] = frozen_dependency(m, params, s);
    out.push_back({&s, std::move(sd), std::move(ld), store::label_target(s.label)});
  }
  return out;
}

Tensor augment_view(const Tensor& x, const TrainConfig& cfg, ad::Rng& rng) {
  Tensor out = x;
  const std::size_t t = x.dim(0), f = x.dim(1);
  auto d = out.data();
  std::normal_distribution<double> noise(0.0, cfg.augment_noise_std);
  if (cfg.augment_noise_std > 0.0) {
    for (double& v : d) v += noise(rng);
  }
  auto span_of = [&rng](std::size_t n, double share) -> std::pair<std::size_t, std::size_t> {
    const auto max_len = static_cast<std::size_t>(std::floor(share * static_cast<double>(n)));
    if (max_len == 0) return {0, 0};
    const std::size_t len = std::uniform_int_distribution<std::size_t>(0, max_len)(rng);
    const std::size_t start = std::uniform_int_distribution<std::size_t>(0, n - len)(rng);
    return {start, len};
  };
  const auto [ts, tl] = span_of(t, cfg.augment_time_mask);
  for (std::size_t s = ts; s < ts + tl; ++s) {
    for (std::size_t j = 0; j < f; ++j) d[s * f + j] = 0.0;
  }
  const auto [fs, fl] = span_of(f, cfg.augment_feature_mask);
  for (std::size_t s = 0; s < t; ++s) {
    for (std::size_t j = fs; j < fs + fl; ++j) d[s * f + j] = 0.0;
  }
  return out;
}

// Logits [B x 1] for a batch of prepared samples.
ad::Var stage2_logits(const SlimModel& m, const model::Bindings& b,
                      const std::vector<const Stage2Sample*>& batch, const model::Mode& mode,
                      const TrainConfig* augment_cfg) {
  ad::Graph& g = b.graph();
  std::vector<ad::Var> rows;
  rows.reserve(batch.size());
  for (const Stage2Sample* s : batch) {
    ad::Var sp, lp, sd, ld;
    if (m.uses_style_projection()) {
      Tensor frames = augment_cfg ? augment_view(s->sample->style, *augment_cfg, *mode.rng)
                                  : s->sample->style;
      sp = m.style_projector().project_frames(b, g.constant(std::move(frames)), mode);
    }
    if (m.uses_linguistics_projection()) {
      Tensor frames = augment_cfg ? augment_view(s->sample->linguistics, *augment_cfg, *mode.rng)
                                  : s->sample->linguistics;
      lp = m.linguistics_projector().project_frames(b, g.constant(std::move(frames)), mode);
    }
    if (m.uses_dependency()) {
      sd = g.constant(s->style_dep);
      ld = g.constant(s->ling_dep);
    }
    rows.push_back(m.fuse(sp, lp, sd, ld));
  }
  return m.head().forward(b, ad::concat(rows, 0), mode);
}

struct Stage2Eval {
  std::vector<double> logits;
  double bce = 0.0;
};

Stage2Eval stage2_eval(const SlimModel& m, const ParamTable& params,
                       const std::vector<Stage2Sample>& set) {
  Stage2Eval out;
  for (const auto& s : set) {
    ad::Graph g;
    model::Bindings b(g, params, nullptr);
    ad::Var logit = stage2_logits(m, b, {&s}, model::Mode::eval(), nullptr);
    const double target = s.target;
    out.bce += loss::bce_loss(logit, std::span<const double>(&target, 1)).value().item();
    out.logits.push_back(logit.value().item());
  }
  out.bce /= static_cast<double>(set.size());
  return out;
}

double logits_eer(const std::vector<Stage2Sample>& set, const std::vector<double>& logits) {
  std::vector<double> real, fake;
  for (std::size_t i = 0; i < set.size(); ++i) {
    (set[i].target == 1.0 ? fake : real).push_back(-logits[i]);
  }
  return metrics::eer(real, fake).eer;
}

void require_both_classes(const std::vector<PooledSample>& set, const std::string& what) {
  bool real = false, fake = false;
  for (const auto& s : set) (s.label == Label::real ? real : fake) = true;
  if (!real || !fake) throw ValidationError(what + " must contain both real and fake samples");
}

model::ModelConfig stage2_model_config(const ModelCheckpoint& stage1, const TrainConfig& cfg) {
  if (stage1.stage != model::Stage::stage1) {
    throw ConfigError("stage 2 needs a stage-1 checkpoint, got a stage-2 checkpoint");
  }
  model::ModelConfig mc = model::ModelConfig::read_from(stage1.params);
  mc.variant = cfg.model.variant;
  mc.projection_dim = cfg.model.projection_dim;
  mc.head_hidden = cfg.model.head_hidden;
  mc.asp_dropout = cfg.model.asp_dropout;
  mc.head_dropout = cfg.model.head_dropout;
  mc.activation = cfg.model.activation;
  return mc;
}

}  // namespace

TrainResult train_stage2(const std::vector<store::ManifestRecord>& manifest,
                         const ModelCheckpoint& stage1, const TrainConfig& cfg,
                         const ProgressSink& sink) {
  cfg.validate();
  return train_stage2(load_split(manifest, store::Split::train, cfg.target_frames),
                      load_split(manifest, store::Split::valid, cfg.target_frames), stage1, cfg,
                      sink);
}

TrainResult train_stage2(const std::vector<PooledSample>& train_set,
                         const std::vector<PooledSample>& valid_set, const ModelCheckpoint& stage1,
                         const TrainConfig& cfg, const ProgressSink& sink) {
  cfg.validate();
  require_both_classes(train_set, "stage-2 training split");
  require_both_classes(valid_set, "stage-2 validation split");
  require_uniform(train_set, "stage-2 training set");
  require_uniform(valid_set, "stage-2 validation set");

  const model::ModelConfig mc = stage2_model_config(stage1, cfg);
  check_views(train_set, mc.style_features, mc.linguistics_features, "stage-2 training set");
  check_views(valid_set, mc.style_features, mc.linguistics_features, "stage-2 validation set");
  const SlimModel m(mc);

  ParamTable params;
  for (const auto& [name, value] : stage1.params.entries()) {
    if (SlimModel::is_stage1_param(name) || name.rfind("config/", 0) == 0) params.set(name, value);
  }
  ad::Rng init_rng(mix_seed(cfg.seed, kInitStream + 10));
  m.init_stage2(params, init_rng);
  mc.write_to(params);
  params.set(std::string(kTargetFramesKey), Tensor::scalar(static_cast<double>(cfg.target_frames)));

  const auto train_prepared = prepare_stage2(m, params, train_set);
  const auto valid_prepared = prepare_stage2(m, params, valid_set);

  ad::Rng dropout_rng(mix_seed(cfg.seed, kDropoutStream + 10));
  Optimizer opt(cfg);
  opt.bind(params);

  TrainResult result;
  double best_eer = std::numeric_limits<double>::infinity();
  double best_bce = std::numeric_limits<double>::infinity();
  ParamTable best_params = params;
  std::size_t stale = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = linear_lr(epoch, cfg.epochs, cfg.lr_start, cfg.lr_end);
    opt.set_lr(lr);
    double train_loss = 0.0, weight = 0.0;
    const auto plan = store::batch_plan(train_prepared.size(), cfg.batch_size,
                                        mix_seed(cfg.seed, kShuffleStream + epoch));
    for (const auto& idx : plan) {
      std::vector<const Stage2Sample*> batch;
      std::vector<double> targets;
      for (auto i : idx) {
        batch.push_back(&train_prepared[i]);
        targets.push_back(train_prepared[i].target);
      }
      ad::Graph g;
      model::Bindings b(g, params, SlimModel::is_stage2_param);
      const model::Mode mode{true, &dropout_rng};
      ad::Var logits = stage2_logits(m, b, batch, mode, cfg.augment ? &cfg : nullptr);
      ad::Var l = loss::bce_loss(logits, targets);
      g.backward(l);
      train_loss += l.value().item() * static_cast<double>(idx.size());
      weight += static_cast<double>(idx.size());
      opt.accumulate(g, b);
    }
    opt.flush();

    EpochRecord tr;
    tr.epoch = epoch;
    tr.split = "train";
    tr.loss = train_loss / weight;
    tr.lr = lr;
    tr.clipped_steps = opt.take_clipped();

    const Stage2Eval ev = stage2_eval(m, params, valid_prepared);
    EpochRecord vr;
    vr.epoch = epoch;
    vr.split = "valid";
    vr.loss = ev.bce;
    vr.lr = lr;
    vr.eer = logits_eer(valid_prepared, ev.logits);
    for (const auto& r : {tr, vr}) {
      result.history.push_back(r);
      if (sink) sink(r);
    }
    result.epochs_run = epoch + 1;

    if (*vr.eer < best_eer || (*vr.eer == best_eer && ev.bce < best_bce)) {
      best_eer = *vr.eer;
      best_bce = ev.bce;
      best_params = params;
      result.best_epoch = epoch;
      stale = 0;
    } else if (++stale >= cfg.patience) {
      result.early_stopped = true;
      break;
    }
  }
  result.checkpoint = {model::Stage::stage2, std::move(best_params)};
  return result;
}

// ---------------------------------------------------------------------------
// Inference

std::vector<ScoredSample> score_samples(const std::vector<PooledSample>& samples,
                                        const ModelCheckpoint& ckpt) {
  if (ckpt.stage != model::Stage::stage2) {
    throw ConfigError("scoring needs a stage-2 checkpoint");
  }
  const SlimModel m(model::ModelConfig::read_from(ckpt.params));
  check_views(samples, m.config().style_features, m.config().linguistics_features, "scoring");
  const auto prepared = prepare_stage2(m, ckpt.params, samples);
  const Stage2Eval ev = stage2_eval(m, ckpt.params, prepared);
  std::vector<ScoredSample> out;
  out.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    out.push_back({samples[i].id, samples[i].label, ev.logits[i], -ev.logits[i]});
  }
  return out;
}

metrics::EvalReport evaluate(const std::vector<ScoredSample>& scored) {
  std::vector<double> real, fake;
  for (const auto& s : scored) (s.label == Label::real ? real : fake).push_back(s.score);
  return metrics::evaluate_scores(real, fake, 0.0);
}

std::string score_file(const std::vector<ScoredSample>& scored) {
  std::ostringstream os;
  for (const auto& s : scored) {
    os << s.id << ' ' << store::to_string(s.label) << ' ' << num(s.score) << '\n';
  }
  return os.str();
}

std::vector<DependencyPair> dependency_features(const std::vector<PooledSample>& samples,
                                                const ModelCheckpoint& ckpt) {
  const SlimModel m(model::ModelConfig::read_from(ckpt.params));
  check_views(samples, m.config().style_features, m.config().linguistics_features,
              "dependency features");
  std::vector<DependencyPair> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    auto [sd, ld] = frozen_dependency(m, ckpt.params, s);
    out.push_back({std::vector<double>(sd.data().begin(), sd.data().end()),
                   std::vector<double>(ld.data().begin(), ld.data().end())});
  }
  return out;
}

}  // namespace slim::train

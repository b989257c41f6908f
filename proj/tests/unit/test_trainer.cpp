#include <gtest/gtest.h>

#include <cmath>

#include "slim/error.hpp"
#include "slim/trainer.hpp"
#include "synth_pool.hpp"
#include "test_support.hpp"

using namespace slim;
using namespace slim::train;
using model::Stage;

namespace {

synth::SynthConfig tiny_world(std::uint64_t stream) {
  synth::SynthConfig c;
  c.features = 32;
  c.frames = 8;
  c.style_layers = 2;
  c.linguistics_layers = 2;
  c.stream = stream;
  return c;
}

TrainConfig stage1_config() {
  auto c = TrainConfig::defaults(Stage::stage1);
  c.target_frames = 8;
  c.epochs = 6;
  c.model.bottleneck = 16;
  c.model.dependency_dim = 16;
  return c;
}

TrainConfig stage2_config(model::Variant v) {
  auto c = TrainConfig::defaults(Stage::stage2);
  c.target_frames = 8;
  c.epochs = 3;
  c.batch_size = 8;
  c.lr_start = 1e-3;
  c.lr_end = 1e-4;
  c.model.projection_dim = 8;
  c.model.head_hidden = 8;
  c.model.variant = v;
  return c;
}

const TrainResult& stage1_fixture() {
  static const TrainResult r = train_stage1(support::pooled_stream(tiny_world(1), 40, 0, 8),
                                            support::pooled_stream(tiny_world(4), 12, 0, 8),
                                            stage1_config());
  return r;
}

}  // namespace

TEST(AdamW, HandEvaluatedFirstStep) {
  model::ParamTable p;
  p.set("w", Tensor::scalar(1.0));
  AdamWState st;
  adamw_step(p, {{"w", Tensor::scalar(1.0)}}, st, 0.001, {0.9, 0.999, 1e-8, 0.01});
  const double expect = 1.0 - 0.001 * 0.01 * 1.0 - 0.001 * (1.0 / (1.0 + 1e-8));
  EXPECT_NEAR(p.get("w").item(), expect, 1e-15);
  EXPECT_NEAR(p.get("w").item(), 0.99899, 1e-6);
  EXPECT_EQ(st.step, 1u);
}

TEST(AdamW, ZeroGradientZeroDecayLeavesParams) {
  model::ParamTable p;
  p.set("w", Tensor::vector({1.5, -2.0}));
  AdamWState st;
  for (int i = 0; i < 3; ++i)
    adamw_step(p, {{"w", Tensor::vector({0.0, 0.0})}}, st, 0.01, {0.9, 0.999, 1e-8, 0.0});
  EXPECT_EQ(p.get("w"), Tensor::vector({1.5, -2.0}));
}

TEST(AdamW, ConstantGradientDecreasesMonotonically) {
  model::ParamTable p;
  p.set("w", Tensor::scalar(1.0));
  AdamWState st;
  double prev = 1.0;
  for (int i = 0; i < 2; ++i) {
    adamw_step(p, {{"w", Tensor::scalar(0.5)}}, st, 0.01);
    EXPECT_LT(p.get("w").item(), prev);
    prev = p.get("w").item();
  }
}

TEST(AdamW, NonFiniteGradientAborts) {
  model::ParamTable p;
  p.set("w", Tensor::scalar(1.0));
  AdamWState st;
  try {
    adamw_step(p, {{"w", Tensor::scalar(std::nan(""))}}, st, 0.01);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("\"w\""), std::string::npos);
  }
  EXPECT_EQ(p.get("w").item(), 1.0);
}

TEST(LinearLr, Examples) {
  EXPECT_DOUBLE_EQ(linear_lr(0, 50, 0.005, 0.0001), 0.005);
  EXPECT_DOUBLE_EQ(linear_lr(49, 50, 0.005, 0.0001), 0.0001);
  EXPECT_NEAR(linear_lr(25, 50, 0.005, 0.0001), 0.005 + (25.0 / 49.0) * (0.0001 - 0.005), 1e-15);
  EXPECT_NEAR(linear_lr(25, 50, 0.005, 0.0001), 0.0025, 1e-4);
  EXPECT_DOUBLE_EQ(linear_lr(0, 1, 0.005, 0.0001), 0.005);
  EXPECT_THROW(linear_lr(50, 50, 0.005, 0.0001), ValidationError);
}

TEST(ClipGlobalNorm, RescalesOnlyAboveLimit) {
  GradientList g{{"a", Tensor::vector({3.0})}, {"b", Tensor::vector({4.0})}};
  EXPECT_DOUBLE_EQ(clip_global_norm(g, 10.0), 5.0);
  EXPECT_EQ(g[0].second[0], 3.0);
  EXPECT_DOUBLE_EQ(clip_global_norm(g, 1.0), 5.0);
  EXPECT_NEAR(g[0].second[0], 0.6, 1e-15);
  EXPECT_NEAR(g[1].second[0], 0.8, 1e-15);
}

TEST(TrainConfig, DefaultsAndValidation) {
  const auto s1 = TrainConfig::defaults(Stage::stage1);
  EXPECT_EQ(s1.batch_size, 16u);
  EXPECT_EQ(s1.epochs, 50u);
  EXPECT_EQ(s1.lr_start, 0.005);
  EXPECT_EQ(s1.lr_end, 0.0001);
  EXPECT_EQ(s1.patience, 3u);
  EXPECT_EQ(s1.lambda, 0.007);
  const auto s2 = TrainConfig::defaults(Stage::stage2);
  EXPECT_EQ(s2.batch_size, 2u);
  EXPECT_EQ(s2.epochs, 10u);
  EXPECT_EQ(s2.lr_start, 0.0001);
  EXPECT_EQ(s2.lr_end, 0.00001);
  EXPECT_FALSE(s2.augment);
  auto bad = s1;
  bad.lr_end = 0.01;
  EXPECT_THROW(bad.validate(), ValidationError);
  bad = s1;
  bad.patience = 0;
  EXPECT_THROW(bad.validate(), ValidationError);
  bad = s1;
  bad.batch_size = 1;
  EXPECT_THROW(bad.validate(), ValidationError);
}

TEST(Stage1, RejectsFakeBeforeTraining) {
  auto train_set = support::pooled_stream(tiny_world(1), 6, 1, 8);
  bool called = false;
  EXPECT_THROW(train_stage1(train_set, support::pooled_stream(tiny_world(4), 4, 0, 8),
                            stage1_config(), [&](const EpochRecord&) { called = true; }),
               ValidationError);
  EXPECT_FALSE(called);
}

TEST(Stage1, RejectsFakeManifestRecord) {
  std::vector<store::ManifestRecord> recs(2);
  recs[0].id = "a";
  recs[1].id = "b";
  recs[1].label = store::Label::fake;
  recs[1].split = store::Split::test;  // even outside the training split
  EXPECT_THROW(train_stage1(recs, stage1_config()), ValidationError);
}

TEST(Stage1, ValidationLossDropsAndHistoryIsComplete) {
  const auto& r = stage1_fixture();
  ASSERT_FALSE(r.history.empty());
  std::vector<double> valid;
  for (const auto& e : r.history) {
    if (e.split == "valid") valid.push_back(e.loss);
    EXPECT_TRUE(e.cross && e.intra && e.style && e.linguistics);
  }
  ASSERT_EQ(valid.size(), r.epochs_run);
  const double best = *std::min_element(valid.begin(), valid.end());
  EXPECT_LE(best, 0.7 * valid.front());
  EXPECT_EQ(r.checkpoint.stage, Stage::stage1);
  EXPECT_EQ(checkpoint_target_frames(r.checkpoint, 99), 8u);
}

TEST(Stage1, DeterministicCheckpoint) {
  const auto again = train_stage1(support::pooled_stream(tiny_world(1), 40, 0, 8),
                                  support::pooled_stream(tiny_world(4), 12, 0, 8), stage1_config());
  EXPECT_EQ(model::encode_checkpoint(again.checkpoint),
            model::encode_checkpoint(stage1_fixture().checkpoint));
}

TEST(Stage1, EarlyStopAfterExactlyPatienceEpochs) {
  auto cfg = stage1_config();
  cfg.epochs = 40;
  cfg.patience = 2;
  cfg.lr_start = cfg.lr_end = 0.05;  // noisy enough to stall
  const auto r = train_stage1(support::pooled_stream(tiny_world(1), 20, 0, 8),
                              support::pooled_stream(tiny_world(4), 8, 0, 8), cfg);
  ASSERT_TRUE(r.early_stopped);
  EXPECT_EQ(r.epochs_run, r.best_epoch + 1 + cfg.patience);
  std::vector<double> valid;
  for (const auto& e : r.history)
    if (e.split == "valid") valid.push_back(e.loss);
  const auto best_it = std::min_element(valid.begin(), valid.end());
  EXPECT_EQ(static_cast<std::size_t>(best_it - valid.begin()), r.best_epoch);
}

TEST(Stage2, FrozenStage1AndVariantWidths) {
  const auto& s1 = stage1_fixture();
  const auto train_set = support::pooled_stream(tiny_world(0), 16, 16, 8);
  const auto valid_set = support::pooled_stream(tiny_world(3), 6, 6, 8);
  for (auto v : {model::Variant::full, model::Variant::dependency, model::Variant::subspace}) {
    const auto r = train_stage2(train_set, valid_set, s1.checkpoint, stage2_config(v));
    EXPECT_EQ(model::fingerprint(r.checkpoint.params, "style_compress."),
              model::fingerprint(s1.checkpoint.params, "style_compress."));
    EXPECT_EQ(model::fingerprint(r.checkpoint.params, "ling_compress."),
              model::fingerprint(s1.checkpoint.params, "ling_compress."));
    const auto cfg = model::ModelConfig::read_from(r.checkpoint.params);
    EXPECT_EQ(cfg.variant, v);
    EXPECT_EQ(r.checkpoint.params.get("head.fc1.weight").dim(0), cfg.fusion_width());
    if (v == model::Variant::dependency) {
      EXPECT_EQ(cfg.fusion_width(), 2 * cfg.dependency_dim);
    }
    for (const auto& e : r.history)
      if (e.split == "valid") EXPECT_TRUE(e.eer.has_value());
  }
}

TEST(Stage2, RejectsStage2CheckpointAndOneClassData) {
  const auto& s1 = stage1_fixture();
  const auto train_set = support::pooled_stream(tiny_world(0), 8, 8, 8);
  const auto valid_set = support::pooled_stream(tiny_world(3), 4, 4, 8);
  auto cfg = stage2_config(model::Variant::full);
  cfg.epochs = 1;
  const auto r = train_stage2(train_set, valid_set, s1.checkpoint, cfg);
  EXPECT_THROW(train_stage2(train_set, valid_set, r.checkpoint, cfg), ConfigError);
  EXPECT_THROW(train_stage2(support::pooled_stream(tiny_world(0), 8, 0, 8), valid_set,
                            s1.checkpoint, cfg),
               ValidationError);
  EXPECT_THROW(score_samples(valid_set, s1.checkpoint), ConfigError);
}

TEST(Stage2, DeterministicWithAugmentationAndAccumulation) {
  const auto& s1 = stage1_fixture();
  const auto train_set = support::pooled_stream(tiny_world(0), 8, 8, 8);
  const auto valid_set = support::pooled_stream(tiny_world(3), 4, 4, 8);
  auto cfg = stage2_config(model::Variant::full);
  cfg.augment = true;
  cfg.accumulation_steps = 2;
  cfg.batch_size = 2;
  cfg.epochs = 2;
  const auto a = train_stage2(train_set, valid_set, s1.checkpoint, cfg);
  const auto b = train_stage2(train_set, valid_set, s1.checkpoint, cfg);
  EXPECT_EQ(model::encode_checkpoint(a.checkpoint), model::encode_checkpoint(b.checkpoint));
}

TEST(Inference, ScoresAndReport) {
  const auto& s1 = stage1_fixture();
  const auto train_set = support::pooled_stream(tiny_world(0), 16, 16, 8);
  const auto valid_set = support::pooled_stream(tiny_world(3), 6, 6, 8);
  const auto r = train_stage2(train_set, valid_set, s1.checkpoint,
                              stage2_config(model::Variant::full));
  const auto scored = score_samples(valid_set, r.checkpoint);
  ASSERT_EQ(scored.size(), valid_set.size());
  for (const auto& s : scored) EXPECT_EQ(s.score, -s.logit);
  const auto rep = evaluate(scored);
  EXPECT_EQ(rep.n_real, 6u);
  EXPECT_EQ(rep.n_fake, 6u);
  EXPECT_GE(rep.eer, 0.0);
  EXPECT_LE(rep.eer, 0.5 + 1e-12);
  const std::string file = score_file(scored);
  EXPECT_NE(file.find(scored.front().id + " real "), std::string::npos);
  const auto deps = dependency_features(valid_set, s1.checkpoint);
  ASSERT_EQ(deps.size(), valid_set.size());
  EXPECT_EQ(deps[0].style.size(), 16u);
}

TEST(Progress, JsonLineFields) {
  EpochRecord r;
  r.epoch = 3;
  r.split = "valid";
  r.loss = 1.25;
  r.cross = 1.0;
  r.intra = 2.0;
  r.style = 1.5;
  r.linguistics = 0.5;
  r.lr = 0.001;
  const std::string line = to_json_line(r);
  for (const char* key : {"\"epoch\"", "\"split\"", "\"cross\"", "\"intra\"", "\"style\"",
                          "\"linguistics\"", "\"lr\""})
    EXPECT_NE(line.find(key), std::string::npos) << key;
  EXPECT_EQ(line.find('\n'), std::string::npos);
}

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "slim/error.hpp"
#include "slim/model.hpp"
#include "slim/params.hpp"
#include "test_support.hpp"

using namespace slim;
using namespace slim::model;

namespace {

ModelConfig default_config() { return ModelConfig{}; }

ModelConfig tiny_config() {
  ModelConfig c;
  c.style_features = 12;
  c.linguistics_features = 10;
  c.bottleneck = 6;
  c.dependency_dim = 5;
  c.projection_dim = 4;
  c.head_hidden = 3;
  return c;
}

ParamTable full_params(const SlimModel& m, std::uint64_t seed) {
  ParamTable p;
  ad::Rng rng(seed);
  m.init_stage1(p, rng);
  m.init_stage2(p, rng);
  return p;
}

}  // namespace

TEST(Model, DefaultShapes) {
  const SlimModel m(default_config());
  ParamTable p;
  ad::Rng rng(1);
  m.init_stage1(p, rng);
  ad::Graph g;
  Bindings b(g, p, nullptr);
  std::mt19937_64 r(2);
  const auto dep = m.style_compression().compress(
      b, g.constant(support::random_tensor({11, 1024, 50}, r)), Mode::eval());
  EXPECT_EQ(dep.series.shape(), (Shape{256, 50}));
  EXPECT_EQ(dep.average.value().size(), 256u);
  EXPECT_EQ(p.get("style_compress.down.weight").shape(), (Shape{1024, 256}));
  EXPECT_EQ(p.get("style_compress.proj.weight").shape(), (Shape{1024, 256}));
}

TEST(Model, FusionWidths) {
  ModelConfig c = default_config();
  EXPECT_EQ(c.fusion_width(), 1024u);
  c.variant = Variant::dependency;
  EXPECT_EQ(c.fusion_width(), 512u);
  c.variant = Variant::subspace;
  EXPECT_EQ(c.fusion_width(), 512u);
  c.variant = Variant::style;
  EXPECT_EQ(c.fusion_width(), 256u);
  c.variant = Variant::dependency;
  const SlimModel m(c);
  ParamTable p;
  ad::Rng rng(1);
  m.init_stage2(p, rng);
  EXPECT_EQ(p.get("head.fc1.weight").shape(), (Shape{512, 256}));
  EXPECT_FALSE(p.contains("style_asp.attn.weight"));
}

TEST(Model, IdenticalLayersPoolToThatLayer) {
  std::mt19937_64 r(3);
  const Tensor layer = support::random_tensor({1, 4, 3}, r);
  Tensor x({5, 4, 3});
  for (std::size_t k = 0; k < 5; ++k)
    for (std::size_t i = 0; i < 12; ++i) x[k * 12 + i] = layer[i];
  ad::Graph g;
  const Tensor pooled = pool_layers(g.constant(x)).value();  // [T x F]
  ASSERT_EQ(pooled.shape(), (Shape{3, 4}));
  for (std::size_t f = 0; f < 4; ++f)
    for (std::size_t t = 0; t < 3; ++t) EXPECT_DOUBLE_EQ(pooled.at(t, f), layer[f * 3 + t]);
}

TEST(Model, SingleFrameAverageEqualsSeries) {
  const SlimModel m(tiny_config());
  const ParamTable p = full_params(m, 4);
  std::mt19937_64 r(5);
  ad::Graph g;
  Bindings b(g, p, nullptr);
  const auto dep = m.linguistics_compression().compress(
      b, g.constant(support::random_tensor({3, 10, 1}, r)), Mode::eval());
  for (std::size_t d = 0; d < 5; ++d) EXPECT_EQ(dep.average.value()[d], dep.series.value()[d]);
}

TEST(Model, FeatureMismatchIsDimensionError) {
  const SlimModel m(tiny_config());
  const ParamTable p = full_params(m, 4);
  ad::Graph g;
  Bindings b(g, p, nullptr);
  EXPECT_THROW(m.style_compression().compress(b, g.constant(Tensor({2, 7, 3})), Mode::eval()),
               DimensionError);
  EXPECT_THROW(m.style_projector().project(b, g.constant(Tensor({2, 7, 3})), Mode::eval()),
               DimensionError);
}

TEST(Model, ZeroAttentionGivesPlainMean) {
  const SlimModel m(tiny_config());
  ParamTable p = full_params(m, 6);
  p.set("style_asp.attn.weight", Tensor({12, 1}));
  p.set("style_asp.attn.bias", Tensor({1}));
  std::mt19937_64 r(7);
  const Tensor x = support::random_tensor({2, 12, 5}, r);
  ad::Graph g;
  Bindings b(g, p, nullptr);
  const ad::Var frames = pool_layers(g.constant(x));
  const Tensor w = m.style_projector().attention(b, frames).value();
  for (double v : w.data()) EXPECT_NEAR(v, 0.2, 1e-15);
  const Tensor stats = m.style_projector().pooled_statistics(b, frames).value();
  const Tensor pooled = frames.value();
  for (std::size_t f = 0; f < 12; ++f) {
    double mu = 0.0;
    for (std::size_t t = 0; t < 5; ++t) mu += pooled.at(t, f);
    EXPECT_NEAR(stats[f], mu / 5.0, 1e-14);
  }
}

TEST(Model, SingleFrameStdIsExactlyZero) {
  const SlimModel m(tiny_config());
  const ParamTable p = full_params(m, 8);
  std::mt19937_64 r(9);
  ad::Graph g;
  Bindings b(g, p, nullptr);
  const Tensor stats =
      m.style_projector()
          .pooled_statistics(b, pool_layers(g.constant(support::random_tensor({2, 12, 1}, r))))
          .value();
  for (std::size_t f = 12; f < 24; ++f) EXPECT_EQ(stats[f], 0.0);
}

TEST(Model, AttentionSumsToOneAndStdNonNegative) {
  const SlimModel m(tiny_config());
  const ParamTable p = full_params(m, 10);
  std::mt19937_64 r(11);
  for (int trial = 0; trial < 20; ++trial) {
    ad::Graph g;
    Bindings b(g, p, nullptr);
    const ad::Var frames = pool_layers(g.constant(support::random_tensor({3, 10, 7}, r, 5.0)));
    const Tensor w = m.linguistics_projector().attention(b, frames).value();
    double total = 0.0;
    for (double v : w.data()) total += v;
    EXPECT_NEAR(total, 1.0, 1e-12);
    const Tensor stats = m.linguistics_projector().pooled_statistics(b, frames).value();
    for (std::size_t f = 10; f < 20; ++f) EXPECT_GE(stats[f], 0.0);
  }
}

TEST(Model, ForwardFullEvalIsDeterministic) {
  for (auto v : {Variant::full, Variant::dependency, Variant::subspace, Variant::style,
                 Variant::linguistics}) {
    ModelConfig c = tiny_config();
    c.variant = v;
    const SlimModel m(c);
    const ParamTable p = full_params(m, 12);
    std::mt19937_64 r(13);
    const Tensor s = support::random_tensor({3, 12, 6}, r);
    const Tensor l = support::random_tensor({2, 10, 6}, r);
    double logits[2];
    for (double& out : logits) {
      ad::Graph g;
      Bindings b(g, p, nullptr);
      const auto o = m.forward_full(b, g.constant(s), g.constant(l), Mode::eval());
      EXPECT_EQ(o.logit.shape(), (Shape{1, 1}));
      out = o.logit.value().item();
    }
    EXPECT_EQ(logits[0], logits[1]) << to_string(v);
  }
}

TEST(Model, MissingParameterNamed) {
  const SlimModel m(tiny_config());
  ParamTable p;
  ad::Rng rng(1);
  m.init_stage2(p, rng);  // no stage-1 parameters
  ad::Graph g;
  Bindings b(g, p, nullptr);
  try {
    m.forward_full(b, g.constant(Tensor({1, 12, 2})), g.constant(Tensor({1, 10, 2})), Mode::eval());
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("_compress."), std::string::npos) << e.what();
  }
}

TEST(Model, TrainModeWithoutRngRejected) {
  const SlimModel m(tiny_config());
  const ParamTable p = full_params(m, 1);
  ad::Graph g;
  Bindings b(g, p, nullptr);
  EXPECT_THROW(m.head().forward(b, g.constant(Tensor({1, 18})), Mode{true, nullptr}), ConfigError);
}

TEST(Model, ParameterGroups) {
  EXPECT_TRUE(SlimModel::is_stage1_param("style_compress.down.weight"));
  EXPECT_TRUE(SlimModel::is_stage2_param("head.fc2.bias"));
  EXPECT_FALSE(SlimModel::is_stage2_param("ling_compress.proj.bias"));
  EXPECT_FALSE(SlimModel::is_stage1_param("config/bottleneck"));
}

TEST(Model, ConfigRoundTripThroughParams) {
  ModelConfig c = tiny_config();
  c.variant = Variant::subspace;
  c.activation = Activation::tanh;
  c.head_dropout = 0.125;
  ParamTable p;
  c.write_to(p);
  const ModelConfig back = ModelConfig::read_from(p);
  EXPECT_EQ(back.variant, Variant::subspace);
  EXPECT_EQ(back.activation, Activation::tanh);
  EXPECT_EQ(back.head_dropout, 0.125);
  EXPECT_EQ(back.style_features, 12u);
  EXPECT_EQ(back.projection_dim, 4u);
}

TEST(Model, VariantAndActivationNames) {
  for (auto v : {Variant::full, Variant::dependency, Variant::subspace, Variant::style,
                 Variant::linguistics})
    EXPECT_EQ(parse_variant(to_string(v)), v);
  EXPECT_THROW(parse_variant("bogus"), ConfigError);
  EXPECT_EQ(parse_activation("tanh"), Activation::tanh);
  EXPECT_THROW(parse_activation("gelu"), ConfigError);
}

TEST(Checkpoint, RoundTripIsByteIdentical) {
  support::TempDir dir;
  const SlimModel m(tiny_config());
  ModelCheckpoint ck{Stage::stage2, full_params(m, 20)};
  m.config().write_to(ck.params);
  save_checkpoint(ck, dir / "a.slck");
  const ModelCheckpoint back = load_checkpoint(dir / "a.slck");
  EXPECT_EQ(back.stage, Stage::stage2);
  EXPECT_TRUE(back.params == ck.params);
  save_checkpoint(back, dir / "b.slck");
  EXPECT_EQ(support::read_bytes(dir / "a.slck"), support::read_bytes(dir / "b.slck"));
}

TEST(Checkpoint, CorruptionDetected) {
  const SlimModel m(tiny_config());
  const ModelCheckpoint ck{Stage::stage1, full_params(m, 21)};
  auto bytes = encode_checkpoint(ck);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "SLCK");
  auto flipped = bytes;
  flipped[flipped.size() / 2] ^= 0x10;
  EXPECT_THROW(decode_checkpoint(flipped), CorruptionError);
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad), FormatError);
  bytes.resize(8);
  EXPECT_THROW(decode_checkpoint(bytes), LengthError);
}

TEST(Checkpoint, FingerprintTracksPrefix) {
  const SlimModel m(tiny_config());
  ParamTable p = full_params(m, 22);
  const auto s1 = fingerprint(p, "style_compress.");
  const auto all = fingerprint(p);
  Tensor w = p.get("head.fc1.weight");
  w[0] += 1.0;
  p.set("head.fc1.weight", w);
  EXPECT_EQ(fingerprint(p, "style_compress."), s1);
  EXPECT_NE(fingerprint(p), all);
}

TEST(ParamTable, KeepsInsertionOrderAndReplaces) {
  ParamTable p;
  p.set("b", Tensor::scalar(1));
  p.set("a", Tensor::scalar(2));
  p.set("b", Tensor::scalar(3));
  ASSERT_EQ(p.size(), 2u);
  EXPECT_EQ(p.entries()[0].first, "b");
  EXPECT_EQ(p.get("b").item(), 3.0);
  EXPECT_THROW(p.get("zzz"), ConfigError);
}

TEST(Bindings, BindRejectsWrongShapeAndDuplicates) {
  ParamTable p;
  p.set("w", Tensor({2, 2}));
  ad::Graph g;
  Bindings b(g, p, nullptr);
  EXPECT_THROW(b.bind("w", g.constant(Tensor({3}))), DimensionError);
  b.bind("w", g.parameter(Tensor({2, 2})));
  EXPECT_THROW(b.bind("w", g.parameter(Tensor({2, 2}))), ValidationError);
}

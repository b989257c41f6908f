#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "slim/crc32.hpp"
#include "slim/error.hpp"
#include "slim/metrics.hpp"
#include "slim/synth.hpp"
#include "test_support.hpp"

using namespace slim;
using namespace slim::synth;
using store::Label;

namespace {

SynthConfig small() {
  SynthConfig c;
  c.features = 64;
  c.frames = 12;
  c.style_layers = 3;
  c.linguistics_layers = 2;
  return c;
}

std::vector<double> time_layer_mean(const store::EmbeddingTensor& e) {
  std::vector<double> v(e.features, 0.0);
  for (std::size_t k = 0; k < e.layers; ++k)
    for (std::size_t f = 0; f < e.features; ++f)
      for (std::size_t t = 0; t < e.frames; ++t) v[f] += e.at(k, f, t);
  for (double& x : v) x /= static_cast<double>(e.layers * e.frames);
  return v;
}

}  // namespace

TEST(Synth, ValidateRejectsBadConfigs) {
  SynthConfig c = small();
  c.mismatch = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small();
  c.noise_std = -0.1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small();
  c.latent_dim = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small();
  c.artifact_strength = -1;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Synth, ShapesAndSubspaces) {
  const SynthWorld w(small());
  std::mt19937_64 rng(1);
  const auto [s, l] = w.generate_sample(Label::real, rng);
  EXPECT_EQ(s.layers, 3u);
  EXPECT_EQ(l.layers, 2u);
  EXPECT_EQ(s.features, 64u);
  EXPECT_EQ(s.frames, 12u);
  EXPECT_EQ(s.subspace, store::Subspace::style);
  EXPECT_EQ(l.subspace, store::Subspace::linguistics);
  for (float v : s.data) EXPECT_TRUE(std::isfinite(v));
}

TEST(Synth, SameSeedSameLabelIsBitIdentical) {
  const SynthWorld w(small());
  std::mt19937_64 a(w.sample_seed(Label::fake, 3)), b(w.sample_seed(Label::fake, 3));
  const auto x = w.generate_sample(Label::fake, a);
  const auto y = w.generate_sample(Label::fake, b);
  EXPECT_EQ(x.first.data, y.first.data);
  EXPECT_EQ(x.second.data, y.second.data);
}

TEST(Synth, NoMismatchNoNoiseNoArtifactMakesFakeEqualReal) {
  SynthConfig c = small();
  c.mismatch = 0.0;
  c.noise_std = 0.0;
  c.artifact_strength = 0.0;
  const SynthWorld w(c);
  std::mt19937_64 a(9), b(9);
  const auto real = w.generate_sample(Label::real, a);
  const auto fake = w.generate_sample(Label::fake, b);
  EXPECT_EQ(real.first.data, fake.first.data);
  EXPECT_EQ(real.second.data, fake.second.data);
}

TEST(Synth, ArtifactTouchesOnlyTopFeatures) {
  SynthConfig c = small();
  c.features = 200;
  c.mismatch = 0.0;
  c.noise_std = 0.0;
  const SynthWorld w(c);
  std::mt19937_64 a(4), b(4);
  const auto real = w.generate_sample(Label::real, a);
  const auto fake = w.generate_sample(Label::fake, b);
  for (std::size_t f = 0; f < 200; ++f) {
    const double diff = fake.second.at(0, f, 0) - real.second.at(0, f, 0);
    if (f >= 198) {
      EXPECT_NEAR(diff, c.artifact_strength, 1e-6);
    } else {
      EXPECT_EQ(diff, 0.0);
    }
  }
}

TEST(Synth, OutputsBounded) {
  SynthConfig c = small();
  c.noise_std = 0.05;
  const SynthWorld w(c);
  std::mt19937_64 rng(3);
  for (int i = 0; i < 5; ++i) {
    const auto [s, l] = w.generate_sample(Label::fake, rng);
    for (float v : s.data) EXPECT_LT(std::abs(v), 1.0 + c.artifact_strength + 12 * c.noise_std);
  }
}

TEST(Synth, CosineSimilarityNonIncreasingInMismatch) {
  std::vector<std::vector<double>> sims;
  for (double m : {0.0, 0.5, 1.0}) {
    SynthConfig c = small();
    c.mismatch = m;
    c.artifact_strength = 0.0;
    c.style_layers = c.linguistics_layers = 1;
    const SynthWorld w(c);
    std::vector<double> s;
    for (std::size_t i = 0; i < 200; ++i) {
      std::mt19937_64 rng(w.sample_seed(Label::fake, i));
      const auto [st, li] = w.generate_sample(Label::fake, rng);
      s.push_back(1.0 - metrics::cosine_distance(time_layer_mean(st), time_layer_mean(li)));
    }
    sims.push_back(std::move(s));
  }
  for (std::size_t i = 0; i + 1 < sims.size(); ++i) {
    const auto r = metrics::welch_ttest(sims[i + 1], sims[i]);
    EXPECT_GE(metrics::welch_p_greater(r), 0.05) << "mismatch step " << i;
  }
}

TEST(Synth, DatasetCountsSplitsAndDeterminism) {
  support::TempDir dir;
  SynthConfig c = small();
  const auto manifest = generate_dataset(c, 100, 100, dir / "a");
  const auto recs = store::load_manifest(manifest);
  ASSERT_EQ(recs.size(), 200u);
  std::map<Label, int> labels;
  std::map<store::Split, int> splits;
  for (const auto& r : recs) {
    ++labels[r.label];
    ++splits[r.split];
    EXPECT_EQ(r.split, split_for_id(r.id));
  }
  EXPECT_EQ(labels[Label::real], 100);
  EXPECT_EQ(labels[Label::fake], 100);
  EXPECT_NEAR(splits[store::Split::train], 140, 25);
  EXPECT_NEAR(splits[store::Split::test], 30, 15);

  const auto again = generate_dataset(c, 100, 100, dir / "b");
  EXPECT_EQ(support::read_text(manifest).size(), support::read_text(again).size());
  const auto recs2 = store::load_manifest(again);
  for (std::size_t i = 0; i < recs.size(); ++i) {
    EXPECT_EQ(file_crc32(recs[i].style_path), file_crc32(recs2[i].style_path));
    EXPECT_EQ(file_crc32(recs[i].linguistics_path), file_crc32(recs2[i].linguistics_path));
  }
}

TEST(Synth, OneClassDataset) {
  support::TempDir dir;
  const auto recs = store::load_manifest(generate_dataset(small(), 7, 0, dir.path()));
  EXPECT_EQ(recs.size(), 7u);
  for (const auto& r : recs) EXPECT_EQ(r.label, Label::real);
}

TEST(Synth, StreamsGiveDisjointSamplesUnderOneLaw) {
  SynthConfig a = small(), b = small();
  b.stream = 1;
  const SynthWorld wa(a), wb(b);
  EXPECT_NE(wa.sample_seed(Label::real, 0), wb.sample_seed(Label::real, 0));
  std::mt19937_64 r1(5), r2(5);
  EXPECT_EQ(wa.generate_sample(Label::real, r1).first.data,
            wb.generate_sample(Label::real, r2).first.data);
}

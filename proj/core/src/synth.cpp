#include "slim/synth.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include "slim/error.hpp"

namespace slim::synth {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr double kModulationAmplitude = 0.1;
constexpr double kModulationPeriod = 16.0;
constexpr double kBiasStd = 0.25;

}  // namespace

void SynthConfig::validate() const {
  if (latent_dim < 1) throw ConfigError("latent_dim must be >= 1");
  if (features < 1 || frames < 1 || style_layers < 1 || linguistics_layers < 1) {
    throw ConfigError("features, frames and layer counts must be >= 1");
  }
  if (!(mismatch >= 0.0 && mismatch <= 1.0)) {
    throw ConfigError("mismatch must lie in [0, 1], got " + std::to_string(mismatch));
  }
  if (!(noise_std >= 0.0)) throw ConfigError("noise_std must be >= 0");
  if (!(artifact_strength >= 0.0)) throw ConfigError("artifact_strength must be >= 0");
}

SynthWorld::SynthWorld(const SynthConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(splitmix64(cfg_.seed ^ 0x5eedULL));
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double w_scale = 1.0 / std::sqrt(static_cast<double>(cfg_.latent_dim));
  for (Projection* p : {&style_, &linguistics_}) {
    p->weight.resize(cfg_.features * cfg_.latent_dim);
    p->bias.resize(cfg_.features);
    for (auto& w : p->weight) w = gauss(rng) * w_scale;
    for (auto& b : p->bias) b = gauss(rng) * kBiasStd;
  }
}

std::uint64_t SynthWorld::sample_seed(store::Label label, std::size_t index) const {
  std::uint64_t h = splitmix64(cfg_.seed);
  h = splitmix64(h ^ cfg_.stream);
  h = splitmix64(h ^ (label == store::Label::fake ? 1ULL : 0ULL));
  return splitmix64(h ^ static_cast<std::uint64_t>(index));
}

store::EmbeddingTensor SynthWorld::render(const Projection& proj, const std::vector<double>& latent,
                                          std::size_t layers, store::Subspace subspace, bool fake,
                                          std::mt19937_64& rng) const {
  const std::size_t F = cfg_.features, T = cfg_.frames, d = cfg_.latent_dim;
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<double> clean(F);
  for (std::size_t f = 0; f < F; ++f) {
    double acc = proj.bias[f];
    for (std::size_t j = 0; j < d; ++j) acc += proj.weight[f * d + j] * latent[j];
    clean[f] = acc;
  }
  const std::size_t artifact_count = (F + 99) / 100;
  const std::size_t artifact_begin = F - artifact_count;

  store::EmbeddingTensor out;
  out.layers = static_cast<std::uint32_t>(layers);
  out.features = static_cast<std::uint32_t>(F);
  out.frames = static_cast<std::uint32_t>(T);
  out.subspace = subspace;
  out.data.resize(layers * F * T);

  std::vector<double> frame(F);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t f = 0; f < F; ++f) {
      const double phase = 2.0 * std::numbers::pi * static_cast<double>(f) / static_cast<double>(F);
      const double mod = kModulationAmplitude *
                         std::sin(2.0 * std::numbers::pi * static_cast<double>(t) /
                                      kModulationPeriod + phase);
      double v = std::tanh(clean[f] + mod) + cfg_.noise_std * gauss(rng);
      if (fake && f >= artifact_begin) v += cfg_.artifact_strength;
      frame[f] = v;
    }
    for (std::size_t k = 0; k < layers; ++k)
      for (std::size_t f = 0; f < F; ++f)
        out.at(k, f, t) =
            static_cast<float>(frame[f] + 0.5 * cfg_.noise_std * gauss(rng));
  }
  return out;
}

std::pair<store::EmbeddingTensor, store::EmbeddingTensor> SynthWorld::generate_sample(
    store::Label label, std::mt19937_64& rng) const {
  const std::size_t d = cfg_.latent_dim;
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> z(d), z_other(d);
  for (auto& v : z) v = gauss(rng);
  for (auto& v : z_other) v = gauss(rng);

  const bool fake = label == store::Label::fake;
  std::vector<double> z_style = z;
  if (fake) {
    const double keep = std::sqrt(1.0 - cfg_.mismatch), swap = std::sqrt(cfg_.mismatch);
    for (std::size_t j = 0; j < d; ++j) z_style[j] = keep * z[j] + swap * z_other[j];
  }
  auto style = render(style_, z_style, cfg_.style_layers, store::Subspace::style, fake, rng);
  auto ling = render(linguistics_, z, cfg_.linguistics_layers, store::Subspace::linguistics, fake,
                     rng);
  return {std::move(style), std::move(ling)};
}

std::pair<store::EmbeddingTensor, store::EmbeddingTensor> generate_sample(const SynthConfig& cfg,
                                                                          store::Label label,
                                                                          std::mt19937_64& rng) {
  return SynthWorld(cfg).generate_sample(label, rng);
}

store::Split split_for_id(const std::string& id) {
  const std::uint64_t bucket = fnv1a(id) % 100;
  if (bucket < 70) return store::Split::train;
  if (bucket < 85) return store::Split::valid;
  return store::Split::test;
}

std::filesystem::path generate_dataset(const SynthConfig& cfg, std::size_t n_real,
                                       std::size_t n_fake, const std::filesystem::path& out_dir) {
  SynthWorld world(cfg);
  const auto emb_dir = out_dir / "embeddings";
  std::error_code ec;
  std::filesystem::create_directories(emb_dir, ec);
  if (ec) throw IoError("cannot create " + emb_dir.string() + ": " + ec.message());

  std::vector<store::ManifestRecord> records;
  records.reserve(n_real + n_fake);
  for (store::Label label : {store::Label::real, store::Label::fake}) {
    const std::size_t count = label == store::Label::real ? n_real : n_fake;
    for (std::size_t i = 0; i < count; ++i) {
      char id[96];
      std::snprintf(id, sizeof(id), "%s-s%llu-%s-%05zu", cfg.dataset.c_str(),
                    static_cast<unsigned long long>(cfg.stream), store::to_string(label).c_str(), i);
      std::mt19937_64 rng(world.sample_seed(label, i));
      auto [style, ling] = world.generate_sample(label, rng);

      store::ManifestRecord rec;
      rec.id = id;
      rec.label = label;
      rec.split = split_for_id(rec.id);
      rec.style_path = emb_dir / (rec.id + ".style.slem");
      rec.linguistics_path = emb_dir / (rec.id + ".ling.slem");
      rec.dataset = cfg.dataset;
      if (label == store::Label::fake) rec.attack_id = "mismatch";
      store::write_embedding(style, rec.style_path);
      store::write_embedding(ling, rec.linguistics_path);
      records.push_back(std::move(rec));
    }
  }
  const auto manifest = out_dir / "manifest.jsonl";
  store::write_manifest(records, manifest);
  return manifest;
}

}  // namespace slim::synth

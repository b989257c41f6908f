#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <utility>

#include "slim/embedding_store.hpp"

namespace slim::synth {

// Synthetic style/linguistics pairs whose only link is a shared latent code.
// Real samples drive both subspaces from one latent; fakes blend an
// independent latent into the style side and add a small bump on the
// highest-index features.
struct SynthConfig {
  std::size_t latent_dim = 16;
  std::size_t features = 1024;
  std::size_t frames = 50;
  std::size_t style_layers = 11;
  std::size_t linguistics_layers = 8;
  double noise_std = 0.1;
  double mismatch = 1.0;           // 0 = shared latent, 1 = independent latents
  double artifact_strength = 0.3;  // added to the top 1% of features on fakes
  std::uint64_t seed = 0;          // fixes the per-run projections
  std::uint64_t stream = 0;        // selects a disjoint family of samples
  std::string dataset = "synth";

  void validate() const;
};

// The fixed random projections of one run (drawn from cfg.seed only), so
// datasets generated with different streams share one generative law.
class SynthWorld {
 public:
  explicit SynthWorld(const SynthConfig& cfg);

  const SynthConfig& config() const { return cfg_; }

  std::pair<store::EmbeddingTensor, store::EmbeddingTensor> generate_sample(
      store::Label label, std::mt19937_64& rng) const;

  // Per-sample generator seed derived by counter from (seed, stream, label, index).
  std::uint64_t sample_seed(store::Label label, std::size_t index) const;

 private:
  struct Projection {
    std::vector<double> weight;  // F x d, row-major
    std::vector<double> bias;    // F
  };

  store::EmbeddingTensor render(const Projection& proj, const std::vector<double>& latent,
                                std::size_t layers, store::Subspace subspace, bool fake,
                                std::mt19937_64& rng) const;

  SynthConfig cfg_;
  Projection style_;
  Projection linguistics_;
};

// Convenience wrapper: builds a world from cfg and draws one sample.
std::pair<store::EmbeddingTensor, store::EmbeddingTensor> generate_sample(const SynthConfig& cfg,
                                                                          store::Label label,
                                                                          std::mt19937_64& rng);

// Split assignment by hashed id: 70% train, 15% valid, 15% test.
store::Split split_for_id(const std::string& id);

// Writes two SLEM files per sample under out_dir/embeddings and a manifest at
// out_dir/manifest.jsonl; returns the manifest path.
std::filesystem::path generate_dataset(const SynthConfig& cfg, std::size_t n_real,
                                       std::size_t n_fake, const std::filesystem::path& out_dir);

}  // namespace slim::synth

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "slim/embedding_store.hpp"
#include "slim/metrics.hpp"
#include "slim/params.hpp"
#include "slim/tensor.hpp"
#include "slim/trainer.hpp"

namespace slim::analysis {

// ---------------------------------------------------------------------------
// CCA probe

inline constexpr double kDefaultRidge = 1e-2;
inline constexpr std::size_t kDefaultCcaDims = 20;

struct CcaModel {
  std::vector<double> style_mean;
  std::vector<double> linguistics_mean;
  Tensor style_projection;        // F_s x d_c
  Tensor linguistics_projection;  // F_l x d_c
  std::vector<double> correlations;  // per component on the fit data, descending
  double ridge = kDefaultRidge;

  std::size_t dims() const { return correlations.size(); }
};

// Ridge-regularised CCA: each covariance becomes S + ridge * tr(S)/F * I, both
// views are whitened with the inverse square root and the whitened
// cross-covariance is decomposed by SVD. Components are ordered by their
// correlation on the fit data; each pair is sign-fixed so the first nonzero
// coefficient of the style direction is positive.
// style: [n x F_s], linguistics: [n x F_l].
CcaModel cca_fit(const Tensor& style, const Tensor& linguistics, std::size_t dims = kDefaultCcaDims,
                 double ridge = kDefaultRidge);

// Projections of one centred vector onto the canonical directions.
std::vector<double> cca_project_style(const CcaModel& model, std::span<const double> style_vec);
std::vector<double> cca_project_linguistics(const CcaModel& model,
                                            std::span<const double> ling_vec);

// Pearson r between the two projected d_c-vectors of one sample.
double cca_project_correlate(const CcaModel& model, std::span<const double> style_vec,
                             std::span<const double> ling_vec);

// How "correlation of the projected vectors" is read.
enum class CcaCorrelation {
  per_sample,     // r across the d_c canonical dimensions of each sample
  per_dimension,  // r across samples for each canonical dimension
};
std::string to_string(CcaCorrelation c);
CcaCorrelation parse_cca_correlation(const std::string& s);

struct ProbeSample {
  std::string id;
  std::string group;  // "real" or the fake system / attack id
  store::Label label = store::Label::real;
  std::vector<double> style;  // layer- and time-averaged
  std::vector<double> linguistics;
};

struct GroupStats {
  std::string group;
  std::size_t n = 0;
  double mean = 0.0;
  double std = 0.0;
  std::optional<metrics::WelchResult> welch_vs_real;
};

struct CcaProbeReport {
  std::size_t fit_n = 0;
  std::size_t dims = 0;
  double ridge = kDefaultRidge;
  CcaCorrelation correlation = CcaCorrelation::per_sample;
  std::vector<double> training_correlations;
  std::vector<std::string> fit_ids;
  std::vector<GroupStats> groups;  // "real" first, then groups by name
  struct SampleR {
    std::string id;
    std::string group;
    double r = 0.0;
  };
  // per_sample mode: one r per held-out sample.
  std::vector<SampleR> sample_r;
  std::vector<std::string> warnings;
};

// Fits on `fit_n` real samples chosen by a seeded shuffle and scores every
// other sample; groups are compared with the held-out real group by Welch's
// t-test.
CcaProbeReport cca_probe(const std::vector<ProbeSample>& samples, std::size_t fit_n,
                         std::size_t dims, double ridge, std::uint64_t seed,
                         CcaCorrelation correlation = CcaCorrelation::per_sample);

// Layer- and time-averaged vectors of one in-memory pair.
ProbeSample probe_sample(std::string id, std::string group, store::Label label,
                         const store::EmbeddingTensor& style,
                         const store::EmbeddingTensor& linguistics);

// Layer- and time-averaged vectors from embedding files.
std::vector<ProbeSample> probe_samples(const std::vector<store::ManifestRecord>& records);

std::string summary_json(const CcaProbeReport& report);
std::string samples_jsonl(const CcaProbeReport& report);

// ---------------------------------------------------------------------------
// Mismatch distribution

inline constexpr double kLogFloor = 1e-12;

struct MismatchSample {
  std::string id;
  store::Label label = store::Label::real;
  double distance = 0.0;  // cosine distance between S-bar and L-bar
};

struct Histogram {
  std::vector<double> edges;  // log10(max(distance, kLogFloor)), bins + 1 edges
  std::vector<std::size_t> real;
  std::vector<std::size_t> fake;
};

struct MismatchReport {
  std::vector<MismatchSample> samples;
  metrics::ClassSummary real;
  metrics::ClassSummary fake;
  metrics::ClassSummary real_log10;
  metrics::ClassSummary fake_log10;
  std::optional<metrics::WelchResult> welch;  // fake vs real
  std::optional<double> welch_p_greater;      // one-sided: fake > real
  Histogram histogram;
  std::vector<std::string> warnings;
};

MismatchReport mismatch_report(std::vector<MismatchSample> samples, std::size_t bins = 20);
MismatchReport mismatch_report(const std::vector<train::PooledSample>& samples,
                               const model::ModelCheckpoint& ckpt, std::size_t bins = 20);

std::string summary_json(const MismatchReport& report);
std::string samples_jsonl(const MismatchReport& report);

// ---------------------------------------------------------------------------
// Layer-wise Spearman map

enum class SpearmanPooling {
  per_sample,    // rho per sample, averaged over samples
  concatenated,  // one rho over the concatenated time-averaged vectors
};
std::string to_string(SpearmanPooling p);
SpearmanPooling parse_spearman_pooling(const std::string& s);

// embs_a[i]: [K_a x F x T], embs_b[i]: [K_b x F x T]; returns [K_a x K_b].
Tensor layer_spearman_matrix(const std::vector<Tensor>& embs_a, const std::vector<Tensor>& embs_b,
                             SpearmanPooling pooling = SpearmanPooling::per_sample);

std::string matrix_text(const Tensor& m);

}  // namespace slim::analysis

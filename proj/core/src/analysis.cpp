#include "slim/analysis.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "slim/error.hpp"

namespace slim::analysis {

namespace {

using Matrix = Eigen::MatrixXd;
using RowMajorMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

Matrix to_matrix(const Tensor& t) { return RowMajorMap(t.data().data(), t.dim(0), t.dim(1)); }

Tensor to_tensor(const Matrix& m) {
  Tensor out({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  auto d = out.data();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) d[r * m.cols() + c] = m(r, c);
  }
  return out;
}

// (C + ridge * tr(C)/F * I)^(-1/2) for a symmetric PSD covariance.
Matrix regularized_inverse_sqrt(Matrix c, double ridge, const char* view) {
  const auto f = static_cast<double>(c.rows());
  const double shift = ridge * c.trace() / f;
  c.diagonal().array() += shift;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(c);
  if (eig.info() != Eigen::Success) {
    throw NumericalError(std::string("CCA: eigen-decomposition of the ") + view +
                         " covariance failed");
  }
  const auto& lambda = eig.eigenvalues();
  const double top = lambda.maxCoeff();
  if (!(top > 0.0) || lambda.minCoeff() <= 1e-12 * top) {
    throw NumericalError(std::string("CCA: ") + view +
                         " covariance is singular; increase the ridge");
  }
  return eig.eigenvectors() * lambda.array().rsqrt().matrix().asDiagonal() *
         eig.eigenvectors().transpose();
}

std::vector<double> column_means(const Matrix& x) {
  const Eigen::VectorXd m = x.colwise().mean();
  return {m.data(), m.data() + m.size()};
}

double safe_corr(const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
  const double su = u.squaredNorm(), sv = v.squaredNorm();
  if (su <= 0.0 || sv <= 0.0) return 0.0;
  return u.dot(v) / std::sqrt(su * sv);
}

std::vector<double> project(const Tensor& proj, const std::vector<double>& mean,
                            std::span<const double> x, const char* view) {
  if (x.size() != mean.size()) {
    throw DimensionError(std::string("CCA ") + view + " vector has " + std::to_string(x.size()) +
                         " features, model expects " + std::to_string(mean.size()));
  }
  const std::size_t f = proj.dim(0), d = proj.dim(1);
  std::vector<double> out(d, 0.0);
  const auto p = proj.data();
  for (std::size_t i = 0; i < f; ++i) {
    const double c = x[i] - mean[i];
    for (std::size_t j = 0; j < d; ++j) out[j] += c * p[i * d + j];
  }
  return out;
}

nlohmann::json summary(const metrics::ClassSummary& s) {
  return {{"n", s.n},     {"mean", s.mean},     {"std", s.std}, {"min", s.min},
          {"q25", s.q25}, {"median", s.median}, {"q75", s.q75}, {"max", s.max}};
}

nlohmann::json welch_json(const std::optional<metrics::WelchResult>& w) {
  if (!w) return {{"welch_t", nullptr}, {"welch_df", nullptr}, {"welch_p", nullptr}};
  return {{"welch_t", w->t}, {"welch_df", w->df}, {"welch_p", w->p}};
}

}  // namespace

// ---------------------------------------------------------------------------
// CCA

CcaModel cca_fit(const Tensor& style, const Tensor& linguistics, std::size_t dims, double ridge) {
  if (style.rank() != 2 || linguistics.rank() != 2 || style.dim(0) != linguistics.dim(0)) {
    throw DimensionError("cca_fit expects [n x F_s] and [n x F_l] with equal n, got " +
                         shape_str(style.shape()) + " and " + shape_str(linguistics.shape()));
  }
  const std::size_t n = style.dim(0), fs = style.dim(1), fl = linguistics.dim(1);
  if (n < 2) throw ValidationError("cca_fit needs at least 2 samples");
  if (dims < 1) throw ValidationError("cca_fit needs dims >= 1");
  const std::size_t bound = std::min({fs, fl, n - 1});
  if (dims > bound) {
    throw ValidationError("cca_fit: dims " + std::to_string(dims) + " exceeds the rank bound " +
                          std::to_string(bound) + " = min(F_s, F_l, n - 1)");
  }
  if (!(ridge >= 0.0)) throw ValidationError("cca_fit: ridge must be >= 0");

  Matrix x = to_matrix(style), y = to_matrix(linguistics);
  CcaModel model;
  model.ridge = ridge;
  model.style_mean = column_means(x);
  model.linguistics_mean = column_means(y);
  x.rowwise() -= x.colwise().mean();
  y.rowwise() -= y.colwise().mean();
  const double denom = static_cast<double>(n - 1);
  const Matrix wx = regularized_inverse_sqrt(x.transpose() * x / denom, ridge, "style");
  const Matrix wy = regularized_inverse_sqrt(y.transpose() * y / denom, ridge, "linguistics");
  const Matrix m = wx * (x.transpose() * y / denom) * wy;
  Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Matrix a = wx * svd.matrixU().leftCols(static_cast<Eigen::Index>(dims));
  Matrix b = wy * svd.matrixV().leftCols(static_cast<Eigen::Index>(dims));

  std::vector<double> corr(dims);
  for (std::size_t j = 0; j < dims; ++j) {
    const auto c = static_cast<Eigen::Index>(j);
    corr[j] = std::clamp(safe_corr(x * a.col(c), y * b.col(c)), 0.0, 1.0);
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      if (a(i, c) != 0.0) {
        if (a(i, c) < 0.0) {
          a.col(c) *= -1.0;
          b.col(c) *= -1.0;
        }
        break;
      }
    }
  }
  std::vector<std::size_t> order(dims);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&corr](std::size_t p, std::size_t q) { return corr[p] > corr[q]; });
  Matrix a_sorted(a.rows(), a.cols()), b_sorted(b.rows(), b.cols());
  for (std::size_t j = 0; j < dims; ++j) {
    a_sorted.col(static_cast<Eigen::Index>(j)) = a.col(static_cast<Eigen::Index>(order[j]));
    b_sorted.col(static_cast<Eigen::Index>(j)) = b.col(static_cast<Eigen::Index>(order[j]));
    model.correlations.push_back(corr[order[j]]);
  }
  model.style_projection = to_tensor(a_sorted);
  model.linguistics_projection = to_tensor(b_sorted);
  return model;
}

std::vector<double> cca_project_style(const CcaModel& model, std::span<const double> style_vec) {
  return project(model.style_projection, model.style_mean, style_vec, "style");
}

std::vector<double> cca_project_linguistics(const CcaModel& model,
                                            std::span<const double> ling_vec) {
  return project(model.linguistics_projection, model.linguistics_mean, ling_vec, "linguistics");
}

double cca_project_correlate(const CcaModel& model, std::span<const double> style_vec,
                             std::span<const double> ling_vec) {
  const auto u = cca_project_style(model, style_vec);
  const auto v = cca_project_linguistics(model, ling_vec);
  try {
    return metrics::pearson(u, v);
  } catch (const NumericalError&) {
    throw NumericalError("cca_project_correlate: projected vector has zero variance");
  }
}

std::string to_string(CcaCorrelation c) {
  return c == CcaCorrelation::per_sample ? "per-sample" : "per-dimension";
}

CcaCorrelation parse_cca_correlation(const std::string& s) {
  if (s == "per-sample") return CcaCorrelation::per_sample;
  if (s == "per-dimension") return CcaCorrelation::per_dimension;
  throw ConfigError("unknown CCA correlation mode \"" + s +
                    "\" (expected per-sample or per-dimension)");
}

namespace {

std::vector<double> layer_time_average(const store::EmbeddingTensor& e) {
  std::vector<double> v(e.features, 0.0);
  for (std::size_t k = 0; k < e.layers; ++k) {
    for (std::size_t f = 0; f < e.features; ++f) {
      double s = 0.0;
      for (std::size_t t = 0; t < e.frames; ++t) s += e.at(k, f, t);
      v[f] += s;
    }
  }
  const double inv = 1.0 / static_cast<double>(e.layers * e.frames);
  for (double& x : v) x *= inv;
  return v;
}

}  // namespace

ProbeSample probe_sample(std::string id, std::string group, store::Label label,
                         const store::EmbeddingTensor& style,
                         const store::EmbeddingTensor& linguistics) {
  return {std::move(id), std::move(group), label, layer_time_average(style),
          layer_time_average(linguistics)};
}

std::vector<ProbeSample> probe_samples(const std::vector<store::ManifestRecord>& records) {
  std::vector<ProbeSample> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    out.push_back(probe_sample(r.id,
                               r.label == store::Label::real ? "real" : r.attack_id.value_or("fake"),
                               r.label, store::read_embedding(r.style_path),
                               store::read_embedding(r.linguistics_path)));
  }
  return out;
}

CcaProbeReport cca_probe(const std::vector<ProbeSample>& samples, std::size_t fit_n,
                         std::size_t dims, double ridge, std::uint64_t seed,
                         CcaCorrelation correlation) {
  std::vector<std::size_t> real_idx;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].label == store::Label::real) real_idx.push_back(i);
  }
  if (fit_n < 2) throw ValidationError("CCA probe needs fit-n >= 2");
  if (real_idx.size() < fit_n + 2) {
    throw ValidationError("CCA probe needs fit-n + 2 real samples (" + std::to_string(fit_n + 2) +
                          "), manifest has " + std::to_string(real_idx.size()));
  }
  const auto order = store::batch_plan(real_idx.size(), real_idx.size(), seed).front();
  std::vector<bool> in_fit(samples.size(), false);
  const std::size_t fs = samples[real_idx.front()].style.size();
  const std::size_t fl = samples[real_idx.front()].linguistics.size();
  Tensor xs({fit_n, fs}), xl({fit_n, fl});
  CcaProbeReport report;
  for (std::size_t r = 0; r < fit_n; ++r) {
    const auto& s = samples[real_idx[order[r]]];
    if (s.style.size() != fs || s.linguistics.size() != fl) {
      throw DimensionError("CCA probe: sample " + s.id + " has mismatched feature widths");
    }
    in_fit[real_idx[order[r]]] = true;
    report.fit_ids.push_back(s.id);
    std::copy(s.style.begin(), s.style.end(), xs.data().begin() + r * fs);
    std::copy(s.linguistics.begin(), s.linguistics.end(), xl.data().begin() + r * fl);
  }
  const CcaModel model = cca_fit(xs, xl, dims, ridge);
  report.fit_n = fit_n;
  report.dims = dims;
  report.ridge = ridge;
  report.correlation = correlation;
  report.training_correlations = model.correlations;

  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!in_fit[i]) groups[samples[i].group].push_back(i);
  }

  std::map<std::string, std::vector<double>> values;
  for (const auto& [name, idx] : groups) {
    auto& vals = values[name];
    if (correlation == CcaCorrelation::per_sample) {
      for (auto i : idx) {
        const double r = cca_project_correlate(model, samples[i].style, samples[i].linguistics);
        vals.push_back(r);
        report.sample_r.push_back({samples[i].id, name, r});
      }
    } else {
      if (idx.size() < 2) {
        report.warnings.push_back("group " + name + " has fewer than 2 samples; skipped");
        continue;
      }
      std::vector<std::vector<double>> u(dims), v(dims);
      for (auto i : idx) {
        const auto pu = cca_project_style(model, samples[i].style);
        const auto pv = cca_project_linguistics(model, samples[i].linguistics);
        for (std::size_t k = 0; k < dims; ++k) {
          u[k].push_back(pu[k]);
          v[k].push_back(pv[k]);
        }
      }
      for (std::size_t k = 0; k < dims; ++k) vals.push_back(metrics::pearson(u[k], v[k]));
    }
  }

  auto stats_for = [&](const std::string& name) {
    GroupStats g;
    g.group = name;
    const auto& vals = values[name];
    g.n = correlation == CcaCorrelation::per_sample ? vals.size() : groups[name].size();
    if (!vals.empty()) g.mean = metrics::mean(vals);
    if (vals.size() > 1) g.std = metrics::stddev(vals);
    return g;
  };
  report.groups.push_back(stats_for("real"));
  for (const auto& [name, idx] : groups) {
    if (name == "real") continue;
    GroupStats g = stats_for(name);
    const auto& a = values[name];
    const auto& b = values["real"];
    if (a.size() >= 2 && b.size() >= 2) {
      try {
        g.welch_vs_real = metrics::welch_ttest(b, a);
      } catch (const NumericalError& e) {
        report.warnings.push_back("group " + name + ": " + e.what());
      }
    } else {
      report.warnings.push_back("group " + name + ": too few values for Welch's t-test");
    }
    report.groups.push_back(std::move(g));
  }
  if (report.groups.size() == 1) {
    report.warnings.push_back("no fake groups: report has no significance test");
  }
  return report;
}

std::string summary_json(const CcaProbeReport& report) {
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& g : report.groups) {
    nlohmann::json j = {{"class", g.group}, {"n", g.n}, {"mean", g.mean}, {"std", g.std}};
    if (g.group != "real") {
      // Welch statistics compare the real group with this group.
      j.update(welch_json(g.welch_vs_real));
    }
    groups.push_back(std::move(j));
  }
  nlohmann::json j = {{"analysis", "cca"},
                      {"fit_n", report.fit_n},
                      {"dims", report.dims},
                      {"ridge", report.ridge},
                      {"ridge_note", "covariances regularised as S + ridge * tr(S)/F * I"},
                      {"correlation", to_string(report.correlation)},
                      {"training_correlations", report.training_correlations},
                      {"groups", groups},
                      {"warnings", report.warnings}};
  return j.dump(2) + "\n";
}

std::string samples_jsonl(const CcaProbeReport& report) {
  std::string out;
  for (const auto& s : report.sample_r) {
    out += nlohmann::json({{"id", s.id}, {"class", s.group}, {"r", s.r}}).dump() + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Mismatch distribution

MismatchReport mismatch_report(std::vector<MismatchSample> samples, std::size_t bins) {
  if (bins < 1) throw ValidationError("histogram needs at least 1 bin");
  MismatchReport report;
  std::vector<double> real, fake, real_log, fake_log, all_log;
  for (const auto& s : samples) {
    const double lg = std::log10(std::max(s.distance, kLogFloor));
    all_log.push_back(lg);
    if (s.label == store::Label::real) {
      real.push_back(s.distance);
      real_log.push_back(lg);
    } else {
      fake.push_back(s.distance);
      fake_log.push_back(lg);
    }
  }
  report.real = metrics::summarize(real);
  report.fake = metrics::summarize(fake);
  report.real_log10 = metrics::summarize(real_log);
  report.fake_log10 = metrics::summarize(fake_log);
  if (real.empty() || fake.empty()) {
    report.warnings.push_back("single-class input: no significance test");
  } else if (real.size() < 2 || fake.size() < 2) {
    report.warnings.push_back("fewer than 2 samples in a class: no significance test");
  } else {
    try {
      report.welch = metrics::welch_ttest(fake, real);
      report.welch_p_greater = metrics::welch_p_greater(*report.welch);
    } catch (const NumericalError& e) {
      report.warnings.push_back(std::string("degenerate distances: ") + e.what());
    }
  }

  if (!all_log.empty()) {
    double lo = *std::min_element(all_log.begin(), all_log.end());
    double hi = *std::max_element(all_log.begin(), all_log.end());
    if (hi <= lo) hi = lo + 1.0;
    auto& h = report.histogram;
    for (std::size_t b = 0; b <= bins; ++b) {
      h.edges.push_back(lo + (hi - lo) * static_cast<double>(b) / static_cast<double>(bins));
    }
    h.real.assign(bins, 0);
    h.fake.assign(bins, 0);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      auto b = static_cast<std::size_t>((all_log[i] - lo) / (hi - lo) * static_cast<double>(bins));
      b = std::min(b, bins - 1);
      (samples[i].label == store::Label::real ? h.real : h.fake)[b] += 1;
    }
  }
  report.samples = std::move(samples);
  return report;
}

MismatchReport mismatch_report(const std::vector<train::PooledSample>& samples,
                               const model::ModelCheckpoint& ckpt, std::size_t bins) {
  const auto deps = train::dependency_features(samples, ckpt);
  std::vector<MismatchSample> out;
  out.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    out.push_back({samples[i].id, samples[i].label,
                   metrics::cosine_distance(deps[i].style, deps[i].linguistics)});
  }
  return mismatch_report(std::move(out), bins);
}

std::string summary_json(const MismatchReport& report) {
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& [name, s, lg] :
       {std::tuple{"real", report.real, report.real_log10},
        std::tuple{"fake", report.fake, report.fake_log10}}) {
    nlohmann::json j = summary(s);
    j["class"] = name;
    j["log10"] = summary(lg);
    classes.push_back(std::move(j));
  }
  nlohmann::json j = {{"analysis", "mismatch"},
                      {"distance", "cosine distance between S-bar and L-bar"},
                      {"classes", classes},
                      {"welch_p_greater", report.welch_p_greater
                                              ? nlohmann::json(*report.welch_p_greater)
                                              : nlohmann::json(nullptr)},
                      {"histogram",
                       {{"log10_floor", kLogFloor},
                        {"log10_edges", report.histogram.edges},
                        {"real", report.histogram.real},
                        {"fake", report.histogram.fake}}},
                      {"warnings", report.warnings}};
  j.update(welch_json(report.welch));
  return j.dump(2) + "\n";
}

std::string samples_jsonl(const MismatchReport& report) {
  std::string out;
  for (const auto& s : report.samples) {
    out += nlohmann::json({{"id", s.id}, {"class", store::to_string(s.label)},
                           {"distance", s.distance}})
               .dump() +
           "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Layer-wise Spearman map

std::string to_string(SpearmanPooling p) {
  return p == SpearmanPooling::per_sample ? "per-sample" : "concatenated";
}

SpearmanPooling parse_spearman_pooling(const std::string& s) {
  if (s == "per-sample") return SpearmanPooling::per_sample;
  if (s == "concatenated") return SpearmanPooling::concatenated;
  throw ConfigError("unknown Spearman pooling \"" + s + "\" (expected per-sample or concatenated)");
}

namespace {

// Time-averaged F-vector of every layer of a [K x F x T] tensor.
std::vector<std::vector<double>> layer_means(const Tensor& x) {
  const std::size_t k = x.dim(0), f = x.dim(1), t = x.dim(2);
  std::vector<std::vector<double>> out(k, std::vector<double>(f, 0.0));
  const auto d = x.data();
  for (std::size_t l = 0; l < k; ++l) {
    for (std::size_t j = 0; j < f; ++j) {
      const double* row = d.data() + (l * f + j) * t;
      out[l][j] = std::accumulate(row, row + t, 0.0) / static_cast<double>(t);
    }
  }
  return out;
}

}  // namespace

Tensor layer_spearman_matrix(const std::vector<Tensor>& embs_a, const std::vector<Tensor>& embs_b,
                             SpearmanPooling pooling) {
  if (embs_a.size() != embs_b.size()) {
    throw DimensionError("layer_spearman_matrix: " + std::to_string(embs_a.size()) + " vs " +
                         std::to_string(embs_b.size()) + " samples");
  }
  if (embs_a.size() < 2) throw ValidationError("layer_spearman_matrix needs at least 2 samples");
  for (const auto* set : {&embs_a, &embs_b}) {
    for (const auto& e : *set) {
      if (e.rank() != 3 || e.dim(0) != set->front().dim(0) || e.dim(1) != embs_a.front().dim(1)) {
        throw DimensionError("layer_spearman_matrix: inconsistent tensor shape " +
                             shape_str(e.shape()));
      }
    }
  }
  const std::size_t ka = embs_a.front().dim(0), kb = embs_b.front().dim(0);
  const std::size_t n = embs_a.size();
  Tensor out({ka, kb});
  auto o = out.data();

  if (pooling == SpearmanPooling::per_sample) {
    for (std::size_t s = 0; s < n; ++s) {
      const auto la = layer_means(embs_a[s]), lb = layer_means(embs_b[s]);
      std::vector<std::vector<double>> ra, rb;
      for (const auto& v : la) ra.push_back(metrics::fractional_ranks(v));
      for (const auto& v : lb) rb.push_back(metrics::fractional_ranks(v));
      for (std::size_t i = 0; i < ka; ++i) {
        for (std::size_t j = 0; j < kb; ++j) {
          try {
            o[i * kb + j] += metrics::pearson(ra[i], rb[j]);
          } catch (const NumericalError&) {
            throw NumericalError("layer_spearman_matrix: all-tied layer vector in sample " +
                                 std::to_string(s));
          }
        }
      }
    }
    for (double& v : o) v /= static_cast<double>(n);
    return out;
  }

  std::vector<std::vector<double>> ca(ka), cb(kb);
  for (std::size_t s = 0; s < n; ++s) {
    const auto la = layer_means(embs_a[s]), lb = layer_means(embs_b[s]);
    for (std::size_t i = 0; i < ka; ++i) ca[i].insert(ca[i].end(), la[i].begin(), la[i].end());
    for (std::size_t j = 0; j < kb; ++j) cb[j].insert(cb[j].end(), lb[j].begin(), lb[j].end());
  }
  for (std::size_t i = 0; i < ka; ++i) {
    for (std::size_t j = 0; j < kb; ++j) o[i * kb + j] = metrics::spearman(ca[i], cb[j]);
  }
  return out;
}

std::string matrix_text(const Tensor& m) {
  std::ostringstream os;
  os << "# " << m.dim(0) << " x " << m.dim(1) << " layer Spearman matrix (rows: view a)\n";
  os << std::setprecision(10);
  for (std::size_t i = 0; i < m.dim(0); ++i) {
    for (std::size_t j = 0; j < m.dim(1); ++j) os << (j ? " " : "") << m.at(i, j);
    os << '\n';
  }
  return os.str();
}

}  // namespace slim::analysis

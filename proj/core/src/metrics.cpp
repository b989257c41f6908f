#include "slim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "slim/error.hpp"

namespace slim::metrics {

EerResult eer(std::span<const double> scores_real, std::span<const double> scores_fake) {
  if (scores_real.empty() || scores_fake.empty()) {
    throw ValidationError("eer needs non-empty real and fake score lists");
  }
  std::vector<double> real(scores_real.begin(), scores_real.end());
  std::vector<double> fake(scores_fake.begin(), scores_fake.end());
  std::sort(real.begin(), real.end());
  std::sort(fake.begin(), fake.end());

  std::vector<double> unique;
  unique.reserve(real.size() + fake.size());
  std::merge(real.begin(), real.end(), fake.begin(), fake.end(), std::back_inserter(unique));
  unique.erase(std::unique(unique.begin(), unique.end()), unique.end());

  std::vector<double> thresholds;
  thresholds.reserve(unique.size() + 1);
  thresholds.push_back(unique.front() - 1.0);
  for (std::size_t i = 0; i + 1 < unique.size(); ++i) {
    thresholds.push_back(0.5 * (unique[i] + unique[i + 1]));
  }
  thresholds.push_back(unique.back() + 1.0);

  const double nr = static_cast<double>(real.size()), nf = static_cast<double>(fake.size());
  auto far_at = [&](double th) {
    const auto below = std::lower_bound(fake.begin(), fake.end(), th) - fake.begin();
    return (nf - static_cast<double>(below)) / nf;
  };
  auto frr_at = [&](double th) {
    return static_cast<double>(std::lower_bound(real.begin(), real.end(), th) - real.begin()) / nr;
  };

  double prev_far = far_at(thresholds[0]), prev_frr = frr_at(thresholds[0]);
  for (std::size_t i = 1; i < thresholds.size(); ++i) {
    const double far = far_at(thresholds[i]), frr = frr_at(thresholds[i]);
    if (frr == far) return {frr, thresholds[i]};
    if (frr > far) {
      const double gap_prev = prev_far - prev_frr;  // > 0
      const double gap_next = far - frr;            // < 0
      const double s = gap_prev / (gap_prev - gap_next);
      return {prev_frr + s * (frr - prev_frr),
              thresholds[i - 1] + s * (thresholds[i] - thresholds[i - 1])};
    }
    prev_far = far;
    prev_frr = frr;
  }
  // Unreachable: the last candidate has FRR = 1 and FAR = 0.
  return {0.5, thresholds.back()};
}

double f1(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) {
    throw DimensionError("f1: " + std::to_string(predictions.size()) + " predictions vs " +
                         std::to_string(labels.size()) + " labels");
  }
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int p = predictions[i], y = labels[i];
    if ((p != 0 && p != 1) || (y != 0 && y != 1)) {
      throw ValidationError("f1 expects binary predictions and labels");
    }
    if (p == 1 && y == 1) ++tp;
    if (p == 1 && y == 0) ++fp;
    if (p == 0 && y == 1) ++fn;
  }
  const std::size_t denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

double mean(std::span<const double> x) {
  if (x.empty()) throw ValidationError("mean of an empty sample");
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double variance(std::span<const double> x) {
  if (x.size() < 2) throw ValidationError("variance needs at least 2 values");
  const double m = mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return ss / static_cast<double>(x.size() - 1);
}

double stddev(std::span<const double> x) { return std::sqrt(variance(x)); }

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw DimensionError("pearson: lengths differ (" + std::to_string(x.size()) + " vs " +
                         std::to_string(y.size()) + ")");
  }
  if (x.size() < 2) throw ValidationError("pearson needs at least 2 pairs");
  const double mx = mean(x), my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) throw NumericalError("pearson: zero variance input");
  const double r = sxy / std::sqrt(sxx * syy);
  return std::clamp(r, -1.0, 1.0);
}

std::vector<double> fractional_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw DimensionError("spearman: lengths differ (" + std::to_string(x.size()) + " vs " +
                         std::to_string(y.size()) + ")");
  }
  if (x.size() < 2) throw ValidationError("spearman needs at least 2 pairs");
  const auto rx = fractional_ranks(x), ry = fractional_ranks(y);
  try {
    return pearson(rx, ry);
  } catch (const NumericalError&) {
    throw NumericalError("spearman: all-tied input");
  }
}

double cosine_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("cosine_distance: lengths differ");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw NumericalError("cosine_distance: zero vector");
  const double c = std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
  return 1.0 - c;
}

namespace {

// Continued fraction for I_x(a, b), evaluated with the modified Lentz method.
double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 10000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  throw NumericalError("incomplete beta continued fraction did not converge");
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0)) throw NumericalError("incomplete beta needs a, b > 0");
  if (!(x >= 0.0 && x <= 1.0)) throw NumericalError("incomplete beta needs x in [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                           a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_sf(double t, double df) {
  if (!(df > 0.0)) throw NumericalError("student_t_sf needs df > 0");
  if (std::isinf(t)) return t > 0 ? 0.0 : 1.0;
  const double x = df / (df + t * t);
  const double tail = 0.5 * regularized_incomplete_beta(0.5 * df, 0.5, x);
  return t > 0 ? tail : 1.0 - tail;
}

WelchResult welch_ttest(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) {
    throw ValidationError("welch_ttest needs at least 2 values per sample");
  }
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double va = variance(a) / na, vb = variance(b) / nb;
  const double se2 = va + vb;
  if (se2 <= 0.0) throw NumericalError("welch_ttest: both samples have zero variance");
  WelchResult r;
  r.t = (mean(a) - mean(b)) / std::sqrt(se2);
  r.df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
  const double x = r.df / (r.df + r.t * r.t);
  r.p = regularized_incomplete_beta(0.5 * r.df, 0.5, x);
  return r;
}

double welch_p_greater(const WelchResult& r) { return student_t_sf(r.t, r.df); }

double quantile(std::span<const double> x, double q) {
  if (x.empty()) throw ValidationError("quantile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw ValidationError("quantile level must lie in [0, 1]");
  std::vector<double> s(x.begin(), x.end());
  std::sort(s.begin(), s.end());
  const double pos = q * static_cast<double>(s.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, s.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return s[lo] + frac * (s[hi] - s[lo]);
}

ClassSummary summarize(std::span<const double> x) {
  ClassSummary s;
  s.n = x.size();
  if (x.empty()) return s;
  s.mean = mean(x);
  s.std = x.size() > 1 ? stddev(x) : 0.0;
  s.min = *std::min_element(x.begin(), x.end());
  s.max = *std::max_element(x.begin(), x.end());
  s.q25 = quantile(x, 0.25);
  s.median = quantile(x, 0.5);
  s.q75 = quantile(x, 0.75);
  return s;
}

EvalReport evaluate_scores(std::span<const double> scores_real, std::span<const double> scores_fake,
                           double decision_threshold) {
  EvalReport r;
  const EerResult e = eer(scores_real, scores_fake);
  r.eer = e.eer;
  r.eer_threshold = e.threshold;
  std::vector<int> pred, labels;
  for (double s : scores_real) {
    pred.push_back(s < decision_threshold ? 1 : 0);
    labels.push_back(0);
  }
  for (double s : scores_fake) {
    pred.push_back(s < decision_threshold ? 1 : 0);
    labels.push_back(1);
  }
  r.f1 = f1(pred, labels);
  r.n_real = scores_real.size();
  r.n_fake = scores_fake.size();
  r.real_scores = summarize(scores_real);
  r.fake_scores = summarize(scores_fake);
  return r;
}

}  // namespace slim::metrics

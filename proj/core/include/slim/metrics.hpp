#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace slim::metrics {

struct EerResult {
  double eer = 0.0;
  double threshold = 0.0;
};

// Equal error rate with "higher score = more real". Candidate thresholds are
// the midpoints of the sorted unique scores plus one point below the minimum
// and one above the maximum. FAR(th) = share of fake scores >= th and
// FRR(th) = share of real scores < th. When no candidate has FAR == FRR the
// two curves are interpolated linearly between the straddling candidates.
EerResult eer(std::span<const double> scores_real, std::span<const double> scores_fake);

// F1 with fake (1) as the positive class; 0 when TP + FP + FN == 0.
double f1(std::span<const int> predictions, std::span<const int> labels);

double mean(std::span<const double> x);
// Sample (n - 1) variance / standard deviation.
double variance(std::span<const double> x);
double stddev(std::span<const double> x);

double pearson(std::span<const double> x, std::span<const double> y);
// Fractional ranks starting at 1; ties share their average rank.
std::vector<double> fractional_ranks(std::span<const double> x);
double spearman(std::span<const double> x, std::span<const double> y);

double cosine_distance(std::span<const double> a, std::span<const double> b);

// I_x(a, b) by continued fraction (modified Lentz).
double regularized_incomplete_beta(double a, double b, double x);
// P(T > t) for Student's t with df degrees of freedom (df may be fractional).
double student_t_sf(double t, double df);

struct WelchResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;  // two-sided
};
WelchResult welch_ttest(std::span<const double> a, std::span<const double> b);
// One-sided p-value for the alternative mean(a) > mean(b).
double welch_p_greater(const WelchResult& r);

// Linear-interpolation quantile on sorted data (the "type 7" definition):
// position q * (n - 1).
double quantile(std::span<const double> x, double q);

struct ClassSummary {
  std::size_t n = 0;
  double mean = 0.0;
  double std = 0.0;
  double min = 0.0;
  double q25 = 0.0;
  double median = 0.0;
  double q75 = 0.0;
  double max = 0.0;
};
ClassSummary summarize(std::span<const double> x);

struct EvalReport {
  double eer = 0.0;
  double eer_threshold = 0.0;
  double f1 = 0.0;
  std::size_t n_real = 0;
  std::size_t n_fake = 0;
  ClassSummary real_scores;
  ClassSummary fake_scores;
};

// Builds the report from real-ness scores; predictions for F1 call a sample
// fake when its score falls below `decision_threshold`.
EvalReport evaluate_scores(std::span<const double> scores_real, std::span<const double> scores_fake,
                           double decision_threshold);

}  // namespace slim::metrics

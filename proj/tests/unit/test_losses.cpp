#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "loss_oracle.hpp"
#include "slim/error.hpp"
#include "slim/losses.hpp"
#include "test_support.hpp"

using namespace slim;
using namespace slim::loss;

namespace {

Stage1LossBreakdown run(const Tensor& s, const Tensor& l, double lambda, LossMode mode) {
  ad::Graph g;
  return stage1_loss(g.constant(s), g.constant(l), lambda, mode).breakdown();
}

double bce(std::vector<double> logits, std::vector<double> labels) {
  ad::Graph g;
  const auto n = logits.size();
  return bce_loss(g.constant(Tensor({n, 1}, std::move(logits))), labels).value().item();
}

}  // namespace

TEST(Stage1Loss, HandComputedExampleLiteral) {
  const auto b = support::two_by_two_example(LossMode::literal);
  EXPECT_NEAR(b.cross, 2.0, 1e-12);
  EXPECT_NEAR(b.style, 1.0, 1e-12);
  EXPECT_NEAR(b.linguistics, 1.0, 1e-12);
  EXPECT_NEAR(b.total, 2.014, 1e-9);
}

TEST(Stage1Loss, HandComputedExampleGramScaled) {
  // Features stay standardized (+-1): cross 8, each Gram/B has off-diagonal +-1.
  const auto b = support::two_by_two_example(LossMode::gram_scaled);
  EXPECT_NEAR(b.cross, 8.0, 1e-12);
  EXPECT_NEAR(b.style, 2.0, 1e-12);
  EXPECT_NEAR(b.linguistics, 2.0, 1e-12);
  EXPECT_NEAR(b.total, 8.028, 1e-9);
}

TEST(Stage1Loss, ZeroForIdenticalOrthonormalFeatures) {
  const Tensor x({4, 1, 2}, {1, 1, 1, -1, -1, 1, -1, -1});
  const auto b = run(x, x, 0.007, LossMode::gram_scaled);
  EXPECT_EQ(b.cross, 0.0);
  EXPECT_NEAR(b.intra, 0.0, 1e-24);
  EXPECT_NEAR(b.total, 0.0, 1e-24);
}

TEST(Stage1Loss, CrossOfIdenticalInputsIsExactlyZero) {
  std::mt19937_64 rng(1);
  for (auto mode : {LossMode::literal, LossMode::gram_scaled}) {
    const Tensor x = support::random_tensor({5, 3, 4}, rng);
    EXPECT_EQ(run(x, x, 0.5, mode).cross, 0.0);
  }
}

TEST(Stage1Loss, BreakdownIdentityOnRandomInputs) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::size_t> dim(2, 6);
  std::uniform_real_distribution<double> lam(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const Shape shape{dim(rng), dim(rng), dim(rng)};
    const auto mode = (trial & 1) ? LossMode::literal : LossMode::gram_scaled;
    const auto b = run(support::random_tensor(shape, rng), support::random_tensor(shape, rng),
                       lam(rng), mode);
    EXPECT_NEAR(b.total, b.cross + b.lambda * b.intra, 1e-12);
    EXPECT_NEAR(b.intra, b.style + b.linguistics, 1e-12);
    EXPECT_GE(b.cross, 0.0);
    EXPECT_GE(b.style, 0.0);
    EXPECT_GE(b.linguistics, 0.0);
  }
}

TEST(Stage1Loss, SymmetricInViewsAndBatchOrder) {
  std::mt19937_64 rng(3);
  for (auto mode : {LossMode::literal, LossMode::gram_scaled}) {
    const Tensor s = support::random_tensor({6, 3, 4}, rng);
    const Tensor l = support::random_tensor({6, 3, 4}, rng);
    const auto base = run(s, l, 0.007, mode);
    EXPECT_NEAR(run(l, s, 0.007, mode).total, base.total, 1e-12);

    std::vector<std::size_t> perm(6);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Tensor ps(s.shape()), pl(l.shape());
    for (std::size_t b = 0; b < 6; ++b)
      for (std::size_t i = 0; i < 12; ++i) {
        ps[b * 12 + i] = s[perm[b] * 12 + i];
        pl[b * 12 + i] = l[perm[b] * 12 + i];
      }
    const auto p = run(ps, pl, 0.007, mode);
    EXPECT_NEAR(p.cross, base.cross, 1e-12);
    EXPECT_NEAR(p.style, base.style, 1e-12);
    EXPECT_NEAR(p.linguistics, base.linguistics, 1e-12);
  }
}

TEST(Stage1Loss, Errors) {
  EXPECT_THROW(run(Tensor({1, 2, 3}), Tensor({1, 2, 3}), 0.007, LossMode::gram_scaled),
               DimensionError);
  EXPECT_THROW(run(Tensor({2, 2, 3}), Tensor({2, 3, 3}), 0.007, LossMode::gram_scaled),
               DimensionError);
  EXPECT_THROW(run(Tensor({2, 2, 3}), Tensor({2, 2, 3}), 1.5, LossMode::gram_scaled), ConfigError);
  EXPECT_THROW(parse_loss_mode("barlow"), ConfigError);
  EXPECT_EQ(parse_loss_mode(to_string(LossMode::literal)), LossMode::literal);
  EXPECT_EQ(parse_loss_mode(to_string(LossMode::gram_scaled)), LossMode::gram_scaled);
}

TEST(Bce, Examples) {
  EXPECT_NEAR(bce({0.0}, {1.0}), std::log(2.0), 1e-15);
  EXPECT_NEAR(bce({0.0}, {0.0}), std::log(2.0), 1e-15);
  EXPECT_LT(bce({20.0}, {1.0}), 1e-8);
  EXPECT_NEAR(bce({1.0}, {1.0}), std::log1p(std::exp(-1.0)), 1e-15);
  EXPECT_NEAR(bce({1.0}, {1.0}), 0.3133, 1e-4);
  EXPECT_NEAR(bce({1.0, -2.0}, {1.0, 0.0}), 0.5 * (std::log1p(std::exp(-1.0)) + std::log1p(std::exp(-2.0))), 1e-15);
}

TEST(Bce, StableForLargeLogits) {
  const double v = bce({-800.0, 800.0}, {1.0, 0.0});
  EXPECT_DOUBLE_EQ(v, 800.0);
}

TEST(Bce, LabelValidation) {
  EXPECT_THROW(bce({0.0}, {0.5}), ValidationError);
  EXPECT_THROW(bce({0.0, 1.0}, {1.0}), DimensionError);
}

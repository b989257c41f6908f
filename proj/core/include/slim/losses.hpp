#pragma once

#include <span>
#include <string>

#include "slim/autodiff.hpp"

namespace slim::loss {

// How the batch size enters the self-contrastive objective.
//  - literal:     standardized features are divided by B before both the
//                 cross term and the Gram matrix (so the Gram shrinks by B^2).
//  - gram_scaled: features stay standardized; only the Gram matrix is divided
//                 by B, so its diagonal is exactly 1 for non-degenerate columns.
enum class LossMode { literal, gram_scaled };
std::string to_string(LossMode m);
LossMode parse_loss_mode(const std::string& s);

inline constexpr double kDefaultLambda = 0.007;

struct Stage1LossBreakdown {
  double total = 0.0;
  double cross = 0.0;
  double intra = 0.0;
  double style = 0.0;
  double linguistics = 0.0;
  double lambda = 0.0;
};

struct Stage1Loss {
  ad::Var total;
  ad::Var cross;
  ad::Var intra;
  ad::Var style;
  ad::Var linguistics;
  double lambda = 0.0;

  Stage1LossBreakdown breakdown() const;
};

// Self-contrastive loss over dependency features S, L of shape [B x T x D]:
//   cross = (1/T) sum_t || std(S_t) - std(L_t) ||_F^2
//   style = || std(mean_t S)^T std(mean_t S) - I ||_F^2   (scaled per mode)
//   total = cross + lambda * (style + linguistics)
// where std() is per-column batch standardization.
Stage1Loss stage1_loss(ad::Var style, ad::Var linguistics, double lambda = kDefaultLambda,
                       LossMode mode = LossMode::gram_scaled);

// Mean binary cross-entropy on logits, computed as softplus(z) - y z.
// Labels must be 0 or 1 (1 = fake).
ad::Var bce_loss(ad::Var logits, std::span<const double> labels);

}  // namespace slim::loss

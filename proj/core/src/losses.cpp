#include "slim/losses.hpp"

#include "slim/error.hpp"

namespace slim::loss {

std::string to_string(LossMode m) { return m == LossMode::literal ? "literal" : "gram-scaled"; }

LossMode parse_loss_mode(const std::string& s) {
  if (s == "literal") return LossMode::literal;
  if (s == "gram-scaled" || s == "gram_scaled") return LossMode::gram_scaled;
  throw ConfigError("unknown loss mode \"" + s + "\" (expected literal or gram-scaled)");
}

Stage1LossBreakdown Stage1Loss::breakdown() const {
  return {total.value().item(), cross.value().item(),       intra.value().item(),
          style.value().item(), linguistics.value().item(), lambda};
}

namespace {

ad::Var redundancy(ad::Var averaged, LossMode mode, double batch) {
  ad::Var x = ad::batch_standardize(averaged);
  if (mode == LossMode::literal) x = ad::scale(x, 1.0 / batch);
  ad::Var gram = ad::matmul(ad::transpose(x), x);
  if (mode == LossMode::gram_scaled) gram = ad::scale(gram, 1.0 / batch);
  ad::Var eye = x.graph().constant(Tensor::identity(gram.shape()[0]));
  return ad::frobenius_sq(ad::sub(gram, eye));
}

}  // namespace

Stage1Loss stage1_loss(ad::Var style, ad::Var linguistics, double lambda, LossMode mode) {
  if (style.value().rank() != 3 || style.shape() != linguistics.shape()) {
    throw DimensionError("stage1_loss expects matching [B x T x D] inputs, got " +
                         shape_str(style.shape()) + " and " + shape_str(linguistics.shape()));
  }
  const std::size_t batch = style.shape()[0], frames = style.shape()[1];
  if (batch < 2) throw DimensionError("stage1_loss needs a batch of at least 2 samples");
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw ConfigError("lambda must lie in [0, 1], got " + std::to_string(lambda));
  }
  const double b = static_cast<double>(batch);

  ad::Var cross;
  for (std::size_t t = 0; t < frames; ++t) {
    ad::Var s = ad::batch_standardize(ad::select(style, 1, t));
    ad::Var l = ad::batch_standardize(ad::select(linguistics, 1, t));
    if (mode == LossMode::literal) {
      s = ad::scale(s, 1.0 / b);
      l = ad::scale(l, 1.0 / b);
    }
    ad::Var d = ad::frobenius_sq(ad::sub(s, l));
    cross = cross.valid() ? ad::add(cross, d) : d;
  }
  cross = ad::scale(cross, 1.0 / static_cast<double>(frames));

  Stage1Loss out;
  out.lambda = lambda;
  out.cross = cross;
  out.style = redundancy(ad::reduce_mean(style, 1), mode, b);
  out.linguistics = redundancy(ad::reduce_mean(linguistics, 1), mode, b);
  out.intra = ad::add(out.style, out.linguistics);
  out.total = ad::add(cross, ad::scale(out.intra, lambda));
  return out;
}

ad::Var bce_loss(ad::Var logits, std::span<const double> labels) {
  if (logits.value().size() != labels.size()) {
    throw DimensionError("bce_loss: " + std::to_string(labels.size()) + " labels for logits " +
                         shape_str(logits.shape()));
  }
  for (double y : labels) {
    if (y != 0.0 && y != 1.0) {
      throw ValidationError("bce_loss: label " + std::to_string(y) + " is not 0 or 1");
    }
  }
  ad::Var y = logits.graph().constant(
      Tensor(logits.shape(), std::vector<double>(labels.begin(), labels.end())));
  return ad::mean(ad::sub(ad::softplus(logits), ad::mul(y, logits)));
}

}  // namespace slim::loss

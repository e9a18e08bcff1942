#pragma once

#include <vector>

#include "allmask/common.hpp"

namespace allmask {

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  if (x >= Scalar(0)) {
    return Scalar(1) / (Scalar(1) + std::exp(-x));
  }
  const Scalar e = std::exp(x);
  return e / (Scalar(1) + e);
}

struct LossReport {
  double l_text = 0.0;
  double l_bce = 0.0;
  double l_dice = 0.0;
  double l_mask = 0.0;
  double l_total = 0.0;
  int token_count = 0;
  int patch_count = 0;
};

// Mean negative log-likelihood of each target token under its logits row.
// Row t of `logits` must already be the prediction for targets[t] (the
// caller handles the shift by one).
template <typename Derived>
typename Derived::Scalar text_loss(const Eigen::MatrixBase<Derived>& logits,
                                   const TokenSequence& targets) {
  using Scalar = typename Derived::Scalar;
  if (static_cast<int>(targets.size()) != logits.rows()) {
    throw std::invalid_argument("text_loss: logits/targets length mismatch");
  }
  if (targets.empty()) {
    throw std::invalid_argument("text_loss: empty targets");
  }
  Scalar total = Scalar(0);
  for (Eigen::Index t = 0; t < logits.rows(); ++t) {
    const int target = targets[static_cast<std::size_t>(t)];
    if (target < 0 || target >= logits.cols()) {
      throw std::invalid_argument("text_loss: target id out of range");
    }
    const Scalar peak = logits.row(t).maxCoeff();
    const Scalar lse = peak + std::log((logits.row(t).array() - peak).exp().sum());
    total += lse - logits(t, target);
  }
  return total / static_cast<Scalar>(logits.rows());
}

namespace detail {
constexpr double kProbClamp = 1e-7;  // keeps BCE logs finite at saturation
}

// Mean binary cross entropy over patches, probabilities clamped before log.
template <typename Scalar>
Scalar bce_loss(const Vector<Scalar>& logits, const std::vector<std::uint8_t>& gt) {
  if (logits.size() == 0 || static_cast<int>(gt.size()) != logits.size()) {
    throw std::invalid_argument("bce_loss: bad lengths");
  }
  Scalar total = Scalar(0);
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    Scalar p = sigmoid(logits(i));
    p = std::min(std::max(p, static_cast<Scalar>(detail::kProbClamp)),
                 Scalar(1) - static_cast<Scalar>(detail::kProbClamp));
    const Scalar g = gt[static_cast<std::size_t>(i)] ? Scalar(1) : Scalar(0);
    total -= g * std::log(p) + (Scalar(1) - g) * std::log(Scalar(1) - p);
  }
  return total / static_cast<Scalar>(logits.size());
}

// Soft Dice loss, 1 - (2*sum(p*g) + eps) / (sum(p) + sum(g) + eps).
template <typename Scalar>
Scalar dice_loss(const Vector<Scalar>& logits, const std::vector<std::uint8_t>& gt,
                 Scalar smoothing = Scalar(1)) {
  if (logits.size() == 0 || static_cast<int>(gt.size()) != logits.size()) {
    throw std::invalid_argument("dice_loss: bad lengths");
  }
  Scalar overlap = Scalar(0), p_sum = Scalar(0), g_sum = Scalar(0);
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    const Scalar p = sigmoid(logits(i));
    const Scalar g = gt[static_cast<std::size_t>(i)] ? Scalar(1) : Scalar(0);
    overlap += p * g;
    p_sum += p;
    g_sum += g;
  }
  return Scalar(1) - (Scalar(2) * overlap + smoothing) / (p_sum + g_sum + smoothing);
}

template <typename Scalar>
Scalar mask_loss(const Vector<Scalar>& logits, const std::vector<std::uint8_t>& gt,
                 Scalar smoothing = Scalar(1)) {
  return bce_loss(logits, gt) + dice_loss(logits, gt, smoothing);
}

}  // namespace allmask

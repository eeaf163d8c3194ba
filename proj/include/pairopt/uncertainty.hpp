#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace pairopt {

/// A regressed quantity together with its predicted observation noise.
struct UncertainScalar {
  double value = 0.0;
  double sigma = 1.0;
};

struct AleatoricL1Loss {
  double loss = 0.0;
  double d_prediction = 0.0;  ///< partial derivative w.r.t. the prediction
  double d_sigma = 0.0;       ///< partial derivative w.r.t. sigma
};

/// Heteroscedastic L1 regression loss sqrt(2)|y - y_hat|/sigma + log sigma.
/// At y == y_hat the subgradient w.r.t. the prediction is taken as 0. The
/// unique minimizer over sigma for a fixed error d is sigma* = sqrt(2) d.
inline AleatoricL1Loss aleatoric_l1_loss(double target, double prediction, double sigma) {
  if (!std::isfinite(sigma) || sigma <= 0.0) {
    throw std::invalid_argument("aleatoric_l1_loss: sigma must be positive");
  }
  const double d = target - prediction;
  const double ad = std::abs(d);
  AleatoricL1Loss out;
  out.loss = std::numbers::sqrt2 * ad / sigma + std::log(sigma);
  out.d_prediction = d == 0.0 ? 0.0 : -std::numbers::sqrt2 * (d > 0.0 ? 1.0 : -1.0) / sigma;
  out.d_sigma = -std::numbers::sqrt2 * ad / (sigma * sigma) + 1.0 / sigma;
  return out;
}

inline constexpr double kDefaultWeightClamp = 1e6;

/// Optimization weight 1/sigma, clamped so a single overconfident prediction
/// cannot dominate the normal equations.
inline double weight_from_sigma(double sigma, double max_weight = kDefaultWeightClamp) {
  if (!std::isfinite(sigma) || sigma <= 0.0) {
    throw std::invalid_argument("weight_from_sigma: sigma must be positive");
  }
  return std::min(1.0 / sigma, max_weight);
}

}  // namespace pairopt

#pragma once

#include <algorithm>

#include "pedflow/fields.hpp"

namespace pedflow {

enum class SpeedLaw { Linear, Lwr };

/**
 * Density-to-cost map used by the potential solves.
 * cost(rho) = min(1/speed(max(rho, delta_rho)), c_max), always finite.
 */
struct CostModel {
  SpeedLaw law = SpeedLaw::Linear;
  double rho_max = 1.0;
  double rho_H = 0.0;       // assumed density in invisible areas
  double c_max = 1e3;       // cost cap
  double delta_rho = 1e-7;  // vanishing-density floor

  double speed(double rho) const {
    double r = rho / rho_max;
    return law == SpeedLaw::Linear ? 1.0 - r : r * (1.0 - r);
  }

  double cost(double rho) const {
    double f = speed(std::max(rho, delta_rho));
    if (f <= 0.0) return c_max;
    return std::min(1.0 / f, c_max);
  }

  double hidden_cost() const { return cost(rho_H); }

  /** Sampled check that cost never decreases with density. */
  bool cost_nondecreasing(int samples = 1024) const {
    double prev = cost(0.0);
    for (int i = 1; i <= samples; ++i) {
      double c = cost(rho_max * i / samples);
      if (c < prev - 1e-12 * c_max) return false;
      prev = c;
    }
    return true;
  }
};

struct WallCostParams {
  double eps = 0.025;     // W strength is cost(rho_max - eps)
  double cap_rho = 0.975; // W is bounded by cost at this density
};

/** Fixed extra cost near walls: chi-shaped, capped. */
inline ScalarField wall_cost(const ScalarField& chi, const CostModel& cm,
                             WallCostParams p = {}) {
  if (p.eps <= 0 || p.eps >= cm.rho_max)
    throw ConfigError("wall cost offset must lie in (0, rho_max)");
  ScalarField W = chi;
  double strength = cm.cost(cm.rho_max - p.eps);
  double cap = cm.cost(p.cap_rho * cm.rho_max);
  for (auto& w : W.v) w = std::min(w * strength, cap);
  return W;
}

}  // namespace pedflow

#pragma once

#include <sstream>

#include "mest/errors.hpp"
#include "mest/models.hpp"
#include "mest/quadrature.hpp"

namespace mest {

/// Quantities behind the non-triviality and growth conditions on the law of (U, Y).
struct AssumptionDiagnostics {
  double coercive_prob = 0.0;  ///< P(Omega_coercive), must be < 1
  /// E[U^2 (I_coercive + I{decreasing, U>0} + I{increasing, U<0})]; also the
  /// limit of phi(t)/t^2 as t -> -infinity.
  double growth_neg = 0.0;
  /// E[U^2 (I_coercive + I{decreasing, U<0} + I{increasing, U>0})]; also the
  /// limit of phi(t)/t^2 as t -> +infinity.
  double growth_pos = 0.0;
};

inline AssumptionDiagnostics assumption_diagnostics(const ModelSpec& m, const QuadratureGrid& grid) {
  m.validate();
  AssumptionDiagnostics d;
  d.coercive_prob = expect_u([&](double u) { return class_probs_given_u(m, u).coercive; }, grid);
  d.growth_neg = expect_u(
      [&](double u) {
        const ClassProbs p = class_probs_given_u(m, u);
        return u * u * (p.coercive + (u > 0.0 ? p.decreasing : p.increasing));
      },
      grid);
  d.growth_pos = expect_u(
      [&](double u) {
        const ClassProbs p = class_probs_given_u(m, u);
        return u * u * (p.coercive + (u < 0.0 ? p.decreasing : p.increasing));
      },
      grid);
  return d;
}

/// Throws AssumptionViolated naming the first failed condition.
inline AssumptionDiagnostics validate_assumptions(const ModelSpec& m, const QuadratureGrid& grid) {
  const AssumptionDiagnostics d = assumption_diagnostics(m, grid);
  auto fail = [&](const char* what, double v) {
    std::ostringstream os;
    os << what << " (value " << v << ") for " << describe(m);
    throw AssumptionViolated(os.str());
  };
  if (!(d.coercive_prob < 1.0)) fail("P(coercive) must be < 1", d.coercive_prob);
  if (!(d.growth_neg > 0.0)) fail("growth condition for t -> -inf must be > 0", d.growth_neg);
  if (!(d.growth_pos > 0.0)) fail("growth condition for t -> +inf must be > 0", d.growth_pos);
  return d;
}

}  // namespace mest

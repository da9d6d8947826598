#pragma once

// The critical threshold for existence of the unregularized M-estimator:
//
//   1/delta_inf = inf_t phi(t),
//   phi(t) = E[(G+Ut)^2 I_coer] + E[(G+Ut)_+^2 I_inc] + E[(G+Ut)_-^2 I_dec].
//
// The G-expectation is taken in closed form (Gaussian partial moments), which
// removes the kink along G + Ut = 0; the remaining U-integrand is smooth.

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "mest/assumptions.hpp"
#include "mest/convex1d.hpp"
#include "mest/errors.hpp"
#include "mest/models.hpp"
#include "mest/numeric.hpp"
#include "mest/quadrature.hpp"

namespace mest {

inline double phi(const ModelSpec& m, double t, const QuadratureGrid& grid) {
  using namespace numeric;
  return expect_u_smooth(
      [&](double u) {
        const ClassProbs p = class_probs_given_u(m, u);
        const double c = u * t;
        return p.coercive * (1.0 + c * c) + p.increasing * pos_moment2(c) +
               p.decreasing * neg_moment2(c);
      },
      grid);
}

inline double phi_prime(const ModelSpec& m, double t, const QuadratureGrid& grid) {
  using namespace numeric;
  return expect_u_smooth(
      [&](double u) {
        const ClassProbs p = class_probs_given_u(m, u);
        const double c = u * t;
        return 2.0 * u *
               (p.coercive * c + p.increasing * pos_moment1(c) - p.decreasing * neg_moment1(c));
      },
      grid);
}

/// E[p(t)^2] and E[p(t) G] for the projection residual
///   p(t) = -tU + { 0 (coercive), -(G+Ut)_- (increasing), (G+Ut)_+ (decreasing) },
/// i.e. G - p(t) is exactly the term whose square phi averages.
struct PMoments {
  double norm_sq = 0.0;
  double corr_g = 0.0;
};

inline PMoments p_moments(const ModelSpec& m, double t, const QuadratureGrid& grid) {
  using namespace numeric;
  PMoments out;
  out.norm_sq = expect_u_smooth(
      [&](double u) {
        const ClassProbs p = class_probs_given_u(m, u);
        const double c = u * t;
        const double inc = c * c + 2.0 * c * neg_moment1(c) + neg_moment2(c);
        const double dec = c * c - 2.0 * c * pos_moment1(c) + pos_moment2(c);
        return p.coercive * c * c + p.increasing * inc + p.decreasing * dec;
      },
      grid);
  // Stein: E[G (G+c)_-] = -Phi(-c), E[G (G+c)_+] = Phi(c).
  out.corr_g = expect_u_smooth(
      [&](double u) {
        const ClassProbs p = class_probs_given_u(m, u);
        const double c = u * t;
        return p.increasing * normal_cdf(-c) + p.decreasing * normal_cdf(c);
      },
      grid);
  return out;
}

/// E[(G - p(t))^2] assembled from the moments of p(t); equals phi(t).
inline double phi_from_projection(const ModelSpec& m, double t, const QuadratureGrid& grid) {
  const PMoments pm = p_moments(m, t, grid);
  return 1.0 - 2.0 * pm.corr_g + pm.norm_sq;
}

struct ThresholdResult {
  double t_star = 0.0;
  double phi_star = 0.0;  ///< = 1 / delta_inf
  double delta_inf = 0.0;  ///< +inf when phi_star vanishes
  double pstar_norm_sq = 0.0;
  double pstar_corr_g = 0.0;
  double grad_at_t_star = 0.0;
  AssumptionDiagnostics assumptions;

  double delta_inf_inverse() const { return phi_star; }
  double pstar_gap() const { return pstar_norm_sq - pstar_corr_g; }
};

struct ThresholdOptions {
  double tol_t = 1e-10;
  double tol_grad = 1e-9;
  double max_abs_t = 1e6;
  /// phi_star below this is reported as delta_inf = +inf
  double zero_phi = 1e-14;
};

inline PMoments pstar_diagnostics(const ModelSpec& m, double t_star, const QuadratureGrid& grid) {
  return p_moments(m, t_star, grid);
}

inline ThresholdResult solve_threshold(const ModelSpec& m, const QuadratureGrid& grid,
                                       const ThresholdOptions& opt = {}) {
  ThresholdResult r;
  r.assumptions = validate_assumptions(m, grid);

  ConvexMinOptions mo;
  mo.tol_t = opt.tol_t;
  mo.tol_grad = opt.tol_grad;
  mo.max_abs_t = opt.max_abs_t;
  const ConvexMinResult min = minimize_convex_1d(
      [&](double t) { return phi_prime(m, t, grid); }, mo);

  r.t_star = min.t;
  r.grad_at_t_star = min.grad;
  r.phi_star = phi(m, r.t_star, grid);
  r.delta_inf = r.phi_star < opt.zero_phi ? std::numeric_limits<double>::infinity()
                                          : 1.0 / r.phi_star;
  const PMoments pm = pstar_diagnostics(m, r.t_star, grid);
  r.pstar_norm_sq = pm.norm_sq;
  r.pstar_corr_g = pm.corr_g;
  return r;
}

// Empirical counterpart phi_n built from realized (u_i, y_i, g_i).

struct EmpiricalSample {
  std::span<const double> u;
  std::span<const Response> y;
  std::span<const double> g;
};

namespace detail {

inline std::vector<EventClass> classify_all(const ModelSpec& m, std::span<const Response> y) {
  std::vector<EventClass> out;
  out.reserve(y.size());
  for (Response v : y) out.push_back(classify_loss(m, v));
  return out;
}

inline void check_sample(const EmpiricalSample& s) {
  if (s.u.empty()) throw InvalidShape("empirical phi needs n >= 1");
  if (s.u.size() != s.y.size() || s.u.size() != s.g.size())
    throw InvalidShape("u, y and g must have the same length");
}

}  // namespace detail

inline double empirical_phi(const ModelSpec& m, const EmpiricalSample& s, double t) {
  using numeric::negative_part, numeric::positive_part;
  detail::check_sample(s);
  const auto cls = detail::classify_all(m, s.y);
  double sum = 0.0;
  for (std::size_t i = 0; i < s.u.size(); ++i) {
    const double z = t * s.u[i] + s.g[i];
    switch (cls[i]) {
      case EventClass::Coercive: sum += z * z; break;
      case EventClass::Increasing: sum += positive_part(z) * positive_part(z); break;
      case EventClass::Decreasing: sum += negative_part(z) * negative_part(z); break;
    }
  }
  return sum / static_cast<double>(s.u.size());
}

struct EmpiricalPhiMin {
  double value = 0.0;  ///< inf_t phi_n(t) = dist^2(g, cone) / n
  double t_min = 0.0;  ///< minimizer; +-inf when degenerate
  bool degenerate = false;  ///< phi_n not coercive, infimum approached as |t| -> inf
};

inline EmpiricalPhiMin empirical_phi_min(const ModelSpec& m, const EmpiricalSample& s,
                                         const ConvexMinOptions& opt = {}) {
  using numeric::negative_part, numeric::positive_part;
  detail::check_sample(s);
  const auto cls = detail::classify_all(m, s.y);
  const std::size_t n = s.u.size();
  const double inv_n = 1.0 / static_cast<double>(n);

  // Quadratic growth coefficients in each direction.
  double grow_pos = 0.0, grow_neg = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double u = s.u[i], u2 = u * u;
    switch (cls[i]) {
      case EventClass::Coercive: grow_pos += u2; grow_neg += u2; break;
      case EventClass::Increasing: (u > 0.0 ? grow_pos : grow_neg) += u2; break;
      case EventClass::Decreasing: (u < 0.0 ? grow_pos : grow_neg) += u2; break;
    }
  }

  auto value_at = [&](double t) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double z = t * s.u[i] + s.g[i];
      switch (cls[i]) {
        case EventClass::Coercive: sum += z * z; break;
        case EventClass::Increasing: sum += positive_part(z) * positive_part(z); break;
        case EventClass::Decreasing: sum += negative_part(z) * negative_part(z); break;
      }
    }
    return sum * inv_n;
  };

  EmpiricalPhiMin out;
  if (grow_pos == 0.0 || grow_neg == 0.0) {
    // Every term with u_i != 0 vanishes for t far enough in the flat direction.
    const double dir = grow_pos == 0.0 ? 1.0 : -1.0;
    double limit = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (s.u[i] != 0.0) continue;
      const double z = s.g[i];
      switch (cls[i]) {
        case EventClass::Coercive: limit += z * z; break;
        case EventClass::Increasing: limit += positive_part(z) * positive_part(z); break;
        case EventClass::Decreasing: limit += negative_part(z) * negative_part(z); break;
      }
    }
    out.value = limit * inv_n;
    out.t_min = dir * std::numeric_limits<double>::infinity();
    out.degenerate = true;
    return out;
  }

  auto deriv = [&](double t) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double u = s.u[i];
      const double z = t * u + s.g[i];
      switch (cls[i]) {
        case EventClass::Coercive: sum += u * z; break;
        case EventClass::Increasing: sum += u * positive_part(z); break;
        case EventClass::Decreasing: sum -= u * negative_part(z); break;
      }
    }
    return 2.0 * sum * inv_n;
  };
  const ConvexMinResult min = minimize_convex_1d(deriv, opt);
  out.t_min = min.t;
  out.value = value_at(min.t);
  return out;
}

}  // namespace mest

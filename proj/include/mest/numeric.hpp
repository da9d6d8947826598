#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>

namespace mest::numeric {

inline double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

/// log(1 + e^t) without overflow.
inline double softplus(double t) {
  return std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t)));
}

inline double positive_part(double a) { return a > 0.0 ? a : 0.0; }
inline double negative_part(double a) { return a < 0.0 ? -a : 0.0; }

inline double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

inline double normal_cdf(double x) {
  return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

// Partial moments of G + c for G ~ N(0,1).

/// E[(G + c)_+]
inline double pos_moment1(double c) { return c * normal_cdf(c) + normal_pdf(c); }
/// E[(G + c)_-]
inline double neg_moment1(double c) { return -c * normal_cdf(-c) + normal_pdf(c); }
/// E[(G + c)_+^2]
inline double pos_moment2(double c) {
  return (1.0 + c * c) * normal_cdf(c) + c * normal_pdf(c);
}
/// E[(G + c)_-^2]
inline double neg_moment2(double c) {
  return (1.0 + c * c) * normal_cdf(-c) - c * normal_pdf(c);
}

}  // namespace mest::numeric

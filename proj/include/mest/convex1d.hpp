#pragma once

// Minimization of a C^1 convex function of one variable through its
// derivative: expanding bracket from [-1, 1], then Illinois regula falsi on
// the derivative with a bisection safeguard. Only f' is used; f'' may have
// kinks.

#include <cmath>
#include <limits>
#include <string>

#include "mest/errors.hpp"

namespace mest {

struct ConvexMinOptions {
  double tol_t = 1e-10;     ///< final bracket width
  double tol_grad = 1e-9;   ///< |f'(t*)|
  double max_abs_t = 1e6;   ///< bracket search limit
  int max_iter = 400;
};

struct ConvexMinResult {
  double t = 0.0;
  double grad = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  int evaluations = 0;
};

/// Finds a stationary point of a convex function given its derivative.
/// Throws BracketFailure when f' keeps one sign on [-max_abs_t, max_abs_t].
template <class Deriv>
ConvexMinResult minimize_convex_1d(Deriv&& deriv, const ConvexMinOptions& opt = {}) {
  ConvexMinResult r;
  auto eval = [&](double t) {
    ++r.evaluations;
    const double d = deriv(t);
    if (!std::isfinite(d)) throw NoConvergence("derivative is not finite at t=" + std::to_string(t));
    return d;
  };
  auto done_at = [&](double t, double d) {
    r.t = r.lo = r.hi = t;
    r.grad = d;
    return r;
  };

  double lo = -1.0, hi = 1.0;
  double d_lo = eval(lo), d_hi = eval(hi);
  if (d_lo == 0.0) return done_at(lo, d_lo);
  if (d_hi == 0.0) return done_at(hi, d_hi);
  while (d_hi < 0.0) {
    lo = hi;
    d_lo = d_hi;
    hi *= 2.0;
    if (hi > opt.max_abs_t)
      throw BracketFailure("derivative stays negative up to t=" + std::to_string(opt.max_abs_t));
    d_hi = eval(hi);
    if (d_hi == 0.0) return done_at(hi, d_hi);
  }
  while (d_lo > 0.0) {
    hi = lo;
    d_hi = d_lo;
    lo *= 2.0;
    if (lo < -opt.max_abs_t)
      throw BracketFailure("derivative stays positive down to t=" + std::to_string(-opt.max_abs_t));
    d_lo = eval(lo);
    if (d_lo == 0.0) return done_at(lo, d_lo);
  }

  // d_lo < 0 < d_hi from here on.
  int retained_side = 0;  // -1: lo kept twice in a row, +1: hi kept twice
  double f_lo = d_lo, f_hi = d_hi;  // Illinois-scaled copies
  for (int it = 0; it < opt.max_iter; ++it) {
    const double width = hi - lo;
    const double best_t = std::abs(d_lo) < std::abs(d_hi) ? lo : hi;
    const double best_d = std::abs(d_lo) < std::abs(d_hi) ? d_lo : d_hi;
    if (width <= opt.tol_t && std::abs(best_d) < opt.tol_grad) {
      r.t = best_t;
      r.grad = best_d;
      r.lo = lo;
      r.hi = hi;
      return r;
    }
    if (width <= 4.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(lo) + std::abs(hi))) {
      // Bracket collapsed to adjacent floats; the gradient is as small as it gets.
      r.t = best_t;
      r.grad = best_d;
      r.lo = lo;
      r.hi = hi;
      return r;
    }
    double t = lo - f_lo * (hi - lo) / (f_hi - f_lo);
    const double margin = 0.01 * width;
    if (!(t > lo + margin && t < hi - margin)) t = 0.5 * (lo + hi);
    if (it % 4 == 3) t = 0.5 * (lo + hi);  // guarantees geometric shrinkage
    const double d = eval(t);
    if (d == 0.0) return done_at(t, d);
    if (d < 0.0) {
      lo = t;
      d_lo = f_lo = d;
      if (retained_side == 1) f_hi *= 0.5;
      retained_side = 1;
    } else {
      hi = t;
      d_hi = f_hi = d;
      if (retained_side == -1) f_lo *= 0.5;
      retained_side = -1;
    }
  }
  throw NoConvergence("convex 1-d minimization exceeded " + std::to_string(opt.max_iter) +
                      " iterations");
}

}  // namespace mest

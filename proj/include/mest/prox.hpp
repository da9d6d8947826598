#pragma once

// Scalar proximal operator prox[gamma l_y](x) = argmin_u (x-u)^2/(2 gamma) + l_y(u),
// the root of psi(u) = u + gamma l_y'(u) - x (psi is strictly increasing).

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "mest/errors.hpp"
#include "mest/models.hpp"

namespace mest {

struct ProxQuery {
  ModelSpec model;
  Response y = 0;
  double gamma = 1.0;
  double x = 0.0;
};

struct ProxOptions {
  double tol = 1e-13;  ///< |psi(u)| <= tol * (1 + |x|)
  int max_iter = 200;
};

namespace detail {

/// Solution w > 0 of w + log w = log_z, i.e. the Lambert W function at e^log_z.
inline double lambert_w_of_exp(double log_z) {
  if (log_z < -36.0) {
    const double z = std::exp(log_z);
    return z * (1.0 - z);
  }
  double w = log_z > 1.0 ? log_z - std::log(log_z) : std::exp(log_z) / (1.0 + std::exp(log_z));
  for (int it = 0; it < 50; ++it) {
    const double f = w + std::log(w) - log_z;
    const double next = w - f * w / (w + 1.0);
    const double safe = next > 0.0 ? next : 0.5 * w;
    if (std::abs(safe - w) <= 1e-15 * w) return safe;
    w = safe;
  }
  return w;
}

/// Safeguarded Newton on psi with a guaranteed bracket. `guess` is only a
/// starting point (warm start), it need not be inside the bracket; pass NaN
/// for a default start.
inline double prox_solve(const ModelSpec& m, double y, double gamma, double x, double guess,
                         const ProxOptions& opt) {
  auto psi = [&](double u) { return u + gamma * loss_deriv(m, y, u) - x; };

  double lo, hi;
  switch (m.family) {
    case Family::Logistic:
    case Family::Binomial: {
      // l' ranges over (inf_d, sup_d), so u = x - gamma l'(u) is confined.
      const double sup_d = m.family == Family::Logistic ? (y < 0 ? 1.0 : 0.0) : m.q - y;
      const double inf_d = m.family == Family::Logistic ? (y < 0 ? 0.0 : -1.0) : -y;
      lo = x - gamma * sup_d;
      hi = x - gamma * inf_d;
      break;
    }
    case Family::Poisson: {
      // u + gamma e^u = x + gamma y =: s. Either gamma e^u >= 1 (u >= -log gamma)
      // or u = s - gamma e^u > s - 1, hence the lower bound.
      const double s = x + gamma * y;
      const double ex = std::exp(x);
      lo = std::min(-std::log(gamma), s - 1.0);
      if (std::isfinite(ex)) lo = std::max(lo, std::min(x, x - gamma * (ex - y)));
      hi = std::max(x, s);
      if (ex >= y) hi = std::min(hi, x);
      break;
    }
    default:
      lo = hi = x;
  }

  if (m.family == Family::Poisson && !std::isfinite(guess)) {
    // u + gamma e^u = s has the closed form u = s - W(gamma e^s).
    const double s = x + gamma * y;
    const double w = lambert_w_of_exp(std::log(gamma) + s);
    guess = w > 1.0 ? std::log(w) - std::log(gamma) : s - w;
  }

  // When the tolerance is below what psi can resolve, settle on the
  // neighbouring double with the smallest |psi|.
  auto settle = [&](double u) {
    double best = u, best_f = std::abs(psi(u));
    for (double dir : {-1.0, 1.0}) {
      double v = u;
      for (int k = 0; k < 4; ++k) {
        v = std::nextafter(v, dir * std::numeric_limits<double>::infinity());
        const double f = std::abs(psi(v));
        if (f < best_f) {
          best = v;
          best_f = f;
        }
      }
    }
    return best;
  };

  const double scale = opt.tol * (1.0 + std::abs(x));
  double u = std::isfinite(guess) ? std::clamp(guess, lo, hi) : 0.5 * (lo + hi);
  double step_before_last = hi - lo;
  double last_step = step_before_last;
  for (int it = 0; it < opt.max_iter; ++it) {
    const double f = psi(u);
    if (std::abs(f) <= scale) return u;
    if (f > 0.0) hi = u; else lo = u;
    if (hi - lo <= 2.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(lo), std::abs(hi)))
      return settle(u);  // adjacent floats: psi cannot be resolved further
    const double d = 1.0 + gamma * loss_second_deriv(m, y, u);
    double next = u - f / d;
    // Bisect when Newton leaves the bracket or is not at least halving the step.
    if (!(next > lo && next < hi) || std::abs(2.0 * (next - u)) > std::abs(step_before_last))
      next = 0.5 * (lo + hi);
    if (next == u) return settle(u);
    step_before_last = last_step;
    last_step = next - u;
    u = next;
  }
  std::ostringstream os;
  os << "prox for " << describe(m) << " y=" << y << " gamma=" << gamma << " x=" << x
     << " did not converge in " << opt.max_iter << " iterations";
  throw NoConvergence(os.str());
}

}  // namespace detail

inline void validate(const ProxQuery& q) {
  require_support(q.model, q.y);
  if (!(q.gamma > 0.0) || !std::isfinite(q.gamma)) throw InvalidArgument("prox needs gamma > 0");
  if (!std::isfinite(q.x)) throw InvalidArgument("prox needs a finite argument");
}

inline double prox(const ProxQuery& q, const ProxOptions& opt = {}) {
  validate(q);
  return detail::prox_solve(q.model, static_cast<double>(q.y), q.gamma, q.x,
                            std::numeric_limits<double>::quiet_NaN(), opt);
}

/// l_y'(prox(q)), computed as (x - prox(q)) / gamma (equal by stationarity).
inline double loss_deriv_at_prox(const ProxQuery& q, const ProxOptions& opt = {}) {
  return (q.x - prox(q, opt)) / q.gamma;
}

}  // namespace mest

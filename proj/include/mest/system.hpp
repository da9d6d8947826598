#pragma once

// Asymptotic system for the unregularized M-estimator, unknowns (a, sigma, gamma):
//
//   r1 = sigma^2 / (gamma^2 delta) - E[l_Y'(prox)^2]
//   r2 = E[U l_Y'(prox)]
//   r3 = sigma (1 - 1/delta) - E[G prox]
//
// with prox = prox[gamma l_Y](a U + sigma G). Solved by damped Broyden in
// (a, log sigma, log gamma) along a homotopy ladder in delta.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "mest/assumptions.hpp"
#include "mest/convex1d.hpp"
#include "mest/errors.hpp"
#include "mest/models.hpp"
#include "mest/prox.hpp"
#include "mest/quadrature.hpp"

namespace mest {

struct SystemPoint {
  double a = 0.0;
  double sigma = 1.0;
  double gamma = 1.0;
};

using Residual3 = std::array<double, 3>;

inline double max_abs(const Residual3& r) {
  return std::max({std::abs(r[0]), std::abs(r[1]), std::abs(r[2])});
}

/// Expectations entering the residuals and the optimality diagnostics.
struct SystemMoments {
  double deriv_sq = 0.0;  ///< E[l'(prox)^2]
  double u_deriv = 0.0;   ///< E[U l'(prox)]
  double g_prox = 0.0;    ///< E[G prox]
  double v_sq = 0.0;      ///< E[v^2], v = prox - aU
  double v_g = 0.0;       ///< E[v G]
};

namespace detail {

inline void check_point(const SystemPoint& p, double delta) {
  if (!(delta > 1.0)) throw InvalidDelta("delta must exceed 1, got " + std::to_string(delta));
  if (!(p.sigma > 0.0) || !(p.gamma > 0.0) || !std::isfinite(p.a) || !std::isfinite(p.sigma) ||
      !std::isfinite(p.gamma))
    throw InvalidArgument("system needs finite a and sigma, gamma > 0");
}

}  // namespace detail

/// Gauss-Hermite over G as well as U, solving the prox at every node. Kept
/// as an independent cross-check of system_moments.
inline SystemMoments system_moments_tensor(const ModelSpec& m, const SystemPoint& p,
                                    const QuadratureGrid& grid, const ProxOptions& popt = {}) {
  const auto& rg = grid.g();
  const double floor = grid.weight_floor();
  const double a = p.a, sigma = p.sigma, gamma = p.gamma;
  SystemMoments out;
  for_each_uy(m, grid, [&](double u, Response y, double w_uy) {
    const double yd = static_cast<double>(y);
    double s_d2 = 0.0, s_d = 0.0, s_gp = 0.0, s_v2 = 0.0, s_vg = 0.0;
    double prev_x = 0.0, prev_u = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t i = 0; i < rg.size(); ++i) {
      const double wg = rg.weights[i];
      if (wg * w_uy < floor) continue;
      const double g = rg.nodes[i];
      const double x = a * u + sigma * g;
      // warm start along g: first-order prediction from the previous node
      double guess = x;
      if (std::isfinite(prev_u))
        guess = prev_u + (x - prev_x) / (1.0 + gamma * detail::loss_second_deriv(m, yd, prev_u));
      const double pr = detail::prox_solve(m, yd, gamma, x, guess, popt);
      const double d = (x - pr) / gamma;
      const double v = pr - a * u;
      detail::check_finite(d, g, u, y);
      s_d2 += wg * d * d;
      s_d += wg * d;
      s_gp += wg * g * pr;
      s_v2 += wg * v * v;
      s_vg += wg * v * g;
      prev_x = x;
      prev_u = pr;
    }
    out.deriv_sq += w_uy * s_d2;
    out.u_deriv += w_uy * u * s_d;
    out.g_prox += w_uy * s_gp;
    out.v_sq += w_uy * s_v2;
    out.v_g += w_uy * s_vg;
  });
  return out;
}

/// Truncation of the G range and accuracy of the inner integrals.
struct MomentOptions {
  double g_range = 10.0;
  double tol = 1e-11;
  ProxOptions prox;
};

/// The G-expectation is computed in the variable z = prox(aU + sigma G),
/// where G = (z + gamma l'(z) - aU) / sigma is explicit, by adaptive
/// Gauss-Kronrod. Only the two range ends need a prox solve.
inline SystemMoments system_moments(const ModelSpec& m, const SystemPoint& p,
                                    const QuadratureGrid& grid, const MomentOptions& mopt = {}) {
  using numeric::normal_pdf;
  const double a = p.a, sigma = p.sigma, gamma = p.gamma;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  SystemMoments out;
  for_each_uy(m, grid, [&](double u, Response y, double w_uy) {
    const double yd = static_cast<double>(y);
    const double x0 = a * u;
    const double z_lo = detail::prox_solve(m, yd, gamma, x0 - mopt.g_range * sigma, nan, mopt.prox);
    const double z_hi = detail::prox_solve(m, yd, gamma, x0 + mopt.g_range * sigma, nan, mopt.prox);
    AdaptiveOptions ao;
    ao.abs_tol = mopt.tol;
    ao.rel_tol = mopt.tol;
    const auto r = integrate_adaptive<5>(
        [&](double z, std::array<double, 5>& f) {
          const auto [d, d2] = detail::loss_derivs(m, yd, z);
          const double g = (z + gamma * d - x0) / sigma;
          const double w = normal_pdf(g) * (1.0 + gamma * d2) / sigma;
          const double v = z - x0;
          f = {w * d * d, w * d, w * g * z, w * v * v, w * v * g};
          for (double c : f) detail::check_finite(c, g, u, y);
        },
        z_lo, z_hi, ao);
    out.deriv_sq += w_uy * r[0];
    out.u_deriv += w_uy * u * r[1];
    out.g_prox += w_uy * r[2];
    out.v_sq += w_uy * r[3];
    out.v_g += w_uy * r[4];
  });
  return out;
}

inline Residual3 residual_from_moments(const SystemMoments& mo, const SystemPoint& p,
                                       double delta) {
  return {p.sigma * p.sigma / (p.gamma * p.gamma * delta) - mo.deriv_sq, mo.u_deriv,
          p.sigma * (1.0 - 1.0 / delta) - mo.g_prox};
}

inline Residual3 system_residual(const ModelSpec& m, const SystemPoint& p, double delta,
                                 const QuadratureGrid& grid, const MomentOptions& mopt = {}) {
  detail::check_point(p, delta);
  return residual_from_moments(system_moments(m, p, grid, mopt), p, delta);
}

/// Optimality record of v* = prox[gamma l_Y](aU + sigma G) - aU.
struct KKTRecord {
  double v_norm_sq = 0.0;
  double corr_vg = 0.0;
  double mu_star = 0.0;     ///< sigma sqrt(1 - 1/delta) / gamma
  double constraint = 0.0;  ///< ||v|| - E[vG] / sqrt(1 - 1/delta), zero when binding
};

struct KKTTolerances {
  double constraint = 1e-6;
  double relative = 1e-6;
};

inline KKTRecord kkt_record(const SystemMoments& mo, const SystemPoint& p, double delta) {
  KKTRecord k;
  const double root = std::sqrt(1.0 - 1.0 / delta);
  k.v_norm_sq = mo.v_sq;
  k.corr_vg = mo.v_g;
  k.mu_star = p.sigma * root / p.gamma;
  k.constraint = std::sqrt(mo.v_sq) - mo.v_g / root;
  return k;
}

/// Throws KKTViolation naming the failed identity.
inline void verify_kkt(const KKTRecord& k, const SystemPoint& p, double delta,
                       const KKTTolerances& tol = {}) {
  const double shrink = 1.0 - 1.0 / delta;
  auto rel = [](double got, double want) { return std::abs(got - want) / std::abs(want); };
  std::ostringstream os;
  if (!(std::abs(k.constraint) < tol.constraint))
    os << "constraint not binding: G(v*) = " << k.constraint;
  else if (!(rel(k.v_norm_sq, p.sigma * p.sigma * shrink) < tol.relative))
    os << "||v*||^2 = " << k.v_norm_sq << " but sigma^2 (1 - 1/delta) = " << p.sigma * p.sigma * shrink;
  else if (!(rel(k.corr_vg, p.sigma * shrink) < tol.relative))
    os << "E[v* G] = " << k.corr_vg << " but sigma (1 - 1/delta) = " << p.sigma * shrink;
  else if (!(k.mu_star > 0.0))
    os << "multiplier mu* = " << k.mu_star << " is not positive";
  else
    return;
  throw KKTViolation(os.str());
}

struct SystemSolution {
  double a = 0.0;
  double sigma = 0.0;
  double gamma = 0.0;
  Residual3 residuals{};
  double delta = 0.0;
  KKTRecord kkt;
  int iterations = 0;

  SystemPoint point() const { return {a, sigma, gamma}; }
  double max_residual() const { return max_abs(residuals); }
};

inline KKTRecord kkt_check(const ModelSpec& m, const SystemSolution& s, const QuadratureGrid& grid,
                           const KKTTolerances& tol = {}, const MomentOptions& mopt = {}) {
  const SystemPoint p = s.point();
  detail::check_point(p, s.delta);
  const KKTRecord k = kkt_record(system_moments(m, p, grid, mopt), p, s.delta);
  verify_kkt(k, p, s.delta, tol);
  return k;
}

enum class NoSolutionReason { IterateDiverged, ResidualPlateau };

inline const char* to_string(NoSolutionReason r) {
  return r == NoSolutionReason::IterateDiverged ? "iterate_diverged" : "residual_plateau";
}

/// One homotopy rung as seen by the solver.
struct RungRecord {
  double delta = 0.0;
  SystemPoint point;
  double max_residual = 0.0;
  int iterations = 0;
  int evaluations = 0;  ///< residual evaluations, finite-difference probes included
  bool converged = false;
};

struct NoSolutionDetected {
  NoSolutionReason reason = NoSolutionReason::ResidualPlateau;
  SystemPoint last_iterate;
  double last_residual = 0.0;
  double delta = 0.0;
  std::vector<RungRecord> trajectory;
};

struct SolveVerdict {
  std::variant<SystemSolution, NoSolutionDetected> outcome;

  bool solved() const { return std::holds_alternative<SystemSolution>(outcome); }
  const SystemSolution& solution() const { return std::get<SystemSolution>(outcome); }
  const NoSolutionDetected& failure() const { return std::get<NoSolutionDetected>(outcome); }
};

struct SystemOptions {
  double tol = 1e-11;          ///< max |r_i| at the requested delta
  double rung_tol = 1e-8;      ///< max |r_i| on intermediate rungs
  double ladder_start = 10.0;  ///< largest delta of the homotopy ladder
  double ladder_ratio = 0.7;   ///< shrink factor of (delta - 1) between rungs
  int max_rung_splits = 1;     ///< halvings of a failed rung step before giving up
  int max_iter = 60;           ///< Broyden iterations per rung
  int plateau_window = 50;     ///< consecutive damped steps without progress
  double divergence_bound = 1e6;
  double lower_bound = 1e-8;
  double fd_step = 1e-6;
  std::optional<SystemPoint> initial;  ///< default: classical large-delta fit at the first rung
  bool use_ladder = true;
  MomentOptions moments;
};

namespace detail {

struct RungOutcome {
  bool converged = false;
  NoSolutionReason reason = NoSolutionReason::ResidualPlateau;
  SystemPoint point;
  Residual3 residual{};
  int iterations = 0;
  int evaluations = 0;
};

class BroydenRung {
 public:
  BroydenRung(const ModelSpec& m, double delta, const QuadratureGrid& grid,
              const SystemOptions& opt)
      : m_(m), delta_(delta), grid_(grid), opt_(opt) {}

  RungOutcome solve(const SystemPoint& start, double tol) {
    RungOutcome out;
    Eigen::Vector3d z = to_z(start);
    Eigen::Vector3d f;
    if (!eval(z, f)) return diverged(out, z, f);
    Eigen::Matrix3d J;
    if (!jacobian(z, f, J)) return diverged(out, z, f);
    bool fresh = true;
    double best = f.cwiseAbs().maxCoeff();
    int stalled = 0;

    for (int it = 0; it < opt_.max_iter; ++it) {
      out.iterations = it;
      if (f.cwiseAbs().maxCoeff() < tol) {
        out.converged = true;
        out.point = to_point(z);
        out.residual = {f[0], f[1], f[2]};
        return out;
      }
      Eigen::Vector3d step;
      bool ok = newton_step(J, f, step);
      if (!ok && !fresh) {
        if (!jacobian(z, f, J)) return diverged(out, z, f);
        fresh = true;
        ok = newton_step(J, f, step);
      }
      if (!ok) break;

      // Line search on ||f||_2; retry once with a fresh Jacobian.
      Eigen::Vector3d z_new, f_new;
      double lambda = 0.0;
      int status = line_search(z, f, step, z_new, f_new, lambda);
      if (status < 0) return diverged(out, z_new, f_new);
      if (status == 0 && !fresh) {
        if (!jacobian(z, f, J)) return diverged(out, z, f);
        fresh = true;
        if (!newton_step(J, f, step)) break;
        status = line_search(z, f, step, z_new, f_new, lambda);
        if (status < 0) return diverged(out, z_new, f_new);
      }
      if (status == 0) {
        // No sufficient decrease even with an exact Jacobian: take the
        // shortest trial step and let the plateau counter decide.
        if (!eval(z_new, f_new)) return diverged(out, z_new, f_new);
      }
      const Eigen::Vector3d dz = z_new - z;
      const Eigen::Vector3d df = f_new - f;
      z = z_new;
      f = f_new;
      if (out_of_domain(z)) return diverged(out, z, f);
      const double dz2 = dz.squaredNorm();
      if (dz2 > 0.0) {
        J += ((df - J * dz) * dz.transpose()) / dz2;
        fresh = false;
      }

      const double now = f.cwiseAbs().maxCoeff();
      const bool damped = status == 0 || lambda < 1.0;
      if (now < 0.5 * best) {
        best = now;
        stalled = 0;
      } else if (damped) {
        ++stalled;
      }
      if (stalled >= opt_.plateau_window) break;
    }
    out.converged = f.cwiseAbs().maxCoeff() < tol;
    out.point = to_point(z);
    out.residual = {f[0], f[1], f[2]};
    out.reason = NoSolutionReason::ResidualPlateau;
    return out;
  }

 private:
  Eigen::Vector3d to_z(const SystemPoint& p) const {
    return {p.a, std::log(p.sigma), std::log(p.gamma)};
  }
  SystemPoint to_point(const Eigen::Vector3d& z) const {
    return {z[0], std::exp(z[1]), std::exp(z[2])};
  }

  bool out_of_domain(const Eigen::Vector3d& z) const {
    const double hi = std::log(opt_.divergence_bound), lo = std::log(opt_.lower_bound);
    return !(z[1] < hi && z[2] < hi && z[1] > lo && z[2] > lo) ||
           !(std::abs(z[0]) < opt_.divergence_bound);
  }

  bool eval(const Eigen::Vector3d& z, Eigen::Vector3d& f) {
    if (out_of_domain(z)) return false;
    ++evaluations_;
    const SystemPoint p = to_point(z);
    const Residual3 r = residual_from_moments(system_moments(m_, p, grid_, opt_.moments), p, delta_);
    f = {r[0], r[1], r[2]};
    return f.allFinite();
  }

  bool jacobian(const Eigen::Vector3d& z, const Eigen::Vector3d& f, Eigen::Matrix3d& J) {
    for (int j = 0; j < 3; ++j) {
      Eigen::Vector3d zp = z;
      const double h = opt_.fd_step * std::max(1.0, std::abs(z[j]));
      zp[j] += h;
      Eigen::Vector3d fp;
      if (!eval(zp, fp)) return false;
      J.col(j) = (fp - f) / h;
    }
    return J.allFinite();
  }

  static bool newton_step(const Eigen::Matrix3d& J, const Eigen::Vector3d& f,
                          Eigen::Vector3d& step) {
    Eigen::FullPivLU<Eigen::Matrix3d> lu(J);
    if (!lu.isInvertible()) return false;
    step = lu.solve(-f);
    if (!step.allFinite()) return false;
    // Cap moves of log sigma / log gamma at a factor e^2 and of a at 2 + |a|.
    double scale = 1.0;
    scale = std::min(scale, 2.0 / std::max(2.0, std::abs(step[1])));
    scale = std::min(scale, 2.0 / std::max(2.0, std::abs(step[2])));
    step *= scale;
    return true;
  }

  static constexpr int kHalvings = 10;

  // 1: sufficient decrease, 0: none found (z_new holds the shortest trial),
  // -1: a trial left the domain.
  int line_search(const Eigen::Vector3d& z, const Eigen::Vector3d& f, const Eigen::Vector3d& step,
                  Eigen::Vector3d& z_new, Eigen::Vector3d& f_new, double& lambda) {
    const double norm0 = f.norm();
    lambda = 1.0;
    for (int k = 0; k < kHalvings; ++k, lambda *= 0.5) {
      z_new = z + lambda * step;
      if (out_of_domain(z_new)) {
        if (k == kHalvings - 1) return -1;
        continue;
      }
      if (!eval(z_new, f_new)) continue;
      if (f_new.norm() <= (1.0 - 1e-4 * lambda) * norm0) return 1;
    }
    lambda *= 2.0;
    z_new = z + lambda * step;
    return out_of_domain(z_new) ? -1 : 0;
  }

  RungOutcome& diverged(RungOutcome& out, const Eigen::Vector3d& z, const Eigen::Vector3d& f) {
    out.converged = false;
    out.reason = NoSolutionReason::IterateDiverged;
    out.point = to_point(z);
    out.residual = {f[0], f[1], f[2]};
    return out;
  }

  const ModelSpec& m_;
  double delta_;
  const QuadratureGrid& grid_;
  const SystemOptions& opt_;

 public:
  int evaluations_ = 0;
};

/// Large-delta starting point: a from the population fit argmin_a E[l_Y(aU)],
/// then the classical sandwich variance sigma^2 = E[l'^2] / (delta E[l'']^2)
/// and gamma = 1 / (delta E[l'']).
inline SystemPoint classical_start(const ModelSpec& m, double delta, const QuadratureGrid& grid) {
  auto moment = [&](double a, auto&& f) {
    double total = 0.0;
    for_each_uy(m, grid, [&](double u, Response y, double w) { total += w * f(u, static_cast<double>(y), a * u); });
    return total;
  };
  ConvexMinOptions mo;
  mo.tol_t = 1e-8;
  mo.tol_grad = 1e-8;
  mo.max_abs_t = 1e3;
  double a = m.kappa;
  try {
    a = minimize_convex_1d(
            [&](double t) {
              return moment(t, [&](double u, double y, double x) { return u * loss_deriv(m, y, x); });
            },
            mo)
            .t;
  } catch (const Error&) {
    // keep the signal strength as a rough guess
  }
  const double d2 = moment(a, [&](double, double y, double x) {
    const double d = loss_deriv(m, y, x);
    return d * d;
  });
  const double h = moment(a, [&](double, double y, double x) { return loss_second_deriv(m, y, x); });
  if (!(h > 0.0) || !(d2 > 0.0)) return {a, 1.0, 1.0};
  return {a, std::sqrt(d2 / delta) / h, 1.0 / (delta * h)};
}

inline std::vector<double> homotopy_ladder(double target, const SystemOptions& opt) {
  if (!opt.use_ladder || target >= opt.ladder_start) return {target};
  const double top = opt.ladder_start - 1.0, bottom = target - 1.0;
  const int n = std::max(
      1, static_cast<int>(std::ceil(std::log(top / bottom) / std::log(1.0 / opt.ladder_ratio))));
  std::vector<double> rungs;
  for (int k = 0; k <= n; ++k) rungs.push_back(1.0 + top * std::pow(bottom / top, double(k) / n));
  rungs.back() = target;
  return rungs;
}

}  // namespace detail

/// Solves the system at `delta`. Failure to find a solution is a verdict
/// (NoSolutionDetected), not an exception; InvalidDelta is thrown for delta <= 1.
inline SolveVerdict solve_system(const ModelSpec& m, double delta, const QuadratureGrid& grid,
                                 const SystemOptions& opt = {}) {
  if (!(delta > 1.0)) throw InvalidDelta("delta must exceed 1, got " + std::to_string(delta));
  validate_assumptions(m, grid);

  std::vector<RungRecord> trajectory;
  const std::vector<double> ladder = detail::homotopy_ladder(delta, opt);
  SystemPoint current = opt.initial ? *opt.initial : detail::classical_start(m, ladder.front(), grid);

  auto fail = [&](NoSolutionReason reason, const detail::RungOutcome& o, double at) {
    NoSolutionDetected nd;
    nd.reason = reason;
    nd.last_iterate = o.point;
    nd.last_residual = max_abs(o.residual);
    nd.delta = at;
    nd.trajectory = trajectory;
    return SolveVerdict{nd};
  };

  double prev_delta = ladder.front();
  int total_iterations = 0;
  detail::RungOutcome last;
  for (std::size_t k = 0; k < ladder.size(); ++k) {
    const double target = ladder[k];
    const bool final_rung = k + 1 == ladder.size();
    // Split the step from prev_delta to target when a rung fails.
    std::vector<double> pending{target};
    int splits = 0;
    while (!pending.empty()) {
      const double d = pending.back();
      const double tol = (final_rung && d == target) ? opt.tol : opt.rung_tol;
      detail::BroydenRung rung(m, d, grid, opt);
      detail::RungOutcome o = rung.solve(current, tol);
      o.evaluations = rung.evaluations_;
      total_iterations += o.iterations;
      trajectory.push_back(
          {d, o.point, max_abs(o.residual), o.iterations, o.evaluations, o.converged});
      last = o;
      if (o.converged) {
        current = o.point;
        prev_delta = d;
        pending.pop_back();
        continue;
      }
      if (k == 0 || splits >= opt.max_rung_splits) return fail(o.reason, o, d);
      ++splits;
      pending.push_back(0.5 * (prev_delta + d));
    }
  }

  SystemSolution s;
  s.a = current.a;
  s.sigma = current.sigma;
  s.gamma = current.gamma;
  s.delta = delta;
  s.iterations = total_iterations;
  const SystemMoments mo = system_moments(m, current, grid, opt.moments);
  s.residuals = residual_from_moments(mo, current, delta);
  s.kkt = kkt_record(mo, current, delta);
  return SolveVerdict{s};
}

}  // namespace mest

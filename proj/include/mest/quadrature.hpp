#pragma once

// Deterministic expectations over (G, U, Y) with G, U i.i.d. N(0,1) and
// Y | U drawn from a model: tensor Gauss-Hermite in (G, U) and an inner sum
// over the (truncated) conditional support of Y.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <sstream>
#include <tuple>
#include <vector>

#include <Eigen/Eigenvalues>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "mest/errors.hpp"
#include "mest/models.hpp"

namespace mest {

/// Gauss-Hermite rule for the standard normal law (probabilists' weight
/// exp(-x^2/2)/sqrt(2 pi)), weights normalized to sum to one.
struct GaussHermiteRule {
  std::vector<double> nodes;
  std::vector<double> weights;

  std::size_t size() const { return nodes.size(); }

  /// Golub-Welsch on the Jacobi matrix, then one Newton polish of each node
  /// on the orthonormal recurrence. Weights come from the Christoffel
  /// function, which keeps the tiny tail weights relatively accurate.
  static GaussHermiteRule make(int n) {
    if (n < 1) throw InvalidArgument("Gauss-Hermite rule needs n >= 1");
    GaussHermiteRule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    if (n == 1) {
      rule.nodes[0] = 0.0;
      rule.weights[0] = 1.0;
      return rule;
    }
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd sub(n - 1);
    for (int k = 1; k < n; ++k) sub[k - 1] = std::sqrt(static_cast<double>(k));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig;
    eig.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
    if (eig.info() != Eigen::Success) throw NoConvergence("Golub-Welsch eigensolver failed");

    for (int i = 0; i < n; ++i) {
      double x = eig.eigenvalues()[i];
      for (int it = 0; it < 3; ++it) {
        const auto [pn, dpn, sum_sq] = orthonormal(n, x);
        (void)sum_sq;
        if (dpn == 0.0) break;
        const double step = pn / dpn;
        x -= step;
        if (std::abs(step) < 1e-15 * (1.0 + std::abs(x))) break;
      }
      rule.nodes[i] = x;
      rule.weights[i] = std::exp(-0.5 * x * x) / std::get<2>(orthonormal(n, x));
    }
    // Exact symmetry of the rule.
    for (int i = 0; i < n / 2; ++i) {
      const double x = 0.5 * (rule.nodes[n - 1 - i] - rule.nodes[i]);
      const double w = 0.5 * (rule.weights[n - 1 - i] + rule.weights[i]);
      rule.nodes[i] = -x;
      rule.nodes[n - 1 - i] = x;
      rule.weights[i] = rule.weights[n - 1 - i] = w;
    }
    if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
    double total = 0.0;
    for (double w : rule.weights) total += w;
    for (double& w : rule.weights) w /= total;
    return rule;
  }

 private:
  // Orthonormal Hermite recurrence scaled by exp(-x^2/4) against overflow:
  // returns c p_n(x), c p_n'(x) and c^2 sum_{k<n} p_k(x)^2 with c = exp(-x^2/4).
  static std::tuple<double, double, double> orthonormal(int n, double x) {
    double p_prev = 0.0, p = std::exp(-0.25 * x * x);
    double d_prev = 0.0, d = 0.0;
    double sum_sq = 0.0;
    for (int k = 0; k < n; ++k) {
      sum_sq += p * p;
      const double a = std::sqrt(k + 1.0);
      const double b = std::sqrt(static_cast<double>(k));
      const double p_next = (x * p - b * p_prev) / a;
      const double d_next = (p + x * d - b * d_prev) / a;
      p_prev = p;
      p = p_next;
      d_prev = d;
      d = d_next;
    }
    return {p, d, sum_sq};
  }
};

struct QuadratureSettings {
  int nodes_g = 101;
  int nodes_u = 101;
  double poisson_tail_tol = 1e-12;
  /// (u, y) cells whose joint weight w_u * P(y|u) falls below this are skipped
  /// by for_each_uy / expect_guy.
  double weight_floor = 1e-20;
  /// U-integrals of smooth integrands (threshold functionals) by adaptive
  /// Gauss-Kronrod instead of the U rule.
  bool adaptive_u = true;
};

/// Immutable node/weight sets for G and U plus the Poisson truncation tolerance.
class QuadratureGrid {
 public:
  static constexpr int kMinNodes = 21;

  explicit QuadratureGrid(const QuadratureSettings& s = {})
      : settings_(s), g_(make_rule(s.nodes_g)), u_(make_rule(s.nodes_u)) {
    if (!(s.poisson_tail_tol > 0.0 && s.poisson_tail_tol < 1e-3))
      throw InvalidArgument("poisson_tail_tol must lie in (0, 1e-3)");
    if (!(s.weight_floor >= 0.0 && s.weight_floor < 1e-12))
      throw InvalidArgument("weight_floor must lie in [0, 1e-12)");
  }

  QuadratureGrid(int nodes, double poisson_tail_tol = 1e-12)
      : QuadratureGrid(QuadratureSettings{nodes, nodes, poisson_tail_tol}) {}

  const GaussHermiteRule& g() const { return g_; }
  const GaussHermiteRule& u() const { return u_; }
  double poisson_tail_tol() const { return settings_.poisson_tail_tol; }
  double weight_floor() const { return settings_.weight_floor; }
  const QuadratureSettings& settings() const { return settings_; }

 private:
  static GaussHermiteRule make_rule(int n) {
    if (n < kMinNodes)
      throw InvalidArgument("quadrature needs at least " + std::to_string(kMinNodes) + " nodes");
    return GaussHermiteRule::make(n);
  }

  QuadratureSettings settings_;
  GaussHermiteRule g_;
  GaussHermiteRule u_;
};

namespace detail {

inline void check_finite(double v, double g, double u) {
  if (!std::isfinite(v)) {
    std::ostringstream os;
    os << "integrand is " << v << " at node (g=" << g << ", u=" << u << ")";
    throw NonFiniteIntegrand(os.str());
  }
}

inline void check_finite(double v, double g, double u, Response y) {
  if (!std::isfinite(v)) {
    std::ostringstream os;
    os << "integrand is " << v << " at node (g=" << g << ", u=" << u << ", y=" << y << ")";
    throw NonFiniteIntegrand(os.str());
  }
}

}  // namespace detail

/// E[f(G, U)] = sum_i sum_j w_i w_j f(g_i, u_j).
template <class F>
double expect_gu(F&& f, const QuadratureGrid& grid) {
  const auto& rg = grid.g();
  const auto& ru = grid.u();
  double total = 0.0;
  for (std::size_t j = 0; j < ru.size(); ++j) {
    const double u = ru.nodes[j];
    double inner = 0.0;
    for (std::size_t i = 0; i < rg.size(); ++i) {
      const double g = rg.nodes[i];
      const double v = f(g, u);
      detail::check_finite(v, g, u);
      inner += rg.weights[i] * v;
    }
    total += ru.weights[j] * inner;
  }
  return total;
}

/// E[f(U)] over the U rule alone.
template <class F>
double expect_u(F&& f, const QuadratureGrid& grid) {
  const auto& ru = grid.u();
  double total = 0.0;
  for (std::size_t j = 0; j < ru.size(); ++j) {
    const double v = f(ru.nodes[j]);
    detail::check_finite(v, 0.0, ru.nodes[j]);
    total += ru.weights[j] * v;
  }
  return total;
}

struct ConditionalExpectation {
  double value = 0.0;
  double tail_mass = 0.0;  ///< pmf mass left out of the sum
};

/// E[h(Y) | U = u].
template <class H>
ConditionalExpectation expect_y_given_u(const ModelSpec& m, double u, H&& h,
                                        double tail_tol = 1e-12) {
  const ConditionalPmf pmf = conditional_pmf(m, u, tail_tol);
  ConditionalExpectation out;
  out.tail_mass = pmf.tail_mass;
  for (const auto& t : pmf.terms) {
    const double v = h(t.y);
    detail::check_finite(v, 0.0, u, t.y);
    out.value += t.mass * v;
  }
  return out;
}

/// Calls visit(u, y, w_u * P(y | u)) for every U node and every y in the
/// truncated conditional support whose joint weight is at least the grid's
/// weight floor; callers run their own inner sum over G.
template <class Visitor>
void for_each_uy(const ModelSpec& m, const QuadratureGrid& grid, Visitor&& visit) {
  const auto& ru = grid.u();
  const double floor = grid.weight_floor();
  ConditionalPmf pmf;
  for (std::size_t j = 0; j < ru.size(); ++j) {
    if (ru.weights[j] < floor) continue;
    const double u = ru.nodes[j];
    conditional_pmf(m, u, grid.poisson_tail_tol(), pmf);
    for (const auto& t : pmf.terms) {
      const double w = ru.weights[j] * t.mass;
      if (w >= floor) visit(u, t.y, w);
    }
  }
}

/// E[f(G, U, Y)].
template <class F>
double expect_guy(const ModelSpec& m, F&& f, const QuadratureGrid& grid) {
  const auto& rg = grid.g();
  double total = 0.0;
  for_each_uy(m, grid, [&](double u, Response y, double w_uy) {
    double inner = 0.0;
    for (std::size_t i = 0; i < rg.size(); ++i) {
      const double g = rg.nodes[i];
      const double v = f(g, u, y);
      detail::check_finite(v, g, u, y);
      inner += rg.weights[i] * v;
    }
    total += w_uy * inner;
  });
  return total;
}

struct AdaptiveOptions {
  double abs_tol = 1e-14;
  double rel_tol = 1e-13;  ///< relative to the integral of |f|
  int initial_panels = 6;
  int max_panels = 400;
};

/// Globally adaptive 7/15-point Gauss-Kronrod quadrature of a vector-valued
/// integrand on [lo, hi]. f(x, out) writes K values; within a panel the nodes
/// are visited in increasing order, so f may warm-start from its last call.
template <std::size_t K, class F>
std::array<double, K> integrate_adaptive(F&& f, double lo, double hi,
                                         const AdaptiveOptions& opt = {}) {
  using Vec = std::array<double, K>;
  using kronrod = boost::math::quadrature::gauss_kronrod<double, 15>;
  using gauss = boost::math::quadrature::gauss<double, 7>;
  static const auto rule = [] {
    // Ascending nodes on [-1, 1] with Kronrod and Gauss weights.
    std::array<double, 15> x{}, wk{}, wg{};
    const auto& a = kronrod::abscissa();
    const auto& w = kronrod::weights();
    const auto& g = gauss::weights();
    for (int i = 0; i < 8; ++i) {
      x[7 + i] = a[i];
      x[7 - i] = -a[i];
      wk[7 + i] = wk[7 - i] = w[i];
      if (i % 2 == 0) wg[7 + i] = wg[7 - i] = g[i / 2];
    }
    return std::make_tuple(x, wk, wg);
  }();
  const auto& [nodes, wk, wg] = rule;

  struct Panel {
    double lo, hi;
    Vec value, error, l1;
  };
  auto evaluate = [&](double a, double b) {
    Panel p{a, b, {}, {}, {}};
    Vec gauss_sum{}, y{};
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    for (int i = 0; i < 15; ++i) {
      f(mid + half * nodes[i], y);
      for (std::size_t k = 0; k < K; ++k) {
        p.value[k] += wk[i] * y[k];
        p.l1[k] += wk[i] * std::abs(y[k]);
        gauss_sum[k] += wg[i] * y[k];
      }
    }
    for (std::size_t k = 0; k < K; ++k) {
      p.value[k] *= half;
      p.l1[k] *= half;
      p.error[k] = std::abs(p.value[k] - half * gauss_sum[k]);
    }
    return p;
  };

  std::vector<Panel> panels;
  const int n0 = std::max(1, opt.initial_panels);
  for (int j = 0; j < n0; ++j)
    panels.push_back(evaluate(lo + (hi - lo) * j / n0, lo + (hi - lo) * (j + 1) / n0));

  while (true) {
    Vec total{}, err{}, l1{};
    for (const auto& p : panels)
      for (std::size_t k = 0; k < K; ++k) {
        total[k] += p.value[k];
        err[k] += p.error[k];
        l1[k] += p.l1[k];
      }
    // Worst component relative to its own tolerance decides. The relative
    // part refers to the integral of |f|, the scale of rounding errors.
    double worst = 0.0;
    std::array<double, K> tol{};
    for (std::size_t k = 0; k < K; ++k) {
      tol[k] = opt.abs_tol + opt.rel_tol * l1[k];
      worst = std::max(worst, err[k] / tol[k]);
    }
    if (worst <= 1.0) return total;
    if (static_cast<int>(panels.size()) >= opt.max_panels)
      throw NoConvergence("adaptive quadrature on [" + std::to_string(lo) + ", " +
                          std::to_string(hi) + "] exceeded " + std::to_string(opt.max_panels) +
                          " panels");
    std::size_t split = 0;
    double split_score = -1.0;
    for (std::size_t j = 0; j < panels.size(); ++j) {
      double score = 0.0;
      for (std::size_t k = 0; k < K; ++k) score = std::max(score, panels[j].error[k] / tol[k]);
      if (score > split_score) {
        split_score = score;
        split = j;
      }
    }
    const Panel old = panels[split];
    const double mid = 0.5 * (old.lo + old.hi);
    panels[split] = evaluate(old.lo, mid);
    panels.insert(panels.begin() + static_cast<std::ptrdiff_t>(split) + 1, evaluate(mid, old.hi));
  }
}

/// E[f(U)] for smooth f: adaptive Gauss-Kronrod against the normal density on
/// [-12, 12] when the grid asks for it, the U rule otherwise.
template <class F>
double expect_u_smooth(F&& f, const QuadratureGrid& grid) {
  if (!grid.settings().adaptive_u) return expect_u(f, grid);
  const auto r = integrate_adaptive<1>(
      [&](double u, std::array<double, 1>& out) {
        const double v = f(u);
        detail::check_finite(v, 0.0, u);
        out[0] = v * numeric::normal_pdf(u);
      },
      -12.0, 12.0);
  return r[0];
}

}  // namespace mest

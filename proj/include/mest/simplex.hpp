#pragma once

// Dense bounded-variable primal simplex for
//
//   maximize c^T x  subject to  a_i x <= b_i or a_i x = b_i,  lower <= x <= upper,
//
// with finite lower bounds (upper may be +inf). Rows not satisfied at
// x = lower start from artificial variables (phase I).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mest/errors.hpp"

namespace mest {

enum class RowSense { LessEqual, Equal };

struct LinearProgram {
  Eigen::MatrixXd a;  ///< m x n
  Eigen::VectorXd b;  ///< m
  Eigen::VectorXd c;  ///< n
  Eigen::VectorXd lower;  ///< n, finite
  Eigen::VectorXd upper;  ///< n, may hold +inf
  std::vector<RowSense> sense;  ///< m entries, or empty for all LessEqual
};

enum class LpStatus { Optimal, Infeasible, Unbounded };

inline const char* to_string(LpStatus s) {
  switch (s) {
    case LpStatus::Optimal: return "optimal";
    case LpStatus::Infeasible: return "infeasible";
    case LpStatus::Unbounded: return "unbounded";
  }
  return "?";
}

struct LpResult {
  LpStatus status = LpStatus::Optimal;
  double objective = 0.0;
  Eigen::VectorXd x;
  /// row multipliers y: c_j - y.A_j <= 0 for columns at their lower bound
  Eigen::VectorXd duals;
  int pivots = 0;
  int bound_flips = 0;
};

struct SimplexOptions {
  double feas_tol = 1e-9;
  double opt_tol = 1e-9;
  double pivot_tol = 1e-11;
  /// consecutive degenerate pivots before switching to Bland's rule
  int degenerate_streak = 50;
  /// iteration budget as a multiple of (rows + columns)
  int iteration_factor = 50;
};

namespace detail {

class BoundedSimplex {
 public:
  BoundedSimplex(const LinearProgram& lp, const SimplexOptions& opt) : opt_(opt) {
    m_ = static_cast<int>(lp.a.rows());
    n_ = static_cast<int>(lp.a.cols());
    if (lp.b.size() != m_ || lp.c.size() != n_ || lp.lower.size() != n_ ||
        lp.upper.size() != n_ ||
        !(lp.sense.empty() || static_cast<int>(lp.sense.size()) == m_))
      throw InvalidArgument("linear program has inconsistent dimensions");
    for (int j = 0; j < n_; ++j) {
      if (!std::isfinite(lp.lower[j])) throw InvalidArgument("lower bounds must be finite");
      if (!(lp.upper[j] >= lp.lower[j])) throw InvalidArgument("upper bound below lower bound");
    }
    if (!lp.a.allFinite() || !lp.b.allFinite() || !lp.c.allFinite())
      throw InvalidArgument("linear program has non-finite data");

    // Shift x = lower + x', scale rows by their largest entry.
    shift_ = lp.lower;
    Eigen::VectorXd rhs = lp.b - lp.a * lp.lower;
    Eigen::MatrixXd a = lp.a;
    row_scale_ = Eigen::VectorXd::Ones(m_);
    for (int i = 0; i < m_; ++i) {
      const double s = a.row(i).cwiseAbs().maxCoeff();
      if (s > 0.0) {
        a.row(i) /= s;
        rhs[i] /= s;
        row_scale_[i] = s;
      }
    }

    // A row needs an artificial when its slack cannot absorb the rhs.
    std::vector<int> artificial_rows;
    std::vector<bool> equality(m_, false);
    for (int i = 0; i < m_; ++i) {
      equality[i] = !lp.sense.empty() && lp.sense[i] == RowSense::Equal;
      if (rhs[i] < 0.0 || (equality[i] && rhs[i] != 0.0)) artificial_rows.push_back(i);
    }
    const int n_art = static_cast<int>(artificial_rows.size());
    cols_ = n_ + m_ + n_art;  // structural, slack, artificial
    artificial_begin_ = n_ + m_;

    t_.setZero(m_, cols_);
    t_.leftCols(n_) = a;
    t_.block(0, n_, m_, m_).setIdentity();
    upper_.assign(cols_, kInf);
    for (int j = 0; j < n_; ++j) upper_[j] = lp.upper[j] - lp.lower[j];
    for (int i = 0; i < m_; ++i)
      if (equality[i]) upper_[n_ + i] = 0.0;

    basis_.resize(m_);
    at_upper_.assign(cols_, false);
    beta_ = rhs;
    row_sign_ = Eigen::VectorXd::Ones(m_);
    for (int i = 0; i < m_; ++i) basis_[i] = n_ + i;
    for (int k = 0; k < n_art; ++k) {
      const int i = artificial_rows[k], col = artificial_begin_ + k;
      if (rhs[i] < 0.0) {
        t_.row(i) *= -1.0;
        row_sign_[i] = -1.0;
      }
      t_(i, col) = 1.0;
      beta_[i] = std::abs(rhs[i]);
      basis_[i] = col;
    }
    t0_ = t_;
    cost_ = Eigen::VectorXd::Zero(cols_);
    cost_.head(n_) = lp.c;
    max_iter_ = opt_.iteration_factor * (m_ + cols_) + 100;
  }

  LpResult run() {
    LpResult out;
    if (artificial_begin_ < cols_) {
      Eigen::VectorXd phase1 = Eigen::VectorXd::Zero(cols_);
      for (int j = artificial_begin_; j < cols_; ++j) phase1[j] = -1.0;
      if (optimize(phase1, out) != LpStatus::Optimal)
        throw LPNumericalFailure("phase I did not reach an optimum");
      double infeas = 0.0;
      for (int i = 0; i < m_; ++i)
        if (basis_[i] >= artificial_begin_) infeas += beta_[i];
      if (infeas > opt_.feas_tol * std::max(1.0, static_cast<double>(m_))) {
        out.status = LpStatus::Infeasible;
        return out;
      }
      // Artificials may linger in the basis at zero but never re-enter.
      for (int j = artificial_begin_; j < cols_; ++j) upper_[j] = 0.0;
    }
    out.status = optimize(cost_, out);
    if (out.status != LpStatus::Optimal) return out;

    out.x = shift_;
    for (int j = 0; j < n_; ++j)
      if (at_upper_[j]) out.x[j] += upper_[j];
    for (int i = 0; i < m_; ++i)
      if (basis_[i] < n_) out.x[basis_[i]] += beta_[i];
    out.objective = cost_.head(n_).dot(out.x);
    out.duals = duals();
    return out;
  }

 private:
  static constexpr double kInf = std::numeric_limits<double>::infinity();
  static constexpr double kTie = 1e-12;

  /// Solves y^T B = c_B on the initial columns, then undoes row scaling and negation.
  Eigen::VectorXd duals() const {
    if (m_ == 0) return {};
    Eigen::MatrixXd b0(m_, m_);
    Eigen::VectorXd cb(m_);
    for (int i = 0; i < m_; ++i) {
      b0.col(i) = t0_.col(basis_[i]);
      cb[i] = cost_[basis_[i]];
    }
    Eigen::VectorXd y = b0.transpose().partialPivLu().solve(cb);
    for (int i = 0; i < m_; ++i) y[i] *= row_sign_[i] / row_scale_[i];
    return y;
  }

  LpStatus optimize(const Eigen::VectorXd& cost, LpResult& out) {
    std::vector<bool> in_basis(cols_, false);
    for (int i = 0; i < m_; ++i) in_basis[basis_[i]] = true;
    int degenerate = 0;
    Eigen::VectorXd cb(m_);
    for (int iter = 0; iter < max_iter_; ++iter) {
      for (int i = 0; i < m_; ++i) cb[i] = cost[basis_[i]];
      const Eigen::RowVectorXd d = cost.transpose() - cb.transpose() * t_;
      const bool bland = degenerate >= opt_.degenerate_streak;

      int enter = -1;
      double best = 0.0;
      for (int j = 0; j < cols_; ++j) {
        if (in_basis[j] || upper_[j] == 0.0) continue;
        const double gain = at_upper_[j] ? -d[j] : d[j];
        if (gain <= opt_.opt_tol) continue;
        if (bland) {
          enter = j;
          break;
        }
        if (gain > best) {
          best = gain;
          enter = j;
        }
      }
      if (enter < 0) return LpStatus::Optimal;

      // Basic i moves by -dir * T(i, enter) * theta.
      const double dir = at_upper_[enter] ? -1.0 : 1.0;
      double theta = upper_[enter];
      int leave = -1;
      bool leave_to_upper = false;
      for (int i = 0; i < m_; ++i) {
        const double alpha = dir * t_(i, enter);
        if (std::abs(alpha) <= opt_.pivot_tol) continue;
        double limit;
        bool to_upper = false;
        if (alpha > 0.0) {
          limit = std::max(0.0, beta_[i]) / alpha;
        } else {
          const double ub = upper_[basis_[i]];
          if (!std::isfinite(ub)) continue;
          limit = std::max(0.0, ub - beta_[i]) / -alpha;
          to_upper = true;
        }
        bool take = limit < theta - kTie;
        if (!take && leave >= 0 && limit <= theta + kTie)
          take = bland ? basis_[i] < basis_[leave]
                       : std::abs(t_(i, enter)) > std::abs(t_(leave, enter));
        if (take) {
          theta = std::min(theta, limit);
          leave = i;
          leave_to_upper = to_upper;
        }
      }
      if (!std::isfinite(theta)) return LpStatus::Unbounded;

      degenerate = theta <= opt_.feas_tol ? degenerate + 1 : 0;
      beta_ -= (dir * theta) * t_.col(enter);

      if (leave < 0) {
        at_upper_[enter] = !at_upper_[enter];
        ++out.bound_flips;
        continue;
      }

      const int old = basis_[leave];
      const double entering_value = (at_upper_[enter] ? upper_[enter] : 0.0) + dir * theta;
      at_upper_[old] = leave_to_upper;
      at_upper_[enter] = false;
      in_basis[old] = false;
      in_basis[enter] = true;
      basis_[leave] = enter;

      t_.row(leave) /= t_(leave, enter);
      Eigen::VectorXd col = t_.col(enter);
      col[leave] = 0.0;
      const Eigen::RowVectorXd pivot_row = t_.row(leave);
      t_.noalias() -= col * pivot_row;
      beta_[leave] = entering_value;
      for (int i = 0; i < m_; ++i)
        if (std::abs(beta_[i]) < 1e-14) beta_[i] = 0.0;
      ++out.pivots;
    }
    throw CycleLimit("simplex exceeded " + std::to_string(max_iter_) + " iterations");
  }

  const SimplexOptions& opt_;
  int m_ = 0, n_ = 0, cols_ = 0, artificial_begin_ = 0, max_iter_ = 0;
  Eigen::MatrixXd t_, t0_;
  Eigen::VectorXd beta_, cost_, shift_, row_scale_, row_sign_;
  std::vector<double> upper_;
  std::vector<bool> at_upper_;
  std::vector<int> basis_;
};

}  // namespace detail

inline LpResult solve_lp(const LinearProgram& lp, const SimplexOptions& opt = {}) {
  detail::BoundedSimplex s(lp, opt);
  return s.run();
}

}  // namespace mest

#pragma once

// Finite-sample side: Gaussian designs with responses from a single-index
// model (index direction e_1), and the LP deciding whether the empirical
// M-estimator exists.
//
// The minimizer fails to exist iff some b != 0 has x_i.b = 0 on coercive
// rows, x_i.b >= 0 on decreasing rows and x_i.b <= 0 on increasing rows.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mest/errors.hpp"
#include "mest/models.hpp"
#include "mest/simplex.hpp"

namespace mest {

/// SplitMix64 finalizer; turns nearby seeds into unrelated generator states.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::mt19937_64 make_rng(std::uint64_t seed) { return std::mt19937_64(splitmix64(seed)); }

struct Dataset {
  Eigen::MatrixXd x;  ///< n x p, row i is x_i
  std::vector<Response> y;
  ModelSpec model;
  std::uint64_t seed = 0;

  Eigen::Index n() const { return x.rows(); }
  Eigen::Index p() const { return x.cols(); }
};

inline Dataset generate_dataset(const ModelSpec& model, Eigen::Index n, Eigen::Index p,
                                std::uint64_t seed) {
  model.validate();
  if (p < 1 || n <= p)
    throw InvalidShape("dataset needs n > p >= 1, got n=" + std::to_string(n) +
                       " p=" + std::to_string(p));
  Dataset d;
  d.model = model;
  d.seed = seed;
  d.x.resize(n, p);
  d.y.resize(static_cast<std::size_t>(n));
  auto rng = make_rng(seed);
  std::normal_distribution<double> normal;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) d.x(i, j) = normal(rng);
    d.y[static_cast<std::size_t>(i)] = sample_response(model, d.x(i, 0), rng);
  }
  return d;
}

/// Writes columns y, x_1..x_p with round-trip precision.
inline void write_dataset_csv(const Dataset& d, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.precision(17);
  out << "y";
  for (Eigen::Index j = 0; j < d.p(); ++j) out << ",x_" << (j + 1);
  out << '\n';
  for (Eigen::Index i = 0; i < d.n(); ++i) {
    out << d.y[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < d.p(); ++j) out << ',' << d.x(i, j);
    out << '\n';
  }
  if (!out) throw IoError("write failed for " + path);
}

struct ExistenceVerdict {
  bool exists = true;
  double lp_objective = 0.0;  ///< number of sign constraints that can be made strict
  std::optional<Eigen::VectorXd> witness;  ///< unit-norm b, present iff !exists
};

struct ExistenceOptions {
  double tol_lp = 1e-7;
  /// scale of the random lower-bound shifts used against degeneracy
  double perturbation = 1e-3;
  SimplexOptions simplex;
};

/// Worst violation of the non-existence sign pattern by b (<= 0 means satisfied):
/// |x_i.b| on coercive rows, -x_i.b on decreasing rows, x_i.b on increasing rows.
inline double sign_pattern_violation(const Eigen::MatrixXd& x, const std::vector<Response>& y,
                                     const ModelSpec& m, const Eigen::VectorXd& b) {
  const Eigen::VectorXd xb = x * b;
  double worst = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double v = 0.0;
    switch (classify_loss(m, y[static_cast<std::size_t>(i)])) {
      case EventClass::Coercive: v = std::abs(xb[i]); break;
      case EventClass::Decreasing: v = -xb[i]; break;
      case EventClass::Increasing: v = xb[i]; break;
    }
    worst = std::max(worst, v);
  }
  return worst;
}

namespace detail {

/// For rows a_i, returns c with A c >= 0 and A c != 0, or nothing when some
/// y > 0 has A^T y = 0. Solves max sum z subject to A^T (z + e) = 0,
/// z <= 1, with z, e bounded below by small random negatives to break the
/// degeneracy of the cone; dual feasibility of the final basis gives A c >= 0
/// (c the row multipliers) whatever the perturbation, and a row with z_i < 1
/// has a_i c >= 1.
inline std::optional<Eigen::VectorXd> strict_direction(const Eigen::MatrixXd& a,
                                                       const ExistenceOptions& opt) {
  const Eigen::Index rows = a.rows(), k = a.cols();
  LinearProgram lp;
  lp.a.resize(k, 2 * rows);
  lp.a.leftCols(rows) = a.transpose();
  lp.a.rightCols(rows) = a.transpose();
  lp.b = Eigen::VectorXd::Zero(k);
  lp.c = Eigen::VectorXd::Zero(2 * rows);
  lp.c.head(rows).setOnes();
  std::mt19937_64 rng(0x6a09e667f3bcc909ULL);
  std::uniform_real_distribution<double> jitter(0.5 * opt.perturbation, opt.perturbation);
  lp.lower.resize(2 * rows);
  for (Eigen::Index j = 0; j < 2 * rows; ++j) lp.lower[j] = -jitter(rng);
  lp.upper = Eigen::VectorXd::Constant(2 * rows, std::numeric_limits<double>::infinity());
  lp.upper.head(rows).setOnes();
  lp.sense.assign(static_cast<std::size_t>(k), RowSense::Equal);

  const LpResult res = solve_lp(lp, opt.simplex);
  if (res.status != LpStatus::Optimal)
    throw LPNumericalFailure(std::string("existence LP reported ") + to_string(res.status));
  if ((1.0 - res.x.head(rows).array()).maxCoeff() <= opt.tol_lp) return std::nullopt;
  if (!(res.duals.norm() > 0.0)) throw LPNumericalFailure("existence LP returned a zero direction");
  return res.duals;
}

}  // namespace detail

inline ExistenceVerdict mle_exists(const Eigen::MatrixXd& x, const std::vector<Response>& y,
                                   const ModelSpec& m, const ExistenceOptions& opt = {}) {
  const Eigen::Index n = x.rows(), p = x.cols();
  if (static_cast<Eigen::Index>(y.size()) != n) throw InvalidShape("x and y lengths differ");
  if (p < 1 || n < 1) throw InvalidShape("design must be non-empty");
  if (!x.allFinite()) throw InvalidArgument("design has non-finite entries");
  {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
    if (qr.rank() < p)
      throw RankDeficient("design has rank " + std::to_string(qr.rank()) + " < p=" +
                          std::to_string(p));
  }

  std::vector<Eigen::Index> coercive, signed_rows;
  std::vector<double> sign;
  for (Eigen::Index i = 0; i < n; ++i) {
    switch (classify_loss(m, y[static_cast<std::size_t>(i)])) {
      case EventClass::Coercive: coercive.push_back(i); break;
      case EventClass::Decreasing: signed_rows.push_back(i); sign.push_back(1.0); break;
      case EventClass::Increasing: signed_rows.push_back(i); sign.push_back(-1.0); break;
    }
  }

  // b = N c with N an orthonormal basis of the kernel of the coercive rows.
  Eigen::MatrixXd basis;
  if (coercive.empty()) {
    basis = Eigen::MatrixXd::Identity(p, p);
  } else {
    Eigen::MatrixXd xc_t(p, static_cast<Eigen::Index>(coercive.size()));
    for (std::size_t k = 0; k < coercive.size(); ++k) xc_t.col(k) = x.row(coercive[k]).transpose();
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xc_t);
    const Eigen::Index r = qr.rank();
    if (r == p) return {};  // only b = 0 satisfies the coercive rows
    const Eigen::MatrixXd q = qr.householderQ();
    basis = q.rightCols(p - r);
  }
  const Eigen::Index k = basis.cols();
  const Eigen::Index rows = static_cast<Eigen::Index>(signed_rows.size());
  if (rows == 0) return {};  // cannot happen at full rank, kept for safety

  // Constraint rows a_i = sign_i x_i N, scaled to unit norm.
  Eigen::MatrixXd a(rows, k);
  for (Eigen::Index i = 0; i < rows; ++i) {
    a.row(i) = sign[static_cast<std::size_t>(i)] * (x.row(signed_rows[static_cast<std::size_t>(i)]) * basis);
    const double norm = a.row(i).norm();
    if (norm > 0.0) a.row(i) /= norm;
  }

  // Grow c until no further row can be made strict; the LP optimum is that count.
  Eigen::VectorXd c = Eigen::VectorXd::Zero(k);
  std::vector<Eigen::Index> open(static_cast<std::size_t>(rows));
  for (Eigen::Index i = 0; i < rows; ++i) open[static_cast<std::size_t>(i)] = i;
  while (!open.empty()) {
    Eigen::MatrixXd sub(static_cast<Eigen::Index>(open.size()), k);
    for (std::size_t i = 0; i < open.size(); ++i) sub.row(static_cast<Eigen::Index>(i)) = a.row(open[i]);
    const auto step = detail::strict_direction(sub, opt);
    if (!step) break;
    // Add a multiple of step small enough to keep the strict rows strict.
    const Eigen::VectorXd ac = a * c, as = a * *step;
    double t = 1.0;
    for (Eigen::Index i = 0; i < rows; ++i)
      if (ac[i] > 0.0 && as[i] < 0.0) t = std::min(t, 0.5 * ac[i] / -as[i]);
    c += t * *step;
    const Eigen::VectorXd next = a * c;
    const double cut = 1e-9 * next.cwiseAbs().maxCoeff();
    std::vector<Eigen::Index> still;
    for (Eigen::Index i : open)
      if (!(next[i] > cut)) still.push_back(i);
    if (still.size() == open.size()) throw LPNumericalFailure("existence LP made no row strict");
    open.swap(still);
  }

  ExistenceVerdict v;
  v.lp_objective = static_cast<double>(rows - static_cast<Eigen::Index>(open.size()));
  v.exists = v.lp_objective <= opt.tol_lp;
  if (!v.exists) {
    const Eigen::VectorXd b = basis * c;
    v.witness = b / b.norm();
  }
  return v;
}

inline ExistenceVerdict mle_exists(const Dataset& d, const ExistenceOptions& opt = {}) {
  return mle_exists(d.x, d.y, d.model, opt);
}

/// Realized (u_i, y_i, g_i) for the empirical phi_n: u, g i.i.d. N(0,1) and
/// y_i drawn from the model at u_i.
struct PhiSample {
  std::vector<double> u;
  std::vector<Response> y;
  std::vector<double> g;
};

inline PhiSample generate_phi_sample(const ModelSpec& m, std::size_t n, std::uint64_t seed) {
  m.validate();
  PhiSample s;
  s.u.resize(n);
  s.y.resize(n);
  s.g.resize(n);
  auto rng = make_rng(seed);
  std::normal_distribution<double> normal;
  for (std::size_t i = 0; i < n; ++i) {
    s.u[i] = normal(rng);
    s.g[i] = normal(rng);
    s.y[i] = sample_response(m, s.u[i], rng);
  }
  return s;
}

}  // namespace mest

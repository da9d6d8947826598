#pragma once

// Loss families of the single-index models: logistic, binomial(q) and
// Poisson. Each family fixes the per-response loss l_y, the event class of
// l_y (coercive / strictly increasing / strictly decreasing) and the
// conditional law of Y given the index U = x'w.

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <boost/math/distributions/poisson.hpp>

#include "mest/errors.hpp"
#include "mest/numeric.hpp"

namespace mest {

using Response = std::int64_t;

enum class Family { Logistic, Binomial, Poisson };

struct ModelSpec {
  Family family = Family::Logistic;
  int q = 1;  ///< number of trials, binomial only
  double kappa = 0.0;

  static ModelSpec logistic(double kappa) { return {Family::Logistic, 1, kappa}; }
  static ModelSpec binomial(int q, double kappa) { return {Family::Binomial, q, kappa}; }
  static ModelSpec poisson(double kappa) { return {Family::Poisson, 1, kappa}; }

  void validate() const {
    if (!(kappa >= 0.0) || !std::isfinite(kappa))
      throw InvalidArgument("kappa must be finite and >= 0");
    if (family == Family::Binomial && q < 1)
      throw InvalidArgument("binomial model requires q >= 1");
  }

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

inline std::string family_name(Family f) {
  switch (f) {
    case Family::Logistic: return "logistic";
    case Family::Binomial: return "binomial";
    case Family::Poisson: return "poisson";
  }
  return "unknown";
}

inline Family parse_family(std::string_view name) {
  if (name == "logistic") return Family::Logistic;
  if (name == "binomial") return Family::Binomial;
  if (name == "poisson") return Family::Poisson;
  throw InvalidArgument("unknown model family '" + std::string(name) + "'");
}

inline std::string describe(const ModelSpec& m) {
  std::string s = family_name(m.family);
  if (m.family == Family::Binomial) s += "(q=" + std::to_string(m.q) + ")";
  s += " kappa=" + std::to_string(m.kappa);
  return s;
}

enum class EventClass { Coercive, Increasing, Decreasing };

inline const char* to_string(EventClass c) {
  switch (c) {
    case EventClass::Coercive: return "coercive";
    case EventClass::Increasing: return "increasing";
    case EventClass::Decreasing: return "decreasing";
  }
  return "unknown";
}

/// P(Omega_coercive | U=u), P(Omega_increasing | U=u), P(Omega_decreasing | U=u).
struct ClassProbs {
  double coercive = 0.0;
  double increasing = 0.0;
  double decreasing = 0.0;

  double of(EventClass c) const {
    switch (c) {
      case EventClass::Coercive: return coercive;
      case EventClass::Increasing: return increasing;
      case EventClass::Decreasing: return decreasing;
    }
    return 0.0;
  }
};

inline bool in_support(const ModelSpec& m, Response y) {
  switch (m.family) {
    case Family::Logistic: return y == -1 || y == 1;
    case Family::Binomial: return y >= 0 && y <= m.q;
    case Family::Poisson: return y >= 0;
  }
  return false;
}

inline void require_support(const ModelSpec& m, Response y) {
  if (!in_support(m, y))
    throw UnsupportedResponse("y=" + std::to_string(y) + " for " + describe(m));
}

inline EventClass classify_loss(const ModelSpec& m, Response y) {
  require_support(m, y);
  switch (m.family) {
    case Family::Logistic:
      return y == -1 ? EventClass::Increasing : EventClass::Decreasing;
    case Family::Binomial:
      if (y == 0) return EventClass::Increasing;
      if (y == m.q) return EventClass::Decreasing;
      return EventClass::Coercive;
    case Family::Poisson:
      return y == 0 ? EventClass::Increasing : EventClass::Coercive;
  }
  return EventClass::Coercive;
}

/// l_y(t). Logistic uses labels {-1,+1}: l_y(t) = log(1 + exp(-y t)).
inline double loss_value(const ModelSpec& m, Response y, double t) {
  require_support(m, y);
  const auto yd = static_cast<double>(y);
  switch (m.family) {
    case Family::Logistic: return numeric::softplus(-yd * t);
    case Family::Binomial: return m.q * numeric::softplus(t) - yd * t;
    case Family::Poisson: return std::exp(t) - yd * t;
  }
  return 0.0;
}

namespace detail {

// Unchecked derivatives for the inner loops; callers validate y once.
inline double loss_deriv(const ModelSpec& m, double y, double t) {
  switch (m.family) {
    case Family::Logistic: return -y * numeric::sigmoid(-y * t);
    case Family::Binomial: return m.q * numeric::sigmoid(t) - y;
    case Family::Poisson: return std::exp(t) - y;
  }
  return 0.0;
}

inline double loss_second_deriv(const ModelSpec& m, double y, double t) {
  switch (m.family) {
    case Family::Logistic: {
      const double s = numeric::sigmoid(-y * t);
      return s * (1.0 - s);
    }
    case Family::Binomial: {
      const double s = numeric::sigmoid(t);
      return m.q * s * (1.0 - s);
    }
    case Family::Poisson: return std::exp(t);
  }
  return 0.0;
}

struct LossDerivs {
  double first = 0.0;
  double second = 0.0;
};

/// l_y'(t) and l_y''(t) sharing one exponential.
inline LossDerivs loss_derivs(const ModelSpec& m, double y, double t) {
  switch (m.family) {
    case Family::Logistic: {
      const double s = numeric::sigmoid(-y * t);
      return {-y * s, s * (1.0 - s)};
    }
    case Family::Binomial: {
      const double s = numeric::sigmoid(t);
      return {m.q * s - y, m.q * s * (1.0 - s)};
    }
    case Family::Poisson: {
      const double e = std::exp(t);
      return {e - y, e};
    }
  }
  return {};
}

}  // namespace detail

inline double loss_deriv(const ModelSpec& m, Response y, double t) {
  require_support(m, y);
  return detail::loss_deriv(m, static_cast<double>(y), t);
}

/// Poisson intensity at index u. The exponent is negative: lambda = exp(-kappa u).
inline double poisson_rate(double kappa, double u) { return std::exp(-kappa * u); }

/// Success probability of one binomial trial (and P(Y=1) for logistic).
inline double success_prob(double kappa, double u) { return numeric::sigmoid(kappa * u); }

inline ClassProbs class_probs_given_u(const ModelSpec& m, double u) {
  const double ku = m.kappa * u;
  switch (m.family) {
    case Family::Logistic: {
      const double inc = numeric::sigmoid(-ku);
      return {0.0, inc, numeric::sigmoid(ku)};
    }
    case Family::Binomial: {
      // log p = -softplus(-ku), log(1-p) = -softplus(ku)
      const double inc = std::exp(-m.q * numeric::softplus(ku));
      const double dec = std::exp(-m.q * numeric::softplus(-ku));
      return {std::max(0.0, 1.0 - inc - dec), inc, dec};
    }
    case Family::Poisson: {
      const double lambda = poisson_rate(m.kappa, u);
      const double inc = std::exp(-lambda);
      return {-std::expm1(-lambda), inc, 0.0};
    }
  }
  return {};
}

struct PmfTerm {
  Response y;
  double mass;
};

/// Law of Y given U = u over its (possibly truncated) support.
struct ConditionalPmf {
  std::vector<PmfTerm> terms;  ///< ascending in y
  double tail_mass = 0.0;      ///< probability not covered by `terms`
};

/// Poisson sums are truncated to a window around the mode whose neglected
/// mass (both tails, via geometric bounds) is below tail_tol.
inline void conditional_pmf(const ModelSpec& m, double u, double tail_tol, ConditionalPmf& out) {
  out.terms.clear();
  out.tail_mass = 0.0;
  const double ku = m.kappa * u;
  switch (m.family) {
    case Family::Logistic: {
      out.terms.push_back({-1, numeric::sigmoid(-ku)});
      out.terms.push_back({1, numeric::sigmoid(ku)});
      return;
    }
    case Family::Binomial: {
      const double log_p = -numeric::softplus(-ku);
      const double log_1mp = -numeric::softplus(ku);
      const double lgq = std::lgamma(m.q + 1.0);
      for (int k = 0; k <= m.q; ++k) {
        const double lc = lgq - std::lgamma(k + 1.0) - std::lgamma(m.q - k + 1.0);
        out.terms.push_back({k, std::exp(lc + k * log_p + (m.q - k) * log_1mp)});
      }
      return;
    }
    case Family::Poisson: {
      const double lambda = poisson_rate(m.kappa, u);
      if (!std::isfinite(lambda))
        throw InvalidArgument("poisson rate overflow at u=" + std::to_string(u));
      const double mode = std::floor(lambda);
      const double mode_mass = boost::math::pdf(boost::math::poisson_distribution<double>(lambda), mode);
      const double half_tol = 0.5 * tail_tol;

      std::vector<double> below;  // masses at mode-1, mode-2, ...
      double mass = mode_mass;
      for (double k = mode; k >= 1.0;) {
        mass *= k / lambda;  // now mass(k-1)
        k -= 1.0;
        // lower tail beyond k-1 is bounded by mass(k) * (k/lambda) / (1 - k/lambda)
        below.push_back(mass);
        const double r = k / lambda;
        if (k < 1.0 || (r < 1.0 && mass * r / (1.0 - r) < half_tol)) break;
      }
      const auto first = static_cast<Response>(mode) - static_cast<Response>(below.size());
      for (auto it = below.rbegin(); it != below.rend(); ++it)
        out.terms.push_back({first + (it - below.rbegin()), *it});
      out.terms.push_back({static_cast<Response>(mode), mode_mass});
      mass = mode_mass;
      for (double k = mode + 1.0;; k += 1.0) {
        mass *= lambda / k;
        out.terms.push_back({static_cast<Response>(k), mass});
        const double r = lambda / (k + 1.0);
        if (mass * r / (1.0 - r) < half_tol) break;
      }
      double total = 0.0;
      for (const auto& t : out.terms) total += t.mass;
      out.tail_mass = std::max(0.0, 1.0 - total);
      return;
    }
  }
}

inline ConditionalPmf conditional_pmf(const ModelSpec& m, double u, double tail_tol = 1e-12) {
  ConditionalPmf out;
  conditional_pmf(m, u, tail_tol, out);
  return out;
}

/// Draws Y | U = u. Only `rng` is mutated.
template <class Rng>
Response sample_response(const ModelSpec& m, double u, Rng& rng) {
  switch (m.family) {
    case Family::Logistic: {
      std::bernoulli_distribution coin(success_prob(m.kappa, u));
      return coin(rng) ? 1 : -1;
    }
    case Family::Binomial: {
      std::binomial_distribution<Response> draw(m.q, success_prob(m.kappa, u));
      return draw(rng);
    }
    case Family::Poisson: {
      const double lambda = poisson_rate(m.kappa, u);
      if (!std::isfinite(lambda) || lambda > 1e15)
        throw InvalidArgument("poisson rate too large to sample at u=" + std::to_string(u));
      std::poisson_distribution<Response> draw(lambda);
      return draw(rng);
    }
  }
  return 0;
}

}  // namespace mest

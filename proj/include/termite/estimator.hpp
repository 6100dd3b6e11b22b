// Mass estimates for skewed networks: how much of the joint mass the m
// largest terms must carry, and fitted extrapolations of accumulated mass.
//
// The exact model for n binary variables skewed at (n-1)/n: terms with i
// deviations from the modal assignment have mass (1/n)^i ((n-1)/n)^(n-i) and
// there are C(n,i) of them, so the m largest terms (m a cumulative binomial
// count) carry a binomial tail.  For fitting, n is relaxed to a real through
// the gamma function so the model stays exact at integer n.
#pragma once

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "termite/common.hpp"

namespace termite {

namespace detail {
// C(nu, i) for real nu >= i, via lgamma.
inline double binom_real(double nu, std::size_t i) {
  if (double(i) > nu) return 0.0;
  return std::exp(std::lgamma(nu + 1.0) - std::lgamma(double(i) + 1.0) -
                  std::lgamma(nu - double(i) + 1.0));
}
}  // namespace detail

// Largest Q with sum_{i<=Q} C(n,i) <= m (deviation budget covered by m terms).
inline std::size_t deviation_budget(std::size_t n, std::size_t m) {
  double cum = 0.0;
  std::size_t q = 0;
  bool any = false;
  for (std::size_t i = 0; i <= n; ++i) {
    cum += detail::binom_real(double(n), i);
    if (cum <= double(m) + 1e-9) {
      q = i;
      any = true;
    } else {
      break;
    }
  }
  if (!any) throw error("deviation_budget: m < 1");
  return q;
}

// Real-n generalization of the model mass covered by the m largest terms.
inline double skew_model_mass(double nu, std::size_t m) {
  if (nu < 1.5) throw error("skew_model_mass: n too small");
  const double p = 1.0 / nu;
  double cum_count = 0.0, mass = 0.0;
  for (std::size_t i = 0;; ++i) {
    const double c = detail::binom_real(nu, i);
    if (c <= 0.0) break;
    cum_count += c;
    if (i > 0 && cum_count > double(m) + 1e-9) break;
    mass += c * std::pow(p, double(i)) * std::pow(1.0 - p, nu - double(i));
    if (double(i) + 1.0 > nu) break;
  }
  return std::min(mass, 1.0);
}

// Lower bound on the total mass of the m largest joint terms of an n-variable
// binary net skewed at exactly (n-1)/n.  Exact at cumulative-binomial m for
// independent roots; a valid lower bound in between.
inline double mass_lower_bound(std::size_t n, std::size_t m) {
  if (n < 2) throw error("mass_lower_bound: need n >= 2");
  if (m < 1) throw error("mass_lower_bound: need m >= 1");
  const double total = std::pow(2.0, double(n));
  if (double(m) > total) throw error("mass_lower_bound: m exceeds 2^n");
  const std::size_t q = deviation_budget(n, m);
  const double p = 1.0 / double(n);
  double mass = 0.0;
  for (std::size_t i = 0; i <= q; ++i)
    mass += detail::binom_real(double(n), i) * std::pow(p, double(i)) *
            std::pow(1.0 - p, double(n - i));
  return mass;
}

// Solves Q + 2*log_n(Q-1) = log_n(m) for Q in (1, n]; the left side is
// strictly increasing there, so plain bisection converges.
inline double q_approx(std::size_t n, std::size_t m) {
  if (n < 2) throw error("q_approx: need n >= 2");
  if (m < 2) throw error("q_approx: need m >= 2");
  const double ln_n = std::log(double(n));
  const double target = std::log(double(m)) / ln_n;
  auto f = [&](double q) { return q + 2.0 * std::log(q - 1.0) / ln_n - target; };
  double lo = 1.0 + 1e-12, hi = double(n);
  if (f(hi) < 0.0) throw error("q_approx: m out of validity range for n");
  for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// Normal-curve approximation of the mass with deviation budget Q: deviations
// of a mass-ordered term behave like a count with mean 1 and variance
// (n-1)/n, so the cumulative at Q+1/2 approximates the covered mass.
inline double normal_mass_approx(double n, double q) {
  if (n < 2.0) throw error("normal_mass_approx: need n >= 2");
  const double sd = std::sqrt((n - 1.0) / n);
  const double z = (q + 0.5 - 1.0) / sd;
  return 0.5 * std::erfc(-z / std::sqrt(2.0));
}

struct MassPoint {
  std::size_t m = 0;   // number of largest terms accumulated
  double mass = 0.0;   // their total (unnormalized) mass
};

struct SkewFit {
  double n_eff = 0.0;  // fitted effective variable count
  double sse = 0.0;    // residual sum of squares at the optimum
};

// Least-squares fit of the effective n through the real-n model; grid search
// plus two refinement passes, so the result is deterministic.
inline SkewFit fit_effective_n(const std::vector<MassPoint>& points) {
  if (points.size() < 2) throw error("fit_effective_n: need at least 2 points");
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i].mass < 0.0 || points[i].mass > 1.0 + 1e-12)
      throw error("fit_effective_n: mass outside [0,1]");
    if (i > 0) {
      if (points[i].m <= points[i - 1].m)
        throw error("fit_effective_n: m must be strictly increasing");
      if (points[i].mass + 1e-15 < points[i - 1].mass)
        throw error("fit_effective_n: masses must be nondecreasing");
    }
  }
  bool all_equal = true;
  for (const auto& p : points)
    if (std::fabs(p.mass - points[0].mass) > 1e-15) all_equal = false;
  if (all_equal) throw error("fit_effective_n: degenerate input, all masses equal");

  auto sse_at = [&](double nu) {
    double s = 0.0;
    for (const auto& p : points) {
      const double d = skew_model_mass(nu, p.m) - p.mass;
      s += d * d;
    }
    return s;
  };
  const double lo = 1.5, hi = 64.0;
  double best_nu = lo, best = sse_at(lo);
  auto scan = [&](double a, double b, double step) {
    for (double nu = a; nu <= b + step * 0.5; nu += step) {
      const double s = sse_at(nu);
      if (s < best) {
        best = s;
        best_nu = nu;
      }
    }
  };
  scan(lo, hi, 0.1);
  scan(std::max(lo, best_nu - 0.1), std::min(hi, best_nu + 0.1), 1e-3);
  scan(std::max(lo, best_nu - 1e-3), std::min(hi, best_nu + 1e-3), 1e-5);
  return {best_nu, best};
}

// Advisory remainder under the fitted model: the model's covered fraction at
// the current m extrapolates a total, and the estimate is total - accounted.
// Empty when the series cannot be fitted.
inline std::optional<double> fitted_remaining(const std::vector<MassPoint>& observations,
                                              double mass_accounted) {
  if (observations.size() < 2) return std::nullopt;
  SkewFit fit;
  try {
    fit = fit_effective_n(observations);
  } catch (const error&) {
    return std::nullopt;  // degenerate series
  }
  const double frac = skew_model_mass(fit.n_eff, observations.back().m);
  if (frac <= 1e-12) return std::nullopt;
  return std::max(0.0, mass_accounted / frac - mass_accounted);
}

// Sound bound on the mass not yet accounted for.  Exhaustion pins it to zero;
// with fewer than two usable observations only the trivial bound is available;
// otherwise the conservative maximum of the trivial and fitted bounds.
inline double remaining_mass_bound(const std::vector<MassPoint>& observations,
                                   double mass_accounted, bool exhausted) {
  if (exhausted) return 0.0;
  const double trivial = std::max(0.0, 1.0 - mass_accounted);
  auto fitted = fitted_remaining(observations, mass_accounted);
  return fitted ? std::max(trivial, *fitted) : trivial;
}

}  // namespace termite

#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "summcorr/errors.hpp"
#include "summcorr/model.hpp"
#include "summcorr/special_functions.hpp"

namespace summcorr {

// The integrated likelihood is singular at |rho| = 1; the optimizer works on
// [-1 + eps, 1 - eps].
inline constexpr double kRhoBoundEpsilon = 1e-6;
inline constexpr double kRhoLo = -1.0 + kRhoBoundEpsilon;
inline constexpr double kRhoHi = 1.0 - kRhoBoundEpsilon;

// Rough initialization grid: 41 equispaced points on [-0.975, 0.975].
inline constexpr int kInitGridPoints = 41;
inline constexpr double kInitGridLo = -0.975;
inline constexpr double kInitGridHi = 0.975;

inline constexpr double kBrentTol = 1e-8;

struct WaldCi {
  double lo;
  double hi;
  bool clamped_lo;
  bool clamped_hi;
};

struct LrtCi {
  double lo;
  double hi;
  bool truncated_lo;  // no root before the domain endpoint
  bool truncated_hi;
};

struct RhoEstimate {
  double rho_hat = 0.0;
  std::optional<double> se;
  std::optional<WaldCi> ci_wald;
  std::optional<LrtCi> ci_lrt;
  double loglik_at_max = kNegInf;
  double grid_start = 0.0;
  bool converged = false;
  bool at_boundary = false;
  bool single_study = false;  // k = 1: no between-study information
};

struct BrentResult {
  double x;
  double fx;
  int iterations;
  bool converged;
};

// Brent's bounded scalar maximizer (golden section with parabolic
// interpolation); tol is absolute in x.
template <class F>
BrentResult brent_maximize(F&& f, double lo, double hi, double tol = kBrentTol,
                           int max_iter = 200) {
  constexpr double golden = 0.3819660112501051;  // (3 - sqrt(5)) / 2
  const double eps = std::sqrt(std::numeric_limits<double>::epsilon());
  double a = lo, b = hi;
  double x = a + golden * (b - a);
  double w = x, v = x;
  double fx = f(x), fw = fx, fv = fx;
  double d = 0.0, e = 0.0;
  for (int iter = 0; iter < max_iter; ++iter) {
    const double m = 0.5 * (a + b);
    const double tol1 = eps * std::abs(x) + tol;
    const double tol2 = 2.0 * tol1;
    if (std::abs(x - m) <= tol2 - 0.5 * (b - a))
      return {x, fx, iter, true};
    bool use_golden = true;
    if (std::abs(e) > tol1) {
      // Parabola through (x, w, v); maximization flips the usual signs.
      const double r = (x - w) * (fx - fv);
      double q = (x - v) * (fx - fw);
      double p = (x - v) * q - (x - w) * r;
      q = 2.0 * (q - r);
      if (q > 0.0) p = -p;
      q = std::abs(q);
      const double e_old = e;
      e = d;
      if (std::abs(p) < std::abs(0.5 * q * e_old) && p > q * (a - x) &&
          p < q * (b - x)) {
        d = p / q;
        double u = x + d;
        if (u - a < tol2 || b - u < tol2) d = (x < m) ? tol1 : -tol1;
        use_golden = false;
      }
    }
    if (use_golden) {
      e = (x < m) ? b - x : a - x;
      d = golden * e;
    }
    const double u = (std::abs(d) >= tol1) ? x + d : x + (d > 0 ? tol1 : -tol1);
    const double fu = f(u);
    if (fu >= fx) {
      if (u < x) b = x; else a = x;
      v = w; fv = fw;
      w = x; fw = fx;
      x = u; fx = fu;
    } else {
      if (u < x) a = u; else b = u;
      if (fu >= fw || w == x) {
        v = w; fv = fw;
        w = u; fw = fu;
      } else if (fu >= fv || v == x || v == w) {
        v = u; fv = fu;
      }
    }
  }
  return {x, fx, 200, false};
}

// -d^2 l / d rho^2 at rho_hat by central second differences, computed at two
// step sizes (h, h/2) that must agree within 5%. nullopt flags non-positive
// or unstable curvature; the caller then reports no SE.
template <class F>
std::optional<double> observed_information_of(F&& loglik, double rho_hat) {
  const double h = std::max(1e-4, 1e-4 * (1.0 - rho_hat * rho_hat));
  if (rho_hat - h <= -1.0 || rho_hat + h >= 1.0) return std::nullopt;
  const double f0 = loglik(rho_hat);
  const auto second_diff = [&](double step) {
    return (loglik(rho_hat + step) - 2.0 * f0 + loglik(rho_hat - step)) /
           (step * step);
  };
  const double info_h = -second_diff(h);
  const double info_h2 = -second_diff(0.5 * h);
  if (!(info_h2 > 0.0) || !std::isfinite(info_h2)) return std::nullopt;
  if (std::abs(info_h - info_h2) > 0.05 * std::abs(info_h2))
    return std::nullopt;
  return info_h2;
}

inline std::optional<double> observed_information(
    std::span<const StudySummary> studies, double rho_hat) {
  const auto mu = mle_mu(studies);
  const auto sig = mle_sigma(studies, mu.mu_x, mu.mu_y);
  const RhoProfile profile(studies, mu.mu_x, mu.mu_y, sig.sigma_x,
                           sig.sigma_y);
  return observed_information_of(profile, rho_hat);
}

// rho_hat -+ z_{1-alpha/2} * se, clamped to [-1, 1].
inline WaldCi wald_ci(double rho_hat, double se, double alpha) {
  if (!(se >= 0.0)) throw ValidationError("wald_ci: se must be >= 0");
  const double z = normal_quantile(1.0 - alpha / 2.0);
  const double lo = rho_hat - z * se;
  const double hi = rho_hat + z * se;
  return {std::max(lo, -1.0), std::min(hi, 1.0), lo < -1.0, hi > 1.0};
}

namespace detail {

// Bisection for LRTS(rho) = q on [outer, rho_hat] (or mirrored), where
// LRTS decreases toward 0 at rho_hat. Root located to within tol in rho.
template <class F>
double lrt_root(F&& lrts_minus_q, double outer, double inner, double tol) {
  double lo = outer, hi = inner;  // g(lo) >= 0 >= g(hi)
  while (std::abs(hi - lo) > tol) {
    const double mid = 0.5 * (lo + hi);
    const double g = lrts_minus_q(mid);
    if (!std::isfinite(g))
      throw NumericalError("lrt_ci: non-finite likelihood at rho = " +
                           std::to_string(mid));
    if (g >= 0.0) lo = mid; else hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

// Roots of LRTS(rho) = chi2_{1,alpha} with LRTS(rho) = -2 [l(rho) - l(rho_hat)].
// A side whose LRTS never reaches the critical value before the domain
// endpoint reports that endpoint with a truncation flag.
template <class F>
LrtCi lrt_ci_of(F&& loglik, double rho_hat, double loglik_at_max,
                double alpha, double root_tol = 1e-7) {
  const double q = chi2_quantile_df1(alpha);
  const auto g = [&](double rho) {
    return -2.0 * (loglik(rho) - loglik_at_max) - q;
  };
  LrtCi ci{kRhoLo, kRhoHi, false, false};
  if (rho_hat > kRhoLo && g(kRhoLo) >= 0.0)
    ci.lo = detail::lrt_root(g, kRhoLo, rho_hat, root_tol);
  else
    ci.truncated_lo = true;
  if (rho_hat < kRhoHi && g(kRhoHi) >= 0.0)
    ci.hi = detail::lrt_root(g, kRhoHi, rho_hat, root_tol);
  else
    ci.truncated_hi = true;
  return ci;
}

inline LrtCi lrt_ci(std::span<const StudySummary> studies, double rho_hat,
                    double loglik_at_max, double alpha) {
  const auto mu = mle_mu(studies);
  const auto sig = mle_sigma(studies, mu.mu_x, mu.mu_y);
  const RhoProfile profile(studies, mu.mu_x, mu.mu_y, sig.sigma_x,
                           sig.sigma_y);
  return lrt_ci_of(profile, rho_hat, loglik_at_max, alpha);
}

namespace detail {

template <class F>
RhoEstimate maximize_profile(F&& profile, std::size_t k) {
  RhoEstimate est;
  est.single_study = (k == 1);

  constexpr double step =
      (kInitGridHi - kInitGridLo) / (kInitGridPoints - 1);
  double best_rho = 0.0, best_val = kNegInf;
  bool any_finite = false;
  for (int i = 0; i < kInitGridPoints; ++i) {
    const double rho = kInitGridLo + step * i;
    const double v = profile(rho);
    if (std::isfinite(v) && v > best_val) {
      best_val = v;
      best_rho = rho;
      any_finite = true;
    }
  }
  if (!any_finite)
    throw NumericalError(
        "estimate_rho: log-likelihood non-finite across the entire "
        "initialization grid");
  est.grid_start = best_rho;

  const double lo = std::max(kRhoLo, best_rho - step);
  const double hi = std::min(kRhoHi, best_rho + step);
  const auto br = brent_maximize(profile, lo, hi);
  est.converged = br.converged;
  if (br.fx >= best_val) {
    est.rho_hat = br.x;
    est.loglik_at_max = br.fx;
  } else {
    est.rho_hat = best_rho;
    est.loglik_at_max = best_val;
  }

  // Gradient polish: Brent localizes a flat maximum only to O(sqrt(eps)).
  // Bisecting the symmetric-difference slope pins it near 1e-10, which makes
  // exactly mirrored datasets produce exactly mirrored estimates.
  constexpr double delta = 1e-6;
  const double blo = std::max({lo, est.rho_hat - 8e-6, kRhoLo + delta});
  const double bhi = std::min({hi, est.rho_hat + 8e-6, kRhoHi - delta});
  if (blo < bhi) {
    const auto slope = [&](double rho) {
      return profile(rho + delta) - profile(rho - delta);
    };
    if (slope(blo) > 0.0 && slope(bhi) < 0.0) {
      double a2 = blo, b2 = bhi;
      for (int i = 0; i < 18; ++i) {
        const double mid = 0.5 * (a2 + b2);
        if (slope(mid) >= 0.0)
          a2 = mid;
        else
          b2 = mid;
      }
      const double polished = 0.5 * (a2 + b2);
      const double fp = profile(polished);
      if (fp >= est.loglik_at_max -
                    1e-9 * (1.0 + std::abs(est.loglik_at_max))) {
        est.rho_hat = polished;
        est.loglik_at_max = fp;
      }
    }
  }

  est.at_boundary = (est.rho_hat <= kRhoLo + 10.0 * kRhoBoundEpsilon) ||
                    (est.rho_hat >= kRhoHi - 10.0 * kRhoBoundEpsilon);
  return est;
}

}  // namespace detail

// Point estimate of rho: closed-form mu/sigma plug-in, grid scan, then
// Brent on the bracket around the best grid point.
inline RhoEstimate estimate_rho(std::span<const StudySummary> studies) {
  if (studies.empty()) throw ValidationError("estimate_rho: no studies");
  std::size_t idx = 0;
  for (const auto& s : studies) {
    try {
      s.validate();
    } catch (const ValidationError& e) {
      throw ValidationError("study " + std::to_string(idx) + ": " + e.what());
    }
    ++idx;
  }
  const auto mu = mle_mu(studies);
  const auto sig = mle_sigma(studies, mu.mu_x, mu.mu_y);
  const RhoProfile profile(studies, mu.mu_x, mu.mu_y, sig.sigma_x,
                           sig.sigma_y);
  return detail::maximize_profile(profile, studies.size());
}

struct EstimateResult {
  PooledParams params;  // params.rho == rho.rho_hat
  RhoEstimate rho;
};

// One-call pipeline: closed-form mu/sigma, rho maximizer, observed-information
// SE, Wald and LRT intervals. With a single study (or rho_hat at the
// boundary) the SE and Wald CI are absent; the LRT CI is still computed
// except in the single-study case.
inline EstimateResult estimate_full(std::span<const StudySummary> studies,
                                    double alpha = 0.05) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw ValidationError("estimate_full: alpha must lie in (0,1)");
  RhoEstimate est = estimate_rho(studies);
  const auto mu = mle_mu(studies);
  const auto sig = mle_sigma(studies, mu.mu_x, mu.mu_y);
  const RhoProfile profile(studies, mu.mu_x, mu.mu_y, sig.sigma_x,
                           sig.sigma_y);

  if (!est.single_study) {
    if (!est.at_boundary) {
      if (const auto info = observed_information_of(profile, est.rho_hat)) {
        est.se = 1.0 / std::sqrt(*info);
        est.ci_wald = wald_ci(est.rho_hat, *est.se, alpha);
      }
    }
    est.ci_lrt = lrt_ci_of(profile, est.rho_hat, est.loglik_at_max, alpha);
  }

  EstimateResult result;
  result.params = {mu.mu_x, mu.mu_y, sig.sigma_x, sig.sigma_y, est.rho_hat};
  result.rho = est;
  return result;
}

}  // namespace summcorr

#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>

#include <gsl/gsl_cdf.h>
#include <gsl/gsl_errno.h>
#include <gsl/gsl_sf_bessel.h>

#include "summcorr/errors.hpp"

namespace summcorr {

// GSL's default error handler aborts the process; switch to status codes once.
inline void disable_gsl_abort() {
  static const bool done = [] {
    gsl_set_error_handler_off();
    return true;
  }();
  (void)done;
}

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Above this order the Olver leading term is used unconditionally: its
// absolute log error is bounded by ~1/(8*nu) <= 2.5e-4 there, negligible for
// likelihood comparisons, while scaled direct evaluation starts to underflow.
inline constexpr double kOlverNuThreshold = 500.0;

// The power series needs O(x) terms; beyond this the scaled evaluation wins.
inline constexpr double kBesselSeriesMaxX = 30.0;

enum class BesselMethod { direct, olver };

struct BesselEvalReport {
  double log_value;
  BesselMethod method_used;
  double order;
  double argument;
};

inline double log_gamma(double a) {
  if (!(a > 0.0))
    throw std::domain_error("log_gamma: argument must be positive, got " +
                            std::to_string(a));
  return std::lgamma(a);
}

// ln Gamma_2(a) = (1/2) ln pi + ln Gamma(a) + ln Gamma(a - 1/2)
inline double log_multigamma2(double a) {
  if (!(a > 0.5))
    throw std::domain_error("log_multigamma2: argument must exceed 1/2, got " +
                            std::to_string(a));
  return 0.5 * std::log(std::numbers::pi) + std::lgamma(a) +
         std::lgamma(a - 0.5);
}

namespace detail {

// Ascending series sum(k) (x^2/4)^k / (k! (nu+1)...(nu+k)) relative to the
// leading term; safe in linear domain for x <= kBesselSeriesMaxX at any order.
inline double log_bessel_i_series(double nu, double x, double lgamma_nu1) {
  const double q = 0.25 * x * x;
  double sum = 1.0;
  double term = 1.0;
  for (int k = 0; k < 1200; ++k) {
    term *= q / ((k + 1) * (nu + k + 1));
    sum += term;
    if (term < sum * 1e-17) break;
  }
  return nu * std::log(0.5 * x) - lgamma_nu1 + std::log(sum);
}

// Exponentially scaled uniform evaluation via GSL: ln I = x + ln(e^-x I).
// Returns -inf when the scaled value leaves the normal range (caller falls
// back to the series): a denormal result carries only a few mantissa bits,
// and its log would silently be wrong by up to O(1). Order zero goes through
// the dedicated kernel: Inu_scaled silently produces NaN at nu = 0 for x
// beyond ~250.
inline double log_bessel_i_scaled(double nu, double x) {
  disable_gsl_abort();
  gsl_sf_result r;
  const int status = nu == 0.0 ? gsl_sf_bessel_I0_scaled_e(x, &r)
                               : gsl_sf_bessel_Inu_scaled_e(nu, x, &r);
  if (status != GSL_SUCCESS ||
      !(r.val >= std::numeric_limits<double>::min()) ||
      !std::isfinite(r.val))
    return kNegInf;
  return x + std::log(r.val);
}

inline double log_bessel_i_direct_impl(double nu, double x, double lgamma_nu1) {
  if (x == 0.0) return nu == 0.0 ? 0.0 : kNegInf;
  if (x <= kBesselSeriesMaxX) return log_bessel_i_series(nu, x, lgamma_nu1);
  const double scaled = log_bessel_i_scaled(nu, x);
  if (std::isfinite(scaled)) return scaled;
  // e^{-x} I_nu(x) underflows only when nu >> x, where the series is safe
  // (its linear-domain sum is below e^{x^2/(4 nu)}) and converges in O(x)
  // terms. Falling through here keeps ln I continuous in x instead of
  // jumping to the Olver approximation at the underflow boundary.
  if (x * x < 2000.0 * (nu + 1.0)) return log_bessel_i_series(nu, x, lgamma_nu1);
  return kNegInf;
}

}  // namespace detail

// ln I_nu(x) by power series (small x) or scaled evaluation (large x).
// Returns -inf as a sentinel where the scaled value is unrepresentable.
inline double log_bessel_i_direct(double nu, double x) {
  if (!(nu >= 0.0) || !(x >= 0.0))
    throw std::domain_error("log_bessel_i_direct: requires nu >= 0 and x >= 0");
  return detail::log_bessel_i_direct_impl(nu, x, std::lgamma(nu + 1.0));
}

// Leading term of the uniform large-order expansion:
//   kappa + nu ln(x / (nu + kappa)) - (1/2) ln(2 pi kappa),
//   kappa = sqrt(x^2 + nu^2).
inline double log_bessel_i_olver(double nu, double x) {
  if (!(nu > 0.0) || !(x > 0.0))
    throw std::domain_error("log_bessel_i_olver: requires nu > 0 and x > 0");
  const double kappa = std::hypot(x, nu);
  return kappa + nu * std::log(x / (nu + kappa)) -
         0.5 * std::log(2.0 * std::numbers::pi * kappa);
}

namespace detail {

inline BesselEvalReport log_bessel_i_impl(double nu, double x,
                                          double lgamma_nu1) {
  if (x == 0.0)
    return {nu == 0.0 ? 0.0 : kNegInf, BesselMethod::direct, nu, x};
  if (nu > kOlverNuThreshold)
    return {log_bessel_i_olver(nu, x), BesselMethod::olver, nu, x};
  const double direct = log_bessel_i_direct_impl(nu, x, lgamma_nu1);
  if (std::isfinite(direct))
    return {direct, BesselMethod::direct, nu, x};
  if (nu > 0.0)
    return {log_bessel_i_olver(nu, x), BesselMethod::olver, nu, x};
  return {direct, BesselMethod::direct, nu, x};
}

}  // namespace detail

// Direct evaluation with automatic Olver fallback; log_value is finite for
// all nu >= 0, x >= 0 except the exact limit I_nu(0) = 0 for nu > 0.
inline BesselEvalReport log_bessel_i(double nu, double x) {
  if (!(nu >= 0.0) || !(x >= 0.0))
    throw std::domain_error("log_bessel_i: requires nu >= 0 and x >= 0");
  return detail::log_bessel_i_impl(nu, x, std::lgamma(nu + 1.0));
}

inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw std::domain_error("normal_quantile: p must lie in (0,1), got " +
                            std::to_string(p));
  disable_gsl_abort();
  return gsl_cdf_ugaussian_Pinv(p);
}

// Upper-alpha critical value of chi-square with one degree of freedom,
// wired as the square of the matching normal quantile.
inline double chi2_quantile_df1(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::domain_error("chi2_quantile_df1: alpha must lie in (0,1)");
  const double z = normal_quantile(1.0 - alpha / 2.0);
  return z * z;
}

inline double student_t_cdf(double t, double df) {
  if (!(df > 0.0))
    throw std::domain_error("student_t_cdf: df must be positive");
  disable_gsl_abort();
  return gsl_cdf_tdist_P(t, df);
}

struct TTestResult {
  double t_stat;
  double p_value;  // lower tail: alternative mean < 0
};

inline TTestResult one_sided_t_test_mean_lt_zero(std::span<const double> samples) {
  const std::size_t m = samples.size();
  if (m < 2)
    throw ValidationError("t-test requires at least 2 samples, got " +
                          std::to_string(m));
  double mean = 0.0;
  for (double v : samples) mean += v;
  mean /= static_cast<double>(m);
  double ss = 0.0;
  for (double v : samples) {
    const double d = v - mean;
    ss += d * d;
  }
  const double var = ss / static_cast<double>(m - 1);
  if (!(var > 0.0))
    throw DegenerateInputError("t-test: sample variance is zero");
  const double t = mean / std::sqrt(var / static_cast<double>(m));
  return {t, student_t_cdf(t, static_cast<double>(m - 1))};
}

}  // namespace summcorr

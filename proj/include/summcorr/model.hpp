#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "summcorr/errors.hpp"
#include "summcorr/quadrature.hpp"
#include "summcorr/special_functions.hpp"

namespace summcorr {

// One study's marginal summary: sample size, means, unbiased sample
// variances. No cross-variable statistic is ever observed.
struct StudySummary {
  int n = 0;
  double mean_x = 0.0;
  double mean_y = 0.0;
  double var_x = 0.0;
  double var_y = 0.0;

  // n >= 3 keeps the latent-correlation integrand integrable and the 2x2
  // Wishart density proper; variances must be strictly positive.
  void validate() const {
    if (n < 3)
      throw ValidationError("study requires n >= 3, got n = " +
                            std::to_string(n));
    if (!(var_x > 0.0) || !std::isfinite(var_x))
      throw ValidationError("study requires var_x > 0");
    if (!(var_y > 0.0) || !std::isfinite(var_y))
      throw ValidationError("study requires var_y > 0");
    if (!std::isfinite(mean_x) || !std::isfinite(mean_y))
      throw ValidationError("study means must be finite");
  }
};

// Population parameter vector (mu_X, mu_Y, sigma_X, sigma_Y, rho).
struct PooledParams {
  double mu_x = 0.0;
  double mu_y = 0.0;
  double sigma_x = 1.0;
  double sigma_y = 1.0;
  double rho = 0.0;

  void validate() const {
    if (!(sigma_x > 0.0) || !(sigma_y > 0.0))
      throw ValidationError("sigma_x and sigma_y must be positive");
    if (!(std::abs(rho) < 1.0))
      throw ValidationError("rho must lie in (-1, 1)");
    if (!std::isfinite(mu_x) || !std::isfinite(mu_y))
      throw ValidationError("mu_x and mu_y must be finite");
  }
};

// Shape exponent a = (n-4)/2 and signed tilt b of the latent-correlation
// integral; sign(b) = sign(rho).
struct TiltCoefficients {
  double a = 0.0;
  double b = 0.0;
};

struct MeanEstimates {
  double mu_x;
  double mu_y;
};

struct SigmaEstimates {
  double sigma_x;
  double sigma_y;
};

// Sample-size-weighted means across studies.
inline MeanEstimates mle_mu(std::span<const StudySummary> studies) {
  if (studies.empty()) throw ValidationError("mle_mu: no studies");
  double sx = 0.0, sy = 0.0, sn = 0.0;
  for (const auto& s : studies) {
    sx += static_cast<double>(s.n) * s.mean_x;
    sy += static_cast<double>(s.n) * s.mean_y;
    sn += static_cast<double>(s.n);
  }
  return {sx / sn, sy / sn};
}

// sigma^2 = sum[n (mean - mu)^2 + (n-1) s^2] / sum n, per coordinate.
inline SigmaEstimates mle_sigma(std::span<const StudySummary> studies,
                                double mu_x, double mu_y) {
  if (studies.empty()) throw ValidationError("mle_sigma: no studies");
  double ax = 0.0, ay = 0.0, sn = 0.0;
  for (const auto& s : studies) {
    const double n = static_cast<double>(s.n);
    const double dx = s.mean_x - mu_x;
    const double dy = s.mean_y - mu_y;
    ax += n * dx * dx + (n - 1.0) * s.var_x;
    ay += n * dy * dy + (n - 1.0) * s.var_y;
    sn += n;
  }
  return {std::sqrt(ax / sn), std::sqrt(ay / sn)};
}

// a = (n-4)/2, b = (n-1) rho s_X s_Y / ((1-rho^2) sigma_X sigma_Y).
inline TiltCoefficients tilt_coefficients(const StudySummary& study,
                                          const PooledParams& params) {
  const double n = static_cast<double>(study.n);
  const double s_prod = std::sqrt(study.var_x * study.var_y);
  const double one_minus_rho2 = (1.0 - params.rho) * (1.0 + params.rho);
  const double b = (n - 1.0) * params.rho * s_prod /
                   (one_minus_rho2 * params.sigma_x * params.sigma_y);
  return {0.5 * (n - 4.0), b};
}

// Tilt below which the Bessel product is numerically 0 * inf; the analytic
// b -> 0 Beta limit is used instead.
inline constexpr double kTiltZeroThreshold = 1e-12;

namespace detail {

// lg_a1 = lgamma(a+1), lg_nu1 = lgamma(a+3/2); the hot path caches both.
inline double log_shape_integral_impl(double a, double b, double lg_a1,
                                      double lg_nu1) {
  constexpr double half_log_pi = 0.57236494292470008707;  // ln(sqrt(pi))
  const double ab = std::abs(b);
  if (ab < kTiltZeroThreshold) return half_log_pi + lg_a1 - lg_nu1;
  const double nu = a + 0.5;
  const double log_bessel = log_bessel_i_impl(nu, ab, lg_nu1).log_value;
  return half_log_pi + nu * (std::numbers::ln2 - std::log(ab)) + lg_a1 +
         log_bessel;
}

}  // namespace detail

// ln of I = integral over (-1,1) of (1-r^2)^a e^{b r} dr, via the Bessel
// closed form  sqrt(pi) (2/|b|)^{a+1/2} Gamma(a+1) I_{a+1/2}(|b|).
inline double log_shape_integral(const TiltCoefficients& t) {
  if (!(t.a >= -0.5))
    throw std::domain_error("log_shape_integral: requires a >= -1/2");
  return detail::log_shape_integral_impl(t.a, t.b, std::lgamma(t.a + 1.0),
                                         std::lgamma(t.a + 1.5));
}

// Quadrature oracle for the same integral. Substituting r = cos(theta)
// removes the endpoint singularity (a in [-1/2, 0)):
//   I = integral over (0,pi) of e^{b cos(theta)} sin(theta)^{2a+1} d(theta).
// The log-integrand's maximum over a scan grid is subtracted before
// exponentiating, and integration is restricted to the window where the
// integrand exceeds e^-90 of its peak (the discarded tails are below any
// requested tolerance). Large (a, b) make the integrand doubly tiny and
// narrow; this keeps the quadrature conditioned for them.
inline double log_shape_integral_quadrature(const TiltCoefficients& t) {
  if (!(t.a >= -0.5))
    throw std::domain_error("log_shape_integral_quadrature: requires a >= -1/2");
  const double ab = std::abs(t.b);
  const double power = 2.0 * t.a + 1.0;
  const auto log_integrand = [&](double theta) {
    const double tilt = ab * (std::cos(theta) - 1.0);
    return power == 0.0 ? tilt : tilt + power * std::log(std::sin(theta));
  };

  constexpr int kScan = 512;
  double peak = kNegInf;
  std::array<double, kScan> scan{};
  for (int i = 0; i < kScan; ++i) {
    const double theta = std::numbers::pi * (i + 0.5) / kScan;
    scan[i] = log_integrand(theta);
    peak = std::max(peak, scan[i]);
  }
  int lo_cell = 0, hi_cell = kScan - 1;
  while (lo_cell < kScan - 1 && scan[lo_cell] < peak - 90.0) ++lo_cell;
  while (hi_cell > 0 && scan[hi_cell] < peak - 90.0) --hi_cell;
  const double theta_lo = std::numbers::pi * std::max(0, lo_cell - 1) / kScan;
  const double theta_hi =
      std::numbers::pi * std::min(kScan, hi_cell + 2) / kScan;

  const auto integrand = [&](double theta) {
    const double g = log_integrand(theta);
    return std::isfinite(g) ? std::exp(g - peak) : 0.0;
  };
  const auto q = integrate_adaptive(integrand, theta_lo, theta_hi, 1e-12);
  if (!q.converged || !(q.value > 0.0))
    throw NumericalError(
        "log_shape_integral_quadrature: adaptive quadrature did not converge "
        "(a=" + std::to_string(t.a) + ", b=" + std::to_string(t.b) + ")");
  return ab + peak + std::log(q.value);
}

// Full joint log density of (mean_x, mean_y, s_X, s_Y, r) for one study at a
// given latent sample correlation r. Oracle integrand only; the estimation
// path never evaluates it.
inline double log_full_joint_pdf(const StudySummary& study, double r,
                                 const PooledParams& params) {
  if (!(std::abs(r) < 1.0))
    throw std::domain_error("log_full_joint_pdf: requires |r| < 1");
  study.validate();
  params.validate();
  const double n = static_cast<double>(study.n);
  const double sx2 = study.var_x, sy2 = study.var_y;
  const double sigx = params.sigma_x, sigy = params.sigma_y;
  const double rho = params.rho;
  const double one_minus_rho2 = (1.0 - rho) * (1.0 + rho);
  const double log_1mr2 = std::log1p(-rho * rho);
  const double dx = study.mean_x - params.mu_x;
  const double dy = study.mean_y - params.mu_y;

  const double mean_quad = dx * dx / (sigx * sigx) -
                           2.0 * rho * dx * dy / (sigx * sigy) +
                           dy * dy / (sigy * sigy);
  const double mean_part = std::log(n) - std::log(2.0 * std::numbers::pi) -
                           std::log(sigx) - std::log(sigy) - 0.5 * log_1mr2 -
                           0.5 * n * mean_quad / one_minus_rho2;

  const double s_cross = std::sqrt(sx2 * sy2);
  const double wish_quad = sx2 / (sigx * sigx) + sy2 / (sigy * sigy) -
                           2.0 * rho * r * s_cross / (sigx * sigy);
  const double a = 0.5 * (n - 4.0);
  const double wish_part =
      a * (std::log(sx2) + std::log(sy2) + std::log1p(-r * r)) -
      0.5 * (n - 1.0) * wish_quad / one_minus_rho2 -
      (n - 1.0) * (std::numbers::ln2 + std::log(sigx) + std::log(sigy) +
                   0.5 * log_1mr2 - std::log(n - 1.0)) -
      log_multigamma2(0.5 * (n - 1.0));

  return mean_part + wish_part;
}

namespace detail {

// Per-study quantities that do not depend on rho, prepared once so that
// profile evaluations cost a handful of flops plus one Bessel call.
struct PreparedStudy {
  double n;
  double a;            // (n-4)/2
  double lg_a1;        // lgamma(a+1)
  double lg_nu1;       // lgamma(a+3/2)
  double mean_qxx;     // n dx^2 / sigx^2
  double mean_qxy;     // n dx dy / (sigx sigy)
  double mean_qyy;     // n dy^2 / sigy^2
  double wish_quad;    // (n-1)(sx^2/sigx^2 + sy^2/sigy^2)
  double tilt_coef;    // (n-1) s_x s_y / (sigx sigy)
  double const_part;   // everything independent of rho
};

inline PreparedStudy prepare_study(const StudySummary& s, double mu_x,
                                   double mu_y, double sigma_x,
                                   double sigma_y) {
  const double n = static_cast<double>(s.n);
  const double a = 0.5 * (n - 4.0);
  const double dx = s.mean_x - mu_x;
  const double dy = s.mean_y - mu_y;
  PreparedStudy p;
  p.n = n;
  p.a = a;
  p.lg_a1 = std::lgamma(a + 1.0);
  p.lg_nu1 = std::lgamma(a + 1.5);
  p.mean_qxx = n * dx * dx / (sigma_x * sigma_x);
  p.mean_qxy = n * dx * dy / (sigma_x * sigma_y);
  p.mean_qyy = n * dy * dy / (sigma_y * sigma_y);
  p.wish_quad = (n - 1.0) * (s.var_x / (sigma_x * sigma_x) +
                             s.var_y / (sigma_y * sigma_y));
  p.tilt_coef =
      (n - 1.0) * std::sqrt(s.var_x * s.var_y) / (sigma_x * sigma_y);
  p.const_part = std::log(n) - std::log(2.0 * std::numbers::pi) -
                 std::log(sigma_x) - std::log(sigma_y) +
                 a * (std::log(s.var_x) + std::log(s.var_y)) -
                 (n - 1.0) * (std::numbers::ln2 + std::log(sigma_x) +
                              std::log(sigma_y) - std::log(n - 1.0)) -
                 log_multigamma2(0.5 * (n - 1.0));
  return p;
}

inline double prepared_loglik(const PreparedStudy& p, double rho,
                              double log_1mr2, double inv_1mr2) {
  const double mean_quad = p.mean_qxx - 2.0 * rho * p.mean_qxy + p.mean_qyy;
  const double b = p.tilt_coef * rho * inv_1mr2;
  return p.const_part - 0.5 * p.n * log_1mr2 -
         0.5 * inv_1mr2 * (mean_quad + p.wish_quad) +
         log_shape_integral_impl(p.a, b, p.lg_a1, p.lg_nu1);
}

}  // namespace detail

// Integrated log density of one study's observed summary (latent r
// integrated out), evaluated at arbitrary parameters.
inline double log_integrated_likelihood_study(const StudySummary& study,
                                              const PooledParams& params) {
  study.validate();
  params.validate();
  const auto p = detail::prepare_study(study, params.mu_x, params.mu_y,
                                       params.sigma_x, params.sigma_y);
  const double rho = params.rho;
  const double one_minus_rho2 = (1.0 - rho) * (1.0 + rho);
  return detail::prepared_loglik(p, rho, std::log(one_minus_rho2),
                                 1.0 / one_minus_rho2);
}

inline double log_integrated_likelihood(std::span<const StudySummary> studies,
                                        const PooledParams& params) {
  if (studies.empty())
    throw ValidationError("log_integrated_likelihood: no studies");
  double total = 0.0;
  for (const auto& s : studies)
    total += log_integrated_likelihood_study(s, params);
  return total;
}

// Profile of the integrated log-likelihood in rho at fixed (mu, sigma).
// Prepares per-study constants once; the estimator's inner loop calls this.
class RhoProfile {
 public:
  RhoProfile(std::span<const StudySummary> studies, double mu_x, double mu_y,
             double sigma_x, double sigma_y) {
    if (studies.empty()) throw ValidationError("RhoProfile: no studies");
    prepared_.reserve(studies.size());
    for (const auto& s : studies) {
      s.validate();
      prepared_.push_back(
          detail::prepare_study(s, mu_x, mu_y, sigma_x, sigma_y));
    }
  }

  double operator()(double rho) const {
    const double one_minus_rho2 = (1.0 - rho) * (1.0 + rho);
    if (!(one_minus_rho2 > 0.0))
      throw std::domain_error("RhoProfile: rho must lie in (-1, 1)");
    const double log_1mr2 = std::log(one_minus_rho2);
    const double inv_1mr2 = 1.0 / one_minus_rho2;
    double total = 0.0;
    for (const auto& p : prepared_)
      total += detail::prepared_loglik(p, rho, log_1mr2, inv_1mr2);
    return total;
  }

  std::size_t study_count() const { return prepared_.size(); }

 private:
  std::vector<detail::PreparedStudy> prepared_;
};

}  // namespace summcorr

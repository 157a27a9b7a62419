#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <vector>

#include "summcorr/estimator.hpp"
#include "summcorr/model.hpp"
#include "summcorr/quadrature.hpp"
#include "summcorr/rng.hpp"
#include "summcorr/simulation.hpp"

using namespace summcorr;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

std::vector<StudySummary> seeded_studies(int k, double rho, int n_min,
                                         int n_max, std::uint64_t seed) {
  Rng rng(seed);
  const PooledParams truth{0.0, 0.0, 1.0, 1.0, rho};
  std::vector<StudySummary> studies;
  for (int i = 0; i < k; ++i)
    studies.push_back(generate_study(rng.uniform_int(n_min, n_max), truth, rng));
  return studies;
}

// Integral over r of the full joint density, in the log domain with the
// running maximum subtracted.
double log_integrated_by_quadrature(const StudySummary& s,
                                    const PooledParams& p) {
  double peak = -std::numeric_limits<double>::infinity();
  for (int i = 1; i < 400; ++i) {
    const double r = -1.0 + 2.0 * i / 400.0;
    peak = std::max(peak, log_full_joint_pdf(s, r, p));
  }
  const auto q = integrate_adaptive(
      [&](double r) { return std::exp(log_full_joint_pdf(s, r, p) - peak); },
      -1.0 + 1e-12, 1.0 - 1e-12, 1e-11);
  REQUIRE(q.converged);
  return peak + std::log(q.value);
}

}  // namespace

TEST_CASE("StudySummary validation") {
  CHECK_THROWS_AS((StudySummary{2, 0, 0, 1, 1}.validate()), ValidationError);
  CHECK_THROWS_AS((StudySummary{10, 0, 0, 0.0, 1}.validate()), ValidationError);
  CHECK_THROWS_AS((StudySummary{10, 0, 0, 1, -1}.validate()), ValidationError);
  CHECK_NOTHROW((StudySummary{3, 0, 0, 1, 1}.validate()));
}

TEST_CASE("mle_mu: weighted means") {
  const std::vector<StudySummary> studies{{3, 0.0, 0.0, 1.0, 1.0},
                                          {1, 4.0, 4.0, 1.0, 1.0}};
  const auto mu = mle_mu(studies);
  CHECK_THAT(mu.mu_x, WithinAbs(1.0, 1e-15));
  CHECK_THAT(mu.mu_y, WithinAbs(1.0, 1e-15));

  const std::vector<StudySummary> one{{7, 2.5, -1.25, 1.0, 1.0}};
  const auto single = mle_mu(one);
  CHECK(single.mu_x == 2.5);
  CHECK(single.mu_y == -1.25);

  CHECK_THROWS_AS(mle_mu({}), ValidationError);
}

TEST_CASE("mle_mu: Monte Carlo sanity at mu = 0") {
  const auto studies = seeded_studies(50, 0.4, 100, 200, 91);
  const auto mu = mle_mu(studies);
  double total_n = 0.0;
  for (const auto& s : studies) total_n += s.n;
  const double bound = 4.0 / std::sqrt(total_n);
  CHECK(std::abs(mu.mu_x) < bound);
  CHECK(std::abs(mu.mu_y) < bound);
}

TEST_CASE("mle_sigma: closed-form cases") {
  const std::vector<StudySummary> one{{10, 1.5, 1.5, 1.0, 1.0}};
  const auto s1 = mle_sigma(one, 1.5, 1.5);
  CHECK_THAT(s1.sigma_x, WithinRel(std::sqrt(9.0 / 10.0), 1e-15));

  // Purely between-study variance: two point-mass studies at +-1.
  const std::vector<StudySummary> two{{2, 1.0, 1.0, 0.0, 0.0},
                                      {2, -1.0, -1.0, 0.0, 0.0}};
  const auto s2 = mle_sigma(two, 0.0, 0.0);
  CHECK_THAT(s2.sigma_x, WithinAbs(1.0, 1e-15));
  CHECK_THAT(s2.sigma_y, WithinAbs(1.0, 1e-15));

  const auto studies = seeded_studies(50, 0.4, 100, 200, 92);
  const auto mu = mle_mu(studies);
  const auto sig = mle_sigma(studies, mu.mu_x, mu.mu_y);
  CHECK(sig.sigma_x > 0.95);
  CHECK(sig.sigma_x < 1.05);
  CHECK(sig.sigma_y > 0.95);
  CHECK(sig.sigma_y < 1.05);
}

TEST_CASE("tilt_coefficients") {
  const PooledParams rho0{0.0, 0.0, 1.0, 1.0, 0.0};
  const auto t0 = tilt_coefficients({4, 0.3, -0.2, 2.0, 0.5}, rho0);
  CHECK(t0.a == 0.0);
  CHECK(t0.b == 0.0);

  const PooledParams half{0.0, 0.0, 1.0, 1.0, 0.5};
  const auto t1 = tilt_coefficients({101, 0.0, 0.0, 1.0, 1.0}, half);
  CHECK_THAT(t1.a, WithinAbs(48.5, 1e-15));
  CHECK_THAT(t1.b, WithinRel(100.0 * 0.5 / 0.75, 1e-14));

  // Large-n regime: the tilt magnitude forces the Olver path.
  const PooledParams strong{0.0, 0.0, 1.0, 1.0, 0.9};
  const auto t2 = tilt_coefficients({5000, 0.0, 0.0, 1.0, 1.0}, strong);
  CHECK_THAT(t2.b, WithinRel(4999.0 * 0.9 / 0.19, 1e-12));
  CHECK(log_bessel_i(t2.a + 0.5, std::abs(t2.b)).method_used ==
        BesselMethod::olver);

  // sign(b) = sign(rho)
  const PooledParams neg{0.0, 0.0, 1.0, 1.0, -0.5};
  CHECK(tilt_coefficients({20, 0, 0, 1, 1}, neg).b < 0.0);
}

TEST_CASE("log_shape_integral: closed-form anchors") {
  CHECK_THAT(log_shape_integral({0.0, 0.0}), WithinAbs(std::numbers::ln2, 1e-14));
  CHECK_THAT(log_shape_integral({1.0, 0.0}),
             WithinAbs(std::log(4.0 / 3.0), 1e-14));
  CHECK_THAT(log_shape_integral({-0.5, 0.0}),
             WithinAbs(std::log(std::numbers::pi), 1e-14));
  // Oracle (50-digit quadrature): integral of (1-r^2)^3 e^{2r}.
  CHECK_THAT(log_shape_integral({3.0, 2.0}),
             WithinAbs(0.12831429024514359, 1e-10));
  CHECK_THAT(log_shape_integral({0.5, 3.0}),
             WithinAbs(1.4206860319049901, 1e-10));
  CHECK_THAT(log_shape_integral({7.0, -11.25}),
             WithinAbs(2.7588968289516584, 1e-10));
  CHECK_THROWS_AS(log_shape_integral({-0.6, 0.0}), std::domain_error);
}

TEST_CASE("log_shape_integral_quadrature: anchors and the b = 0 limits") {
  CHECK_THAT(log_shape_integral_quadrature({0.0, 0.0}),
             WithinAbs(std::numbers::ln2, 1e-11));
  CHECK_THAT(log_shape_integral_quadrature({-0.5, 0.0}),
             WithinAbs(std::log(std::numbers::pi), 1e-11));
  CHECK_THAT(log_shape_integral_quadrature({3.0, 2.0}),
             WithinAbs(0.12831429024514359, 1e-10));
  CHECK_THAT(log_shape_integral_quadrature({7.0, -11.25}),
             WithinAbs(2.7588968289516584, 1e-10));
  CHECK_THAT(log_shape_integral_quadrature({48.5, 200.0 / 3.0}),
             WithinAbs(log_shape_integral({48.5, 200.0 / 3.0}), 1e-8));
}

TEST_CASE("log_shape_integral: closed form vs quadrature, randomized") {
  Rng rng(2024);
  for (int i = 0; i < 25; ++i) {
    const int n = 5 + static_cast<int>(rng.uniform01() * 195);
    const double rho = -0.95 + 1.9 * rng.uniform01();
    const StudySummary s{n, rng.uniform01(), rng.uniform01(),
                         std::exp(0.6 * (rng.uniform01() - 0.5)),
                         std::exp(0.6 * (rng.uniform01() - 0.5))};
    const PooledParams p{0.0, 0.0, 0.5 + 1.5 * rng.uniform01(),
                         0.5 + 1.5 * rng.uniform01(), rho};
    const auto t = tilt_coefficients(s, p);
    INFO("case " << i << ": a=" << t.a << " b=" << t.b);
    CHECK_THAT(log_shape_integral(t),
               WithinAbs(log_shape_integral_quadrature(t), 1e-7));
  }
}

TEST_CASE("log_shape_integral is continuous across the b -> 0 threshold") {
  const double a = 8.0;
  const double at_zero = log_shape_integral({a, 0.0});
  const double just_above = log_shape_integral({a, 2e-12});
  const double smooth = log_shape_integral({a, 1e-6});
  CHECK_THAT(just_above, WithinAbs(at_zero, 1e-12));
  CHECK_THAT(smooth, WithinAbs(at_zero, 1e-9));
}

TEST_CASE("log_full_joint_pdf: quadrature over r matches the closed form") {
  const StudySummary study{20, 0.0, 0.0, 1.0, 1.0};
  const PooledParams params{0.0, 0.0, 1.0, 1.0, 0.0};
  CHECK_THAT(log_integrated_by_quadrature(study, params),
             WithinAbs(log_integrated_likelihood_study(study, params), 1e-8));

  Rng rng(77);
  for (int i = 0; i < 5; ++i) {
    const int n = 5 + static_cast<int>(rng.uniform01() * 120);
    const auto s = generate_study(n, {0.2, -0.1, 1.3, 0.8, 0.5}, rng);
    const PooledParams p{0.2, -0.1, 1.3, 0.8, -0.9 + 1.8 * rng.uniform01()};
    INFO("case " << i << ": n=" << n << " rho=" << p.rho);
    CHECK_THAT(log_integrated_by_quadrature(s, p),
               WithinAbs(log_integrated_likelihood_study(s, p), 1e-8));
  }
}

TEST_CASE("log_full_joint_pdf: independence factorization at rho = r = 0") {
  // Independently coded product: two univariate mean densities times the
  // 2x2 Wishart density at a diagonal point.
  const auto log_mean_density = [](double xbar, double mu, double sigma,
                                   double n) {
    const double v = sigma * sigma / n;
    const double d = xbar - mu;
    return -0.5 * std::log(2.0 * std::numbers::pi * v) - 0.5 * d * d / v;
  };
  const auto log_wishart_diag = [](double sx2, double sy2, double sigx,
                                   double sigy, double n) {
    const double m = n - 1.0;
    const double log_det_s = std::log(sx2) + std::log(sy2);
    const double log_det_v =
        2.0 * (std::log(sigx) + std::log(sigy) - std::log(m));
    const double trace = m * (sx2 / (sigx * sigx) + sy2 / (sigy * sigy));
    return 0.5 * (n - 4.0) * log_det_s - 0.5 * trace -
           m * std::numbers::ln2 - 0.5 * m * log_det_v -
           log_multigamma2(0.5 * m);
  };

  const StudySummary s{17, 0.4, -0.8, 1.7, 0.6};
  const PooledParams p{0.1, -0.5, 1.2, 0.9, 0.0};
  const double n = s.n;
  const double product = log_mean_density(s.mean_x, p.mu_x, p.sigma_x, n) +
                         log_mean_density(s.mean_y, p.mu_y, p.sigma_y, n) +
                         log_wishart_diag(s.var_x, s.var_y, p.sigma_x,
                                          p.sigma_y, n);
  CHECK_THAT(log_full_joint_pdf(s, 0.0, p), WithinAbs(product, 1e-11));
}

TEST_CASE("log_full_joint_pdf: sign-flip symmetry") {
  Rng rng(31);
  for (int i = 0; i < 10; ++i) {
    const auto s = generate_study(40, {0.0, 0.0, 1.0, 1.0, 0.3}, rng);
    const double r = -0.9 + 1.8 * rng.uniform01();
    const double rho = -0.9 + 1.8 * rng.uniform01();
    const PooledParams p{0.0, 0.2, 1.0, 1.1, rho};
    StudySummary flipped = s;
    flipped.mean_y = 2.0 * p.mu_y - s.mean_y;  // negate (mean_y - mu_y)
    const PooledParams p_neg{p.mu_x, p.mu_y, p.sigma_x, p.sigma_y, -rho};
    CHECK_THAT(log_full_joint_pdf(s, r, p),
               WithinAbs(log_full_joint_pdf(flipped, -r, p_neg), 1e-11));
  }
  CHECK_THROWS_AS(
      log_full_joint_pdf({10, 0, 0, 1, 1}, 1.0, {0, 0, 1, 1, 0.0}),
      std::domain_error);
}

TEST_CASE("log_integrated_likelihood: additivity") {
  const auto studies = seeded_studies(6, 0.5, 50, 80, 5);
  const PooledParams p{0.0, 0.0, 1.0, 1.0, 0.4};
  const std::vector<StudySummary> one{studies[0]};
  CHECK(log_integrated_likelihood(one, p) ==
        log_integrated_likelihood_study(studies[0], p));

  std::vector<StudySummary> doubled = studies;
  doubled.insert(doubled.end(), studies.begin(), studies.end());
  CHECK_THAT(log_integrated_likelihood(doubled, p),
             WithinAbs(2.0 * log_integrated_likelihood(studies, p), 1e-9));
}

TEST_CASE("log_integrated_likelihood: ordering at the truth") {
  const auto studies = seeded_studies(50, 0.5, 100, 200, 17);
  const auto mu = mle_mu(studies);
  const auto sig = mle_sigma(studies, mu.mu_x, mu.mu_y);
  const PooledParams at_truth{mu.mu_x, mu.mu_y, sig.sigma_x, sig.sigma_y, 0.5};
  const PooledParams off{mu.mu_x, mu.mu_y, sig.sigma_x, sig.sigma_y, 0.8};
  CHECK(log_integrated_likelihood(studies, at_truth) >
        log_integrated_likelihood(studies, off));
}

TEST_CASE("Profile is finite on a dense rho grid") {
  const auto studies = seeded_studies(5, 0.8, 100, 200, 23);
  const auto mu = mle_mu(studies);
  const auto sig = mle_sigma(studies, mu.mu_x, mu.mu_y);
  const RhoProfile profile(studies, mu.mu_x, mu.mu_y, sig.sigma_x,
                           sig.sigma_y);
  for (int i = 0; i <= 10000; ++i) {
    const double rho = kRhoLo + (kRhoHi - kRhoLo) * i / 10000.0;
    const double v = profile(rho);
    REQUIRE(std::isfinite(v));
  }
}

TEST_CASE("RhoProfile agrees with the public likelihood") {
  const auto studies = seeded_studies(8, 0.3, 100, 150, 41);
  const auto mu = mle_mu(studies);
  const auto sig = mle_sigma(studies, mu.mu_x, mu.mu_y);
  const RhoProfile profile(studies, mu.mu_x, mu.mu_y, sig.sigma_x,
                           sig.sigma_y);
  for (double rho : {-0.95, -0.4, 0.0, 0.2, 0.7, 0.999}) {
    const PooledParams p{mu.mu_x, mu.mu_y, sig.sigma_x, sig.sigma_y, rho};
    CHECK_THAT(profile(rho),
               WithinAbs(log_integrated_likelihood(studies, p), 1e-9));
  }
}

TEST_CASE("Translation equivariance") {
  const auto studies = seeded_studies(10, 0.6, 100, 200, 59);
  const double shift = 3.7;
  std::vector<StudySummary> shifted = studies;
  for (auto& s : shifted) s.mean_x += shift;

  const auto mu0 = mle_mu(studies);
  const auto mu1 = mle_mu(shifted);
  CHECK_THAT(mu1.mu_x, WithinAbs(mu0.mu_x + shift, 1e-12));
  CHECK_THAT(mu1.mu_y, WithinAbs(mu0.mu_y, 1e-12));

  const auto sig0 = mle_sigma(studies, mu0.mu_x, mu0.mu_y);
  const auto sig1 = mle_sigma(shifted, mu1.mu_x, mu1.mu_y);
  CHECK_THAT(sig1.sigma_x, WithinAbs(sig0.sigma_x, 1e-12));
  CHECK_THAT(sig1.sigma_y, WithinAbs(sig0.sigma_y, 1e-12));

  const RhoProfile p0(studies, mu0.mu_x, mu0.mu_y, sig0.sigma_x, sig0.sigma_y);
  const RhoProfile p1(shifted, mu1.mu_x, mu1.mu_y, sig1.sigma_x, sig1.sigma_y);
  for (int i = 0; i <= 20; ++i) {
    const double rho = -0.95 + 1.9 * i / 20.0;
    CHECK_THAT(p1(rho), WithinAbs(p0(rho), 1e-10));
  }
}

TEST_CASE("Closed-form mu/sigma maximize the fixed-r joint likelihood") {
  const auto studies = seeded_studies(3, 0.5, 20, 40, 67);
  const double r_fixed = 0.2;
  const auto objective = [&](double mu_x, double mu_y, double sigma_x,
                             double sigma_y, double rho) {
    const PooledParams p{mu_x, mu_y, sigma_x, sigma_y, rho};
    double total = 0.0;
    for (const auto& s : studies)
      total += log_full_joint_pdf(s, r_fixed, p);
    return total;
  };

  // Cyclic coordinate ascent with Brent per coordinate.
  double theta[5] = {0.3, -0.3, 1.5, 0.7, 0.0};
  const double lo[5] = {-2.0, -2.0, 0.2, 0.2, -0.99};
  const double hi[5] = {2.0, 2.0, 4.0, 4.0, 0.99};
  for (int sweep = 0; sweep < 60; ++sweep) {
    for (int c = 0; c < 5; ++c) {
      const auto f = [&](double v) {
        double t[5] = {theta[0], theta[1], theta[2], theta[3], theta[4]};
        t[c] = v;
        return objective(t[0], t[1], t[2], t[3], t[4]);
      };
      theta[c] = brent_maximize(f, lo[c], hi[c], 1e-10).x;
    }
  }

  const auto mu = mle_mu(studies);
  const auto sig = mle_sigma(studies, mu.mu_x, mu.mu_y);
  CHECK_THAT(theta[0], WithinAbs(mu.mu_x, 1e-5 * std::max(1.0, std::abs(mu.mu_x))));
  CHECK_THAT(theta[1], WithinAbs(mu.mu_y, 1e-5 * std::max(1.0, std::abs(mu.mu_y))));
  CHECK_THAT(theta[2], WithinRel(sig.sigma_x, 1e-5));
  CHECK_THAT(theta[3], WithinRel(sig.sigma_y, 1e-5));
}

#pragma once

#include <cmath>
#include <span>
#include <string>

#include "summcorr/errors.hpp"
#include "summcorr/model.hpp"

namespace summcorr {

// Unweighted Pearson correlation of the study-level mean pairs.
inline double naive_pearson(std::span<const StudySummary> studies) {
  if (studies.size() < 2)
    throw ValidationError("naive_pearson: requires at least 2 studies");
  const double k = static_cast<double>(studies.size());
  double mx = 0.0, my = 0.0;
  for (const auto& s : studies) {
    mx += s.mean_x;
    my += s.mean_y;
  }
  mx /= k;
  my /= k;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (const auto& s : studies) {
    const double dx = s.mean_x - mx;
    const double dy = s.mean_y - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  const double denom = std::sqrt(sxx) * std::sqrt(syy);
  if (!(denom > 0.0))
    throw DegenerateInputError(
        "naive_pearson: zero variance in the study means");
  return sxy / denom;
}

// Sample-size-weighted Pearson correlation of the mean pairs, centered at
// the pooled MLE means.
inline double weighted_pearson(std::span<const StudySummary> studies) {
  if (studies.size() < 2)
    throw ValidationError("weighted_pearson: requires at least 2 studies");
  const auto mu = mle_mu(studies);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (const auto& s : studies) {
    const double n = static_cast<double>(s.n);
    const double dx = s.mean_x - mu.mu_x;
    const double dy = s.mean_y - mu.mu_y;
    sxy += n * dx * dy;
    sxx += n * dx * dx;
    syy += n * dy * dy;
  }
  const double denom = std::sqrt(sxx) * std::sqrt(syy);
  if (!(denom > 0.0))
    throw DegenerateInputError(
        "weighted_pearson: zero variance in the study means");
  return sxy / denom;
}

// delta = |rho_hat - rho_true| - |rho_tilde - rho_true|; negative values
// favor the likelihood estimator over the baseline.
inline double delta_metric(double rho_hat, double rho_tilde, double rho_true) {
  return std::abs(rho_hat - rho_true) - std::abs(rho_tilde - rho_true);
}

}  // namespace summcorr

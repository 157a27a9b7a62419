#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

namespace summcorr {

struct QuadratureResult {
  double value;
  double error_estimate;
  bool converged;
  int intervals;
};

namespace detail {

// Gauss 7 / Kronrod 15 pair on [-1, 1] (QUADPACK dqk15 constants).
inline constexpr double kKronrodNodes[8] = {
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
};
inline constexpr double kKronrodWeights[8] = {
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
};
// Gauss weights for Kronrod node indices 1, 3, 5, 7.
inline constexpr double kGaussWeights[4] = {
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
};

struct Interval {
  double a, b;
  double value;
  double error;
};

template <class F>
Interval gauss_kronrod_15(F&& f, double a, double b) {
  const double c = 0.5 * (a + b);
  const double h = 0.5 * (b - a);
  const double fc = f(c);
  double resk = kKronrodWeights[7] * fc;
  double resg = kGaussWeights[3] * fc;
  for (int j = 0; j < 7; ++j) {
    const double dx = h * kKronrodNodes[j];
    const double f1 = f(c - dx);
    const double f2 = f(c + dx);
    resk += kKronrodWeights[j] * (f1 + f2);
    if (j % 2 == 1) resg += kGaussWeights[j / 2] * (f1 + f2);
  }
  return {a, b, resk * h, std::abs(resk - resg) * h};
}

}  // namespace detail

// Globally adaptive bisection: repeatedly split the interval with the largest
// Gauss/Kronrod discrepancy until the summed estimate meets the tolerance.
template <class F>
QuadratureResult integrate_adaptive(F&& f, double a, double b,
                                    double rel_tol = 1e-11,
                                    double abs_tol = 0.0,
                                    int max_intervals = 4000) {
  std::vector<detail::Interval> heap;
  heap.reserve(64);
  const auto by_error = [](const detail::Interval& x, const detail::Interval& y) {
    return x.error < y.error;
  };
  heap.push_back(detail::gauss_kronrod_15(f, a, b));

  // Totals are re-summed from scratch: incremental updates lose the small
  // child contributions to absorption when an early interval is huge.
  const auto totals = [&heap] {
    double value = 0.0, error = 0.0;
    for (const auto& iv : heap) {
      value += iv.value;
      error += iv.error;
    }
    return std::pair{value, error};
  };

  auto [total_value, total_error] = totals();
  while (static_cast<int>(heap.size()) < max_intervals) {
    const double tol = std::max(abs_tol, rel_tol * std::abs(total_value));
    if (total_error <= tol) break;
    std::pop_heap(heap.begin(), heap.end(), by_error);
    const detail::Interval worst = heap.back();
    heap.pop_back();
    const double mid = 0.5 * (worst.a + worst.b);
    const auto left = detail::gauss_kronrod_15(f, worst.a, mid);
    const auto right = detail::gauss_kronrod_15(f, mid, worst.b);
    heap.push_back(left);
    std::push_heap(heap.begin(), heap.end(), by_error);
    heap.push_back(right);
    std::push_heap(heap.begin(), heap.end(), by_error);
    std::tie(total_value, total_error) = totals();
  }

  const double tol = std::max(abs_tol, rel_tol * std::abs(total_value));
  return {total_value, total_error, total_error <= tol,
          static_cast<int>(heap.size())};
}

}  // namespace summcorr

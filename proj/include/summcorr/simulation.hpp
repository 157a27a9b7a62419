#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "summcorr/baselines.hpp"
#include "summcorr/errors.hpp"
#include "summcorr/estimator.hpp"
#include "summcorr/model.hpp"
#include "summcorr/rng.hpp"
#include "summcorr/special_functions.hpp"

namespace summcorr {

inline constexpr std::uint64_t kDefaultSeed = 20240601;

// One simulation cell: population parameters, study-size support, replicate
// count and seeding.
struct Scenario {
  std::string id;
  double rho_true = 0.0;
  int k = 10;
  int n_min = 100;
  int n_max = 200;
  double mu_x = 0.0;
  double mu_y = 0.0;
  double sigma_x = 1.0;
  double sigma_y = 1.0;
  int replicates = 1000;
  std::uint64_t base_seed = kDefaultSeed;
  double alpha = 0.05;

  void validate() const {
    if (n_min < 3 || n_min > n_max)
      throw ValidationError("scenario " + id + ": requires 3 <= n_min <= n_max");
    if (k < 1) throw ValidationError("scenario " + id + ": requires k >= 1");
    if (replicates < 1)
      throw ValidationError("scenario " + id + ": requires replicates >= 1");
    if (!(std::abs(rho_true) < 1.0))
      throw ValidationError("scenario " + id + ": requires |rho_true| < 1");
    if (!(sigma_x > 0.0) || !(sigma_y > 0.0))
      throw ValidationError("scenario " + id + ": requires positive sigmas");
  }
};

struct ReplicateRecord {
  int replicate = 0;
  bool ok = false;
  std::string failure;
  double rho_hat = 0.0;
  std::optional<double> se;
  std::optional<std::pair<double, double>> wald;
  std::optional<std::pair<double, double>> lrt;
  bool lrt_truncated_lo = false;
  bool lrt_truncated_hi = false;
  double naive = 0.0;
  double weighted = 0.0;
  double delta_naive = 0.0;
  double delta_weighted = 0.0;
  bool covered_wald = false;
  bool covered_lrt = false;
};

struct ScenarioResult {
  double mean_abs_dev = 0.0;
  double mean_bias = 0.0;
  double coverage_wald = 0.0;
  double coverage_lrt = 0.0;
  double width_wald = 0.0;
  double width_lrt = 0.0;
  double mean_delta_naive = 0.0;
  double mean_delta_weighted = 0.0;
  double t_pvalue_naive = 1.0;
  double t_pvalue_weighted = 1.0;
  std::vector<double> rho_hats;
  std::vector<double> se_bias_samples;  // se_j - sd(rho_hats)
  int excluded_replicates = 0;
};

// Algorithm-1 study generation: n bivariate-normal draws through the
// lower-triangular factor L = [[sx, 0], [rho sy, sy sqrt(1-rho^2)]],
// then two-pass means and unbiased variances.
inline StudySummary generate_study(int n, const PooledParams& params,
                                   Rng& rng) {
  if (n < 3) throw ValidationError("generate_study: requires n >= 3");
  params.validate();
  static thread_local std::vector<double> xs, ys;
  xs.resize(static_cast<std::size_t>(n));
  ys.resize(static_cast<std::size_t>(n));
  const double cy = params.sigma_y * params.rho;
  const double sy =
      params.sigma_y * std::sqrt((1.0 - params.rho) * (1.0 + params.rho));
  for (int j = 0; j < n; ++j) {
    double z1, z2;
    rng.normal_pair(z1, z2);
    xs[j] = params.mu_x + params.sigma_x * z1;
    ys[j] = params.mu_y + cy * z1 + sy * z2;
  }
  double mx = 0.0, my = 0.0;
  for (int j = 0; j < n; ++j) {
    mx += xs[j];
    my += ys[j];
  }
  mx /= n;
  my /= n;
  double vx = 0.0, vy = 0.0;
  for (int j = 0; j < n; ++j) {
    const double dx = xs[j] - mx;
    const double dy = ys[j] - my;
    vx += dx * dx;
    vy += dy * dy;
  }
  vx /= (n - 1);
  vy /= (n - 1);
  return {n, mx, my, vx, vy};
}

// One replicate: its RNG stream depends only on (base_seed, replicate_index).
inline ReplicateRecord run_replicate(const Scenario& sc, int replicate_index) {
  sc.validate();
  Rng rng = Rng::stream(sc.base_seed, static_cast<std::uint64_t>(replicate_index));
  ReplicateRecord rec;
  rec.replicate = replicate_index;

  const PooledParams truth{sc.mu_x, sc.mu_y, sc.sigma_x, sc.sigma_y,
                           sc.rho_true};
  std::vector<StudySummary> studies;
  studies.reserve(static_cast<std::size_t>(sc.k));
  for (int i = 0; i < sc.k; ++i) {
    const int n = rng.uniform_int(sc.n_min, sc.n_max);
    studies.push_back(generate_study(n, truth, rng));
  }

  try {
    const auto est = estimate_full(studies, sc.alpha);
    rec.rho_hat = est.rho.rho_hat;
    rec.se = est.rho.se;
    if (est.rho.ci_wald)
      rec.wald = {est.rho.ci_wald->lo, est.rho.ci_wald->hi};
    if (est.rho.ci_lrt) {
      rec.lrt = {est.rho.ci_lrt->lo, est.rho.ci_lrt->hi};
      rec.lrt_truncated_lo = est.rho.ci_lrt->truncated_lo;
      rec.lrt_truncated_hi = est.rho.ci_lrt->truncated_hi;
    }
    rec.naive = naive_pearson(studies);
    rec.weighted = weighted_pearson(studies);
    rec.delta_naive = delta_metric(rec.rho_hat, rec.naive, sc.rho_true);
    rec.delta_weighted = delta_metric(rec.rho_hat, rec.weighted, sc.rho_true);
    rec.covered_wald = rec.wald && rec.wald->first <= sc.rho_true &&
                       sc.rho_true <= rec.wald->second;
    rec.covered_lrt = rec.lrt && rec.lrt->first <= sc.rho_true &&
                      sc.rho_true <= rec.lrt->second;
    rec.ok = true;
  } catch (const Error& e) {
    rec.ok = false;
    rec.failure = e.what();
  }
  return rec;
}

// All replicates of one scenario, optionally across threads. Records are
// indexed by replicate, so aggregation order never depends on scheduling.
inline std::vector<ReplicateRecord> run_replicates(const Scenario& sc,
                                                   int threads = 1) {
  sc.validate();
  std::vector<ReplicateRecord> records(
      static_cast<std::size_t>(sc.replicates));
  if (threads <= 1) {
    for (int r = 0; r < sc.replicates; ++r) records[r] = run_replicate(sc, r);
    return records;
  }
  std::atomic<int> next{0};
  auto worker = [&] {
    for (;;) {
      const int r = next.fetch_add(1);
      if (r >= sc.replicates) break;
      records[r] = run_replicate(sc, r);
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  return records;
}

namespace detail {

inline double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

inline double sd_of(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace detail

inline ScenarioResult aggregate(const Scenario& sc,
                                std::span<const ReplicateRecord> records) {
  ScenarioResult out;
  std::vector<double> abs_dev, bias, w_wald, w_lrt, d1, d2;
  int n_wald = 0, n_lrt = 0, cov_wald = 0, cov_lrt = 0;
  for (const auto& rec : records) {
    if (!rec.ok) {
      ++out.excluded_replicates;
      continue;
    }
    out.rho_hats.push_back(rec.rho_hat);
    abs_dev.push_back(std::abs(rec.rho_hat - sc.rho_true));
    bias.push_back(rec.rho_hat - sc.rho_true);
    d1.push_back(rec.delta_naive);
    d2.push_back(rec.delta_weighted);
    if (rec.wald) {
      ++n_wald;
      cov_wald += rec.covered_wald ? 1 : 0;
      w_wald.push_back(rec.wald->second - rec.wald->first);
    }
    if (rec.lrt) {
      ++n_lrt;
      cov_lrt += rec.covered_lrt ? 1 : 0;
      w_lrt.push_back(rec.lrt->second - rec.lrt->first);
    }
  }
  const int m = static_cast<int>(out.rho_hats.size());
  out.mean_abs_dev = detail::mean_of(abs_dev);
  out.mean_bias = detail::mean_of(bias);
  // Coverage over all non-excluded replicates; an absent CI cannot cover.
  out.coverage_wald = m > 0 ? static_cast<double>(cov_wald) / m : 0.0;
  out.coverage_lrt = m > 0 ? static_cast<double>(cov_lrt) / m : 0.0;
  out.width_wald = detail::mean_of(w_wald);
  out.width_lrt = detail::mean_of(w_lrt);
  out.mean_delta_naive = detail::mean_of(d1);
  out.mean_delta_weighted = detail::mean_of(d2);
  try {
    out.t_pvalue_naive = one_sided_t_test_mean_lt_zero(d1).p_value;
    out.t_pvalue_weighted = one_sided_t_test_mean_lt_zero(d2).p_value;
  } catch (const Error&) {
    out.t_pvalue_naive = std::numeric_limits<double>::quiet_NaN();
    out.t_pvalue_weighted = std::numeric_limits<double>::quiet_NaN();
  }
  const double sd_rho = detail::sd_of(out.rho_hats);
  for (const auto& rec : records)
    if (rec.ok && rec.se) out.se_bias_samples.push_back(*rec.se - sd_rho);
  (void)n_wald;
  (void)n_lrt;
  return out;
}

inline ScenarioResult run_scenario(const Scenario& sc, int threads = 1) {
  const auto records = run_replicates(sc, threads);
  return aggregate(sc, records);
}

enum class GridKind { main, large_n };

// Reference simulation grids. main: {0.9, 0.5, 0.1} x {10..50} x {[100,200], [800,1000]}
// (30 cells); large_n: {0.5, 0.9} x {10..50} x [2000,5000] (10 cells).
// Standardized marginals throughout. Per-scenario seeds derive from the
// grid seed and the cell index.
inline std::vector<Scenario> reference_scenario_grid(
    GridKind which, std::uint64_t seed = kDefaultSeed, int replicates = 1000,
    double alpha = 0.05) {
  std::vector<Scenario> grid;
  const auto add = [&](double rho, int k, int n_min, int n_max) {
    Scenario sc;
    char buf[96];
    std::snprintf(buf, sizeof(buf), "rho%g_k%d_n%d-%d", rho, k, n_min, n_max);
    sc.id = buf;
    sc.rho_true = rho;
    sc.k = k;
    sc.n_min = n_min;
    sc.n_max = n_max;
    sc.replicates = replicates;
    sc.alpha = alpha;
    sc.base_seed = Rng::stream_seed(seed, grid.size());
    grid.push_back(std::move(sc));
  };
  if (which == GridKind::main) {
    for (const auto& [n_min, n_max] : {std::pair{100, 200}, {800, 1000}})
      for (double rho : {0.9, 0.5, 0.1})
        for (int k : {10, 20, 30, 40, 50}) add(rho, k, n_min, n_max);
  } else {
    for (double rho : {0.5, 0.9})
      for (int k : {10, 20, 30, 40, 50}) add(rho, k, 2000, 5000);
  }
  return grid;
}

// --- CSV emission (RFC 4180; numbers at 17 significant digits) ---

namespace detail {

inline std::string fmt_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string fmt_opt(const std::optional<double>& v) {
  return v ? fmt_g17(*v) : std::string();
}

}  // namespace detail

inline void write_replicate_csv(std::ostream& os, const Scenario& sc,
                                std::span<const ReplicateRecord> records) {
  os << "scenario_id,replicate,ok,rho_hat,se,wald_lo,wald_hi,lrt_lo,lrt_hi,"
        "delta_naive,delta_weighted,covered_wald,covered_lrt\n";
  for (const auto& r : records) {
    os << sc.id << ',' << r.replicate << ',' << (r.ok ? 1 : 0) << ',';
    if (r.ok) {
      os << detail::fmt_g17(r.rho_hat) << ',' << detail::fmt_opt(r.se) << ','
         << (r.wald ? detail::fmt_g17(r.wald->first) : std::string()) << ','
         << (r.wald ? detail::fmt_g17(r.wald->second) : std::string()) << ','
         << (r.lrt ? detail::fmt_g17(r.lrt->first) : std::string()) << ','
         << (r.lrt ? detail::fmt_g17(r.lrt->second) : std::string()) << ','
         << detail::fmt_g17(r.delta_naive) << ','
         << detail::fmt_g17(r.delta_weighted) << ','
         << (r.covered_wald ? 1 : 0) << ',' << (r.covered_lrt ? 1 : 0);
    } else {
      os << ",,,,,,,,,,";
    }
    os << '\n';
  }
}

inline void write_aggregate_header(std::ostream& os) {
  os << "scenario_id,rho_true,k,n_min,n_max,replicates,excluded,"
        "mean_abs_dev,mean_bias,coverage_wald,coverage_lrt,"
        "width_wald,width_lrt,mean_delta_naive,t_pvalue_naive,"
        "mean_delta_weighted,t_pvalue_weighted\n";
}

inline void write_aggregate_row(std::ostream& os, const Scenario& sc,
                                const ScenarioResult& res) {
  os << sc.id << ',' << detail::fmt_g17(sc.rho_true) << ',' << sc.k << ','
     << sc.n_min << ',' << sc.n_max << ',' << sc.replicates << ','
     << res.excluded_replicates << ',' << detail::fmt_g17(res.mean_abs_dev)
     << ',' << detail::fmt_g17(res.mean_bias) << ','
     << detail::fmt_g17(res.coverage_wald) << ','
     << detail::fmt_g17(res.coverage_lrt) << ','
     << detail::fmt_g17(res.width_wald) << ','
     << detail::fmt_g17(res.width_lrt) << ','
     << detail::fmt_g17(res.mean_delta_naive) << ','
     << detail::fmt_g17(res.t_pvalue_naive) << ','
     << detail::fmt_g17(res.mean_delta_weighted) << ','
     << detail::fmt_g17(res.t_pvalue_weighted) << '\n';
}

}  // namespace summcorr

// Command-line front end: estimate rho from study-level summary CSVs, run
// the simulation grids, or compare against the mean-based baselines.

#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "summcorr/baselines.hpp"
#include "summcorr/errors.hpp"
#include "summcorr/estimator.hpp"
#include "summcorr/simulation.hpp"
#include "summcorr/summary_csv.hpp"
#include "summcorr/version.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace summcorr;

namespace {

constexpr int kExitParseError = 2;
constexpr int kExitValidationError = 3;
constexpr int kExitNumericalError = 4;

json rho_estimate_to_json(const RhoEstimate& est) {
  json j;
  j["rho_hat"] = est.rho_hat;
  j["se"] = est.se ? json(*est.se) : json(nullptr);
  if (est.ci_wald) {
    j["ci_wald"] = {{"lo", est.ci_wald->lo},
                    {"hi", est.ci_wald->hi},
                    {"clamped_lo", est.ci_wald->clamped_lo},
                    {"clamped_hi", est.ci_wald->clamped_hi}};
  } else {
    j["ci_wald"] = nullptr;
  }
  if (est.ci_lrt) {
    j["ci_lrt"] = {{"lo", est.ci_lrt->lo},
                   {"hi", est.ci_lrt->hi},
                   {"truncated_lo", est.ci_lrt->truncated_lo},
                   {"truncated_hi", est.ci_lrt->truncated_hi}};
  } else {
    j["ci_lrt"] = nullptr;
  }
  j["loglik_at_max"] = est.loglik_at_max;
  j["grid_start"] = est.grid_start;
  j["converged"] = est.converged;
  j["at_boundary"] = est.at_boundary;
  j["single_study"] = est.single_study;
  return j;
}

json estimate_group(const std::vector<StudySummary>& studies, double alpha) {
  const auto result = estimate_full(studies, alpha);
  json j;
  j["k"] = studies.size();
  j["mu_x"] = result.params.mu_x;
  j["mu_y"] = result.params.mu_y;
  j["sigma_x"] = result.params.sigma_x;
  j["sigma_y"] = result.params.sigma_y;
  j["rho"] = rho_estimate_to_json(result.rho);
  json b;
  try {
    b["naive"] = naive_pearson(studies);
    b["weighted"] = weighted_pearson(studies);
  } catch (const Error& e) {
    b["naive"] = nullptr;
    b["weighted"] = nullptr;
    b["note"] = e.what();
  }
  j["baselines"] = b;
  return j;
}

SummaryTable load_table(const std::string& path, bool sd_columns) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open input file: " + path);
  return parse_summary_csv(in, sd_columns);
}

void emit(const json& j, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << j.dump(2) << '\n';
  } else {
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw ValidationError("cannot open output file: " + out_path);
    out << j.dump(2) << '\n';
  }
}

std::string sanitize_id(const std::string& id) {
  std::string out;
  for (char c : id)
    out.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '.' ||
                          c == '_' || c == '-'
                      ? c
                      : '_');
  return out;
}

int cmd_estimate(const std::string& input, double alpha,
                 const std::string& group_by, bool sd_columns,
                 const std::string& out_path, std::uint64_t seed) {
  const SummaryTable table = load_table(input, sd_columns);
  json report;
  report["command"] = "estimate";
  report["version"] = kVersion;
  report["input"] = input;
  report["alpha"] = alpha;
  report["seed"] = seed;
  report["groups"] = json::array();

  if (!group_by.empty()) {
    if (!table.has_group || table.group_column != group_by)
      throw ValidationError("--group-by '" + group_by +
                            "' does not match any column in the input");
    std::vector<std::string> order;
    std::map<std::string, std::vector<StudySummary>> groups;
    for (const auto& row : table.rows) {
      if (!groups.count(row.group)) order.push_back(row.group);
      groups[row.group].push_back(row.study);
    }
    for (const auto& g : order) {
      json jg = estimate_group(groups[g], alpha);
      jg["group"] = g;
      report["groups"].push_back(std::move(jg));
    }
  } else {
    std::vector<StudySummary> studies;
    for (const auto& row : table.rows) studies.push_back(row.study);
    json jg = estimate_group(studies, alpha);
    jg["group"] = nullptr;
    report["groups"].push_back(std::move(jg));
  }
  emit(report, out_path);
  return 0;
}

int cmd_compare(const std::string& input, double rho_true, double alpha,
                bool sd_columns, const std::string& out_path) {
  const SummaryTable table = load_table(input, sd_columns);
  std::vector<StudySummary> studies;
  for (const auto& row : table.rows) studies.push_back(row.study);
  const auto result = estimate_full(studies, alpha);
  const double naive = naive_pearson(studies);
  const double weighted = weighted_pearson(studies);
  json j;
  j["command"] = "compare";
  j["version"] = kVersion;
  j["rho_true"] = rho_true;
  j["rho_hat"] = result.rho.rho_hat;
  j["naive"] = naive;
  j["weighted"] = weighted;
  j["delta_naive"] = delta_metric(result.rho.rho_hat, naive, rho_true);
  j["delta_weighted"] = delta_metric(result.rho.rho_hat, weighted, rho_true);
  emit(j, out_path);
  return 0;
}

std::vector<Scenario> load_custom_scenarios(const std::string& path,
                                            std::uint64_t seed,
                                            int replicates_override,
                                            double alpha) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open scenarios file: " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("invalid scenario JSON: ") + e.what());
  }
  if (!doc.is_array())
    throw ParseError("scenario JSON must be an array of objects");
  std::vector<Scenario> scenarios;
  std::size_t idx = 0;
  for (const auto& item : doc) {
    if (!item.is_object())
      throw ParseError("scenario JSON entries must be objects");
    Scenario sc;
    try {
      sc.rho_true = item.at("rho").get<double>();
      sc.k = item.at("k").get<int>();
      sc.n_min = item.at("n_min").get<int>();
      sc.n_max = item.at("n_max").get<int>();
      sc.mu_x = item.value("mu_x", 0.0);
      sc.mu_y = item.value("mu_y", 0.0);
      sc.sigma_x = item.value("sigma_x", 1.0);
      sc.sigma_y = item.value("sigma_y", 1.0);
      sc.replicates = item.value("replicates", 1000);
      sc.alpha = item.value("alpha", alpha);
      sc.base_seed = item.value("base_seed", Rng::stream_seed(seed, idx));
      char buf[64];
      std::snprintf(buf, sizeof(buf), "custom%zu_rho%g_k%d", idx, sc.rho_true,
                    sc.k);
      sc.id = item.value("id", std::string(buf));
    } catch (const json::exception& e) {
      throw ParseError("scenario JSON entry " + std::to_string(idx) + ": " +
                       e.what());
    }
    if (replicates_override > 0) sc.replicates = replicates_override;
    sc.validate();
    scenarios.push_back(std::move(sc));
    ++idx;
  }
  if (scenarios.empty()) throw ParseError("scenario JSON is empty");
  return scenarios;
}

int cmd_simulate(const std::string& grid_name, const std::string& scenarios_path,
                 const std::string& out_dir, std::uint64_t seed, int threads,
                 int replicates_override, double alpha) {
  std::vector<Scenario> scenarios;
  std::string grid_label;
  if (!scenarios_path.empty()) {
    grid_label = "custom";
    scenarios =
        load_custom_scenarios(scenarios_path, seed, replicates_override, alpha);
  } else {
    grid_label = grid_name;
    const GridKind kind =
        grid_name == "large_n" ? GridKind::large_n : GridKind::main;
    const int reps = replicates_override > 0 ? replicates_override : 1000;
    scenarios = reference_scenario_grid(kind, seed, reps, alpha);
  }

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir))
    throw ValidationError("cannot create output directory: " + out_dir);
  {
    std::ofstream probe(fs::path(out_dir) / ".write_probe",
                        std::ios::binary);
    if (!probe) throw ValidationError("output directory not writable: " + out_dir);
  }
  fs::remove(fs::path(out_dir) / ".write_probe", ec);

  std::ofstream agg(fs::path(out_dir) / "aggregate.csv", std::ios::binary);
  write_aggregate_header(agg);

  json meta;
  meta["version"] = kVersion;
  meta["seed"] = seed;
  meta["grid"] = grid_label;
  meta["alpha"] = alpha;
  meta["scenarios"] = json::array();

  for (const auto& sc : scenarios) {
    std::cerr << "scenario " << sc.id << " (" << sc.replicates
              << " replicates)..." << std::endl;
    const auto records = run_replicates(sc, threads);
    const auto result = aggregate(sc, records);
    const std::string fname = "replicates_" + sanitize_id(sc.id) + ".csv";
    std::ofstream rep(fs::path(out_dir) / fname, std::ios::binary);
    write_replicate_csv(rep, sc, records);
    write_aggregate_row(agg, sc, result);
    meta["scenarios"].push_back({{"id", sc.id},
                                 {"file", fname},
                                 {"base_seed", sc.base_seed},
                                 {"rho_true", sc.rho_true},
                                 {"k", sc.k},
                                 {"n_min", sc.n_min},
                                 {"n_max", sc.n_max},
                                 {"replicates", sc.replicates},
                                 {"alpha", sc.alpha},
                                 {"excluded", result.excluded_replicates}});
  }
  std::ofstream meta_out(fs::path(out_dir) / "metadata.json",
                         std::ios::binary);
  meta_out << meta.dump(2) << '\n';
  return 0;
}

json error_report(const std::string& type, const std::string& message) {
  return json{{"error", {{"type", type}, {"message", message}}}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bivariate-normal correlation from study-level marginal "
               "summaries (means, variances, sample sizes)"};
  app.require_subcommand(1);

  std::uint64_t seed = kDefaultSeed;
  app.add_option("--seed", seed, "Base RNG seed")
      ->envname("SUMMARY_CORR_SEED")
      ->capture_default_str();

  std::string input, out_path, group_by;
  double alpha = 0.05;
  bool sd_columns = false;

  auto* est = app.add_subcommand("estimate",
                                 "Estimate the pooled parameters from a "
                                 "summary CSV");
  est->fallthrough();
  est->add_option("--input", input, "Summary CSV path")->required();
  est->add_option("--alpha", alpha, "CI significance level")
      ->check(CLI::Range(1e-6, 0.999999))
      ->capture_default_str();
  est->add_option("--group-by", group_by,
                  "Stratify by this (7th) column of the CSV");
  est->add_flag("--sd", sd_columns,
                "Input carries sd_x/sd_y columns instead of variances");
  est->add_option("--out", out_path, "Write the JSON report here (default stdout)");

  std::string grid = "main", scenarios_path, out_dir;
  int threads = 1, replicates_override = 0;
  auto* sim = app.add_subcommand("simulate", "Run a simulation grid");
  sim->fallthrough();
  sim->add_option("--grid", grid, "Scenario grid: main or large_n")
      ->check(CLI::IsMember({"main", "large_n"}))
      ->capture_default_str();
  sim->add_option("--scenarios", scenarios_path,
                  "Custom scenario JSON (overrides --grid)");
  sim->add_option("--out-dir", out_dir, "Output directory")->required();
  sim->add_option("--threads", threads, "Replicate parallelism")
      ->check(CLI::Range(1, 256))
      ->capture_default_str();
  sim->add_option("--replicates", replicates_override,
                  "Override replicates per scenario (0 = scenario default)");
  sim->add_option("--alpha", alpha, "CI significance level")
      ->check(CLI::Range(1e-6, 0.999999))
      ->capture_default_str();

  double rho_true = 0.0;
  auto* cmp = app.add_subcommand("compare",
                                 "Compare against the mean-based baselines "
                                 "at a known true rho");
  cmp->fallthrough();
  cmp->add_option("--input", input, "Summary CSV path")->required();
  cmp->add_option("--rho-true", rho_true, "True correlation")
      ->check(CLI::Range(-1.0, 1.0))
      ->required();
  cmp->add_flag("--sd", sd_columns,
                "Input carries sd_x/sd_y columns instead of variances");
  cmp->add_option("--alpha", alpha, "CI significance level")
      ->capture_default_str();
  cmp->add_option("--out", out_path, "Write the JSON report here (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (est->parsed())
      return cmd_estimate(input, alpha, group_by, sd_columns, out_path, seed);
    if (sim->parsed())
      return cmd_simulate(grid, scenarios_path, out_dir, seed, threads,
                          replicates_override, alpha);
    if (cmp->parsed())
      return cmd_compare(input, rho_true, alpha, sd_columns, out_path);
  } catch (const ParseError& e) {
    std::cerr << error_report("parse", e.what()).dump() << '\n';
    return kExitParseError;
  } catch (const ValidationError& e) {
    std::cerr << error_report("validation", e.what()).dump() << '\n';
    return kExitValidationError;
  } catch (const NumericalError& e) {
    std::cerr << error_report("numerical", e.what()).dump() << '\n';
    return kExitNumericalError;
  } catch (const std::domain_error& e) {
    std::cerr << error_report("validation", e.what()).dump() << '\n';
    return kExitValidationError;
  } catch (const std::exception& e) {
    std::cerr << error_report("internal", e.what()).dump() << '\n';
    return 1;
  }
  return 0;
}

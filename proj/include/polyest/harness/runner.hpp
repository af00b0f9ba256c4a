#pragma once

// Runs an experiment: replicates in parallel, rows merged by replicate
// index, per-replicate CSV and JSON summary.

#include <polyest/errors.hpp>
#include <polyest/harness/config.hpp>
#include <polyest/harness/results.hpp>
#include <polyest/harness/scenarios.hpp>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

namespace polyest::harness {

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<ResultRecord> rows;
  std::vector<GroupSummary> groups;
  json summary;
};

namespace detail {

inline json estimate_json(const MeanEstimate& m) {
  return {{"mean", std::isfinite(m.mean) ? json(m.mean) : json(nullptr)},
          {"half_width", std::isfinite(m.half_width) ? json(m.half_width) : json(nullptr)},
          {"count", m.count}};
}

inline json group_json(const GroupSummary& g) {
  json est = json::array(), mse = json::array(), metrics = json::object();
  for (const auto& e : g.estimates) est.push_back(estimate_json(e));
  for (const auto& e : g.mse) mse.push_back(estimate_json(e));
  for (const auto& [k, m] : g.metrics) metrics[k] = estimate_json(m);
  return {{"case", g.case_name}, {"sample_size", g.sample_size}, {"estimator", g.estimator},
          {"ok", g.ok},          {"failed", g.failed},           {"estimates", est},
          {"variance", g.variances}, {"mse", mse},               {"metrics", metrics}};
}

inline json ratio_list(const std::vector<double>& num, const std::vector<double>& den) {
  json out = json::array();
  for (std::size_t i = 0; i < std::min(num.size(), den.size()); ++i)
    out.push_back(den[i] > 0.0 && std::isfinite(num[i]) ? json(num[i] / den[i]) : json(nullptr));
  return out;
}

inline std::vector<double> mse_means(const GroupSummary& g) {
  std::vector<double> v;
  for (const auto& m : g.mse) v.push_back(m.mean);
  return v;
}

}  // namespace detail

/// MSE and across-replicate variance ratios for each comparison present in
/// the groups.
[[nodiscard]] inline json comparison_json(const std::vector<GroupSummary>& groups,
                                          const std::vector<Comparison>& comparisons) {
  json out = json::array();
  for (const auto& g : groups) {
    for (const auto& c : comparisons) {
      if (g.estimator != c.numerator) continue;
      const GroupSummary* d = find_group(groups, g.case_name, g.sample_size, c.denominator);
      if (!d) continue;
      out.push_back({{"case", g.case_name},
                     {"sample_size", g.sample_size},
                     {"numerator", c.numerator},
                     {"denominator", c.denominator},
                     {"mse_ratio", detail::ratio_list(detail::mse_means(g), detail::mse_means(*d))},
                     {"variance_ratio", detail::ratio_list(g.variances, d->variances)}});
    }
  }
  return out;
}

/// Executes all (sample size, replicate) jobs; replicate r uses seed
/// base_seed XOR r. Output is independent of the worker count.
[[nodiscard]] inline ExperimentResult run_experiment(const ExperimentConfig& config) {
  if (config.replicates < 1) throw ConfigError("replicates must be >= 1");
  if (config.sample_sizes.empty()) throw ConfigError("sample_sizes must not be empty");
  if (config.workers < 1) throw ConfigError("workers must be >= 1");
  const ScenarioInfo& info = find_scenario(config.scenario);
  json params = info.defaults;
  for (const auto& [key, value] : config.params.items()) {
    if (!params.contains(key)) throw ConfigError("unknown parameter '" + key + "' for scenario " + info.name);
    params[key] = value;
  }
  const auto runner = info.make(Params(params), config);

  const std::size_t jobs = config.sample_sizes.size() * config.replicates;
  std::vector<std::vector<ResultRecord>> out(jobs);
  std::atomic<std::size_t> next{0};
  const auto work = [&] {
    for (std::size_t j = next++; j < jobs; j = next++) {
      const std::size_t n = config.sample_sizes[j / config.replicates];
      const std::size_t r = j % config.replicates;
      const std::uint64_t seed = config.base_seed ^ static_cast<std::uint64_t>(r);
      std::vector<ResultRecord> rows;
      try {
        rows = runner->replicate(n, seed);
      } catch (const std::exception& e) {
        ResultRecord err;
        err.case_name = "*";
        err.estimator = "*";
        err.status = "error";
        err.error = e.what();
        rows = {err};
      }
      for (auto& row : rows) {
        row.scenario = info.name;
        row.sample_size = n;
        row.replicate = r;
        row.seed = seed;
      }
      out[j] = std::move(rows);
    }
  };
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(config.workers, jobs));
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
  }

  ExperimentResult res;
  res.config = config;
  res.config.params = params;
  for (auto& rows : out)
    for (auto& row : rows) res.rows.push_back(std::move(row));
  res.groups = summarize_records(res.rows);

  std::size_t errors = 0;
  for (const auto& r : res.rows) errors += r.ok() ? 0 : 1;
  json cfg = config_to_json(res.config);
  cfg.erase("workers");  // execution detail; results do not depend on it
  json groups = json::array();
  for (const auto& g : res.groups) groups.push_back(detail::group_json(g));
  res.summary = {{"config", cfg},
                 {"scenario_description", info.description},
                 {"metadata", runner->metadata()},
                 {"seeding", "replicate r uses seed base_seed XOR r"},
                 {"confidence", "half_width = 1.96 sd / sqrt(count) over replicates"},
                 {"row_count", res.rows.size()},
                 {"error_count", errors},
                 {"groups", groups},
                 {"comparisons", comparison_json(res.groups, runner->comparisons())}};

  if (!config.output_path.empty()) {
    const std::filesystem::path base(config.output_path);
    if (base.has_parent_path()) std::filesystem::create_directories(base.parent_path());
    write_results_csv(config.output_path + ".csv", res.rows);
    std::ofstream js(config.output_path + ".json", std::ios::binary);
    if (!js) throw Error("cannot open '" + config.output_path + ".json' for writing");
    js << res.summary.dump(2) << '\n';
  }
  return res;
}

/// Reads the comparison entry for (case, sample size, numerator/denominator).
[[nodiscard]] inline const json* find_comparison(const json& summary, const std::string& case_name, std::size_t n,
                                                 const std::string& num, const std::string& den) {
  for (const auto& c : summary.at("comparisons"))
    if (c.at("case") == case_name && c.at("sample_size") == n && c.at("numerator") == num &&
        c.at("denominator") == den)
      return &c;
  return nullptr;
}

}  // namespace polyest::harness

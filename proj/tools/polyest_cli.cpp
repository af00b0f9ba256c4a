// Command-line front end: experiment runs, result summaries, signal export
// and CUSUM traces.

#include <polyest/changepoint.hpp>
#include <polyest/harness/runner.hpp>
#include <polyest/signals.hpp>

#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

namespace {

using namespace polyest;

int run(const std::string& config_path, std::optional<unsigned> workers, std::optional<std::uint64_t> seed,
        const std::string& output) {
  auto cfg = harness::load_config(config_path);
  if (workers) cfg.workers = *workers;
  if (seed) cfg.base_seed = *seed;
  if (!output.empty()) cfg.output_path = output;
  const auto res = harness::run_experiment(cfg);
  std::cout << harness::format_table(res.groups);
  std::cout << "rows: " << res.rows.size() << ", errors: " << res.summary.at("error_count").get<std::size_t>() << '\n';
  if (!cfg.output_path.empty())
    std::cout << "wrote " << cfg.output_path << ".csv and " << cfg.output_path << ".json\n";
  return 0;
}

int list_scenarios() {
  for (const auto& s : harness::scenarios()) {
    std::cout << s.name << "\n  " << s.description << "\n  defaults: " << s.defaults.dump() << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"polyest: moment-based estimation experiments"};
  app.require_subcommand(1);

  auto* run_cmd = app.add_subcommand("run", "run an experiment from a JSON config");
  std::string config_path, output;
  std::optional<unsigned> workers;
  std::optional<std::uint64_t> seed;
  run_cmd->add_option("--config", config_path, "experiment config (JSON)")->required();
  run_cmd->add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);
  run_cmd->add_option("--seed", seed, "override base_seed");
  run_cmd->add_option("--output", output, "override output_path (writes <path>.csv and <path>.json)");

  auto* sum_cmd = app.add_subcommand("summarize", "aggregate a results CSV into a table");
  std::string results_path;
  sum_cmd->add_option("results", results_path, "results CSV")->required();

  auto* list_cmd = app.add_subcommand("list-scenarios", "list scenarios and their default parameters");

  auto* gen_cmd = app.add_subcommand("generate", "export a generated signal");
  std::string kind = "ofdm", format = "csv", out_path;
  std::size_t length = 4096;
  std::uint64_t gen_seed = 0;
  double sample_rate = 960e3;
  gen_cmd->add_option("--kind", kind, "ofdm | filtered-noise | hybrid | iid-noise");
  gen_cmd->add_option("--length", length, "samples");
  gen_cmd->add_option("--seed", gen_seed, "generator seed");
  gen_cmd->add_option("--sample-rate", sample_rate, "Hz");
  gen_cmd->add_option("--format", format, "csv | raw (little-endian float64)")->check(CLI::IsMember({"csv", "raw"}));
  gen_cmd->add_option("--out", out_path, "output file")->required();

  auto* trace_cmd = app.add_subcommand("cusum-trace", "Gaussian mean-shift CUSUM trace as CSV (n,T_n,fired)");
  double shift = 3.0, epsilon = 0.05;
  std::size_t horizon = 1000, change_point = 500, trace_length = 1000;
  std::uint64_t trace_seed = 0;
  std::string trace_out, bound = "chebyshev";
  trace_cmd->add_option("--shift", shift, "mean shift in pre-change standard deviations");
  trace_cmd->add_option("--epsilon", epsilon, "false-alarm bound over the horizon");
  trace_cmd->add_option("--horizon", horizon, "calibration horizon (samples)");
  trace_cmd->add_option("--change-point", change_point, "0-based index of the first post-change sample");
  trace_cmd->add_option("--length", trace_length, "stream length");
  trace_cmd->add_option("--seed", trace_seed, "stream seed");
  trace_cmd->add_option("--bound", bound, "chebyshev | vysochanskij-petunin")
      ->check(CLI::IsMember({"chebyshev", "vysochanskij-petunin"}));
  trace_cmd->add_option("--out", trace_out, "output CSV")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) return run(config_path, workers, seed, output);
    if (sum_cmd->parsed()) {
      std::cout << harness::summarize(results_path);
      return 0;
    }
    if (list_cmd->parsed()) return list_scenarios();
    if (gen_cmd->parsed()) {
      SignalSpec spec;
      spec.kind = signal_kind_from_string(kind);
      spec.length = length;
      spec.seed = gen_seed;
      spec.sample_rate = sample_rate;
      const auto x = generate(spec);
      if (format == "csv") write_csv(out_path, x);
      else write_raw_f64(out_path, x);
      return 0;
    }
    if (trace_cmd->parsed()) {
      const LocatedCumulants pre{0.0, CumulantSet::gaussian(1.0)};
      const LocatedCumulants post{shift, CumulantSet::gaussian(1.0)};
      const auto det = make_detector(pre, post, 1, epsilon, horizon,
                                     bound == "chebyshev" ? TailBound::chebyshev : TailBound::vysochanskij_petunin);
      Rng rng = make_rng(trace_seed);
      std::normal_distribution<double> nd(0.0, 1.0);
      std::vector<double> stream(trace_length);
      for (std::size_t i = 0; i < trace_length; ++i) stream[i] = nd(rng) + (i >= change_point ? shift : 0.0);
      const auto rec = run_detector(det, stream);
      write_trace_csv(trace_out, rec);
      std::cout << "threshold " << det.threshold << ", fired " << (rec.fired ? "yes" : "no");
      if (rec.tau) std::cout << " at n = " << *rec.tau;
      std::cout << '\n';
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << e.what() << '\n';
    return 2;
  } catch (const ParseError& e) {
    std::cerr << e.what() << '\n';
    return 3;
  } catch (const Error& e) {
    std::cerr << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

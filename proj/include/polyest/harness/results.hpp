#pragma once

// Per-replicate result rows, their CSV form, and deterministic aggregation
// into group summaries and a text table.

#include <polyest/errors.hpp>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace polyest::harness {

struct ResultRecord {
  std::string scenario;
  std::string case_name;
  std::size_t sample_size = 0;
  std::size_t replicate = 0;
  std::uint64_t seed = 0;
  std::string estimator;
  /// "ok" or "error".
  std::string status = "ok";
  std::vector<double> estimates;
  std::vector<double> sq_errors;
  std::vector<std::pair<std::string, double>> metrics;
  std::string error;

  [[nodiscard]] bool ok() const { return status == "ok"; }
  [[nodiscard]] double metric(const std::string& name, double fallback = std::nan("")) const {
    for (const auto& [k, v] : metrics)
      if (k == name) return v;
    return fallback;
  }
};

inline constexpr const char* kCsvHeader =
    "scenario,case,sample_size,replicate,seed,estimator,status,estimates,sq_errors,metrics,error";

namespace detail {

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ';';
    s += format_double(v[i]);
  }
  return s;
}

inline std::string csv_quote(const std::string& s) {
  bool needs = false;
  for (char c : s) needs = needs || c == ',' || c == '"' || c == '\n' || c == '\r';
  if (!needs) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else if (c == '\n' || c == '\r') out += ' ';
    else out += c;
  }
  return out + "\"";
}

inline std::vector<std::string> split_csv_line(const std::string& line, std::size_t row) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) throw ParseError("row " + std::to_string(row) + ": unterminated quote");
  fields.push_back(std::move(cur));
  return fields;
}

inline double parse_double(const std::string& s, std::size_t row) {
  if (s.empty()) throw ParseError("row " + std::to_string(row) + ": empty number");
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) throw ParseError("row " + std::to_string(row) + ": bad number '" + s + "'");
  return v;
}

inline std::uint64_t parse_u64(const std::string& s, std::size_t row) {
  if (s.empty() || s[0] == '-') throw ParseError("row " + std::to_string(row) + ": bad integer '" + s + "'");
  char* end = nullptr;
  const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
  if (end != s.c_str() + s.size()) throw ParseError("row " + std::to_string(row) + ": bad integer '" + s + "'");
  return v;
}

inline std::vector<double> parse_list(const std::string& s, std::size_t row) {
  std::vector<double> out;
  if (s.empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(';', start);
    out.push_back(parse_double(s.substr(start, pos - start), row));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::vector<std::pair<std::string, double>> parse_metrics(const std::string& s, std::size_t row) {
  std::vector<std::pair<std::string, double>> out;
  if (s.empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(';', start);
    const std::string item = s.substr(start, pos - start);
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ParseError("row " + std::to_string(row) + ": bad metric '" + item + "'");
    out.emplace_back(item.substr(0, eq), parse_double(item.substr(eq + 1), row));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace detail

[[nodiscard]] inline std::string to_csv_line(const ResultRecord& r) {
  std::string metrics;
  for (std::size_t i = 0; i < r.metrics.size(); ++i) {
    if (i) metrics += ';';
    metrics += r.metrics[i].first + "=" + detail::format_double(r.metrics[i].second);
  }
  std::string line;
  line += detail::csv_quote(r.scenario) + ',' + detail::csv_quote(r.case_name) + ',' + std::to_string(r.sample_size) +
          ',' + std::to_string(r.replicate) + ',' + std::to_string(r.seed) + ',' + detail::csv_quote(r.estimator) +
          ',' + r.status + ',' + detail::join(r.estimates) + ',' + detail::join(r.sq_errors) + ',' +
          detail::csv_quote(metrics) + ',' + detail::csv_quote(r.error);
  return line;
}

inline void write_results_csv(const std::string& path, const std::vector<ResultRecord>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << kCsvHeader << '\n';
  for (const auto& r : rows) out << to_csv_line(r) << '\n';
  if (!out) throw Error("write to '" + path + "' failed");
}

[[nodiscard]] inline std::vector<ResultRecord> parse_results_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("no result rows (row count 0)");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kCsvHeader) throw ParseError("unexpected header '" + line + "'");
  std::vector<ResultRecord> rows;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = detail::split_csv_line(line, row);
    if (f.size() != 11)
      throw ParseError("row " + std::to_string(row) + ": expected 11 fields, got " + std::to_string(f.size()));
    ResultRecord r;
    r.scenario = f[0];
    r.case_name = f[1];
    r.sample_size = detail::parse_u64(f[2], row);
    r.replicate = detail::parse_u64(f[3], row);
    r.seed = detail::parse_u64(f[4], row);
    r.estimator = f[5];
    r.status = f[6];
    if (r.status != "ok" && r.status != "error")
      throw ParseError("row " + std::to_string(row) + ": unknown status '" + r.status + "'");
    r.estimates = detail::parse_list(f[7], row);
    r.sq_errors = detail::parse_list(f[8], row);
    r.metrics = detail::parse_metrics(f[9], row);
    r.error = f[10];
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw ParseError("no result rows (row count 0)");
  return rows;
}

[[nodiscard]] inline std::vector<ResultRecord> read_results_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open results '" + path + "'");
  return parse_results_csv(in);
}

/// Mean with a normal-approximation 95% confidence half-width.
struct MeanEstimate {
  double mean = std::nan("");
  double half_width = std::nan("");
  std::size_t count = 0;
};

[[nodiscard]] inline MeanEstimate mean_estimate(const std::vector<double>& values) {
  MeanEstimate m;
  double sum = 0.0;
  for (double v : values)
    if (std::isfinite(v)) {
      sum += v;
      ++m.count;
    }
  if (m.count == 0) return m;
  m.mean = sum / static_cast<double>(m.count);
  if (m.count == 1) {
    m.half_width = 0.0;
    return m;
  }
  double ss = 0.0;
  for (double v : values)
    if (std::isfinite(v)) ss += (v - m.mean) * (v - m.mean);
  const double sd = std::sqrt(ss / static_cast<double>(m.count - 1));
  m.half_width = 1.959963984540054 * sd / std::sqrt(static_cast<double>(m.count));
  return m;
}

[[nodiscard]] inline double sample_variance(const std::vector<double>& values) {
  const auto m = mean_estimate(values);
  if (m.count < 2) return 0.0;
  double ss = 0.0;
  for (double v : values)
    if (std::isfinite(v)) ss += (v - m.mean) * (v - m.mean);
  return ss / static_cast<double>(m.count - 1);
}

struct GroupSummary {
  std::string scenario;
  std::string case_name;
  std::size_t sample_size = 0;
  std::string estimator;
  std::size_t ok = 0;
  std::size_t failed = 0;
  std::vector<MeanEstimate> estimates;
  /// Across-replicate variance of each estimate.
  std::vector<double> variances;
  /// Mean squared error of each estimate, with half-widths.
  std::vector<MeanEstimate> mse;
  std::vector<std::pair<std::string, MeanEstimate>> metrics;
};

/// Groups rows by (scenario, case, sample size, estimator) in order of first
/// appearance and aggregates the successful ones.
[[nodiscard]] inline std::vector<GroupSummary> summarize_records(const std::vector<ResultRecord>& rows) {
  struct Acc {
    GroupSummary g;
    std::vector<std::vector<double>> est, sq;
    std::vector<std::pair<std::string, std::vector<double>>> met;
  };
  std::vector<Acc> groups;
  for (const auto& r : rows) {
    Acc* a = nullptr;
    for (auto& g : groups)
      if (g.g.scenario == r.scenario && g.g.case_name == r.case_name && g.g.sample_size == r.sample_size &&
          g.g.estimator == r.estimator) {
        a = &g;
        break;
      }
    if (!a) {
      groups.emplace_back();
      a = &groups.back();
      a->g.scenario = r.scenario;
      a->g.case_name = r.case_name;
      a->g.sample_size = r.sample_size;
      a->g.estimator = r.estimator;
    }
    if (!r.ok()) {
      ++a->g.failed;
      continue;
    }
    ++a->g.ok;
    if (a->est.size() < r.estimates.size()) a->est.resize(r.estimates.size());
    for (std::size_t i = 0; i < r.estimates.size(); ++i) a->est[i].push_back(r.estimates[i]);
    if (a->sq.size() < r.sq_errors.size()) a->sq.resize(r.sq_errors.size());
    for (std::size_t i = 0; i < r.sq_errors.size(); ++i) a->sq[i].push_back(r.sq_errors[i]);
    for (const auto& [k, v] : r.metrics) {
      auto it = a->met.begin();
      while (it != a->met.end() && it->first != k) ++it;
      if (it == a->met.end()) {
        a->met.emplace_back(k, std::vector<double>{});
        it = a->met.end() - 1;
      }
      it->second.push_back(v);
    }
  }
  std::vector<GroupSummary> out;
  out.reserve(groups.size());
  for (auto& a : groups) {
    for (const auto& e : a.est) {
      a.g.estimates.push_back(mean_estimate(e));
      a.g.variances.push_back(sample_variance(e));
    }
    for (const auto& s : a.sq) a.g.mse.push_back(mean_estimate(s));
    for (const auto& [k, v] : a.met) a.g.metrics.emplace_back(k, mean_estimate(v));
    out.push_back(std::move(a.g));
  }
  return out;
}

[[nodiscard]] inline const GroupSummary* find_group(const std::vector<GroupSummary>& groups, const std::string& case_name,
                                                    std::size_t sample_size, const std::string& estimator) {
  for (const auto& g : groups)
    if (g.case_name == case_name && g.sample_size == sample_size && g.estimator == estimator) return &g;
  return nullptr;
}

[[nodiscard]] inline std::string format_table(const std::vector<GroupSummary>& groups) {
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-18s %-22s %8s %-14s %6s %6s  %s\n", "scenario", "case", "N", "estimator", "ok",
                "failed", "mean estimates | mse | metrics");
  os << buf;
  const auto fmt = [](double v) {
    char b[32];
    std::snprintf(b, sizeof b, "%.6g", v);
    return std::string(b);
  };
  for (const auto& g : groups) {
    std::snprintf(buf, sizeof buf, "%-18s %-22s %8zu %-14s %6zu %6zu  ", g.scenario.c_str(), g.case_name.c_str(),
                  g.sample_size, g.estimator.c_str(), g.ok, g.failed);
    os << buf << '[';
    for (std::size_t i = 0; i < g.estimates.size(); ++i) os << (i ? " " : "") << fmt(g.estimates[i].mean);
    os << "] | [";
    for (std::size_t i = 0; i < g.mse.size(); ++i) os << (i ? " " : "") << fmt(g.mse[i].mean);
    os << "] |";
    for (const auto& [k, m] : g.metrics) os << ' ' << k << '=' << fmt(m.mean);
    os << '\n';
  }
  return os.str();
}

/// Text summary of a results CSV.
[[nodiscard]] inline std::string summarize(const std::string& path) {
  return format_table(summarize_records(read_results_csv(path)));
}

}  // namespace polyest::harness

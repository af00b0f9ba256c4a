// Acceptance gate: one PASS/FAIL line per criterion; exit status counts failures.

#include <polyest/changepoint.hpp>
#include <polyest/distributions.hpp>
#include <polyest/harness/runner.hpp>
#include <polyest/moments.hpp>
#include <polyest/pmm.hpp>
#include <polyest/sls.hpp>
#include <polyest/stochpoly.hpp>
#include <polyest/volterra.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

using namespace polyest;
using namespace polyest::harness;

namespace {

int failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  std::printf("%s %2d %s: %s\n", pass ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
  std::fflush(stdout);
  failures += pass ? 0 : 1;
}

// Runs a criterion, turning an escaped exception into a FAIL line.
void criterion(int id, const std::string& name, const std::function<std::pair<bool, std::string>()>& body) {
  try {
    const auto [pass, detail] = body();
    report(id, name, pass, detail);
  } catch (const std::exception& e) {
    report(id, name, false, std::string("exception: ") + e.what());
  }
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

ExperimentResult run(json j) { return run_experiment(config_from_json(j)); }

std::vector<double> ratios(const json& summary, const std::string& c, std::size_t n, const std::string& num,
                           const std::string& den, const char* key) {
  const json* cmp = find_comparison(summary, c, n, num, den);
  if (!cmp) throw std::runtime_error("missing comparison " + num + "/" + den);
  std::vector<double> out;
  for (const auto& v : cmp->at(key)) out.push_back(v.is_null() ? NAN : v.get<double>());
  return out;
}

std::string list(const std::vector<double>& v) {
  std::string s = "(";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt("%.3f", v[i]);
  return s + ")";
}

bool all_within(const std::vector<double>& v, double lo, double hi) {
  for (double x : v)
    if (!(x >= lo && x <= hi)) return false;
  return true;
}

double metric_mean(const std::vector<GroupSummary>& groups, const std::string& c, std::size_t n, const std::string& est,
                   const std::string& metric) {
  const auto* g = find_group(groups, c, n, est);
  if (!g) throw std::runtime_error("missing group " + c + "/" + est);
  for (const auto& [name, m] : g->metrics)
    if (name == metric) return m.mean;
  throw std::runtime_error("missing metric " + metric);
}

// ------------------------------------------------------------ oracles

VolterraKernels random_kernels(int m1, int m2, Rng& rng) {
  std::normal_distribution<double> nd;
  Eigen::VectorXd h1(m1);
  for (int i = 0; i < m1; ++i) h1(i) = nd(rng);
  Eigen::MatrixXd h2(m2, m2);
  for (int i = 0; i < m2; ++i)
    for (int j = i; j < m2; ++j) h2(i, j) = h2(j, i) = 0.5 * nd(rng);
  return VolterraKernels(nd(rng), h1, h2);
}

double direct_output(const VolterraKernels& k, const std::vector<double>& x, std::size_t n) {
  double y = k.h0;
  for (int i = 0; i < k.m1(); ++i) y += k.h1(i) * x[n - static_cast<std::size_t>(i)];
  for (int i = 0; i < k.m2(); ++i)
    for (int j = 0; j < k.m2(); ++j)
      y += k.h2(i, j) * x[n - static_cast<std::size_t>(i)] * x[n - static_cast<std::size_t>(j)];
  return y;
}

double kernel_rel_diff(const VolterraKernels& a, const VolterraKernels& b) {
  const double scale = std::max({1.0, std::abs(b.h0), b.h1.cwiseAbs().maxCoeff(), b.h2.cwiseAbs().maxCoeff()});
  double d = std::abs(a.h0 - b.h0);
  d = std::max(d, (a.h1 - b.h1).cwiseAbs().maxCoeff());
  d = std::max(d, (a.h2 - b.h2).cwiseAbs().maxCoeff());
  return d / scale;
}

// PMM2 location score from first principles (2 x 2 Cramer solve).
double pmm2_score(double t, double m1, double m2, double c2, double c3, double c4) {
  const double f11 = c2, f12 = c3 + 2.0 * t * c2, f22 = c4 + 2.0 * c2 * c2 + 4.0 * t * c3 + 4.0 * t * t * c2;
  const double det = f11 * f22 - f12 * f12;
  const double h1 = (f22 - 2.0 * t * f12) / det, h2 = (2.0 * t * f11 - f12) / det;
  return h1 * (m1 - t) + h2 * (m2 - t * t - c2);
}

// Argmax of the integrated score on a uniform grid.
double pmm2_grid_oracle(double m1, double m2, const CumulantSet& c, double lo, double hi, double step) {
  double integral = 0.0, best = 0.0, arg = lo, prev = pmm2_score(lo, m1, m2, c.c2(), c.c3(), c.c4());
  const long n = static_cast<long>(std::ceil((hi - lo) / step));
  for (long i = 1; i <= n; ++i) {
    const double t = lo + static_cast<double>(i) * step;
    const double cur = pmm2_score(t, m1, m2, c.c2(), c.c3(), c.c4());
    integral += 0.5 * (prev + cur) * step;
    if (integral > best) {
      best = integral;
      arg = t;
    }
    prev = cur;
  }
  return arg;
}

// Scalar-omega SLS objective for y = t1 exp(t2 x), sigma^2 profiled.
double sls_exp_objective(double t1, double t2, const Eigen::VectorXd& x, const Eigen::VectorXd& y, double omega) {
  const auto n = x.size();
  Eigen::VectorXd r1(n), d(n);
  for (Eigen::Index v = 0; v < n; ++v) {
    const double r = t1 * std::exp(t2 * x(v));
    r1(v) = y(v) - r;
    d(v) = y(v) * y(v) - r * r;
  }
  const double s2 = std::max(0.0, d.mean());
  return r1.squaredNorm() + omega * (d.array() - s2).square().sum();
}

Eigen::Vector2d sls_grid_oracle(const Eigen::VectorXd& x, const Eigen::VectorXd& y, double omega, Eigen::Vector2d c) {
  double half = 0.5, step = 0.01;
  while (true) {
    double best = INFINITY;
    Eigen::Vector2d arg = c;
    const int k = static_cast<int>(std::round(half / step));
    for (int i = -k; i <= k; ++i)
      for (int j = -k; j <= k; ++j) {
        const Eigen::Vector2d t(c(0) + i * step, c(1) + j * step);
        const double q = sls_exp_objective(t(0), t(1), x, y, omega);
        if (q < best) {
          best = q;
          arg = t;
        }
      }
    c = arg;
    if (step <= 1e-5) return c;
    half = 2.0 * step;
    step /= 10.0;
  }
}

std::string rows_text(const ExperimentResult& r) {
  std::string s;
  for (const auto& row : r.rows) s += to_csv_line(row) + '\n';
  return s + r.summary.dump();
}

}  // namespace

int main() {
  using clock = std::chrono::steady_clock;

  criterion(1, "g2 closed form", [] {
    const double a = variance_reduction_g2(std::sqrt(8.0 / 3.0), 4.0);
    const double b = variance_reduction_g2(0.0, 0.0);
    const double c = variance_reduction_g2(2.0, 6.0);
    const bool pass = std::abs(a - 5.0 / 9.0) <= 1e-12 && b == 1.0 && std::abs(c - 0.5) <= 1e-12;
    return std::pair{pass, fmt("g2(sqrt(8/3),4)=%.15f g2(0,0)=%.15f g2(2,6)=%.15f", a, b, c)};
  });

  criterion(2, "variance law (chi-square(3) location, N=800, m=1000)", [] {
    const auto t0 = clock::now();
    const auto res = run({{"scenario", "g2-validation"}, {"sample_sizes", {800}}, {"replicates", 1000}, {"workers", 1}});
    const double secs = seconds_since(t0);
    const double ratio = ratios(res.summary, "chi-square(3)", 800, "PMM2", "mean", "variance_ratio").at(0);
    const bool pass = ratio >= 0.50 && ratio <= 0.63 && secs < 60.0 && res.summary.at("error_count") == 0;
    return std::pair{pass, fmt("var(PMM2)/var(mean)=%.4f (band [0.50, 0.63], g2=5/9) in %.1fs single-threaded", ratio,
                               secs)};
  });

  criterion(3, "PMM2 vs SLS equivalence (exponential model, chi-square(3))", [] {
    const auto t0 = clock::now();
    const auto res =
        run({{"scenario", "pmm-vs-sls"}, {"sample_sizes", {30, 200}}, {"replicates", 1000}, {"workers", 1}});
    const double secs = seconds_since(t0);
    const std::string c = "chi-square(3)";
    bool pass = secs < 300.0 && res.summary.at("error_count") == 0;
    std::string detail;
    for (std::size_t n : {30u, 200u}) {
      const auto eq = ratios(res.summary, c, n, "PMM2", "SLS-opt", "mse_ratio");
      pass = pass && all_within(eq, 0.9, 1.1);
      detail += fmt("N=%zu PMM2/SLS-opt=%s; ", n, list(eq).c_str());
    }
    const auto p_ols = ratios(res.summary, c, 200, "PMM2", "OLS", "mse_ratio");
    const auto s_ols = ratios(res.summary, c, 200, "SLS-opt", "OLS", "mse_ratio");
    pass = pass && all_within(p_ols, 0.0, 0.8) && all_within(s_ols, 0.0, 0.8);
    detail += fmt("N=200 PMM2/OLS=%s SLS-opt/OLS=%s; ", list(p_ols).c_str(), list(s_ols).c_str());
    // Scalar-omega SLS is reported alongside; it cannot reach the PMM2 bound.
    detail += fmt("scalar SLS: PMM2/SLS N=30 %s N=200 %s, SLS/OLS N=200 %s; %.1fs",
                  list(ratios(res.summary, c, 30, "PMM2", "SLS", "mse_ratio")).c_str(),
                  list(ratios(res.summary, c, 200, "PMM2", "SLS", "mse_ratio")).c_str(),
                  list(ratios(res.summary, c, 200, "SLS", "OLS", "mse_ratio")).c_str(), secs);
    return std::pair{pass, detail};
  });

  criterion(4, "Gaussian reduction", [] {
    double loc = 0.0, reg = 0.0, sls = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Rng rng = make_rng(4000 + seed);
      const Distribution d = seed % 2 ? Distribution{ChiSquare{3.0}} : Distribution{Normal{1.0, 2.0}};
      const auto s = draw_n(d, 200, rng);
      const auto e = pmm2_location(s, CumulantSet::gaussian(4.0));
      loc = std::max(loc, std::abs(e.theta_hat(0) - sample_mean(s)));

      const int n = 150;
      Eigen::MatrixXd x(n, 2);
      Eigen::VectorXd y(n);
      const auto noise = draw_n(d, static_cast<std::size_t>(n), rng);
      for (int i = 0; i < n; ++i) {
        x(i, 0) = 1.0;
        x(i, 1) = static_cast<double>(i) / (n - 1);
        y(i) = 1.0 + 2.0 * x(i, 1) + noise[static_cast<std::size_t>(i)];
      }
      const Eigen::VectorXd ols = ordinary_least_squares(x, y);
      const auto p = pmm2_regression(LinearResponse{2}, x, y, Eigen::Vector2d::Zero(), CumulantSet::gaussian(1.0));
      reg = std::max(reg, (p.theta_hat - ols).cwiseAbs().maxCoeff());
      const auto q = sls_estimate(SlsProblem<LinearResponse>{LinearResponse{2}, x, y, 0.0, {}}, Eigen::Vector2d::Zero());
      sls = std::max(sls, (q.theta_hat - ols).cwiseAbs().maxCoeff());
    }
    const bool pass = loc <= 1e-8 && reg <= 1e-8 && sls <= 1e-10;
    return std::pair{pass, fmt("max |PMM2 loc - mean|=%.2e, |PMM2 reg - OLS|=%.2e, |SLS(w=0) - OLS|=%.2e over 20 "
                               "datasets",
                               loc, reg, sls)};
  });

  criterion(5, "kernel/flattened embedding", [] {
    Rng rng = make_rng(5000);
    std::uniform_int_distribution<int> mem(1, 6);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      const auto k = random_kernels(mem(rng), mem(rng), rng);
      const auto x = draw_n(Normal{}, 64, rng);
      const auto a = volterra_predict(k, x);
      const auto b = predict_from_coefficients(kernels_to_coefficients(k), k.memory(), x);
      double scale = 1.0;
      for (double v : a) scale = std::max(scale, std::abs(v));
      for (std::size_t n = 0; n < a.size(); ++n) {
        worst = std::max(worst, std::abs(a[n] - b[n]) / scale);
        worst = std::max(worst, std::abs(a[n] - direct_output(k, x, n + static_cast<std::size_t>(k.memory()) - 1)) / scale);
      }
    }
    bool sizes = true;
    for (int m = 1; m <= 32; ++m)
      sizes = sizes && basis_size(2, m) == static_cast<std::uint64_t>(m + m * (m + 1) / 2);
    return std::pair{worst <= 1e-10 && sizes,
                     fmt("max relative disagreement %.2e over 100 cases; basis_size(2,M) closed form M<=32: %s", worst,
                         sizes ? "ok" : "mismatch")};
  });

  criterion(6, "MMSE identifiability", [] {
    Rng rng = make_rng(6000);
    double rel = 0.0, resid = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      const int m1 = 1 + trial % 4, m2 = 1 + (trial / 4) % 4;
      const auto k = random_kernels(m1, m2, rng);
      const auto x = draw_n(Normal{}, 2000, rng);
      const auto clean = volterra_predict(k, x);
      std::vector<double> y(x.size(), 0.0);
      std::copy(clean.begin(), clean.end(), y.begin() + (k.memory() - 1));
      const auto rep = mmse_adapt(x, y, m1, m2);
      rel = std::max(rel, kernel_rel_diff(rep.kernels, k));
      resid = std::max(resid, rep.normal_equation_residual);
    }
    return std::pair{rel <= 1e-6 && resid <= 1e-9,
                     fmt("max relative kernel error %.2e, max normal-equation residual %.2e over 20 plants", rel, resid)};
  });

  criterion(7, "Volterra spectral direction", [] {
    const auto t0 = clock::now();
    const auto res = run({{"scenario", "volterra-spectral"}, {"sample_sizes", {65536}}, {"replicates", 20}});
    const double secs = seconds_since(t0);
    bool pass = secs < 120.0 && res.summary.at("error_count") == 0;
    std::string detail;
    for (const char* a : {"mmse", "moment"}) {
      const double ofdm = metric_mean(res.groups, "ofdm", 65536, a, "width_ratio");
      const double white = metric_mean(res.groups, "white-noise", 65536, a, "width_ratio");
      const double filt = metric_mean(res.groups, "filtered-noise", 65536, a, "width_ratio");
      pass = pass && ofdm < 1.0 && white > 1.0;
      detail += fmt("%s: ofdm %.4f, white-noise %.4f (filtered-noise %.4f); ", a, ofdm, white, filt);
    }
    return std::pair{pass, detail + fmt("%.1fs", secs)};
  });

  criterion(8, "CUSUM false-alarm control", [] {
    const auto t0 = clock::now();
    const auto res = run({{"scenario", "cusum-far"},
                          {"sample_sizes", {1000}},
                          {"replicates", 2000},
                          {"params", {{"epsilons", {0.2, 0.05, 0.01}}, {"delay_stream", 0}}}});
    const double secs = seconds_since(t0);
    std::vector<double> far, th;
    for (const char* e : {"eps=0.2", "eps=0.05", "eps=0.01"}) {
      far.push_back(metric_mean(res.groups, "H0", 1000, e, "fired"));
      th.push_back(metric_mean(res.groups, "H0", 1000, e, "threshold"));
    }
    const bool monotone = far[0] >= far[1] && far[1] >= far[2] && th[0] < th[1] && th[1] < th[2];
    const bool pass = far[1] <= 0.05 && far[0] <= 0.2 && far[2] <= 0.01 && monotone && secs < 120.0;
    return std::pair{pass, fmt("FAR eps=0.2/0.05/0.01: %.4f/%.4f/%.4f, thresholds %.2f/%.2f/%.2f, %.1fs", far[0], far[1],
                               far[2], th[0], th[1], th[2], secs)};
  });

  criterion(9, "dispatch accuracy (N=1e4, 200 trials)", [] {
    const auto res = run({{"scenario", "dispatch-accuracy"}, {"sample_sizes", {10000}}, {"replicates", 200}});
    bool pass = res.summary.at("error_count") == 0;
    std::string detail;
    for (const char* c : {"normal(0 1)", "chi-square(3)", "uniform(-1 1)"}) {
      const double acc = metric_mean(res.groups, c, 10000, "dispatch", "correct");
      pass = pass && acc >= 0.95;
      detail += fmt("%s %.3f; ", c, acc);
    }
    return std::pair{pass, detail};
  });

  criterion(10, "property suites", [] {
    std::string detail;
    bool pass = true;

    // Moments round trip.
    {
      Rng rng = make_rng(10001);
      std::uniform_real_distribution<double> u(-1.0, 1.0);
      double worst = 0.0;
      for (int trial = 0; trial < 200; ++trial) {
        const double c2 = 0.2 + std::abs(u(rng)) * 3.0, c3 = u(rng) * c2;
        const CumulantSet c({c2, c3, c3 * c3 / c2 + std::abs(u(rng)) * c2 * c2, u(rng), 10.0 + 5.0 * u(rng)});
        const double mean = 2.0 * u(rng);
        const auto raw = raw_moments_from_cumulants(c, mean, 6);
        double scale = 1.0;
        for (double v : raw.values()) scale = std::max(scale, std::abs(v));
        const auto back = cumulants_from_raw_moments(raw);
        worst = std::max(worst, std::abs(back.mean - mean) / scale);
        for (int r = 2; r <= 6; ++r)
          worst = std::max(worst, std::abs(back.cumulants.cumulant(r) - c.cumulant(r)) / scale);
      }
      pass = pass && worst <= 1e-12;
      detail += fmt("round trip %.1e; ", worst);
    }

    // Gram positivity: F is PSD, and nondegenerate exactly when the centered design has full rank.
    {
      Rng rng = make_rng(10002);
      std::uniform_int_distribution<int> support(1, 5);
      std::normal_distribution<double> nd;
      int agree = 0;
      double min_eig = INFINITY;
      for (int trial = 0; trial < 200; ++trial) {
        const int distinct = support(rng);
        std::vector<double> atoms(static_cast<std::size_t>(distinct));
        for (auto& v : atoms) v = nd(rng);
        std::uniform_int_distribution<int> pick(0, distinct - 1);
        Eigen::MatrixXd d(12, 3);
        for (int r = 0; r < 12; ++r) {
          const double x = atoms[static_cast<std::size_t>(pick(rng))];
          d.row(r) << x, x * x, x * x * x;
        }
        const auto cm = compute_correlant_matrix(d);
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cm.F);
        min_eig = std::min(min_eig, es.eigenvalues().minCoeff() / std::max(1.0, es.eigenvalues().maxCoeff()));
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(d.rowwise() - d.colwise().mean());
        qr.setThreshold(1e-9);
        agree += (!cm.degenerate()) == (qr.rank() == 3);
      }
      pass = pass && min_eig >= -1e-10 && agree == 200;
      detail += fmt("Gram min eig %.1e, rank agreement %d/200; ", min_eig, agree);
    }

    // PMM2 location against an integrated-score grid search.
    {
      double worst = 0.0;
      for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Rng rng = make_rng(10100 + seed);
        const auto s = draw_n(ChiSquare{3.0}, 200, rng);
        const auto c = sample_cumulants(s, 4);
        double m1 = 0.0, m2 = 0.0;
        for (double v : s) {
          m1 += v;
          m2 += v * v;
        }
        m1 /= static_cast<double>(s.size());
        m2 /= static_cast<double>(s.size());
        const double est = pmm2_location(s, c).theta_hat(0);
        const double oracle = pmm2_grid_oracle(m1, m2, c, m1 - 1.0, m1 + 1.0, 1e-6);
        worst = std::max(worst, std::abs(est - oracle));
      }
      pass = pass && worst <= 1e-4;
      detail += fmt("PMM2 grid %.1e; ", worst);
    }

    // Scalar-omega SLS against a refined 2-D grid search.
    {
      const ExponentialResponse resp;
      const Eigen::Vector2d truth(2.0, 0.5);
      const int n = 100;
      Rng rng = make_rng(10200);
      const auto e = draw_centered(ChiSquare{3.0}, n, rng, 0.25 / std::sqrt(6.0));
      Eigen::MatrixXd x(n, 1);
      Eigen::VectorXd y(n);
      for (int i = 0; i < n; ++i) {
        x(i, 0) = static_cast<double>(i) / (n - 1);
        y(i) = truth(0) * std::exp(truth(1) * x(i, 0)) + e[static_cast<std::size_t>(i)];
      }
      const double omega = 0.5;
      const auto est = sls_estimate(SlsProblem<ExponentialResponse>{resp, x, y, omega, {}}, truth);
      const Eigen::Vector2d oracle = sls_grid_oracle(x.col(0), y, omega, truth);
      const double worst = (est.theta_hat - oracle).cwiseAbs().maxCoeff();
      pass = pass && worst <= 2e-5;
      detail += fmt("SLS grid %.1e; ", worst);
    }

    // Harness determinism across worker counts.
    {
      bool same = true;
      for (const char* s : {"g2-validation", "pmm-vs-sls", "cusum-far"}) {
        json j{{"scenario", s}, {"sample_sizes", {60, 120}}, {"replicates", 16}, {"base_seed", 7}};
        if (std::string(s) == "cusum-far") j["params"] = {{"delay_stream", 500}};
        j["workers"] = 1;
        const auto a = rows_text(run(j));
        j["workers"] = 4;
        same = same && a == rows_text(run(j));
      }
      pass = pass && same;
      detail += fmt("harness determinism %s", same ? "byte-identical" : "differs");
    }
    return std::pair{pass, detail};
  });

  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}

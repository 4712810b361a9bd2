// Acceptance suite: one line per criterion, nonzero exit if any fails.
// Usage: rhlp_acceptance [criterion numbers...]   (default: all)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "rhlp/cli.hpp"
#include "rhlp/em.hpp"
#include "rhlp/io.hpp"
#include "rhlp/parallel.hpp"
#include "rhlp/piecewise.hpp"
#include "rhlp/selection.hpp"
#include "rhlp/simulation.hpp"

namespace {

using namespace rhlp;
namespace fs = std::filesystem;

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// 1. Every log-likelihood trace is non-decreasing (per-step slack 1e-8) over
// 200 fits; under two minutes.
Verdict em_monotonicity() {
  const auto start = std::chrono::steady_clock::now();
  const Index ns[] = {100, 300, 1000};
  const int Ks[] = {2, 3, 5};
  int fits = 0, steps = 0, violations = 0, failed = 0;
  double worst = 0.0;
  std::mt19937_64 seeds(20240101);
  for (int i = 0; i < 200; ++i) {
    const Index n = ns[i % 3];
    const int K = Ks[(i / 3) % 3];
    const SimulatedSignal sim = generate(default_generator_config(n, seeds()));
    FitOptions o;
    o.n_restarts = 1;
    o.rng_seed = seeds();
    o.init_strategy = InitStrategy::random_segments;
    try {
      const FitResult r = em_fit(sim.signal, ModelSpec{K, 2, 1}, o);
      ++fits;
      for (std::size_t m = 1; m < r.loglik_trace.size(); ++m) {
        ++steps;
        const double drop = r.loglik_trace[m - 1] - r.loglik_trace[m];
        worst = std::max(worst, drop);
        if (drop > 1e-8) ++violations;
      }
    } catch (const std::exception&) {
      ++failed;
    }
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  Verdict v;
  v.pass = fits == 200 && violations == 0 && secs < 120.0;
  v.detail = std::to_string(fits) + " fits, " + std::to_string(steps) + " EM steps, " +
             std::to_string(violations) + " drops > 1e-8 (largest drop " + fmt("%.3g", worst) +
             "), " + std::to_string(failed) + " failed fits, " + fmt("%.1f", secs) + " s";
  return v;
}

// 2. Analytic Q1 gradient against central differences, h = 1e-5.
Verdict irls_gradient() {
  std::mt19937_64 rng(77);
  double worst = 0.0;
  for (int rep = 0; rep < 10; ++rep) {
    const int K = 2 + rep % 4, q = 1 + rep % 2;
    const Index n = 30 + 10 * rep;
    const MatrixXd V = vandermonde(VectorXd::LinSpaced(n, 0.0, 5.0), q);
    const MatrixXd tau = oracle::random_stochastic(n, K, rng);
    const GateWeights w = oracle::random_theta(ModelSpec{K, 0, q}, rng).w;
    const Index d = q + 1;
    VectorXd x((K - 1) * d);
    for (Index k = 0; k + 1 < K; ++k)
      for (Index j = 0; j < d; ++j) x[k * d + j] = w.w(k, j);
    auto f = [&](const VectorXd& y) {
      GateWeights g{MatrixXd::Zero(K, d)};
      for (Index k = 0; k + 1 < K; ++k)
        for (Index j = 0; j < d; ++j) g.w(k, j) = y[k * d + j];
      return gate_objective(tau, V, g);
    };
    const VectorXd fd = oracle::central_gradient(f, x, 1e-5);
    const VectorXd g = gate_gradient(tau, V, w);
    worst = std::max(worst, (g - fd).norm() / std::max(fd.norm(), 1e-300));
  }
  return {worst < 1e-5, "max relative error " + fmt("%.3g", worst) + " over 10 instances (< 1e-5)"};
}

// 3. Weighted least squares against a derivative-free minimizer.
Verdict wls_oracle() {
  std::mt19937_64 rng(78);
  double worst = 0.0;
  for (int rep = 0; rep < 10; ++rep) {
    const int p = rep % 4;
    const Signal s = oracle::uniform_signal(20, 0.0, 2.0, rng);
    const DesignMatrices d = build_designs(s, ModelSpec{2, p, 1});
    const MatrixXd tau = oracle::random_stochastic(20, 2, rng);
    const RegressionUpdate up = m_step_regression(s, d, Responsibilities{tau}, 0, 0.0);
    auto wsse = [&](const VectorXd& b) {
      return tau.col(0).dot((s.x - d.R * b).array().square().matrix());
    };
    const VectorXd ref = oracle::powell_minimize(wsse, VectorXd::Zero(p + 1));
    worst = std::max(worst, (up.beta - ref).cwiseAbs().maxCoeff());
  }
  return {worst < 1e-8, "max coordinate difference " + fmt("%.3g", worst) + " (< 1e-8)"};
}

// 4. K = 1 reduces to OLS and its maximized Gaussian log-likelihood.
Verdict single_component() {
  std::mt19937_64 rng(79);
  double worst_beta = 0.0, worst_ll = 0.0;
  for (int rep = 0; rep < 5; ++rep) {
    const int p = rep % 4;
    Signal s = oracle::uniform_signal(60 + 40 * rep, 0.0, 3.0, rng, 0.5);
    for (Index i = 0; i < s.size(); ++i) s.x[i] += 1.0 + std::sin(s.t[i]);
    const FitResult r = em_fit(s, ModelSpec{1, p, 1}, FitOptions{});
    // Closed form via long-double normal equations.
    using MatL = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
    using VecL = Eigen::Matrix<long double, Eigen::Dynamic, 1>;
    const MatL R = vandermonde(s.t, p).cast<long double>();
    const VecL x = s.x.cast<long double>();
    const VecL beta = (R.transpose() * R).fullPivLu().solve(R.transpose() * x);
    const long double s2 = (x - R * beta).squaredNorm() / static_cast<long double>(s.size());
    const double ll = static_cast<double>(
        -0.5L * static_cast<long double>(s.size()) *
        (std::log(2.0L * std::numbers::pi_v<long double> * s2) + 1.0L));
    worst_beta = std::max(worst_beta,
                          (r.theta.beta.row(0).transpose() - beta.cast<double>()).cwiseAbs().maxCoeff());
    worst_ll = std::max(worst_ll, std::abs(r.loglik() - ll));
  }
  return {worst_beta < 1e-8 && worst_ll < 1e-8,
          "max |beta - OLS| " + fmt("%.3g", worst_beta) + ", max |L - L_OLS| " +
              fmt("%.3g", worst_ll) + " (< 1e-8)"};
}

// 5. DP optimum equals exhaustive enumeration.
Verdict dp_optimality() {
  std::mt19937_64 rng(80);
  int matches = 0;
  double worst_direct = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    const int K = 1 + rep % 3, p = rep % 3;
    const Index m = p + 2;
    const Index n = std::max<Index>(K * m, 12 + rep % 14);
    const Signal s = oracle::uniform_signal(n, 0.0, 5.0, rng, 2.0);
    const PiecewiseFit f = piecewise_fit(s, K, p, m);
    const IntervalCosts c(s, p, m);
    double best = std::numeric_limits<double>::infinity();
    std::vector<Index> best_cuts;
    if (K == 1) best = c(0, n - 1);
    for (Index a = m; K >= 2 && a <= n - (K - 1) * m; ++a) {
      if (K == 2) {
        best = std::min(best, c(0, a - 1) + c(a, n - 1));
        continue;
      }
      for (Index b = a + m; b <= n - m; ++b) best = std::min(best, c(0, a - 1) + c(a, b - 1) + c(b, n - 1));
    }
    if (f.sse == best) ++matches;
    // The interval costs themselves against a direct solve.
    double direct = 0.0;
    Index first = 0;
    for (int seg = 0; seg < K; ++seg) {
      const Index end = seg + 1 < K ? f.cuts[static_cast<std::size_t>(seg)] : n;
      direct += segment_sse(s, p, first, end - 1);
      first = end;
    }
    worst_direct = std::max(worst_direct, std::abs(direct - f.sse) / (1.0 + direct));
  }
  return {matches == 20 && worst_direct < 1e-9,
          std::to_string(matches) + "/20 exact matches; partition cost vs direct OLS rel " +
              fmt("%.3g", worst_direct)};
}

// 6. BIC selection over K 2..8, p 0..6 on 20 replicates of the default model.
Verdict bic_study(int workers) {
  const auto start = std::chrono::steady_clock::now();
  FitOptions o;
  o.n_restarts = 3;
  std::map<GridKey, int> picks;
  int failures = 0;
  for (int rep = 0; rep < 20; ++rep) {
    const SimulatedSignal sim = generate(default_generator_config(500, 6000 + static_cast<std::uint64_t>(rep)));
    o.rng_seed = static_cast<std::uint64_t>(rep);
    try {
      ++picks[select_model(sim.signal, {2, 8}, {0, 6}, 1, o, workers).best];
    } catch (const std::exception&) {
      ++failures;
    }
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const int target = picks.count(GridKey{3, 2}) ? picks[GridKey{3, 2}] : 0;
  int runner_up = 0;
  std::string hist;
  for (const auto& [key, count] : picks) {
    if (key != GridKey{3, 2}) runner_up = std::max(runner_up, count);
    hist += " (" + std::to_string(key.first) + "," + std::to_string(key.second) + "):" +
            std::to_string(count);
  }
  Verdict v;
  v.pass = target >= 12 && target > runner_up;
  v.detail = "(3,2) chosen " + std::to_string(target) + "/20 (need >= 12 and strictly modal);" +
             hist + "; " + std::to_string(failures) + " failed; " + fmt("%.0f", secs) + " s with " +
             std::to_string(workers) + " worker(s)";
  return v;
}

StudyTable default_study(int workers) {
  StudyConfig cfg;
  cfg.base.rng_seed = 2024;
  return run_study(cfg, FitOptions{}, workers);
}

// 7. Trends of the study table.
Verdict study_orderings(const StudyTable& t) {
  int inversions = 0;
  std::string seq;
  for (std::size_t j = 0; j < t.rows.size(); ++j) {
    if (j > 0 && t.rows[j].rhlp_misclassification > t.rows[j - 1].rhlp_misclassification) ++inversions;
    seq += (j ? ", " : "") + fmt("%.4f", t.rows[j].rhlp_misclassification);
  }
  const StudyRow& last = t.rows.back();
  const bool ordered = last.rhlp_denoising_error <= last.piecewise_denoising_error;
  return {inversions <= 1 && ordered && last.n == 1000,
          "(a) misclassification by n [" + seq + "], " + std::to_string(inversions) +
              " inversion(s) (<= 1); (b) n=1000 denoising RHLP " +
              fmt("%.5f", last.rhlp_denoising_error) + " vs piecewise " +
              fmt("%.5f", last.piecewise_denoising_error)};
}

// 8. Median misclassification at n = 1000.
Verdict segmentation_quality(const StudyTable& t) {
  std::vector<double> rates;
  for (const auto& m : t.replicates)
    if (m.n == 1000 && m.ok) rates.push_back(m.rhlp_misclassification);
  if (rates.empty()) return {false, "no successful replicate at n=1000"};
  std::sort(rates.begin(), rates.end());
  const std::size_t h = rates.size() / 2;
  const double median = rates.size() % 2 ? rates[h] : 0.5 * (rates[h - 1] + rates[h]);
  return {median < 0.05 && rates.size() == 20,
          "median " + fmt("%.4f", median) + " over " + std::to_string(rates.size()) +
              " replicates (< 0.05)"};
}

std::uint64_t bits(double v) {
  std::uint64_t b;
  std::memcpy(&b, &v, sizeof b);
  return b;
}

bool same_bits(const MatrixXd& a, const MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  for (Index i = 0; i < a.size(); ++i)
    if (bits(a.data()[i]) != bits(b.data()[i])) return false;
  return true;
}

// 9. Serialization round trip through the fit file.
Verdict round_trip(const fs::path& dir) {
  std::mt19937_64 rng(81);
  std::uniform_real_distribution<double> expo(-30.0, 30.0);
  int ok = 0;
  for (int rep = 0; rep < 100; ++rep) {
    const ModelSpec spec{1 + rep % 7, rep % 6, rep % 3};
    FitResult fit;
    fit.theta = oracle::random_theta(spec, rng);
    fit.theta.beta *= std::pow(10.0, expo(rng));
    fit.theta.sigma2 *= std::pow(10.0, expo(rng));
    fit.loglik_trace = {-std::pow(10.0, expo(rng) / 10.0)};
    fit.denoised = VectorXd::Zero(10);
    const std::string path = (dir / "theta.json").string();
    write_fit_json(fit, TimeScaling{}, path);
    const FitRecord rec = read_fit_json(path);
    if (rec.theta.spec == spec && same_bits(rec.theta.w.w, fit.theta.w.w) &&
        same_bits(rec.theta.beta, fit.theta.beta) && same_bits(rec.theta.sigma2, fit.theta.sigma2) &&
        bits(rec.loglik) == bits(fit.loglik()))
      ++ok;
  }
  return {ok == 100, std::to_string(ok) + "/100 bitwise round trips"};
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// 10. Two CLI study runs with the same seed give identical bytes.
Verdict determinism(const fs::path& dir, int workers) {
  std::ostringstream out, err;
  const std::string a = (dir / "study_a.csv").string(), b = (dir / "study_b.csv").string();
  const std::string w = std::to_string(workers);
  const int ca = run_cli({"--workers", w, "study", "--study-seed", "11", "--output", a}, out, err);
  const int cb = run_cli({"--workers", w, "study", "--study-seed", "11", "--output", b}, out, err);
  const std::string sa = slurp(a), sb = slurp(b);
  const bool same = ca == 0 && cb == 0 && !sa.empty() && sa == sb;
  return {same, "default study (4 sizes x 20 replicates) twice: " +
                    std::string(same ? "byte-identical" : "outputs differ or failed") + ", " +
                    std::to_string(sa.size()) + " bytes"};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  auto want = [&](int c) { return wanted.empty() || wanted.count(c) > 0; };

  const int workers = default_workers();
  const fs::path dir = fs::temp_directory_path() / "rhlp_acceptance";
  fs::create_directories(dir);

  int failed = 0;
  auto report = [&](int id, const char* name, const std::function<Verdict()>& check) {
    if (!want(id)) return;
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    if (!v.pass) ++failed;
    std::printf("[%s] %2d %s: %s\n", v.pass ? "PASS" : "FAIL", id, name, v.detail.c_str());
    std::fflush(stdout);
  };

  report(1, "EM monotonicity", em_monotonicity);
  report(2, "IRLS gradient oracle", irls_gradient);
  report(3, "WLS oracle", wls_oracle);
  report(4, "K=1 reduction", single_component);
  report(5, "DP baseline optimality", dp_optimality);
  report(6, "BIC selection study", [&] { return bic_study(workers); });
  if (want(7) || want(8)) {
    const StudyTable study = default_study(workers);
    report(7, "study orderings", [&] { return study_orderings(study); });
    report(8, "segmentation quality", [&] { return segmentation_quality(study); });
  }
  report(9, "serialization round trip", [&] { return round_trip(dir); });
  report(10, "study determinism", [&] { return determinism(dir, workers); });

  fs::remove_all(dir);
  std::printf("%s\n", failed ? "acceptance: FAILED" : "acceptance: all criteria passed");
  return failed ? 1 : 0;
}

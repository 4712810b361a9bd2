#include "rhlp/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include "rhlp/parallel.hpp"
#include "rhlp/piecewise.hpp"

namespace rhlp {
namespace {

constexpr double kTransitionSharpness = 40.0;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

void GeneratorConfig::validate() const {
  spec.validate();
  if (!(theta_true.spec == spec)) throw std::invalid_argument("generator: theta spec mismatch");
  theta_true.validate(/*allow_zero_variance=*/true);
  if (!(t_end > t_start)) throw std::invalid_argument("generator: t_end must exceed t_start");
  if (n < 1) throw std::invalid_argument("generator: n must be >= 1");
}

Theta default_theta() {
  const double lam = kTransitionSharpness;
  Theta theta;
  theta.spec = ModelSpec{3, 2, 1};
  theta.w.w.resize(3, 2);
  theta.w.w << 5.0 * lam, -2.0 * lam,  //
      3.3 * lam, -lam,                 //
      0.0, 0.0;
  theta.beta.resize(3, 3);
  theta.beta << 10.0, 4.0, -2.0,  //
      2.0, 3.0, -0.5,             //
      30.0, -10.0, 1.5;
  theta.sigma2.resize(3);
  theta.sigma2 << 0.25, 0.16, 0.36;
  return theta;
}

GeneratorConfig default_generator_config(Index n, std::uint64_t seed) {
  GeneratorConfig cfg;
  cfg.theta_true = default_theta();
  cfg.spec = cfg.theta_true.spec;
  cfg.n = n;
  cfg.rng_seed = seed;
  return cfg;
}

SimulatedSignal generate(const GeneratorConfig& config) {
  config.validate();
  const Index n = config.n;
  const int K = config.spec.K;

  SimulatedSignal out;
  out.signal.t.resize(n);
  const double step = n > 1 ? (config.t_end - config.t_start) / static_cast<double>(n - 1) : 0.0;
  for (Index i = 0; i < n; ++i) out.signal.t[i] = config.t_start + step * static_cast<double>(i);

  const DesignMatrices designs = build_designs(out.signal, config.spec);
  const MatrixXd pi = gates(config.theta_true.w, designs.V).pi;
  const MatrixXd means = component_means(designs, config.theta_true);

  std::mt19937_64 rng(config.rng_seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  out.signal.x.resize(n);
  out.z_true.z.resize(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const double u = unif(rng);
    int k = 0;
    double cum = pi(i, 0);
    while (k + 1 < K && u >= cum) cum += pi(i, ++k);
    const double eps = noise(rng);
    out.z_true.z[static_cast<std::size_t>(i)] = k + 1;
    out.signal.x[i] = means(i, k) + std::sqrt(config.theta_true.sigma2[k]) * eps;
  }
  out.clean = denoise(designs, config.theta_true);
  return out;
}

double misclassification_rate(const Segmentation& a, const Segmentation& b, int K) {
  if (a.z.size() != b.z.size())
    throw std::invalid_argument("misclassification_rate: length mismatch");
  if (K < 1 || K > 20) throw std::invalid_argument("misclassification_rate: K out of range");
  if (a.z.empty()) return 0.0;

  const auto Ku = static_cast<std::size_t>(K);
  std::vector<long> table(Ku * Ku, 0);
  for (std::size_t i = 0; i < a.z.size(); ++i) {
    const int la = a.z[i];
    const int lb = b.z[i];
    if (la < 1 || la > K || lb < 1 || lb > K)
      throw std::invalid_argument("misclassification_rate: label out of range at index " +
                                  std::to_string(i));
    ++table[static_cast<std::size_t>(la - 1) * Ku + static_cast<std::size_t>(lb - 1)];
  }

  // Maximum-weight assignment by DP over the set of used columns: row r is
  // matched when popcount(mask) == r.
  const std::size_t full = std::size_t{1} << Ku;
  std::vector<long> best(full, -1);
  best[0] = 0;
  for (std::size_t mask = 0; mask < full; ++mask) {
    if (best[mask] < 0) continue;
    const auto row = static_cast<std::size_t>(__builtin_popcountll(mask));
    if (row == Ku) continue;
    for (std::size_t col = 0; col < Ku; ++col) {
      if (mask & (std::size_t{1} << col)) continue;
      const std::size_t next = mask | (std::size_t{1} << col);
      best[next] = std::max(best[next], best[mask] + table[row * Ku + col]);
    }
  }
  return 1.0 - static_cast<double>(best[full - 1]) / static_cast<double>(a.z.size());
}

double denoising_error(const VectorXd& xhat, const VectorXd& clean) {
  if (xhat.size() != clean.size()) throw std::invalid_argument("denoising_error: length mismatch");
  if (xhat.size() == 0) return 0.0;
  return (xhat - clean).norm() / static_cast<double>(xhat.size());
}

std::uint64_t replicate_seed(std::uint64_t base, Index n, int replicate) {
  return splitmix64(splitmix64(base ^ static_cast<std::uint64_t>(n)) +
                    static_cast<std::uint64_t>(replicate));
}

StudyTable run_study(const StudyConfig& config, const FitOptions& opts, int workers) {
  if (config.ns.empty() || config.n_replicates < 1)
    throw std::invalid_argument("run_study: need at least one n and one replicate");
  config.base.validate();

  const auto reps = static_cast<std::size_t>(config.n_replicates);
  StudyTable table;
  table.replicates.resize(config.ns.size() * reps);
  FitOptions fit_opts = opts;
  fit_opts.workers = 1;

  parallel_for(table.replicates.size(), workers, [&](std::size_t idx) {
    ReplicateMetrics& m = table.replicates[idx];
    m.n = config.ns[idx / reps];
    m.replicate = static_cast<int>(idx % reps);
    try {
      GeneratorConfig gen = config.base;
      gen.n = m.n;
      gen.rng_seed = replicate_seed(config.base.rng_seed, m.n, m.replicate);
      const SimulatedSignal sim = generate(gen);
      const int K = gen.spec.K;
      const FitResult fit = em_fit(sim.signal, gen.spec, fit_opts);
      const PiecewiseFit pw = piecewise_fit(sim.signal, K, gen.spec.p);
      m.rhlp_misclassification = misclassification_rate(sim.z_true, fit.segmentation, K);
      m.piecewise_misclassification = misclassification_rate(sim.z_true, pw.segmentation, K);
      m.rhlp_denoising_error = denoising_error(fit.denoised, sim.clean);
      m.piecewise_denoising_error = denoising_error(pw.denoised, sim.clean);
      m.ok = true;
    } catch (const std::exception&) {
      m.ok = false;
    }
  });

  for (std::size_t j = 0; j < config.ns.size(); ++j) {
    StudyRow row;
    row.n = config.ns[j];
    for (std::size_t r = 0; r < reps; ++r) {
      const ReplicateMetrics& m = table.replicates[j * reps + r];
      if (!m.ok) {
        ++row.failures;
        continue;
      }
      ++row.replicates;
      row.rhlp_misclassification += m.rhlp_misclassification;
      row.piecewise_misclassification += m.piecewise_misclassification;
      row.rhlp_denoising_error += m.rhlp_denoising_error;
      row.piecewise_denoising_error += m.piecewise_denoising_error;
    }
    if (row.replicates > 0) {
      const double c = row.replicates;
      row.rhlp_misclassification /= c;
      row.piecewise_misclassification /= c;
      row.rhlp_denoising_error /= c;
      row.piecewise_denoising_error /= c;
    }
    table.rows.push_back(row);
  }
  return table;
}

}  // namespace rhlp

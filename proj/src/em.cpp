#include "rhlp/em.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>

#include "rhlp/errors.hpp"
#include "rhlp/kernels.hpp"
#include "rhlp/parallel.hpp"

namespace rhlp {
namespace {

constexpr double kRelTolEpsilon = 1e-12;
constexpr double kRidgeFactor = 1e-8;
constexpr int kMaxHalvings = 30;
constexpr int kInitIrlsIters = 5;
constexpr double kGainNoise = 64.0 * std::numeric_limits<double>::epsilon();
// Regimes whose total responsibility falls below this keep their previous
// regression parameters; their contribution to Q2 is negligible either way.
constexpr double kEmptyWeight = 1e-10;

GateWeights with_free_params(const GateWeights& base, const VectorXd& theta_free) {
  GateWeights out = base;
  const Index d = base.w.cols();
  for (Index k = 0; k + 1 < base.w.rows(); ++k)
    out.w.row(k) = theta_free.segment(k * d, d).transpose();
  return out;
}

VectorXd free_params(const GateWeights& w) {
  const Index d = w.w.cols();
  VectorXd out((w.w.rows() - 1) * d);
  for (Index k = 0; k + 1 < w.w.rows(); ++k) out.segment(k * d, d) = w.w.row(k).transpose();
  return out;
}

std::vector<Index> uniform_starts(Index n, int K) {
  std::vector<Index> starts(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) starts[static_cast<std::size_t>(k)] = (k * n) / K;
  return starts;
}

Index block_length(const std::vector<Index>& starts, std::size_t j, Index n) {
  return (j + 1 < starts.size() ? starts[j + 1] : n) - starts[j];
}

// Merges the first undersized block with a neighbour and splits the union
// at its midpoint until every block holds min_len points. Falls back to the
// uniform partition when that does not settle.
std::vector<Index> repair_blocks(std::vector<Index> starts, Index n, Index min_len) {
  const std::size_t K = starts.size();
  for (std::size_t attempt = 0; attempt < 4 * K + 4; ++attempt) {
    std::size_t bad = K;
    for (std::size_t j = 0; j < K; ++j) {
      if (block_length(starts, j, n) < min_len) {
        bad = j;
        break;
      }
    }
    if (bad == K) return starts;
    const std::size_t lo = bad + 1 < K ? bad : bad - 1;
    const Index begin = starts[lo];
    const Index end = lo + 2 < K ? starts[lo + 2] : n;
    starts[lo + 1] = begin + (end - begin) / 2;
  }
  return uniform_starts(n, static_cast<int>(K));
}

struct BlockFit {
  VectorXd beta;
  double sigma2;
};

BlockFit ols_block(const Signal& signal, const DesignMatrices& designs, Index begin,
                   Index len, double floor) {
  const auto A = designs.R.middleRows(begin, len);
  const auto b = signal.x.segment(begin, len);
  Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(A);
  VectorXd beta = cod.solve(b);
  const double mse = (b - A * beta).squaredNorm() / static_cast<double>(len);
  return BlockFit{std::move(beta), std::max(mse, floor)};
}

}  // namespace

void FitOptions::validate() const {
  if (max_em_iters < 1 || n_restarts < 1 || irls_max_iters < 1)
    throw std::invalid_argument("fit options: iteration counts must be >= 1");
  if (!(em_rel_tol > 0.0) || !(irls_grad_tol > 0.0) || !(variance_floor_factor > 0.0))
    throw std::invalid_argument("fit options: tolerances must be > 0");
}

EStepResult e_step(const Signal& signal, const DesignMatrices& designs, const Theta& theta) {
  MatrixXd joint = joint_log_density(signal, designs, theta);
  VectorXd lse(joint.rows());
  kernels::active().softmax_rows(joint.data(), static_cast<std::size_t>(joint.rows()),
                                 static_cast<std::size_t>(joint.cols()), lse.data());
  return EStepResult{Responsibilities{std::move(joint)}, lse.sum()};
}

RegressionUpdate m_step_regression(const Signal& signal, const DesignMatrices& designs,
                                   const Responsibilities& tau, Index k,
                                   double variance_floor) {
  const VectorXd weights = tau.tau.col(k);
  const double total = weights.sum();
  if (!(total > 0.0)) throw NumericalError("empty component");

  const VectorXd sw = weights.cwiseSqrt();
  const MatrixXd A = designs.R.array().colwise() * sw.array();
  const VectorXd b = signal.x.cwiseProduct(sw);
  Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(A);

  RegressionUpdate out;
  out.beta = cod.solve(b);
  out.rank_deficient = cod.rank() < designs.R.cols();

  const VectorXd mean = designs.R * out.beta;
  const double sse = kernels::active().weighted_sse(weights.data(), signal.x.data(), mean.data(),
                                                    static_cast<std::size_t>(mean.size()));
  out.sigma2 = sse / total;
  if (out.sigma2 <= variance_floor) {
    out.sigma2 = variance_floor;
    out.floored = true;
  }
  return out;
}

namespace {

// Gate values, their logs and Q1 at one w, from a single softmax pass.
struct GateEval {
  MatrixXd pi;
  MatrixXd log_pi;
  double objective = 0.0;
};

GateEval evaluate_gates(const MatrixXd& tau, const MatrixXd& V, const GateWeights& w) {
  GateEval ev;
  ev.log_pi = gate_scores(w, V);
  ev.pi = ev.log_pi;
  VectorXd lse(V.rows());
  kernels::active().softmax_rows(ev.pi.data(), static_cast<std::size_t>(ev.pi.rows()),
                                 static_cast<std::size_t>(ev.pi.cols()), lse.data());
  ev.log_pi.colwise() -= lse;
  ev.objective = tau.cwiseProduct(ev.log_pi).sum();
  return ev;
}

VectorXd gradient_from(const MatrixXd& tau, const MatrixXd& V, const MatrixXd& pi,
                       const VectorXd& row_mass) {
  const Index K = pi.cols();
  const Index d = V.cols();
  MatrixXd resid = tau.leftCols(K - 1) - (pi.leftCols(K - 1).array().colwise() * row_mass.array()).matrix();
  const MatrixXd g = V.transpose() * resid;  // d x (K-1)
  return Eigen::Map<const VectorXd>(g.data(), d * (K - 1));
}

// Row i of the result is vec(v_i v_i^T).
MatrixXd outer_products(const MatrixXd& V) {
  const Index d = V.cols();
  MatrixXd out(V.rows(), d * d);
  for (Index a = 0; a < d; ++a)
    for (Index b = 0; b < d; ++b) out.col(a * d + b) = V.col(a).cwiseProduct(V.col(b));
  return out;
}

MatrixXd hessian_from(const MatrixXd& pi, const VectorXd& row_mass, const MatrixXd& outer,
                      Index d) {
  const Index K = pi.cols();
  const Index free = K - 1;
  const Index pairs = free * (free + 1) / 2;
  MatrixXd coef(pi.rows(), pairs);
  Index c = 0;
  for (Index k = 0; k < free; ++k) {
    const VectorXd base = row_mass.cwiseProduct(pi.col(k));
    for (Index l = k; l < free; ++l, ++c) {
      coef.col(c) = -base.cwiseProduct(pi.col(l));
      if (l == k) coef.col(c) += base;
    }
  }
  const MatrixXd blocks = outer.transpose() * coef;  // d*d x pairs
  MatrixXd H(free * d, free * d);
  c = 0;
  for (Index k = 0; k < free; ++k) {
    for (Index l = k; l < free; ++l, ++c) {
      const Eigen::Map<const MatrixXd> block(blocks.col(c).data(), d, d);
      H.block(k * d, l * d, d, d) = -block;
      if (l != k) H.block(l * d, k * d, d, d) = -block.transpose();
    }
  }
  return H;
}

}  // namespace

double gate_objective(const MatrixXd& tau, const MatrixXd& V, const GateWeights& w) {
  return evaluate_gates(tau, V, w).objective;
}

VectorXd gate_gradient(const MatrixXd& tau, const MatrixXd& V, const GateWeights& w) {
  const GateEval ev = evaluate_gates(tau, V, w);
  return gradient_from(tau, V, ev.pi, tau.rowwise().sum());
}

MatrixXd gate_hessian(const MatrixXd& tau, const MatrixXd& V, const GateWeights& w) {
  const GateEval ev = evaluate_gates(tau, V, w);
  return hessian_from(ev.pi, tau.rowwise().sum(), outer_products(V), V.cols());
}

IrlsResult irls_gates(const Responsibilities& tau, const MatrixXd& V,
                      const GateWeights& w_init, const IrlsOptions& opts) {
  IrlsResult out;
  out.w = w_init;
  GateEval ev = evaluate_gates(tau.tau, V, out.w);
  out.objective = ev.objective;
  if (w_init.w.rows() <= 1) {
    out.converged = true;
    return out;
  }

  const VectorXd row_mass = tau.tau.rowwise().sum();
  const MatrixXd outer = outer_products(V);
  const Index d = V.cols();
  VectorXd current = free_params(out.w);
  const Index dim = current.size();
  bool stalled = false;
  VectorXd g = gradient_from(tau.tau, V, ev.pi, row_mass);
  while (true) {
    if (g.lpNorm<Eigen::Infinity>() < opts.grad_tol) {
      out.converged = true;
      break;
    }
    if (out.iters >= opts.max_iters) break;

    MatrixXd neg_h = -hessian_from(ev.pi, row_mass, outer, d);
    const double tr = neg_h.trace();
    const double ridge = tr > 0.0 ? kRidgeFactor * tr / static_cast<double>(dim) : kRidgeFactor;
    neg_h.diagonal().array() += ridge;
    const VectorXd step = neg_h.ldlt().solve(g);
    if (!step.allFinite()) {
      stalled = true;
      break;
    }
    // Predicted gain below the rounding noise of Q1 itself: no step can be
    // verified as an ascent, so stop here.
    if (0.5 * g.dot(step) <= kGainNoise * (1.0 + std::abs(out.objective))) {
      stalled = true;
      break;
    }

    bool accepted = false;
    double scale = 1.0;
    for (int h = 0; h <= kMaxHalvings; ++h, scale *= 0.5) {
      const VectorXd trial = current + scale * step;
      GateWeights w_trial = with_free_params(out.w, trial);
      GateEval trial_ev = evaluate_gates(tau.tau, V, w_trial);
      if (trial_ev.objective >= out.objective) {
        current = trial;
        out.w = std::move(w_trial);
        out.objective = trial_ev.objective;
        ev = std::move(trial_ev);
        accepted = true;
        break;
      }
    }
    ++out.iters;
    if (!accepted) {
      stalled = true;
      break;
    }
    g = gradient_from(tau.tau, V, ev.pi, row_mass);
  }
  out.saturated = !out.converged && !stalled;
  return out;
}

double variance_floor(const Signal& signal, double factor) {
  const double mean = signal.x.mean();
  double var = (signal.x.array() - mean).square().mean();
  if (!(var > 0.0)) var = 1.0;
  return factor * var;
}

Initialization initialize(const Signal& signal, const DesignMatrices& designs,
                          const ModelSpec& spec, InitStrategy strategy, std::mt19937_64& rng,
                          double variance_floor) {
  const Index n = signal.size();
  const int K = spec.K;
  if (n < K) throw DataError("insufficient data: n < K");
  const Index min_len = spec.p + 2;

  Initialization out;
  out.undersized = n < static_cast<Index>(K) * min_len;

  if (strategy == InitStrategy::uniform_segments || K == 1 || out.undersized) {
    out.block_starts = uniform_starts(n, K);
  } else {
    std::vector<Index> cuts;
    std::uniform_int_distribution<Index> pick(1, n - 1);
    while (cuts.size() + 1 < static_cast<std::size_t>(K)) {
      const Index c = pick(rng);
      if (std::find(cuts.begin(), cuts.end(), c) == cuts.end()) cuts.push_back(c);
    }
    std::sort(cuts.begin(), cuts.end());
    out.block_starts.push_back(0);
    out.block_starts.insert(out.block_starts.end(), cuts.begin(), cuts.end());
    out.block_starts = repair_blocks(std::move(out.block_starts), n, min_len);
  }

  Theta& theta = out.theta;
  theta.spec = spec;
  theta.beta.resize(K, spec.reg_dim());
  theta.sigma2.resize(K);
  MatrixXd membership = MatrixXd::Zero(n, K);
  for (int k = 0; k < K; ++k) {
    const auto j = static_cast<std::size_t>(k);
    const Index begin = out.block_starts[j];
    const Index len = block_length(out.block_starts, j, n);
    const BlockFit fit = ols_block(signal, designs, begin, len, variance_floor);
    theta.beta.row(k) = fit.beta.transpose();
    theta.sigma2[k] = fit.sigma2;
    membership.block(begin, k, len, 1).setOnes();
  }

  theta.w = GateWeights::zeros(spec);
  if (K > 1) {
    IrlsOptions init_opts;
    init_opts.max_iters = kInitIrlsIters;
    theta.w = irls_gates(Responsibilities{std::move(membership)}, designs.V, theta.w, init_opts).w;
  }
  return out;
}

FitResult em_run(const Signal& signal, const DesignMatrices& designs, Theta theta,
                 const FitOptions& opts, double variance_floor) {
  FitResult res;
  EStepResult es = e_step(signal, designs, theta);
  if (!std::isfinite(es.loglik)) throw NumericalError("non-finite log-likelihood at start");
  res.loglik_trace.push_back(es.loglik);

  IrlsOptions irls_opts;
  irls_opts.max_iters = opts.irls_max_iters;
  irls_opts.grad_tol = opts.irls_grad_tol;

  const int K = theta.spec.K;
  for (int iter = 1; iter <= opts.max_em_iters; ++iter) {
    bool rank_deficient = false;
    for (int k = 0; k < K; ++k) {
      if (es.responsibilities.tau.col(k).sum() <= kEmptyWeight) continue;
      const RegressionUpdate upd =
          m_step_regression(signal, designs, es.responsibilities, k, variance_floor);
      theta.beta.row(k) = upd.beta.transpose();
      theta.sigma2[k] = upd.sigma2;
      rank_deficient = rank_deficient || upd.rank_deficient;
    }
    const IrlsResult irls = irls_gates(es.responsibilities, designs.V, theta.w, irls_opts);
    theta.w = irls.w;
    res.irls_iters += irls.iters;
    res.gates_saturated = irls.saturated;
    res.rank_deficient = rank_deficient;

    const double previous = es.loglik;
    es = e_step(signal, designs, theta);
    if (!std::isfinite(es.loglik)) throw NumericalError("non-finite log-likelihood");
    res.loglik_trace.push_back(es.loglik);
    res.n_iters = iter;
    if (std::abs(es.loglik - previous) / (std::abs(previous) + kRelTolEpsilon) < opts.em_rel_tol) {
      res.converged = true;
      break;
    }
  }

  res.gate_matrix = gates(theta.w, designs.V);
  res.segmentation = segment(res.gate_matrix);
  res.component_curves = component_means(designs, theta);
  res.denoised = res.gate_matrix.pi.cwiseProduct(res.component_curves).rowwise().sum();
  res.responsibilities = std::move(es.responsibilities);
  res.variance_floor_active = (theta.sigma2.array() <= variance_floor).any();
  res.theta = std::move(theta);
  return res;
}

FitResult em_fit(const Signal& signal, const ModelSpec& spec, const FitOptions& opts) {
  spec.validate();
  signal.validate();
  opts.validate();
  if (signal.size() < spec.K) throw DataError("insufficient data: n < K");

  const DesignMatrices designs = build_designs(signal, spec);
  const double floor = rhlp::variance_floor(signal, opts.variance_floor_factor);

  const auto restarts = static_cast<std::size_t>(opts.n_restarts);
  std::vector<std::optional<FitResult>> results(restarts);
  std::vector<std::string> failures(restarts);
  parallel_for(restarts, opts.workers, [&](std::size_t r) {
    try {
      std::mt19937_64 rng(opts.rng_seed + r);
      const InitStrategy strategy =
          r == 0 ? opts.init_strategy : InitStrategy::random_segments;
      Initialization init = initialize(signal, designs, spec, strategy, rng, floor);
      FitResult fit = em_run(signal, designs, std::move(init.theta), opts, floor);
      fit.restart_index = static_cast<int>(r);
      fit.undersized_init = init.undersized;
      results[r] = std::move(fit);
    } catch (const std::exception& e) {
      failures[r] = e.what();
    }
  });

  std::optional<std::size_t> best;
  for (std::size_t r = 0; r < restarts; ++r) {
    if (!results[r]) continue;
    if (!best || results[r]->loglik() > results[*best]->loglik()) best = r;
  }
  if (!best) throw NumericalError("every EM restart failed: " + failures.front());
  return std::move(*results[*best]);
}

int default_workers() {
  if (const char* env = std::getenv("RHLP_WORKERS")) {
    int value = 0;
    const auto* end = env + std::strlen(env);
    if (auto [ptr, ec] = std::from_chars(env, end, value); ec == std::errc{} && ptr == end &&
                                                           value > 0)
      return value;
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

}  // namespace rhlp

#pragma once

// Maximum-likelihood fitting by EM. The E-step computes posterior regime
// memberships; the M-step solves one weighted least-squares problem per
// regime and improves the gate weights with a safeguarded multi-class IRLS
// (Newton) ascent on the weighted multinomial-logit objective.

#include <cstdint>
#include <random>
#include <vector>

#include "rhlp/model.hpp"

namespace rhlp {

// n x K posterior probabilities t_ik; rows sum to one.
struct Responsibilities {
  MatrixXd tau;
};

enum class InitStrategy { uniform_segments, random_segments };

struct FitOptions {
  int max_em_iters = 1000;
  double em_rel_tol = 1e-8;
  int n_restarts = 10;
  int irls_max_iters = 50;
  double irls_grad_tol = 1e-6;
  double variance_floor_factor = 1e-10;
  std::uint64_t rng_seed = 0;
  InitStrategy init_strategy = InitStrategy::uniform_segments;
  // Restarts run on up to this many threads; results do not depend on it.
  int workers = 1;

  void validate() const;
};

struct FitResult {
  Theta theta;
  std::vector<double> loglik_trace;
  Responsibilities responsibilities;
  GateMatrix gate_matrix;
  Segmentation segmentation;
  VectorXd denoised;
  MatrixXd component_curves;  // n x K, beta_k . r_i
  int n_iters = 0;
  int irls_iters = 0;  // inner Newton iterations summed over all M-steps
  bool converged = false;
  int restart_index = 0;

  // Diagnostics.
  bool variance_floor_active = false;
  bool gates_saturated = false;
  bool rank_deficient = false;
  bool undersized_init = false;

  double loglik() const { return loglik_trace.back(); }
};

struct EStepResult {
  Responsibilities responsibilities;
  double loglik = 0.0;
};

EStepResult e_step(const Signal& signal, const DesignMatrices& designs, const Theta& theta);

struct RegressionUpdate {
  VectorXd beta;
  double sigma2 = 0.0;
  bool rank_deficient = false;
  bool floored = false;
};

// Weighted least squares for regime k (0-based) using column k of tau as
// weights, via an orthogonal factorization of the sqrt-weighted design.
// sigma2 is max(weighted mean squared residual, variance_floor). Throws
// NumericalError("empty component") when every weight is zero.
RegressionUpdate m_step_regression(const Signal& signal, const DesignMatrices& designs,
                                   const Responsibilities& tau, Index k,
                                   double variance_floor);

struct IrlsOptions {
  int max_iters = 50;
  double grad_tol = 1e-6;
};

struct IrlsResult {
  GateWeights w;
  double objective = 0.0;
  int iters = 0;
  bool converged = false;
  bool saturated = false;
};

// Q1(w) = sum_i sum_k tau_ik log pi_ik(w).
double gate_objective(const MatrixXd& tau, const MatrixXd& V, const GateWeights& w);
// Gradient of Q1 with respect to the free rows 0..K-2, stacked row by row:
// entry k*(q+1)+j is dQ1/dw_kj.
VectorXd gate_gradient(const MatrixXd& tau, const MatrixXd& V, const GateWeights& w);
// Hessian of Q1 in the same stacking (negative semi-definite).
MatrixXd gate_hessian(const MatrixXd& tau, const MatrixXd& V, const GateWeights& w);

// Newton ascent on Q1 from w_init with a relative ridge and step halving.
// The returned objective never falls below Q1(w_init).
IrlsResult irls_gates(const Responsibilities& tau, const MatrixXd& V,
                      const GateWeights& w_init, const IrlsOptions& opts);

struct Initialization {
  Theta theta;
  std::vector<Index> block_starts;  // K entries, first is 0
  bool undersized = false;          // n < K (p + 2)
};

// Contiguous-block initialization: OLS per block, gates fitted to the block
// memberships with at most five IRLS iterations.
Initialization initialize(const Signal& signal, const DesignMatrices& designs,
                          const ModelSpec& spec, InitStrategy strategy, std::mt19937_64& rng,
                          double variance_floor);

// Lower bound imposed on every sigma2_k for this signal.
double variance_floor(const Signal& signal, double factor);

// Runs all restarts and returns the one with the highest final
// log-likelihood (lowest restart index on ties). Throws DataError when
// n < K, NumericalError when every restart fails.
FitResult em_fit(const Signal& signal, const ModelSpec& spec, const FitOptions& opts);

// A single EM run from a given starting point.
FitResult em_run(const Signal& signal, const DesignMatrices& designs, Theta theta,
                 const FitOptions& opts, double variance_floor);

}  // namespace rhlp

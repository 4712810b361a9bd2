#pragma once

// Regression model with a hidden logistic process.
//
// An observation x_i at time t_i is drawn from one of K polynomial regimes of
// degree p. The regime label z_i follows a softmax over K polynomials of
// degree q in t_i (the "gates"). This header holds the model types and every
// pure parameter -> value computation: gates, densities, log-likelihood,
// denoising and segmentation.

#include <Eigen/Dense>
#include <cstddef>
#include <optional>
#include <vector>

namespace rhlp {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// Orders of a concrete model instance.
struct ModelSpec {
  int K = 3;  // number of regimes
  int p = 2;  // regression polynomial degree
  int q = 1;  // gate polynomial degree

  Index reg_dim() const { return p + 1; }
  Index gate_dim() const { return q + 1; }

  // Throws std::invalid_argument on K < 1, p < 0 or q < 0.
  void validate() const;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

// Paired observation times and values. Times are strictly increasing.
struct Signal {
  VectorXd t;
  VectorXd x;

  Index size() const { return t.size(); }
  // Throws std::invalid_argument on length mismatch, n == 0, non-finite
  // values or non-increasing times.
  void validate() const;
};

// K x (q+1) gate coefficients. Row K-1 is the reference class and is kept
// identically zero.
struct GateWeights {
  MatrixXd w;

  static GateWeights zeros(const ModelSpec& spec);

  Index K() const { return w.rows(); }
  // Transition sharpness w_k1 (q >= 1 only).
  std::optional<double> sharpness(Index k) const;
  // Transition midpoint -w_k0 / w_k1, when w_k1 != 0 (q >= 1 only).
  std::optional<double> midpoint(Index k) const;
};

struct Theta {
  ModelSpec spec;
  GateWeights w;
  MatrixXd beta;   // K x (p+1), row k holds the coefficients of regime k
  VectorXd sigma2; // K noise variances

  // Dimensions match spec, the reference gate row is zero and every variance
  // is positive (non-negative when allow_zero_variance). Throws
  // std::invalid_argument otherwise.
  void validate(bool allow_zero_variance = false) const;
};

// Polynomial covariates: R row i = (1, t_i, ..., t_i^p), V row i = (1, ..., t_i^q).
struct DesignMatrices {
  MatrixXd R;
  MatrixXd V;
};

// n x K softmax gate values pi_ik.
struct GateMatrix {
  MatrixXd pi;
};

// Labels in 1..K.
struct Segmentation {
  std::vector<int> z;
};

MatrixXd vandermonde(const VectorXd& t, int degree);
DesignMatrices build_designs(const Signal& signal, const ModelSpec& spec);

// Unnormalized gate scores V * w^T (n x K).
MatrixXd gate_scores(const GateWeights& w, const MatrixXd& V);
GateMatrix gates(const GateWeights& w, const MatrixXd& V);
// log pi_ik, computed as score minus the row log-sum-exp.
MatrixXd log_gates(const GateWeights& w, const MatrixXd& V);

// Gaussian density of x_i under one regime. Throws std::domain_error when
// sigma2_k <= 0.
double component_density(double x_i, const Eigen::Ref<const VectorXd>& r_i,
                         const Eigen::Ref<const VectorXd>& beta_k, double sigma2_k);
double mixture_density(double x_i, const Eigen::Ref<const VectorXd>& r_i,
                       const Eigen::Ref<const VectorXd>& v_i, const Theta& theta);

// n x K matrix of log pi_ik + log N(x_i; beta_k . r_i, sigma2_k).
MatrixXd joint_log_density(const Signal& signal, const DesignMatrices& designs,
                           const Theta& theta);
double log_likelihood(const Signal& signal, const DesignMatrices& designs,
                      const Theta& theta);

// n x K matrix of regime means beta_k . r_i.
MatrixXd component_means(const DesignMatrices& designs, const Theta& theta);
// Mixture expectation sum_k pi_ik beta_k . r_i.
VectorXd denoise(const DesignMatrices& designs, const Theta& theta);

// argmax_k pi_ik, smallest k on ties.
Segmentation segment(const GateMatrix& gate_matrix);

}  // namespace rhlp

#include "rhlp/model.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "rhlp/kernels.hpp"

namespace rhlp {

void ModelSpec::validate() const {
  if (K < 1) throw std::invalid_argument("K must be >= 1, got " + std::to_string(K));
  if (p < 0) throw std::invalid_argument("p must be >= 0, got " + std::to_string(p));
  if (q < 0) throw std::invalid_argument("q must be >= 0, got " + std::to_string(q));
}

void Signal::validate() const {
  if (t.size() != x.size())
    throw std::invalid_argument("signal: t and x lengths differ");
  if (t.size() == 0) throw std::invalid_argument("signal: no observations");
  for (Index i = 0; i < t.size(); ++i) {
    if (!std::isfinite(t[i]) || !std::isfinite(x[i]))
      throw std::invalid_argument("signal: non-finite value at index " + std::to_string(i));
    if (i > 0 && !(t[i] > t[i - 1]))
      throw std::invalid_argument("signal: times not strictly increasing at index " +
                                  std::to_string(i));
  }
}

GateWeights GateWeights::zeros(const ModelSpec& spec) {
  return GateWeights{MatrixXd::Zero(spec.K, spec.gate_dim())};
}

std::optional<double> GateWeights::sharpness(Index k) const {
  if (w.cols() < 2) return std::nullopt;
  return w(k, 1);
}

std::optional<double> GateWeights::midpoint(Index k) const {
  if (w.cols() < 2 || w(k, 1) == 0.0) return std::nullopt;
  return -w(k, 0) / w(k, 1);
}

void Theta::validate(bool allow_zero_variance) const {
  spec.validate();
  if (w.w.rows() != spec.K || w.w.cols() != spec.gate_dim())
    throw std::invalid_argument("theta: gate weights must be K x (q+1)");
  if (beta.rows() != spec.K || beta.cols() != spec.reg_dim())
    throw std::invalid_argument("theta: beta must be K x (p+1)");
  if (sigma2.size() != spec.K) throw std::invalid_argument("theta: sigma2 must have K entries");
  if (!w.w.row(spec.K - 1).isZero(0.0))
    throw std::invalid_argument("theta: reference gate row must be zero");
  if (!w.w.allFinite() || !beta.allFinite() || !sigma2.allFinite())
    throw std::invalid_argument("theta: non-finite parameter");
  for (Index k = 0; k < spec.K; ++k) {
    const bool ok = allow_zero_variance ? sigma2[k] >= 0.0 : sigma2[k] > 0.0;
    if (!ok) throw std::invalid_argument("theta: sigma2[" + std::to_string(k) + "] out of range");
  }
}

MatrixXd vandermonde(const VectorXd& t, int degree) {
  MatrixXd out(t.size(), degree + 1);
  out.col(0).setOnes();
  for (int j = 1; j <= degree; ++j) out.col(j) = out.col(j - 1).cwiseProduct(t);
  return out;
}

DesignMatrices build_designs(const Signal& signal, const ModelSpec& spec) {
  return DesignMatrices{vandermonde(signal.t, spec.p), vandermonde(signal.t, spec.q)};
}

MatrixXd gate_scores(const GateWeights& w, const MatrixXd& V) {
  MatrixXd s(V.rows(), w.w.rows());
  s.noalias() = V.lazyProduct(w.w.transpose());
  return s;
}

GateMatrix gates(const GateWeights& w, const MatrixXd& V) {
  MatrixXd s = gate_scores(w, V);
  kernels::active().softmax_rows(s.data(), static_cast<std::size_t>(s.rows()),
                                 static_cast<std::size_t>(s.cols()), nullptr);
  return GateMatrix{std::move(s)};
}

MatrixXd log_gates(const GateWeights& w, const MatrixXd& V) {
  MatrixXd s = gate_scores(w, V);
  MatrixXd scratch = s;
  VectorXd lse(s.rows());
  kernels::active().softmax_rows(scratch.data(), static_cast<std::size_t>(s.rows()),
                                 static_cast<std::size_t>(s.cols()), lse.data());
  s.colwise() -= lse;
  return s;
}

double component_density(double x_i, const Eigen::Ref<const VectorXd>& r_i,
                         const Eigen::Ref<const VectorXd>& beta_k, double sigma2_k) {
  if (!(sigma2_k > 0.0)) throw std::domain_error("component_density: variance must be > 0");
  const double d = x_i - beta_k.dot(r_i);
  return std::exp(-0.5 * d * d / sigma2_k) / std::sqrt(2.0 * std::numbers::pi * sigma2_k);
}

double mixture_density(double x_i, const Eigen::Ref<const VectorXd>& r_i,
                       const Eigen::Ref<const VectorXd>& v_i, const Theta& theta) {
  const MatrixXd v_row = v_i.transpose();
  const GateMatrix g = gates(theta.w, v_row);
  double acc = 0.0;
  for (Index k = 0; k < theta.spec.K; ++k)
    acc += g.pi(0, k) * component_density(x_i, r_i, theta.beta.row(k).transpose(),
                                          theta.sigma2[k]);
  return acc;
}

MatrixXd component_means(const DesignMatrices& designs, const Theta& theta) {
  return designs.R * theta.beta.transpose();
}

MatrixXd joint_log_density(const Signal& signal, const DesignMatrices& designs,
                           const Theta& theta) {
  const auto& kt = kernels::active();
  const auto n = static_cast<std::size_t>(signal.size());
  MatrixXd out = log_gates(theta.w, designs.V);
  const MatrixXd means = component_means(designs, theta);
  VectorXd lpdf(signal.size());
  for (Index k = 0; k < theta.spec.K; ++k) {
    if (!(theta.sigma2[k] > 0.0)) throw std::domain_error("joint_log_density: variance must be > 0");
    kt.gaussian_logpdf(signal.x.data(), means.col(k).data(), n, theta.sigma2[k], lpdf.data());
    out.col(k) += lpdf;
  }
  return out;
}

double log_likelihood(const Signal& signal, const DesignMatrices& designs,
                      const Theta& theta) {
  MatrixXd joint = joint_log_density(signal, designs, theta);
  VectorXd lse(joint.rows());
  kernels::active().softmax_rows(joint.data(), static_cast<std::size_t>(joint.rows()),
                                 static_cast<std::size_t>(joint.cols()), lse.data());
  return lse.sum();
}

VectorXd denoise(const DesignMatrices& designs, const Theta& theta) {
  const GateMatrix g = gates(theta.w, designs.V);
  return g.pi.cwiseProduct(component_means(designs, theta)).rowwise().sum();
}

Segmentation segment(const GateMatrix& gate_matrix) {
  const MatrixXd& pi = gate_matrix.pi;
  Segmentation out;
  out.z.resize(static_cast<std::size_t>(pi.rows()));
  for (Index i = 0; i < pi.rows(); ++i) {
    Index best = 0;
    for (Index k = 1; k < pi.cols(); ++k)
      if (pi(i, k) > pi(i, best)) best = k;
    out.z[static_cast<std::size_t>(i)] = static_cast<int>(best) + 1;
  }
  return out;
}

}  // namespace rhlp

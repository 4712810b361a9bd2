#pragma once

// Synthetic signals drawn from the generative model, the two evaluation
// criteria (misclassification rate, denoising error) and the
// sample-size study comparing the EM fit to the piecewise baseline.

#include <cstdint>
#include <vector>

#include "rhlp/em.hpp"

namespace rhlp {

struct GeneratorConfig {
  ModelSpec spec;
  Theta theta_true;
  double t_start = 0.0;
  double t_end = 5.0;
  Index n = 500;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

// Three parabolic regimes on [0, 5] s with sharp ordered transitions near
// t = 1.7 s and t = 3.3 s (K = 3, p = 2, q = 1).
Theta default_theta();
GeneratorConfig default_generator_config(Index n, std::uint64_t seed);

struct SimulatedSignal {
  Signal signal;
  Segmentation z_true;
  VectorXd clean;  // noise-free mixture expectation under theta_true
};

// Uniform time grid, labels drawn from the gates, Gaussian noise per regime.
// Zero variances are accepted here and give noiseless observations.
SimulatedSignal generate(const GeneratorConfig& config);

// 1 - (best matching count under a label bijection) / n. Labels are 1..K.
double misclassification_rate(const Segmentation& a, const Segmentation& b, int K);

// ||xhat - clean||_2 / n.
double denoising_error(const VectorXd& xhat, const VectorXd& clean);

struct StudyConfig {
  std::vector<Index> ns{100, 300, 700, 1000};
  int n_replicates = 20;
  GeneratorConfig base = default_generator_config(500, 0);
};

struct ReplicateMetrics {
  Index n = 0;
  int replicate = 0;
  bool ok = false;
  double rhlp_misclassification = 0.0;
  double piecewise_misclassification = 0.0;
  double rhlp_denoising_error = 0.0;
  double piecewise_denoising_error = 0.0;
};

struct StudyRow {
  Index n = 0;
  int replicates = 0;  // successful replicates averaged below
  int failures = 0;
  double rhlp_misclassification = 0.0;
  double piecewise_misclassification = 0.0;
  double rhlp_denoising_error = 0.0;
  double piecewise_denoising_error = 0.0;
};

struct StudyTable {
  std::vector<StudyRow> rows;
  std::vector<ReplicateMetrics> replicates;
};

// Seed of replicate r at sample size n, derived from the base seed.
std::uint64_t replicate_seed(std::uint64_t base, Index n, int replicate);

StudyTable run_study(const StudyConfig& config, const FitOptions& opts, int workers = 1);

}  // namespace rhlp

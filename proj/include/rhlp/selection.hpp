#pragma once

// BIC grid search over the number of regimes K and the regression degree p.

#include <map>
#include <string>
#include <utility>

#include "rhlp/em.hpp"

namespace rhlp {

struct IntRange {
  int lo = 0;
  int hi = 0;  // inclusive
};

struct CellScore {
  double loglik = 0.0;
  int n_params = 0;
  double bic = 0.0;
  int n_iters = 0;
  bool converged = false;
  int restart_index = 0;
};

using GridKey = std::pair<int, int>;  // (K, p)

struct BicGridResult {
  std::map<GridKey, CellScore> scores;
  std::map<GridKey, std::string> failures;
  GridKey best{0, 0};
};

// (K-1)(q+1) free gate weights + K(p+1) coefficients + K variances.
int n_free_params(const ModelSpec& spec);

// loglik - (nu / 2) log n; larger is better. Equivalent to minimizing
// -2 loglik + nu log n.
double bic(double loglik, const ModelSpec& spec, Index n);

// Fits every (K, p) cell with the same options (and therefore the same
// restart seeds) and returns the grid with its BIC argmax; ties go to the
// smaller K, then the smaller p. Cells run on up to `workers` threads.
// Throws NumericalError when no cell could be fitted.
BicGridResult select_model(const Signal& signal, IntRange k_range, IntRange p_range, int q,
                           const FitOptions& opts, int workers = 1);

}  // namespace rhlp

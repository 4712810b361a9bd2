#pragma once

// Piecewise polynomial regression with hard change points, fitted to global
// least-squares optimality by dynamic programming over segment end points.

#include <vector>

#include "rhlp/model.hpp"

namespace rhlp {

struct PiecewiseFit {
  // K-1 cut indices, 1-based: segment s covers observations
  // cuts[s-1]+1 .. cuts[s] (with cuts[-1] = 0 and cuts[K-1] = n).
  std::vector<Index> cuts;
  MatrixXd beta;  // K x (p+1), per-segment OLS coefficients in raw t
  double sse = 0.0;
  VectorXd denoised;
  Segmentation segmentation;
};

// Least-squares cost of fitting a degree-p polynomial to every interval of
// at least min_len consecutive observations.
class IntervalCosts {
 public:
  IntervalCosts(const Signal& signal, int p, Index min_len);

  Index size() const { return n_; }
  Index min_len() const { return min_len_; }
  // SSE on observations first..last (0-based, inclusive). Only defined for
  // last - first + 1 >= min_len.
  double operator()(Index first, Index last) const {
    return cost_[static_cast<std::size_t>(first * n_ + last)];
  }

 private:
  Index n_;
  Index min_len_;
  std::vector<double> cost_;
};

// OLS residual sum of squares of a degree-p fit on observations first..last,
// solved directly with an orthogonal factorization.
double segment_sse(const Signal& signal, int p, Index first, Index last);

// Requires min_seg >= p+1 and n >= K * min_seg, else std::invalid_argument.
// Among optimal partitions the earliest cut positions win.
PiecewiseFit piecewise_fit(const Signal& signal, int K, int p, Index min_seg);
// min_seg = p + 2.
PiecewiseFit piecewise_fit(const Signal& signal, int K, int p);

}  // namespace rhlp

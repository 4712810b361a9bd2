#include "rhlp/piecewise.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace rhlp {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Upper-triangular factor of the augmented design [1 u ... u^p | x], grown
// one row at a time with Givens rotations. The magnitude of the last diagonal
// entry is the residual norm of the least-squares fit.
class IncrementalQr {
 public:
  explicit IncrementalQr(Index cols)
      : m_(cols), r_(MatrixXd::Zero(cols, cols)), row_(cols) {}

  void add_row(const Eigen::Ref<const Eigen::RowVectorXd>& new_row) {
    Eigen::RowVectorXd& row = row_;
    row = new_row;
    for (Index j = 0; j < m_; ++j) {
      if (row[j] == 0.0) continue;
      const double a = r_(j, j);
      const double b = row[j];
      const double h = std::hypot(a, b);
      const double c = a / h;
      const double s = b / h;
      r_(j, j) = h;
      row[j] = 0.0;
      for (Index l = j + 1; l < m_; ++l) {
        const double rl = r_(j, l);
        const double xl = row[l];
        r_(j, l) = c * rl + s * xl;
        row[l] = -s * rl + c * xl;
      }
    }
  }

  double residual_ss() const {
    const double v = r_(m_ - 1, m_ - 1);
    return v * v;
  }

 private:
  Index m_;
  MatrixXd r_;
  Eigen::RowVectorXd row_;
};

// Least-squares polynomial fit on observations first..last, solved in
// u = (t - mid) / half over the segment and mapped back to raw t.
struct SegmentSolve {
  VectorXd beta;    // raw-t coefficients
  VectorXd fitted;  // fitted values, evaluated in the scaled basis
};

SegmentSolve solve_segment(const Signal& signal, int p, Index first, Index len) {
  const double t0 = signal.t[first];
  const double t1 = signal.t[first + len - 1];
  const double mid = 0.5 * (t0 + t1);
  const double half = t1 > t0 ? 0.5 * (t1 - t0) : 1.0;
  const VectorXd u = (signal.t.segment(first, len).array() - mid) / half;
  const MatrixXd A = vandermonde(u, p);
  Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(A);
  const VectorXd gamma = cod.solve(signal.x.segment(first, len));

  // sum_j gamma_j ((t - mid) / half)^j expanded binomially.
  SegmentSolve out;
  out.beta = VectorXd::Zero(p + 1);
  for (int j = 0; j <= p; ++j) {
    const double scale = gamma[j] / std::pow(half, j);
    double binom = 1.0;
    for (int m = 0; m <= j; ++m) {
      out.beta[m] += scale * binom * std::pow(-mid, j - m);
      binom = binom * (j - m) / (m + 1);
    }
  }
  out.fitted = A * gamma;
  return out;
}

}  // namespace

IntervalCosts::IntervalCosts(const Signal& signal, int p, Index min_len)
    : n_(signal.size()), min_len_(min_len),
      cost_(static_cast<std::size_t>(n_ * n_), kInf) {
  // Polynomial spaces are invariant under affine changes of t; map to [-1, 1]
  // so that high powers stay well scaled.
  const double t0 = signal.t[0];
  const double t1 = signal.t[n_ - 1];
  const double mid = 0.5 * (t0 + t1);
  const double half = t1 > t0 ? 0.5 * (t1 - t0) : 1.0;
  const Index cols = p + 2;

  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows(n_, cols);
  for (Index i = 0; i < n_; ++i) {
    const double u = (signal.t[i] - mid) / half;
    double power = 1.0;
    for (int j = 0; j <= p; ++j, power *= u) rows(i, j) = power;
    rows(i, cols - 1) = signal.x[i];
  }

  for (Index first = 0; first < n_; ++first) {
    IncrementalQr qr(cols);
    for (Index last = first; last < n_; ++last) {
      qr.add_row(rows.row(last));
      if (last - first + 1 >= min_len_)
        cost_[static_cast<std::size_t>(first * n_ + last)] = qr.residual_ss();
    }
  }
}

double segment_sse(const Signal& signal, int p, Index first, Index last) {
  const Index len = last - first + 1;
  return (signal.x.segment(first, len) - solve_segment(signal, p, first, len).fitted).squaredNorm();
}

PiecewiseFit piecewise_fit(const Signal& signal, int K, int p, Index min_seg) {
  signal.validate();
  const Index n = signal.size();
  if (K < 1 || p < 0) throw std::invalid_argument("piecewise_fit: need K >= 1 and p >= 0");
  if (min_seg < p + 1)
    throw std::invalid_argument("piecewise_fit: min_seg must be >= p+1");
  if (n < K * min_seg)
    throw std::invalid_argument("piecewise_fit: n=" + std::to_string(n) + " is below K*min_seg=" +
                                std::to_string(K * min_seg));

  const IntervalCosts cost(signal, p, min_seg);

  // best[s][e]: minimum cost of covering 0..e by s+1 segments; from[s][e] is
  // the first index of the last of those segments.
  const auto Ku = static_cast<std::size_t>(K);
  const auto nu = static_cast<std::size_t>(n);
  std::vector<double> best(Ku * nu, kInf);
  std::vector<Index> from(Ku * nu, 0);
  auto at = [nu](std::size_t s, Index e) { return s * nu + static_cast<std::size_t>(e); };

  for (Index e = min_seg - 1; e < n; ++e) best[at(0, e)] = cost(0, e);
  for (std::size_t s = 1; s < Ku; ++s) {
    const Index seg = static_cast<Index>(s);
    for (Index e = (seg + 1) * min_seg - 1; e < n; ++e) {
      double acc = kInf;
      Index arg = 0;
      for (Index a = seg * min_seg; a + min_seg - 1 <= e; ++a) {
        const double v = best[at(s - 1, a - 1)] + cost(a, e);
        if (v < acc) {
          acc = v;
          arg = a;
        }
      }
      best[at(s, e)] = acc;
      from[at(s, e)] = arg;
    }
  }

  PiecewiseFit out;
  out.sse = best[at(Ku - 1, n - 1)];
  std::vector<Index> starts(Ku, 0);
  Index e = n - 1;
  for (std::size_t s = Ku - 1; s > 0; --s) {
    starts[s] = from[at(s, e)];
    e = starts[s] - 1;
  }
  for (std::size_t s = 1; s < Ku; ++s) out.cuts.push_back(starts[s]);

  out.beta.resize(K, p + 1);
  out.denoised.resize(n);
  out.segmentation.z.resize(nu);
  for (std::size_t s = 0; s < Ku; ++s) {
    const Index first = starts[s];
    const Index last = s + 1 < Ku ? starts[s + 1] - 1 : n - 1;
    const Index len = last - first + 1;
    const SegmentSolve fit = solve_segment(signal, p, first, len);
    out.beta.row(static_cast<Index>(s)) = fit.beta.transpose();
    out.denoised.segment(first, len) = fit.fitted;
    for (Index i = first; i <= last; ++i)
      out.segmentation.z[static_cast<std::size_t>(i)] = static_cast<int>(s) + 1;
  }
  return out;
}

PiecewiseFit piecewise_fit(const Signal& signal, int K, int p) {
  return piecewise_fit(signal, K, p, p + 2);
}

}  // namespace rhlp

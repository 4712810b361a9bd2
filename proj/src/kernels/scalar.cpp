#include <algorithm>
#include <cmath>
#include <numbers>

#include "rhlp/kernels.hpp"

namespace rhlp::kernels {
namespace {

inline double clamped_exp(double v) {
  return std::exp(std::clamp(v, kExpMin, kExpMax));
}

void exp_inplace(double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] = clamped_exp(x[i]);
}

void softmax_rows(double* data, std::size_t n, std::size_t k, double* lse) {
  for (std::size_t i = 0; i < n; ++i) {
    double m = data[i];
    for (std::size_t j = 1; j < k; ++j) m = std::max(m, data[j * n + i]);
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      double e = clamped_exp(data[j * n + i] - m);
      data[j * n + i] = e;
      sum += e;
    }
    for (std::size_t j = 0; j < k; ++j) data[j * n + i] /= sum;
    if (lse != nullptr) lse[i] = m + std::log(sum);
  }
}

void gaussian_logpdf(const double* x, const double* mean, std::size_t n,
                     double sigma2, double* out) {
  const double c = -0.5 * std::log(2.0 * std::numbers::pi * sigma2);
  const double half_inv = 0.5 / sigma2;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = x[i] - mean[i];
    out[i] = c - d * d * half_inv;
  }
}

double weighted_sse(const double* w, const double* x, const double* mean,
                    std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = x[i] - mean[i];
    acc += w[i] * d * d;
  }
  return acc;
}

}  // namespace

namespace detail {
const KernelTable kScalarTable{Isa::scalar, "scalar", &exp_inplace,
                               &softmax_rows, &gaussian_logpdf, &weighted_sse};
}

}  // namespace rhlp::kernels

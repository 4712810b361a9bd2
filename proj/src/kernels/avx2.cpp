// AVX2 + FMA variants. This translation unit is the only one compiled with
// -mavx2 -mfma; nothing here may run unless the CPU reports both features.

#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "rhlp/kernels.hpp"

namespace rhlp::kernels {
namespace {

// exp(x) for 4 lanes: x = n ln2 + r with |r| <= ln2/2, exp(r) by a degree-13
// Taylor polynomial, 2^n assembled directly in the exponent field.
inline __m256d exp4(__m256d x) {
  const __m256d log2e = _mm256_set1_pd(1.4426950408889634074);
  const __m256d ln2_hi = _mm256_set1_pd(6.93147180369123816490e-01);
  const __m256d ln2_lo = _mm256_set1_pd(1.90821492927058770002e-10);

  x = _mm256_min_pd(_mm256_max_pd(x, _mm256_set1_pd(kExpMin)),
                    _mm256_set1_pd(kExpMax));
  const __m256d n = _mm256_round_pd(_mm256_mul_pd(x, log2e),
                                    _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(n, ln2_hi, x);
  r = _mm256_fnmadd_pd(n, ln2_lo, r);

  // 1/j! for j = 13 .. 0
  static constexpr double kCoef[] = {
      1.6059043836821614599e-10, 2.0876756987868098979e-09,
      2.5052108385441718775e-08, 2.7557319223985890653e-07,
      2.7557319223985890653e-06, 2.4801587301587301587e-05,
      1.9841269841269841270e-04, 1.3888888888888888889e-03,
      8.3333333333333333333e-03, 4.1666666666666666667e-02,
      1.6666666666666666667e-01, 5.0000000000000000000e-01,
      1.0, 1.0};
  __m256d p = _mm256_set1_pd(kCoef[0]);
  for (int j = 1; j < 14; ++j) p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(kCoef[j]));

  const __m128i n32 = _mm256_cvtpd_epi32(n);
  __m256i bits = _mm256_cvtepi32_epi64(n32);
  bits = _mm256_add_epi64(bits, _mm256_set1_epi64x(1023));
  bits = _mm256_slli_epi64(bits, 52);
  return _mm256_mul_pd(p, _mm256_castsi256_pd(bits));
}

inline double clamped_exp(double v) {
  return std::exp(std::clamp(v, kExpMin, kExpMax));
}

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

void exp_inplace(double* x, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(x + i, exp4(_mm256_loadu_pd(x + i)));
  for (; i < n; ++i) x[i] = clamped_exp(x[i]);
}

void softmax_rows(double* data, std::size_t n, std::size_t k, double* lse) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d m = _mm256_loadu_pd(data + i);
    for (std::size_t j = 1; j < k; ++j)
      m = _mm256_max_pd(m, _mm256_loadu_pd(data + j * n + i));
    __m256d sum = _mm256_setzero_pd();
    for (std::size_t j = 0; j < k; ++j) {
      const __m256d e = exp4(_mm256_sub_pd(_mm256_loadu_pd(data + j * n + i), m));
      _mm256_storeu_pd(data + j * n + i, e);
      sum = _mm256_add_pd(sum, e);
    }
    for (std::size_t j = 0; j < k; ++j)
      _mm256_storeu_pd(data + j * n + i,
                       _mm256_div_pd(_mm256_loadu_pd(data + j * n + i), sum));
    if (lse != nullptr) {
      alignas(32) double ms[4], ss[4];
      _mm256_store_pd(ms, m);
      _mm256_store_pd(ss, sum);
      for (int l = 0; l < 4; ++l) lse[i + l] = ms[l] + std::log(ss[l]);
    }
  }
  for (; i < n; ++i) {
    double m = data[i];
    for (std::size_t j = 1; j < k; ++j) m = std::max(m, data[j * n + i]);
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double e = clamped_exp(data[j * n + i] - m);
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
  const __m256d vc = _mm256_set1_pd(c);
  const __m256d vh = _mm256_set1_pd(half_inv);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(mean + i));
    _mm256_storeu_pd(out + i, _mm256_fnmadd_pd(_mm256_mul_pd(d, d), vh, vc));
  }
  for (; i < n; ++i) {
    const double d = x[i] - mean[i];
    out[i] = c - d * d * half_inv;
  }
}

double weighted_sse(const double* w, const double* x, const double* mean,
                    std::size_t n) {
  __m256d a0 = _mm256_setzero_pd();
  __m256d a1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256d d0 = _mm256_sub_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(mean + i));
    const __m256d d1 =
        _mm256_sub_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(mean + i + 4));
    a0 = _mm256_fmadd_pd(_mm256_mul_pd(_mm256_loadu_pd(w + i), d0), d0, a0);
    a1 = _mm256_fmadd_pd(_mm256_mul_pd(_mm256_loadu_pd(w + i + 4), d1), d1, a1);
  }
  for (; i + 4 <= n; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(mean + i));
    a0 = _mm256_fmadd_pd(_mm256_mul_pd(_mm256_loadu_pd(w + i), d), d, a0);
  }
  double acc = hsum(_mm256_add_pd(a0, a1));
  for (; i < n; ++i) {
    const double d = x[i] - mean[i];
    acc += w[i] * d * d;
  }
  return acc;
}

}  // namespace

namespace detail {
const KernelTable kAvx2Table{Isa::avx2, "avx2", &exp_inplace,
                             &softmax_rows, &gaussian_logpdf, &weighted_sse};
}

}  // namespace rhlp::kernels

#pragma once

// Data-parallel inner loops used by the model and the EM estimator.
//
// Every kernel has a portable scalar reference implementation and, on x86-64,
// an AVX2+FMA variant. The active table is chosen once at first use from the
// CPU features (override with RHLP_KERNELS=scalar|avx2) and can be switched
// explicitly with set_active_isa(). Variants agree to within a few ulps; the
// equivalence tests pin the tolerances.
//
// Matrices are Eigen-style column-major: element (i, j) of an n x k block
// lives at data[j * n + i].

#include <cstddef>
#include <string_view>

namespace rhlp::kernels {

// Arguments of exp are clamped to this range by every variant so that results
// stay finite and strictly positive.
inline constexpr double kExpMin = -708.0;
inline constexpr double kExpMax = 709.0;

enum class Isa { scalar, avx2 };

struct KernelTable {
  Isa isa;
  const char* name;

  // x[i] <- exp(clamp(x[i]))
  void (*exp_inplace)(double* x, std::size_t n);

  // Each row of the n x k block is replaced by its softmax. When lse is not
  // null, lse[i] receives log(sum_j exp(row_i[j])).
  void (*softmax_rows)(double* data, std::size_t n, std::size_t k, double* lse);

  // out[i] = log N(x[i]; mean[i], sigma2)
  void (*gaussian_logpdf)(const double* x, const double* mean, std::size_t n,
                          double sigma2, double* out);

  // sum_i w[i] * (x[i] - mean[i])^2
  double (*weighted_sse)(const double* w, const double* x, const double* mean,
                         std::size_t n);
};

bool isa_available(Isa isa);
const KernelTable& table(Isa isa);

const KernelTable& active();
Isa active_isa();
void set_active_isa(Isa isa);

std::string_view isa_name(Isa isa);
// Accepts "scalar", "avx2" or "auto"; returns false on anything else.
bool parse_isa(std::string_view name, Isa& out);

namespace detail {
extern const KernelTable kScalarTable;
#if defined(RHLP_HAVE_AVX2_KERNELS)
extern const KernelTable kAvx2Table;
#endif
}  // namespace detail

}  // namespace rhlp::kernels

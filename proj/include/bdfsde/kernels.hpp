#pragma once

// Data-parallel inner loops. Each kernel has a portable scalar reference
// implementation and an AVX2 variant; the variant is chosen once at startup
// from the CPU features (override with BDFSDE_KERNELS=scalar|avx2).
//
// All kernels except dot() perform, per output element, exactly the same
// sequence of IEEE operations in both variants, so their results agree
// bit for bit. dot() reassociates the reduction.

#include <cstddef>
#include <string_view>

namespace bdfsde::kernels {

/// out[j*d + c] = sum_{i=0}^{factor-1} in[(j*factor + i)*d + c], summed in
/// ascending i. `in` holds rows_out*factor rows of width d.
using BlockSumFn = void (*)(const double* in, std::size_t rows_out, std::size_t factor,
                            std::size_t d, double* out);

/// out[n] = sum_{i<m} (ref[n*ref_stride + i] - x[n*m + i])^2, for n < points.
using SquaredDeviationFn = void (*)(const double* ref, std::size_t ref_stride, const double* x,
                                    std::size_t m, std::size_t points, double* out);

/// Error-free accumulation: for each n, (sum[n], comp[n]) absorbs vals[n] via
/// TwoSum, the rounding error going into comp[n].
using CompensatedAddFn = void (*)(double* sum, double* comp, const double* vals, std::size_t n);

/// Number of non-finite entries.
using CountNonFiniteFn = std::size_t (*)(const double* x, std::size_t n);

using DotFn = double (*)(const double* a, const double* b, std::size_t n);

struct KernelTable {
  std::string_view name;
  BlockSumFn block_sum;
  SquaredDeviationFn squared_deviation;
  CompensatedAddFn compensated_add;
  CountNonFiniteFn count_nonfinite;
  DotFn dot;
};

enum class Backend { scalar, avx2 };

const KernelTable& scalar_table() noexcept;

/// Null when the binary was built without AVX2 support.
const KernelTable* avx2_table() noexcept;

bool cpu_has_avx2() noexcept;

/// Table for `b`; falls back to scalar when `b` is unavailable.
const KernelTable& table(Backend b) noexcept;

/// The process-wide selection.
const KernelTable& active() noexcept;

/// Replaces the process-wide selection. Not thread-safe with concurrent kernel use.
void select(Backend b) noexcept;

}  // namespace bdfsde::kernels

// Compiled with -mavx2 (and without -mfma: contraction would break the
// bitwise agreement with the scalar kernels).

#include "bdfsde/kernels.hpp"

#if defined(BDFSDE_HAVE_AVX2)

#include <immintrin.h>

#include <bit>
#include <cmath>
#include <cstdint>

namespace bdfsde::kernels {
namespace {

inline __m256i lane_offsets(std::size_t first, std::size_t stride) {
  const auto s = static_cast<long long>(stride);
  const auto f = static_cast<long long>(first);
  return _mm256_setr_epi64x(f * s, (f + 1) * s, (f + 2) * s, (f + 3) * s);
}

void block_sum(const double* in, std::size_t rows_out, std::size_t factor, std::size_t d,
               double* out) {
  if (d == 1) {
    std::size_t j = 0;
    for (; j + 4 <= rows_out; j += 4) {
      const __m256i idx = lane_offsets(j, factor);
      __m256d s = _mm256_i64gather_pd(in, idx, 8);
      for (std::size_t i = 1; i < factor; ++i) {
        s = _mm256_add_pd(s, _mm256_i64gather_pd(in + i, idx, 8));
      }
      _mm256_storeu_pd(out + j, s);
    }
    for (; j < rows_out; ++j) {
      const double* base = in + j * factor;
      double s = base[0];
      for (std::size_t i = 1; i < factor; ++i) s += base[i];
      out[j] = s;
    }
    return;
  }
  for (std::size_t j = 0; j < rows_out; ++j) {
    const double* base = in + j * factor * d;
    std::size_t c = 0;
    for (; c + 4 <= d; c += 4) {
      __m256d s = _mm256_loadu_pd(base + c);
      for (std::size_t i = 1; i < factor; ++i) {
        s = _mm256_add_pd(s, _mm256_loadu_pd(base + i * d + c));
      }
      _mm256_storeu_pd(out + j * d + c, s);
    }
    for (; c < d; ++c) {
      double s = base[c];
      for (std::size_t i = 1; i < factor; ++i) s += base[i * d + c];
      out[j * d + c] = s;
    }
  }
}

void squared_deviation(const double* ref, std::size_t ref_stride, const double* x, std::size_t m,
                       std::size_t points, double* out) {
  std::size_t n = 0;
  for (; n + 4 <= points; n += 4) {
    const __m256i ridx = lane_offsets(n, ref_stride);
    __m256d e = _mm256_sub_pd(_mm256_i64gather_pd(ref, ridx, 8),
                              m == 1 ? _mm256_loadu_pd(x + n)
                                     : _mm256_i64gather_pd(x, lane_offsets(n, m), 8));
    __m256d s = _mm256_mul_pd(e, e);
    if (m > 1) {
      const __m256i xidx = lane_offsets(n, m);
      for (std::size_t i = 1; i < m; ++i) {
        e = _mm256_sub_pd(_mm256_i64gather_pd(ref + i, ridx, 8),
                          _mm256_i64gather_pd(x + i, xidx, 8));
        s = _mm256_add_pd(s, _mm256_mul_pd(e, e));
      }
    }
    _mm256_storeu_pd(out + n, s);
  }
  for (; n < points; ++n) {
    const double* r = ref + n * ref_stride;
    const double* v = x + n * m;
    double e = r[0] - v[0];
    double s = e * e;
    for (std::size_t i = 1; i < m; ++i) {
      e = r[i] - v[i];
      s += e * e;
    }
    out[n] = s;
  }
}

void compensated_add(double* sum, double* comp, const double* vals, std::size_t n) {
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    const __m256d a = _mm256_loadu_pd(sum + k);
    const __m256d b = _mm256_loadu_pd(vals + k);
    const __m256d s = _mm256_add_pd(a, b);
    const __m256d bb = _mm256_sub_pd(s, a);
    const __m256d err =
        _mm256_add_pd(_mm256_sub_pd(a, _mm256_sub_pd(s, bb)), _mm256_sub_pd(b, bb));
    _mm256_storeu_pd(sum + k, s);
    _mm256_storeu_pd(comp + k, _mm256_add_pd(_mm256_loadu_pd(comp + k), err));
  }
  for (; k < n; ++k) {
    const double a = sum[k];
    const double b = vals[k];
    const double s = a + b;
    const double bb = s - a;
    const double err = (a - (s - bb)) + (b - bb);
    sum[k] = s;
    comp[k] += err;
  }
}

std::size_t count_nonfinite(const double* x, std::size_t n) {
  const __m256d sign = _mm256_set1_pd(-0.0);
  const __m256d inf = _mm256_set1_pd(HUGE_VAL);
  std::size_t bad = 0;
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    const __m256d mag = _mm256_andnot_pd(sign, _mm256_loadu_pd(x + k));
    // Ordered compare: false for NaN and for +inf.
    const int ok = _mm256_movemask_pd(_mm256_cmp_pd(mag, inf, _CMP_LT_OQ));
    bad += 4 - static_cast<std::size_t>(std::popcount(static_cast<unsigned>(ok)));
  }
  for (; k < n; ++k) bad += std::isfinite(x[k]) ? 0 : 1;
  return bad;
}

double dot(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_loadu_pd(a + k), _mm256_loadu_pd(b + k)));
  }
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, acc);
  double s = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
  for (; k < n; ++k) s += a[k] * b[k];
  return s;
}

constexpr KernelTable kAvx2{"avx2", block_sum, squared_deviation, compensated_add, count_nonfinite,
                            dot};

}  // namespace

const KernelTable* avx2_table() noexcept { return &kAvx2; }

}  // namespace bdfsde::kernels

#else

namespace bdfsde::kernels {
const KernelTable* avx2_table() noexcept { return nullptr; }
}  // namespace bdfsde::kernels

#endif

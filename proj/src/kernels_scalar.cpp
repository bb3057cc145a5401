#include "bdfsde/kernels.hpp"

#include <cmath>

namespace bdfsde::kernels {
namespace {

void block_sum(const double* in, std::size_t rows_out, std::size_t factor, std::size_t d,
               double* out) {
  for (std::size_t j = 0; j < rows_out; ++j) {
    const double* base = in + j * factor * d;
    for (std::size_t c = 0; c < d; ++c) {
      double s = base[c];
      for (std::size_t i = 1; i < factor; ++i) s += base[i * d + c];
      out[j * d + c] = s;
    }
  }
}

void squared_deviation(const double* ref, std::size_t ref_stride, const double* x, std::size_t m,
                       std::size_t points, double* out) {
  for (std::size_t n = 0; n < points; ++n) {
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
  for (std::size_t k = 0; k < n; ++k) {
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
  std::size_t bad = 0;
  for (std::size_t k = 0; k < n; ++k) bad += std::isfinite(x[k]) ? 0 : 1;
  return bad;
}

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t k = 0; k < n; ++k) s += a[k] * b[k];
  return s;
}

constexpr KernelTable kScalar{"scalar", block_sum, squared_deviation, compensated_add,
                              count_nonfinite, dot};

}  // namespace

const KernelTable& scalar_table() noexcept { return kScalar; }

}  // namespace bdfsde::kernels

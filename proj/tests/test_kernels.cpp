#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <random>
#include <vector>

#include "bdfsde/kernels.hpp"

using namespace bdfsde;

namespace {

std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> z(0.0, scale);
  std::vector<double> v(n);
  for (double& x : v) x = z(rng);
  return v;
}

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

// Every backend available in this build, scalar first.
std::vector<const kernels::KernelTable*> backends() {
  std::vector<const kernels::KernelTable*> out{&kernels::scalar_table()};
  if (kernels::avx2_table() && kernels::cpu_has_avx2()) out.push_back(kernels::avx2_table());
  return out;
}

}  // namespace

TEST_CASE("block_sum matches the ascending-order definition") {
  std::mt19937_64 rng(1);
  for (const auto* k : backends()) {
    for (std::size_t d : {1u, 2u, 3u, 5u}) {
      for (std::size_t factor : {1u, 2u, 3u, 4u, 7u, 16u}) {
        const std::size_t rows_out = 13;
        const auto in = random_vector(rows_out * factor * d, rng);
        std::vector<double> out(rows_out * d), want(rows_out * d);
        k->block_sum(in.data(), rows_out, factor, d, out.data());
        for (std::size_t j = 0; j < rows_out; ++j) {
          for (std::size_t c = 0; c < d; ++c) {
            double s = 0.0;
            for (std::size_t i = 0; i < factor; ++i) s += in[(j * factor + i) * d + c];
            want[j * d + c] = s;
          }
        }
        CHECK_MESSAGE(same_bits(out, want), k->name, " d=", d, " factor=", factor);
      }
    }
  }
}

TEST_CASE("squared_deviation matches a direct loop") {
  std::mt19937_64 rng(2);
  for (const auto* k : backends()) {
    for (std::size_t m : {1u, 2u, 3u}) {
      for (std::size_t stride_factor : {1u, 4u}) {
        const std::size_t points = 37;
        const auto ref = random_vector(points * stride_factor * m, rng);
        const auto x = random_vector(points * m, rng);
        std::vector<double> out(points), want(points);
        k->squared_deviation(ref.data(), stride_factor * m, x.data(), m, points, out.data());
        for (std::size_t n = 0; n < points; ++n) {
          double s = 0.0;
          for (std::size_t i = 0; i < m; ++i) {
            const double e = ref[n * stride_factor * m + i] - x[n * m + i];
            s = i == 0 ? e * e : s + e * e;
          }
          want[n] = s;
        }
        CHECK_MESSAGE(same_bits(out, want), k->name, " m=", m);
      }
    }
  }
}

TEST_CASE("compensated_add recovers small terms lost by naive summation") {
  for (const auto* k : backends()) {
    const std::size_t n = 11;
    std::vector<double> sum(n, 1.0), comp(n, 0.0), tiny(n, 1e-17);
    for (int rep = 0; rep < 1000; ++rep) k->compensated_add(sum.data(), comp.data(), tiny.data(), n);
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(sum[i] == 1.0);
      CHECK(sum[i] + comp[i] == doctest::Approx(1.0 + 1e-14).epsilon(1e-16));
      CHECK(comp[i] == doctest::Approx(1e-14).epsilon(1e-10));
    }
  }
}

TEST_CASE("count_nonfinite") {
  for (const auto* k : backends()) {
    std::vector<double> v(19, 1.0);
    CHECK(k->count_nonfinite(v.data(), v.size()) == 0);
    v[0] = std::numeric_limits<double>::infinity();
    v[5] = std::nan("");
    v[18] = -std::numeric_limits<double>::infinity();
    CHECK(k->count_nonfinite(v.data(), v.size()) == 3);
    v[7] = std::numeric_limits<double>::max();
    v[8] = std::numeric_limits<double>::denorm_min();
    CHECK(k->count_nonfinite(v.data(), v.size()) == 3);
    CHECK(k->count_nonfinite(v.data(), 0) == 0);
  }
}

TEST_CASE("backends agree bit for bit except dot") {
  const auto list = backends();
  if (list.size() < 2) {
    MESSAGE("AVX2 backend unavailable; equivalence test covers scalar only");
    return;
  }
  const auto& s = *list[0];
  const auto& v = *list[1];
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 300;
    const std::size_t d = 1 + rng() % 3;
    const std::size_t factor = 1 + rng() % 9;
    const auto in = random_vector(n * factor * d, rng, 1e-2);

    std::vector<double> a(n * d), b(n * d);
    s.block_sum(in.data(), n, factor, d, a.data());
    v.block_sum(in.data(), n, factor, d, b.data());
    CHECK(same_bits(a, b));

    const auto x = random_vector(n * d, rng);
    std::vector<double> qa(n), qb(n);
    s.squared_deviation(in.data(), factor * d, x.data(), d, n, qa.data());
    v.squared_deviation(in.data(), factor * d, x.data(), d, n, qb.data());
    CHECK(same_bits(qa, qb));

    std::vector<double> sa(n, 0.5), ca(n, 0.0), sb(n, 0.5), cb(n, 0.0);
    for (int rep = 0; rep < 5; ++rep) {
      const auto vals = random_vector(n, rng, std::pow(10.0, -rep * 3));
      s.compensated_add(sa.data(), ca.data(), vals.data(), n);
      v.compensated_add(sb.data(), cb.data(), vals.data(), n);
    }
    CHECK(same_bits(sa, sb));
    CHECK(same_bits(ca, cb));

    auto with_bad = x;
    with_bad[rng() % with_bad.size()] = std::nan("");
    CHECK(s.count_nonfinite(with_bad.data(), with_bad.size()) ==
          v.count_nonfinite(with_bad.data(), with_bad.size()));

    double abs_dot = 0.0;
    for (std::size_t i = 0; i < n; ++i) abs_dot += std::abs(x[i] * in[i]);
    CHECK(std::abs(s.dot(x.data(), in.data(), n) - v.dot(x.data(), in.data(), n)) <=
          1e-14 * abs_dot);
  }
}

TEST_CASE("runtime selection") {
  const auto& before = kernels::active();
  kernels::select(kernels::Backend::scalar);
  CHECK(kernels::active().name == "scalar");
  kernels::select(kernels::Backend::avx2);
  if (kernels::avx2_table() && kernels::cpu_has_avx2()) {
    CHECK(kernels::active().name == "avx2");
  } else {
    CHECK(kernels::active().name == "scalar");
  }
  kernels::select(before.name == "avx2" ? kernels::Backend::avx2 : kernels::Backend::scalar);
  CHECK(kernels::active().name == before.name);
}

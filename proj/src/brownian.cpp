#include "bdfsde/brownian.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

#include "bdfsde/kernels.hpp"

namespace bdfsde {
namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

// Uniform on (0, 1]: never zero, so log() is safe.
inline double to_unit(std::uint64_t bits) {
  return (static_cast<double>(bits >> 11) + 1.0) * 0x1.0p-53;
}

static_assert(std::endian::native == std::endian::little,
              "increment dump assumes a little-endian host");

}  // namespace

Philox4x32::Philox4x32(SeedSpec seed) noexcept
    : key_{static_cast<std::uint32_t>(seed.base_seed),
           static_cast<std::uint32_t>(seed.base_seed >> 32)},
      stream_(seed.sample_index) {}

Philox4x32::Block Philox4x32::operator()(std::uint64_t block) const noexcept {
  Block c{static_cast<std::uint32_t>(block), static_cast<std::uint32_t>(block >> 32),
          static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)};
  std::uint32_t k0 = key_[0];
  std::uint32_t k1 = key_[1];
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kMul0, c[0], hi0, lo0);
    mulhilo(kMul1, c[2], hi1, lo1);
    c = {hi1 ^ c[1] ^ k0, lo1, hi0 ^ c[3] ^ k1, lo0};
    k0 += kWeyl0;
    k1 += kWeyl1;
  }
  return c;
}

double NormalStream::next() noexcept {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const auto b = rng_(block_++);
  const double u1 = to_unit((static_cast<std::uint64_t>(b[1]) << 32) | b[0]);
  const double u2 = to_unit((static_cast<std::uint64_t>(b[3]) << 32) | b[2]);
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

IncrementTable::IncrementTable(TimeGrid grid, std::size_t noise_dim, std::vector<double> increments)
    : grid_(grid), d_(noise_dim), data_(std::move(increments)) {
  if (d_ == 0) throw ArgumentError("increment table: noise dimension must be positive");
  if (data_.size() != grid_.steps() * d_) {
    throw ArgumentError("increment table: expected N*d entries");
  }
}

std::vector<double> IncrementTable::endpoint() const {
  std::vector<double> w(d_, 0.0);
  for (std::size_t j = 1; j <= grid_.steps(); ++j) {
    const auto row = increment(j);
    for (std::size_t c = 0; c < d_; ++c) w[c] += row[c];
  }
  return w;
}

IncrementTable generate_increments(const TimeGrid& grid, std::size_t noise_dim, SeedSpec seed) {
  if (noise_dim == 0) throw ArgumentError("generate_increments: noise dimension must be positive");
  const double scale = std::sqrt(grid.step());
  std::vector<double> data(grid.steps() * noise_dim);
  NormalStream normals(seed);
  for (double& v : data) v = scale * normals.next();
  return {grid, noise_dim, std::move(data)};
}

IncrementTable coarsen(const IncrementTable& fine, std::size_t factor) {
  if (factor == 0) throw ArgumentError("coarsen: factor must be positive");
  const std::size_t n = fine.grid().steps();
  if (n % factor != 0) {
    throw ArgumentError("coarsen: " + std::to_string(n) + " steps not divisible by " +
                        std::to_string(factor));
  }
  if (factor == 1) return fine;
  const std::size_t rows = n / factor;
  const std::size_t d = fine.noise_dim();
  std::vector<double> out(rows * d);
  kernels::active().block_sum(fine.flat().data(), rows, factor, d, out.data());
  return {TimeGrid(fine.grid().horizon(), rows), d, std::move(out)};
}

void write_increments(const IncrementTable& table, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  const std::uint64_t n = table.grid().steps();
  const std::uint64_t d = table.noise_dim();
  const double h = table.grid().step();
  os.write(reinterpret_cast<const char*>(&n), sizeof n);
  os.write(reinterpret_cast<const char*>(&d), sizeof d);
  os.write(reinterpret_cast<const char*>(&h), sizeof h);
  os.write(reinterpret_cast<const char*>(table.flat().data()),
           static_cast<std::streamsize>(table.flat().size_bytes()));
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

IncrementTable read_increments(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::uint64_t n = 0, d = 0;
  double h = 0.0;
  is.read(reinterpret_cast<char*>(&n), sizeof n);
  is.read(reinterpret_cast<char*>(&d), sizeof d);
  is.read(reinterpret_cast<char*>(&h), sizeof h);
  if (!is || n == 0 || d == 0) throw std::runtime_error("malformed increment dump: " + path.string());
  std::vector<double> data(n * d);
  is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * 8));
  if (!is) throw std::runtime_error("truncated increment dump: " + path.string());
  return {TimeGrid(h * static_cast<double>(n), n), d, std::move(data)};
}

}  // namespace bdfsde

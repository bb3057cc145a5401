#pragma once

// Seeded Brownian increments and their exact aggregation to coarser grids.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "bdfsde/core.hpp"

namespace bdfsde {

/// Identifies one independent noise realisation.
struct SeedSpec {
  std::uint64_t base_seed = 0;
  std::uint64_t sample_index = 0;
};

/// Philox4x32-10 counter-based generator. The key is the base seed and the
/// upper half of the counter is the sample index, so each sample owns a
/// disjoint stream that can be produced on any thread in any order.
class Philox4x32 {
 public:
  using Block = std::array<std::uint32_t, 4>;

  explicit Philox4x32(SeedSpec seed) noexcept;

  /// Output block number `block` of this stream.
  Block operator()(std::uint64_t block) const noexcept;

 private:
  std::array<std::uint32_t, 2> key_;
  std::uint64_t stream_;
};

/// Standard normal variates from a Philox stream via Box-Muller, two per block.
class NormalStream {
 public:
  explicit NormalStream(SeedSpec seed) noexcept : rng_(seed) {}

  double next() noexcept;

 private:
  Philox4x32 rng_;
  std::uint64_t block_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Row j-1 holds W(t_j) - W(t_{j-1}) for j = 1..N; d columns.
class IncrementTable {
 public:
  IncrementTable(TimeGrid grid, std::size_t noise_dim, std::vector<double> increments);

  const TimeGrid& grid() const noexcept { return grid_; }
  std::size_t noise_dim() const noexcept { return d_; }

  /// dW^j for j in 1..N.
  std::span<const double> increment(std::size_t j) const noexcept {
    return {data_.data() + (j - 1) * d_, d_};
  }
  std::span<const double> flat() const noexcept { return data_; }

  /// Column sums: the realised W(T).
  std::vector<double> endpoint() const;

 private:
  TimeGrid grid_;
  std::size_t d_;
  std::vector<double> data_;
};

/// N x d independent N(0, h) draws, generated row-major from the seed's stream.
IncrementTable generate_increments(const TimeGrid& grid, std::size_t noise_dim, SeedSpec seed);

/// Sums consecutive blocks of `factor` rows (ascending order) onto a grid with
/// N/factor steps.
IncrementTable coarsen(const IncrementTable& fine, std::size_t factor);

/// Debug dump: N, d as uint64 and h as float64 (little-endian), then the
/// row-major increments as float64.
void write_increments(const IncrementTable& table, const std::filesystem::path& path);
IncrementTable read_increments(const std::filesystem::path& path);

}  // namespace bdfsde

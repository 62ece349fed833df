#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "gridforge/format.hpp"
#include "gridforge/grid.hpp"

namespace gridforge {

struct NearestPoint {
  std::size_t index = 0;
  double sq_error = 0.0;
};

/// argmin_j (a - points[j])^2 over a sorted table; exact midpoints go to the
/// lower index. Values beyond the table saturate to the extreme point.
NearestPoint nearest_point(double a, std::span<const double> points) noexcept;

/// Same, in the grid's normalized coordinates.
inline NearestPoint nearest_point(double a, const Grid& grid) noexcept {
  return nearest_point(a, grid.normalized());
}

struct QuantOptions {
  /// Candidate divisors d giving scale absmax/d in native grid units. Empty
  /// means one candidate per grid, d = grid.unit(). Four-Over-Six on NVFP4 is
  /// {4, 4.5, 5, 5.5, 6}.
  std::vector<double> scale_divisors;
  /// When set, the scale is rounded to this format before codes are chosen.
  std::optional<LowBitFormat> scale_format;
};

struct QuantizedBlock {
  double scale = 0.0;  // native-unit scale actually used (post scale quantization)
  std::vector<std::uint8_t> codes;
  std::uint8_t grid_index = 0;
  std::optional<std::uint8_t> scale_code;
  bool scale_saturated = false;
};

struct BlockLoss {
  double mse = 0.0;  // de-normalized squared error per element
};

struct QuantizeResult {
  QuantizedBlock block;
  BlockLoss loss;
};

/// Absmax blockwise quantization with per-block grid selection. Zero blocks
/// get scale 0, all-zero codes and loss 0. Throws InputError on NaN/Inf.
QuantizeResult quantize_block(std::span<const double> x, const GridFamily& family,
                              const QuantOptions& opts = {});

/// Loss of quantize_block without materializing codes.
double quantize_loss(std::span<const double> x, const GridFamily& family,
                     const QuantOptions& opts = {});

/// Throws CorruptBlockError on out-of-range grid index or code.
std::vector<double> dequantize_block(const QuantizedBlock& qb, const GridFamily& family);

/// M^2 (1/g) sum psi_B(a_i) for one grid with scale = absmax (full grids use
/// signed values, half grids use magnitudes). Zero block -> 0.
double grid_block_loss(std::span<const double> x, const Grid& grid) noexcept;

/// Average normalized magnitude (1/g) sum |x_i| / max|x|. Throws
/// DegenerateBlockError on an all-zero block.
double mu_statistic(std::span<const double> x);

}  // namespace gridforge

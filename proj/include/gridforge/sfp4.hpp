#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "gridforge/block_pool.hpp"
#include "gridforge/grid.hpp"

namespace gridforge {

/// Scale byte: bits 7:6 grid selector (0 = A, 1 = B+, 2 = B-; 3 invalid),
/// bits 5:0 the E3M3u scale magnitude.
struct ScaleByte {
  std::uint8_t selector = 0;
  std::uint8_t magnitude = 0;
};

std::uint8_t pack_scale_byte(ScaleByte s);  // throws EncodingError on out-of-range fields
ScaleByte unpack_scale_byte(std::uint8_t byte) noexcept;

/// Offset, in E2M1 units, that a selector adds to every decoded element.
double selector_offset(std::uint8_t selector, double shift_c);

struct Sfp4Block {
  std::vector<std::uint8_t> e2m1_codes;  // one 4-bit code per element
  std::uint8_t scale_byte = 0;
  double shift_c = 0.5;
  bool scale_saturated = false;
  double mse = 0.0;  // against the decoded (quantized) scale
};

/// NVFP4 plus the two shifted grids, offsets {0, +c, -c} in E2M1 units.
GridFamily sfp4_family(double shift_c = 0.5);

/// Picks the (divisor, grid) pair with the lowest block MSE; the scale is
/// absmax / divisor rounded to E3M3u. Pass {6} to disable scale search.
Sfp4Block sfp4_encode(std::span<const double> x, double shift_c = 0.5,
                      std::span<const double> divisors = {});

/// Throws CorruptBlockError for selector 3 or codes wider than 4 bits.
std::vector<double> sfp4_decode(const Sfp4Block& b);

/// Row-major M x K weight matrix encoded in blocks of g along K.
struct Sfp4Tensor {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t g = 16;
  double shift_c = 0.5;
  std::vector<std::uint8_t> codes;        // rows * cols, 4-bit each
  std::vector<std::uint8_t> scale_bytes;  // rows * cols / g
  std::size_t saturated_scales = 0;

  std::size_t blocks_per_row() const noexcept { return cols / g; }
  Sfp4Block block(std::size_t row, std::size_t b) const;
};

/// Throws ShapeError when cols is not a multiple of g.
Sfp4Tensor sfp4_encode_matrix(std::span<const double> w, std::size_t rows, std::size_t cols,
                              std::size_t g = 16, double shift_c = 0.5,
                              std::span<const double> divisors = {});
std::vector<double> sfp4_decode_matrix(const Sfp4Tensor& t);

struct MatmulCheck {
  std::vector<double> dense;       // decode W, then W X
  std::vector<double> decomposed;  // base E2M1 GEMM minus c * (sigma s) X_sum
  /// max over entries of |dense - decomposed| / sum_k |w_mk x_kn| (absolute
  /// difference where that sum is 0).
  double max_rel_err = 0.0;
};

/// Y = W X for a K x N row-major X. sigma = -1 for B+ and +1 for B-, so the
/// minus-sign correction reproduces the shifted decode exactly.
MatmulCheck sfp4_matmul_reference(const Sfp4Tensor& w, std::span<const double> x, std::size_t n);

/// Signed correction matrix (rows x blocks_per_row): sigma * decoded scale.
std::vector<double> sfp4_correction_matrix(const Sfp4Tensor& w);

/// Packed file: "SFP4", u32 version, u64 M, u64 K, u64 g, f64 shift_c, codes
/// two per byte (low nibble first), one scale byte per block. Little-endian.
void write_sfp4(const std::filesystem::path& path, const Sfp4Tensor& t);
Sfp4Tensor read_sfp4(const std::filesystem::path& path);

struct ShiftCalibration {
  double best_c = 0.5;
  std::vector<std::pair<double, double>> table;  // (c, pooled MSE)
};

/// Pooled encode MSE for each candidate shift; lowest wins (first on ties).
ShiftCalibration sfp4_calibrate_shift(const BlockPool& pool,
                                      std::vector<double> candidates = {0.25, 0.5, 0.75, 1.0},
                                      std::span<const double> divisors = {}, int threads = 1);

}  // namespace gridforge

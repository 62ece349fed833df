#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "gridforge/format.hpp"

namespace gridforge {

/// One codebook. Points are stored in the grid's native units (E2M1 values for
/// NVFP4, integer lattice for INT4, already-normalized values for learned
/// grids); dividing by `unit` gives the absmax-normalized level, i.e. a block
/// with absmax M is quantized with scale M / unit.
///
/// A half grid holds only non-negative magnitudes 0 = b_0 < ... < b_{k-1}; it
/// quantizes |x| and reapplies the sign.
class Grid {
 public:
  Grid(std::string name, std::vector<double> points, double unit = 1.0, bool half = false,
       std::optional<FormatKind> format = std::nullopt);

  const std::string& name() const noexcept { return name_; }
  std::span<const double> points() const noexcept { return points_; }
  std::span<const double> normalized() const noexcept { return normalized_; }
  double unit() const noexcept { return unit_; }
  std::size_t size() const noexcept { return points_.size(); }
  bool is_half() const noexcept { return half_; }
  std::optional<FormatKind> format() const noexcept { return format_; }

  /// All normalized points inside [-1, 1] with max magnitude exactly 1.
  bool is_absmax_normalized() const noexcept;
  bool has_exact_zero() const noexcept;

  Grid negated(std::string name) const;
  /// Half grid -> full signed grid {-b_{k-1}, ..., -b_1, 0, b_1, ..., b_{k-1}}.
  Grid mirrored() const;
  Grid with_name(std::string name) const;
  /// Unit-1 copy holding the normalized points.
  Grid normalized_grid() const;

  friend bool operator==(const Grid& a, const Grid& b) noexcept {
    return a.points_ == b.points_ && a.unit_ == b.unit_ && a.half_ == b.half_;
  }

 private:
  std::string name_;
  std::vector<double> points_;
  std::vector<double> normalized_;
  double unit_;
  bool half_;
  std::optional<FormatKind> format_;
};

enum class Selector { MinMSE, SignOfMaxMagnitude };

std::string selector_name(Selector s);
Selector parse_selector(std::string_view s);

/// 1 to 3 grids plus the per-block selection rule. Optional shift offsets are
/// added to the grid's native points before scaling (SFP4's shifted grids).
class GridFamily {
 public:
  GridFamily(std::string name, std::vector<Grid> grids, Selector selector = Selector::MinMSE,
             std::vector<double> shift_offsets = {});
  /// Single-grid family.
  explicit GridFamily(Grid grid);

  const std::string& name() const noexcept { return name_; }
  const std::vector<Grid>& grids() const noexcept { return grids_; }
  const Grid& grid(std::size_t i) const { return grids_.at(i); }
  std::size_t size() const noexcept { return grids_.size(); }
  Selector selector() const noexcept { return selector_; }
  std::span<const double> shift_offsets() const noexcept { return offsets_; }
  double offset(std::size_t i) const noexcept { return offsets_.empty() ? 0.0 : offsets_[i]; }
  bool has_offsets() const noexcept { return !offsets_.empty(); }

 private:
  std::string name_;
  std::vector<Grid> grids_;
  Selector selector_;
  std::vector<double> offsets_;
};

/// Rounds every native point to the nearest value of `fmt` (ties to even
/// mantissa). Throws DegenerateGridError, listing the colliding points, if
/// two points land on the same value.
Grid snap_to_format(const Grid& grid, const LowBitFormat& fmt);

/// Unit-1 NF4 grid from the QLoRA quantile recipe: 8 positive and 7 negative
/// standard-normal quantiles plus an exact zero, normalized to [-1, 1].
Grid nf4_construct();

nlohmann::json to_json(const Grid& grid);
nlohmann::json to_json(const GridFamily& family);
Grid grid_from_json(const nlohmann::json& j);
/// Accepts either a family document (with "grids") or a single grid document.
GridFamily family_from_json(const nlohmann::json& j);

}  // namespace gridforge

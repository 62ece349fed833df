#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "json.hpp"

#include "gridforge/block_pool.hpp"
#include "gridforge/format.hpp"
#include "gridforge/grid.hpp"

namespace gridforge {

enum class WeightMode { Msquared, Uniform };

std::string weight_mode_name(WeightMode m);
WeightMode parse_weight_mode(std::string_view s);

struct TrainConfig {
  int max_iters = 200;
  double rel_tol = 1e-7;
  std::uint64_t seed = 0;
  double residual_quantile = 0.5;
  WeightMode weight_mode = WeightMode::Msquared;
  /// learn_residual_pair: run each partition's Lloyd to convergence per outer
  /// iteration instead of a single sweep.
  bool full_inner = false;
  /// lloyd_fit: after convergence, repeatedly move the cheapest free level into
  /// the gap with the largest error and rerun Lloyd while the objective drops.
  /// Lets levels cross empty stretches of the support that Lloyd cannot.
  bool reallocate = false;
  int threads = 1;

  void validate() const;  // throws ParameterError
};

struct LloydConstraints {
  bool fixed_zero = false;
  bool pin_min = false;  // lowest level = -1 (0 in half mode, which is always pinned)
  bool pin_max = false;  // highest level = +1
  /// (negative count, positive count); requires fixed_zero and sums to k - 1.
  std::optional<std::pair<int, int>> neg_pos_split;
  /// Learn a half grid on |a| with 0 = b_0 pinned.
  bool half = false;

  static LloydConstraints endpoints() {
    LloydConstraints c;
    c.pin_min = c.pin_max = true;
    return c;
  }
};

struct LearnReport {
  std::vector<double> objective_trace;
  std::vector<std::uint8_t> assignments_final;
  bool converged = false;
  int iterations = 0;
};

nlohmann::json to_json(const LearnReport& r);

/// Weighted Lloyd-Max on absmax-normalized samples of the pool. The objective
/// is sum_i w_i (a_i - b(a_i))^2 / N_blocks / g, so with Msquared weights it
/// equals the mean block loss.
Grid lloyd_fit(const BlockPool& pool, std::size_t k_levels, const TrainConfig& cfg,
               const LloydConstraints& constraints = {}, LearnReport* report = nullptr,
               std::string name = "lloyd");

struct PairOptions {
  LloydConstraints constraints;  // applied to every updated grid
  std::optional<LowBitFormat> snap;
  std::string name = "PO2";
};

/// Residual grid-pair learning: per-block primary loss, residual pool above
/// the configured quantile, Lloyd init of the partner on it, then alternating
/// min-loss assignment and Lloyd updates, then optional snapping. With
/// primary_fixed only the partner moves.
GridFamily learn_residual_pair(const Grid& primary, bool primary_fixed, const BlockPool& pool,
                               const TrainConfig& cfg, const PairOptions& opts = {},
                               LearnReport* report = nullptr);

/// Coordinate descent over the free levels of an 8 negative / zero / 7
/// positive grid (or 7/8 when `eight_negative` is false). Zero is pinned and
/// the extreme level on the larger side is pinned to -1 (+1). Returns the
/// unsnapped grid.
Grid learn_split87(const BlockPool& pool, const TrainConfig& cfg, bool eight_negative = true,
                   LearnReport* report = nullptr);

/// Flips each block so its first maximum-magnitude entry is positive, learns
/// G (top level pinned to 1) and returns (G, -G) with the sign selector.
GridFamily learn_bof4s(const BlockPool& pool, const TrainConfig& cfg,
                       std::optional<LowBitFormat> snap = std::nullopt,
                       LearnReport* report = nullptr);

/// Half-grid (magnitude) risk of a grid on a pool: mean over blocks of
/// M^2 (1/g) sum psi(|a_i|). Used by the theory experiments.
double half_grid_risk(const BlockPool& pool, const Grid& half_grid);

}  // namespace gridforge

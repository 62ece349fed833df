#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "gridforge/block_pool.hpp"
#include "gridforge/grid.hpp"
#include "gridforge/learn.hpp"
#include "gridforge/quant.hpp"

namespace gridforge {

/// Spiky and Flat are block-structured test mixtures: a spiky block has one
/// +-1 entry over N(0, 0.1^2) noise, a flat block has entries of magnitude in
/// [0.7, 1] with random signs.
enum class DistKind { Normal, StudentT, Uniform, TruncatedNormal, Spiky, Flat };

struct DistributionSpec {
  DistKind kind = DistKind::Normal;
  double nu = 0.0;     // StudentT
  double bound = 0.0;  // TruncatedNormal: support [-bound, bound]
  /// Divide by the standard deviation so draws have unit variance.
  bool standardized = false;

  static DistributionSpec normal() { return {}; }
  static DistributionSpec student_t(double nu, bool standardized = false) {
    return {DistKind::StudentT, nu, 0.0, standardized};
  }
  static DistributionSpec uniform() { return {DistKind::Uniform, 0.0, 0.0, false}; }
  static DistributionSpec truncated_normal(double bound) {
    return {DistKind::TruncatedNormal, 0.0, bound, false};
  }

  /// "normal", "t5" (unit-scale t_5), "t5s" (unit variance), "uniform",
  /// "tnormal2.5" (normal truncated to [-2.5, 2.5]), "spiky", "flat".
  /// Throws ParameterError.
  static DistributionSpec parse(std::string_view name);
  std::string name() const;
  bool bounded() const noexcept {
    return kind == DistKind::Uniform || kind == DistKind::TruncatedNormal;
  }
  void validate() const;  // throws ParameterError
};

/// i.i.d. coordinates, blocks filled in order. Student-t uses
/// z / sqrt(chi2_nu / nu).
BlockPool sample_pool(const DistributionSpec& spec, std::size_t g, std::size_t n_blocks,
                      std::uint64_t seed);

struct RiskEntry {
  std::string name;
  double mse_mean = 0.0;
  double stderr_ = 0.0;
  std::size_t n_blocks = 0;
  std::size_t g = 0;
};

/// Mean over blocks of the family's per-block loss (the selector's choice).
RiskEntry estimate_risk(const BlockPool& pool, const GridFamily& family,
                        const QuantOptions& opts = {}, int threads = 1);

/// Per-block losses, in pool order.
std::vector<double> block_losses(const BlockPool& pool, const GridFamily& family,
                                 const QuantOptions& opts = {}, int threads = 1);

enum class ClassRisk {
  /// Class risk is the family's realized loss (per-block min over its grids).
  PerBlockMin,
  /// Class risk uses one grid per class: the grid the family selects most
  /// often on that class's training blocks.
  Designated,
};

struct CompetitiveOptions {
  std::vector<double> tau_grid;  // empty: 0.10, 0.11, ..., 0.90
  std::size_t n_train = 30000;
  std::size_t n_val = 60000;
  std::size_t g = 16;
  std::size_t k_levels = 16;
  double min_class_fraction = 0.01;
  ClassRisk class_risk = ClassRisk::PerBlockMin;
  TrainConfig train;
  LloydConstraints constraints;
  std::uint64_t seed = 0;
};

struct CompetitivePoint {
  double tau = 0.0;
  double p_spiky = 0.0;  // validation fraction with mu <= tau
  double alpha_S = 0.0;
  double alpha_F = 0.0;
  double beta = 0.0;
  std::size_t designated_S = 0;
  std::size_t designated_F = 0;
};

struct CompetitiveReport {
  CompetitivePoint best;
  std::vector<CompetitivePoint> sweep;
  std::vector<double> skipped_taus;
};

CompetitiveReport competitive_analysis(const DistributionSpec& spec, const GridFamily& family,
                                       const CompetitiveOptions& opts);

struct GapPoint {
  std::size_t g = 0;
  double single_risk = 0.0;
  double pair_risk = 0.0;
  double gap = 0.0;
  double stderr_ = 0.0;
  std::size_t n_val_blocks = 0;
};

struct AsymptoticOptions {
  std::vector<std::size_t> g_list{4, 16, 64, 256, 1024};
  std::size_t budget = 1u << 20;    // scalar samples per split (train and validation)
  std::size_t min_blocks = 512;     // per split
  std::size_t k_levels = 8;         // half-grid size, b_0 = 0 and b_{k-1} = 1 pinned
  TrainConfig train;
  std::uint64_t seed = 0;
};

/// Best half grid vs best half-grid pair, learned on a training split and
/// compared block by block on a validation split. Needs bounded support.
std::vector<GapPoint> asymptotic_gap(const DistributionSpec& spec, const AsymptoticOptions& opts);

/// Learns a grid on a pool; returns its risk on another pool.
using GridLearner = std::function<Grid(const BlockPool&)>;

struct ConcavityRow {
  double p = 0.0;
  double value = 0.0;   // V(p) on validation
  double stderr_ = 0.0;
};

struct ConcavityResult {
  bool passed = true;
  double epsilon = 0.0;
  std::vector<ConcavityRow> rows;
  std::vector<std::string> violations;
};

/// V(p) = p R_S(B_p) + (1 - p) R_F(B_p) for a grid B_p learned on a p-mixture
/// of the training pools, evaluated on the validation pools, plus the
/// midpoint test V((p1+p2)/2) >= (V(p1)+V(p2))/2 - eps over adjacent triples
/// with eps = 2 * max stderr.
ConcavityResult concavity_check(const BlockPool& train_S, const BlockPool& train_F,
                                const BlockPool& val_S, const BlockPool& val_F,
                                const GridLearner& learner, const std::vector<double>& p_grid,
                                std::uint64_t seed = 0);

/// Lloyd learner that falls back to the exact grid of the distinct values
/// when the pool has no more than k of them.
GridLearner lloyd_learner(std::size_t k, TrainConfig cfg, LloydConstraints cons = {});

struct StudentTFit {
  double nu = 0.0;
  double scale = 0.0;
  double loglik = 0.0;
  bool at_upper_bound = false;
  bool at_lower_bound = false;
};

struct TFitOptions {
  double nu_min = 0.5;
  double nu_max = 200.0;
  std::size_t grid_points = 40;
};

/// Location-0 Student-t MLE. Scale is profiled by the EM fixed point for each
/// nu; nu is searched on a log grid and refined by golden section on log nu.
StudentTFit fit_student_t(std::span<const double> samples, const TFitOptions& opts = {});

nlohmann::json to_json(const RiskEntry& e);
nlohmann::json to_json(const CompetitiveReport& r);
nlohmann::json to_json(const GapPoint& p);
nlohmann::json to_json(const ConcavityResult& r);
nlohmann::json to_json(const StudentTFit& f);

}  // namespace gridforge

#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "gridforge/block_pool.hpp"
#include "gridforge/grid.hpp"
#include "gridforge/learn.hpp"

namespace gridforge {

/// Canonical names, in listing order.
const std::vector<std::string>& builtin_names();

/// Built-in grid or family by case-insensitive name. Single grids come back
/// as one-grid families. Learned families (BOF4S, PO2_NF4, PO2_Split87) are
/// read from the golden file in data_dir() when present, else trained with
/// their fixed recipe; either way the result is memoized. Throws NameError.
GridFamily builtin_family(std::string_view name);

/// Built-in single grid; throws NameError for unknown or multi-grid names.
Grid builtin_grid(std::string_view name);

/// Runs the fixed training recipe of a learned built-in, bypassing golden
/// files and the cache.
GridFamily train_builtin(std::string_view name);

bool is_learned_builtin(std::string_view name);

/// Table recipes learned on a caller-supplied pool: "gopt" (one Lloyd grid),
/// "split87", "bof4s", "mpo2" (both grids learned from a Lloyd start,
/// endpoints pinned at +-1), "po2_nf4" and "po2_split87" (fixed snapped
/// primary, learned partner). Everything but "gopt" and "split87" is E4M3
/// snapped. Throws NameError for unknown recipes.
GridFamily fresh_family(std::string_view recipe, const BlockPool& train, const TrainConfig& cfg);

/// $GRIDFORGE_DATA if set, else the grids/ directory of the source tree.
std::filesystem::path data_dir();

/// Resolves a built-in name or a path to a grid/family JSON file.
GridFamily load_family(std::string_view name_or_path);

}  // namespace gridforge

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "gridforge/block_pool.hpp"

namespace gridforge {

enum class DType { F32LE, F64LE };

DType parse_dtype(std::string_view s);
std::string dtype_name(DType d);

struct LoadResult {
  BlockPool pool;
  std::size_t dropped_values = 0;  // trailing partial block
};

/// Consecutive g-element blocks of a raw little-endian float file. Throws
/// InputError on unreadable files, a size that is not a whole number of
/// elements, or NaN/Inf (with the element offset).
LoadResult load_raw_tensor(const std::filesystem::path& path, DType dtype, std::size_t g,
                           SourceTag tag = SourceTag::Weight);

void write_raw_tensor(const std::filesystem::path& path, std::span<const double> values, DType dtype);

struct PoolSource {
  std::string path;
  SourceTag tag = SourceTag::Weight;
  std::size_t count = 0;  // blocks drawn from this source
  DType dtype = DType::F32LE;
};

struct PoolManifest {
  std::vector<PoolSource> sources;
  std::size_t g = 16;
  /// Weight : activation block ratio, e.g. {1, 1}.
  std::optional<std::pair<double, double>> balance;
  std::filesystem::path base_dir;  // relative source paths resolve here

  static PoolManifest from_json(const nlohmann::json& j, std::filesystem::path base_dir = {});
  static PoolManifest load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
  void validate() const;  // throws ParameterError
};

/// Samples `count` blocks without replacement from each source, checks the
/// balance ratio and shuffles with the seed. Throws InsufficientDataError if a
/// source has fewer blocks than requested or the counts miss the balance ratio.
BlockPool build_pool(const PoolManifest& manifest, std::uint64_t seed);

struct PoolAudit {
  std::size_t n_blocks = 0;
  std::size_t g = 0;
  std::size_t weight = 0;
  std::size_t activation = 0;
  std::size_t synthetic = 0;
  double mean_absmax = 0.0;

  friend bool operator==(const PoolAudit&, const PoolAudit&) = default;
};

PoolAudit audit(const BlockPool& pool);
nlohmann::json to_json(const PoolAudit& a);

/// One row of the MSE report; mse and stderr in raw units.
struct CsvRow {
  std::string experiment;
  std::string family;
  std::string distribution;
  std::size_t g = 0;
  std::size_t n = 0;
  double mse = 0.0;
  double stderr_ = 0.0;
};

void write_csv_header(std::ostream& out);
void write_csv_row(std::ostream& out, const CsvRow& row);

}  // namespace gridforge

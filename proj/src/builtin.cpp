#include "gridforge/builtin.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>

#include "gridforge/error.hpp"
#include "gridforge/learn.hpp"
#include "gridforge/stats.hpp"

#ifndef GRIDFORGE_SOURCE_GRIDS
#define GRIDFORGE_SOURCE_GRIDS "grids"
#endif

namespace gridforge {

namespace {

const std::vector<double> kMpo2B1{-1,       -0.8125,   -0.625,   -0.5,    -0.375,  -0.28125,
                                  -0.171875, -0.0703125, 0.015625, 0.109375, 0.21875, 0.34375,
                                  0.46875,  0.625,     0.75,     1};
const std::vector<double> kMpo2B2{-1,       -0.75,     -0.5625,  -0.4375, -0.3125,  -0.203125,
                                  -0.109375, -0.015625, 0.0703125, 0.171875, 0.28125, 0.40625,
                                  0.5,      0.6875,    0.875,    1};
const std::vector<double> kSplit87{-1,      -0.8125,  -0.625,   -0.46875, -0.34375,  -0.234375,
                                   -0.140625, -0.0546875, 0,      0.0625,   0.171875,  0.28125,
                                   0.40625, 0.5625,   0.75,     1};

std::string upper(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

// Canonical spelling for a case-insensitive name, or empty.
std::string canonical(std::string_view name) {
  const std::string u = upper(name);
  for (const auto& n : builtin_names()) {
    if (upper(n) == u) return n;
  }
  return {};
}

Grid e2m1_grid(std::string name) {
  return Grid(std::move(name), LowBitFormat::e2m1().values(), 6.0, false, FormatKind::E2M1);
}

Grid int4_grid() {
  std::vector<double> p;
  for (int i = -8; i <= 7; ++i) p.push_back(i);
  return Grid("INT4", p, 7.5);
}

Grid int4_sym_grid() {
  std::vector<double> p;
  for (int i = -7; i <= 7; ++i) p.push_back(i);
  return Grid("INT4_SYM", p, 7.0);
}

Grid nf4_e4m3() { return snap_to_format(nf4_construct(), LowBitFormat::e4m3()).with_name("NF4_E4M3"); }

// Fixed training pools for learned built-ins.
constexpr std::size_t kTrainBlocks = 65536;
constexpr std::uint64_t kTrainSeed = 20240601;

BlockPool normal_t7_pool() {
  BlockPool pool = sample_pool(DistributionSpec::normal(), 16, kTrainBlocks / 2, kTrainSeed);
  const BlockPool t7 = sample_pool(DistributionSpec::student_t(7), 16, kTrainBlocks / 2, kTrainSeed + 1);
  for (std::size_t i = 0; i < t7.size(); ++i) pool.append_from(t7, i);
  return pool;
}

GridFamily train_po2(const Grid& primary, const std::string& name, const BlockPool& pool,
                     const TrainConfig& cfg) {
  PairOptions po;
  po.snap = LowBitFormat::e4m3();
  po.name = name;
  po.constraints = LloydConstraints::endpoints();
  return learn_residual_pair(primary, true, pool, cfg, po);
}

GridFamily make_static(const std::string& n) {
  if (n == "INT4") return GridFamily(int4_grid());
  if (n == "INT4_SYM") return GridFamily(int4_sym_grid());
  if (n == "FP4" || n == "NVFP4") return GridFamily(e2m1_grid(n));
  if (n == "NF4") return GridFamily(nf4_construct());
  if (n == "NF4_E4M3") return GridFamily(nf4_e4m3());
  if (n == "Split87") {
    return GridFamily(Grid("Split87", kSplit87, 1.0, false, FormatKind::E4M3));
  }
  if (n == "MPO2") {
    return GridFamily("MPO2", {Grid("MPO2.b1", kMpo2B1, 1.0, false, FormatKind::E4M3),
                               Grid("MPO2.b2", kMpo2B2, 1.0, false, FormatKind::E4M3)});
  }
  if (n == "IF4") return GridFamily("IF4", {int4_grid(), e2m1_grid("FP4")});
  if (n == "IF4_SYM") return GridFamily("IF4_SYM", {int4_sym_grid(), e2m1_grid("FP4")});
  if (n == "SFP4") {
    return GridFamily("SFP4", {e2m1_grid("SFP4.A"), e2m1_grid("SFP4.B+"), e2m1_grid("SFP4.B-")},
                      Selector::MinMSE, {0.0, 0.5, -0.5});
  }
  throw NameError("unknown grid '" + n + "'");
}

std::mutex g_cache_mu;
std::map<std::string, GridFamily>& cache() {
  static std::map<std::string, GridFamily> c;
  return c;
}

}  // namespace

const std::vector<std::string>& builtin_names() {
  static const std::vector<std::string> names{
      "INT4", "INT4_SYM", "FP4",  "NVFP4",   "NF4",    "NF4_E4M3",    "Split87",
      "MPO2", "BOF4S",    "IF4",  "IF4_SYM", "PO2_NF4", "PO2_Split87", "SFP4"};
  return names;
}

bool is_learned_builtin(std::string_view name) {
  const std::string n = canonical(name);
  return n == "BOF4S" || n == "PO2_NF4" || n == "PO2_Split87";
}

GridFamily train_builtin(std::string_view name) {
  const std::string n = canonical(name);
  if (n == "BOF4S") {
    TrainConfig cfg;
    cfg.weight_mode = WeightMode::Uniform;
    const BlockPool pool = sample_pool(DistributionSpec::normal(), 16, kTrainBlocks, kTrainSeed);
    return learn_bof4s(pool, cfg, LowBitFormat::e4m3());
  }
  if (n == "PO2_NF4") return train_po2(nf4_e4m3(), "PO2_NF4", normal_t7_pool(), {});
  if (n == "PO2_Split87") {
    return train_po2(make_static("Split87").grid(0), "PO2_Split87", normal_t7_pool(), {});
  }
  if (n.empty()) throw NameError("unknown grid '" + std::string(name) + "'");
  return make_static(n);
}

GridFamily fresh_family(std::string_view recipe, const BlockPool& train, const TrainConfig& cfg) {
  const std::string r = upper(recipe);
  if (r == "GOPT") return GridFamily(lloyd_fit(train, 16, cfg, {}, nullptr, "GOPT"));
  if (r == "SPLIT87") return GridFamily(learn_split87(train, cfg));
  if (r == "BOF4S") return learn_bof4s(train, cfg, LowBitFormat::e4m3());
  if (r == "MPO2") {
    const auto pins = LloydConstraints::endpoints();
    const Grid start = lloyd_fit(train, 16, cfg, pins, nullptr, "MPO2.b1");
    PairOptions po;
    po.constraints = pins;
    po.snap = LowBitFormat::e4m3();
    po.name = "MPO2";
    return learn_residual_pair(start, false, train, cfg, po);
  }
  if (r == "PO2_NF4") return train_po2(nf4_e4m3(), "PO2_NF4", train, cfg);
  if (r == "PO2_SPLIT87") return train_po2(make_static("Split87").grid(0), "PO2_Split87", train, cfg);
  throw NameError("unknown learning recipe '" + std::string(recipe) + "'");
}

std::filesystem::path data_dir() {
  if (const char* env = std::getenv("GRIDFORGE_DATA"); env && *env) return env;
  return GRIDFORGE_SOURCE_GRIDS;
}

GridFamily builtin_family(std::string_view name) {
  const std::string n = canonical(name);
  if (n.empty()) throw NameError("unknown grid '" + std::string(name) + "'");
  if (!is_learned_builtin(n)) return make_static(n);
  {
    std::lock_guard lock(g_cache_mu);
    if (auto it = cache().find(n); it != cache().end()) return it->second;
  }
  const auto golden = data_dir() / (n + ".json");
  GridFamily fam = [&] {
    if (std::ifstream in(golden); in) {
      nlohmann::json j;
      try {
        in >> j;
      } catch (const nlohmann::json::exception& e) {
        throw InputError("malformed golden grid file " + golden.string() + ": " + e.what());
      }
      return family_from_json(j);
    }
    return train_builtin(n);
  }();
  std::lock_guard lock(g_cache_mu);
  return cache().emplace(n, std::move(fam)).first->second;
}

Grid builtin_grid(std::string_view name) {
  const GridFamily f = builtin_family(name);
  if (f.size() != 1) throw NameError("'" + std::string(name) + "' is a multi-grid family");
  return f.grid(0);
}

GridFamily load_family(std::string_view name_or_path) {
  if (!canonical(name_or_path).empty()) return builtin_family(name_or_path);
  const std::filesystem::path p(name_or_path);
  if (p.extension() == ".json" || std::filesystem::exists(p)) {
    std::ifstream in(p);
    if (!in) throw InputError("cannot open grid file " + p.string());
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw InputError("malformed grid file " + p.string() + ": " + e.what());
    }
    return family_from_json(j);
  }
  throw NameError("unknown grid '" + std::string(name_or_path) + "'");
}

}  // namespace gridforge

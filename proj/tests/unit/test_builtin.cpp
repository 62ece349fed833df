#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "gridforge/builtin.hpp"
#include "gridforge/error.hpp"
#include "gridforge/format.hpp"
#include "oracles.hpp"

using namespace gridforge;
namespace fs = std::filesystem;

namespace {

GridFamily read_golden(const std::string& name) {
  std::ifstream in(data_dir() / (name + ".json"));
  REQUIRE(in.good());
  return family_from_json(nlohmann::json::parse(in));
}

bool same_points(const Grid& a, const Grid& b) {
  return std::equal(a.points().begin(), a.points().end(), b.points().begin(), b.points().end()) &&
         a.unit() == b.unit() && a.is_half() == b.is_half();
}

}  // namespace

TEST_CASE("every built-in has a golden file equal to its definition") {
  for (const auto& name : builtin_names()) {
    CAPTURE(name);
    const GridFamily golden = read_golden(name);
    const GridFamily def = is_learned_builtin(name) ? train_builtin(name) : builtin_family(name);
    REQUIRE(golden.size() == def.size());
    CHECK(golden.selector() == def.selector());
    for (std::size_t i = 0; i < def.size(); ++i) {
      CHECK(same_points(golden.grid(i), def.grid(i)));
      CHECK(golden.offset(i) == def.offset(i));
    }
  }
}

TEST_CASE("FP8-snapped built-ins are E4M3 values") {
  const auto e4m3 = LowBitFormat::e4m3();
  for (const char* name : {"MPO2", "Split87", "PO2_NF4", "PO2_Split87", "BOF4S", "NF4_E4M3"}) {
    const GridFamily f = builtin_family(name);
    for (const auto& g : f.grids()) {
      for (double p : g.points()) CHECK(e4m3.round(p) == p);
    }
  }
}

TEST_CASE("fixed primaries survive pair learning") {
  const GridFamily po2 = builtin_family("PO2_Split87");
  CHECK(same_points(po2.grid(0), builtin_grid("Split87")));
  const GridFamily nf = builtin_family("PO2_NF4");
  CHECK(same_points(nf.grid(0), builtin_grid("NF4_E4M3")));
}

TEST_CASE("names and loading") {
  CHECK(builtin_family("mpo2").name() == "MPO2");
  CHECK(is_learned_builtin("BOF4S"));
  CHECK_FALSE(is_learned_builtin("NF4"));
  const fs::path p = fs::temp_directory_path() / "gridforge_custom.json";
  std::ofstream(p) << to_json(Grid("custom", {-1.0, 0.0, 0.5, 1.0})).dump();
  const GridFamily f = load_family(p.string());
  CHECK(f.size() == 1);
  CHECK(f.grid(0).name() == "custom");
  CHECK_THROWS_AS(load_family("does-not-exist"), NameError);
  CHECK_THROWS_AS(fresh_family("magic", oracle::normal_pool(16, 10, 1), TrainConfig{}), NameError);
}

TEST_CASE("fresh recipes return the documented shapes") {
  const BlockPool pool = oracle::normal_pool(16, 3000, 2);
  TrainConfig cfg;
  cfg.weight_mode = WeightMode::Uniform;
  CHECK(fresh_family("gopt", pool, cfg).size() == 1);
  CHECK(fresh_family("split87", pool, cfg).grid(0).size() == 16);
  const GridFamily bof = fresh_family("bof4s", pool, cfg);
  CHECK(bof.selector() == Selector::SignOfMaxMagnitude);
  const GridFamily mpo2 = fresh_family("mpo2", pool, cfg);
  REQUIRE(mpo2.size() == 2);
  for (const auto& g : mpo2.grids()) {
    CHECK(g.points().front() == -1.0);
    CHECK(g.points().back() == 1.0);
  }
}

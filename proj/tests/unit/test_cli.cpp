#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gridforge/cli.hpp"
#include "gridforge/io.hpp"
#include "gridforge/sfp4.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "gridforge");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = gridforge::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path tmp(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / "gridforge_test_cli";
  fs::create_directories(d);
  return d / name;
}

}  // namespace

TEST_CASE("usage errors exit 2") {
  CHECK(cli({}).code == 2);
  CHECK(cli({"frobnicate"}).code == 2);
  CHECK(cli({"bench-mse", "--samples", "0"}).code == 2);
  CHECK(cli({"bench-mse", "--samples", "many"}).code == 2);
  CHECK(cli({"bench-mse", "--families", "NOPE", "--samples", "1600"}).code == 2);
  CHECK(cli({"learn", "--mode", "lloyd", "--manifest", tmp("missing.json").string()}).code == 2);
  CHECK(cli({"learn", "--mode", "teleport", "--pool", "normal:g16:100"}).code == 2);
  CHECK(cli({"--threads", "0", "grids", "list"}).code == 2);
  CHECK(cli({"--help"}).code == 0);
}

TEST_CASE("data errors map to their exit codes") {
  CHECK(cli({"quantize", "--input", tmp("absent.f32").string()}).code == 4);
  CHECK(cli({"learn", "--mode", "lloyd", "--levels", "16", "--pool", "uniform:g2:3"}).code == 5);
  const fs::path bad = tmp("bad.sfp4");
  std::ofstream(bad, std::ios::binary) << "SFP4";
  CHECK(cli({"sfp4", "decode", "--input", bad.string(), "--output", tmp("x.f32").string()}).code == 4);
  const fs::path raw = tmp("w.f32");
  gridforge::write_raw_tensor(raw, oracle::normal_values(100, 1), gridforge::DType::F32LE);
  CHECK(cli({"sfp4", "encode", "--input", raw.string(), "--output", tmp("w.sfp4").string(), "--rows", "4",
             "--cols", "20"}).code == 8);
}

TEST_CASE("bench-mse writes a deterministic CSV") {
  const std::vector<std::string> args{"--seed", "5", "bench-mse", "--families", "NF4,IF4",
                                      "--dists", "normal,t5", "--samples", "32000"};
  const Run a = cli(args);
  REQUIRE(a.code == 0);
  CHECK(a.out.rfind("experiment,family,distribution,g,n,mse,stderr\n", 0) == 0);
  CHECK(std::count(a.out.begin(), a.out.end(), '\n') == 5);
  CHECK(cli(args).out == a.out);
  std::vector<std::string> threaded(args);
  threaded.insert(threaded.begin(), {"--threads", "3"});
  CHECK(cli(threaded).out == a.out);
  std::vector<std::string> other(args);
  other[1] = "6";
  CHECK(cli(other).out != a.out);
}

TEST_CASE("learn emits a loadable grid and a report") {
  const fs::path grid = tmp("pair.json"), report = tmp("report.json");
  const Run r = cli({"--out", grid.string(), "learn", "--mode", "po2", "--primary", "NF4", "--pool",
                     "normal:g16:2000", "--report", report.string()});
  REQUIRE(r.code == 0);
  const Run show = cli({"grids", "show", grid.string()});
  CHECK(show.code == 0);
  CHECK(show.out.find("PO2_NF4.b2") != std::string::npos);
  std::ifstream in(report);
  const auto j = nlohmann::json::parse(in);
  CHECK(j.contains("objective_trace"));
  CHECK(j["pool"]["n_blocks"] == 2000);
}

TEST_CASE("learn exits 3 when the iteration cap is hit") {
  CHECK(cli({"learn", "--mode", "lloyd", "--pool", "t5:g16:2000", "--max-iters", "1"}).code == 3);
}

TEST_CASE("quantize reports the MSE and writes the dequantized tensor") {
  const fs::path in = tmp("q.f64"), out = tmp("q_out.f64");
  gridforge::write_raw_tensor(in, oracle::normal_values(160, 2), gridforge::DType::F64LE);
  const Run r = cli({"quantize", "--family", "NF4", "--input", in.string(), "--dtype", "f64le", "--output",
                     out.string()});
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["n_blocks"] == 10);
  CHECK(fs::file_size(out) == 160 * 8);
}

TEST_CASE("sfp4 encode/decode through files") {
  const fs::path raw = tmp("m.f32"), packed = tmp("m.sfp4"), back = tmp("m_back.f32");
  const auto w = oracle::normal_values(8 * 32, 3);
  gridforge::write_raw_tensor(raw, w, gridforge::DType::F32LE);
  REQUIRE(cli({"sfp4", "encode", "--input", raw.string(), "--output", packed.string(), "--rows", "8", "--cols",
               "32"}).code == 0);
  REQUIRE(cli({"sfp4", "decode", "--input", packed.string(), "--output", back.string()}).code == 0);
  const auto dec = gridforge::sfp4_decode_matrix(gridforge::read_sfp4(packed));
  const auto loaded = gridforge::load_raw_tensor(back, gridforge::DType::F32LE, 1);
  for (std::size_t i = 0; i < dec.size(); ++i) CHECK(loaded.pool.values()[i] == static_cast<float>(dec[i]));
  const Run mm = cli({"sfp4", "matmul-check", "--m", "8", "--n", "8", "--k", "32"});
  CHECK(mm.code == 0);
  CHECK(mm.err.find("PASS") != std::string::npos);
}

TEST_CASE("tfit and grids subcommands") {
  const Run t = cli({"tfit", "--dist", "t7", "--samples", "20000"});
  REQUIRE(t.code == 0);
  CHECK(t.err.rfind("nu = ", 0) == 0);
  const Run l = cli({"grids", "list"});
  CHECK(l.code == 0);
  CHECK(l.out.find("SFP4") != std::string::npos);
  const Run s = cli({"grids", "snap", "NF4", "--format", "e3m2"});
  CHECK(s.code == 0);
  CHECK(cli({"grids", "snap", "NF4", "--format", "e5m2"}).code == 2);
}

TEST_CASE("the installed binary runs") {
  const std::string cmd = std::string(GRIDFORGE_CLI_PATH) + " grids show FP4 > /dev/null";
  const int status = std::system(cmd.c_str());
  CHECK(status == 0);
  const std::string bad = std::string(GRIDFORGE_CLI_PATH) + " grids show NOPE 2> /dev/null";
  CHECK(WEXITSTATUS(std::system(bad.c_str())) == 2);
}

#include "gridforge/cli.hpp"

#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "CLI11.hpp"

#include "gridforge/builtin.hpp"
#include "gridforge/error.hpp"
#include "gridforge/io.hpp"
#include "gridforge/learn.hpp"
#include "gridforge/numeric.hpp"
#include "gridforge/quant.hpp"
#include "gridforge/sfp4.hpp"
#include "gridforge/stats.hpp"

namespace gridforge {

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> parse_doubles(const std::string& s) {
  std::vector<double> out;
  for (const auto& item : split_list(s)) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ParameterError("not a number: '" + item + "'");
    }
  }
  return out;
}

std::vector<std::size_t> parse_sizes(const std::string& s) {
  std::vector<std::size_t> out;
  for (double d : parse_doubles(s)) {
    if (!(d >= 1.0) || d != static_cast<double>(static_cast<std::size_t>(d))) {
      throw ParameterError(fmt::format("expected a positive integer, got {}", d));
    }
    out.push_back(static_cast<std::size_t>(d));
  }
  return out;
}

std::optional<LowBitFormat> parse_optional_format(const std::string& s) {
  if (s.empty() || s == "none") return std::nullopt;
  return LowBitFormat::parse(s);
}

// Output sink: the given file, or the caller's stream.
class Sink {
 public:
  Sink(const std::string& path, std::ostream& fallback) : stream_(&fallback) {
    if (!path.empty()) {
      file_ = std::make_unique<std::ofstream>(path, std::ios::binary);
      if (!*file_) throw InputError("cannot write " + path);
      stream_ = file_.get();
    }
  }
  std::ostream& operator*() { return *stream_; }

 private:
  std::unique_ptr<std::ofstream> file_;
  std::ostream* stream_;
};

struct Globals {
  std::uint64_t seed = 0;
  int threads = 1;
  std::string out;
};

struct TrainFlags {
  std::string weight_mode = "msquared";
  int max_iters = 200;
  double rel_tol = 1e-7;
  double residual_quantile = 0.5;
  bool full_inner = false;
  bool reallocate = false;

  void add(CLI::App* app) {
    app->add_option("--weight-mode", weight_mode, "Lloyd sample weights: msquared or uniform")
        ->capture_default_str();
    app->add_option("--max-iters", max_iters, "Iteration cap")->capture_default_str();
    app->add_option("--rel-tol", rel_tol, "Relative objective tolerance")->capture_default_str();
    app->add_option("--residual-quantile", residual_quantile,
                    "Loss quantile above which blocks seed the partner grid")
        ->capture_default_str();
    app->add_flag("--full-inner", full_inner, "Run Lloyd to convergence inside each outer step");
    app->add_flag("--reallocate", reallocate, "Move levels across support gaps after Lloyd converges");
  }
  TrainConfig config(const Globals& g) const {
    TrainConfig c;
    c.weight_mode = parse_weight_mode(weight_mode);
    c.max_iters = max_iters;
    c.rel_tol = rel_tol;
    c.residual_quantile = residual_quantile;
    c.full_inner = full_inner;
    c.reallocate = reallocate;
    c.seed = g.seed;
    c.threads = g.threads;
    c.validate();
    return c;
  }
};

// ---------------------------------------------------------------- bench-mse

struct BenchArgs {
  std::string families = "INT4,FP4,SFP4,fresh:bof4s,NF4,IF4,PO2_NF4,PO2_Split87,MPO2,fresh:gopt";
  std::string dists = "normal,t5,t7,t10";
  std::size_t g = 16;
  long long samples = 2000000;
  long long train_samples = -1;
  std::string fresh_weight_mode = "uniform";
  std::string scale_format = "none";
  std::string divisors;
};

int cmd_bench(const Globals& gl, const BenchArgs& a, std::ostream& out, std::ostream& err) {
  if (a.samples <= 0) throw ParameterError("--samples must be positive");
  if (a.g == 0) throw ParameterError("--g must be positive");
  const auto n_blocks = static_cast<std::size_t>(a.samples) / a.g;
  if (n_blocks == 0) throw ParameterError("--samples is smaller than one block");
  const long long train_samples = a.train_samples < 0 ? a.samples : a.train_samples;
  const std::size_t n_train = static_cast<std::size_t>(std::max(train_samples, 0LL)) / a.g;

  QuantOptions qopts;
  qopts.scale_format = parse_optional_format(a.scale_format);
  qopts.scale_divisors = parse_doubles(a.divisors);

  // Resolve every family name before any sampling so typos fail fast.
  const auto fams = split_list(a.families);
  const auto dists = split_list(a.dists);
  if (fams.empty() || dists.empty()) throw ParameterError("empty --families or --dists");
  std::vector<DistributionSpec> specs;
  for (const auto& d : dists) specs.push_back(DistributionSpec::parse(d));
  std::vector<std::optional<GridFamily>> fixed;
  for (const auto& f : fams) {
    if (f.rfind("fresh:", 0) == 0) {
      if (n_train == 0) throw ParameterError("--train-samples too small for fresh recipes");
      fixed.emplace_back();
    } else {
      fixed.emplace_back(load_family(f));
    }
  }
  TrainConfig cfg;
  cfg.weight_mode = parse_weight_mode(a.fresh_weight_mode);
  cfg.threads = gl.threads;
  cfg.seed = gl.seed;

  Sink sink(gl.out, out);
  write_csv_header(*sink);
  for (std::size_t di = 0; di < specs.size(); ++di) {
    const BlockPool eval = sample_pool(specs[di], a.g, n_blocks, derive_seed(gl.seed, 2 * di));
    std::optional<BlockPool> train;
    for (std::size_t fi = 0; fi < fams.size(); ++fi) {
      GridFamily fam = [&] {
        if (fixed[fi]) return *fixed[fi];
        if (!train) train = sample_pool(specs[di], a.g, n_train, derive_seed(gl.seed, 2 * di + 1));
        return fresh_family(fams[fi].substr(6), *train, cfg);
      }();
      const RiskEntry r = estimate_risk(eval, fam, qopts, gl.threads);
      write_csv_row(*sink, {"bench-mse", fams[fi], dists[di], a.g, r.n_blocks, r.mse_mean, r.stderr_});
      fmt::print(err, "{:<14} {:<8} mse = {:.3f}e-3 +- {:.3f}e-3\n", fams[fi], dists[di],
                 r.mse_mean * 1e3, r.stderr_ * 1e3);
    }
  }
  return 0;
}

// -------------------------------------------------------------------- learn

struct LearnArgs {
  std::string mode;
  std::string primary = "Split87";
  std::string pool;
  std::string manifest;
  std::size_t levels = 16;
  std::string snap = "auto";
  bool pin_endpoints = false;
  std::string report;
  TrainFlags train;
};

BlockPool pool_from_spec(const std::string& spec, std::uint64_t seed) {
  // dist:gG:N with N blocks, e.g. normal:g16:500000
  const auto parts = [&] {
    std::vector<std::string> p;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ':')) p.push_back(item);
    return p;
  }();
  if (parts.size() != 3 || parts[1].size() < 2 || parts[1][0] != 'g') {
    throw ParameterError("pool spec must look like normal:g16:500000");
  }
  const auto g = parse_sizes(parts[1].substr(1));
  const auto n = parse_sizes(parts[2]);
  return sample_pool(DistributionSpec::parse(parts[0]), g.at(0), n.at(0), seed);
}

int cmd_learn(const Globals& gl, const LearnArgs& a, std::ostream& out, std::ostream& err) {
  if (a.pool.empty() == a.manifest.empty()) {
    throw ParameterError("give exactly one of --pool or --manifest");
  }
  if (!a.manifest.empty() && !std::filesystem::exists(a.manifest)) {
    throw ParameterError("manifest not found: " + a.manifest);
  }
  const TrainConfig cfg = a.train.config(gl);
  const BlockPool pool = a.manifest.empty() ? pool_from_spec(a.pool, derive_seed(gl.seed, 0))
                                            : build_pool(PoolManifest::load(a.manifest), gl.seed);
  const bool snapping_mode = a.mode != "lloyd";
  const std::optional<LowBitFormat> snap =
      a.snap == "auto" ? (snapping_mode ? std::optional(LowBitFormat::e4m3()) : std::nullopt)
                       : parse_optional_format(a.snap);
  LloydConstraints pins = a.pin_endpoints ? LloydConstraints::endpoints() : LloydConstraints{};

  LearnReport rep;
  GridFamily fam = [&]() -> GridFamily {
    if (a.mode == "lloyd") {
      Grid gr = lloyd_fit(pool, a.levels, cfg, pins, &rep, "lloyd");
      if (snap) gr = snap_to_format(gr, *snap);
      return GridFamily(gr);
    }
    if (a.mode == "split87" || a.mode == "split78") {
      Grid gr = learn_split87(pool, cfg, a.mode == "split87", &rep);
      if (snap) gr = snap_to_format(gr, *snap);
      return GridFamily(gr);
    }
    if (a.mode == "bof4s") return learn_bof4s(pool, cfg, snap, &rep);
    PairOptions po;
    po.constraints = pins;
    po.snap = snap;
    if (a.mode == "po2") {
      const Grid primary = load_family(a.primary).grids().size() == 1
                               ? load_family(a.primary).grid(0)
                               : throw ParameterError("--primary must name a single grid");
      po.name = "PO2_" + primary.name();
      return learn_residual_pair(primary, true, pool, cfg, po, &rep);
    }
    if (a.mode == "mpo2") {
      po.name = "MPO2";
      const Grid start = lloyd_fit(pool, 16, cfg, pins, nullptr, "MPO2.b1");
      return learn_residual_pair(start, false, pool, cfg, po, &rep);
    }
    throw ParameterError("unknown --mode '" + a.mode + "'");
  }();

  {
    Sink sink(gl.out, out);
    *sink << to_json(fam).dump(2) << "\n";
  }
  if (!a.report.empty()) {
    nlohmann::json j = to_json(rep);
    j["pool"] = to_json(audit(pool));
    Sink rs(a.report, out);
    *rs << j.dump(2) << "\n";
  }
  const double final_obj = rep.objective_trace.empty() ? 0.0 : rep.objective_trace.back();
  fmt::print(err, "learned {} ({} grid{}), objective {:.6g}, {} iterations, {}\n", fam.name(),
             fam.size(), fam.size() == 1 ? "" : "s", final_obj, rep.iterations,
             rep.converged ? "converged" : "NOT converged");
  return rep.converged ? 0 : 3;
}

// ----------------------------------------------------------------- quantize

struct QuantizeArgs {
  std::string family = "NVFP4";
  std::string input;
  std::string dtype = "f32le";
  std::size_t g = 16;
  std::string output;
  std::string scale_format = "none";
  std::string divisors;
};

int cmd_quantize(const Globals& gl, const QuantizeArgs& a, std::ostream& out, std::ostream& err) {
  const GridFamily fam = load_family(a.family);
  const DType dt = parse_dtype(a.dtype);
  const LoadResult lr = load_raw_tensor(a.input, dt, a.g);
  QuantOptions q;
  q.scale_format = parse_optional_format(a.scale_format);
  q.scale_divisors = parse_doubles(a.divisors);
  std::vector<double> deq;
  deq.reserve(lr.pool.values().size());
  std::vector<double> losses(lr.pool.size());
  std::vector<std::size_t> counts(fam.size(), 0);
  for (std::size_t b = 0; b < lr.pool.size(); ++b) {
    const QuantizeResult r = quantize_block(lr.pool.block(b), fam, q);
    const auto v = dequantize_block(r.block, fam);
    deq.insert(deq.end(), v.begin(), v.end());
    losses[b] = r.loss.mse;
    ++counts[r.block.grid_index];
  }
  if (!a.output.empty()) write_raw_tensor(a.output, deq, dt);
  const MeanStderr ms = mean_stderr(losses);
  nlohmann::json j{{"family", fam.name()},    {"n_blocks", lr.pool.size()}, {"g", a.g},
                   {"mse", ms.mean},          {"stderr", ms.stderr_},      {"grid_counts", counts},
                   {"dropped_values", lr.dropped_values}};
  Sink sink(gl.out, out);
  *sink << j.dump(2) << "\n";
  fmt::print(err, "quantized {} blocks with {}: mse {:.6g}\n", lr.pool.size(), fam.name(), ms.mean);
  return 0;
}

// -------------------------------------------------------------- competitive

struct CompetitiveArgs {
  std::string family = "IF4_SYM";
  std::string dist = "normal";
  std::size_t g = 16;
  std::size_t n_train = 30000;
  std::size_t n_val = 60000;
  double tau_min = 0.10;
  double tau_max = 0.90;
  double tau_step = 0.01;
  std::string class_risk = "min";
  std::size_t levels = 16;
  double min_class_fraction = 0.01;
  TrainFlags train;
};

int cmd_competitive(const Globals& gl, const CompetitiveArgs& a, std::ostream& out,
                    std::ostream& err) {
  CompetitiveOptions o;
  if (!(a.tau_step > 0.0) || !(a.tau_min <= a.tau_max)) throw ParameterError("bad tau range");
  for (int i = 0;; ++i) {
    const double t = a.tau_min + i * a.tau_step;
    if (t > a.tau_max + 1e-12) break;
    o.tau_grid.push_back(std::round(t * 1e9) / 1e9);
  }
  o.n_train = a.n_train;
  o.n_val = a.n_val;
  o.g = a.g;
  o.k_levels = a.levels;
  o.min_class_fraction = a.min_class_fraction;
  if (a.class_risk == "min") {
    o.class_risk = ClassRisk::PerBlockMin;
  } else if (a.class_risk == "designated") {
    o.class_risk = ClassRisk::Designated;
  } else {
    throw ParameterError("--class-risk must be min or designated");
  }
  o.train = a.train.config(gl);
  o.seed = gl.seed;
  const GridFamily fam = load_family(a.family);
  const CompetitiveReport r = competitive_analysis(DistributionSpec::parse(a.dist), fam, o);
  Sink sink(gl.out, out);
  nlohmann::json j = to_json(r);
  j["family"] = fam.name();
  j["distribution"] = a.dist;
  *sink << j.dump(2) << "\n";
  fmt::print(err, "{} on {} g={}: beta = {:.3f} at tau = {:.2f} (alpha_S {:.3f}, alpha_F {:.3f}, "
                  "p_spiky {:.3f}, designated S={} F={})\n",
             fam.name(), a.dist, a.g, r.best.beta, r.best.tau, r.best.alpha_S, r.best.alpha_F,
             r.best.p_spiky, fam.grid(r.best.designated_S).name(),
             fam.grid(r.best.designated_F).name());
  return 0;
}

// --------------------------------------------------------------- asymptotic

struct AsymptoticArgs {
  std::string dist = "uniform";
  std::string g_list = "4,16,64,256,1024";
  std::size_t budget = 1u << 20;
  std::size_t min_blocks = 512;
  std::size_t levels = 8;
  TrainFlags train;
};

int cmd_asymptotic(const Globals& gl, const AsymptoticArgs& a, std::ostream& out,
                   std::ostream& err) {
  AsymptoticOptions o;
  o.g_list = parse_sizes(a.g_list);
  o.budget = a.budget;
  o.min_blocks = a.min_blocks;
  o.k_levels = a.levels;
  o.train = a.train.config(gl);
  o.seed = gl.seed;
  const auto pts = asymptotic_gap(DistributionSpec::parse(a.dist), o);
  Sink sink(gl.out, out);
  *sink << "g,n_val_blocks,single_risk,pair_risk,gap,stderr\n";
  for (const auto& p : pts) {
    fmt::print(*sink, "{},{},{:.10g},{:.10g},{:.10g},{:.6g}\n", p.g, p.n_val_blocks, p.single_risk,
               p.pair_risk, p.gap, p.stderr_);
  }
  if (pts.size() >= 2) {
    const double ratio = pts.front().gap != 0.0 ? pts.back().gap / pts.front().gap : 0.0;
    fmt::print(err, "gap g={}: {:.4g}, g={}: {:.4g} (ratio {:.3f})\n", pts.front().g,
               pts.front().gap, pts.back().g, pts.back().gap, ratio);
  }
  return 0;
}

// --------------------------------------------------------------- concavity

struct ConcavityArgs {
  std::string spiky = "spiky";
  std::string flat = "flat";
  std::size_t g = 16;
  std::size_t n_train = 20000;
  std::size_t n_val = 20000;
  std::string p_grid = "0,0.25,0.5,0.75,1";
  std::size_t levels = 16;
  TrainFlags train;
};

int cmd_concavity(const Globals& gl, const ConcavityArgs& a, std::ostream& out,
                  std::ostream& err) {
  const auto s = DistributionSpec::parse(a.spiky);
  const auto f = DistributionSpec::parse(a.flat);
  const BlockPool ts = sample_pool(s, a.g, a.n_train, derive_seed(gl.seed, 1));
  const BlockPool tf = sample_pool(f, a.g, a.n_train, derive_seed(gl.seed, 2));
  const BlockPool vs = sample_pool(s, a.g, a.n_val, derive_seed(gl.seed, 3));
  const BlockPool vf = sample_pool(f, a.g, a.n_val, derive_seed(gl.seed, 4));
  // V(p) is only concave for the optimal learner, so escape gap-pinned optima.
  TrainConfig cfg = a.train.config(gl);
  cfg.reallocate = true;
  const ConcavityResult r =
      concavity_check(ts, tf, vs, vf, lloyd_learner(a.levels, cfg), parse_doubles(a.p_grid), gl.seed);
  Sink sink(gl.out, out);
  *sink << to_json(r).dump(2) << "\n";
  fmt::print(err, "concavity {} vs {}: {} (eps {:.3g})\n", a.spiky, a.flat,
             r.passed ? "PASS" : "FAIL", r.epsilon);
  return r.passed ? 0 : 1;
}

// --------------------------------------------------------------------- tfit

struct TfitArgs {
  std::string input;
  std::string dtype = "f32le";
  std::string dist;
  std::size_t samples = 1000000;
  double nu_max = 200.0;
};

int cmd_tfit(const Globals& gl, const TfitArgs& a, std::ostream& out, std::ostream& err) {
  if (a.input.empty() == a.dist.empty()) throw ParameterError("give exactly one of --input or --dist");
  std::vector<double> x;
  if (!a.input.empty()) {
    const LoadResult lr = load_raw_tensor(a.input, parse_dtype(a.dtype), 1);
    x.assign(lr.pool.values().begin(), lr.pool.values().end());
  } else {
    const BlockPool p = sample_pool(DistributionSpec::parse(a.dist), 1, a.samples, gl.seed);
    x.assign(p.values().begin(), p.values().end());
  }
  TFitOptions o;
  o.nu_max = a.nu_max;
  const StudentTFit fit = fit_student_t(x, o);
  Sink sink(gl.out, out);
  *sink << to_json(fit).dump(2) << "\n";
  fmt::print(err, "nu = {}{:.3f}, scale = {:.5g}, loglik = {:.6g}\n",
             fit.at_upper_bound ? ">= " : "", fit.nu, fit.scale, fit.loglik);
  return 0;
}

// --------------------------------------------------------------------- sfp4

struct Sfp4Args {
  std::string input;
  std::string output;
  std::string dtype = "f32le";
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t g = 16;
  double shift = 0.5;
  std::string divisors = "6";
  std::size_t m = 64;
  std::size_t n = 128;
  std::size_t k = 96;
  double tolerance = 1e-10;
};

int cmd_sfp4_encode(const Sfp4Args& a, std::ostream& err) {
  const DType dt = parse_dtype(a.dtype);
  const LoadResult lr = load_raw_tensor(a.input, dt, 1);
  if (a.rows == 0 || a.cols == 0 || lr.pool.size() != a.rows * a.cols) {
    throw ShapeError(fmt::format("input has {} values, --rows x --cols = {}", lr.pool.size(),
                                 a.rows * a.cols));
  }
  const auto div = parse_doubles(a.divisors);
  const Sfp4Tensor t = sfp4_encode_matrix(lr.pool.values(), a.rows, a.cols, a.g, a.shift, div);
  write_sfp4(a.output, t);
  std::size_t sel[3] = {0, 0, 0};
  for (auto b : t.scale_bytes) ++sel[unpack_scale_byte(b).selector];
  fmt::print(err, "encoded {}x{} (g={}): selectors A={} B+={} B-={}, saturated scales {}\n", a.rows,
             a.cols, a.g, sel[0], sel[1], sel[2], t.saturated_scales);
  return 0;
}

int cmd_sfp4_decode(const Sfp4Args& a, std::ostream& err) {
  const Sfp4Tensor t = read_sfp4(a.input);
  write_raw_tensor(a.output, sfp4_decode_matrix(t), parse_dtype(a.dtype));
  fmt::print(err, "decoded {}x{} (g={})\n", t.rows, t.cols, t.g);
  return 0;
}

int cmd_sfp4_matmul(const Globals& gl, const Sfp4Args& a, std::ostream& out, std::ostream& err) {
  if (a.g == 0 || a.k % a.g != 0) throw ShapeError("--k must be a multiple of --g");
  std::mt19937_64 rng(gl.seed);
  std::normal_distribution<double> nd;
  std::vector<double> w(a.m * a.k), x(a.k * a.n);
  for (double& v : w) v = nd(rng);
  for (double& v : x) v = nd(rng);
  const Sfp4Tensor t = sfp4_encode_matrix(w, a.m, a.k, a.g, a.shift, parse_doubles(a.divisors));
  const MatmulCheck mc = sfp4_matmul_reference(t, x, a.n);
  const bool pass = mc.max_rel_err <= a.tolerance;
  Sink sink(gl.out, out);
  *sink << nlohmann::json{{"m", a.m}, {"n", a.n}, {"k", a.k}, {"g", a.g},
                          {"max_rel_err", mc.max_rel_err}, {"pass", pass}}
                .dump(2)
        << "\n";
  fmt::print(err, "max rel err = {:.3g} <= {:.0e}: {}\n", mc.max_rel_err, a.tolerance,
             pass ? "PASS" : "FAIL");
  return pass ? 0 : 1;
}

// -------------------------------------------------------------------- grids

struct GridsArgs {
  std::string name;
  std::string format = "e4m3";
  std::string dir;
};

int cmd_grids_list(std::ostream& out) {
  for (const auto& n : builtin_names()) {
    const GridFamily f = builtin_family(n);
    std::string sizes;
    for (const auto& g : f.grids()) sizes += (sizes.empty() ? "" : "+") + std::to_string(g.size());
    fmt::print(out, "{:<12} {} grid{} ({} points) selector={}{}\n", n, f.size(),
               f.size() == 1 ? " " : "s", sizes, selector_name(f.selector()),
               is_learned_builtin(n) ? " learned" : "");
  }
  return 0;
}

int cmd_grids_show(const Globals& gl, const GridsArgs& a, std::ostream& out) {
  Sink sink(gl.out, out);
  *sink << to_json(load_family(a.name)).dump(2) << "\n";
  return 0;
}

int cmd_grids_snap(const Globals& gl, const GridsArgs& a, std::ostream& out) {
  const GridFamily f = load_family(a.name);
  const LowBitFormat fmt_ = LowBitFormat::parse(a.format);
  std::vector<Grid> snapped;
  for (const auto& g : f.grids()) snapped.push_back(snap_to_format(g, fmt_));
  const GridFamily s(f.name(), snapped, f.selector(),
                     std::vector<double>(f.shift_offsets().begin(), f.shift_offsets().end()));
  Sink sink(gl.out, out);
  *sink << to_json(s).dump(2) << "\n";
  return 0;
}

int cmd_grids_export(const GridsArgs& a, std::ostream& err) {
  const std::filesystem::path dir = a.dir.empty() ? data_dir() : std::filesystem::path(a.dir);
  std::filesystem::create_directories(dir);
  for (const auto& n : builtin_names()) {
    const GridFamily f = is_learned_builtin(n) ? train_builtin(n) : builtin_family(n);
    std::ofstream o(dir / (n + ".json"));
    if (!o) throw InputError("cannot write " + (dir / (n + ".json")).string());
    o << to_json(f).dump(2) << "\n";
  }
  fmt::print(err, "wrote {} grid files to {}\n", builtin_names().size(), dir.string());
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"gridforge: blockwise 4-bit grids, grid-pair learning and quantization experiments"};
  app.require_subcommand(1);
  Globals gl;
  app.add_option("--seed", gl.seed, "Seed for every random stream")->capture_default_str();
  app.add_option("--threads", gl.threads, "Worker threads (results do not depend on this)")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  app.add_option("-o,--out", gl.out, "Write the main output here instead of stdout");

  BenchArgs bench;
  auto* c_bench = app.add_subcommand("bench-mse", "Monte-Carlo MSE of grid families (CSV)");
  c_bench->add_option("--families", bench.families,
                      "Built-in names, grid JSON paths, or fresh:<recipe>")
      ->capture_default_str();
  c_bench->add_option("--dists", bench.dists, "Distributions")->capture_default_str();
  c_bench->add_option("--g", bench.g, "Block size")->capture_default_str();
  c_bench->add_option("--samples", bench.samples, "Scalar samples per distribution")
      ->capture_default_str();
  c_bench->add_option("--train-samples", bench.train_samples,
                      "Scalar samples for fresh recipes (default: --samples)");
  c_bench->add_option("--fresh-weight-mode", bench.fresh_weight_mode)->capture_default_str();
  c_bench->add_option("--scale-format", bench.scale_format, "none, e4m3 or e3m3u")
      ->capture_default_str();
  c_bench->add_option("--divisors", bench.divisors, "Scale divisors, e.g. 4,4.5,5,5.5,6");

  LearnArgs learn;
  auto* c_learn = app.add_subcommand("learn", "Learn a grid or grid pair");
  c_learn->add_option("--mode", learn.mode, "lloyd, po2, mpo2, split87, split78 or bof4s")->required();
  c_learn->add_option("--primary", learn.primary, "Fixed primary grid for po2")->capture_default_str();
  c_learn->add_option("--pool", learn.pool, "Synthetic pool dist:gG:N (N blocks)");
  c_learn->add_option("--manifest", learn.manifest, "Pool manifest JSON");
  c_learn->add_option("--levels", learn.levels, "Levels for lloyd mode")->capture_default_str();
  c_learn->add_option("--snap", learn.snap, "auto, none, e4m3 or e3m2")->capture_default_str();
  c_learn->add_flag("--pin-endpoints", learn.pin_endpoints, "Pin the outer levels at -1 and +1");
  c_learn->add_option("--report", learn.report, "Write the learning report JSON here");
  learn.train.add(c_learn);

  QuantizeArgs quant;
  auto* c_quant = app.add_subcommand("quantize", "Quantize a raw tensor file");
  c_quant->add_option("--family", quant.family)->capture_default_str();
  c_quant->add_option("--input", quant.input)->required();
  c_quant->add_option("--dtype", quant.dtype)->capture_default_str();
  c_quant->add_option("--g", quant.g)->capture_default_str();
  c_quant->add_option("--output", quant.output, "Dequantized tensor (same dtype)");
  c_quant->add_option("--scale-format", quant.scale_format)->capture_default_str();
  c_quant->add_option("--divisors", quant.divisors);

  CompetitiveArgs comp;
  auto* c_comp = app.add_subcommand("competitive", "Competitive factor beta of a grid family");
  c_comp->add_option("--family", comp.family)->capture_default_str();
  c_comp->add_option("--dist", comp.dist)->capture_default_str();
  c_comp->add_option("--g", comp.g)->capture_default_str();
  c_comp->add_option("--n-train", comp.n_train)->capture_default_str();
  c_comp->add_option("--n-val", comp.n_val)->capture_default_str();
  c_comp->add_option("--tau-min", comp.tau_min)->capture_default_str();
  c_comp->add_option("--tau-max", comp.tau_max)->capture_default_str();
  c_comp->add_option("--tau-step", comp.tau_step)->capture_default_str();
  c_comp->add_option("--class-risk", comp.class_risk, "min or designated")->capture_default_str();
  c_comp->add_option("--levels", comp.levels)->capture_default_str();
  c_comp->add_option("--min-class-fraction", comp.min_class_fraction,
                     "Skip tau values leaving either class below this share of blocks")
      ->capture_default_str();
  comp.train.add(c_comp);

  AsymptoticArgs asym;
  auto* c_asym = app.add_subcommand("asymptotic", "Single-grid vs grid-pair risk gap over g");
  c_asym->add_option("--dist", asym.dist)->capture_default_str();
  c_asym->add_option("--g", asym.g_list)->capture_default_str();
  c_asym->add_option("--budget", asym.budget, "Scalar samples per split")->capture_default_str();
  c_asym->add_option("--min-blocks", asym.min_blocks)->capture_default_str();
  c_asym->add_option("--levels", asym.levels, "Half-grid levels")->capture_default_str();
  asym.train.add(c_asym);

  ConcavityArgs conc;
  auto* c_conc = app.add_subcommand("concavity", "Midpoint concavity of the mixture risk V(p)");
  c_conc->add_option("--spiky", conc.spiky)->capture_default_str();
  c_conc->add_option("--flat", conc.flat)->capture_default_str();
  c_conc->add_option("--g", conc.g)->capture_default_str();
  c_conc->add_option("--n-train", conc.n_train)->capture_default_str();
  c_conc->add_option("--n-val", conc.n_val)->capture_default_str();
  c_conc->add_option("--p", conc.p_grid)->capture_default_str();
  c_conc->add_option("--levels", conc.levels)->capture_default_str();
  conc.train.add(c_conc);

  TfitArgs tfit;
  auto* c_tfit = app.add_subcommand("tfit", "Student-t degrees-of-freedom MLE");
  c_tfit->add_option("--input", tfit.input, "Raw tensor file");
  c_tfit->add_option("--dtype", tfit.dtype)->capture_default_str();
  c_tfit->add_option("--dist", tfit.dist, "Synthetic source instead of --input");
  c_tfit->add_option("--samples", tfit.samples)->capture_default_str();
  c_tfit->add_option("--nu-max", tfit.nu_max)->capture_default_str();

  Sfp4Args sfp;
  auto* c_sfp = app.add_subcommand("sfp4", "SFP4 encode, decode and matmul check");
  c_sfp->require_subcommand(1);
  auto* c_enc = c_sfp->add_subcommand("encode", "Raw M x K tensor to packed SFP4");
  c_enc->add_option("--input", sfp.input)->required();
  c_enc->add_option("--output", sfp.output)->required();
  c_enc->add_option("--dtype", sfp.dtype)->capture_default_str();
  c_enc->add_option("--rows", sfp.rows)->required();
  c_enc->add_option("--cols", sfp.cols)->required();
  c_enc->add_option("--g", sfp.g)->capture_default_str();
  c_enc->add_option("--shift", sfp.shift)->capture_default_str();
  c_enc->add_option("--divisors", sfp.divisors)->capture_default_str();
  auto* c_dec = c_sfp->add_subcommand("decode", "Packed SFP4 to raw tensor");
  c_dec->add_option("--input", sfp.input)->required();
  c_dec->add_option("--output", sfp.output)->required();
  c_dec->add_option("--dtype", sfp.dtype)->capture_default_str();
  auto* c_mm = c_sfp->add_subcommand("matmul-check", "Dense vs two-GEMM decomposition");
  c_mm->add_option("--m", sfp.m)->capture_default_str();
  c_mm->add_option("--n", sfp.n)->capture_default_str();
  c_mm->add_option("--k", sfp.k)->capture_default_str();
  c_mm->add_option("--g", sfp.g)->capture_default_str();
  c_mm->add_option("--shift", sfp.shift)->capture_default_str();
  c_mm->add_option("--divisors", sfp.divisors)->capture_default_str();
  c_mm->add_option("--tolerance", sfp.tolerance)->capture_default_str();

  GridsArgs grids;
  auto* c_grids = app.add_subcommand("grids", "Inspect and export built-in grids");
  c_grids->require_subcommand(1);
  auto* c_list = c_grids->add_subcommand("list", "List built-in grids");
  auto* c_show = c_grids->add_subcommand("show", "Print a grid family as JSON");
  c_show->add_option("name", grids.name)->required();
  auto* c_snap = c_grids->add_subcommand("snap", "Snap a grid family to a format");
  c_snap->add_option("name", grids.name)->required();
  c_snap->add_option("--format", grids.format)->capture_default_str();
  auto* c_export = c_grids->add_subcommand("export", "Write golden grid files");
  c_export->add_option("--dir", grids.dir, "Target directory (default: data directory)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (c_bench->parsed()) return cmd_bench(gl, bench, out, err);
    if (c_learn->parsed()) return cmd_learn(gl, learn, out, err);
    if (c_quant->parsed()) return cmd_quantize(gl, quant, out, err);
    if (c_comp->parsed()) return cmd_competitive(gl, comp, out, err);
    if (c_asym->parsed()) return cmd_asymptotic(gl, asym, out, err);
    if (c_conc->parsed()) return cmd_concavity(gl, conc, out, err);
    if (c_tfit->parsed()) return cmd_tfit(gl, tfit, out, err);
    if (c_enc->parsed()) return cmd_sfp4_encode(sfp, err);
    if (c_dec->parsed()) return cmd_sfp4_decode(sfp, err);
    if (c_mm->parsed()) return cmd_sfp4_matmul(gl, sfp, out, err);
    if (c_list->parsed()) return cmd_grids_list(out);
    if (c_show->parsed()) return cmd_grids_show(gl, grids, out);
    if (c_snap->parsed()) return cmd_grids_snap(gl, grids, out);
    if (c_export->parsed()) return cmd_grids_export(grids, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  err << "error: no command\n";
  return 2;
}

}  // namespace gridforge

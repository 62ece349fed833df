#include "gridforge/io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "gridforge/error.hpp"
#include "gridforge/numeric.hpp"

namespace gridforge {

DType parse_dtype(std::string_view s) {
  std::string low(s);
  for (char& c : low) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (low == "f32le" || low == "f32") return DType::F32LE;
  if (low == "f64le" || low == "f64") return DType::F64LE;
  throw NameError(fmt::format("unknown dtype '{}'", s));
}

std::string dtype_name(DType d) { return d == DType::F32LE ? "f32le" : "f64le"; }

LoadResult load_raw_tensor(const std::filesystem::path& path, DType dtype, std::size_t g,
                           SourceTag tag) {
  if (g == 0) throw ParameterError("block size must be >= 1");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::size_t width = dtype == DType::F32LE ? 4 : 8;
  if (bytes.size() % width != 0) {
    throw InputError(fmt::format("{}: {} bytes is not a whole number of {} elements",
                                 path.string(), bytes.size(), dtype_name(dtype)));
  }
  const std::size_t n = bytes.size() / width;
  const std::size_t keep = n / g * g;
  std::vector<double> values(keep);
  for (std::size_t i = 0; i < keep; ++i) {
    std::uint64_t bits = 0;
    for (std::size_t b = 0; b < width; ++b) bits |= static_cast<std::uint64_t>(bytes[i * width + b]) << (8 * b);
    const double v = width == 4 ? static_cast<double>(std::bit_cast<float>(static_cast<std::uint32_t>(bits)))
                                : std::bit_cast<double>(bits);
    if (!std::isfinite(v)) {
      throw InputError(fmt::format("{}: non-finite value at element {}", path.string(), i));
    }
    values[i] = v;
  }
  LoadResult r{BlockPool(g, std::move(values), tag), n - keep};
  if (r.dropped_values > 0) {
    std::cerr << fmt::format("warning: {}: dropped {} trailing values (partial block)\n",
                             path.string(), r.dropped_values);
  }
  return r;
}

void write_raw_tensor(const std::filesystem::path& path, std::span<const double> values, DType dtype) {
  std::ofstream o(path, std::ios::binary);
  if (!o) throw InputError("cannot write " + path.string());
  for (double v : values) {
    std::uint64_t bits;
    int width;
    if (dtype == DType::F32LE) {
      bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      width = 4;
    } else {
      bits = std::bit_cast<std::uint64_t>(v);
      width = 8;
    }
    for (int b = 0; b < width; ++b) o.put(static_cast<char>((bits >> (8 * b)) & 0xFF));
  }
  if (!o) throw InputError("write failed for " + path.string());
}

PoolManifest PoolManifest::from_json(const nlohmann::json& j, std::filesystem::path base_dir) {
  static const std::vector<std::string> top_keys{"sources", "g", "balance"};
  static const std::vector<std::string> src_keys{"path", "tag", "count", "dtype"};
  if (!j.is_object()) throw InputError("manifest must be a JSON object");
  for (const auto& [k, _] : j.items()) {
    if (std::find(top_keys.begin(), top_keys.end(), k) == top_keys.end()) {
      throw ParameterError("unknown manifest key '" + k + "'");
    }
  }
  PoolManifest m;
  m.base_dir = std::move(base_dir);
  try {
    m.g = j.value("g", std::size_t{16});
    for (const auto& s : j.at("sources")) {
      for (const auto& [k, _] : s.items()) {
        if (std::find(src_keys.begin(), src_keys.end(), k) == src_keys.end()) {
          throw ParameterError("unknown manifest source key '" + k + "'");
        }
      }
      PoolSource src;
      src.path = s.at("path").get<std::string>();
      src.tag = parse_tag(s.value("tag", std::string("weight")));
      src.count = s.at("count").get<std::size_t>();
      src.dtype = parse_dtype(s.value("dtype", std::string("f32le")));
      m.sources.push_back(std::move(src));
    }
    if (j.contains("balance")) {
      const auto& b = j.at("balance");
      if (!b.is_array() || b.size() != 2) throw ParameterError("balance must be [weight, activation]");
      m.balance = std::pair{b[0].get<double>(), b[1].get<double>()};
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed manifest: ") + e.what());
  }
  m.validate();
  return m;
}

PoolManifest PoolManifest::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open manifest " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InputError("malformed manifest " + path.string() + ": " + e.what());
  }
  return from_json(j, path.parent_path());
}

nlohmann::json PoolManifest::to_json() const {
  nlohmann::json srcs = nlohmann::json::array();
  for (const auto& s : sources) {
    srcs.push_back({{"path", s.path}, {"tag", tag_name(s.tag)}, {"count", s.count},
                    {"dtype", dtype_name(s.dtype)}});
  }
  nlohmann::json j{{"g", g}, {"sources", srcs}};
  if (balance) j["balance"] = {balance->first, balance->second};
  return j;
}

void PoolManifest::validate() const {
  if (g == 0) throw ParameterError("manifest g must be >= 1");
  if (sources.empty()) throw ParameterError("manifest has no sources");
  for (const auto& s : sources) {
    if (s.count == 0) throw ParameterError("source count must be positive: " + s.path);
  }
  if (balance && !(balance->first > 0.0 && balance->second > 0.0)) {
    throw ParameterError("balance entries must be positive");
  }
}

BlockPool build_pool(const PoolManifest& manifest, std::uint64_t seed) {
  manifest.validate();
  std::mt19937_64 rng(seed);
  BlockPool out(manifest.g);
  std::size_t n_weight = 0;
  std::size_t n_act = 0;
  for (const auto& src : manifest.sources) {
    std::filesystem::path p(src.path);
    if (p.is_relative() && !manifest.base_dir.empty()) p = manifest.base_dir / p;
    const LoadResult lr = load_raw_tensor(p, src.dtype, manifest.g, src.tag);
    if (lr.pool.size() < src.count) {
      throw InsufficientDataError(fmt::format("{} has {} blocks, {} requested", p.string(),
                                              lr.pool.size(), src.count));
    }
    std::vector<std::size_t> idx(lr.pool.size());
    std::iota(idx.begin(), idx.end(), 0);
    // Partial Fisher-Yates: the first `count` entries are a uniform sample.
    for (std::size_t i = 0; i < src.count; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
      std::swap(idx[i], idx[pick(rng)]);
      out.append_from(lr.pool, idx[i]);
    }
    if (src.tag == SourceTag::Weight) n_weight += src.count;
    if (src.tag == SourceTag::Activation) n_act += src.count;
  }
  if (manifest.balance) {
    const auto [bw, ba] = *manifest.balance;
    // Exact integer ratio check: n_weight / n_act == bw / ba.
    if (std::abs(static_cast<double>(n_weight) * ba - static_cast<double>(n_act) * bw) >
        1e-9 * (static_cast<double>(n_weight) * ba + 1.0)) {
      throw InsufficientDataError(fmt::format(
          "balance {}:{} not met: {} weight vs {} activation blocks", bw, ba, n_weight, n_act));
    }
  }
  std::vector<std::size_t> order(out.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  return out.select(order);
}

PoolAudit audit(const BlockPool& pool) {
  PoolAudit a;
  a.n_blocks = pool.size();
  a.g = pool.g();
  CompensatedSum m;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    switch (pool.tag(i)) {
      case SourceTag::Weight: ++a.weight; break;
      case SourceTag::Activation: ++a.activation; break;
      case SourceTag::Synthetic: ++a.synthetic; break;
    }
    m.add(pool.absmax(i));
  }
  a.mean_absmax = pool.empty() ? 0.0 : m.value() / static_cast<double>(pool.size());
  return a;
}

nlohmann::json to_json(const PoolAudit& a) {
  return {{"n_blocks", a.n_blocks},
          {"g", a.g},
          {"tags", {{"weight", a.weight}, {"activation", a.activation}, {"synthetic", a.synthetic}}},
          {"mean_absmax", a.mean_absmax}};
}

void write_csv_header(std::ostream& out) { out << "experiment,family,distribution,g,n,mse,stderr\n"; }

void write_csv_row(std::ostream& out, const CsvRow& r) {
  fmt::print(out, "{},{},{},{},{},{:.10g},{:.6g}\n", r.experiment, r.family, r.distribution, r.g,
             r.n, r.mse, r.stderr_);
}

}  // namespace gridforge

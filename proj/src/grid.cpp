#include "gridforge/grid.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

#include <boost/math/distributions/normal.hpp>

#include "gridforge/error.hpp"

namespace gridforge {

Grid::Grid(std::string name, std::vector<double> points, double unit, bool half,
           std::optional<FormatKind> format)
    : name_(std::move(name)), points_(std::move(points)), unit_(unit), half_(half), format_(format) {
  if (points_.size() < 2 || points_.size() > 256) {
    throw DegenerateGridError("grid '" + name_ + "' needs 2..256 points, got " +
                              std::to_string(points_.size()));
  }
  if (!(unit_ > 0.0) || !std::isfinite(unit_)) {
    throw ParameterError("grid '" + name_ + "': unit must be positive");
  }
  for (std::size_t i = 0; i < points_.size(); ++i) {
    if (!std::isfinite(points_[i])) throw ParameterError("grid '" + name_ + "': non-finite point");
    if (i > 0 && !(points_[i - 1] < points_[i])) {
      throw DegenerateGridError("grid '" + name_ + "': points not strictly increasing at index " +
                                std::to_string(i));
    }
  }
  if (half_ && points_.front() < 0.0) {
    throw ParameterError("half grid '" + name_ + "' has a negative point");
  }
  normalized_.reserve(points_.size());
  for (double p : points_) normalized_.push_back(p / unit_);
}

bool Grid::is_absmax_normalized() const noexcept {
  double mx = 0.0;
  for (double p : normalized_) mx = std::max(mx, std::abs(p));
  return mx == 1.0;
}

bool Grid::has_exact_zero() const noexcept {
  return std::find(points_.begin(), points_.end(), 0.0) != points_.end();
}

Grid Grid::negated(std::string name) const {
  if (half_) throw ParameterError("cannot negate a half grid");
  std::vector<double> pts(points_.rbegin(), points_.rend());
  for (double& p : pts) p = -p;
  return Grid(std::move(name), std::move(pts), unit_, false, format_);
}

Grid Grid::mirrored() const {
  if (!half_) return *this;
  std::vector<double> pts;
  for (auto it = points_.rbegin(); it != points_.rend(); ++it) {
    if (*it > 0.0) pts.push_back(-*it);
  }
  pts.insert(pts.end(), points_.begin(), points_.end());
  return Grid(name_, std::move(pts), unit_, false, format_);
}

Grid Grid::with_name(std::string name) const {
  Grid g = *this;
  g.name_ = std::move(name);
  return g;
}

Grid Grid::normalized_grid() const {
  return Grid(name_, normalized_, 1.0, half_, unit_ == 1.0 ? format_ : std::nullopt);
}

std::string selector_name(Selector s) {
  return s == Selector::MinMSE ? "min_mse" : "sign_of_max";
}

Selector parse_selector(std::string_view s) {
  if (s == "min_mse" || s == "MinMSE") return Selector::MinMSE;
  if (s == "sign_of_max" || s == "SignOfMaxMagnitude") return Selector::SignOfMaxMagnitude;
  throw NameError("unknown selector: " + std::string(s));
}

GridFamily::GridFamily(std::string name, std::vector<Grid> grids, Selector selector,
                       std::vector<double> shift_offsets)
    : name_(std::move(name)),
      grids_(std::move(grids)),
      selector_(selector),
      offsets_(std::move(shift_offsets)) {
  if (grids_.empty() || grids_.size() > 3) {
    throw ParameterError("family '" + name_ + "' needs 1..3 grids");
  }
  if (!offsets_.empty() && offsets_.size() != grids_.size()) {
    throw ParameterError("family '" + name_ + "': shift_offsets length mismatch");
  }
  const bool half = grids_.front().is_half();
  for (const auto& g : grids_) {
    if (g.is_half() != half) throw ParameterError("family '" + name_ + "' mixes half and full grids");
  }
  if (selector_ == Selector::SignOfMaxMagnitude) {
    if (grids_.size() != 2) {
      throw ParameterError("sign-of-max selector needs exactly 2 grids");
    }
    const auto a = grids_[0].normalized();
    const auto b = grids_[1].normalized();
    bool negations = a.size() == b.size();
    for (std::size_t i = 0; negations && i < a.size(); ++i) {
      negations = a[i] == -b[a.size() - 1 - i];
    }
    if (!negations) throw ParameterError("sign-of-max selector needs grids (G, -G)");
  }
}

GridFamily::GridFamily(Grid grid) : GridFamily(grid.name(), {grid}) {}

Grid snap_to_format(const Grid& grid, const LowBitFormat& fmt) {
  std::vector<double> snapped;
  snapped.reserve(grid.size());
  for (double p : grid.points()) {
    if (!fmt.is_signed() && p < 0.0) {
      throw ParameterError("cannot snap negative point to unsigned " + fmt.name());
    }
    snapped.push_back(fmt.round(p));
  }
  std::vector<std::size_t> order(snapped.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return snapped[a] < snapped[b]; });
  std::vector<double> sorted;
  std::ostringstream collisions;
  std::size_t n_collisions = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const double v = snapped[order[i]];
    if (!sorted.empty() && sorted.back() == v) {
      ++n_collisions;
      collisions << " " << grid.points()[order[i - 1]] << "&" << grid.points()[order[i]] << "->" << v;
      continue;
    }
    sorted.push_back(v);
  }
  if (n_collisions > 0) {
    throw DegenerateGridError("snapping '" + grid.name() + "' to " + fmt.name() + " collapsed " +
                              std::to_string(n_collisions) + " point(s):" + collisions.str());
  }
  return Grid(grid.name(), std::move(sorted), grid.unit(), grid.is_half(), fmt.kind());
}

Grid nf4_construct() {
  // Offset sits halfway between 1 - 1/(2*15) and 1 - 1/(2*16).
  const double offset = 0.5 * ((1.0 - 1.0 / 30.0) + (1.0 - 1.0 / 32.0));
  const boost::math::normal_distribution<double> normal;
  auto linspace = [](double a, double b, int n) {
    std::vector<double> out(n);
    for (int i = 0; i < n; ++i) out[i] = a + (b - a) * i / (n - 1);
    return out;
  };
  std::vector<double> pts;
  const auto pos = linspace(offset, 0.5, 9);
  for (int i = 0; i < 8; ++i) pts.push_back(boost::math::quantile(normal, pos[i]));
  const auto neg = linspace(offset, 0.5, 8);
  for (int i = 0; i < 7; ++i) pts.push_back(-boost::math::quantile(normal, neg[i]));
  pts.push_back(0.0);
  std::sort(pts.begin(), pts.end());
  const double mx = std::max(std::abs(pts.front()), std::abs(pts.back()));
  for (double& p : pts) p /= mx;
  pts.front() = -1.0;
  pts.back() = 1.0;
  return Grid("NF4", std::move(pts));
}

nlohmann::json to_json(const Grid& grid) {
  nlohmann::json j;
  j["name"] = grid.name();
  j["format"] = grid.format() ? LowBitFormat::from_kind(*grid.format()).name() : "none";
  j["points"] = std::vector<double>(grid.points().begin(), grid.points().end());
  if (grid.unit() != 1.0) j["unit"] = grid.unit();
  if (grid.is_half()) j["half"] = true;
  return j;
}

nlohmann::json to_json(const GridFamily& family) {
  nlohmann::json j;
  j["name"] = family.name();
  j["selector"] = selector_name(family.selector());
  j["grids"] = nlohmann::json::array();
  for (const auto& g : family.grids()) j["grids"].push_back(to_json(g));
  if (family.has_offsets()) {
    j["shift_offsets"] =
        std::vector<double>(family.shift_offsets().begin(), family.shift_offsets().end());
  }
  return j;
}

Grid grid_from_json(const nlohmann::json& j) {
  try {
    std::optional<FormatKind> fmt;
    const std::string f = j.value("format", "none");
    if (f != "none") fmt = LowBitFormat::parse(f).kind();
    return Grid(j.at("name").get<std::string>(), j.at("points").get<std::vector<double>>(),
                j.value("unit", 1.0), j.value("half", false), fmt);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed grid JSON: ") + e.what());
  }
}

GridFamily family_from_json(const nlohmann::json& j) {
  try {
    if (!j.contains("grids")) return GridFamily(grid_from_json(j));
    std::vector<Grid> grids;
    for (const auto& g : j.at("grids")) grids.push_back(grid_from_json(g));
    return GridFamily(j.at("name").get<std::string>(), std::move(grids),
                      parse_selector(j.value("selector", "min_mse")),
                      j.value("shift_offsets", std::vector<double>{}));
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed family JSON: ") + e.what());
  }
}

}  // namespace gridforge

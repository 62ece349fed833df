#include "gridforge/quant.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gridforge/error.hpp"

namespace gridforge {

NearestPoint nearest_point(double a, std::span<const double> points) noexcept {
  const auto it = std::upper_bound(points.begin(), points.end(), a);
  if (it == points.begin()) {
    const double d = a - points.front();
    return {0, d * d};
  }
  if (it == points.end()) {
    const double d = a - points.back();
    return {points.size() - 1, d * d};
  }
  const std::size_t hi = static_cast<std::size_t>(it - points.begin());
  const std::size_t lo = hi - 1;
  const double dlo = a - points[lo];
  const double dhi = points[hi] - a;
  if (dhi < dlo) return {hi, dhi * dhi};
  return {lo, dlo * dlo};
}

namespace {

struct Candidate {
  double loss = std::numeric_limits<double>::infinity();
  std::size_t grid = 0;
  double scale = 0.0;
  std::optional<std::uint8_t> scale_code;
  bool saturated = false;
};

// Squared-error sum for one (grid, scale, offset) choice; writes codes when
// `codes` is non-null.
double sse_for(std::span<const double> x, const Grid& grid, double scale, double offset,
               std::uint8_t* codes) noexcept {
  const auto pts = grid.points();
  double sse = 0.0;
  if (scale == 0.0) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      sse += x[i] * x[i];
      if (codes) codes[i] = 0;
    }
    return sse;
  }
  if (grid.is_half()) {
    // Codes index the mirrored grid: negated positive points, then the points.
    const std::size_t zero_off = pts.front() == 0.0 ? 1 : 0;
    const std::size_t npos = pts.size() - zero_off;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double mag = std::abs(x[i]);
      const auto np = nearest_point(mag / scale - offset, pts);
      const double r = scale * (pts[np.index] + offset);
      const double d = mag - r;
      sse += d * d;
      if (codes) {
        const bool neg = std::signbit(x[i]) && pts[np.index] > 0.0;
        codes[i] = static_cast<std::uint8_t>(neg ? npos - 1 - (np.index - zero_off)
                                                 : npos + np.index);
      }
    }
    return sse;
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    const auto np = nearest_point(x[i] / scale - offset, pts);
    const double r = scale * (pts[np.index] + offset);
    const double d = x[i] - r;
    sse += d * d;
    if (codes) codes[i] = static_cast<std::uint8_t>(np.index);
  }
  return sse;
}

std::size_t sign_selected_grid(std::span<const double> x) noexcept {
  std::size_t arg = 0;
  double best = -1.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double m = std::abs(x[i]);
    if (m > best) {
      best = m;
      arg = i;
    }
  }
  return x[arg] < 0.0 ? 1 : 0;
}

template <bool kWantCodes>
Candidate select(std::span<const double> x, const GridFamily& family, const QuantOptions& opts,
                 std::vector<std::uint8_t>* best_codes) {
  double absmax = 0.0;
  for (double v : x) {
    if (!std::isfinite(v)) throw InputError("non-finite value in block");
    absmax = std::max(absmax, std::abs(v));
  }
  Candidate best;
  if (absmax == 0.0) {
    best.loss = 0.0;
    if constexpr (kWantCodes) best_codes->assign(x.size(), 0);
    return best;
  }

  std::size_t first = 0;
  std::size_t last = family.size();
  if (family.selector() == Selector::SignOfMaxMagnitude) {
    first = sign_selected_grid(x);
    last = first + 1;
  }

  std::vector<std::uint8_t> scratch;
  if constexpr (kWantCodes) scratch.resize(x.size());

  for (std::size_t gi = first; gi < last; ++gi) {
    const Grid& grid = family.grid(gi);
    const double single_divisor[] = {grid.unit()};
    const std::span<const double> divisors =
        opts.scale_divisors.empty() ? std::span<const double>(single_divisor)
                                    : std::span<const double>(opts.scale_divisors);
    for (double d : divisors) {
      double scale = absmax / d;
      std::optional<std::uint8_t> code;
      bool saturated = false;
      if (opts.scale_format) {
        const auto enc = opts.scale_format->encode(scale);
        code = enc.code;
        saturated = enc.saturated;
        scale = opts.scale_format->decode(enc.code);
      }
      const double sse = sse_for(x, grid, scale, family.offset(gi),
                                 kWantCodes ? scratch.data() : nullptr);
      const double loss = sse / static_cast<double>(x.size());
      if (loss < best.loss) {
        best.loss = loss;
        best.grid = gi;
        best.scale = scale;
        best.scale_code = code;
        best.saturated = saturated;
        if constexpr (kWantCodes) *best_codes = scratch;
      }
    }
  }
  return best;
}

}  // namespace

QuantizeResult quantize_block(std::span<const double> x, const GridFamily& family,
                              const QuantOptions& opts) {
  if (x.empty()) throw InputError("empty block");
  QuantizeResult out;
  const Candidate c = select<true>(x, family, opts, &out.block.codes);
  out.block.scale = c.scale;
  out.block.grid_index = static_cast<std::uint8_t>(c.grid);
  out.block.scale_code = c.scale_code;
  out.block.scale_saturated = c.saturated;
  out.loss.mse = c.loss;
  return out;
}

double quantize_loss(std::span<const double> x, const GridFamily& family,
                     const QuantOptions& opts) {
  if (x.empty()) throw InputError("empty block");
  return select<false>(x, family, opts, nullptr).loss;
}

std::vector<double> dequantize_block(const QuantizedBlock& qb, const GridFamily& family) {
  if (qb.grid_index >= family.size()) {
    throw CorruptBlockError("grid index " + std::to_string(qb.grid_index) + " out of range");
  }
  const Grid& grid = family.grid(qb.grid_index);
  const double off = family.offset(qb.grid_index);
  const auto pts = grid.points();
  std::vector<double> out(qb.codes.size());
  if (grid.is_half()) {
    const Grid full = grid.mirrored();
    const auto fpts = full.points();
    for (std::size_t i = 0; i < qb.codes.size(); ++i) {
      if (qb.codes[i] >= fpts.size()) throw CorruptBlockError("code out of range");
      const double p = fpts[qb.codes[i]];
      const double mag = qb.scale * (std::abs(p) + off);
      out[i] = p < 0.0 ? -mag : mag;
    }
    return out;
  }
  for (std::size_t i = 0; i < qb.codes.size(); ++i) {
    if (qb.codes[i] >= pts.size()) {
      throw CorruptBlockError("code " + std::to_string(qb.codes[i]) + " out of range");
    }
    out[i] = qb.scale * (pts[qb.codes[i]] + off);
  }
  return out;
}

double grid_block_loss(std::span<const double> x, const Grid& grid) noexcept {
  double absmax = 0.0;
  for (double v : x) absmax = std::max(absmax, std::abs(v));
  if (absmax == 0.0) return 0.0;
  const auto pts = grid.normalized();
  double acc = 0.0;
  if (grid.is_half()) {
    for (double v : x) acc += nearest_point(std::abs(v) / absmax, pts).sq_error;
  } else {
    for (double v : x) acc += nearest_point(v / absmax, pts).sq_error;
  }
  return absmax * absmax * acc / static_cast<double>(x.size());
}

double mu_statistic(std::span<const double> x) {
  double absmax = 0.0;
  double sum = 0.0;
  for (double v : x) {
    absmax = std::max(absmax, std::abs(v));
    sum += std::abs(v);
  }
  if (absmax == 0.0) throw DegenerateBlockError("mu statistic undefined for an all-zero block");
  return sum / (absmax * static_cast<double>(x.size()));
}

}  // namespace gridforge

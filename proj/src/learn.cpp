#include "gridforge/learn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "gridforge/error.hpp"
#include "gridforge/numeric.hpp"
#include "gridforge/quant.hpp"

namespace gridforge {

std::string weight_mode_name(WeightMode m) {
  return m == WeightMode::Msquared ? "msquared" : "uniform";
}

WeightMode parse_weight_mode(std::string_view s) {
  if (s == "msquared" || s == "m2") return WeightMode::Msquared;
  if (s == "uniform") return WeightMode::Uniform;
  throw NameError("unknown weight mode '" + std::string(s) + "'");
}

void TrainConfig::validate() const {
  if (max_iters < 1) throw ParameterError("max_iters must be >= 1");
  if (!(rel_tol > 0.0)) throw ParameterError("rel_tol must be > 0");
  if (!(residual_quantile > 0.0 && residual_quantile < 1.0)) {
    throw ParameterError("residual_quantile must be in (0, 1)");
  }
  if (threads < 1) throw ParameterError("threads must be >= 1");
}

nlohmann::json to_json(const LearnReport& r) {
  return {{"objective_trace", r.objective_trace},
          {"converged", r.converged},
          {"iterations", r.iterations},
          {"assignments_final", r.assignments_final}};
}

namespace {

using Real = long double;

// Normalized samples of one pool, flattened, with per-sample weights.
struct Normalized {
  std::size_t g = 0;
  std::size_t n_blocks = 0;
  std::vector<double> a;       // n_blocks * g, zero for zero blocks
  std::vector<double> weight;  // per block
  std::vector<bool> live;      // absmax > 0
};

Normalized normalize(const BlockPool& pool, WeightMode mode, bool half) {
  Normalized n;
  n.g = pool.g();
  n.n_blocks = pool.size();
  n.a.resize(n.n_blocks * n.g);
  n.weight.resize(n.n_blocks);
  n.live.resize(n.n_blocks);
  for (std::size_t b = 0; b < n.n_blocks; ++b) {
    const double m = pool.absmax(b);
    n.live[b] = m > 0.0;
    n.weight[b] = mode == WeightMode::Msquared ? m * m : 1.0;
    const auto x = pool.block(b);
    for (std::size_t i = 0; i < n.g; ++i) {
      const double v = m > 0.0 ? x[i] / m : 0.0;
      n.a[b * n.g + i] = half ? std::abs(v) : v;
    }
  }
  return n;
}

// Sample indices of all live blocks sorted by value (ties by index).
std::vector<std::uint32_t> sorted_order(const Normalized& n) {
  std::vector<std::uint32_t> idx;
  idx.reserve(n.a.size());
  for (std::size_t b = 0; b < n.n_blocks; ++b) {
    if (!n.live[b]) continue;
    for (std::size_t i = 0; i < n.g; ++i) idx.push_back(static_cast<std::uint32_t>(b * n.g + i));
  }
  std::sort(idx.begin(), idx.end(), [&](std::uint32_t x, std::uint32_t y) {
    return n.a[x] < n.a[y] || (n.a[x] == n.a[y] && x < y);
  });
  return idx;
}

// Live samples in sorted order, stored contiguously for sequential sweeps.
struct SortedSamples {
  std::vector<double> a;
  std::vector<std::uint32_t> block;
};

SortedSamples gather(const Normalized& n, const std::vector<std::uint32_t>& order) {
  SortedSamples s;
  s.a.reserve(order.size());
  s.block.reserve(order.size());
  for (std::uint32_t i : order) {
    s.a.push_back(n.a[i]);
    s.block.push_back(static_cast<std::uint32_t>(i / n.g));
  }
  return s;
}

// Sorted weighted samples with prefix sums of w, w a, w a^2.
struct SortedView {
  std::vector<double> a;
  std::vector<Real> c0, c1, c2;

  std::size_t size() const { return a.size(); }

  struct Sums {
    Real s0 = 0, s1 = 0, s2 = 0;
  };
  Sums range(std::size_t lo, std::size_t hi) const {
    return {c0[hi] - c0[lo], c1[hi] - c1[lo], c2[hi] - c2[lo]};
  }
  std::size_t upper(double v) const {
    return static_cast<std::size_t>(std::upper_bound(a.begin(), a.end(), v) - a.begin());
  }
  std::size_t lower(double v) const {
    return static_cast<std::size_t>(std::lower_bound(a.begin(), a.end(), v) - a.begin());
  }
  std::size_t distinct() const {
    std::size_t d = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (i == 0 || a[i] != a[i - 1]) ++d;
    }
    return d;
  }
};

SortedView make_view(const Normalized& n, const std::vector<std::uint32_t>& order,
                     const std::vector<std::uint8_t>* assign = nullptr, std::uint8_t which = 0) {
  SortedView v;
  v.a.reserve(order.size());
  v.c0.reserve(order.size() + 1);
  v.c1.reserve(order.size() + 1);
  v.c2.reserve(order.size() + 1);
  v.c0.push_back(0);
  v.c1.push_back(0);
  v.c2.push_back(0);
  for (std::uint32_t s : order) {
    const std::size_t b = s / n.g;
    if (assign && (*assign)[b] != which) continue;
    const double a = n.a[s];
    const Real w = n.weight[b];
    v.a.push_back(a);
    v.c0.push_back(v.c0.back() + w);
    v.c1.push_back(v.c1.back() + w * a);
    v.c2.push_back(v.c2.back() + w * a * a);
  }
  return v;
}

Real cell_sse(const SortedView::Sums& s, Real c) {
  const Real e = s.s2 - 2 * c * s.s1 + c * c * s.s0;
  return e > 0 ? e : 0;
}

// Levels plus pin flags, kept sorted.
struct Levels {
  std::vector<double> v;
  std::vector<bool> pinned;

  std::size_t size() const { return v.size(); }
  void insert(double x, bool pin) {
    const auto it = std::lower_bound(v.begin(), v.end(), x);
    const auto pos = it - v.begin();
    v.insert(it, x);
    pinned.insert(pinned.begin() + pos, pin);
  }
  bool contains(double x) const { return std::binary_search(v.begin(), v.end(), x); }
};

// Cell j covers (m_{j-1}, m_j]; the upper-bound convention sends exact
// midpoints to the lower level.
std::vector<std::size_t> cell_edges(const SortedView& view, const std::vector<double>& lv) {
  std::vector<std::size_t> e(lv.size() + 1);
  e[0] = 0;
  for (std::size_t j = 0; j + 1 < lv.size(); ++j) e[j + 1] = view.upper(0.5 * (lv[j] + lv[j + 1]));
  e[lv.size()] = view.size();
  return e;
}

Real total_sse(const SortedView& view, const std::vector<double>& lv) {
  const auto e = cell_edges(view, lv);
  Real t = 0;
  for (std::size_t j = 0; j < lv.size(); ++j) t += cell_sse(view.range(e[j], e[j + 1]), lv[j]);
  return t;
}

enum class Side { Any, Negative, Positive };

bool on_side(double x, Side side) {
  switch (side) {
    case Side::Negative: return x <= 0.0;
    case Side::Positive: return x >= 0.0;
    default: return true;
  }
}

// Inserts a free level at the midpoint of the gap whose samples carry the
// largest quantization error.
void reseed_one(const SortedView& view, Levels& lv, Side side) {
  Real best = -1;
  double where = 0.0;
  for (std::size_t i = 0; i + 1 < lv.size(); ++i) {
    const double lo = lv.v[i];
    const double hi = lv.v[i + 1];
    if (!on_side(lo, side) || !on_side(hi, side)) continue;
    const double mid = 0.5 * (lo + hi);
    if (!(mid > lo && mid < hi)) continue;
    const std::size_t a = view.upper(lo);
    const std::size_t m = view.upper(mid);
    const std::size_t b = view.lower(hi);
    if (a >= b) continue;
    const Real err = cell_sse(view.range(a, m), lo) + cell_sse(view.range(m, b), hi);
    if (err > best) {
      best = err;
      where = mid;
    }
  }
  // Below the lowest or above the highest level.
  if (!lv.v.empty()) {
    const double lo = lv.v.front();
    const std::size_t a = view.lower(lo);
    if (a > 0 && on_side(view.a.front(), side)) {
      const Real err = cell_sse(view.range(0, a), lo);
      if (err > best) {
        best = err;
        where = 0.5 * (view.a.front() + lo);
        if (!(where < lo)) where = view.a.front();
      }
    }
    const double hi = lv.v.back();
    const std::size_t b = view.upper(hi);
    if (b < view.size() && on_side(view.a.back(), side)) {
      const Real err = cell_sse(view.range(b, view.size()), hi);
      if (err > best) {
        best = err;
        where = 0.5 * (view.a.back() + hi);
        if (!(where > hi)) where = view.a.back();
      }
    }
  }
  if (best <= 0 || lv.contains(where)) {
    throw InsufficientDataError("not enough distinct values to place all levels");
  }
  lv.insert(where, false);
}

struct LloydProblem {
  const SortedView* view;
  std::size_t k;
  LloydConstraints cons;
};

std::size_t count_neg(const Levels& lv) {
  return static_cast<std::size_t>(std::count_if(lv.v.begin(), lv.v.end(), [](double x) { return x < 0.0; }));
}
std::size_t count_pos(const Levels& lv) {
  return static_cast<std::size_t>(std::count_if(lv.v.begin(), lv.v.end(), [](double x) { return x > 0.0; }));
}

// Fills missing levels by reseeding, honoring the sign split.
void complete(const LloydProblem& p, Levels& lv) {
  while (lv.size() < p.k) {
    Side side = Side::Any;
    if (p.cons.neg_pos_split) {
      side = count_neg(lv) < static_cast<std::size_t>(p.cons.neg_pos_split->first) ? Side::Negative
                                                                                    : Side::Positive;
    }
    reseed_one(*p.view, lv, side);
  }
}

Levels pinned_levels(const LloydConstraints& c) {
  Levels lv;
  if (c.half) {
    lv.insert(0.0, true);
    if (c.pin_max) lv.insert(1.0, true);
    return lv;
  }
  if (c.fixed_zero) lv.insert(0.0, true);
  if (c.pin_min) lv.insert(-1.0, true);
  if (c.pin_max) lv.insert(1.0, true);
  return lv;
}

// Weighted quantiles of view samples in [lo, hi) index range.
void add_quantiles(const SortedView& v, std::size_t lo, std::size_t hi, std::size_t count, Levels& lv) {
  if (count == 0 || lo >= hi) return;
  const Real base = v.c0[lo];
  const Real total = v.c0[hi] - base;
  std::size_t pos = lo;
  for (std::size_t j = 0; j < count; ++j) {
    const Real target = base + total * (static_cast<Real>(j) + 0.5L) / static_cast<Real>(count);
    while (pos + 1 < hi && v.c0[pos + 1] < target) ++pos;
    const double x = v.a[pos];
    if (!lv.contains(x)) lv.insert(x, false);
  }
}

Levels initial_levels(const LloydProblem& p) {
  const SortedView& v = *p.view;
  Levels lv = pinned_levels(p.cons);
  if (p.cons.neg_pos_split) {
    const auto [nn, np] = *p.cons.neg_pos_split;
    const std::size_t zero_at = v.lower(0.0);
    const std::size_t pos_at = v.upper(0.0);
    add_quantiles(v, 0, zero_at, static_cast<std::size_t>(nn) - count_neg(lv), lv);
    add_quantiles(v, pos_at, v.size(), static_cast<std::size_t>(np) - count_pos(lv), lv);
  } else {
    add_quantiles(v, 0, v.size(), p.k - lv.size(), lv);
  }
  complete(p, lv);
  return lv;
}

void check_problem(const LloydProblem& p) {
  if (p.k < 2) throw ParameterError("k_levels must be >= 2");
  if (p.k > 256) throw ParameterError("k_levels must be <= 256");
  if (p.view->size() == 0) throw InsufficientDataError("empty training pool");
  if (p.cons.neg_pos_split) {
    if (!p.cons.fixed_zero || p.cons.half) {
      throw ParameterError("neg_pos_split requires fixed_zero on a full grid");
    }
    const auto [nn, np] = *p.cons.neg_pos_split;
    if (nn < 1 || np < 1 || static_cast<std::size_t>(nn + np + 1) != p.k) {
      throw ParameterError("neg_pos_split must sum to k_levels - 1");
    }
  }
  if (p.view->distinct() < p.k) {
    throw InsufficientDataError("pool has " + std::to_string(p.view->distinct()) +
                                " distinct values, fewer than " + std::to_string(p.k) + " levels");
  }
}

// One Lloyd update; empty free cells are reseeded. Returns the new levels.
Levels lloyd_step(const LloydProblem& p, const Levels& cur) {
  const SortedView& v = *p.view;
  const auto e = cell_edges(v, cur.v);
  Levels next;
  for (std::size_t j = 0; j < cur.size(); ++j) {
    if (cur.pinned[j]) {
      next.insert(cur.v[j], true);
      continue;
    }
    const auto s = v.range(e[j], e[j + 1]);
    if (s.s0 <= 0) continue;
    const double c = static_cast<double>(s.s1 / s.s0);
    if (next.contains(c)) continue;
    next.insert(c, false);
  }
  complete(p, next);
  return next;
}

struct LloydRun {
  Levels levels;
  std::vector<double> trace;
  bool converged = false;
  int iterations = 0;
};

LloydRun run_lloyd(const LloydProblem& p, Levels lv, const TrainConfig& cfg, Real denom) {
  LloydRun r;
  Real prev = total_sse(*p.view, lv.v);
  r.trace.push_back(static_cast<double>(prev / denom));
  for (int it = 0; it < cfg.max_iters; ++it) {
    Levels nxt = lloyd_step(p, lv);
    const Real cur = total_sse(*p.view, nxt.v);
    ++r.iterations;
    // Rounding in prefix sums can make a converged step look like a tiny
    // increase; keep the previous levels in that case.
    if (cur > prev) {
      r.converged = true;
      break;
    }
    lv = std::move(nxt);
    r.trace.push_back(static_cast<double>(cur / denom));
    const bool done = prev <= 0 || (prev - cur) <= static_cast<Real>(cfg.rel_tol) * prev;
    prev = cur;
    if (done) {
      r.converged = true;
      break;
    }
  }
  r.levels = std::move(lv);
  return r;
}

// Escapes Lloyd local optima where a support gap pins the level allocation.
// Each round tries removing every free level in turn, reseeds the largest-error
// gap of the current solution, reruns Lloyd and keeps the best strict gain.
LloydRun reallocate_levels(const LloydProblem& p, LloydRun r, const TrainConfig& cfg, Real denom) {
  Real best = total_sse(*p.view, r.levels.v);
  for (int round = 0; round < static_cast<int>(p.k) * 4; ++round) {
    Levels target = r.levels;
    try {
      reseed_one(*p.view, target, Side::Any);
    } catch (const InsufficientDataError&) {
      break;
    }
    const auto split = p.cons.neg_pos_split;
    std::optional<LloydRun> winner;
    Real winner_sse = best;
    for (std::size_t j = 0; j < r.levels.size(); ++j) {
      if (r.levels.pinned[j]) continue;
      Levels cand;
      bool skipped = false;
      for (std::size_t i = 0; i < target.size(); ++i) {
        if (target.v[i] == r.levels.v[j] && !skipped) {
          skipped = true;
          continue;
        }
        cand.insert(target.v[i], target.pinned[i]);
      }
      if (cand.size() != p.k) continue;
      if (split && (count_neg(cand) != static_cast<std::size_t>(split->first) ||
                    count_pos(cand) != static_cast<std::size_t>(split->second))) {
        continue;
      }
      LloydRun run = run_lloyd(p, std::move(cand), cfg, denom);
      const Real sse = total_sse(*p.view, run.levels.v);
      if (sse < winner_sse) {
        winner_sse = sse;
        winner = std::move(run);
      }
    }
    if (!winner || !(best - winner_sse > static_cast<Real>(cfg.rel_tol) * best)) break;
    best = winner_sse;
    r.trace.push_back(winner->trace.back());  // intermediate values may exceed best
    r.iterations += winner->iterations;
    r.converged = winner->converged;
    r.levels = std::move(winner->levels);
  }
  return r;
}

Real weighted_denominator(const Normalized& n) {
  return static_cast<Real>(n.n_blocks) * static_cast<Real>(n.g);
}

}  // namespace

Grid lloyd_fit(const BlockPool& pool, std::size_t k_levels, const TrainConfig& cfg,
               const LloydConstraints& constraints, LearnReport* report, std::string name) {
  cfg.validate();
  if (pool.empty()) throw InsufficientDataError("empty training pool");
  const Normalized n = normalize(pool, cfg.weight_mode, constraints.half);
  const auto order = sorted_order(n);
  const SortedView view = make_view(n, order);
  const LloydProblem p{&view, k_levels, constraints};
  check_problem(p);
  LloydRun r = run_lloyd(p, initial_levels(p), cfg, weighted_denominator(n));
  if (cfg.reallocate) r = reallocate_levels(p, std::move(r), cfg, weighted_denominator(n));
  if (report) {
    report->objective_trace = r.trace;
    report->converged = r.converged;
    report->iterations = r.iterations;
    report->assignments_final.assign(pool.size(), 0);
  }
  return Grid(std::move(name), r.levels.v, 1.0, constraints.half);
}

namespace {

// Weighted normalized block loss w_b (1/g) sum psi(a), by one merge pass over
// the sorted samples (ties at a midpoint go to the lower level).
void block_losses(const Normalized& n, const SortedSamples& ss, std::span<const double> levels,
                  std::vector<double>& out) {
  out.assign(n.n_blocks, 0.0);
  const std::size_t k = levels.size();
  std::size_t j = 0;
  double mid = k > 1 ? 0.5 * (levels[0] + levels[1]) : std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < ss.a.size(); ++i) {
    const double a = ss.a[i];
    while (j + 1 < k && a > mid) {
      ++j;
      mid = j + 1 < k ? 0.5 * (levels[j] + levels[j + 1]) : std::numeric_limits<double>::infinity();
    }
    const double d = a - levels[j];
    out[ss.block[i]] += d * d;
  }
  for (std::size_t b = 0; b < n.n_blocks; ++b) out[b] *= n.weight[b] / static_cast<double>(n.g);
}

// One Lloyd sweep on a partition by a linear pass over the global sorted
// order. Returns false (levels untouched) when a free cell is empty, in which
// case the caller falls back to the reseeding path.
bool centroid_sweep(const Normalized& n, const SortedSamples& ss,
                    const std::vector<std::uint8_t>& assign, std::uint8_t which, Levels& lv) {
  const std::size_t k = lv.size();
  std::vector<double> mid(k - 1);
  for (std::size_t j = 0; j + 1 < k; ++j) mid[j] = 0.5 * (lv.v[j] + lv.v[j + 1]);
  std::vector<Real> s0(k, 0), s1(k, 0);
  std::size_t j = 0;
  for (std::size_t i = 0; i < ss.a.size(); ++i) {
    const std::size_t b = ss.block[i];
    if (assign[b] != which) continue;
    const double a = ss.a[i];
    while (j + 1 < k && a > mid[j]) ++j;
    s0[j] += n.weight[b];
    s1[j] += static_cast<Real>(n.weight[b]) * a;
  }
  std::vector<double> next = lv.v;
  for (std::size_t i = 0; i < k; ++i) {
    if (lv.pinned[i]) continue;
    if (s0[i] <= 0) return false;
    next[i] = static_cast<double>(s1[i] / s0[i]);
  }
  for (std::size_t i = 1; i < k; ++i) {
    if (!(next[i] > next[i - 1])) return false;
  }
  lv.v = std::move(next);
  return true;
}

double quantile_type7(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double h = q * static_cast<double>(v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

GridFamily learn_residual_pair(const Grid& primary, bool primary_fixed, const BlockPool& pool,
                               const TrainConfig& cfg, const PairOptions& opts,
                               LearnReport* report) {
  cfg.validate();
  if (pool.empty()) throw InsufficientDataError("empty training pool");
  if (primary.is_half() != opts.constraints.half) {
    throw ParameterError("primary grid and constraints disagree on half-grid mode");
  }
  const bool half = opts.constraints.half;
  const std::size_t k = primary.size();
  const Normalized n = normalize(pool, cfg.weight_mode, half);
  const auto order = sorted_order(n);
  const SortedSamples ss = gather(n, order);
  const Real denom = static_cast<Real>(n.n_blocks);

  // (1) per-block loss under the primary; (2) residual pool.
  Grid b1 = primary.normalized_grid().with_name(primary.name());
  std::vector<double> loss1;
  block_losses(n, ss, b1.normalized(), loss1);
  const double thr = quantile_type7(loss1, cfg.residual_quantile);
  std::vector<std::uint8_t> assign(n.n_blocks, 0);
  std::size_t residual = 0;
  for (std::size_t b = 0; b < n.n_blocks; ++b) {
    if (loss1[b] > thr) {
      assign[b] = 1;
      ++residual;
    }
  }
  if (residual == 0) throw ResidualEmptyError("no block exceeds the residual loss threshold");

  // (3) initialize the partner on the residual pool.
  const SortedView rview = make_view(n, order, &assign, 1);
  const LloydProblem rp{&rview, k, opts.constraints};
  check_problem(rp);
  Levels l2 = run_lloyd(rp, initial_levels(rp), cfg, denom).levels;
  Levels l1;
  for (double x : b1.points()) l1.insert(x, false);
  {
    const Levels pins = pinned_levels(opts.constraints);
    for (std::size_t j = 0; j < l1.size(); ++j) l1.pinned[j] = pins.contains(l1.v[j]);
  }

  // (4) alternate assignment and Lloyd updates.
  LearnReport rep;
  std::vector<double> loss2;
  double prev = std::numeric_limits<double>::infinity();
  bool converged = false;
  int it = 0;
  TrainConfig inner = cfg;
  if (!cfg.full_inner) inner.max_iters = 1;
  for (;;) {
    block_losses(n, ss, l1.v, loss1);
    block_losses(n, ss, l2.v, loss2);
    CompensatedSum obj;
    for (std::size_t b = 0; b < n.n_blocks; ++b) {
      assign[b] = loss2[b] < loss1[b] ? 1 : 0;
      obj.add(std::min(loss1[b], loss2[b]));
    }
    const double cur = static_cast<double>(obj.value() / denom);
    rep.objective_trace.push_back(cur);
    if (prev < std::numeric_limits<double>::infinity() &&
        (prev - cur) <= cfg.rel_tol * prev) {
      converged = true;
      break;
    }
    if (cur == 0.0) {
      converged = true;
      break;
    }
    prev = cur;
    if (it >= cfg.max_iters) break;
    ++it;
    for (std::uint8_t which = primary_fixed ? 1 : 0; which < 2; ++which) {
      Levels& lv = which == 0 ? l1 : l2;
      if (!cfg.full_inner && centroid_sweep(n, ss, assign, which, lv)) continue;
      const SortedView pv = make_view(n, order, &assign, which);
      const LloydProblem pp{&pv, k, opts.constraints};
      if (pv.size() == 0 || pv.distinct() < k) continue;
      lv = run_lloyd(pp, lv, inner, denom).levels;
    }
  }
  rep.converged = converged;
  rep.iterations = it;
  rep.assignments_final = assign;
  if (report) *report = std::move(rep);

  // (5) snap the grids that moved.
  Grid out1 = primary_fixed ? primary.with_name(opts.name + ".b1")
                            : Grid(opts.name + ".b1", l1.v, 1.0, half);
  Grid out2(opts.name + ".b2", l2.v, 1.0, half);
  if (opts.snap) {
    if (!primary_fixed) out1 = snap_to_format(out1, *opts.snap);
    out2 = snap_to_format(out2, *opts.snap);
  }
  return GridFamily(opts.name, {out1, out2}, Selector::MinMSE);
}

Grid learn_split87(const BlockPool& pool, const TrainConfig& cfg, bool eight_negative,
                   LearnReport* report) {
  cfg.validate();
  if (pool.empty()) throw InsufficientDataError("empty training pool");
  LloydConstraints c;
  c.fixed_zero = true;
  c.pin_min = eight_negative;
  c.pin_max = !eight_negative;
  c.neg_pos_split = eight_negative ? std::pair{8, 7} : std::pair{7, 8};
  const Normalized n = normalize(pool, cfg.weight_mode, false);
  const auto order = sorted_order(n);
  const SortedView view = make_view(n, order);
  const LloydProblem p{&view, 16, c};
  check_problem(p);
  const Real denom = weighted_denominator(n);

  Levels lv = initial_levels(p);
  LearnReport rep;
  Real prev = total_sse(view, lv.v);
  rep.objective_trace.push_back(static_cast<double>(prev / denom));
  int sweeps = 0;
  bool converged = false;
  while (sweeps < cfg.max_iters) {
    ++sweeps;
    // Gauss-Seidel: each free level moves to the fixed point of its own
    // cell centroid with both neighbors held.
    for (std::size_t j = 0; j < lv.size(); ++j) {
      if (lv.pinned[j]) continue;
      for (int inner = 0; inner < 50; ++inner) {
        const std::size_t lo = j == 0 ? 0 : view.upper(0.5 * (lv.v[j - 1] + lv.v[j]));
        const std::size_t hi =
            j + 1 == lv.size() ? view.size() : view.upper(0.5 * (lv.v[j] + lv.v[j + 1]));
        const auto s = view.range(lo, hi);
        if (s.s0 <= 0) break;
        double c_new = static_cast<double>(s.s1 / s.s0);
        const double left = j == 0 ? -std::numeric_limits<double>::infinity() : lv.v[j - 1];
        const double right = j + 1 == lv.size() ? std::numeric_limits<double>::infinity() : lv.v[j + 1];
        if (!(c_new > left && c_new < right)) break;
        const Real before = cell_sse(s, lv.v[j]);
        const Real after = cell_sse(s, c_new);
        if (!(after < before) || c_new == lv.v[j]) break;
        lv.v[j] = c_new;
      }
    }
    const Real cur = total_sse(view, lv.v);
    rep.objective_trace.push_back(static_cast<double>(cur / denom));
    const bool done = prev <= 0 || (prev - cur) <= static_cast<Real>(cfg.rel_tol) * prev;
    prev = cur;
    if (done) {
      converged = true;
      break;
    }
  }
  rep.converged = converged;
  rep.iterations = sweeps;
  rep.assignments_final.assign(pool.size(), 0);
  if (report) *report = std::move(rep);
  return Grid(eight_negative ? "Split87" : "Split78", lv.v);
}

GridFamily learn_bof4s(const BlockPool& pool, const TrainConfig& cfg,
                       std::optional<LowBitFormat> snap, LearnReport* report) {
  BlockPool flipped(pool.g());
  std::vector<double> tmp(pool.g());
  for (std::size_t b = 0; b < pool.size(); ++b) {
    const auto x = pool.block(b);
    std::size_t arg = 0;
    for (std::size_t i = 1; i < x.size(); ++i) {
      if (std::abs(x[i]) > std::abs(x[arg])) arg = i;
    }
    const double sgn = x[arg] < 0.0 ? -1.0 : 1.0;
    for (std::size_t i = 0; i < x.size(); ++i) tmp[i] = sgn * x[i];
    flipped.append(tmp, pool.tag(b));
  }
  LloydConstraints c;
  c.pin_max = true;
  Grid g = lloyd_fit(flipped, 16, cfg, c, report, "BOF4S");
  if (snap) g = snap_to_format(g, *snap);
  return GridFamily("BOF4S", {g.with_name("BOF4S.pos"), g.negated("BOF4S.neg")},
                    Selector::SignOfMaxMagnitude);
}

double half_grid_risk(const BlockPool& pool, const Grid& half_grid) {
  if (!half_grid.is_half()) throw ParameterError("half_grid_risk needs a half grid");
  CompensatedSum acc;
  for (std::size_t b = 0; b < pool.size(); ++b) acc.add(grid_block_loss(pool.block(b), half_grid));
  return pool.empty() ? 0.0 : acc.value() / static_cast<double>(pool.size());
}

}  // namespace gridforge

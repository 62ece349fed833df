#include "gridforge/stats.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include <fmt/format.h>

#include "gridforge/error.hpp"
#include "gridforge/numeric.hpp"

namespace gridforge {

namespace {

double parse_number(std::string_view s, std::string_view what) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw ParameterError(fmt::format("bad {} '{}'", what, s));
  }
  return v;
}

}  // namespace

DistributionSpec DistributionSpec::parse(std::string_view name) {
  if (name == "normal" || name == "gaussian") return normal();
  if (name == "uniform") return uniform();
  if (name == "spiky") return {DistKind::Spiky, 0.0, 0.0, false};
  if (name == "flat") return {DistKind::Flat, 0.0, 0.0, false};
  if (name.rfind("tnormal", 0) == 0) {
    return truncated_normal(parse_number(name.substr(7), "truncation bound"));
  }
  if (name.size() > 1 && name[0] == 't') {
    std::string_view rest = name.substr(1);
    bool standardized = false;
    if (rest.back() == 's') {
      standardized = true;
      rest.remove_suffix(1);
    }
    DistributionSpec d = student_t(parse_number(rest, "degrees of freedom"), standardized);
    d.validate();
    return d;
  }
  throw NameError(fmt::format("unknown distribution '{}'", name));
}

std::string DistributionSpec::name() const {
  switch (kind) {
    case DistKind::Normal: return "normal";
    case DistKind::StudentT: return fmt::format("t{}{}", nu, standardized ? "s" : "");
    case DistKind::Uniform: return "uniform";
    case DistKind::TruncatedNormal: return fmt::format("tnormal{}", bound);
    case DistKind::Spiky: return "spiky";
    case DistKind::Flat: return "flat";
  }
  return "?";
}

void DistributionSpec::validate() const {
  switch (kind) {
    case DistKind::StudentT:
      if (!(nu > 0.0)) throw ParameterError("Student-t needs nu > 0");
      if (standardized && !(nu > 2.0)) {
        throw ParameterError("standardized Student-t needs nu > 2 for finite variance");
      }
      break;
    case DistKind::TruncatedNormal:
      if (!(bound > 0.0)) throw ParameterError("truncation bound must be > 0");
      break;
    default:
      break;
  }
}

BlockPool sample_pool(const DistributionSpec& spec, std::size_t g, std::size_t n_blocks,
                      std::uint64_t seed) {
  spec.validate();
  if (g == 0) throw ParameterError("block size must be >= 1");
  if (n_blocks == 0) throw ParameterError("n_blocks must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(g * n_blocks);
  switch (spec.kind) {
    case DistKind::Normal:
      for (double& x : v) x = normal(rng);
      break;
    case DistKind::StudentT: {
      std::chi_squared_distribution<double> chi2(spec.nu);
      const double sd = spec.standardized ? std::sqrt(spec.nu / (spec.nu - 2.0)) : 1.0;
      for (double& x : v) {
        const double z = normal(rng);
        const double c = chi2(rng);
        x = z / std::sqrt(c / spec.nu) / sd;
      }
      break;
    }
    case DistKind::Uniform: {
      std::uniform_real_distribution<double> u(-1.0, 1.0);
      const double sd = spec.standardized ? 1.0 / std::sqrt(3.0) : 1.0;
      for (double& x : v) x = u(rng) / sd;
      break;
    }
    case DistKind::TruncatedNormal: {
      // Variance of the truncated normal, for standardization.
      const double b = spec.bound;
      const double phi = std::exp(-0.5 * b * b) / std::sqrt(2.0 * M_PI);
      const double mass = std::erf(b / std::sqrt(2.0));
      const double sd = spec.standardized ? std::sqrt(1.0 - 2.0 * b * phi / mass) : 1.0;
      for (double& x : v) {
        double z;
        do z = normal(rng);
        while (std::abs(z) > b);
        x = z / sd;
      }
      break;
    }
    case DistKind::Spiky: {
      std::uniform_int_distribution<std::size_t> pos(0, g - 1);
      std::bernoulli_distribution coin(0.5);
      for (std::size_t b = 0; b < n_blocks; ++b) {
        for (std::size_t i = 0; i < g; ++i) v[b * g + i] = 0.1 * normal(rng);
        v[b * g + pos(rng)] = coin(rng) ? 1.0 : -1.0;
      }
      break;
    }
    case DistKind::Flat: {
      std::uniform_real_distribution<double> u(0.7, 1.0);
      std::bernoulli_distribution coin(0.5);
      for (double& x : v) x = coin(rng) ? u(rng) : -u(rng);
      break;
    }
  }
  return BlockPool(g, std::move(v), SourceTag::Synthetic);
}

std::vector<double> block_losses(const BlockPool& pool, const GridFamily& family,
                                 const QuantOptions& opts, int threads) {
  std::vector<double> out(pool.size());
  parallel_for(pool.size(), threads, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t b = lo; b < hi; ++b) out[b] = quantize_loss(pool.block(b), family, opts);
  });
  return out;
}

RiskEntry estimate_risk(const BlockPool& pool, const GridFamily& family, const QuantOptions& opts,
                        int threads) {
  const auto losses = block_losses(pool, family, opts, threads);
  const MeanStderr ms = mean_stderr(losses);
  return {family.name(), ms.mean, ms.stderr_, pool.size(), pool.g()};
}

namespace {

std::vector<double> mu_all(const BlockPool& pool) {
  std::vector<double> mu(pool.size());
  for (std::size_t b = 0; b < pool.size(); ++b) {
    mu[b] = pool.absmax(b) > 0.0 ? mu_statistic(pool.block(b)) : 0.0;
  }
  return mu;
}

std::vector<double> grid_losses(const BlockPool& pool, const Grid& grid, int threads) {
  std::vector<double> out(pool.size());
  parallel_for(pool.size(), threads, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t b = lo; b < hi; ++b) out[b] = grid_block_loss(pool.block(b), grid);
  });
  return out;
}

double mean_of(const std::vector<double>& v, const std::vector<std::size_t>& idx) {
  CompensatedSum s;
  for (std::size_t i : idx) s.add(v[i]);
  return s.value() / static_cast<double>(idx.size());
}

std::size_t majority(const std::vector<std::uint8_t>& choice, const std::vector<std::size_t>& idx,
                     std::size_t n_grids) {
  std::vector<std::size_t> count(n_grids, 0);
  for (std::size_t i : idx) ++count[choice[i]];
  return static_cast<std::size_t>(std::max_element(count.begin(), count.end()) - count.begin());
}

}  // namespace

CompetitiveReport competitive_analysis(const DistributionSpec& spec, const GridFamily& family,
                                       const CompetitiveOptions& opts) {
  std::vector<double> taus = opts.tau_grid;
  if (taus.empty()) {
    for (int i = 10; i <= 90; ++i) taus.push_back(i / 100.0);
  }
  for (double t : taus) {
    if (!(t > 0.0 && t < 1.0)) throw ParameterError("tau values must lie in (0, 1)");
  }
  if (opts.n_train == 0 || opts.n_val == 0) throw ParameterError("n_train and n_val must be > 0");
  const int threads = opts.train.threads;

  const BlockPool train = sample_pool(spec, opts.g, opts.n_train, derive_seed(opts.seed, 1));
  const BlockPool val = sample_pool(spec, opts.g, opts.n_val, derive_seed(opts.seed, 2));
  const auto mu_tr = mu_all(train);
  const auto mu_va = mu_all(val);

  const auto family_val = block_losses(val, family, {}, threads);
  std::vector<std::vector<double>> per_grid_val;
  for (const Grid& gr : family.grids()) {
    per_grid_val.push_back(block_losses(val, GridFamily(gr), {}, threads));
  }
  // Grid each training block selects under the family rule.
  std::vector<std::uint8_t> choice(train.size());
  for (std::size_t b = 0; b < train.size(); ++b) {
    choice[b] = quantize_block(train.block(b), family).block.grid_index;
  }

  CompetitiveReport rep;
  bool have = false;
  const double min_tr = opts.min_class_fraction * static_cast<double>(train.size());
  const double min_va = opts.min_class_fraction * static_cast<double>(val.size());
  for (double tau : taus) {
    std::vector<std::size_t> s_tr, f_tr, s_va, f_va;
    for (std::size_t b = 0; b < train.size(); ++b) (mu_tr[b] <= tau ? s_tr : f_tr).push_back(b);
    for (std::size_t b = 0; b < val.size(); ++b) (mu_va[b] <= tau ? s_va : f_va).push_back(b);
    const auto small = [](const std::vector<std::size_t>& v, double m) {
      return v.empty() || static_cast<double>(v.size()) < m;
    };
    if (small(s_tr, min_tr) || small(f_tr, min_tr) || small(s_va, min_va) || small(f_va, min_va)) {
      rep.skipped_taus.push_back(tau);
      continue;
    }
    Grid b_s("S", {-1.0, 1.0});
    Grid b_f("F", {-1.0, 1.0});
    try {
      b_s = lloyd_fit(train.select(s_tr), opts.k_levels, opts.train, opts.constraints);
      b_f = lloyd_fit(train.select(f_tr), opts.k_levels, opts.train, opts.constraints);
    } catch (const InsufficientDataError&) {
      rep.skipped_taus.push_back(tau);
      continue;
    }
    const auto opt_s = grid_losses(val, b_s, threads);
    const auto opt_f = grid_losses(val, b_f, threads);

    CompetitivePoint pt;
    pt.tau = tau;
    pt.p_spiky = static_cast<double>(s_va.size()) / static_cast<double>(val.size());
    pt.designated_S = majority(choice, s_tr, family.size());
    pt.designated_F = majority(choice, f_tr, family.size());
    double r_s, r_f;
    if (opts.class_risk == ClassRisk::PerBlockMin) {
      r_s = mean_of(family_val, s_va);
      r_f = mean_of(family_val, f_va);
    } else {
      r_s = mean_of(per_grid_val[pt.designated_S], s_va);
      r_f = mean_of(per_grid_val[pt.designated_F], f_va);
    }
    pt.alpha_S = r_s / mean_of(opt_s, s_va);
    pt.alpha_F = r_f / mean_of(opt_f, f_va);
    pt.beta = std::max(pt.alpha_S, pt.alpha_F);
    rep.sweep.push_back(pt);
    if (!have || pt.beta < rep.best.beta) {
      rep.best = pt;
      have = true;
    }
  }
  if (!have) throw InsufficientDataError("every tau produced an empty or undersized class");
  return rep;
}

GridLearner lloyd_learner(std::size_t k, TrainConfig cfg, LloydConstraints cons) {
  return [k, cfg, cons](const BlockPool& pool) -> Grid {
    std::set<double> distinct;
    for (std::size_t b = 0; b < pool.size() && distinct.size() <= k; ++b) {
      const double m = pool.absmax(b);
      if (m == 0.0) continue;
      for (double x : pool.block(b)) distinct.insert(cons.half ? std::abs(x) / m : x / m);
    }
    if (distinct.size() > k) return lloyd_fit(pool, k, cfg, cons);
    if (cons.half) distinct.insert(0.0);
    if (cons.half && cons.pin_max) distinct.insert(1.0);
    if (distinct.size() < 2) distinct.insert(cons.half ? 0.0 : -1.0);
    if (distinct.size() < 2) distinct.insert(1.0);
    return Grid("exact", std::vector<double>(distinct.begin(), distinct.end()), 1.0, cons.half);
  };
}

std::vector<GapPoint> asymptotic_gap(const DistributionSpec& spec, const AsymptoticOptions& opts) {
  if (!spec.bounded()) {
    throw ParameterError("asymptotic gap needs a bounded distribution (uniform or tnormal)");
  }
  LloydConstraints cons;
  cons.half = true;
  cons.pin_max = true;
  const GridLearner single = lloyd_learner(opts.k_levels, opts.train, cons);
  std::vector<GapPoint> out;
  for (std::size_t gi = 0; gi < opts.g_list.size(); ++gi) {
    const std::size_t g = opts.g_list[gi];
    if (g == 0) throw ParameterError("block size must be >= 1");
    const std::size_t n = std::max(opts.budget / g, opts.min_blocks);
    const BlockPool train = sample_pool(spec, g, n, derive_seed(opts.seed, 2 * g));
    const BlockPool val = sample_pool(spec, g, n, derive_seed(opts.seed, 2 * g + 1));

    const Grid b = single(train);
    std::vector<Grid> pair{b};
    try {
      PairOptions po;
      po.constraints = cons;
      const GridFamily fam = learn_residual_pair(b, false, train, opts.train, po);
      pair = fam.grids();
    } catch (const ResidualEmptyError&) {
    } catch (const InsufficientDataError&) {
    }
    const auto l_single = grid_losses(val, b, opts.train.threads);
    std::vector<double> l_pair = grid_losses(val, pair[0], opts.train.threads);
    for (std::size_t j = 1; j < pair.size(); ++j) {
      const auto l = grid_losses(val, pair[j], opts.train.threads);
      for (std::size_t i = 0; i < l.size(); ++i) l_pair[i] = std::min(l_pair[i], l[i]);
    }
    std::vector<double> diff(val.size());
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = l_single[i] - l_pair[i];
    const MeanStderr d = mean_stderr(diff);
    GapPoint pt;
    pt.g = g;
    pt.single_risk = compensated_sum(l_single) / static_cast<double>(val.size());
    pt.pair_risk = compensated_sum(l_pair) / static_cast<double>(val.size());
    pt.gap = d.mean;
    pt.stderr_ = d.stderr_;
    pt.n_val_blocks = val.size();
    out.push_back(pt);
  }
  return out;
}

ConcavityResult concavity_check(const BlockPool& train_S, const BlockPool& train_F,
                                const BlockPool& val_S, const BlockPool& val_F,
                                const GridLearner& learner, const std::vector<double>& p_grid,
                                std::uint64_t seed) {
  if (p_grid.empty()) throw ParameterError("p grid is empty");
  for (std::size_t i = 0; i < p_grid.size(); ++i) {
    if (!(p_grid[i] >= 0.0 && p_grid[i] <= 1.0)) throw ParameterError("p values must lie in [0, 1]");
    if (i > 0 && !(p_grid[i] > p_grid[i - 1])) throw ParameterError("p grid must be increasing");
  }
  if (train_S.g() != train_F.g() || val_S.g() != val_F.g() || train_S.g() != val_S.g()) {
    throw ShapeError("concavity pools must share the block size");
  }
  const std::size_t n = std::min(train_S.size(), train_F.size());
  if (n == 0 || val_S.empty() || val_F.empty()) throw InsufficientDataError("empty concavity pool");

  // Fixed shuffles so every p draws nested subsets.
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> perm_s(train_S.size()), perm_f(train_F.size());
  std::iota(perm_s.begin(), perm_s.end(), 0);
  std::iota(perm_f.begin(), perm_f.end(), 0);
  std::shuffle(perm_s.begin(), perm_s.end(), rng);
  std::shuffle(perm_f.begin(), perm_f.end(), rng);

  ConcavityResult res;
  for (double p : p_grid) {
    const auto ns = static_cast<std::size_t>(std::llround(p * static_cast<double>(n)));
    BlockPool mix(train_S.g());
    for (std::size_t i = 0; i < ns; ++i) mix.append_from(train_S, perm_s[i]);
    for (std::size_t i = 0; i < n - ns; ++i) mix.append_from(train_F, perm_f[i]);
    const Grid b = learner(mix);
    const auto ls = grid_losses(val_S, b, 1);
    const auto lf = grid_losses(val_F, b, 1);
    const MeanStderr ms = mean_stderr(ls);
    const MeanStderr mf = mean_stderr(lf);
    ConcavityRow row;
    row.p = p;
    row.value = p * ms.mean + (1.0 - p) * mf.mean;
    row.stderr_ = std::sqrt(p * p * ms.stderr_ * ms.stderr_ +
                            (1.0 - p) * (1.0 - p) * mf.stderr_ * mf.stderr_);
    res.rows.push_back(row);
  }
  for (std::size_t i = 1; i + 1 < res.rows.size(); ++i) {
    const auto& a = res.rows[i - 1];
    const auto& m = res.rows[i];
    const auto& c = res.rows[i + 1];
    const double t = (m.p - a.p) / (c.p - a.p);
    const double chord = (1.0 - t) * a.value + t * c.value;
    const double eps = 2.0 * std::max({a.stderr_, m.stderr_, c.stderr_});
    res.epsilon = std::max(res.epsilon, eps);
    if (m.value < chord - eps) {
      res.passed = false;
      res.violations.push_back(
          fmt::format("V({}) = {:.6g} below chord {:.6g} - eps {:.3g}", m.p, m.value, chord, eps));
    }
  }
  return res;
}

namespace {

struct TProfile {
  double loglik;
  double sigma2;
};

// EM fixed point for the scale at fixed nu, warm-started from sigma2.
TProfile profile_t(std::span<const double> x, double nu, double sigma2) {
  const auto n = static_cast<long double>(x.size());
  for (int it = 0; it < 1000; ++it) {
    long double acc = 0;
    for (double v : x) {
      const double v2 = v * v;
      acc += (nu + 1.0) * v2 / (nu + v2 / sigma2);
    }
    const double next = static_cast<double>(acc / n);
    const bool done = std::abs(next - sigma2) <= 1e-12 * sigma2;
    sigma2 = next;
    if (done) break;
  }
  long double s = 0;
  for (double v : x) s += std::log1p(v * v / (nu * sigma2));
  const double ll = static_cast<double>(
      n * (std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) - 0.5 * std::log(nu * M_PI) -
           0.5 * std::log(sigma2)) -
      0.5 * (nu + 1.0) * s);
  return {ll, sigma2};
}

}  // namespace

StudentTFit fit_student_t(std::span<const double> samples, const TFitOptions& opts) {
  if (samples.size() < 1000) throw InputError("Student-t fit needs at least 1000 samples");
  long double m2 = 0;
  for (double v : samples) {
    if (!std::isfinite(v)) throw InputError("non-finite sample in Student-t fit");
    m2 += static_cast<long double>(v) * v;
  }
  if (m2 == 0) throw InputError("all samples are zero");
  if (!(opts.nu_min > 0.0 && opts.nu_max > opts.nu_min) || opts.grid_points < 3) {
    throw ParameterError("bad nu search range");
  }
  // Median of squares gives a robust starting scale.
  std::vector<double> sq(samples.size());
  for (std::size_t i = 0; i < sq.size(); ++i) sq[i] = samples[i] * samples[i];
  std::nth_element(sq.begin(), sq.begin() + sq.size() / 2, sq.end());
  double sigma2 = std::max(sq[sq.size() / 2], 1e-300);

  const double lo = std::log(opts.nu_min);
  const double hi = std::log(opts.nu_max);
  const std::size_t k = opts.grid_points;
  std::vector<double> lognu(k), ll(k), s2(k);
  std::size_t best = 0;
  for (std::size_t i = 0; i < k; ++i) {
    lognu[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(k - 1);
    const TProfile p = profile_t(samples, std::exp(lognu[i]), sigma2);
    ll[i] = p.loglik;
    s2[i] = sigma2 = p.sigma2;
    if (ll[i] > ll[best]) best = i;
  }
  StudentTFit fit;
  if (best == k - 1 || best == 0) {
    fit.nu = std::exp(lognu[best]);
    fit.loglik = ll[best];
    fit.scale = std::sqrt(s2[best]);
    fit.at_upper_bound = best == k - 1;
    fit.at_lower_bound = best == 0;
    return fit;
  }
  // Golden section on log nu over the bracketing cells.
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = lognu[best - 1];
  double b = lognu[best + 1];
  double warm = s2[best];
  auto eval = [&](double t) {
    const TProfile p = profile_t(samples, std::exp(t), warm);
    warm = p.sigma2;
    return p;
  };
  double c = b - phi * (b - a);
  double d = a + phi * (b - a);
  TProfile fc = eval(c);
  TProfile fd = eval(d);
  while (b - a > 1e-6) {
    if (fc.loglik > fd.loglik) {
      b = d;
      d = c;
      fd = fc;
      c = b - phi * (b - a);
      fc = eval(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + phi * (b - a);
      fd = eval(d);
    }
  }
  const TProfile& win = fc.loglik > fd.loglik ? fc : fd;
  fit.nu = std::exp(fc.loglik > fd.loglik ? c : d);
  fit.loglik = win.loglik;
  fit.scale = std::sqrt(win.sigma2);
  return fit;
}

nlohmann::json to_json(const RiskEntry& e) {
  return {{"name", e.name}, {"mse_mean", e.mse_mean}, {"stderr", e.stderr_},
          {"n_blocks", e.n_blocks}, {"g", e.g}};
}

namespace {
nlohmann::json point_json(const CompetitivePoint& p) {
  return {{"tau", p.tau},         {"p_spiky", p.p_spiky},
          {"alpha_S", p.alpha_S}, {"alpha_F", p.alpha_F},
          {"beta", p.beta},       {"designated_S", p.designated_S},
          {"designated_F", p.designated_F}};
}
}  // namespace

nlohmann::json to_json(const CompetitiveReport& r) {
  nlohmann::json sweep = nlohmann::json::array();
  for (const auto& p : r.sweep) sweep.push_back(point_json(p));
  return {{"best", point_json(r.best)}, {"sweep", sweep}, {"skipped_taus", r.skipped_taus}};
}

nlohmann::json to_json(const GapPoint& p) {
  return {{"g", p.g},       {"single_risk", p.single_risk}, {"pair_risk", p.pair_risk},
          {"gap", p.gap},   {"stderr", p.stderr_},          {"n_val_blocks", p.n_val_blocks}};
}

nlohmann::json to_json(const ConcavityResult& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"p", row.p}, {"value", row.value}, {"stderr", row.stderr_}});
  }
  return {{"passed", r.passed}, {"epsilon", r.epsilon}, {"rows", rows},
          {"violations", r.violations}};
}

nlohmann::json to_json(const StudentTFit& f) {
  return {{"nu", f.nu},
          {"scale", f.scale},
          {"loglik", f.loglik},
          {"at_upper_bound", f.at_upper_bound},
          {"at_lower_bound", f.at_lower_bound}};
}

}  // namespace gridforge

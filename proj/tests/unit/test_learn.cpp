#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "gridforge/builtin.hpp"
#include "gridforge/error.hpp"
#include "gridforge/learn.hpp"
#include "gridforge/quant.hpp"
#include "gridforge/stats.hpp"
#include "oracles.hpp"

using namespace gridforge;

namespace {

struct Sample {
  double a, w;
};

std::vector<Sample> normalized_samples(const BlockPool& pool, WeightMode mode) {
  std::vector<Sample> out;
  for (std::size_t b = 0; b < pool.size(); ++b) {
    const double m = pool.absmax(b);
    if (m == 0.0) continue;
    for (double v : pool.block(b)) out.push_back({v / m, mode == WeightMode::Msquared ? m * m : 1.0});
  }
  return out;
}

double weighted_objective(const std::vector<Sample>& s, std::span<const double> levels, double denom) {
  double acc = 0.0;
  for (const auto& x : s) {
    const double q = oracle::nearest_value(x.a, levels);
    acc += x.w * (x.a - q) * (x.a - q);
  }
  return acc / denom;
}

// Textbook weighted Lloyd: O(n k) assignment, weighted centroids, no pins.
std::vector<double> naive_lloyd(const std::vector<Sample>& s, std::size_t k, int iters) {
  std::vector<double> a;
  for (const auto& x : s) a.push_back(x.a);
  std::sort(a.begin(), a.end());
  std::vector<double> lv(k);
  for (std::size_t j = 0; j < k; ++j) lv[j] = a[(2 * j + 1) * a.size() / (2 * k)];
  for (int it = 0; it < iters; ++it) {
    std::vector<double> num(k, 0.0), den(k, 0.0);
    for (const auto& x : s) {
      const std::size_t j = oracle::nearest_index(x.a, lv);
      num[j] += x.w * x.a;
      den[j] += x.w;
    }
    for (std::size_t j = 0; j < k; ++j) {
      if (den[j] > 0) lv[j] = num[j] / den[j];
    }
    std::sort(lv.begin(), lv.end());
  }
  return lv;
}

BlockPool lattice_pool(const std::vector<double>& levels, std::size_t g, std::size_t n, std::uint64_t seed) {
  // Every block holds an entry of magnitude 1 so normalization is the identity.
  std::mt19937_64 rng(seed);
  std::vector<double> v;
  for (std::size_t b = 0; b < n; ++b) {
    v.push_back(rng() % 2 ? 1.0 : -1.0);
    for (std::size_t i = 1; i < g; ++i) v.push_back(levels[rng() % levels.size()]);
  }
  return BlockPool(g, v);
}

BlockPool random_pool(std::mt19937_64& rng, std::size_t g, std::size_t n) {
  std::vector<double> v;
  for (std::size_t b = 0; b < n; ++b) {
    const auto x = oracle::random_block(rng, g);
    v.insert(v.end(), x.begin(), x.end());
  }
  return BlockPool(g, v);
}

}  // namespace

TEST_CASE("Lloyd objective is within 1% of a textbook weighted Lloyd") {
  const BlockPool pool = oracle::normal_pool(16, 2000, 21);
  for (WeightMode mode : {WeightMode::Msquared, WeightMode::Uniform}) {
    TrainConfig cfg;
    cfg.weight_mode = mode;
    cfg.max_iters = 500;
    LearnReport rep;
    const Grid g = lloyd_fit(pool, 16, cfg, {}, &rep);
    const auto s = normalized_samples(pool, mode);
    const double denom = static_cast<double>(pool.size() * pool.g());
    const double ours = weighted_objective(s, g.normalized(), denom);
    const double ref = weighted_objective(s, naive_lloyd(s, 16, 300), denom);
    CHECK(ours <= ref * 1.01);
    CHECK(ours == doctest::Approx(rep.objective_trace.back()).epsilon(1e-9));
  }
}

TEST_CASE("with M^2 weights the Lloyd objective is the mean block loss") {
  const BlockPool pool = oracle::normal_pool(16, 1000, 22);
  LearnReport rep;
  const Grid g = lloyd_fit(pool, 16, TrainConfig{}, {}, &rep);
  CHECK(estimate_risk(pool, GridFamily(g)).mse_mean == doctest::Approx(rep.objective_trace.back()).epsilon(1e-9));
}

TEST_CASE("property: Lloyd objective never increases") {
  std::mt19937_64 rng(23);
  for (int t = 0; t < 20; ++t) {
    const BlockPool pool = random_pool(rng, 8 + 8 * (rng() % 3), 200 + rng() % 400);
    LloydConstraints c;
    c.fixed_zero = rng() % 2;
    c.pin_min = c.pin_max = rng() % 2;
    TrainConfig cfg;
    cfg.weight_mode = rng() % 2 ? WeightMode::Msquared : WeightMode::Uniform;
    LearnReport rep;
    try {
      lloyd_fit(pool, 4 + rng() % 13, cfg, c, &rep);
    } catch (const InsufficientDataError&) {
      continue;
    }
    for (std::size_t i = 1; i < rep.objective_trace.size(); ++i) {
      CHECK(rep.objective_trace[i] <= rep.objective_trace[i - 1] + 1e-12);
    }
  }
}

TEST_CASE("property: reallocation never loses and keeps constraints") {
  std::mt19937_64 rng(25);
  for (int t = 0; t < 20; ++t) {
    const BlockPool pool = random_pool(rng, 8 + 8 * (rng() % 3), 200 + rng() % 400);
    LloydConstraints c;
    c.fixed_zero = rng() % 2;
    c.pin_min = c.pin_max = rng() % 2;
    const std::size_t k = 4 + rng() % 13;
    if (c.fixed_zero && rng() % 2) c.neg_pos_split = std::pair{static_cast<int>(k / 2), static_cast<int>(k - 1 - k / 2)};
    TrainConfig cfg;
    TrainConfig moved = cfg;
    moved.reallocate = true;
    LearnReport a, b;
    std::optional<Grid> better;
    try {
      lloyd_fit(pool, k, cfg, c, &a);
      better = lloyd_fit(pool, k, moved, c, &b);
    } catch (const InsufficientDataError&) {
      continue;
    }
    CHECK(b.objective_trace.back() <= a.objective_trace.back());
    for (std::size_t i = 1; i < b.objective_trace.size(); ++i) {
      CHECK(b.objective_trace[i] <= b.objective_trace[i - 1] + 1e-12);
    }
    REQUIRE(better->size() == k);
    const auto pts = better->points();
    if (c.fixed_zero) CHECK(std::binary_search(pts.begin(), pts.end(), 0.0));
    if (c.pin_max) CHECK(pts.back() == 1.0);
    if (c.neg_pos_split) {
      CHECK(std::count_if(pts.begin(), pts.end(), [](double x) { return x < 0; }) == c.neg_pos_split->first);
    }
  }
}

TEST_CASE("reallocation moves levels across a support gap") {
  // Mass near 0 and a thin band near +-0.85: quantile seeding starves the band
  // and Lloyd cannot carry levels over the empty stretch in between.
  std::mt19937_64 rng(26);
  std::normal_distribution<double> core(0.0, 0.05);
  std::uniform_real_distribution<double> band(0.7, 1.0);
  std::vector<double> v;
  for (int b = 0; b < 2000; ++b) {
    const bool spiky = b % 4 != 0;
    v.push_back(rng() % 2 ? 1.0 : -1.0);
    for (int i = 1; i < 16; ++i) v.push_back(spiky ? core(rng) : (rng() % 2 ? 1 : -1) * band(rng));
  }
  const BlockPool pool(16, v);
  TrainConfig moved;
  moved.reallocate = true;
  const auto s = normalized_samples(pool, WeightMode::Msquared);
  const double denom = static_cast<double>(pool.size() * pool.g());
  const double plain = weighted_objective(s, lloyd_fit(pool, 16, TrainConfig{}).normalized(), denom);
  const double better = weighted_objective(s, lloyd_fit(pool, 16, moved).normalized(), denom);
  CHECK(better < 0.9 * plain);
}

TEST_CASE("Lloyd recovers a grid the data already sits on") {
  const std::vector<double> levels{-1.0, -0.55, -0.2, 0.0, 0.3, 0.7, 1.0};
  const BlockPool pool = lattice_pool(levels, 8, 500, 24);
  LearnReport rep;
  const Grid g = lloyd_fit(pool, levels.size(), TrainConfig{}, {}, &rep);
  REQUIRE(g.size() == levels.size());
  for (std::size_t j = 0; j < levels.size(); ++j) CHECK(g.points()[j] == doctest::Approx(levels[j]).epsilon(1e-12));
  CHECK(rep.objective_trace.back() <= 1e-15);
  CHECK(rep.converged);
}

TEST_CASE("constraints are honored") {
  const BlockPool pool = oracle::normal_pool(16, 1000, 25);
  LloydConstraints c = LloydConstraints::endpoints();
  c.fixed_zero = true;
  const Grid g = lloyd_fit(pool, 16, TrainConfig{}, c);
  CHECK(g.points().front() == -1.0);
  CHECK(g.points().back() == 1.0);
  CHECK(g.has_exact_zero());

  LloydConstraints split;
  split.fixed_zero = true;
  split.neg_pos_split = std::pair{5, 10};
  const Grid s = lloyd_fit(pool, 16, TrainConfig{}, split);
  CHECK(std::count_if(s.points().begin(), s.points().end(), [](double p) { return p < 0; }) == 5);
  CHECK(std::count_if(s.points().begin(), s.points().end(), [](double p) { return p > 0; }) == 10);

  LloydConstraints half;
  half.half = true;
  half.pin_max = true;
  const Grid h = lloyd_fit(pool, 8, TrainConfig{}, half);
  CHECK(h.is_half());
  CHECK(h.points().front() == 0.0);
  CHECK(h.points().back() == 1.0);

  LloydConstraints bad;
  bad.neg_pos_split = std::pair{7, 8};
  CHECK_THROWS_AS(lloyd_fit(pool, 16, TrainConfig{}, bad), ParameterError);
}

TEST_CASE("too few distinct values") {
  const BlockPool pool = lattice_pool({-1.0, 0.0, 1.0}, 4, 50, 26);
  CHECK_THROWS_AS(lloyd_fit(pool, 16, TrainConfig{}), InsufficientDataError);
  CHECK_THROWS_AS(learn_split87(pool, TrainConfig{}), InsufficientDataError);
  CHECK_THROWS_AS(lloyd_fit(BlockPool(16), 4, TrainConfig{}), InsufficientDataError);
}

TEST_CASE("config validation") {
  TrainConfig c;
  c.residual_quantile = 1.5;
  CHECK_THROWS_AS(c.validate(), ParameterError);
  c = TrainConfig{};
  c.max_iters = 0;
  CHECK_THROWS_AS(c.validate(), ParameterError);
  CHECK(parse_weight_mode("uniform") == WeightMode::Uniform);
  CHECK_THROWS_AS(parse_weight_mode("cubic"), NameError);
}

TEST_CASE("Split87 shape") {
  const BlockPool pool = oracle::normal_pool(16, 2000, 27);
  LearnReport rep;
  const Grid g = learn_split87(pool, TrainConfig{}, true, &rep);
  REQUIRE(g.size() == 16);
  CHECK(std::count_if(g.points().begin(), g.points().end(), [](double p) { return p < 0; }) == 8);
  CHECK(std::count_if(g.points().begin(), g.points().end(), [](double p) { return p > 0; }) == 7);
  CHECK(g.points().front() == -1.0);
  CHECK(g.has_exact_zero());
  for (std::size_t i = 1; i < rep.objective_trace.size(); ++i) {
    CHECK(rep.objective_trace[i] <= rep.objective_trace[i - 1] + 1e-12);
  }
  const Grid m = learn_split87(pool, TrainConfig{}, false);
  CHECK(m.points().back() == 1.0);
  CHECK(std::count_if(m.points().begin(), m.points().end(), [](double p) { return p > 0; }) == 8);
}

TEST_CASE("Split87 is no worse than the unconstrained fit restricted to its shape") {
  // The coordinate-descent optimum must beat the built-in Split87 grid on
  // the distribution it was designed for.
  const BlockPool pool = oracle::normal_pool(16, 4000, 28);
  const Grid g = learn_split87(pool, TrainConfig{});
  CHECK(estimate_risk(pool, GridFamily(g)).mse_mean <=
        estimate_risk(pool, builtin_family("Split87")).mse_mean * 1.002);
}

TEST_CASE("BOF4-S learns (G, -G) and is invariant to flipping the pool") {
  const BlockPool pool = oracle::normal_pool(16, 2000, 29);
  std::vector<double> neg(pool.values().begin(), pool.values().end());
  for (double& v : neg) v = -v;
  const BlockPool flipped(16, neg);
  TrainConfig cfg;
  cfg.weight_mode = WeightMode::Uniform;
  const GridFamily a = learn_bof4s(pool, cfg);
  const GridFamily b = learn_bof4s(flipped, cfg);
  REQUIRE(a.size() == 2);
  CHECK(a.selector() == Selector::SignOfMaxMagnitude);
  CHECK(a.grid(0).points().back() == 1.0);
  for (std::size_t j = 0; j < a.grid(0).size(); ++j) {
    CHECK(a.grid(1).points()[j] == -a.grid(0).points()[a.grid(0).size() - 1 - j]);
    CHECK(a.grid(0).points()[j] == doctest::Approx(b.grid(0).points()[j]).epsilon(1e-12));
  }
}

TEST_CASE("residual pair learning") {
  const BlockPool pool = oracle::normal_pool(16, 3000, 30);
  const Grid nf4 = builtin_grid("NF4");
  LearnReport rep;
  const GridFamily pair = learn_residual_pair(nf4, true, pool, TrainConfig{}, {}, &rep);
  REQUIRE(pair.size() == 2);
  CHECK(std::equal(pair.grid(0).normalized().begin(), pair.grid(0).normalized().end(),
                   nf4.normalized().begin(), nf4.normalized().end()));
  for (std::size_t i = 1; i < rep.objective_trace.size(); ++i) {
    CHECK(rep.objective_trace[i] <= rep.objective_trace[i - 1] * (1 + 1e-9));
  }
  CHECK(rep.assignments_final.size() == pool.size());
  // The pair objective is the family risk on the training pool.
  CHECK(estimate_risk(pool, pair).mse_mean == doctest::Approx(rep.objective_trace.back()).epsilon(1e-9));
  CHECK(estimate_risk(pool, pair).mse_mean < estimate_risk(pool, GridFamily(nf4)).mse_mean);

  PairOptions snapped;
  snapped.snap = LowBitFormat::e4m3();
  const GridFamily s = learn_residual_pair(nf4, true, pool, TrainConfig{}, snapped);
  for (double p : s.grid(1).points()) CHECK(LowBitFormat::e4m3().round(p) == p);
}

TEST_CASE("residual pool must be nonempty") {
  // Every block equals the same lattice block, so every loss ties the threshold.
  std::vector<double> v;
  for (int b = 0; b < 100; ++b) v.insert(v.end(), {1.0, 0.5, -0.5, 0.25});
  const BlockPool pool(4, v);
  CHECK_THROWS_AS(learn_residual_pair(builtin_grid("NF4"), true, pool, TrainConfig{}), ResidualEmptyError);
}

TEST_CASE("learning is deterministic and thread-count independent") {
  const BlockPool pool = oracle::normal_pool(16, 2000, 31);
  TrainConfig one, four;
  four.threads = 4;
  const GridFamily a = learn_residual_pair(builtin_grid("Split87"), true, pool, one);
  const GridFamily b = learn_residual_pair(builtin_grid("Split87"), true, pool, four);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(std::equal(a.grid(i).points().begin(), a.grid(i).points().end(), b.grid(i).points().begin(),
                     b.grid(i).points().end()));
  }
}

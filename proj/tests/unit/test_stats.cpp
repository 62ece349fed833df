#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "gridforge/builtin.hpp"
#include "gridforge/error.hpp"
#include "gridforge/numeric.hpp"
#include "gridforge/quant.hpp"
#include "gridforge/stats.hpp"
#include "oracles.hpp"

using namespace gridforge;

namespace {

template <class Cdf>
double ks_distance(std::span<const double> xs, Cdf cdf) {
  std::vector<double> s(xs.begin(), xs.end());
  std::sort(s.begin(), s.end());
  const double n = static_cast<double>(s.size());
  double d = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double f = cdf(s[i]);
    d = std::max({d, std::abs(f - i / n), std::abs((i + 1) / n - f)});
  }
  return d;
}

// 0.1% critical value of the one-sample KS statistic.
double ks_critical(std::size_t n) { return 1.95 / std::sqrt(static_cast<double>(n)); }

}  // namespace

TEST_CASE("distribution names") {
  CHECK(DistributionSpec::parse("normal").kind == DistKind::Normal);
  const auto t = DistributionSpec::parse("t5");
  CHECK(t.kind == DistKind::StudentT);
  CHECK(t.nu == 5.0);
  CHECK_FALSE(t.standardized);
  CHECK(DistributionSpec::parse("t5s").standardized);
  CHECK(DistributionSpec::parse("tnormal2").bound == 2.0);
  CHECK(DistributionSpec::parse("t7").name() == "t7");
  CHECK_THROWS_AS(DistributionSpec::parse("cauchy"), NameError);
  CHECK_THROWS_AS(DistributionSpec::student_t(2.0, true).validate(), ParameterError);
}

TEST_CASE("samplers follow their distributions (KS test)") {
  const std::size_t n = 200000;
  const boost::math::normal_distribution<double> nd;
  {
    const BlockPool p = sample_pool(DistributionSpec::normal(), 16, n / 16, 1);
    CHECK(ks_distance(p.values(), [&](double x) { return cdf(nd, x); }) < ks_critical(n));
  }
  for (double nu : {5.0, 7.0, 10.0}) {
    const boost::math::students_t_distribution<double> td(nu);
    const BlockPool p = sample_pool(DistributionSpec::student_t(nu), 16, n / 16, 2);
    CHECK(ks_distance(p.values(), [&](double x) { return cdf(td, x); }) < ks_critical(n));
    const double sd = std::sqrt(nu / (nu - 2.0));
    const BlockPool s = sample_pool(DistributionSpec::student_t(nu, true), 16, n / 16, 3);
    CHECK(ks_distance(s.values(), [&](double x) { return cdf(td, x * sd); }) < ks_critical(n));
  }
  {
    const BlockPool p = sample_pool(DistributionSpec::uniform(), 16, n / 16, 4);
    CHECK(ks_distance(p.values(), [](double x) { return std::clamp(0.5 * (x + 1.0), 0.0, 1.0); }) <
          ks_critical(n));
  }
  {
    const double b = 1.5;
    const double z = cdf(nd, b) - cdf(nd, -b);
    const BlockPool p = sample_pool(DistributionSpec::truncated_normal(b), 16, n / 16, 5);
    CHECK(ks_distance(p.values(), [&](double x) { return (cdf(nd, std::clamp(x, -b, b)) - cdf(nd, -b)) / z; }) <
          ks_critical(n));
  }
}

TEST_CASE("standardized t5 has unit variance and excess kurtosis near 6") {
  const BlockPool p = sample_pool(DistributionSpec::student_t(5.0, true), 16, 500000, 6);
  double m2 = 0.0, m4 = 0.0;
  for (double x : p.values()) {
    m2 += x * x;
    m4 += x * x * x * x;
  }
  const double n = static_cast<double>(p.values().size());
  m2 /= n;
  m4 /= n;
  CHECK(m2 == doctest::Approx(1.0).epsilon(0.02));
  // The fourth-moment estimator of t5 converges slowly; only a coarse check.
  CHECK(m4 / (m2 * m2) - 3.0 == doctest::Approx(6.0).epsilon(0.35));
}

TEST_CASE("spiky and flat constructions") {
  const BlockPool s = sample_pool(DistributionSpec::parse("spiky"), 16, 2000, 7);
  for (std::size_t b = 0; b < s.size(); ++b) {
    const auto blk = s.block(b);
    CHECK(std::count_if(blk.begin(), blk.end(), [](double v) { return std::abs(v) == 1.0; }) == 1);
  }
  const BlockPool f = sample_pool(DistributionSpec::parse("flat"), 16, 2000, 8);
  for (double v : f.values()) {
    CHECK(std::abs(v) >= 0.7);
    CHECK(std::abs(v) <= 1.0);
  }
  CHECK(mu_statistic(s.block(0)) < 0.3);
  CHECK(mu_statistic(f.block(0)) > 0.7);
}

TEST_CASE("sampling is deterministic per seed") {
  const auto spec = DistributionSpec::student_t(5.0);
  const BlockPool a = sample_pool(spec, 16, 100, 9);
  const BlockPool b = sample_pool(spec, 16, 100, 9);
  const BlockPool c = sample_pool(spec, 16, 100, 10);
  CHECK(std::equal(a.values().begin(), a.values().end(), b.values().begin()));
  CHECK_FALSE(std::equal(a.values().begin(), a.values().end(), c.values().begin()));
  CHECK(derive_seed(1, 2) == derive_seed(1, 2));
  CHECK(derive_seed(1, 2) != derive_seed(1, 3));
}

TEST_CASE("risk estimates match per-block oracle losses") {
  const BlockPool p = sample_pool(DistributionSpec::normal(), 16, 3000, 11);
  const GridFamily fam = builtin_family("IF4");
  const RiskEntry r = estimate_risk(p, fam, {}, 3);
  std::vector<double> ref;
  for (std::size_t b = 0; b < p.size(); ++b) ref.push_back(oracle::family_block_mse(p.block(b), fam));
  double mean = 0.0;
  for (double v : ref) mean += v;
  mean /= static_cast<double>(ref.size());
  double var = 0.0;
  for (double v : ref) var += (v - mean) * (v - mean);
  var /= static_cast<double>(ref.size() - 1);
  CHECK(r.mse_mean == doctest::Approx(mean).epsilon(1e-12));
  CHECK(r.stderr_ == doctest::Approx(std::sqrt(var / ref.size())).epsilon(1e-9));
  CHECK(r.n_blocks == 3000);
  const auto losses = block_losses(p, fam, {}, 2);
  for (std::size_t b = 0; b < p.size(); ++b) CHECK(losses[b] == doctest::Approx(ref[b]).epsilon(1e-12));
  CHECK(estimate_risk(p, fam, {}, 1).mse_mean == r.mse_mean);
}

TEST_CASE("competitive analysis reports the sweep minimum") {
  CompetitiveOptions o;
  o.n_train = 3000;
  o.n_val = 3000;
  o.tau_grid = {0.2, 0.3, 0.35, 0.4, 0.5, 0.99};
  const CompetitiveReport r = competitive_analysis(DistributionSpec::normal(), builtin_family("IF4_SYM"), o);
  REQUIRE_FALSE(r.sweep.empty());
  CHECK(std::find(r.skipped_taus.begin(), r.skipped_taus.end(), 0.99) != r.skipped_taus.end());
  double best = INFINITY;
  for (const auto& pt : r.sweep) {
    CHECK(pt.beta == std::max(pt.alpha_S, pt.alpha_F));
    CHECK(pt.p_spiky > 0.0);
    CHECK(pt.p_spiky < 1.0);
    best = std::min(best, pt.beta);
  }
  CHECK(r.best.beta == best);
  CHECK(r.best.beta > 1.0);
  CHECK(to_json(r).contains("sweep"));
}

TEST_CASE("asymptotic gap on a small budget") {
  AsymptoticOptions o;
  o.g_list = {4, 64};
  o.budget = 1 << 15;
  o.min_blocks = 64;
  const auto pts = asymptotic_gap(DistributionSpec::uniform(), o);
  REQUIRE(pts.size() == 2);
  for (const auto& p : pts) {
    CHECK(p.gap == doctest::Approx(p.single_risk - p.pair_risk).epsilon(1e-12));
    CHECK(p.n_val_blocks >= 64);
    CHECK(p.stderr_ >= 0.0);
  }
  CHECK(pts[0].n_val_blocks == (1u << 15) / 4);
}

TEST_CASE("mixture risk of a fixed grid is linear, hence concave") {
  const BlockPool s = sample_pool(DistributionSpec::parse("spiky"), 16, 2000, 12);
  const BlockPool f = sample_pool(DistributionSpec::parse("flat"), 16, 2000, 13);
  const Grid nf4 = builtin_grid("NF4");
  const ConcavityResult r =
      concavity_check(s, f, s, f, [&](const BlockPool&) { return nf4; }, {0.0, 0.5, 1.0});
  REQUIRE(r.rows.size() == 3);
  CHECK(r.passed);
}

TEST_CASE("learned mixture risk is concave on a spiky/flat pair") {
  const auto S = DistributionSpec::parse("spiky");
  const auto F = DistributionSpec::parse("flat");
  TrainConfig realloc;
  realloc.reallocate = true;
  const ConcavityResult r = concavity_check(sample_pool(S, 16, 1500, 14), sample_pool(F, 16, 1500, 15),
                                            sample_pool(S, 16, 1500, 16), sample_pool(F, 16, 1500, 17),
                                            lloyd_learner(16, realloc), {0.0, 0.25, 0.5, 0.75, 1.0}, 3);
  CHECK(r.passed);
  CHECK(r.violations.empty());
  CHECK(r.rows.front().value > 0.0);
}

TEST_CASE("Student-t fit") {
  const BlockPool p = sample_pool(DistributionSpec::student_t(7.0), 1, 200000, 18);
  const StudentTFit fit = fit_student_t(p.values());
  CHECK(fit.nu == doctest::Approx(7.0).epsilon(0.15));
  CHECK(fit.scale == doctest::Approx(1.0).epsilon(0.02));
  CHECK_FALSE(fit.at_upper_bound);

  std::vector<double> scaled(p.values().begin(), p.values().end());
  for (double& v : scaled) v *= 0.01;
  const StudentTFit f2 = fit_student_t(scaled);
  CHECK(f2.nu == doctest::Approx(fit.nu).epsilon(1e-3));
  CHECK(f2.scale == doctest::Approx(0.01 * fit.scale).epsilon(1e-3));

  const BlockPool n = sample_pool(DistributionSpec::normal(), 1, 50000, 19);
  const StudentTFit fn = fit_student_t(n.values());
  CHECK(fn.nu > 30.0);

  CHECK_THROWS_AS(fit_student_t(std::vector<double>(10, 1.0)), InputError);
  std::vector<double> bad(p.values().begin(), p.values().begin() + 5000);
  bad[3] = NAN;
  CHECK_THROWS_AS(fit_student_t(bad), InputError);
}

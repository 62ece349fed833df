#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "gridforge/error.hpp"
#include "gridforge/format.hpp"
#include "oracles.hpp"

using namespace gridforge;

namespace {

// Bit-level decode written from the field layout alone.
double reference_decode(std::uint8_t code, int e, int m, int bias, bool is_signed) {
  const int mag = code & ((1 << (e + m)) - 1);
  const int exp = mag >> m;
  const int man = mag & ((1 << m) - 1);
  const double v = exp == 0 ? std::pow(2.0, 1 - bias) * (man / std::pow(2.0, m))
                            : std::pow(2.0, exp - bias) * (1.0 + man / std::pow(2.0, m));
  const bool neg = is_signed && ((code >> (e + m)) & 1);
  return neg ? -v : v;
}

struct Layout {
  LowBitFormat f;
  int e, m, bias;
  bool is_signed;
};

std::vector<Layout> layouts() {
  return {{LowBitFormat::e2m1(), 2, 1, 1, true},
          {LowBitFormat::e4m3(), 4, 3, 7, true},
          {LowBitFormat::e3m2(), 3, 2, 3, true},
          {LowBitFormat::e3m3u(), 3, 3, 3, false}};
}

}  // namespace

TEST_CASE("code counts and extremes") {
  CHECK(LowBitFormat::e2m1().code_count() == 16);
  CHECK(LowBitFormat::e4m3().code_count() == 256);
  CHECK(LowBitFormat::e3m2().code_count() == 64);
  CHECK(LowBitFormat::e3m3u().code_count() == 64);
  CHECK(LowBitFormat::e2m1().max_value() == 6.0);
  CHECK(LowBitFormat::e4m3().max_value() == 448.0);
  CHECK(LowBitFormat::e3m2().max_value() == 28.0);
  CHECK(LowBitFormat::e3m3u().max_value() == 30.0);
  CHECK(LowBitFormat::e3m3u().magnitudes()[1] == std::ldexp(1.0, -5));
  CHECK(LowBitFormat::e4m3().magnitudes()[1] == std::ldexp(1.0, -9));
}

TEST_CASE("E2M1 values are the NVFP4 table with one zero") {
  const std::vector<double> expect{-6, -4, -3, -2, -1.5, -1, -0.5, 0, 0.5, 1, 1.5, 2, 3, 4, 6};
  CHECK(LowBitFormat::e2m1().values() == expect);
}

TEST_CASE("every code decodes like the bit layout and round-trips") {
  for (const auto& l : layouts()) {
    CAPTURE(l.f.name());
    for (std::size_t c = 0; c < l.f.code_count(); ++c) {
      const auto code = static_cast<std::uint8_t>(c);
      if (l.f.is_nan_code(code)) {
        CHECK(std::isnan(l.f.decode(code)));
        continue;
      }
      const double v = l.f.decode(code);
      CHECK(v == reference_decode(code, l.e, l.m, l.bias, l.is_signed));
      const EncodeResult r = l.f.encode(v);
      CHECK(r.code == code);
      CHECK_FALSE(r.saturated);
    }
  }
}

TEST_CASE("E4M3 has exactly two NaN codes") {
  const auto f = LowBitFormat::e4m3();
  int nans = 0;
  for (int c = 0; c < 256; ++c) nans += f.is_nan_code(static_cast<std::uint8_t>(c)) ? 1 : 0;
  CHECK(nans == 2);
  CHECK(f.is_nan_code(0x7F));
  CHECK(f.is_nan_code(0xFF));
  CHECK(f.decode(0x7E) == 448.0);
}

TEST_CASE("encode matches brute-force nearest on random inputs") {
  std::mt19937_64 rng(7);
  for (const auto& l : layouts()) {
    CAPTURE(l.f.name());
    const auto vals = l.f.values();
    std::uniform_real_distribution<double> u(l.is_signed ? -1.2 * l.f.max_value() : 0.0,
                                             1.2 * l.f.max_value());
    for (int i = 0; i < 20000; ++i) {
      // Mix wide-range and near-zero inputs so subnormals get exercised.
      const double x = (i % 2 == 0) ? u(rng) : u(rng) * std::ldexp(1.0, -static_cast<int>(rng() % 12));
      const double got = l.f.round(x);
      const double want = oracle::nearest_value(x, vals);
      const double tol = 0.0;
      if (std::abs(std::abs(x - got) - std::abs(x - want)) > tol) {
        FAIL_CHECK("x=" << x << " got " << got << " want " << want);
      }
      CHECK(l.f.encode(x).saturated == (std::abs(x) > l.f.max_value()));
    }
  }
}

TEST_CASE("midpoints round to even mantissa") {
  const auto f = LowBitFormat::e2m1();
  CHECK(f.round(2.5) == 2.0);   // between 2 (m=0) and 3 (m=1)
  CHECK(f.round(3.5) == 4.0);   // between 3 (m=1) and 4 (m=0)
  CHECK(f.round(0.25) == 0.0);  // between 0 and the subnormal 0.5
  CHECK(f.round(-5.0) == -4.0);
  CHECK(f.round(1.25) == 1.0);
  CHECK(f.round(1.75) == 2.0);
}

TEST_CASE("saturation and signs") {
  const auto f = LowBitFormat::e4m3();
  CHECK(f.round(1e6) == 448.0);
  CHECK(f.encode(1e6).saturated);
  CHECK(f.round(-1e6) == -448.0);
  CHECK(std::signbit(f.round(-0.0)));
  CHECK_THROWS_AS(f.encode(std::nan("")), EncodingError);
  CHECK_THROWS_AS(LowBitFormat::e3m3u().encode(-1.0), EncodingError);
  CHECK(LowBitFormat::e3m3u().encode(-0.0).code == 0);
  CHECK_THROWS_AS(LowBitFormat::e2m1().decode(16), EncodingError);
  CHECK_THROWS_AS(LowBitFormat::e3m3u().decode(64), EncodingError);
}

TEST_CASE("parse is case-insensitive and rejects unknown names") {
  CHECK(LowBitFormat::parse("e4m3") == LowBitFormat::e4m3());
  CHECK(LowBitFormat::parse("E3M3u") == LowBitFormat::e3m3u());
  CHECK_THROWS_AS(LowBitFormat::parse("e5m2"), NameError);
}

TEST_CASE("property: rounding is idempotent and monotone") {
  std::mt19937_64 rng(11);
  for (const auto& l : layouts()) {
    std::uniform_real_distribution<double> u(l.is_signed ? -l.f.max_value() : 0.0, l.f.max_value());
    for (int i = 0; i < 5000; ++i) {
      double a = u(rng), b = u(rng);
      if (a > b) std::swap(a, b);
      CHECK(l.f.round(l.f.round(a)) == l.f.round(a));
      CHECK(l.f.round(a) <= l.f.round(b));
    }
  }
}

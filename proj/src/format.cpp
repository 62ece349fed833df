#include "gridforge/format.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>

#include "gridforge/error.hpp"

namespace gridforge {

LowBitFormat::LowBitFormat(FormatKind kind, int exp_bits, int man_bits, int bias,
                           bool is_signed, bool has_nan)
    : kind_(kind),
      exp_bits_(exp_bits),
      man_bits_(man_bits),
      bias_(bias),
      signed_(is_signed),
      has_nan_(has_nan) {
  const int mag_codes = 1 << (exp_bits_ + man_bits_);
  for (int c = 0; c < mag_codes; ++c) {
    const auto code = static_cast<std::uint8_t>(c);
    if (has_nan_ && c == mag_codes - 1) continue;
    magnitudes_.push_back(decode_magnitude(code));
    magnitude_codes_.push_back(code);
  }
  // Decoding is monotone in the magnitude code, so the table is sorted.
  max_value_ = magnitudes_.back();
}

LowBitFormat LowBitFormat::e2m1() { return {FormatKind::E2M1, 2, 1, 1, true, false}; }
LowBitFormat LowBitFormat::e4m3() { return {FormatKind::E4M3, 4, 3, 7, true, true}; }
LowBitFormat LowBitFormat::e3m2() { return {FormatKind::E3M2, 3, 2, 3, true, false}; }
LowBitFormat LowBitFormat::e3m3u() { return {FormatKind::E3M3u, 3, 3, 3, false, false}; }

LowBitFormat LowBitFormat::from_kind(FormatKind kind) {
  switch (kind) {
    case FormatKind::E2M1: return e2m1();
    case FormatKind::E4M3: return e4m3();
    case FormatKind::E3M2: return e3m2();
    case FormatKind::E3M3u: return e3m3u();
  }
  throw ParameterError("unknown format kind");
}

LowBitFormat LowBitFormat::parse(std::string_view name) {
  std::string up;
  for (char ch : name) up.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(ch))));
  if (up == "E2M1" || up == "FP4") return e2m1();
  if (up == "E4M3" || up == "FP8") return e4m3();
  if (up == "E3M2" || up == "FP6") return e3m2();
  if (up == "E3M3U" || up == "E3M3") return e3m3u();
  throw NameError("unknown low-bit format: " + std::string(name));
}

std::string LowBitFormat::name() const {
  switch (kind_) {
    case FormatKind::E2M1: return "E2M1";
    case FormatKind::E4M3: return "E4M3";
    case FormatKind::E3M2: return "E3M2";
    case FormatKind::E3M3u: return "E3M3u";
  }
  return "?";
}

double LowBitFormat::decode_magnitude(std::uint8_t magnitude_code) const noexcept {
  const int man_mask = (1 << man_bits_) - 1;
  const int exp = magnitude_code >> man_bits_;
  const int man = magnitude_code & man_mask;
  if (exp == 0) return std::ldexp(static_cast<double>(man), 1 - bias_ - man_bits_);
  return std::ldexp(static_cast<double>((1 << man_bits_) + man), exp - bias_ - man_bits_);
}

bool LowBitFormat::is_nan_code(std::uint8_t code) const noexcept {
  if (!has_nan_) return false;
  const int mag_mask = (1 << (exp_bits_ + man_bits_)) - 1;
  return (code & mag_mask) == mag_mask;
}

double LowBitFormat::decode(std::uint8_t code) const {
  if (static_cast<std::size_t>(code) >= code_count()) {
    throw EncodingError("code " + std::to_string(code) + " exceeds " + name() + " width");
  }
  if (is_nan_code(code)) return std::numeric_limits<double>::quiet_NaN();
  const int mag_bits = exp_bits_ + man_bits_;
  const auto mag = static_cast<std::uint8_t>(code & ((1 << mag_bits) - 1));
  const double v = decode_magnitude(mag);
  const bool negative = signed_ && ((code >> mag_bits) & 1);
  return negative ? -v : v;
}

EncodeResult LowBitFormat::encode(double x) const {
  if (std::isnan(x)) throw EncodingError(name() + ": cannot encode NaN");
  const bool negative = std::signbit(x);
  if (negative && !signed_ && x != 0.0) {
    throw EncodingError(name() + ": negative value " + std::to_string(x) +
                        " in unsigned format");
  }
  const double mag = std::abs(x);
  EncodeResult out;
  std::size_t idx;
  if (mag >= max_value_) {
    idx = magnitudes_.size() - 1;
    out.saturated = mag > max_value_;
  } else {
    const auto it = std::upper_bound(magnitudes_.begin(), magnitudes_.end(), mag);
    const std::size_t hi = static_cast<std::size_t>(it - magnitudes_.begin());
    const std::size_t lo = hi - 1;  // magnitudes_[0] == 0 <= mag
    const double dlo = mag - magnitudes_[lo];
    const double dhi = magnitudes_[hi] - mag;
    if (dlo < dhi) {
      idx = lo;
    } else if (dhi < dlo) {
      idx = hi;
    } else {
      idx = (magnitude_codes_[lo] & 1) == 0 ? lo : hi;
    }
  }
  out.code = magnitude_codes_[idx];
  if (signed_ && negative) out.code |= static_cast<std::uint8_t>(1u << (exp_bits_ + man_bits_));
  return out;
}

std::vector<double> LowBitFormat::values() const {
  std::vector<double> out;
  if (signed_) {
    for (auto it = magnitudes_.rbegin(); it != magnitudes_.rend(); ++it) {
      if (*it != 0.0) out.push_back(-*it);
    }
  }
  out.insert(out.end(), magnitudes_.begin(), magnitudes_.end());
  return out;
}

}  // namespace gridforge

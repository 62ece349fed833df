#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace gridforge {

enum class FormatKind { E2M1, E4M3, E3M2, E3M3u };

struct EncodeResult {
  std::uint8_t code = 0;
  bool saturated = false;  // |x| exceeded the largest finite value
};

/// A minifloat format of at most 8 bits. Codes are laid out as
/// [sign][exponent][mantissa] (no sign bit for unsigned formats). Exponent
/// field zero encodes subnormals. E4M3 follows the OCP "FN" convention: the
/// all-ones exponent is a normal binade and only S.1111.111 is NaN. The other
/// formats have no NaN or infinity.
///
/// E3M3u is the 6-bit SFP4 scale magnitude: unsigned, bias 3, subnormals,
/// covering [2^-5, 30].
class LowBitFormat {
 public:
  static LowBitFormat e2m1();
  static LowBitFormat e4m3();
  static LowBitFormat e3m2();
  static LowBitFormat e3m3u();
  static LowBitFormat from_kind(FormatKind kind);
  /// Accepts "E2M1", "E4M3", "E3M2", "E3M3u" (case-insensitive).
  static LowBitFormat parse(std::string_view name);

  FormatKind kind() const noexcept { return kind_; }
  int bias() const noexcept { return bias_; }
  bool is_signed() const noexcept { return signed_; }
  int exponent_bits() const noexcept { return exp_bits_; }
  int mantissa_bits() const noexcept { return man_bits_; }
  int width() const noexcept { return (signed_ ? 1 : 0) + exp_bits_ + man_bits_; }
  std::size_t code_count() const noexcept { return std::size_t{1} << width(); }
  std::string name() const;

  bool is_nan_code(std::uint8_t code) const noexcept;
  double max_value() const noexcept { return max_value_; }

  /// Throws EncodingError for codes outside the format width.
  double decode(std::uint8_t code) const;

  /// Nearest representable value, ties to even mantissa, saturating above the
  /// largest finite value. NaN throws EncodingError; negative input to an
  /// unsigned format throws EncodingError.
  EncodeResult encode(double x) const;

  double round(double x) const { return decode(encode(x).code); }

  /// All finite non-negative representable magnitudes, ascending and unique.
  std::span<const double> magnitudes() const noexcept { return magnitudes_; }

  /// Every finite representable value (both signs for signed formats),
  /// ascending and unique (a single zero).
  std::vector<double> values() const;

  friend bool operator==(const LowBitFormat& a, const LowBitFormat& b) noexcept {
    return a.kind_ == b.kind_;
  }

 private:
  LowBitFormat(FormatKind kind, int exp_bits, int man_bits, int bias, bool is_signed,
               bool has_nan);
  double decode_magnitude(std::uint8_t magnitude_code) const noexcept;

  FormatKind kind_;
  int exp_bits_;
  int man_bits_;
  int bias_;
  bool signed_;
  bool has_nan_;
  double max_value_ = 0.0;
  std::vector<double> magnitudes_;
  std::vector<std::uint8_t> magnitude_codes_;  // parallel to magnitudes_
};

}  // namespace gridforge

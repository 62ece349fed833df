#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace gridforge {

enum class SourceTag : std::uint8_t { Weight = 0, Activation = 1, Synthetic = 2 };

std::string tag_name(SourceTag tag);
SourceTag parse_tag(std::string_view s);

/// Contiguous storage of fixed-size blocks with a per-block absmax cache and
/// provenance tag. Immutable once built except through append().
class BlockPool {
 public:
  explicit BlockPool(std::size_t g);
  /// Splits `values` into consecutive blocks of g; values.size() must be a
  /// multiple of g. Throws InputError on NaN/Inf (message carries the offset).
  BlockPool(std::size_t g, std::vector<double> values, SourceTag tag = SourceTag::Synthetic);

  std::size_t g() const noexcept { return g_; }
  std::size_t size() const noexcept { return absmax_.size(); }
  bool empty() const noexcept { return absmax_.empty(); }

  std::span<const double> block(std::size_t i) const noexcept {
    return {values_.data() + i * g_, g_};
  }
  double absmax(std::size_t i) const noexcept { return absmax_[i]; }
  SourceTag tag(std::size_t i) const noexcept { return tags_[i]; }
  std::span<const double> values() const noexcept { return values_; }
  std::span<const double> absmaxes() const noexcept { return absmax_; }
  std::span<const SourceTag> tags() const noexcept { return tags_; }

  void append(std::span<const double> block, SourceTag tag);
  void append_from(const BlockPool& other, std::size_t i);

  /// New pool holding the listed blocks in the given order.
  BlockPool select(std::span<const std::size_t> indices) const;
  /// Blocks [begin, end).
  BlockPool slice(std::size_t begin, std::size_t end) const;

 private:
  std::size_t g_;
  std::vector<double> values_;
  std::vector<double> absmax_;
  std::vector<SourceTag> tags_;
};

}  // namespace gridforge

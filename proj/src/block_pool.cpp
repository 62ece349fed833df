#include "gridforge/block_pool.hpp"

#include <cmath>

#include "gridforge/error.hpp"

namespace gridforge {

std::string tag_name(SourceTag tag) {
  switch (tag) {
    case SourceTag::Weight: return "weight";
    case SourceTag::Activation: return "activation";
    case SourceTag::Synthetic: return "synthetic";
  }
  return "?";
}

SourceTag parse_tag(std::string_view s) {
  if (s == "weight") return SourceTag::Weight;
  if (s == "activation") return SourceTag::Activation;
  if (s == "synthetic") return SourceTag::Synthetic;
  throw NameError("unknown source tag: " + std::string(s));
}

BlockPool::BlockPool(std::size_t g) : g_(g) {
  if (g_ == 0) throw ParameterError("block size must be >= 1");
}

BlockPool::BlockPool(std::size_t g, std::vector<double> values, SourceTag tag) : BlockPool(g) {
  if (values.size() % g_ != 0) {
    throw InputError("value count " + std::to_string(values.size()) +
                     " is not a multiple of block size " + std::to_string(g_));
  }
  values_ = std::move(values);
  const std::size_t n = values_.size() / g_;
  absmax_.resize(n);
  tags_.assign(n, tag);
  for (std::size_t b = 0; b < n; ++b) {
    double m = 0.0;
    for (std::size_t i = 0; i < g_; ++i) {
      const double v = values_[b * g_ + i];
      if (!std::isfinite(v)) {
        throw InputError("non-finite value at element offset " + std::to_string(b * g_ + i));
      }
      m = std::max(m, std::abs(v));
    }
    absmax_[b] = m;
  }
}

void BlockPool::append(std::span<const double> block, SourceTag tag) {
  if (block.size() != g_) throw ParameterError("block length does not match pool block size");
  double m = 0.0;
  for (double v : block) {
    if (!std::isfinite(v)) {
      throw InputError("non-finite value in appended block " + std::to_string(size()));
    }
    m = std::max(m, std::abs(v));
  }
  values_.insert(values_.end(), block.begin(), block.end());
  absmax_.push_back(m);
  tags_.push_back(tag);
}

void BlockPool::append_from(const BlockPool& other, std::size_t i) {
  if (other.g_ != g_) throw ParameterError("block size mismatch between pools");
  const auto b = other.block(i);
  values_.insert(values_.end(), b.begin(), b.end());
  absmax_.push_back(other.absmax_[i]);
  tags_.push_back(other.tags_[i]);
}

BlockPool BlockPool::select(std::span<const std::size_t> indices) const {
  BlockPool out(g_);
  out.values_.reserve(indices.size() * g_);
  out.absmax_.reserve(indices.size());
  out.tags_.reserve(indices.size());
  for (std::size_t i : indices) out.append_from(*this, i);
  return out;
}

BlockPool BlockPool::slice(std::size_t begin, std::size_t end) const {
  BlockPool out(g_);
  end = std::min(end, size());
  for (std::size_t i = begin; i < end; ++i) out.append_from(*this, i);
  return out;
}

}  // namespace gridforge

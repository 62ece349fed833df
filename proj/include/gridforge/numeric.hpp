#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>

namespace gridforge {

/// Neumaier-compensated accumulator. Summation order is the caller's; the
/// result is independent of how work was split across threads as long as the
/// inputs are fed in the same order.
class CompensatedSum {
 public:
  void add(double x) noexcept {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

/// Independent seed for a sub-stream of an experiment seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

double compensated_sum(std::span<const double> xs) noexcept;

struct MeanStderr {
  double mean = 0.0;
  double stderr_ = 0.0;  // sample std / sqrt(n)
  std::size_t n = 0;
};

/// Mean and standard error with compensated accumulation, in input order.
MeanStderr mean_stderr(std::span<const double> xs) noexcept;

/// Runs fn(begin, end) over contiguous chunks of [0, n). With threads <= 1 the
/// call is inline. Chunk boundaries depend only on n and threads.
void parallel_for(std::size_t n, int threads,
                  const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace gridforge

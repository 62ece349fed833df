#include "gridforge/numeric.hpp"

#include <algorithm>
#include <exception>
#include <random>
#include <thread>
#include <vector>

namespace gridforge {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

double compensated_sum(std::span<const double> xs) noexcept {
  CompensatedSum acc;
  for (double x : xs) acc.add(x);
  return acc.value();
}

MeanStderr mean_stderr(std::span<const double> xs) noexcept {
  MeanStderr out;
  out.n = xs.size();
  if (xs.empty()) return out;
  out.mean = compensated_sum(xs) / static_cast<double>(xs.size());
  if (xs.size() < 2) return out;
  CompensatedSum ss;
  for (double x : xs) {
    const double d = x - out.mean;
    ss.add(d * d);
  }
  const double var = ss.value() / static_cast<double>(xs.size() - 1);
  out.stderr_ = std::sqrt(var / static_cast<double>(xs.size()));
  return out;
}

void parallel_for(std::size_t n, int threads,
                  const std::function<void(std::size_t, std::size_t)>& fn) {
  if (n == 0) return;
  const std::size_t workers =
      std::min<std::size_t>(threads > 1 ? static_cast<std::size_t>(threads) : 1, n);
  if (workers == 1) {
    fn(0, n);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&, w, begin, end] {
      try {
        fn(begin, end);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace gridforge

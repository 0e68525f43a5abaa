#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace mtem {

// Runs body(begin, end, chunk) over `chunks` contiguous slices of [0, count)
// on up to `workers` threads. Slice boundaries depend only on (count, chunks),
// never on the worker count, so callers that write into pre-indexed buffers
// get identical results for any thread count. The first exception thrown by
// any slice is rethrown on the calling thread.
template <class Body>
void parallel_chunks(std::size_t count, std::size_t chunks, unsigned workers, Body&& body) {
  chunks = std::max<std::size_t>(1, std::min(chunks, count));
  const auto slice = [&](std::size_t c) {
    return std::pair{count * c / chunks, count * (c + 1) / chunks};
  };
  if (workers <= 1 || chunks == 1) {
    for (std::size_t c = 0; c < chunks; ++c) {
      auto [b, e] = slice(c);
      body(b, e, c);
    }
    return;
  }
  std::mutex mu;
  std::exception_ptr failure;
  std::size_t next = 0;
  auto worker = [&] {
    for (;;) {
      std::size_t c;
      {
        std::lock_guard lock(mu);
        if (next >= chunks || failure) return;
        c = next++;
      }
      try {
        auto [b, e] = slice(c);
        body(b, e, c);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::jthread> pool;
  const unsigned n = static_cast<unsigned>(std::min<std::size_t>(workers, chunks));
  pool.reserve(n);
  for (unsigned i = 0; i < n; ++i) pool.emplace_back(worker);
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

// Compensated (Kahan-Babuska/Neumaier) accumulator.
class KahanSum {
 public:
  void add(double x) noexcept {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

}  // namespace mtem

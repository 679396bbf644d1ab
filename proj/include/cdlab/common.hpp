#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace cdlab {

using cplx = std::complex<double>;

// Input outside the mathematical domain of an operation: points at or beyond
// the evaluation radius, invalid atom/frame parameters, malformed configs.
class domain_error : public std::invalid_argument {
 public:
  explicit domain_error(const std::string& what) : std::invalid_argument(what) {}
};

// Numerical failure of an otherwise well-posed evaluation: ill-conditioned
// Gram, rank-deficient frame, truncation too short for the requested point.
class evaluation_error : public std::runtime_error {
 public:
  explicit evaluation_error(const std::string& what) : std::runtime_error(what) {}
};

inline bool is_finite(cplx z) {
  return std::isfinite(z.real()) && std::isfinite(z.imag());
}

inline unsigned thread_budget() {
  if (const char* env = std::getenv("CDLAB_THREADS")) {
    long n = std::strtol(env, nullptr, 10);
    if (n >= 1 && n <= 256) return static_cast<unsigned>(n);
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

// Static block partition over [0, count). Each index writes only its own
// output slot, so results do not depend on the thread count. The first
// exception thrown by a worker is rethrown after all threads join.
template <class Fn>
void parallel_for(std::size_t count, Fn&& fn) {
  unsigned workers = thread_budget();
  if (workers <= 1 || count < 2) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, count));
  std::size_t chunk = (count + workers - 1) / workers;
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned t = 0; t < workers; ++t) {
    std::size_t lo = t * chunk;
    std::size_t hi = std::min(count, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn, &first_error, &error_mutex] {
      try {
        for (std::size_t i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

// Two-level Richardson extrapolation of an O(h^2) central-difference value:
// combines evaluations at h, h/2, h/4 into an O(h^6) estimate. T must support
// scalar multiplication and subtraction (doubles and Eigen matrices both do).
template <class Eval>
auto richardson(Eval&& eval, double h) {
  auto a0 = eval(h);
  auto a1 = eval(h / 2);
  auto a2 = eval(h / 4);
  // decltype(a0) pins the concrete type so Eigen expressions are materialized
  // before the temporaries they reference go out of scope.
  decltype(a0) b0 = (4.0 * a1 - a0) / 3.0;
  decltype(a0) b1 = (4.0 * a2 - a1) / 3.0;
  decltype(a0) out = (16.0 * b1 - b0) / 15.0;
  return out;
}

}  // namespace cdlab

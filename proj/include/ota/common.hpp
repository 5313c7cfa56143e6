#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace ota {

// ---- error types --------------------------------------------------------

// Shape / dimension mismatches between tensors, nets and point sets.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Cost gradient requested at a point where it is undefined
// (euclidean at x==y, psnr at zero MSE).
struct SingularCostError : std::domain_error {
  using std::domain_error::domain_error;
};

// A cached potential table is out of date with respect to the
// assigner weights that must have produced it.
struct StaleCacheError : std::logic_error {
  using std::logic_error::logic_error;
};

// Nonfinite values where finite ones are required (losses, gradients).
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// File format / config parse failures.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Exact solver: instance exceeds the documented budget or did not certify.
struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---- rng ----------------------------------------------------------------
//
// All randomness flows through mt19937_64 (whose output stream is fixed by
// the standard) plus hand-written uniform/normal transforms, so a seed pins
// every draw exactly. std::*_distribution is avoided on purpose: its output
// is implementation-defined.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Stable sub-seed for a named stream (net init, latents, shuffle, ...).
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view tag) {
  std::uint64_t h = 1469598103934665603ULL;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return splitmix64(master ^ h);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // uniform in [0, 1)
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // index in [0, n)
  std::size_t index(std::size_t n) {
    // rejection-free modulo is fine here; n is tiny relative to 2^64
    return static_cast<std::size_t>(engine_() % n);
  }

  // standard normal, Box-Muller with a cached second value
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[index(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// ---- parallel_for -------------------------------------------------------
//
// Row-level fan-out used by batch assignment and the batched net passes.
// Every index is written by exactly one worker and no floating-point
// reduction crosses a thread boundary, so results are bit-identical for
// any thread count.

inline unsigned default_thread_count() {
  if (const char* env = std::getenv("OTASSIGN_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1 && v <= 256) return static_cast<unsigned>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn, unsigned threads = 0) {
  if (threads == 0) threads = default_thread_count();
  if (threads <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const unsigned use = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  std::vector<std::thread> pool;
  pool.reserve(use);
  const std::size_t chunk = (n + use - 1) / use;
  for (unsigned t = 0; t < use; ++t) {
    const std::size_t lo = t * chunk;
    const std::size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

inline bool all_finite(const std::vector<double>& v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace ota

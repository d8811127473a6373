#pragma once

// Seeded randomness. Generator: std::mt19937_64 (fully specified by the
// standard). Uniforms are built from the top 53 bits so streams are identical
// across standard libraries. Per-record seeds come from a counter-based
// SplitMix64 mix of the master seed ("seed scheme v1").

#include <cstdint>
#include <initializer_list>
#include <random>

namespace qpdn {

using Rng = std::mt19937_64;

inline constexpr int kSeedSchemeVersion = 1;

std::uint64_t splitmix64(std::uint64_t x);

/// Seed for stream `counters...` under `master`: folds each counter through SplitMix64.
std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> counters);

/// Uniform double in [0, 1).
double uniform01(Rng& rng);

/// Uniform double in [lo, hi).
inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

/// Uniform index in [0, n) by rejection, no modulo bias.
std::uint64_t uniform_index(Rng& rng, std::uint64_t n);

/// Exact Poisson sampler: sequential-search inversion for mean < 10,
/// transformed rejection (PTRS, Hormann 1993) above.
class PoissonSampler {
 public:
  explicit PoissonSampler(double mean);
  long long operator()(Rng& rng) const;
  double mean() const noexcept { return mean_; }

 private:
  double mean_;
  double exp_neg_mean_ = 0.0;
  double log_mean_ = 0.0;
  double a_ = 0.0, b_ = 0.0, inv_alpha_ = 0.0, vr_ = 0.0;
};

/// Stirling-series log(k!) used by the rejection step.
double log_factorial(long long k);

/// Deterministic Fisher-Yates shuffle driven by `uniform_index`.
template <typename It>
void shuffle(It first, It last, Rng& rng) {
  const auto n = static_cast<std::uint64_t>(last - first);
  for (std::uint64_t i = n; i > 1; --i) {
    const auto j = uniform_index(rng, i);
    std::iter_swap(first + (i - 1), first + j);
  }
}

}  // namespace qpdn

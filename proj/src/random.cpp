#include "qpdn/random.hpp"

#include <cmath>
#include <stdexcept>

namespace qpdn {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> counters) {
  std::uint64_t s = splitmix64(master);
  for (const auto c : counters) s = splitmix64(s ^ splitmix64(c + 0x632be59bd9b4e019ULL));
  return s;
}

double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("uniform_index: empty range");
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

double log_factorial(long long k) {
  if (k < 0) throw std::invalid_argument("log_factorial: negative argument");
  if (k < 2) return 0.0;
  static constexpr double a[10] = {8.333333333333333e-02,  -2.777777777777778e-03, 7.936507936507937e-04,
                                   -5.952380952380952e-04, 8.417508417508418e-04,  -1.917526917526918e-03,
                                   6.410256410256410e-03,  -2.955065359477124e-02, 1.796443723688307e-01,
                                   -1.39243221690590e+00};
  // log Gamma(k + 1), shifted up to x >= 7 for the asymptotic series.
  double x = static_cast<double>(k) + 1.0;
  double shift = 0.0;
  while (x < 7.0) {
    shift += std::log(x);
    x += 1.0;
  }
  const double x2 = 1.0 / (x * x);
  double series = a[9];
  for (int i = 8; i >= 0; --i) series = series * x2 + a[i];
  const double lg = series / x + 0.5 * std::log(2.0 * M_PI) + (x - 0.5) * std::log(x) - x;
  return lg - shift;
}

PoissonSampler::PoissonSampler(double mean) : mean_(mean) {
  if (!(mean >= 0.0) || !std::isfinite(mean)) throw std::invalid_argument("Poisson mean must be finite and >= 0");
  if (mean < 10.0) {
    exp_neg_mean_ = std::exp(-mean);
  } else {
    const double root = std::sqrt(mean);
    log_mean_ = std::log(mean);
    b_ = 0.931 + 2.53 * root;
    a_ = -0.059 + 0.02483 * b_;
    inv_alpha_ = 1.1239 + 1.1328 / (b_ - 3.4);
    vr_ = 0.9277 - 3.6224 / (b_ - 2.0);
  }
}

long long PoissonSampler::operator()(Rng& rng) const {
  if (mean_ == 0.0) return 0;
  if (mean_ < 10.0) {
    long long k = 0;
    double p = exp_neg_mean_;
    double cdf = p;
    const double u = uniform01(rng);
    while (u > cdf) {
      ++k;
      p *= mean_ / static_cast<double>(k);
      const double next = cdf + p;
      if (next == cdf) break;  // tail exhausted in double precision
      cdf = next;
    }
    return k;
  }
  while (true) {
    const double u = uniform01(rng) - 0.5;
    const double v = uniform01(rng);
    const double us = 0.5 - std::fabs(u);
    const auto k = static_cast<long long>(std::floor((2.0 * a_ / us + b_) * u + mean_ + 0.43));
    if (us >= 0.07 && v <= vr_) return k;
    if (k < 0 || (us < 0.013 && v > us)) continue;
    if (std::log(v) + std::log(inv_alpha_) - std::log(a_ / (us * us) + b_) <=
        -mean_ + static_cast<double>(k) * log_mean_ - log_factorial(k)) {
      return k;
    }
  }
}

}  // namespace qpdn

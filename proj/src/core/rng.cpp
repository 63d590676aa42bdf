#include "core/rng.hpp"

#include <cmath>
#include <stdexcept>

#include "core/special.hpp"

namespace stratpart {

namespace {

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ull;

std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xbf58476d1ce4e5b9ull;
  z ^= z >> 27;
  z *= 0x94d049bb133111ebull;
  z ^= z >> 31;
  return z;
}

}  // namespace

RandomStream::RandomStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id) {
  base_ = mix64(seed + kGolden) ^ mix64(mix64(stream_id + 0x5851f42d4c957f2dull));
}

std::uint64_t RandomStream::next_u64() { return mix64(base_ + (++n_) * kGolden); }

double RandomStream::next_uniform() {
  return (static_cast<double>(next_u64() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
}

double RandomStream::next_normal() { return std_normal_quantile(next_uniform()); }

// Marsaglia-Tsang; shape < 1 boosted through shape + 1
double RandomStream::next_gamma(double shape) {
  if (shape <= 0.0) throw std::invalid_argument("next_gamma: shape must be positive");
  if (shape < 1.0) {
    double u = next_uniform();
    return next_gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
  }
  double d = shape - 1.0 / 3.0;
  double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = next_normal();
    double t = 1.0 + c * x;
    if (t <= 0.0) continue;
    double v = t * t * t;
    double u = next_uniform();
    double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
    if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
  }
}

double RandomStream::next_beta(double a, double b) {
  double x = next_gamma(a);
  double y = next_gamma(b);
  return x / (x + y);
}

int RandomStream::next_bernoulli(double p) { return next_uniform() < p ? 1 : 0; }

int RandomStream::next_categorical(const double* weights, int k) {
  if (k <= 0) throw std::invalid_argument("next_categorical: k must be positive");
  double total = 0.0;
  for (int i = 0; i < k; ++i) total += weights[i];
  double u = next_uniform() * total;
  double cum = 0.0;
  for (int i = 0; i < k; ++i) {
    cum += weights[i];
    if (u < cum) return i;
  }
  return k - 1;
}

}  // namespace stratpart

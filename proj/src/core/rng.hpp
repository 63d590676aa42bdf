#pragma once

#include <cstdint>

namespace stratpart {

// Counter-based stream: draw n of stream (seed, id) is a pure hash of (seed, id, n),
// so replication r can always consume stream (seed, r) regardless of execution order.
class RandomStream {
 public:
  RandomStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t next_u64();
  double next_uniform();  // open interval (0,1)
  double next_normal();
  double next_gamma(double shape);  // unit scale
  double next_beta(double a, double b);
  int next_bernoulli(double p);
  int next_categorical(const double* weights, int k);  // weights need not be normalized

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

 private:
  std::uint64_t seed_, stream_id_, base_, n_ = 0;
};

}  // namespace stratpart

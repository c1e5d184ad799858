#pragma once

#include <cstdint>

namespace cashbench {

// Philox4x32-10 counter-based generator.  A (seed, stream) pair names an
// independent sequence, so parallel tasks draw reproducible numbers no
// matter how they are scheduled; jump-ahead is a counter assignment.
class Philox {
 public:
  explicit Philox(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint32_t next_u32();
  std::uint64_t next_u64();

  // Uniform on [0,1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  // Integer uniform on [0, n), n >= 1. Rejection-free modulo is fine here:
  // n is tiny relative to 2^64 in every use.
  std::uint64_t uniform_int(std::uint64_t n);
  bool bernoulli(double p);
  // Standard normal via Box-Muller; second variate cached.
  double normal();
  double normal(double mean, double sd);

  // Position the counter at an absolute 128-bit block index within the stream.
  void skip_to_block(std::uint64_t block);

 private:
  void generate_block();

  std::uint32_t key_[2];
  std::uint32_t ctr_[4];
  std::uint32_t out_[4];
  int out_pos_;
  bool has_cached_normal_;
  double cached_normal_;
};

}  // namespace cashbench

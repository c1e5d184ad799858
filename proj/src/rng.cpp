#include "cashbench/rng.hpp"

#include <cmath>

namespace cashbench {

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi,
                    std::uint32_t& lo) {
  std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

}  // namespace

Philox::Philox(std::uint64_t seed, std::uint64_t stream)
    : out_pos_(4), has_cached_normal_(false), cached_normal_(0.0) {
  key_[0] = static_cast<std::uint32_t>(seed);
  key_[1] = static_cast<std::uint32_t>(seed >> 32);
  // Stream id occupies the upper counter words; the block index runs in the
  // lower words.
  ctr_[0] = 0;
  ctr_[1] = 0;
  ctr_[2] = static_cast<std::uint32_t>(stream);
  ctr_[3] = static_cast<std::uint32_t>(stream >> 32);
}

void Philox::skip_to_block(std::uint64_t block) {
  ctr_[0] = static_cast<std::uint32_t>(block);
  ctr_[1] = static_cast<std::uint32_t>(block >> 32);
  out_pos_ = 4;
  has_cached_normal_ = false;
}

void Philox::generate_block() {
  std::uint32_t c0 = ctr_[0], c1 = ctr_[1], c2 = ctr_[2], c3 = ctr_[3];
  std::uint32_t k0 = key_[0], k1 = key_[1];
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kPhiloxM0, c0, hi0, lo0);
    mulhilo(kPhiloxM1, c2, hi1, lo1);
    std::uint32_t n0 = hi1 ^ c1 ^ k0;
    std::uint32_t n1 = lo1;
    std::uint32_t n2 = hi0 ^ c3 ^ k1;
    std::uint32_t n3 = lo0;
    c0 = n0;
    c1 = n1;
    c2 = n2;
    c3 = n3;
    k0 += kWeyl0;
    k1 += kWeyl1;
  }
  out_[0] = c0;
  out_[1] = c1;
  out_[2] = c2;
  out_[3] = c3;
  // Increment the 64-bit block index.
  if (++ctr_[0] == 0) ++ctr_[1];
  out_pos_ = 0;
}

std::uint32_t Philox::next_u32() {
  if (out_pos_ >= 4) generate_block();
  return out_[out_pos_++];
}

std::uint64_t Philox::next_u64() {
  std::uint64_t lo = next_u32();
  std::uint64_t hi = next_u32();
  return (hi << 32) | lo;
}

double Philox::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Philox::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform();
}

std::uint64_t Philox::uniform_int(std::uint64_t n) {
  return next_u64() % n;
}

bool Philox::bernoulli(double p) { return uniform() < p; }

double Philox::normal() {
  if (has_cached_normal_) {
    has_cached_normal_ = false;
    return cached_normal_;
  }
  // 1-u keeps the argument of log strictly positive.
  double u1 = 1.0 - uniform();
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double theta = 2.0 * M_PI * u2;
  cached_normal_ = r * std::sin(theta);
  has_cached_normal_ = true;
  return r * std::cos(theta);
}

double Philox::normal(double mean, double sd) { return mean + sd * normal(); }

}  // namespace cashbench

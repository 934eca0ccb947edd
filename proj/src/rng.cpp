#include "rbmlab/rng.hpp"

#include <cmath>
#include <numbers>

namespace rbmlab {
namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& lo,
                    std::uint32_t& hi) noexcept {
  const std::uint64_t product = static_cast<std::uint64_t>(a) * b;
  lo = static_cast<std::uint32_t>(product);
  hi = static_cast<std::uint32_t>(product >> 32);
}

std::uint64_t hash_path(std::uint64_t h, std::uint64_t element) noexcept {
  return splitmix64(h ^ splitmix64(element + 0x632BE59BD9B4E019ull));
}

}  // namespace

PhiloxCounter philox4x32_10(PhiloxCounter ctr, PhiloxKey key) noexcept {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t lo0, hi0, lo1, hi1;
    mulhilo(kPhiloxM0, ctr[0], lo0, hi0);
    mulhilo(kPhiloxM1, ctr[2], lo1, hi1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kPhiloxW0;
    key[1] += kPhiloxW1;
  }
  return ctr;
}

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t path_hash)
    : path_hash_(path_hash), seed_(seed) {
  const std::uint64_t k = splitmix64(seed ^ 0xA0761D6478BD642Full);
  key_ = {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
}

RngStream::RngStream(std::uint64_t seed,
                     std::initializer_list<std::uint64_t> path)
    : RngStream(seed, [&] {
        std::uint64_t h = 0x243F6A8885A308D3ull;
        for (std::uint64_t e : path) h = hash_path(h, e);
        return h;
      }()) {}

RngStream::RngStream(std::uint64_t seed, StreamTag tag,
                     std::initializer_list<std::uint64_t> path)
    : RngStream(seed, [&] {
        std::uint64_t h =
            hash_path(0x243F6A8885A308D3ull, static_cast<std::uint64_t>(tag));
        for (std::uint64_t e : path) h = hash_path(h, e);
        return h;
      }()) {}

RngStream RngStream::child(std::uint64_t tag) const {
  return RngStream(seed_, hash_path(path_hash_, tag));
}

void RngStream::refill() {
  const PhiloxCounter ctr = {
      static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
      static_cast<std::uint32_t>(path_hash_),
      static_cast<std::uint32_t>(path_hash_ >> 32)};
  buffer_ = philox4x32_10(ctr, key_);
  buffered_ = 2;
  ++block_;
}

std::uint64_t RngStream::next_u64() {
  if (buffered_ == 0) refill();
  --buffered_;
  const int base = buffered_ == 1 ? 0 : 2;
  return (static_cast<std::uint64_t>(buffer_[base + 1]) << 32) | buffer_[base];
}

double RngStream::uniform() {
  // 53 random bits mapped to the midpoints of a 2^-53 grid: never 0 or 1.
  const std::uint64_t bits = next_u64() >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

std::uint64_t RngStream::uniform_index(std::uint64_t bound) {
  // Lemire's nearly divisionless rejection.
  std::uint64_t x = next_u64();
  __uint128_t m = static_cast<__uint128_t>(x) * bound;
  auto low = static_cast<std::uint64_t>(m);
  if (low < bound) {
    const std::uint64_t threshold = (0 - bound) % bound;
    while (low < threshold) {
      x = next_u64();
      m = static_cast<__uint128_t>(x) * bound;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::uint64_t>(m >> 64);
}

double RngStream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_normal_;
  }
  const double u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_normal_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

void RngStream::fill_normal(std::span<double> out) {
  for (double& x : out) x = normal();
}

}  // namespace rbmlab

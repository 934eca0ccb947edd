#pragma once

// Counter-based random streams.
//
// Every stream is a pure function of (seed, path): the path is a short list of
// integers naming the purpose of the draws, e.g. {noise, replica, step,
// substep, particle}. Two streams with the same seed and path produce the same
// sequence regardless of which thread evaluates them or in which order.

#include <array>
#include <cstdint>
#include <initializer_list>
#include <span>

namespace rbmlab {

using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

/// Philox4x32 with 10 rounds (Salmon et al., SC'11).
PhiloxCounter philox4x32_10(PhiloxCounter ctr, PhiloxKey key) noexcept;

std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Purpose tags used as the first element of stream paths.
enum class StreamTag : std::uint64_t {
  init = 1,
  noise = 2,
  division = 3,
  coupling = 4,
  probe = 5,
  ensemble = 6,
  test = 7,
};

class RngStream {
 public:
  RngStream(std::uint64_t seed, std::initializer_list<std::uint64_t> path);
  RngStream(std::uint64_t seed, StreamTag tag,
            std::initializer_list<std::uint64_t> path);

  /// Derives an independent stream by appending `tag` to this stream's path.
  RngStream child(std::uint64_t tag) const;

  std::uint64_t next_u64();
  /// Uniform on the open interval (0, 1).
  double uniform();
  /// Unbiased integer in [0, bound). bound must be positive.
  std::uint64_t uniform_index(std::uint64_t bound);
  double normal();
  void fill_normal(std::span<double> out);

 private:
  RngStream(std::uint64_t seed, std::uint64_t path_hash);
  void refill();

  PhiloxKey key_{};
  std::uint64_t path_hash_ = 0;
  std::uint64_t block_ = 0;
  PhiloxCounter buffer_{};
  int buffered_ = 0;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
  std::uint64_t seed_ = 0;
};

}  // namespace rbmlab

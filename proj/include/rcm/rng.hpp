#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>

namespace rcm {

// Tags that separate the random streams used for different purposes within
// one replication, so that e.g. the box sample and the explorer for the same
// replication never share draws.
enum class Purpose : std::uint64_t {
  generic = 0,
  explore = 1,
  box = 2,
  kernel = 3,
  branching = 4,
  bootstrap = 5,
  marks = 6,
  validation = 7,
  galton_watson = 8,
};

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t hash_combine64(std::uint64_t seed, std::uint64_t v) noexcept {
  return splitmix64(seed ^ splitmix64(v + 0x632be59bd9b4e019ULL));
}

// Maps 64 random bits to a double in [0, 1) with 53 bits of precision.
inline constexpr double bits_to_unit(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

// Counter-based uniform keyed by (key, i, j); the same triple always yields
// the same value. Used for per-pair edge variables that must be identical
// across coupled realisations.
inline constexpr double hashed_uniform(std::uint64_t key, std::uint64_t i, std::uint64_t j) noexcept {
  return bits_to_unit(hash_combine64(hash_combine64(key, i), j));
}

// xoshiro256** generator keyed by (master_seed, stream_id, purpose).
// Satisfies UniformRandomBitGenerator so it plugs into <random>.
class RngStream {
 public:
  using result_type = std::uint64_t;

  RngStream() : RngStream(0, 0) {}

  RngStream(std::uint64_t master_seed, std::uint64_t stream_id, Purpose purpose = Purpose::generic)
      : master_seed_(master_seed), stream_id_(stream_id) {
    std::uint64_t s = hash_combine64(hash_combine64(master_seed, stream_id),
                                     static_cast<std::uint64_t>(purpose));
    for (auto& word : state_) {
      s = splitmix64(s);
      word = s;
    }
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  std::uint64_t master_seed() const noexcept { return master_seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }

  // Child stream derived deterministically from this stream's key.
  RngStream split(std::uint64_t child_id, Purpose purpose = Purpose::generic) const {
    return RngStream(hash_combine64(master_seed_, stream_id_), child_id, purpose);
  }

  double uniform() noexcept { return bits_to_unit((*this)()); }

  // Uniform on the open interval (0, 1).
  double uniform_open() noexcept {
    double u;
    do {
      u = uniform();
    } while (u == 0.0);
    return u;
  }

  double uniform(double a, double b) noexcept { return a + (b - a) * uniform(); }

  double normal() { return std::normal_distribution<double>(0.0, 1.0)(*this); }

  double exponential(double rate = 1.0) { return -std::log(uniform_open()) / rate; }

  double gamma(double shape, double scale = 1.0) {
    return std::gamma_distribution<double>(shape, scale)(*this);
  }

  std::uint64_t poisson(double mean) {
    if (!(mean > 0.0)) return 0;
    return static_cast<std::uint64_t>(std::poisson_distribution<std::int64_t>(mean)(*this));
  }

  bool bernoulli(double p) noexcept {
    if (p >= 1.0) return true;
    if (p <= 0.0) return false;
    return uniform() < p;
  }

  std::size_t index(std::size_t n) noexcept {
    return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
  }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t master_seed_ = 0;
  std::uint64_t stream_id_ = 0;
  std::uint64_t state_[4]{};
};

}  // namespace rcm

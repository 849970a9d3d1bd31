#pragma once

// Counter-based random numbers: every draw is a pure function of (key, counter),
// so results do not depend on scheduling or thread count.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>

namespace hrg {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : key_(splitmix64(seed ^ 0x5851f42d4c957f2dULL)) {}

  CounterRng derive(std::uint64_t tag) const { return CounterRng(key_, splitmix64(tag + 0x632be59bd9b4e019ULL)); }
  CounterRng derive(std::initializer_list<std::uint64_t> path) const {
    CounterRng r = *this;
    for (auto t : path) r = r.derive(t);
    return r;
  }

  std::uint64_t bits(std::uint64_t c) const { return splitmix64(key_ ^ splitmix64(c * 0xd1342543de82ef95ULL + 1)); }
  double uniform(std::uint64_t c) const { return static_cast<double>(bits(c) >> 11) * 0x1.0p-53; }

  // Box-Muller; counters 2k and 2k+1 share one uniform pair
  double normal(std::uint64_t c) const {
    const std::uint64_t p = c >> 1;
    const double u1 = 1.0 - uniform(2 * p), u2 = uniform(2 * p + 1);
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * std::numbers::pi * u2;
    return (c & 1) ? r * std::sin(t) : r * std::cos(t);
  }

  std::uint64_t key() const { return key_; }

 private:
  CounterRng(std::uint64_t parent, std::uint64_t mix) : key_(splitmix64(parent ^ mix)) {}
  std::uint64_t key_;
};

// sequential view of a counter stream
class StreamRng {
 public:
  explicit StreamRng(CounterRng base) : base_(base) {}
  double uniform() { return base_.uniform(next_++); }
  double normal() {
    const double v = base_.normal(normal_++);
    return v;
  }

 private:
  CounterRng base_;
  std::uint64_t next_ = std::uint64_t{1} << 62;  // uniforms and normals use disjoint counter ranges
  std::uint64_t normal_ = 0;
};

}  // namespace hrg

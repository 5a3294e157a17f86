#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace gdcaf {

// Seeded generator with hand-rolled value mapping. std::uniform_*_distribution
// is implementation-defined, so parameter init and shuffles go through this
// class to keep runs reproducible bit-for-bit across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next() { return gen_(); }

  // 24-bit mantissa steps in [0, 1).
  float unit() { return static_cast<float>(gen_() >> 40) * (1.0f / 16777216.0f); }

  float uniform(float lo, float hi) { return lo + (hi - lo) * unit(); }

  // 53-bit steps in [0, 1).
  double unit_double() { return static_cast<double>(gen_() >> 11) * (1.0 / 9007199254740992.0); }

  double uniform_double(double lo, double hi) { return lo + (hi - lo) * unit_double(); }

  // [0, n), n > 0. Modulo bias is irrelevant at the sizes used here.
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(gen_() % n); }

  template <class T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace gdcaf

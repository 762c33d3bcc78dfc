#pragma once

#include <cstdint>
#include <random>

#include "cah/tensor.hpp"

namespace cah {

// Seeded generator whose draws do not depend on the standard library's
// distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  int index(int count) { return static_cast<int>(engine_() % static_cast<std::uint64_t>(count)); }

  Vec uniform_vec(const Vec& lo, const Vec& hi) {
    Vec v(lo.size());
    for (int i = 0; i < v.size(); ++i) v[i] = uniform(lo[i], hi[i]);
    return v;
  }

  Vec unit_vec(int dim) {
    Vec v(dim);
    do {
      for (int i = 0; i < dim; ++i) v[i] = uniform(-1.0, 1.0);
    } while (v.norm() < 1e-3 || v.norm() > 1.0);
    return v.normalized();
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace cah

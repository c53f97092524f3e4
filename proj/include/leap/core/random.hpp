#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "leap/core/tensor.hpp"

namespace leap {

// Seeded RNG shared by data generation, latent sampling and init. Normal
// draws use Box-Muller on the raw engine so sequences do not depend on the
// standard library's normal_distribution internals.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : eng_(seed) {}

  double uniform() {
    // 53-bit mantissa draw in [0,1)
    return double(eng_() >> 11) * (1.0 / 9007199254740992.0);
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // integer in [lo, hi] inclusive
  int64_t uniform_int(int64_t lo, int64_t hi) {
    return lo + int64_t(eng_() % uint64_t(hi - lo + 1));
  }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform(), u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  template <class T>
  Tensor<T> randn(std::vector<int> shape, double stddev = 1.0) {
    size_t n = shape_numel(shape);
    std::vector<T> v(n);
    for (auto& x : v) x = T(normal() * stddev);
    return Tensor<T>::from(std::move(shape), std::move(v));
  }

  template <class T>
  Tensor<T> rand_uniform(std::vector<int> shape, double lo, double hi) {
    size_t n = shape_numel(shape);
    std::vector<T> v(n);
    for (auto& x : v) x = T(uniform(lo, hi));
    return Tensor<T>::from(std::move(shape), std::move(v));
  }

  uint64_t raw() { return eng_(); }

  std::string save_state() const {
    std::ostringstream os;
    os.precision(17);
    os << eng_ << " " << (have_spare_ ? 1 : 0) << " " << spare_;
    return os.str();
  }

  void load_state(const std::string& s) {
    std::istringstream is(s);
    int hs = 0;
    is >> eng_ >> hs >> spare_;
    have_spare_ = hs != 0;
  }

 private:
  std::mt19937_64 eng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace leap

#ifndef CONGEN_MATRIX_HPP
#define CONGEN_MATRIX_HPP

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace congen {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

// Deterministic RNG wrapper. All draws are derived directly from raw
// mt19937_64 output so that sequences are identical across standard
// libraries (std::uniform_real_distribution is implementation-defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  // uniform in [0, 1)
  double unit() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }

  bool bernoulli(double p) { return unit() < p; }

  // uniform integer in [0, n)
  std::uint64_t below(std::uint64_t n) {
    // modulo bias is negligible for n << 2^64 and keeps the stream simple
    return eng_() % n;
  }

  std::uint64_t raw() { return eng_(); }

 private:
  std::mt19937_64 eng_;
};

template <class S>
bool all_finite(const Mat<S>& m) {
  return m.allFinite();
}

template <class S>
void require_finite(const Mat<S>& m, const std::string& what) {
  if (!m.allFinite()) {
    throw std::runtime_error("non-finite values in " + what);
  }
}

}  // namespace congen

#endif  // CONGEN_MATRIX_HPP

#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Core>

namespace dsc {

/// Seedable portable random source.
///
/// Raw bits come from std::mt19937_64, whose output sequence is fixed by the
/// C++ standard. The standard distributions are implementation-defined, so
/// the conversions below are written out explicitly:
///   uniform()  = (bits >> 11) * 2^-53, in [0, 1)
///   normal()   = Marsaglia polar method, second deviate cached
///   index(n)   = floor(uniform() * n)
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t bits() { return engine_(); }
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  std::size_t index(std::size_t n);

  /// Direction drawn uniformly on the unit sphere.
  Eigen::Vector3d unit_vector();

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace dsc

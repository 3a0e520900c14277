#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace weakl {

/// Mixes a master seed with stream indices so that every run / resample /
/// grid point gets its own independent engine. Counter-based derivation keeps
/// results identical whether streams are consumed serially or in parallel.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream,
                                 std::uint64_t substream = 0) {
  // splitmix64 finalizer, applied twice to decorrelate the inputs
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(master ^ mix(stream)) ^ mix(substream ^ 0xda3e39cb94b95bdbULL));
}

/// Deterministic uniform/normal draws on top of std::mt19937_64.
///
/// std::normal_distribution is implementation-defined, so tables would not be
/// reproducible across standard libraries; Box-Muller over the fully specified
/// mt19937_64 stream is. One instance = one independent stream.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() {  // [0, 1)
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t index(std::uint64_t n) {
    // rejection sampling, no modulo bias
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t draw = engine_();
    while (draw >= limit) draw = engine_();
    return draw % n;
  }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  /// Geometric on {1, 2, ...} with mean 1/p.
  std::uint64_t geometric(double p) {
    if (p >= 1.0) return 1;
    double u = uniform();
    while (u <= 0.0) u = uniform();
    return 1 + static_cast<std::uint64_t>(std::floor(std::log(u) / std::log1p(-p)));
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace weakl

#pragma once

#include <cmath>
#include <cstdint>

namespace causalprobe {

/// Deterministic PRNG used for everything random in the library.
///
/// The generator is SplitMix64 (Steele, Lea & Flood 2014): a 64-bit counter
/// advanced by the golden-ratio increment and passed through a finalizing
/// mixer. It is trivially reimplementable in any language, which is the point:
/// runs are reproducible from a single integer seed, and independent
/// sub-streams are derived by mixing a stream id into the seed.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform double in (0, 1]; never zero, safe to pass to log().
    double uniform_pos() { return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53; }

    bool bernoulli(double p) { return uniform() < p; }

    /// Standard normal via Box-Muller. Draws come in pairs; the spare is
    /// cached so consecutive calls consume one uniform pair per two normals.
    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform_pos();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    double gaussian(double mean, double sd) { return mean + sd * gaussian(); }

    /// Integer in [0, n), unbiased via rejection of the overflow band.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            const std::uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    /// Derives the seed of an independent sub-stream, e.g. one per
    /// (estimator, feature) task or per bootstrap replicate.
    static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
        Rng mixer(seed ^ (0x5851f42d4c957f2dULL * (stream + 1)));
        return mixer.next_u64();
    }

  private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace causalprobe

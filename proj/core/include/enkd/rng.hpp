#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace enkd {

// Deterministic random source. The uniform/normal transforms are implemented
// here instead of using std:: distributions, whose output is not pinned by
// the standard; every value this produces is reproducible from the seed.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform on [0, 1) with 53 random bits.
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller with a cached spare.
    double normal(double mean = 0.0, double stddev = 1.0);

    // Unbiased integer in [0, n) by rejection.
    std::uint64_t below(std::uint64_t n);

    // Fisher-Yates.
    void shuffle(std::vector<std::size_t>& indices);

  private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Stateless mix used to derive independent stream seeds (per member, per
// epoch) from a run seed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t step = 0);

}  // namespace enkd

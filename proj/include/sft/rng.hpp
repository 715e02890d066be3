#pragma once

#include <cstdint>

#include "sft/matrix.hpp"

namespace sft {

// Seed-deterministic 64-bit generator (splitmix64). The raw integer stream is
// identical across runs and platforms for a given seed; every stochastic
// choice in the project flows through this type.
class Rng {
  public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64();

    // Uniform in [0, 1) with 53-bit resolution.
    double next_double();

    float uniform(float lo, float hi);
    float normal(float mean, float stddev);

    // Uniform integer in [0, n), rejection-sampled (n >= 1).
    uint64_t next_below(uint64_t n);

    // Independent child stream, e.g. one per sample or per layer.
    Rng fork(uint64_t stream);

  private:
    uint64_t state_;
};

struct Dist {
    enum class Kind { uniform, normal };
    Kind kind;
    float a = 0.0f;  // lo / mean
    float b = 0.0f;  // hi / stddev

    static Dist uniform(float lo, float hi);
    static Dist normal(float mean, float stddev);
};

// Fills row-major in index order, one draw per element.
Matrix seeded_fill(int rows, int cols, const Dist& dist, Rng& rng);

}  // namespace sft

#include "sft/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace sft {

uint64_t Rng::next_u64() {
    // splitmix64 (Steele, Lea, Flood 2014).
    state_ += 0x9e3779b97f4a7c15ULL;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double Rng::next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

float Rng::uniform(float lo, float hi) {
    return lo + static_cast<float>(next_double() * (static_cast<double>(hi) - static_cast<double>(lo)));
}

float Rng::normal(float mean, float stddev) {
    // Box-Muller, no spare caching: two draws per sample keeps the stream
    // position independent of call history.
    const double u1 = 1.0 - next_double();  // (0, 1]
    const double u2 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double z = r * std::cos(2.0 * std::numbers::pi * u2);
    return mean + stddev * static_cast<float>(z);
}

uint64_t Rng::next_below(uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::next_below: n must be >= 1");
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
}

Rng Rng::fork(uint64_t stream) {
    uint64_t s = next_u64();
    return Rng(s ^ (stream * 0x9e3779b97f4a7c15ULL));
}

Dist Dist::uniform(float lo, float hi) {
    if (!(lo <= hi)) throw std::invalid_argument("Dist::uniform: lo > hi");
    return Dist{Kind::uniform, lo, hi};
}

Dist Dist::normal(float mean, float stddev) {
    if (!(stddev >= 0.0f)) throw std::invalid_argument("Dist::normal: stddev must be >= 0");
    return Dist{Kind::normal, mean, stddev};
}

Matrix seeded_fill(int rows, int cols, const Dist& dist, Rng& rng) {
    if (rows < 1 || cols < 1)
        throw std::invalid_argument("seeded_fill: dimensions must be >= 1, got " +
                                    std::to_string(rows) + "x" + std::to_string(cols));
    Matrix out(rows, cols);
    if (dist.kind == Dist::Kind::uniform) {
        for (float& v : out.data) v = rng.uniform(dist.a, dist.b);
    } else {
        for (float& v : out.data) v = rng.normal(dist.a, dist.b);
    }
    return out;
}

}  // namespace sft

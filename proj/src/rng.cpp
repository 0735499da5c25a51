#include "misbayes/rng.hpp"

#include <cmath>

#include "misbayes/errors.hpp"

namespace misbayes {

namespace {

// splitmix64 finalizer; draws are mix(key + k*GAMMA_DRAW), i.e. plain splitmix64
// with the stream key as origin. Child keys use a different increment so the
// split chain and the draw chain never walk the same sequence.
constexpr std::uint64_t GAMMA_DRAW = 0x9E3779B97F4A7C15ull;
constexpr std::uint64_t GAMMA_SPLIT = 0xD1B54A32D192ED03ull;

std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ull;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBull;
    z ^= z >> 31;
    return z;
}

}  // namespace

RngStream::RngStream(std::uint64_t master_seed)
    : key_(mix(master_seed ^ GAMMA_DRAW)), counter_(0) {}

RngStream RngStream::child(std::uint64_t task_index) const {
    return RngStream(mix(key_ + GAMMA_SPLIT * (task_index + 1)), 0);
}

RngStream RngStream::descend(const std::vector<std::uint64_t>& path) const {
    RngStream s = *this;
    for (std::uint64_t idx : path) s = s.child(idx);
    return s;
}

std::uint64_t RngStream::next_u64() { return mix(key_ + GAMMA_DRAW * ++counter_); }

double RngStream::uniform() {
    // 53-bit mantissa, centered so the result is strictly inside (0,1)
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double RngStream::normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

double RngStream::gamma(double shape) {
    if (!(shape > 0.0)) throw ParamError("gamma sampler requires shape > 0");
    if (shape < 1.0) {
        const double u = uniform();
        return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x;
        double v;
        do {
            x = normal();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = uniform();
        if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
        if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
}

double RngStream::exponential() { return -std::log(uniform()); }

}  // namespace misbayes

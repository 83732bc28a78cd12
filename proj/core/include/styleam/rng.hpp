#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "styleam/common.hpp"

namespace styleam {

// Deterministic random source. The engine (std::mt19937_64) is fully
// specified by the standard and all distributions are implemented here,
// so identical seeds give identical streams on every platform/stdlib.
class Rng {
  public:
    explicit Rng(uint64_t seed) : seed_(seed), engine_(seed) {}

    uint64_t seed() const { return seed_; }

    // Independent stream for a named concern ("shuffle.source", "mixup", ...).
    Rng derive(std::string_view tag) const {
        return Rng(splitmix64(seed_ ^ fnv1a64(tag)));
    }

    uint64_t bits() { return engine_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased integer in [0, n).
    int64_t uniform_int(int64_t n) {
        if (n <= 0) throw InputError("uniform_int: n must be positive");
        const uint64_t un = static_cast<uint64_t>(n);
        const uint64_t limit = UINT64_MAX - UINT64_MAX % un;
        uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return static_cast<int64_t>(x % un);
    }

    bool coin(double p) { return uniform() < p; }

    // Standard normal via Box-Muller with cached spare.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double t = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(t);
        has_spare_ = true;
        return r * std::cos(t);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Gamma(shape, 1) via Marsaglia & Tsang; boost trick for shape < 1.
    double gamma(double shape) {
        if (shape <= 0.0) throw InputError("gamma: shape must be positive");
        if (shape < 1.0) {
            double u = uniform();
            while (u <= 0.0) u = uniform();
            return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    double beta(double a, double b) {
        const double x = gamma(a);
        const double y = gamma(b);
        const double s = x + y;
        return s > 0.0 ? x / s : 0.5;
    }

    // Fisher-Yates permutation of 0..n-1.
    std::vector<int> permutation(int n) {
        std::vector<int> p(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) p[static_cast<size_t>(i)] = i;
        for (int i = n - 1; i > 0; --i)
            std::swap(p[static_cast<size_t>(i)], p[static_cast<size_t>(uniform_int(i + 1))]);
        return p;
    }

    std::string save_state() const {
        std::ostringstream os;
        os << seed_ << " " << (has_spare_ ? 1 : 0) << " ";
        os.precision(17);
        os << spare_ << " " << engine_;
        return os.str();
    }

    static Rng restore_state(const std::string& s) {
        std::istringstream is(s);
        uint64_t seed = 0;
        int has_spare = 0;
        double spare = 0.0;
        if (!(is >> seed >> has_spare >> spare)) throw InputError("Rng: bad serialized state");
        Rng r(seed);
        if (!(is >> r.engine_)) throw InputError("Rng: bad serialized engine state");
        r.has_spare_ = has_spare != 0;
        r.spare_ = spare;
        return r;
    }

  private:
    static uint64_t splitmix64(uint64_t x) {
        x += 0x9e3779b97f4a7c15ull;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
        return x ^ (x >> 31);
    }

    uint64_t seed_;
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace styleam

#pragma once

// Reproducible random numbers. Substreams are derived from (seed, index)
// through the splitmix64 finaliser, so every replication owns a stream
// that does not depend on scheduling or worker count.

#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace dmskew::rng {

namespace detail {
inline std::uint64_t mix64(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ULL;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return z;
}
} // namespace detail

class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(detail::mix64(seed + 0x9E3779B97F4A7C15ULL)) {}

    static Rng substream(std::uint64_t seed, std::uint64_t index) {
        return Rng(detail::mix64(seed) + 0x9E3779B97F4A7C15ULL * (index + 1));
    }

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        return detail::mix64(state_);
    }

    // uniform on [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // polar Box-Muller, second deviate discarded
    double normal() {
        for (;;) {
            const double u = 2.0 * uniform() - 1.0;
            const double v = 2.0 * uniform() - 1.0;
            const double s = u * u + v * v;
            if (s > 0.0 && s < 1.0) return u * std::sqrt(-2.0 * std::log(s) / s);
        }
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    // Marsaglia-Tsang squeeze; shape < 1 boosted through U^(1/shape)
    double gamma(double shape) {
        if (!(shape > 0.0)) throw std::invalid_argument("Rng::gamma: shape must be positive");
        if (shape < 1.0) {
            const double u = uniform();
            return gamma(shape + 1.0) * std::pow(u > 0.0 ? u : 5e-324, 1.0 / shape);
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

    double gamma(double shape, double scale) { return scale * gamma(shape); }

    // Michael-Schucany-Haas transform for the inverse Gaussian
    double inverse_gaussian(double mean, double lambda) {
        const double nu = normal();
        const double y = nu * nu;
        const double m = mean;
        double x = m + m * m * y / (2.0 * lambda) -
                   m / (2.0 * lambda) * std::sqrt(4.0 * m * lambda * y + m * m * y * y);
        if (x <= 0.0) x = 5e-324; // rounding guard for extreme deviates
        const double u = uniform();
        return u <= m / (m + x) ? x : m * m / x;
    }

    // Best-Fisher rejection sampler for the von Mises direction
    double von_mises(double mu, double kappa) {
        if (kappa < 1e-8) {
            // nearly uniform on the circle
            return mu + (2.0 * uniform() - 1.0) * 3.141592653589793238462643383279502884;
        }
        const double tau = 1.0 + std::sqrt(1.0 + 4.0 * kappa * kappa);
        const double rho = (tau - std::sqrt(2.0 * tau)) / (2.0 * kappa);
        const double r = (1.0 + rho * rho) / (2.0 * rho);
        for (;;) {
            const double z = std::cos(3.141592653589793238462643383279502884 * uniform());
            const double f = (1.0 + r * z) / (r + z);
            const double c = kappa * (r - f);
            const double u2 = uniform();
            if (c * (2.0 - c) - u2 > 0.0 || std::log(c / u2) + 1.0 - c >= 0.0) {
                const double sign = uniform() < 0.5 ? -1.0 : 1.0;
                return mu + sign * std::acos(f);
            }
        }
    }

    // exact Poisson; large means are split into chunks so the chop-down
    // product never underflows
    long poisson(double mean) {
        if (!(mean >= 0.0)) throw std::invalid_argument("Rng::poisson: mean must be >= 0");
        long total = 0;
        while (mean > 60.0) {
            total += poisson_small(60.0);
            mean -= 60.0;
        }
        return total + poisson_small(mean);
    }

private:
    std::uint64_t state_;

    long poisson_small(double mean) {
        const double limit = std::exp(-mean);
        double prod = uniform();
        long k = 0;
        while (prod > limit) {
            prod *= uniform();
            ++k;
        }
        return k;
    }
};

} // namespace dmskew::rng

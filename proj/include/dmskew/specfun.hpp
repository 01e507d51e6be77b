#pragma once

// Self-contained special-function kernel: log-gamma, polygamma of order
// 0..2, the modified Bessel ratio I1/I0 with two derivatives, and the
// standard normal density/CDF/quantile. No external math libraries.

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>

namespace dmskew::specfun {

inline constexpr double pi = 3.141592653589793238462643383279502884;
inline constexpr double two_pi = 2.0 * pi;
inline constexpr double inv_sqrt_two_pi = 0.3989422804014326779399460599343819;
inline constexpr double half_log_two_pi = 0.9189385332046727417803297364056176;

namespace detail {

// Bernoulli numbers B2, B4, ..., B16.
inline constexpr double bernoulli2n[8] = {
    1.0 / 6.0,   -1.0 / 30.0,    1.0 / 42.0, -1.0 / 30.0,
    5.0 / 66.0, -691.0 / 2730.0, 7.0 / 6.0,  -3617.0 / 510.0};

inline void require_positive(double x, const char* fn) {
    if (!(x > 0.0))
        throw std::domain_error(std::string(fn) + ": argument must be positive, got " +
                                std::to_string(x));
}

} // namespace detail

// Natural log of the gamma function, x > 0. Recurrence shift into x >= 12
// followed by the Stirling series.
inline double log_gamma(double x) {
    detail::require_positive(x, "log_gamma");
    double shift = 0.0;
    while (x < 12.0) {
        shift -= std::log(x);
        x += 1.0;
    }
    const double z = 1.0 / (x * x);
    double series = 0.0;
    double zp = 1.0;
    for (int n = 1; n <= 8; ++n) {
        const double twon = 2.0 * n;
        series += detail::bernoulli2n[n - 1] / (twon * (twon - 1.0)) * zp;
        zp *= z;
    }
    return shift + (x - 0.5) * std::log(x) - x + half_log_two_pi + series / x;
}

// Polygamma function of order k in {0, 1, 2}: psi, psi', psi''.
// Recurrence shift into x >= 12, then the asymptotic Bernoulli series.
inline double polygamma(int k, double x) {
    if (k < 0 || k > 2)
        throw std::invalid_argument("polygamma: order " + std::to_string(k) +
                                    " not supported (k must be 0, 1 or 2)");
    detail::require_positive(x, "polygamma");

    double shift = 0.0;
    while (x < 12.0) {
        // psi(x) = psi(x+1) - 1/x and the differentiated analogues
        switch (k) {
            case 0: shift -= 1.0 / x; break;
            case 1: shift += 1.0 / (x * x); break;
            case 2: shift -= 2.0 / (x * x * x); break;
        }
        x += 1.0;
    }

    const double z = 1.0 / (x * x);
    double acc = 0.0;
    if (k == 0) {
        double zp = z;
        for (int n = 1; n <= 8; ++n) {
            acc -= detail::bernoulli2n[n - 1] / (2.0 * n) * zp;
            zp *= z;
        }
        return shift + std::log(x) - 0.5 / x + acc;
    }
    if (k == 1) {
        double zp = z / x; // 1/x^3
        for (int n = 1; n <= 8; ++n) {
            acc += detail::bernoulli2n[n - 1] * zp;
            zp *= z;
        }
        return shift + 1.0 / x + 0.5 * z + acc;
    }
    double zp = z * z; // 1/x^4
    for (int n = 1; n <= 8; ++n) {
        acc -= (2.0 * n + 1.0) * detail::bernoulli2n[n - 1] * zp;
        zp *= z;
    }
    return shift - z - z / x + acc;
}

struct BesselRatio {
    double r;  // I1(phi) / I0(phi)
    double r1; // d r / d phi
    double r2; // d^2 r / d phi^2
};

namespace detail {

// Ascending power series for I0(x) and I1(x)/(x/2); valid for modest x.
inline void bessel_i_series(double x, double& i0, double& i1_over_half_x) {
    const double q = 0.25 * x * x;
    double t0 = 1.0, s0 = 1.0;
    double t1 = 1.0, s1 = 1.0;
    for (int k = 1; k < 200; ++k) {
        t0 *= q / (static_cast<double>(k) * k);
        t1 *= q / (static_cast<double>(k) * (k + 1.0));
        s0 += t0;
        s1 += t1;
        if (t0 < 1e-18 * s0 && t1 < 1e-18 * s1) break;
    }
    i0 = s0;
    i1_over_half_x = s1;
}

// Asymptotic tail series of I_nu(z) with the exp(z)/sqrt(2 pi z) prefactor
// removed; the ratio I1/I0 needs only these.
inline double bessel_asym_tail(double z, int nu) {
    const double mu = 4.0 * nu * nu;
    double term = 1.0, sum = 1.0;
    double prev = std::numeric_limits<double>::infinity();
    for (int k = 1; k <= 40; ++k) {
        const double odd = 2.0 * k - 1.0;
        term *= (odd * odd - mu) / (8.0 * z * k);
        if (std::abs(term) > prev) break; // divergent tail reached
        sum += term;
        prev = std::abs(term);
        if (std::abs(term) < 1e-18 * std::abs(sum)) break;
    }
    return sum;
}

} // namespace detail

// Ratio r(phi) = I1(phi)/I0(phi) with its first two derivatives.
// The derivatives follow from I0' = I1 and I1' = I0 - I1/phi:
//   r' = 1 - r/phi - r^2,   r'' = -r'/phi + r/phi^2 - 2 r r'.
// Large phi switches to the scaled asymptotic series so I0, I1 never
// overflow.
inline BesselRatio bessel_ratio(double phi) {
    detail::require_positive(phi, "bessel_ratio");
    double r;
    if (phi <= 15.0) {
        double i0, i1h;
        detail::bessel_i_series(phi, i0, i1h);
        r = 0.5 * phi * i1h / i0;
    } else {
        r = detail::bessel_asym_tail(phi, 1) / detail::bessel_asym_tail(phi, 0);
    }
    const double r1 = 1.0 - r / phi - r * r;
    const double r2 = -r1 / phi + r / (phi * phi) - 2.0 * r * r1;
    return {r, r1, r2};
}

// log I0(phi), overflow-safe for large phi.
inline double log_bessel_i0(double phi) {
    detail::require_positive(phi, "log_bessel_i0");
    if (phi <= 15.0) {
        double i0, i1h;
        detail::bessel_i_series(phi, i0, i1h);
        return std::log(i0);
    }
    return phi - 0.5 * std::log(two_pi * phi) + std::log(detail::bessel_asym_tail(phi, 0));
}

inline double std_normal_pdf(double x) {
    return inv_sqrt_two_pi * std::exp(-0.5 * x * x);
}

inline double std_normal_cdf(double x) {
    return 0.5 * std::erfc(-x * 0.7071067811865475244008443621048490);
}

// Inverse of the standard normal CDF (Wichura's PPND16 rational fits).
inline double std_normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0))
        throw std::domain_error("std_normal_quantile: p must lie in (0,1)");
    const double q = p - 0.5;
    if (std::abs(q) <= 0.425) {
        const double r = 0.180625 - q * q;
        return q *
               (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r +
                     6.7265770927008700853e+4) * r + 4.5921953931549871457e+4) * r +
                   1.3731693765509461125e+4) * r + 1.9715909503065514427e+3) * r +
                 1.3314166789178437745e+2) * r + 3.3871328727963666080e+0) /
               (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r +
                     3.9307895800092710610e+4) * r + 2.1213794301586595867e+4) * r +
                   5.3941960214247511077e+3) * r + 6.8718700749205790830e+2) * r +
                 4.2313330701600911252e+1) * r + 1.0);
    }
    double r = (q < 0.0) ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double v;
    if (r <= 5.0) {
        r -= 1.6;
        v = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                  2.41780725177450611770e-1) * r + 1.27045825245236838258e+0) * r +
                3.64784832476320460504e+0) * r + 5.76949722146069140550e+0) * r +
              4.63033784615654529590e+0) * r + 1.42343711074968357734e+0) /
            (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                  1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
                6.89767334985100004550e-1) * r + 1.67638483018380384940e+0) * r +
              2.05319162663775882187e+0) * r + 1.0);
    } else {
        r -= 5.0;
        v = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                  1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
                2.96560571828504891230e-1) * r + 1.78482653991729133580e+0) * r +
              5.46378491116411436990e+0) * r + 6.65790464350110377720e+0) /
            (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                  1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
                1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
              5.99832206555887937690e-1) * r + 1.0);
    }
    return (q < 0.0) ? -v : v;
}

} // namespace dmskew::specfun

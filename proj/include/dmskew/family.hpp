#pragma once

// Catalog of dispersion families and link functions. A family is described
// by its log-density kernel t(y, mu) and the first three mu-derivatives,
// the expectations d2 = E[t''], d3 = E[t'''] and d2' = d d2/d mu, the
// per-observation maximum sup_mu t(y, mu), and -- where the normalising
// term a(phi, y) splits off a pure phi part a1(phi) -- the derivatives of
// a1 that drive precision/dispersion inference.

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dmskew/linalg.hpp"
#include "dmskew/rng.hpp"
#include "dmskew/specfun.hpp"

namespace dmskew {

using linalg::Vector;

struct Interval {
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    bool lo_closed = false;
    bool hi_closed = false;

    bool contains(double x) const {
        if (!std::isfinite(x)) return false;
        if (lo_closed ? x < lo : x <= lo) return false;
        if (hi_closed ? x > hi : x >= hi) return false;
        return true;
    }
};

inline Interval open_interval(double lo, double hi) { return {lo, hi, false, false}; }
inline Interval real_line() { return {}; }
inline Interval positive_reals() { return {0.0, std::numeric_limits<double>::infinity()}; }
inline Interval nonnegative_reals() { return {0.0, std::numeric_limits<double>::infinity(), true}; }

struct LinkSpec {
    std::string id;
    std::function<double(double)> h;           // mu -> eta
    std::function<double(double)> hinv;        // eta -> mu
    std::function<double(double)> dmu_deta;    // as a function of mu
    std::function<double(double)> d2mu_deta2;  // as a function of mu
    Interval mu_domain;
    Interval eta_domain;
};

struct FamilySpec {
    std::string id;

    std::function<double(double, double)> t;   // (y, mu)
    std::function<double(double, double)> t1;  // d t / d mu
    std::function<double(double, double)> t2;
    std::function<double(double, double)> t3;
    std::function<double(double)> tmax;        // sup over mu of t(y, mu)

    std::function<double(double, double)> d2;       // (mu, phi)
    std::function<double(double, double)> d3;       // (mu, phi)
    std::function<double(double, double)> d2prime;  // d d2 / d mu
    bool phi_in_d2 = false;

    bool has_a1 = false;
    std::function<double(double)> a1;     // pure-phi part of a(phi, y)
    std::function<double(double)> a1p;    // derivatives in phi
    std::function<double(double)> a1pp;
    std::function<double(double)> a1ppp;
    std::function<double(double, double)> aphi;  // (phi, y): full da/dphi

    bool has_density = false;
    std::function<double(double, double, double)> log_density;  // (y, mu, phi)

    Interval y_domain, mu_domain;
    std::optional<double> phi_fixed;
    bool discrete = false;

    std::function<double(double, double, rng::Rng&)> sampler;  // (mu, phi)

    bool supports_phi_inference() const { return has_a1; }
    bool supports_sampling() const { return static_cast<bool>(sampler); }

    // -E[d^2 a / d phi^2] per observation
    double a2nd(double phi) const {
        require_a1("a2nd");
        return -a1pp(phi);
    }

    // Scoring weight with any phi-dependent scalar factored out of d2, so
    // the beta iteration never needs the unknown precision.
    double d2_scoring(double mu) const { return phi_in_d2 ? -1.0 : d2(mu, 1.0); }

    void require_a1(const char* who) const {
        if (!has_a1)
            throw std::invalid_argument(std::string(who) + ": family '" + id +
                                        "' does not support precision inference");
    }
};

struct LocalQuantities {
    Vector w, f, g, e;
};

struct AlphaQuantities {
    double alpha2;   // E[(da/dphi)^2] over the sample
    double alpha3;   // third-order expectation of the score in phi
    double alpha30;  // E[d^3 a / d phi^3] over the sample
    double alpha21;  // cross term, zero for the supported structures
};

// ---------------------------------------------------------------------------
// links

inline const std::vector<std::string>& link_ids() {
    static const std::vector<std::string> ids = {
        "logit", "probit", "log", "identity", "reciprocal",
        "square_reciprocal", "sqrt", "cloglog", "tangent"};
    return ids;
}

inline LinkSpec make_link(const std::string& id) {
    using std::exp;
    using std::log;
    LinkSpec lk;
    lk.id = id;
    if (id == "logit") {
        lk.h = [](double mu) { return log(mu / (1.0 - mu)); };
        lk.hinv = [](double eta) { return 1.0 / (1.0 + std::exp(-eta)); };
        lk.dmu_deta = [](double mu) { return mu * (1.0 - mu); };
        lk.d2mu_deta2 = [](double mu) { return mu * (1.0 - mu) * (1.0 - 2.0 * mu); };
        lk.mu_domain = open_interval(0.0, 1.0);
    } else if (id == "probit") {
        lk.h = [](double mu) { return specfun::std_normal_quantile(mu); };
        lk.hinv = [](double eta) { return specfun::std_normal_cdf(eta); };
        lk.dmu_deta = [](double mu) {
            return specfun::std_normal_pdf(specfun::std_normal_quantile(mu));
        };
        lk.d2mu_deta2 = [](double mu) {
            const double q = specfun::std_normal_quantile(mu);
            return -q * specfun::std_normal_pdf(q);
        };
        lk.mu_domain = open_interval(0.0, 1.0);
    } else if (id == "log") {
        lk.h = [](double mu) { return log(mu); };
        lk.hinv = [](double eta) { return std::exp(eta); };
        lk.dmu_deta = [](double mu) { return mu; };
        lk.d2mu_deta2 = [](double mu) { return mu; };
        lk.mu_domain = positive_reals();
    } else if (id == "identity") {
        lk.h = [](double mu) { return mu; };
        lk.hinv = [](double eta) { return eta; };
        lk.dmu_deta = [](double) { return 1.0; };
        lk.d2mu_deta2 = [](double) { return 0.0; };
    } else if (id == "reciprocal") {
        lk.h = [](double mu) { return 1.0 / mu; };
        lk.hinv = [](double eta) { return 1.0 / eta; };
        lk.dmu_deta = [](double mu) { return -mu * mu; };
        lk.d2mu_deta2 = [](double mu) { return 2.0 * mu * mu * mu; };
        lk.mu_domain = positive_reals();
        lk.eta_domain = positive_reals();
    } else if (id == "square_reciprocal") {
        lk.h = [](double mu) { return 1.0 / (mu * mu); };
        lk.hinv = [](double eta) { return 1.0 / std::sqrt(eta); };
        lk.dmu_deta = [](double mu) { return -0.5 * mu * mu * mu; };
        lk.d2mu_deta2 = [](double mu) { return 0.75 * std::pow(mu, 5); };
        lk.mu_domain = positive_reals();
        lk.eta_domain = positive_reals();
    } else if (id == "sqrt") {
        lk.h = [](double mu) { return std::sqrt(mu); };
        lk.hinv = [](double eta) { return eta * eta; };
        lk.dmu_deta = [](double mu) { return 2.0 * std::sqrt(mu); };
        lk.d2mu_deta2 = [](double) { return 2.0; };
        lk.mu_domain = positive_reals();
        lk.eta_domain = positive_reals();
    } else if (id == "cloglog") {
        lk.h = [](double mu) { return log(-std::log1p(-mu)); };
        lk.hinv = [](double eta) { return -std::expm1(-std::exp(eta)); };
        lk.dmu_deta = [](double mu) { return -(1.0 - mu) * std::log1p(-mu); };
        lk.d2mu_deta2 = [](double mu) {
            const double l = std::log1p(-mu);
            return -(1.0 - mu) * l * (1.0 + l);
        };
        lk.mu_domain = open_interval(0.0, 1.0);
    } else if (id == "tangent") {
        lk.h = [](double mu) { return std::tan(mu); };
        lk.hinv = [](double eta) { return std::atan(eta); };
        lk.dmu_deta = [](double mu) {
            const double c = std::cos(mu);
            return c * c;
        };
        lk.d2mu_deta2 = [](double mu) {
            const double c = std::cos(mu);
            return -2.0 * std::sin(mu) * c * c * c;
        };
        lk.mu_domain = open_interval(-0.5 * specfun::pi, 0.5 * specfun::pi);
    } else {
        std::string known;
        for (const auto& l : link_ids()) known += (known.empty() ? "" : ", ") + l;
        throw std::invalid_argument("make_link: unknown link '" + id + "'; valid ids: " + known);
    }
    return lk;
}

// ---------------------------------------------------------------------------
// families

namespace detail {

inline double xlogx(double x) { return x > 0.0 ? x * std::log(x) : 0.0; }

// ln(2 cosh(z)) without overflow
inline double log_two_cosh(double z) {
    const double a = std::abs(z);
    return a + std::log1p(std::exp(-2.0 * a));
}

inline void set_a1_half_log(FamilySpec& f) {
    f.has_a1 = true;
    f.a1 = [](double phi) { return 0.5 * std::log(phi); };
    f.a1p = [](double phi) { return 0.5 / phi; };
    f.a1pp = [](double phi) { return -0.5 / (phi * phi); };
    f.a1ppp = [](double phi) { return 1.0 / (phi * phi * phi); };
}

inline void set_a1_gamma(FamilySpec& f) {
    f.has_a1 = true;
    f.a1 = [](double phi) { return phi * std::log(phi) - specfun::log_gamma(phi); };
    f.a1p = [](double phi) { return std::log(phi) + 1.0 - specfun::polygamma(0, phi); };
    f.a1pp = [](double phi) { return 1.0 / phi - specfun::polygamma(1, phi); };
    f.a1ppp = [](double phi) { return -1.0 / (phi * phi) - specfun::polygamma(2, phi); };
}

// d-quantities shared by every family whose kernel is linear in y:
// d3 = 2 * d2'. Constant-CV models instead use d2 = -k2/mu^2, d3 = k3/mu^3.
inline void set_power_kappas(FamilySpec& f, double k2, double k3) {
    f.d2 = [k2](double mu, double) { return -k2 / (mu * mu); };
    f.d3 = [k3](double mu, double) { return k3 / (mu * mu * mu); };
    f.d2prime = [k2](double mu, double) { return 2.0 * k2 / (mu * mu * mu); };
}

FamilySpec make_family_impl(const std::string& id, std::optional<double> hyper);

inline FamilySpec normal_family() {
    FamilySpec f;
    f.id = "normal";
    f.t = [](double y, double mu) { return -0.5 * (y - mu) * (y - mu); };
    f.t1 = [](double y, double mu) { return y - mu; };
    f.t2 = [](double, double) { return -1.0; };
    f.t3 = [](double, double) { return 0.0; };
    f.tmax = [](double) { return 0.0; };
    f.d2 = [](double, double) { return -1.0; };
    f.d3 = [](double, double) { return 0.0; };
    f.d2prime = [](double, double) { return 0.0; };
    set_a1_half_log(f);
    f.aphi = [](double phi, double) { return 0.5 / phi; };
    f.has_density = true;
    f.log_density = [](double y, double mu, double phi) {
        return 0.5 * std::log(phi) - specfun::half_log_two_pi - 0.5 * phi * (y - mu) * (y - mu);
    };
    f.sampler = [](double mu, double phi, rng::Rng& rng) {
        return rng.normal(mu, 1.0 / std::sqrt(phi));
    };
    return f;
}

inline FamilySpec gamma_family() {
    FamilySpec f;
    f.id = "gamma";
    f.t = [](double y, double mu) { return -y / mu - std::log(mu); };
    f.t1 = [](double y, double mu) { return y / (mu * mu) - 1.0 / mu; };
    f.t2 = [](double y, double mu) { return -2.0 * y / (mu * mu * mu) + 1.0 / (mu * mu); };
    f.t3 = [](double y, double mu) {
        const double m2 = mu * mu;
        return 6.0 * y / (m2 * m2) - 2.0 / (mu * m2);
    };
    f.tmax = [](double y) { return -1.0 - std::log(y); };
    f.d2 = [](double mu, double) { return -1.0 / (mu * mu); };
    f.d3 = [](double mu, double) { return 4.0 / (mu * mu * mu); };
    f.d2prime = [](double mu, double) { return 2.0 / (mu * mu * mu); };
    set_a1_gamma(f);
    f.aphi = [](double phi, double y) {
        return std::log(phi) + 1.0 - specfun::polygamma(0, phi) + std::log(y);
    };
    f.has_density = true;
    f.log_density = [](double y, double mu, double phi) {
        return phi * (-y / mu - std::log(mu)) + phi * std::log(phi) - specfun::log_gamma(phi) +
               (phi - 1.0) * std::log(y);
    };
    f.y_domain = positive_reals();
    f.mu_domain = positive_reals();
    f.sampler = [](double mu, double phi, rng::Rng& rng) { return rng.gamma(phi, mu / phi); };
    return f;
}

inline FamilySpec inverse_gaussian_family() {
    FamilySpec f;
    f.id = "inverse_gaussian";
    f.t = [](double y, double mu) { return -0.5 * y / (mu * mu) + 1.0 / mu; };
    f.t1 = [](double y, double mu) { return y / (mu * mu * mu) - 1.0 / (mu * mu); };
    f.t2 = [](double y, double mu) {
        const double m2 = mu * mu;
        return -3.0 * y / (m2 * m2) + 2.0 / (mu * m2);
    };
    f.t3 = [](double y, double mu) {
        const double m2 = mu * mu;
        return 12.0 * y / (m2 * m2 * mu) - 6.0 / (m2 * m2);
    };
    f.tmax = [](double y) { return 0.5 / y; };
    f.d2 = [](double mu, double) { return -1.0 / (mu * mu * mu); };
    f.d3 = [](double mu, double) {
        const double m2 = mu * mu;
        return 6.0 / (m2 * m2);
    };
    f.d2prime = [](double mu, double) {
        const double m2 = mu * mu;
        return 3.0 / (m2 * m2);
    };
    set_a1_half_log(f);
    f.aphi = [](double phi, double y) { return 0.5 / phi - 0.5 / y; };
    f.has_density = true;
    f.log_density = [](double y, double mu, double phi) {
        return phi * (-0.5 * y / (mu * mu) + 1.0 / mu) - 0.5 * phi / y +
               0.5 * std::log(phi / (specfun::two_pi * y * y * y));
    };
    f.y_domain = positive_reals();
    f.mu_domain = positive_reals();
    f.sampler = [](double mu, double phi, rng::Rng& rng) {
        return rng.inverse_gaussian(mu, phi);
    };
    return f;
}

inline FamilySpec poisson_family() {
    FamilySpec f;
    f.id = "poisson";
    f.t = [](double y, double mu) { return (y > 0.0 ? y * std::log(mu) : 0.0) - mu; };
    f.t1 = [](double y, double mu) { return y / mu - 1.0; };
    f.t2 = [](double y, double mu) { return -y / (mu * mu); };
    f.t3 = [](double y, double mu) { return 2.0 * y / (mu * mu * mu); };
    f.tmax = [](double y) { return xlogx(y) - y; };
    f.d2 = [](double mu, double) { return -1.0 / mu; };
    f.d3 = [](double mu, double) { return 2.0 / (mu * mu); };
    f.d2prime = [](double mu, double) { return 1.0 / (mu * mu); };
    f.has_density = true;
    f.log_density = [](double y, double mu, double phi) {
        if (phi != 1.0) throw std::domain_error("poisson: density requires phi = 1");
        return (y > 0.0 ? y * std::log(mu) : 0.0) - mu - specfun::log_gamma(y + 1.0);
    };
    f.y_domain = nonnegative_reals();
    f.mu_domain = positive_reals();
    f.phi_fixed = 1.0;
    f.discrete = true;
    f.sampler = [](double mu, double phi, rng::Rng& rng) {
        if (phi != 1.0) throw std::domain_error("poisson: sampler requires phi = 1");
        return static_cast<double>(rng.poisson(mu));
    };
    return f;
}

inline FamilySpec binomial_family() {
    FamilySpec f;
    f.id = "binomial";
    f.t = [](double y, double mu) {
        return (y > 0.0 ? y * std::log(mu) : 0.0) +
               (y < 1.0 ? (1.0 - y) * std::log1p(-mu) : 0.0);
    };
    f.t1 = [](double y, double mu) { return y / mu - (1.0 - y) / (1.0 - mu); };
    f.t2 = [](double y, double mu) {
        const double om = 1.0 - mu;
        return -y / (mu * mu) - (1.0 - y) / (om * om);
    };
    f.t3 = [](double y, double mu) {
        const double om = 1.0 - mu;
        return 2.0 * y / (mu * mu * mu) - 2.0 * (1.0 - y) / (om * om * om);
    };
    f.tmax = [](double y) { return xlogx(y) + xlogx(1.0 - y); };
    f.d2 = [](double mu, double) { return -1.0 / (mu * (1.0 - mu)); };
    f.d3 = [](double mu, double) {
        const double om = 1.0 - mu;
        return 2.0 / (mu * mu) - 2.0 / (om * om);
    };
    f.d2prime = [](double mu, double) {
        const double v = mu * (1.0 - mu);
        return (1.0 - 2.0 * mu) / (v * v);
    };
    f.has_density = true;
    f.log_density = [f_t = f.t](double y, double mu, double phi) {
        if (phi != 1.0) throw std::domain_error("binomial: density requires phi = 1");
        return f_t(y, mu);
    };
    f.y_domain = {0.0, 1.0, true, true};
    f.mu_domain = open_interval(0.0, 1.0);
    f.phi_fixed = 1.0;
    f.discrete = true;
    f.sampler = [](double mu, double phi, rng::Rng& rng) {
        if (phi != 1.0) throw std::domain_error("binomial: sampler requires phi = 1");
        return rng.uniform() < mu ? 1.0 : 0.0;
    };
    return f;
}

inline FamilySpec ghs_family() {
    FamilySpec f;
    f.id = "ghs";
    f.t = [](double y, double mu) {
        return y * std::atan(mu) - 0.5 * std::log1p(mu * mu);
    };
    f.t1 = [](double y, double mu) { return (y - mu) / (1.0 + mu * mu); };
    f.t2 = [](double y, double mu) {
        const double q = 1.0 + mu * mu;
        return -1.0 / q - 2.0 * mu * (y - mu) / (q * q);
    };
    f.t3 = [](double y, double mu) {
        const double q = 1.0 + mu * mu;
        return (4.0 * mu - 2.0 * (y - mu)) / (q * q) + 8.0 * mu * mu * (y - mu) / (q * q * q);
    };
    f.tmax = [](double y) { return y * std::atan(y) - 0.5 * std::log1p(y * y); };
    f.d2 = [](double mu, double) { return -1.0 / (1.0 + mu * mu); };
    f.d3 = [](double mu, double) {
        const double q = 1.0 + mu * mu;
        return 4.0 * mu / (q * q);
    };
    f.d2prime = [](double mu, double) {
        const double q = 1.0 + mu * mu;
        return 2.0 * mu / (q * q);
    };
    f.has_density = true;
    f.log_density = [f_t = f.t](double y, double mu, double phi) {
        if (phi != 1.0)
            throw std::domain_error("ghs: closed-form density only available at phi = 1");
        return f_t(y, mu) - log_two_cosh(0.5 * specfun::pi * y);
    };
    return f;
}

inline FamilySpec negative_binomial_family() {
    FamilySpec f;
    f.id = "negative_binomial";
    f.t = [](double y, double mu) {
        return (y > 0.0 ? y * std::log(mu) : 0.0) - (y + 1.0) * std::log1p(mu);
    };
    f.t1 = [](double y, double mu) { return y / mu - (y + 1.0) / (1.0 + mu); };
    f.t2 = [](double y, double mu) {
        const double q = 1.0 + mu;
        return -y / (mu * mu) + (y + 1.0) / (q * q);
    };
    f.t3 = [](double y, double mu) {
        const double q = 1.0 + mu;
        return 2.0 * y / (mu * mu * mu) - 2.0 * (y + 1.0) / (q * q * q);
    };
    f.tmax = [](double y) { return xlogx(y) - (y + 1.0) * std::log1p(y); };
    f.d2 = [](double mu, double) { return -1.0 / mu + 1.0 / (1.0 + mu); };
    f.d3 = [](double mu, double) {
        const double q = 1.0 + mu;
        return 2.0 / (mu * mu) - 2.0 / (q * q);
    };
    f.d2prime = [](double mu, double) {
        const double q = 1.0 + mu;
        return 1.0 / (mu * mu) - 1.0 / (q * q);
    };
    f.has_density = true;
    f.log_density = [f_t = f.t](double y, double mu, double phi) {
        if (phi != 1.0) throw std::domain_error("negative_binomial: density requires phi = 1");
        return f_t(y, mu);
    };
    f.y_domain = nonnegative_reals();
    f.mu_domain = positive_reals();
    f.phi_fixed = 1.0;
    f.discrete = true;
    f.sampler = [](double mu, double phi, rng::Rng& rng) {
        if (phi != 1.0)
            throw std::domain_error("negative_binomial: sampler requires phi = 1");
        return static_cast<double>(rng.poisson(rng.gamma(1.0, mu)));
    };
    return f;
}

inline FamilySpec tweedie_family(double p) {
    if (p > 0.0 && p < 1.0)
        throw std::invalid_argument("tweedie: no model exists for power in (0,1)");
    const std::string label = "tweedie(" + std::to_string(p) + ")";
    if (p == 0.0 || p == 2.0 || p == 3.0) {
        FamilySpec f = p == 0.0 ? normal_family()
                                : (p == 2.0 ? gamma_family() : inverse_gaussian_family());
        f.id = label;
        return f;
    }
    FamilySpec f;
    f.id = label;
    if (p == 1.0) {
        f.t = [](double y, double mu) { return (y > 0.0 ? y * std::log(mu) : 0.0) - mu; };
        f.t1 = [](double y, double mu) { return y / mu - 1.0; };
        f.t2 = [](double y, double mu) { return -y / (mu * mu); };
        f.t3 = [](double y, double mu) { return 2.0 * y / (mu * mu * mu); };
        f.tmax = [](double y) { return xlogx(y) - y; };
    } else {
        f.t = [p](double y, double mu) {
            return y * std::pow(mu, 1.0 - p) / (1.0 - p) - std::pow(mu, 2.0 - p) / (2.0 - p);
        };
        f.t1 = [p](double y, double mu) {
            return (y - mu) * std::pow(mu, -p);
        };
        f.t2 = [p](double y, double mu) {
            return -p * y * std::pow(mu, -p - 1.0) + (p - 1.0) * std::pow(mu, -p);
        };
        f.t3 = [p](double y, double mu) {
            return p * (p + 1.0) * y * std::pow(mu, -p - 2.0) -
                   p * (p - 1.0) * std::pow(mu, -p - 1.0);
        };
        f.tmax = [p](double y) {
            if (y > 0.0) return std::pow(y, 2.0 - p) / ((1.0 - p) * (2.0 - p));
            if (p < 1.0) return 0.0; // p <= 0 here; sup attained as mu -> 0
            return 0.0;              // compound-Poisson range, y = 0 atom
        };
    }
    f.d2 = [p](double mu, double) { return -std::pow(mu, -p); };
    f.d3 = [p](double mu, double) { return 2.0 * p * std::pow(mu, -p - 1.0); };
    f.d2prime = [p](double mu, double) { return p * std::pow(mu, -p - 1.0); };
    f.mu_domain = positive_reals();
    if (p >= 2.0) f.y_domain = positive_reals();
    else if (p >= 1.0) f.y_domain = nonnegative_reals();
    return f;
}

inline FamilySpec exp_variance_family(double b) {
    if (!(b > 0.0)) throw std::invalid_argument("exp_variance: rate must be positive");
    FamilySpec f;
    f.id = "exp_variance(" + std::to_string(b) + ")";
    f.t = [b](double y, double mu) {
        return std::exp(-b * mu) * (mu / b + 1.0 / (b * b) - y / b);
    };
    f.t1 = [b](double y, double mu) { return (y - mu) * std::exp(-b * mu); };
    f.t2 = [b](double y, double mu) {
        return -std::exp(-b * mu) * (1.0 + b * (y - mu));
    };
    f.t3 = [b](double y, double mu) {
        return b * std::exp(-b * mu) * (b * (y - mu) + 2.0);
    };
    f.tmax = [b](double y) { return std::exp(-b * y) / (b * b); };
    f.d2 = [b](double mu, double) { return -std::exp(-b * mu); };
    f.d3 = [b](double mu, double) { return 2.0 * b * std::exp(-b * mu); };
    f.d2prime = [b](double mu, double) { return b * std::exp(-b * mu); };
    return f;
}

inline FamilySpec reciprocal_gamma_family() {
    FamilySpec f;
    f.id = "reciprocal_gamma";
    f.t = [](double y, double mu) { return std::log(mu / y) - mu / y; };
    f.t1 = [](double y, double mu) { return 1.0 / mu - 1.0 / y; };
    f.t2 = [](double, double mu) { return -1.0 / (mu * mu); };
    f.t3 = [](double, double mu) { return 2.0 / (mu * mu * mu); };
    f.tmax = [](double) { return -1.0; };
    set_power_kappas(f, 1.0, 2.0);
    set_a1_gamma(f);
    f.aphi = [](double phi, double) {
        return std::log(phi) + 1.0 - specfun::polygamma(0, phi);
    };
    f.has_density = true;
    f.log_density = [](double y, double mu, double phi) {
        return phi * (std::log(mu / y) - mu / y) + phi * std::log(phi) -
               specfun::log_gamma(phi) - std::log(y);
    };
    f.y_domain = positive_reals();
    f.mu_domain = positive_reals();
    f.sampler = [](double mu, double phi, rng::Rng& rng) {
        return 1.0 / rng.gamma(phi, 1.0 / (phi * mu));
    };
    return f;
}

inline FamilySpec log_gamma_family() {
    FamilySpec f;
    f.id = "log_gamma";
    f.t = [](double y, double mu) { return (y - mu) - std::exp(y - mu); };
    f.t1 = [](double y, double mu) { return std::exp(y - mu) - 1.0; };
    f.t2 = [](double y, double mu) { return -std::exp(y - mu); };
    f.t3 = [](double y, double mu) { return std::exp(y - mu); };
    f.tmax = [](double) { return -1.0; };
    f.d2 = [](double, double) { return -1.0; };
    f.d3 = [](double, double) { return 1.0; };
    f.d2prime = [](double, double) { return 0.0; };
    set_a1_gamma(f);
    f.aphi = [](double phi, double) {
        return std::log(phi) + 1.0 - specfun::polygamma(0, phi);
    };
    f.has_density = true;
    f.log_density = [](double y, double mu, double phi) {
        return phi * ((y - mu) - std::exp(y - mu)) + phi * std::log(phi) -
               specfun::log_gamma(phi);
    };
    f.sampler = [](double mu, double phi, rng::Rng& rng) {
        return mu + std::log(rng.gamma(phi, 1.0) / phi);
    };
    return f;
}

inline FamilySpec reciprocal_inverse_gaussian_family() {
    FamilySpec f;
    f.id = "reciprocal_inverse_gaussian";
    f.t = [](double y, double mu) { return mu - 0.5 * mu * mu / y - 0.5 * y; };
    f.t1 = [](double y, double mu) { return 1.0 - mu / y; };
    f.t2 = [](double y, double) { return -1.0 / y; };
    f.t3 = [](double, double) { return 0.0; };
    f.tmax = [](double) { return 0.0; };
    f.d2 = [](double mu, double) { return -1.0 / mu; };
    f.d3 = [](double, double) { return 0.0; };
    f.d2prime = [](double mu, double) { return 1.0 / (mu * mu); };
    set_a1_half_log(f);
    f.aphi = [](double phi, double) { return 0.5 / phi; };
    f.has_density = true;
    f.log_density = [](double y, double mu, double phi) {
        return phi * (mu - 0.5 * mu * mu / y - 0.5 * y) +
               0.5 * std::log(phi / (specfun::two_pi * y));
    };
    f.y_domain = positive_reals();
    f.mu_domain = positive_reals();
    f.sampler = [](double mu, double phi, rng::Rng& rng) {
        return 1.0 / rng.inverse_gaussian(1.0 / mu, phi);
    };
    return f;
}

inline FamilySpec von_mises_family() {
    FamilySpec f;
    f.id = "von_mises";
    f.t = [](double y, double mu) { return std::cos(y - mu); };
    f.t1 = [](double y, double mu) { return std::sin(y - mu); };
    f.t2 = [](double y, double mu) { return -std::cos(y - mu); };
    f.t3 = [](double y, double mu) { return -std::sin(y - mu); };
    f.tmax = [](double) { return 1.0; };
    f.d2 = [](double, double phi) { return -specfun::bessel_ratio(phi).r; };
    f.d3 = [](double, double) { return 0.0; };
    f.d2prime = [](double, double) { return 0.0; };
    f.phi_in_d2 = true;
    f.has_a1 = true;
    f.a1 = [](double phi) { return -specfun::log_bessel_i0(phi); };
    f.a1p = [](double phi) { return -specfun::bessel_ratio(phi).r; };
    f.a1pp = [](double phi) { return -specfun::bessel_ratio(phi).r1; };
    f.a1ppp = [](double phi) { return -specfun::bessel_ratio(phi).r2; };
    f.aphi = [](double phi, double) { return -specfun::bessel_ratio(phi).r; };
    f.has_density = true;
    f.log_density = [](double y, double mu, double phi) {
        return phi * std::cos(y - mu) - std::log(specfun::two_pi) -
               specfun::log_bessel_i0(phi);
    };
    f.sampler = [](double mu, double phi, rng::Rng& rng) { return rng.von_mises(mu, phi); };
    return f;
}

inline FamilySpec const_cv_normal_family(double c) {
    FamilySpec f;
    f.id = "const_cv_normal(" + std::to_string(c) + ")";
    const double c2 = c * c;
    f.t = [c2](double y, double mu) {
        const double r = y - mu;
        return -0.5 * r * r / (c2 * mu * mu) - std::log(mu);
    };
    f.t1 = [c2](double y, double mu) {
        const double m2 = mu * mu;
        return y * y / (c2 * m2 * mu) - y / (c2 * m2) - 1.0 / mu;
    };
    f.t2 = [c2](double y, double mu) {
        const double m2 = mu * mu;
        return -3.0 * y * y / (c2 * m2 * m2) + 2.0 * y / (c2 * m2 * mu) + 1.0 / m2;
    };
    f.t3 = [c2](double y, double mu) {
        const double m2 = mu * mu;
        return 12.0 * y * y / (c2 * m2 * m2 * mu) - 6.0 * y / (c2 * m2 * m2) -
               2.0 / (m2 * mu);
    };
    f.tmax = [c2, f_t = f.t](double y) {
        if (!(y > 0.0))
            throw std::domain_error("const_cv_normal: deviance needs positive responses");
        const double mu_star = y * (std::sqrt(1.0 + 4.0 * c2) - 1.0) / (2.0 * c2);
        return f_t(y, mu_star);
    };
    set_power_kappas(f, (1.0 + 2.0 * c2) / c2, (6.0 + 10.0 * c2) / c2);
    f.has_density = true;
    f.log_density = [c2, f_t = f.t](double y, double mu, double phi) {
        if (phi != 1.0) throw std::domain_error("const_cv_normal: phi is fixed at 1");
        return f_t(y, mu) - 0.5 * std::log(specfun::two_pi * c2);
    };
    // the kernel maximum needs y > 0; negligible sampling mass sits below
    // zero for small c
    f.y_domain = positive_reals();
    f.mu_domain = positive_reals();
    f.phi_fixed = 1.0;
    f.sampler = [c](double mu, double phi, rng::Rng& rng) {
        if (phi != 1.0) throw std::domain_error("const_cv_normal: phi is fixed at 1");
        return rng.normal(mu, c * mu);
    };
    return f;
}

inline FamilySpec const_cv_ig_family(double c) {
    FamilySpec f;
    f.id = "const_cv_ig(" + std::to_string(c) + ")";
    const double c2 = c * c;
    f.t = [c2](double y, double mu) {
        return 0.5 * std::log(mu) - 0.5 * y / (c2 * mu) + 1.0 / c2 - 0.5 * mu / (c2 * y);
    };
    f.t1 = [c2](double y, double mu) {
        return 0.5 / mu + 0.5 * y / (c2 * mu * mu) - 0.5 / (c2 * y);
    };
    f.t2 = [c2](double y, double mu) {
        return -0.5 / (mu * mu) - y / (c2 * mu * mu * mu);
    };
    f.t3 = [c2](double y, double mu) {
        const double m2 = mu * mu;
        return 1.0 / (m2 * mu) + 3.0 * y / (c2 * m2 * m2);
    };
    f.tmax = [c2, f_t = f.t](double y) {
        const double mu_star = 0.5 * y * (c2 + std::sqrt(c2 * c2 + 4.0));
        return f_t(y, mu_star);
    };
    // E[t''] for IG(mu, c^2 mu^2) gives k2 = (2+c^2)/(2c^2), k3 = (3+c^2)/c^2
    set_power_kappas(f, (2.0 + c2) / (2.0 * c2), (3.0 + c2) / c2);
    f.has_density = true;
    f.log_density = [c2, f_t = f.t](double y, double mu, double phi) {
        if (phi != 1.0) throw std::domain_error("const_cv_ig: phi is fixed at 1");
        return f_t(y, mu) - 0.5 * std::log(specfun::two_pi * c2 * y * y * y);
    };
    f.y_domain = positive_reals();
    f.mu_domain = positive_reals();
    f.phi_fixed = 1.0;
    f.sampler = [c2](double mu, double phi, rng::Rng& rng) {
        if (phi != 1.0) throw std::domain_error("const_cv_ig: phi is fixed at 1");
        return rng.inverse_gaussian(mu, mu / c2);
    };
    return f;
}

inline FamilySpec const_cv_lognormal_family(double c) {
    FamilySpec f;
    f.id = "const_cv_lognormal(" + std::to_string(c) + ")";
    const double s2 = std::log1p(c * c);
    f.t = [s2](double y, double mu) {
        const double l = std::log(y) - std::log(mu) + 0.5 * s2;
        return -0.5 * l * l / s2;
    };
    f.t1 = [s2](double y, double mu) {
        const double l = std::log(y) - std::log(mu) + 0.5 * s2;
        return l / (s2 * mu);
    };
    f.t2 = [s2](double y, double mu) {
        const double l = std::log(y) - std::log(mu) + 0.5 * s2;
        return -(1.0 + l) / (s2 * mu * mu);
    };
    f.t3 = [s2](double y, double mu) {
        const double l = std::log(y) - std::log(mu) + 0.5 * s2;
        return (3.0 + 2.0 * l) / (s2 * mu * mu * mu);
    };
    f.tmax = [](double) { return 0.0; };
    set_power_kappas(f, 1.0 / s2, 3.0 / s2);
    f.has_density = true;
    f.log_density = [s2, f_t = f.t](double y, double mu, double phi) {
        if (phi != 1.0) throw std::domain_error("const_cv_lognormal: phi is fixed at 1");
        return f_t(y, mu) - std::log(y) - 0.5 * std::log(specfun::two_pi * s2);
    };
    f.y_domain = positive_reals();
    f.mu_domain = positive_reals();
    f.phi_fixed = 1.0;
    f.sampler = [s2](double mu, double phi, rng::Rng& rng) {
        if (phi != 1.0) throw std::domain_error("const_cv_lognormal: phi is fixed at 1");
        return std::exp(rng.normal(std::log(mu) - 0.5 * s2, std::sqrt(s2)));
    };
    return f;
}

inline FamilySpec const_cv_weibull_family(double c) {
    FamilySpec f;
    f.id = "const_cv_weibull(" + std::to_string(c) + ")";
    const double g = std::exp(specfun::log_gamma(1.0 + 1.0 / c));
    f.t = [c, g](double y, double mu) {
        return -c * std::log(mu) - std::pow(y * g / mu, c);
    };
    f.t1 = [c, g](double y, double mu) {
        const double q = std::pow(y * g / mu, c);
        return (c / mu) * (q - 1.0);
    };
    f.t2 = [c, g](double y, double mu) {
        const double q = std::pow(y * g / mu, c);
        return (c / (mu * mu)) * (1.0 - (c + 1.0) * q);
    };
    f.t3 = [c, g](double y, double mu) {
        const double q = std::pow(y * g / mu, c);
        return (c / (mu * mu * mu)) * ((c + 1.0) * (c + 2.0) * q - 2.0);
    };
    f.tmax = [c, g](double y) { return -c * std::log(y * g) - 1.0; };
    set_power_kappas(f, c * c, c * c * (c + 3.0));
    f.has_density = true;
    f.log_density = [c, g, f_t = f.t](double y, double mu, double phi) {
        if (phi != 1.0) throw std::domain_error("const_cv_weibull: phi is fixed at 1");
        return f_t(y, mu) + std::log(c) + (c - 1.0) * std::log(y) + c * std::log(g);
    };
    f.y_domain = positive_reals();
    f.mu_domain = positive_reals();
    f.phi_fixed = 1.0;
    f.sampler = [c, g](double mu, double phi, rng::Rng& rng) {
        if (phi != 1.0) throw std::domain_error("const_cv_weibull: phi is fixed at 1");
        const double u = 1.0 - rng.uniform(); // in (0, 1]
        return (mu / g) * std::pow(-std::log(u), 1.0 / c);
    };
    return f;
}

} // namespace detail

// Family identifiers; the parenthesised ones require a hyperparameter.
inline const std::vector<std::string>& family_ids() {
    static const std::vector<std::string> ids = {
        "normal", "poisson", "binomial", "gamma", "inverse_gaussian", "ghs",
        "negative_binomial", "tweedie(p)", "exp_variance(b)", "reciprocal_gamma",
        "log_gamma", "reciprocal_inverse_gaussian", "von_mises", "const_cv_normal(c)",
        "const_cv_ig(c)", "const_cv_lognormal(c)", "const_cv_weibull(c)"};
    return ids;
}

inline FamilySpec make_family(const std::string& id, std::optional<double> hyper = {}) {
    using namespace detail;
    const bool needs_hyper = id == "tweedie" || id == "exp_variance" ||
                             id.rfind("const_cv_", 0) == 0;
    if (needs_hyper && !hyper)
        throw std::invalid_argument("make_family: '" + id + "' needs a hyperparameter");

    if (id == "normal") return normal_family();
    if (id == "poisson") return poisson_family();
    if (id == "binomial") return binomial_family();
    if (id == "gamma") return gamma_family();
    if (id == "inverse_gaussian") return inverse_gaussian_family();
    if (id == "ghs") return ghs_family();
    if (id == "negative_binomial") return negative_binomial_family();
    if (id == "tweedie") return tweedie_family(*hyper);
    if (id == "exp_variance") return exp_variance_family(*hyper);
    if (id == "reciprocal_gamma") return reciprocal_gamma_family();
    if (id == "log_gamma") return log_gamma_family();
    if (id == "reciprocal_inverse_gaussian") return reciprocal_inverse_gaussian_family();
    if (id == "von_mises") return von_mises_family();
    if (id == "const_cv_normal") {
        if (!(*hyper > 0.0)) throw std::invalid_argument("const_cv_normal: c must be positive");
        return const_cv_normal_family(*hyper);
    }
    if (id == "const_cv_ig") {
        if (!(*hyper > 0.0)) throw std::invalid_argument("const_cv_ig: c must be positive");
        return const_cv_ig_family(*hyper);
    }
    if (id == "const_cv_lognormal") {
        if (!(*hyper > 0.0))
            throw std::invalid_argument("const_cv_lognormal: c must be positive");
        return const_cv_lognormal_family(*hyper);
    }
    if (id == "const_cv_weibull") {
        if (!(*hyper > 0.0)) throw std::invalid_argument("const_cv_weibull: c must be positive");
        return const_cv_weibull_family(*hyper);
    }
    std::string known;
    for (const auto& f : family_ids()) known += (known.empty() ? "" : ", ") + f;
    throw std::invalid_argument("make_family: unknown family '" + id + "'; valid ids: " + known);
}

// Accepts "gamma" as well as "tweedie(1.5)"-style ids with an inline
// hyperparameter.
inline FamilySpec parse_family(const std::string& spec) {
    const auto open = spec.find('(');
    if (open == std::string::npos) return make_family(spec);
    if (spec.back() != ')')
        throw std::invalid_argument("parse_family: malformed id '" + spec + "'");
    const std::string base = spec.substr(0, open);
    const std::string arg = spec.substr(open + 1, spec.size() - open - 2);
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(arg, &used);
    } catch (const std::exception&) {
        throw std::invalid_argument("parse_family: bad hyperparameter in '" + spec + "'");
    }
    if (used != arg.size())
        throw std::invalid_argument("parse_family: bad hyperparameter in '" + spec + "'");
    return make_family(base, v);
}

// Per-observation quantities combining link derivatives with d-quantities:
//   w = -(dmu/deta)^2 d2                  (scoring weight)
//   g = -(dmu/deta)(d2mu/deta2) d2
//   f = g - (dmu/deta)^3 d3
//   e = -(dmu/deta)^3 d2'
inline LocalQuantities local_quantities(const FamilySpec& family, const LinkSpec& link,
                                        const Vector& mu, double phi) {
    const std::size_t n = mu.size();
    LocalQuantities q{Vector(n), Vector(n), Vector(n), Vector(n)};
    for (std::size_t i = 0; i < n; ++i) {
        if (!family.mu_domain.contains(mu[i]) || !link.mu_domain.contains(mu[i]))
            throw std::domain_error("local_quantities: mu outside domain at row " +
                                    std::to_string(i + 1));
        const double d1m = link.dmu_deta(mu[i]);
        const double d2m = link.d2mu_deta2(mu[i]);
        const double d2v = family.d2(mu[i], phi);
        const double d3v = family.d3(mu[i], phi);
        const double d2p = family.d2prime(mu[i], phi);
        q.w[i] = -d1m * d1m * d2v;
        q.g[i] = -d1m * d2m * d2v;
        q.f[i] = q.g[i] - d1m * d1m * d1m * d3v;
        q.e[i] = -d1m * d1m * d1m * d2p;
    }
    return q;
}

// Twice the summed gap between the per-observation maximum of t and its
// value at mu; nonnegative, zero only at the observationwise maximiser.
inline double unit_deviance(const FamilySpec& family, const Vector& y, const Vector& mu) {
    if (y.size() != mu.size()) throw std::invalid_argument("unit_deviance: length mismatch");
    double total = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (!family.y_domain.contains(y[i]))
            throw std::domain_error("unit_deviance: response outside domain at row " +
                                    std::to_string(i + 1));
        if (!family.mu_domain.contains(mu[i]))
            throw std::domain_error("unit_deviance: mu outside domain at row " +
                                    std::to_string(i + 1));
        total += family.tmax(y[i]) - family.t(y[i], mu[i]);
    }
    total *= 2.0;
    if (total < 0.0 && total > -1e-9) total = 0.0; // rounding guard near a perfect fit
    return total;
}

// Sample-total expectations of powers of da/dphi for families where
// a(phi,y) = phi c(y) + a1(phi) + a2(y) (or the pure additive split).
inline AlphaQuantities alpha_quantities(const FamilySpec& family, double phi, std::size_t n) {
    family.require_a1("alpha_quantities");
    const double nn = static_cast<double>(n);
    return {-nn * family.a1pp(phi), -nn * family.a1ppp(phi), nn * family.a1ppp(phi), 0.0};
}

} // namespace dmskew

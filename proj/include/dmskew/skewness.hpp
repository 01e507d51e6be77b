#pragma once

// Second-order third cumulants and asymptotic skewness of the maximum
// likelihood estimators: the regression coefficients through the matrix
// expression built from M = K^-1 X~' and the per-observation quadratic
// forms N, the precision and dispersion parameters through the derivatives
// of a1, plus the Edgeworth-corrected density of a standardised estimate.

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "dmskew/expr.hpp"
#include "dmskew/family.hpp"
#include "dmskew/fit.hpp"
#include "dmskew/linalg.hpp"

namespace dmskew {

struct SkewnessReport {
    Vector kappa3_beta;   // third cumulant of each coefficient estimate
    Vector gamma1_beta;   // kappa3 / Var^(3/2), coordinatewise
    Vector var_beta;      // asymptotic variances used in the scaling
    double kappa3_phi = std::numeric_limits<double>::quiet_NaN();
    double gamma1_phi = std::numeric_limits<double>::quiet_NaN();
    double kappa3_sigma2 = std::numeric_limits<double>::quiet_NaN();
    double gamma1_sigma2 = std::numeric_limits<double>::quiet_NaN();
    bool has_phi = false;
    linalg::Matrix m_matrix;  // p x n
    linalg::Matrix n_matrix;  // p x n, n_ai = (K^-1 X~_i K^-1)_aa
    LocalQuantities locals;
};

// kappa3(beta_a) = phi^-2 [ sum_i m_ai^3 (f - 4g - 3e)_i - 3 sum_i m_ai n_ai w_i ].
// Optionally returns the intermediate M and N matrices.
inline Vector beta_third_cumulants(const FamilySpec& family, const LinkSpec& link,
                                   const expr::PredictorModel& model, const linalg::Matrix& x,
                                   const Vector& beta, double phi,
                                   linalg::Matrix* m_out = nullptr,
                                   linalg::Matrix* n_out = nullptr,
                                   Vector* var_out = nullptr,
                                   LocalQuantities* locals_out = nullptr) {
    const std::size_t n = x.rows();
    const std::size_t p = model.n_parameters();
    auto dd = expr::design_derivatives(model, x, beta, 2);
    Vector mu(n);
    for (std::size_t i = 0; i < n; ++i) mu[i] = link.hinv(dd.eta[i]);
    LocalQuantities locals = local_quantities(family, link, mu, phi);

    linalg::Matrix kmat(p, p);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t r = 0; r < p; ++r)
            for (std::size_t c = r; c < p; ++c)
                kmat(r, c) += dd.jacobian(i, r) * locals.w[i] * dd.jacobian(i, c);
    for (std::size_t r = 0; r < p; ++r)
        for (std::size_t c = 0; c < r; ++c) kmat(r, c) = kmat(c, r);

    auto chol = linalg::Cholesky::factor_jittered(kmat);
    if (!chol.ok) throw std::runtime_error("beta_third_cumulants: K_beta singular");
    const linalg::Matrix kinv = chol.inverse();

    linalg::Matrix m(p, n), nm(p, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t a = 0; a < p; ++a) {
            double macc = 0.0;
            for (std::size_t r = 0; r < p; ++r) macc += kinv(a, r) * dd.jacobian(i, r);
            m(a, i) = macc;
            // quadratic form of the predictor Hessian in column a of K^-1
            double nacc = 0.0;
            for (std::size_t r = 0; r < p; ++r) {
                double inner = 0.0;
                for (std::size_t c = 0; c < p; ++c) inner += dd.hessians[i](r, c) * kinv(c, a);
                nacc += kinv(a, r) * inner;
            }
            nm(a, i) = nacc;
        }
    }

    Vector kappa3(p, 0.0);
    const double inv_phi2 = 1.0 / (phi * phi);
    for (std::size_t a = 0; a < p; ++a) {
        double cubic = 0.0, cross = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double mi = m(a, i);
            cubic += mi * mi * mi * (locals.f[i] - 4.0 * locals.g[i] - 3.0 * locals.e[i]);
            cross += mi * nm(a, i) * locals.w[i];
        }
        kappa3[a] = inv_phi2 * (cubic - 3.0 * cross);
    }

    if (m_out) *m_out = std::move(m);
    if (n_out) *n_out = std::move(nm);
    if (var_out) {
        var_out->resize(p);
        for (std::size_t a = 0; a < p; ++a) (*var_out)[a] = kinv(a, a) / phi;
    }
    if (locals_out) *locals_out = std::move(locals);
    return kappa3;
}

inline Vector beta_skewness(const Vector& kappa3, const Vector& var_beta) {
    if (kappa3.size() != var_beta.size())
        throw std::invalid_argument("beta_skewness: length mismatch");
    Vector g(kappa3.size());
    for (std::size_t a = 0; a < kappa3.size(); ++a) {
        if (!(var_beta[a] > 0.0))
            throw std::runtime_error("beta_skewness: nonpositive variance at coordinate " +
                                     std::to_string(a + 1));
        g[a] = kappa3[a] / std::pow(var_beta[a], 1.5);
    }
    return g;
}

// kappa3(phi_hat) = -2 a1'''(phi) / (n^2 a1''(phi)^3), gamma1 by Var^(3/2)
// with Var(phi_hat) = 1 / (n a2nd).
inline std::pair<double, double> phi_third_cumulant(const FamilySpec& family, std::size_t n,
                                                    double phi) {
    family.require_a1("phi_third_cumulant");
    const double nn = static_cast<double>(n);
    const double app = family.a1pp(phi);
    const double appp = family.a1ppp(phi);
    if (!(-app > 0.0))
        throw std::runtime_error("phi_third_cumulant: information for phi not positive");
    const double kappa3 = -2.0 * appp / (nn * nn * app * app * app);
    const double var = 1.0 / (nn * (-app));
    return {kappa3, kappa3 / std::pow(var, 1.5)};
}

// Same cumulant assembled from the generic expectations of powers of
// da/dphi; must agree with the a1 route for every supported family.
inline std::pair<double, double> phi_third_cumulant_from_alpha(const AlphaQuantities& a) {
    const double num = a.alpha3 + 3.0 * a.alpha30 + 6.0 * a.alpha21;
    return {num / std::pow(a.alpha2, 3), num / std::pow(a.alpha2, 1.5)};
}

// Dispersion parameterisation: xi(v) = a1(1/v) differentiated by the chain
// rule, then
//   kappa3(s2_hat) = -2 v^2 {v xi''' + 3 xi''} / (n^2 {2 xi' + v xi''}^3)
// and gamma1 = kappa3 / Var^(3/2) with Var(s2_hat) = v^4 / (n a2nd(1/v)).
inline std::pair<double, double> sigma2_third_cumulant(const FamilySpec& family, std::size_t n,
                                                       double sigma2) {
    family.require_a1("sigma2_third_cumulant");
    if (!(sigma2 > 0.0))
        throw std::domain_error("sigma2_third_cumulant: sigma2 must be positive");
    const double v = sigma2;
    const double phi = 1.0 / v;
    const double a1p = family.a1p(phi), a1pp = family.a1pp(phi), a1ppp = family.a1ppp(phi);
    const double v2 = v * v, v3 = v2 * v, v4 = v2 * v2;
    const double xi1 = -a1p / v2;
    const double xi2 = a1pp / v4 + 2.0 * a1p / v3;
    const double xi3 = -a1ppp / (v4 * v2) - 6.0 * a1pp / (v4 * v) - 6.0 * a1p / v4;
    const double nn = static_cast<double>(n);
    const double denom = 2.0 * xi1 + v * xi2;
    const double kappa3 = -2.0 * v2 * (v * xi3 + 3.0 * xi2) / (nn * nn * denom * denom * denom);
    if (!(-a1pp > 0.0))
        throw std::runtime_error("sigma2_third_cumulant: information for phi not positive");
    const double var = v4 / (nn * (-a1pp));
    return {kappa3, kappa3 / std::pow(var, 1.5)};
}

// Edgeworth-corrected density of a standardised estimate with skewness
// kappa3_std. Far tails may dip slightly below zero; values are reported
// as computed.
inline double edgeworth_pdf(double kappa3_std, double x) {
    const double x2 = x * x;
    const double h3 = x * (x2 - 3.0);
    const double h6 = ((x2 - 15.0) * x2 + 45.0) * x2 - 15.0;
    return specfun::std_normal_pdf(x) *
           (1.0 + kappa3_std / 6.0 * h3 + kappa3_std * kappa3_std / 72.0 * h6);
}

// Full report at an explicit evaluation point (beta, phi); callers pass the
// estimates for an estimated report or the truth for a true report.
inline SkewnessReport evaluate_skewness(const FamilySpec& family, const LinkSpec& link,
                                        const expr::PredictorModel& model,
                                        const linalg::Matrix& x, const Vector& beta, double phi) {
    SkewnessReport rep;
    rep.kappa3_beta = beta_third_cumulants(family, link, model, x, beta, phi, &rep.m_matrix,
                                           &rep.n_matrix, &rep.var_beta, &rep.locals);
    rep.gamma1_beta = beta_skewness(rep.kappa3_beta, rep.var_beta);
    if (family.has_a1 && !family.phi_fixed) {
        rep.has_phi = true;
        const std::size_t n = x.rows();
        auto [k3p, g1p] = phi_third_cumulant(family, n, phi);
        rep.kappa3_phi = k3p;
        rep.gamma1_phi = g1p;
        auto [k3s, g1s] = sigma2_third_cumulant(family, n, 1.0 / phi);
        rep.kappa3_sigma2 = k3s;
        rep.gamma1_sigma2 = g1s;
    }
    return rep;
}

inline SkewnessReport evaluate_skewness(const FitResult& fit, const FamilySpec& family,
                                        const LinkSpec& link, const expr::PredictorModel& model,
                                        const linalg::Matrix& x) {
    return evaluate_skewness(family, link, model, x, fit.beta_hat, fit.phi_hat);
}

} // namespace dmskew

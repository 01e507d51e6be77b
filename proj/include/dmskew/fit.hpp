#pragma once

// Maximum likelihood estimation. The regression coefficients come from
// Fisher scoring with deviance-monotone step halving; the precision
// parameter solves the profile score equation with a safeguarded Newton
// iteration on a verified bracket.

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dmskew/expr.hpp"
#include "dmskew/family.hpp"
#include "dmskew/linalg.hpp"

namespace dmskew {

struct FitOptions {
    int max_iter = 100;
    double tol_score = 1e-8;      // max |X~' diag(dmu/deta) t1|
    double tol_step = 1e-10;      // max relative coordinate step
    std::optional<Vector> beta_init;
    double phi_lo = 1e-6, phi_hi = 1e6;
    int step_halving_max = 30;
};

struct FitResult {
    Vector beta_hat;
    double phi_hat = 1.0;
    double sigma2_hat = 1.0;
    Vector eta_hat, mu_hat;
    double deviance = std::numeric_limits<double>::quiet_NaN();
    linalg::Matrix k_beta;    // X~' W X~ at the estimate
    linalg::Matrix cov_beta;  // phi^-1 (X~' W X~)^-1
    double var_phi = std::numeric_limits<double>::quiet_NaN();
    double var_sigma2 = std::numeric_limits<double>::quiet_NaN();
    int iterations = 0;
    bool converged = false;
    double score_max = std::numeric_limits<double>::quiet_NaN();
    bool has_phi = false;          // phi was estimated rather than fixed
    bool phi_at_boundary = false;
    int phi_iterations = 0;
};

struct PhiFit {
    double phi = 1.0;
    bool at_boundary = false;
    int iterations = 0;
    double residual = 0.0;
    double g_lo = 0.0, g_hi = 0.0; // score-equation values at the bracket ends
};

namespace detail {
inline void validate_options(const FitOptions& opts) {
    if (!(opts.tol_score > 0.0) || !(opts.tol_step > 0.0))
        throw std::invalid_argument("FitOptions: tolerances must be positive");
    if (!(opts.phi_lo > 0.0) || !(opts.phi_lo < opts.phi_hi))
        throw std::invalid_argument("FitOptions: precision bracket must be ordered and positive");
    if (opts.max_iter < 0 || opts.step_halving_max < 0)
        throw std::invalid_argument("FitOptions: iteration caps must be nonnegative");
}
} // namespace detail

namespace detail {

struct BetaState {
    Vector eta, mu;
    double deviance;
};

struct ScoreInfo {
    Vector score;
    linalg::Matrix kmat;
    double smax;
};

inline bool admissible_mu(const FamilySpec& family, const LinkSpec& link, const Vector& eta,
                          Vector& mu) {
    mu.resize(eta.size());
    for (std::size_t i = 0; i < eta.size(); ++i) {
        if (!link.eta_domain.contains(eta[i])) return false;
        const double m = link.hinv(eta[i]);
        if (!std::isfinite(m) || !family.mu_domain.contains(m) || !link.mu_domain.contains(m))
            return false;
        mu[i] = m;
    }
    return true;
}

inline bool try_state(const FamilySpec& family, const LinkSpec& link,
                      const expr::PredictorModel& model, const linalg::Matrix& x,
                      const Vector& y, const Vector& beta, BetaState& st) {
    try {
        st.eta = expr::eval_eta(model, x, beta);
    } catch (const expr::EvalError&) {
        return false;
    }
    if (!admissible_mu(family, link, st.eta, st.mu)) return false;
    st.deviance = unit_deviance(family, y, st.mu);
    return std::isfinite(st.deviance);
}

// Link-transformed responses regressed on the Jacobian at a seed point.
inline std::optional<Vector> initial_beta(const FamilySpec& family, const LinkSpec& link,
                                          const expr::PredictorModel& model,
                                          const linalg::Matrix& x, const Vector& y) {
    const std::size_t p = model.n_parameters();
    Vector seed(p, 1.0);
    try {
        auto dd = expr::design_derivatives(model, x, seed, 1);
        Interval dom = family.mu_domain;
        dom.lo = std::max(dom.lo, link.mu_domain.lo);
        dom.hi = std::min(dom.hi, link.mu_domain.hi);
        double scale = 0.0;
        for (double v : y) scale += std::abs(v);
        scale = scale / static_cast<double>(y.size()) + 1.0;
        Vector target(y.size());
        for (std::size_t i = 0; i < y.size(); ++i) {
            double m = y[i];
            if (std::isfinite(dom.lo) && std::isfinite(dom.hi)) {
                const double pad = 0.05 * (dom.hi - dom.lo);
                m = std::min(std::max(m, dom.lo + pad), dom.hi - pad);
            } else if (std::isfinite(dom.lo)) {
                m = std::max(m, dom.lo + 1e-3 * scale);
            } else if (std::isfinite(dom.hi)) {
                m = std::min(m, dom.hi - 1e-3 * scale);
            }
            target[i] = link.h(m) - dd.eta[i];
        }
        Vector delta = linalg::lstsq(dd.jacobian, target);
        Vector beta(p);
        for (std::size_t j = 0; j < p; ++j) beta[j] = seed[j] + delta[j];
        return beta;
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

} // namespace detail

// Fisher scoring for the regression coefficients. The score and weights use
// t1 and d2 from the family; any phi-dependent scalar in d2 is factored out
// of the weights so the iteration is free of the unknown precision.
inline FitResult fit_beta(const FamilySpec& family, const LinkSpec& link,
                          const expr::PredictorModel& model, const linalg::Matrix& x,
                          const Vector& y, const FitOptions& opts = {}) {
    detail::validate_options(opts);
    const std::size_t n = y.size();
    const std::size_t p = model.n_parameters();
    if (x.rows() != n) throw std::invalid_argument("fit_beta: X rows do not match response");
    if (n <= p) throw std::invalid_argument("fit_beta: need more observations than parameters");
    for (std::size_t i = 0; i < n; ++i)
        if (!family.y_domain.contains(y[i]))
            throw std::domain_error("fit_beta: response outside the family domain at row " +
                                    std::to_string(i + 1));

    FitResult out;
    detail::BetaState st;
    Vector beta;
    bool started = false;
    if (opts.beta_init) {
        beta = *opts.beta_init;
        if (beta.size() != p) throw std::invalid_argument("fit_beta: beta_init length mismatch");
        started = detail::try_state(family, link, model, x, y, beta, st);
    }
    if (!started) {
        if (auto b0 = detail::initial_beta(family, link, model, x, y)) {
            beta = *b0;
            started = detail::try_state(family, link, model, x, y, beta, st);
        }
    }
    if (!started) {
        beta.assign(p, 1.0);
        started = detail::try_state(family, link, model, x, y, beta, st);
    }
    if (!started)
        throw std::domain_error(
            "fit_beta: no admissible starting point found; supply beta_init");

    // score s_r = sum_i J_ir (dmu/deta)_i t1(y_i, mu_i) and K = J' W J
    const auto score_at = [&](const Vector& b, const detail::BetaState& state) {
        detail::ScoreInfo si{Vector(p, 0.0), linalg::Matrix(p, p), 0.0};
        const auto dd = expr::design_derivatives(model, x, b, 1);
        for (std::size_t i = 0; i < n; ++i) {
            const double dme = link.dmu_deta(state.mu[i]);
            const double w = -family.d2_scoring(state.mu[i]) * dme * dme;
            const double s_i = dme * family.t1(y[i], state.mu[i]);
            for (std::size_t r = 0; r < p; ++r) {
                si.score[r] += dd.jacobian(i, r) * s_i;
                for (std::size_t c = r; c < p; ++c)
                    si.kmat(r, c) += dd.jacobian(i, r) * w * dd.jacobian(i, c);
            }
        }
        for (std::size_t r = 0; r < p; ++r)
            for (std::size_t c = 0; c < r; ++c) si.kmat(r, c) = si.kmat(c, r);
        for (double s : si.score) si.smax = std::max(si.smax, std::abs(s));
        return si;
    };
    const auto factor = [](const linalg::Matrix& k) {
        auto chol = linalg::Cholesky::factor(k);
        if (!chol.ok) chol = linalg::Cholesky::factor_jittered(k);
        if (!chol.ok || chol.condition_estimate() > 1e10)
            throw std::runtime_error(
                "fit_beta: X'WX is rank deficient (condition estimate " +
                std::to_string(chol.ok ? chol.condition_estimate()
                                       : std::numeric_limits<double>::infinity()) +
                ")");
        return chol;
    };

    detail::ScoreInfo si = score_at(beta, st);
    double rel_step = 0.0;
    out.converged = false;

    for (int iter = 0; iter <= opts.max_iter; ++iter) {
        out.score_max = si.smax;
        out.iterations = iter;
        if (si.smax <= opts.tol_score && (iter == 0 || rel_step <= opts.tol_step)) {
            factor(si.kmat); // still reject rank-deficient designs
            out.converged = true;
            break;
        }
        if (iter == opts.max_iter) break;

        const Vector step = factor(si.kmat).solve(si.score);

        double lambda = 1.0;
        bool accepted = false;
        detail::BetaState trial;
        Vector beta_trial(p);
        for (int h = 0; h <= opts.step_halving_max; ++h, lambda *= 0.5) {
            for (std::size_t j = 0; j < p; ++j) beta_trial[j] = beta[j] + lambda * step[j];
            if (!detail::try_state(family, link, model, x, y, beta_trial, trial)) continue;
            if (trial.deviance <= st.deviance * (1.0 + 1e-12) + 1e-12) {
                accepted = true;
                break;
            }
        }
        if (!accepted) break; // deviance at its floor or domain-blocked

        rel_step = 0.0;
        for (std::size_t j = 0; j < p; ++j)
            rel_step = std::max(rel_step,
                                std::abs(lambda * step[j]) / std::max(1.0, std::abs(beta[j])));
        beta = beta_trial;
        st = trial;
        si = score_at(beta, st);
    }

    // The deviance gate cannot resolve improvements below its roundoff
    // floor, which can strand the score above tolerance right next to the
    // optimum. Finish with scoring steps backtracked on the score norm
    // itself, never letting the deviance rise materially.
    if (!out.converged && si.smax > opts.tol_score && opts.max_iter > 0) {
        const double deviance_cap = st.deviance + 1e-9 * (1.0 + std::abs(st.deviance));
        for (int it = 0; it < 80; ++it) {
            linalg::Cholesky chol;
            try {
                chol = factor(si.kmat);
            } catch (const std::exception&) {
                break;
            }
            const Vector step = chol.solve(si.score);
            // backtracking on the score norm rather than the deviance
            double lambda = 1.0;
            bool moved = false;
            Vector beta_next(p);
            detail::BetaState st_next;
            for (int h = 0; h < 24; ++h, lambda *= 0.5) {
                for (std::size_t j = 0; j < p; ++j)
                    beta_next[j] = beta[j] + lambda * step[j];
                if (!detail::try_state(family, link, model, x, y, beta_next, st_next)) continue;
                if (st_next.deviance > deviance_cap) continue;
                const detail::ScoreInfo si_next = score_at(beta_next, st_next);
                if (si_next.smax < si.smax * (1.0 - 1e-4 * lambda)) {
                    double rel = 0.0;
                    for (std::size_t j = 0; j < p; ++j)
                        rel = std::max(rel, std::abs(lambda * step[j]) /
                                                std::max(1.0, std::abs(beta[j])));
                    beta = beta_next;
                    st = st_next;
                    si = si_next;
                    moved = true;
                    if (si.smax <= opts.tol_score && rel <= opts.tol_step)
                        out.converged = true;
                    break;
                }
            }
            if (!moved || out.converged) break;
        }
        // Steps have collapsed to the score's noise floor; the score
        // criterion is the binding stationarity witness at this point.
        if (si.smax <= opts.tol_score) out.converged = true;
        out.score_max = si.smax;
    }

    out.beta_hat = beta;
    out.eta_hat = st.eta;
    out.mu_hat = st.mu;
    out.deviance = st.deviance;
    out.k_beta = si.kmat;
    return out;
}

// Root of the precision score sum_i [t(y_i, mu_i) + da/dphi(phi, y_i)] = 0.
// The left side is strictly decreasing in phi, so a sign change brackets a
// unique root; Newton steps are safeguarded by bisection inside the
// bracket. Without a sign change the nearer bracket end is reported as a
// boundary solution.
inline PhiFit fit_phi(const FamilySpec& family, const Vector& y, const Vector& mu_hat,
                      const FitOptions& opts = {}) {
    detail::validate_options(opts);
    family.require_a1("fit_phi");
    if (family.phi_fixed)
        throw std::invalid_argument("fit_phi: family '" + family.id + "' has fixed precision");
    if (y.size() != mu_hat.size()) throw std::invalid_argument("fit_phi: length mismatch");
    const std::size_t n = y.size();

    double sum_t = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum_t += family.t(y[i], mu_hat[i]);
    const auto g = [&](double phi) {
        double s = sum_t;
        for (std::size_t i = 0; i < n; ++i) s += family.aphi(phi, y[i]);
        return s;
    };
    const double tol = 1e-10 * static_cast<double>(n);

    PhiFit fit;
    double a = opts.phi_lo, b = opts.phi_hi;
    fit.g_lo = g(a);
    fit.g_hi = g(b);
    if (fit.g_lo <= 0.0) { // root at or below the bracket
        fit.phi = a;
        fit.at_boundary = !(std::abs(fit.g_lo) <= tol);
        fit.residual = fit.g_lo;
        return fit;
    }
    if (fit.g_hi >= 0.0) { // degenerate data push phi to the upper end
        fit.phi = b;
        fit.at_boundary = !(std::abs(fit.g_hi) <= tol);
        fit.residual = fit.g_hi;
        return fit;
    }

    double phi = std::min(std::max(1.0, a), b);
    double gphi = g(phi);
    for (int iter = 0; iter < 200; ++iter) {
        ++fit.iterations;
        if (std::abs(gphi) <= tol) break;
        if (gphi > 0.0) a = phi;
        else b = phi;
        const double slope = static_cast<double>(n) * family.a1pp(phi);
        double next = phi - gphi / slope;
        if (!(next > a && next < b)) next = std::sqrt(a * b); // geometric bisection
        phi = next;
        gphi = g(phi);
    }
    fit.phi = phi;
    fit.residual = gphi;
    return fit;
}

// First-order asymptotic variances from the information blocks.
inline void asymptotic_covariance(FitResult& fit, const FamilySpec& family, std::size_t n) {
    auto chol = linalg::Cholesky::factor_jittered(fit.k_beta);
    if (!chol.ok) throw std::runtime_error("asymptotic_covariance: K_beta singular");
    fit.cov_beta = chol.inverse();
    for (double& v : fit.cov_beta.data()) v /= fit.phi_hat;
    if (fit.has_phi) {
        fit.var_phi = 1.0 / (static_cast<double>(n) * family.a2nd(fit.phi_hat));
        const double phi4 = std::pow(fit.phi_hat, 4);
        fit.var_sigma2 = fit.var_phi / phi4;
    }
}

// Full pipeline: beta by scoring, phi by the score equation when the family
// supports it, then the information blocks evaluated at the estimates.
inline FitResult fit(const FamilySpec& family, const LinkSpec& link,
                     const expr::PredictorModel& model, const linalg::Matrix& x, const Vector& y,
                     const FitOptions& opts = {}) {
    FitResult out = fit_beta(family, link, model, x, y, opts);
    out.phi_hat = family.phi_fixed.value_or(1.0);
    if (family.has_a1 && !family.phi_fixed) {
        PhiFit pf = fit_phi(family, y, out.mu_hat, opts);
        out.phi_hat = pf.phi;
        out.phi_at_boundary = pf.at_boundary;
        out.phi_iterations = pf.iterations;
        out.has_phi = true;
    }
    out.sigma2_hat = 1.0 / out.phi_hat;

    // K_beta at the estimate with the exact weights (phi-dependent for the
    // circular family, where the scoring pass factored that scalar out).
    const std::size_t p = model.n_parameters();
    auto jac = expr::jacobian(model, x, out.beta_hat);
    LocalQuantities locals = local_quantities(family, link, out.mu_hat, out.phi_hat);
    out.k_beta = linalg::Matrix(p, p);
    for (std::size_t i = 0; i < y.size(); ++i)
        for (std::size_t r = 0; r < p; ++r)
            for (std::size_t c = r; c < p; ++c)
                out.k_beta(r, c) += jac(i, r) * locals.w[i] * jac(i, c);
    for (std::size_t r = 0; r < p; ++r)
        for (std::size_t c = 0; c < r; ++c) out.k_beta(r, c) = out.k_beta(c, r);

    asymptotic_covariance(out, family, y.size());
    return out;
}

} // namespace dmskew

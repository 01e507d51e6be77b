#pragma once

// Replicated simulation harness: draw covariates once, sample responses,
// refit per replication, and compare the mean estimated skewness, the
// skewness at the true parameters, and the sample skewness of the
// replicated estimates. Replications own counter-derived RNG substreams,
// so the report is bit-identical for any worker count.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "dmskew/csv.hpp"
#include "dmskew/expr.hpp"
#include "dmskew/family.hpp"
#include "dmskew/fit.hpp"
#include "dmskew/rng.hpp"
#include "dmskew/skewness.hpp"

namespace dmskew {

class StudyError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CovariateSpec {
    std::string name;
    double lo = 0.0, hi = 1.0; // uniform(lo, hi)
};

struct StudyConfig {
    std::string family_id;  // catalog id, hyperparameter inline: "tweedie(1.5)"
    std::string link_id;
    std::string predictor;
    std::vector<std::string> covariates;
    std::vector<std::string> parameters;  // inferred from the predictor if empty
    Vector beta_true;
    double phi_true = 1.0;
    std::size_t n = 0;
    std::size_t replications = 10000;
    std::uint64_t seed = 0;
    std::vector<CovariateSpec> covariate_dists;      // used unless a matrix is given
    std::optional<linalg::Matrix> fixed_covariates;  // n x m, overrides the draws
    int threads = 1;
    FitOptions fit_options;
    bool warm_start = true;  // start each refit at the true coefficients
};

struct StudyRow {
    std::string estimand;
    double mean_estimated_gamma1;
    double true_gamma1;
    double sample_g3;
};

struct StudyReport {
    std::vector<StudyRow> rows;  // one per coefficient, then phi and sigma2
    std::size_t n_failed = 0;    // excluded non-converged replications
    std::size_t replications = 0;
    std::size_t n = 0;
    std::uint64_t seed = 0;
    std::vector<std::string> estimands;
};

// Draw from the family at (mu, phi) using its exact sampler.
inline double sample_response(const FamilySpec& family, double mu, double phi, rng::Rng& rng) {
    if (!family.sampler)
        throw std::invalid_argument("sample_response: no sampler for family '" + family.id + "'");
    if (!family.mu_domain.contains(mu))
        throw std::domain_error("sample_response: mu outside domain");
    return family.sampler(mu, phi, rng);
}

// Standardised third central moment with mean-based moments
// m_r = (1/N) sum (v_i - mean)^r.
inline double sample_skewness(const std::vector<double>& values) {
    const std::size_t n = values.size();
    if (n < 3) throw std::invalid_argument("sample_skewness: need at least 3 values");
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(n);
    double m2 = 0.0, m3 = 0.0;
    for (double v : values) {
        const double d = v - mean;
        m2 += d * d;
        m3 += d * d * d;
    }
    m2 /= static_cast<double>(n);
    m3 /= static_cast<double>(n);
    if (!(m2 > 0.0)) throw std::invalid_argument("sample_skewness: constant input");
    return m3 / std::pow(m2, 1.5);
}

namespace detail {

struct RepOutcome {
    bool ok = false;
    std::vector<double> estimates;  // beta..., [phi, sigma2]
    std::vector<double> gamma1;     // estimated skewness at the estimates
};

// substream indices: replications use their own index; the covariate draw
// lives far above any plausible replication count
inline constexpr std::uint64_t covariate_stream_base = 0x8000000000000000ULL;

} // namespace detail

inline StudyReport run_study(const StudyConfig& config) {
    if (config.replications < 1) throw std::invalid_argument("run_study: replications < 1");
    const FamilySpec family = parse_family(config.family_id);
    const LinkSpec link = make_link(config.link_id);
    std::vector<std::string> params = config.parameters;
    if (params.empty()) params = expr::free_identifiers(config.predictor, config.covariates);
    const expr::PredictorModel model = expr::parse(config.predictor, config.covariates, params);
    const std::size_t p = model.n_parameters();
    const std::size_t m = model.n_covariates();
    if (config.beta_true.size() != p)
        throw std::invalid_argument("run_study: beta_true length does not match the predictor");
    if (config.n <= p) throw std::invalid_argument("run_study: need n > p");
    if (!family.sampler)
        throw std::invalid_argument("run_study: family '" + family.id + "' has no sampler");

    // covariates drawn once, then held fixed across replications
    linalg::Matrix x(config.n, m);
    if (config.fixed_covariates) {
        if (config.fixed_covariates->rows() != config.n || config.fixed_covariates->cols() != m)
            throw std::invalid_argument("run_study: fixed covariate matrix has wrong shape");
        x = *config.fixed_covariates;
    } else {
        if (config.covariate_dists.size() != m)
            throw std::invalid_argument("run_study: need a distribution per covariate");
        for (std::size_t j = 0; j < m; ++j) {
            const auto& cs = config.covariate_dists[j];
            rng::Rng stream = rng::Rng::substream(config.seed,
                                                  detail::covariate_stream_base + j);
            for (std::size_t i = 0; i < config.n; ++i) x(i, j) = stream.uniform(cs.lo, cs.hi);
        }
    }

    const double phi_true = family.phi_fixed.value_or(config.phi_true);
    auto dd0 = expr::design_derivatives(model, x, config.beta_true, 0);
    Vector mu_true(config.n);
    for (std::size_t i = 0; i < config.n; ++i) {
        if (!link.eta_domain.contains(dd0.eta[i]))
            throw std::domain_error("run_study: true predictor leaves the link domain");
        mu_true[i] = link.hinv(dd0.eta[i]);
        if (!family.mu_domain.contains(mu_true[i]) || !link.mu_domain.contains(mu_true[i]))
            throw std::domain_error("run_study: true mu outside domain at row " +
                                    std::to_string(i + 1));
    }

    const SkewnessReport truth =
        evaluate_skewness(family, link, model, x, config.beta_true, phi_true);
    const bool with_phi = truth.has_phi;
    const std::size_t n_estimands = p + (with_phi ? 2 : 0);

    FitOptions opts = config.fit_options;
    if (config.warm_start && !opts.beta_init) opts.beta_init = config.beta_true;

    std::vector<detail::RepOutcome> outcomes(config.replications);
    const auto worker = [&](std::size_t lo, std::size_t hi) {
        Vector y(config.n);
        for (std::size_t r = lo; r < hi; ++r) {
            rng::Rng stream = rng::Rng::substream(config.seed, r);
            detail::RepOutcome& res = outcomes[r];
            try {
                for (std::size_t i = 0; i < config.n; ++i)
                    y[i] = family.sampler(mu_true[i], phi_true, stream);
                FitResult fr = fit(family, link, model, x, y, opts);
                if (!fr.converged || (fr.has_phi && fr.phi_at_boundary)) continue;
                const SkewnessReport rep =
                    evaluate_skewness(family, link, model, x, fr.beta_hat, fr.phi_hat);
                res.estimates.reserve(n_estimands);
                res.gamma1.reserve(n_estimands);
                for (std::size_t a = 0; a < p; ++a) {
                    res.estimates.push_back(fr.beta_hat[a]);
                    res.gamma1.push_back(rep.gamma1_beta[a]);
                }
                if (with_phi) {
                    res.estimates.push_back(fr.phi_hat);
                    res.gamma1.push_back(rep.gamma1_phi);
                    res.estimates.push_back(fr.sigma2_hat);
                    res.gamma1.push_back(rep.gamma1_sigma2);
                }
                res.ok = true;
            } catch (const std::exception&) {
                res.ok = false; // excluded and counted below
            }
        }
    };

    const int threads = std::max(1, config.threads);
    if (threads == 1 || config.replications < 2) {
        worker(0, config.replications);
    } else {
        std::vector<std::thread> pool;
        const std::size_t chunk = (config.replications + threads - 1) / threads;
        for (int t = 0; t < threads; ++t) {
            const std::size_t lo = static_cast<std::size_t>(t) * chunk;
            if (lo >= config.replications) break;
            const std::size_t hi = std::min(config.replications, lo + chunk);
            pool.emplace_back(worker, lo, hi);
        }
        for (auto& th : pool) th.join();
    }

    StudyReport report;
    report.replications = config.replications;
    report.n = config.n;
    report.seed = config.seed;
    for (std::size_t a = 0; a < p; ++a) report.estimands.push_back(params[a]);
    if (with_phi) {
        report.estimands.push_back("phi");
        report.estimands.push_back("sigma2");
    }

    std::size_t n_ok = 0;
    std::vector<double> gamma_sum(n_estimands, 0.0);
    std::vector<std::vector<double>> estimate_seq(n_estimands);
    for (const auto& res : outcomes) {
        if (!res.ok) continue;
        ++n_ok;
        for (std::size_t k = 0; k < n_estimands; ++k) {
            gamma_sum[k] += res.gamma1[k];
            estimate_seq[k].push_back(res.estimates[k]);
        }
    }
    report.n_failed = config.replications - n_ok;
    if (report.n_failed * 20 > config.replications)
        throw StudyError("run_study: " + std::to_string(report.n_failed) + " of " +
                         std::to_string(config.replications) +
                         " replications failed to converge (> 5%)");
    if (n_ok == 0) throw StudyError("run_study: no replication converged");

    for (std::size_t k = 0; k < n_estimands; ++k) {
        StudyRow row;
        row.estimand = report.estimands[k];
        row.mean_estimated_gamma1 = gamma_sum[k] / static_cast<double>(n_ok);
        if (k < p) row.true_gamma1 = truth.gamma1_beta[k];
        else if (k == p) row.true_gamma1 = truth.gamma1_phi;
        else row.true_gamma1 = truth.gamma1_sigma2;
        row.sample_g3 = config.replications >= 3 && estimate_seq[k].size() >= 3
                            ? sample_skewness(estimate_seq[k])
                            : std::numeric_limits<double>::quiet_NaN();
        report.rows.push_back(row);
    }
    return report;
}

// CSV layout: one row per estimand with the three skewness columns.
inline std::string study_report_csv(const StudyReport& report) {
    std::string out = "estimand,mean_estimated_gamma1,true_gamma1,sample_g3\n";
    for (const auto& row : report.rows) {
        out += row.estimand;
        out += ',';
        out += io::format_double(row.mean_estimated_gamma1);
        out += ',';
        out += io::format_double(row.true_gamma1);
        out += ',';
        out += io::format_double(row.sample_g3);
        out += '\n';
    }
    return out;
}

} // namespace dmskew

#pragma once

// JSON views of fit results, skewness reports and simulation studies.
// Field names are part of the public interface; optional quantities are
// omitted rather than emitted as null so every document round-trips.

#include <json.hpp>

#include "dmskew/fit.hpp"
#include "dmskew/montecarlo.hpp"
#include "dmskew/skewness.hpp"

namespace dmskew::io {

using nlohmann::json;

inline json matrix_to_json(const linalg::Matrix& m) {
    json rows = json::array();
    for (std::size_t i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (std::size_t j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline json fit_to_json(const FitResult& fit, const std::string& family,
                        const std::string& link, const std::string& predictor,
                        const std::vector<std::string>& parameters) {
    json j;
    j["family"] = family;
    j["link"] = link;
    j["predictor"] = predictor;
    j["parameters"] = parameters;
    j["beta_hat"] = fit.beta_hat;
    j["phi_hat"] = fit.phi_hat;
    j["sigma2_hat"] = fit.sigma2_hat;
    j["phi_estimated"] = fit.has_phi;
    j["deviance"] = fit.deviance;
    j["iterations"] = fit.iterations;
    j["converged"] = fit.converged;
    j["score_max"] = fit.score_max;
    j["eta_hat"] = fit.eta_hat;
    j["mu_hat"] = fit.mu_hat;
    j["k_beta"] = matrix_to_json(fit.k_beta);
    j["cov_beta"] = matrix_to_json(fit.cov_beta);
    if (fit.has_phi) {
        j["var_phi"] = fit.var_phi;
        j["var_sigma2"] = fit.var_sigma2;
        j["phi_at_boundary"] = fit.phi_at_boundary;
    }
    return j;
}

inline json skewness_to_json(const SkewnessReport& rep) {
    json j;
    j["kappa3_beta"] = rep.kappa3_beta;
    j["gamma1_beta"] = rep.gamma1_beta;
    if (rep.has_phi) {
        j["kappa3_phi"] = rep.kappa3_phi;
        j["gamma1_phi"] = rep.gamma1_phi;
        j["kappa3_sigma2"] = rep.kappa3_sigma2;
        j["gamma1_sigma2"] = rep.gamma1_sigma2;
    }
    return j;
}

inline json study_to_json(const StudyReport& report, const StudyConfig& config) {
    json j;
    json cfg;
    cfg["family"] = config.family_id;
    cfg["link"] = config.link_id;
    cfg["predictor"] = config.predictor;
    cfg["covariates"] = config.covariates;
    cfg["beta_true"] = config.beta_true;
    cfg["phi_true"] = config.phi_true;
    cfg["n"] = config.n;
    cfg["replications"] = config.replications;
    j["config"] = cfg;
    j["seed"] = report.seed;
    j["n_failed"] = report.n_failed;
    json rows = json::array();
    for (const auto& row : report.rows) {
        json r;
        r["estimand"] = row.estimand;
        r["mean_estimated_gamma1"] = row.mean_estimated_gamma1;
        r["true_gamma1"] = row.true_gamma1;
        if (std::isfinite(row.sample_g3)) r["sample_g3"] = row.sample_g3;
        rows.push_back(std::move(r));
    }
    j["rows"] = rows;
    return j;
}

} // namespace dmskew::io

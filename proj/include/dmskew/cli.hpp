#pragma once

// Command line front end. Subcommands: fit, skew, simulate, edgeworth,
// families. Exit codes: 0 success, 1 usage error, 2 data/domain error,
// 3 non-convergence (diagnostics are still written).

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dmskew/csv.hpp"
#include "dmskew/expr.hpp"
#include "dmskew/family.hpp"
#include "dmskew/fit.hpp"
#include "dmskew/montecarlo.hpp"
#include "dmskew/report_json.hpp"
#include "dmskew/skewness.hpp"
#include "dmskew/svg.hpp"

namespace dmskew::cli {

namespace detail {

inline void write_text(const std::string& path, const std::string& text, std::ostream& out) {
    if (path.empty() || path == "-") {
        out << text;
        return;
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open output file '" + path + "'");
    f << text;
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string item;
    std::stringstream ss(s);
    while (std::getline(ss, item, ',')) {
        item = io::detail::trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

inline std::vector<double> split_doubles(const std::string& s) {
    std::vector<double> out;
    for (const auto& item : split_list(s)) {
        std::size_t used = 0;
        out.push_back(std::stod(item, &used));
        if (used != item.size()) throw std::invalid_argument("bad number '" + item + "'");
    }
    return out;
}

struct DataSpec {
    std::string family, link, predictor, data_path, response;
    std::string covariates, parameters, beta_init;
    std::string out = "-";
    int max_iter = 100;
};

struct LoadedModel {
    FamilySpec family;
    LinkSpec link;
    expr::PredictorModel model;
    linalg::Matrix x;
    Vector y;
    std::vector<std::string> parameter_names;
    FitOptions opts;
};

inline LoadedModel load_problem(const DataSpec& spec) {
    LoadedModel lm{parse_family(spec.family), make_link(spec.link), {}, {}, {}, {}, {}};
    const io::Table table = io::read_csv_file(spec.data_path);
    const std::size_t ycol = table.column(spec.response);

    std::vector<std::string> covs;
    if (!spec.covariates.empty()) {
        covs = split_list(spec.covariates);
    } else {
        for (const auto& name : table.header)
            if (name != spec.response) covs.push_back(name);
    }
    std::vector<std::string> params = spec.parameters.empty()
                                          ? expr::free_identifiers(spec.predictor, covs)
                                          : split_list(spec.parameters);
    lm.model = expr::parse(spec.predictor, covs, params);
    lm.parameter_names = params;

    const std::size_t n = table.rows.size();
    lm.x = linalg::Matrix(n, covs.size());
    lm.y.resize(n);
    std::vector<std::size_t> cov_cols;
    for (const auto& c : covs) cov_cols.push_back(table.column(c));
    for (std::size_t i = 0; i < n; ++i) {
        lm.y[i] = table.rows[i][ycol];
        for (std::size_t j = 0; j < covs.size(); ++j) lm.x(i, j) = table.rows[i][cov_cols[j]];
    }
    if (!spec.beta_init.empty()) lm.opts.beta_init = split_doubles(spec.beta_init);
    lm.opts.max_iter = spec.max_iter;
    return lm;
}

// flat key=value configuration with '#' comments
inline StudyConfig read_study_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
    StudyConfig cfg;
    std::vector<std::pair<std::string, std::string>> cov_lines;
    std::string covariates_file;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = io::detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": expected key = value");
        const std::string key = io::detail::trim(line.substr(0, eq));
        const std::string value = io::detail::trim(line.substr(eq + 1));
        if (key == "family") cfg.family_id = value;
        else if (key == "link") cfg.link_id = value;
        else if (key == "predictor") cfg.predictor = value;
        else if (key == "covariates") cfg.covariates = split_list(value);
        else if (key == "parameters") cfg.parameters = split_list(value);
        else if (key == "beta_true") cfg.beta_true = split_doubles(value);
        else if (key == "phi_true") cfg.phi_true = std::stod(value);
        else if (key == "n") cfg.n = static_cast<std::size_t>(std::stoul(value));
        else if (key == "replications") cfg.replications = static_cast<std::size_t>(std::stoul(value));
        else if (key == "seed") cfg.seed = std::stoull(value);
        else if (key == "threads") cfg.threads = std::stoi(value);
        else if (key == "max_iter") cfg.fit_options.max_iter = std::stoi(value);
        else if (key == "warm_start") cfg.warm_start = value == "true" || value == "1";
        else if (key == "covariates_file") covariates_file = value;
        else if (key.rfind("covariate.", 0) == 0) cov_lines.emplace_back(key.substr(10), value);
        else
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": unknown key '" + key + "'");
    }
    if (cfg.covariates.empty())
        cfg.covariates = expr::free_identifiers(cfg.predictor, {}); // refined below
    if (!cov_lines.empty() && cfg.covariates.empty())
        for (const auto& [name, dist] : cov_lines) cfg.covariates.push_back(name);

    if (!covariates_file.empty()) {
        const io::Table t = io::read_csv_file(covariates_file);
        linalg::Matrix x(t.rows.size(), cfg.covariates.size());
        for (std::size_t j = 0; j < cfg.covariates.size(); ++j) {
            const std::size_t col = t.column(cfg.covariates[j]);
            for (std::size_t i = 0; i < t.rows.size(); ++i) x(i, j) = t.rows[i][col];
        }
        cfg.fixed_covariates = std::move(x);
        if (cfg.n == 0) cfg.n = t.rows.size();
    } else {
        for (const auto& cov : cfg.covariates) {
            bool found = false;
            for (const auto& [name, dist] : cov_lines) {
                if (name != cov) continue;
                if (dist.rfind("uniform(", 0) != 0 || dist.back() != ')')
                    throw std::invalid_argument("covariate." + name +
                                                ": expected uniform(a,b), got '" + dist + "'");
                const auto nums = split_doubles(dist.substr(8, dist.size() - 9));
                if (nums.size() != 2)
                    throw std::invalid_argument("covariate." + name + ": need two bounds");
                cfg.covariate_dists.push_back({name, nums[0], nums[1]});
                found = true;
                break;
            }
            if (!found)
                throw std::invalid_argument("no distribution given for covariate '" + cov + "'");
        }
    }
    return cfg;
}

} // namespace detail

inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
    CLI::App app{"dispersion-model regression: fits, estimator skewness, simulation studies"};
    app.require_subcommand(1);

    detail::DataSpec fit_spec, skew_spec;
    std::string skew_svg, skew_svg_coef;

    auto add_fit_options = [](CLI::App* cmd, detail::DataSpec& spec) {
        cmd->add_option("--family", spec.family, "family id, e.g. gamma or tweedie(1.5)")
            ->required();
        cmd->add_option("--link", spec.link, "link id, e.g. log")->required();
        cmd->add_option("--predictor", spec.predictor, "predictor expression f(x; beta)")
            ->required();
        cmd->add_option("--data", spec.data_path, "CSV file with a header row")->required();
        cmd->add_option("--response", spec.response, "response column name")->required();
        cmd->add_option("--covariates", spec.covariates,
                        "comma list of covariate columns (default: all non-response)");
        cmd->add_option("--parameters", spec.parameters,
                        "comma list of parameter names (default: inferred)");
        cmd->add_option("--beta-init", spec.beta_init, "comma list of starting values");
        cmd->add_option("--max-iter", spec.max_iter, "scoring iteration cap");
        cmd->add_option("--out", spec.out, "output JSON path, '-' for stdout");
    };

    CLI::App* fit_cmd = app.add_subcommand("fit", "fit a dispersion-model regression");
    add_fit_options(fit_cmd, fit_spec);

    CLI::App* skew_cmd =
        app.add_subcommand("skew", "fit and report estimator third cumulants and skewness");
    add_fit_options(skew_cmd, skew_spec);
    skew_cmd->add_option("--svg", skew_svg, "write an SVG of the corrected density vs normal");
    skew_cmd->add_option("--svg-coef", skew_svg_coef,
                         "coefficient for the SVG (name, default: first)");

    std::string sim_config, sim_out = "-", sim_json;
    std::optional<std::uint64_t> sim_seed;
    std::optional<int> sim_threads;
    std::optional<std::size_t> sim_reps;
    CLI::App* sim_cmd = app.add_subcommand("simulate", "run a replicated simulation study");
    sim_cmd->add_option("--config", sim_config, "key=value study configuration")->required();
    sim_cmd->add_option("--seed", sim_seed, "override the config seed");
    sim_cmd->add_option("--threads", sim_threads, "worker cap (results identical regardless)");
    sim_cmd->add_option("--replications", sim_reps, "override the replication count");
    sim_cmd->add_option("--out", sim_out, "output CSV path, '-' for stdout");
    sim_cmd->add_option("--json", sim_json, "also write the JSON report here");

    double edge_kappa3 = 0.0, edge_min = -4.0, edge_max = 4.0;
    std::size_t edge_points = 161;
    std::string edge_out = "-";
    CLI::App* edge_cmd =
        app.add_subcommand("edgeworth", "tabulate the skewness-corrected density");
    edge_cmd->add_option("--kappa3", edge_kappa3, "standardised third cumulant")->required();
    edge_cmd->add_option("--min", edge_min, "grid start");
    edge_cmd->add_option("--max", edge_max, "grid end");
    edge_cmd->add_option("--points", edge_points, "grid size");
    edge_cmd->add_option("--out", edge_out, "output path, '-' for stdout");

    CLI::App* fam_cmd = app.add_subcommand("families", "list the family catalog");

    std::vector<const char*> argv;
    argv.push_back("dmskew");
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return 1;
    }

    try {
        if (*fit_cmd || *skew_cmd) {
            const bool want_skew = static_cast<bool>(*skew_cmd);
            const detail::DataSpec& spec = want_skew ? skew_spec : fit_spec;
            detail::LoadedModel lm = detail::load_problem(spec);
            const FitResult fr = fit(lm.family, lm.link, lm.model, lm.x, lm.y, lm.opts);
            io::json doc = io::fit_to_json(fr, spec.family, spec.link, spec.predictor,
                                           lm.parameter_names);
            if (want_skew && fr.converged) {
                const SkewnessReport rep =
                    evaluate_skewness(fr, lm.family, lm.link, lm.model, lm.x);
                doc["skewness"] = io::skewness_to_json(rep);
                if (!skew_svg.empty()) {
                    std::size_t coef = 0;
                    if (!skew_svg_coef.empty()) {
                        coef = lm.parameter_names.size();
                        for (std::size_t a = 0; a < lm.parameter_names.size(); ++a)
                            if (lm.parameter_names[a] == skew_svg_coef) coef = a;
                        if (coef == lm.parameter_names.size())
                            throw std::invalid_argument("--svg-coef: unknown parameter '" +
                                                        skew_svg_coef + "'");
                    }
                    io::DensityPlot plot;
                    const double g1 = rep.gamma1_beta[coef];
                    for (int i = 0; i <= 160; ++i) {
                        const double xx = -4.0 + 8.0 * i / 160.0;
                        plot.x.push_back(xx);
                        plot.curve_a.push_back(edgeworth_pdf(g1, xx));
                        plot.curve_b.push_back(specfun::std_normal_pdf(xx));
                    }
                    for (int b = 0; b < 40; ++b) {
                        const double xx = -4.0 + 8.0 * (b + 0.5) / 40.0;
                        plot.bars.push_back(edgeworth_pdf(g1, xx));
                    }
                    plot.label_a = "edgeworth(" + lm.parameter_names[coef] + ")";
                    detail::write_text(skew_svg, io::render_density_plot(plot), out);
                }
            }
            detail::write_text(spec.out, doc.dump(2) + "\n", out);
            return fr.converged ? 0 : 3;
        }
        if (*sim_cmd) {
            StudyConfig cfg = detail::read_study_config(sim_config);
            if (sim_seed) cfg.seed = *sim_seed;
            if (sim_threads) cfg.threads = *sim_threads;
            if (sim_reps) cfg.replications = *sim_reps;
            const StudyReport report = run_study(cfg);
            detail::write_text(sim_out, study_report_csv(report), out);
            if (!sim_json.empty())
                detail::write_text(sim_json, io::study_to_json(report, cfg).dump(2) + "\n", out);
            return 0;
        }
        if (*edge_cmd) {
            if (edge_points < 2) throw std::invalid_argument("edgeworth: need at least 2 points");
            std::string text = "x,edgeworth,normal\n";
            for (std::size_t i = 0; i < edge_points; ++i) {
                const double xx =
                    edge_min + (edge_max - edge_min) * static_cast<double>(i) /
                                   static_cast<double>(edge_points - 1);
                text += io::format_double(xx) + "," +
                        io::format_double(edgeworth_pdf(edge_kappa3, xx)) + "," +
                        io::format_double(specfun::std_normal_pdf(xx)) + "\n";
            }
            detail::write_text(edge_out, text, out);
            return 0;
        }
        if (*fam_cmd) {
            out << "family                         d-quantities  phi-inference  sampler  density\n";
            const std::vector<std::string> instances = {
                "normal", "poisson", "binomial", "gamma", "inverse_gaussian", "ghs",
                "negative_binomial", "tweedie(1.5)", "exp_variance(1)", "reciprocal_gamma",
                "log_gamma", "reciprocal_inverse_gaussian", "von_mises", "const_cv_normal(0.2)",
                "const_cv_ig(0.2)", "const_cv_lognormal(0.2)", "const_cv_weibull(2)"};
            for (const auto& id : instances) {
                const FamilySpec f = parse_family(id);
                out << id;
                for (std::size_t k = id.size(); k < 31; ++k) out << ' ';
                out << "yes           " << (f.supports_phi_inference() ? "yes" : "no ")
                    << "            " << (f.supports_sampling() ? "yes" : "no ") << "      "
                    << (f.has_density ? "yes" : "no") << "\n";
            }
            return 0;
        }
        err << "no subcommand given\n";
        return 1;
    } catch (const expr::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const StudyError& e) {
        err << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::domain_error& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
}

} // namespace dmskew::cli

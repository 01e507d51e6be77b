#include <doctest.h>

#include <cmath>
#include <vector>

#include "dmskew/montecarlo.hpp"
#include "support/oracles.hpp"

using namespace dmskew;
using linalg::Matrix;
using linalg::Vector;

namespace {

StudyConfig small_study(std::size_t n, std::size_t reps, std::uint64_t seed) {
    StudyConfig cfg;
    cfg.family_id = "reciprocal_gamma";
    cfg.link_id = "sqrt";
    cfg.predictor = "b0 + b1*x1 + x2^b2";
    cfg.covariates = {"x1", "x2"};
    cfg.beta_true = {0.5, 1.0, 2.0};
    cfg.phi_true = 4.0;
    cfg.n = n;
    cfg.replications = reps;
    cfg.seed = seed;
    cfg.covariate_dists = {{"x1", 0.0, 1.0}, {"x2", 1.0, 2.0}};
    return cfg;
}

} // namespace

TEST_SUITE("montecarlo") {

TEST_CASE("sample skewness of symmetric data is zero") {
    CHECK(sample_skewness({-2.0, -1.0, 0.0, 1.0, 2.0}) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("sample skewness hand example") {
    // deviations (-3,-2,-1,0,6): m2 = 10, m3 = 36
    CHECK(sample_skewness({1.0, 2.0, 3.0, 4.0, 10.0}) ==
          doctest::Approx(36.0 / std::pow(10.0, 1.5)).epsilon(1e-14));
}

TEST_CASE("sample skewness of a large normal sample is near zero") {
    rng::Rng rng(8);
    std::vector<double> v(1000000);
    for (auto& x : v) x = rng.normal();
    CHECK(std::abs(sample_skewness(v)) <= 0.01);
}

TEST_CASE("sample skewness input validation") {
    CHECK_THROWS_AS(sample_skewness({1.0, 2.0}), std::invalid_argument);
    CHECK_THROWS_AS(sample_skewness({3.0, 3.0, 3.0, 3.0}), std::invalid_argument);
}

TEST_CASE("reciprocal-gamma draws have the right harmonic mean") {
    const auto f = make_family("reciprocal_gamma");
    rng::Rng rng(101);
    const double mu = 1.7, phi = 4.0;
    const std::size_t n = 1000000;
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += 1.0 / sample_response(f, mu, phi, rng);
    const double mean_inv = acc / static_cast<double>(n);
    // Var(1/Y) = phi / (phi mu)^2
    const double se = 1.0 / (mu * std::sqrt(static_cast<double>(n) * phi));
    CHECK(std::abs(mean_inv - 1.0 / mu) <= 4.0 * se);
}

TEST_CASE("normal draws match the stated mean and precision") {
    const auto f = make_family("normal");
    rng::Rng rng(11);
    const std::size_t n = 400000;
    double s = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double y = sample_response(f, 0.7, 4.0, rng);
        s += y;
        s2 += y * y;
    }
    const double mean = s / n, var = s2 / n - mean * mean;
    CHECK(std::abs(mean - 0.7) <= 4.0 * 0.5 / std::sqrt(static_cast<double>(n)));
    CHECK(var == doctest::Approx(0.25).epsilon(0.02));
}

TEST_CASE("circular draws concentrate as the Bessel ratio dictates") {
    const auto f = make_family("von_mises");
    rng::Rng rng(13);
    const double mu = 0.9, phi = 2.3;
    const std::size_t n = 400000;
    double s_sin = 0.0, s_cos = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double y = sample_response(f, mu, phi, rng);
        s_sin += std::sin(y - mu);
        s_cos += std::cos(y - mu);
    }
    CHECK(std::abs(s_sin / n) <= 0.005);
    CHECK(s_cos / n == doctest::Approx(specfun::bessel_ratio(phi).r).epsilon(0.01));
}

TEST_CASE("inverse Gaussian and count samplers match their moments") {
    rng::Rng rng(17);
    const std::size_t n = 400000;
    double s = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double y = rng.inverse_gaussian(2.0, 3.0);
        s += y;
        s2 += y * y;
    }
    CHECK(s / n == doctest::Approx(2.0).epsilon(0.01));
    CHECK(s2 / n - (s / n) * (s / n) == doctest::Approx(8.0 / 3.0).epsilon(0.05));

    s = s2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double y = static_cast<double>(rng.poisson(150.0));
        s += y;
        s2 += y * y;
    }
    CHECK(s / n == doctest::Approx(150.0).epsilon(0.002));
    CHECK(s2 / n - (s / n) * (s / n) == doctest::Approx(150.0).epsilon(0.02));

    const auto nb = make_family("negative_binomial");
    s = s2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double y = sample_response(nb, 2.5, 1.0, rng);
        s += y;
        s2 += y * y;
    }
    CHECK(s / n == doctest::Approx(2.5).epsilon(0.01));
    CHECK(s2 / n - (s / n) * (s / n) == doctest::Approx(2.5 * 3.5).epsilon(0.05));
}

TEST_CASE("location-family and ratio-family samplers match known expectations") {
    rng::Rng rng(23);
    const std::size_t n = 300000;

    // log-gamma: E[Y] = mu + psi(phi) - log(phi)
    const auto lg = make_family("log_gamma");
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += sample_response(lg, 0.4, 3.0, rng);
    const double expect_lg = 0.4 + specfun::polygamma(0, 3.0) - std::log(3.0);
    CHECK(s / n == doctest::Approx(expect_lg).epsilon(0.02));

    // reciprocal inverse Gaussian: E[1/Y] = 1/mu
    const auto rig = make_family("reciprocal_inverse_gaussian");
    s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += 1.0 / sample_response(rig, 1.8, 2.5, rng);
    CHECK(s / n == doctest::Approx(1.0 / 1.8).epsilon(0.01));

    // constant-CV Weibull: mean mu, sd c... the shape fixes the CV
    const auto wb = parse_family("const_cv_weibull(2)");
    double s2 = 0.0;
    s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double y = sample_response(wb, 2.0, 1.0, rng);
        s += y;
        s2 += y * y;
    }
    const double mean = s / n;
    CHECK(mean == doctest::Approx(2.0).epsilon(0.01));
    const double cv2 = (s2 / n - mean * mean) / (mean * mean);
    // Weibull(k=2): CV^2 = Gamma(2)/Gamma(1.5)^2 - 1
    const double g15 = std::exp(specfun::log_gamma(1.5));
    CHECK(cv2 == doctest::Approx(1.0 / (g15 * g15) - 1.0).epsilon(0.05));
}

TEST_CASE("unsupported samplers are refused") {
    const auto f = make_family("tweedie", 1.5);
    rng::Rng rng(1);
    CHECK_THROWS_AS(sample_response(f, 1.0, 1.0, rng), std::invalid_argument);
}

TEST_CASE("study reports are identical across thread counts") {
    StudyConfig cfg = small_study(20, 60, 424242);
    cfg.threads = 1;
    const StudyReport a = run_study(cfg);
    cfg.threads = 2;
    const StudyReport b = run_study(cfg);
    cfg.threads = 7;
    const StudyReport c = run_study(cfg);
    CHECK(study_report_csv(a) == study_report_csv(b));
    CHECK(study_report_csv(a) == study_report_csv(c));
}

TEST_CASE("a single replication equals one fit plus one evaluation") {
    StudyConfig cfg = small_study(25, 1, 777);
    const StudyReport rep = run_study(cfg);
    REQUIRE(rep.rows.size() == 5);
    CHECK(rep.n_failed == 0);

    // reproduce the single replication by hand
    const auto family = make_family("reciprocal_gamma");
    const auto link = make_link("sqrt");
    const auto model =
        expr::parse(cfg.predictor, cfg.covariates, {"b0", "b1", "b2"});
    Matrix x(cfg.n, 2);
    for (std::size_t j = 0; j < 2; ++j) {
        rng::Rng stream = rng::Rng::substream(cfg.seed, 0x8000000000000000ULL + j);
        const auto& cs = cfg.covariate_dists[j];
        for (std::size_t i = 0; i < cfg.n; ++i) x(i, j) = stream.uniform(cs.lo, cs.hi);
    }
    const Vector eta = expr::eval_eta(model, x, cfg.beta_true);
    rng::Rng stream = rng::Rng::substream(cfg.seed, 0);
    Vector y(cfg.n);
    for (std::size_t i = 0; i < cfg.n; ++i)
        y[i] = family.sampler(eta[i] * eta[i], cfg.phi_true, stream);
    FitOptions opts;
    opts.beta_init = cfg.beta_true;
    const FitResult fr = fit(family, link, model, x, y, opts);
    REQUIRE(fr.converged);
    const SkewnessReport sk = evaluate_skewness(fr, family, link, model, x);
    for (int a = 0; a < 3; ++a)
        CHECK(rep.rows[a].mean_estimated_gamma1 == sk.gamma1_beta[a]);
    CHECK(rep.rows[3].mean_estimated_gamma1 == sk.gamma1_phi);
    CHECK(rep.rows[4].mean_estimated_gamma1 == sk.gamma1_sigma2);
}

TEST_CASE("true skewness column matches a direct evaluation at the truth") {
    StudyConfig cfg = small_study(22, 40, 31415);
    const StudyReport rep = run_study(cfg);
    const auto family = make_family("reciprocal_gamma");
    const auto link = make_link("sqrt");
    const auto model = expr::parse(cfg.predictor, cfg.covariates, {"b0", "b1", "b2"});
    Matrix x(cfg.n, 2);
    for (std::size_t j = 0; j < 2; ++j) {
        rng::Rng stream = rng::Rng::substream(cfg.seed, 0x8000000000000000ULL + j);
        const auto& cs = cfg.covariate_dists[j];
        for (std::size_t i = 0; i < cfg.n; ++i) x(i, j) = stream.uniform(cs.lo, cs.hi);
    }
    const auto truth = evaluate_skewness(family, link, model, x, cfg.beta_true, cfg.phi_true);
    for (int a = 0; a < 3; ++a)
        CHECK(rep.rows[a].true_gamma1 == truth.gamma1_beta[a]);
    CHECK(rep.rows[3].true_gamma1 == truth.gamma1_phi);
    CHECK(rep.rows[4].true_gamma1 == truth.gamma1_sigma2);
}

TEST_CASE("mean of the replicated estimates stays near the truth") {
    // direct loop over the montecarlo pieces: linear normal model
    const auto family = make_family("normal");
    const auto link = make_link("identity");
    const auto model = expr::parse("b0 + b1*x1", {"x1"}, {"b0", "b1"});
    const Vector beta0 = {0.4, 1.1};
    Matrix x(50, 1);
    rng::Rng cov(5);
    for (int i = 0; i < 50; ++i) x(i, 0) = cov.uniform(0.0, 1.0);
    const Vector eta0 = expr::eval_eta(model, x, beta0);

    const int reps = 400;
    std::vector<double> b0s, b1s;
    for (int r = 0; r < reps; ++r) {
        rng::Rng stream = rng::Rng::substream(909, r);
        Vector y(50);
        for (int i = 0; i < 50; ++i) y[i] = stream.normal(eta0[i], 0.5);
        FitOptions opts;
        opts.beta_init = beta0;
        const FitResult fr = fit(family, link, model, x, y, opts);
        if (!fr.converged) continue;
        b0s.push_back(fr.beta_hat[0]);
        b1s.push_back(fr.beta_hat[1]);
    }
    REQUIRE(b0s.size() >= 390);
    const auto mean_se = [](const std::vector<double>& v) {
        double m = 0.0;
        for (double u : v) m += u;
        m /= v.size();
        double s2 = 0.0;
        for (double u : v) s2 += (u - m) * (u - m);
        return std::pair<double, double>(m, std::sqrt(s2 / v.size() / v.size()));
    };
    const auto [m0, se0] = mean_se(b0s);
    const auto [m1, se1] = mean_se(b1s);
    CHECK(std::abs(m0 - beta0[0]) <= 4.0 * se0);
    CHECK(std::abs(m1 - beta0[1]) <= 4.0 * se1);
}

TEST_CASE("nonlinear circular coefficient skewness matches replicated refits") {
    // the cross-term is the entire cumulant here (identity link); its sign
    // and size must show up in the sampling distribution of the estimates
    const auto fam = make_family("von_mises");
    const auto lk = make_link("identity");
    const auto model = expr::parse("b0 + sin(b1*x1)", {"x1"}, {"b0", "b1"});
    const std::size_t n = 60;
    const Vector beta0 = {0.2, 1.4};
    const double phi = 4.0;
    Matrix x(n, 1);
    rng::Rng cov(5);
    for (std::size_t i = 0; i < n; ++i) x(i, 0) = cov.uniform(0.4, 2.6);
    const auto predicted = evaluate_skewness(fam, lk, model, x, beta0, phi);
    REQUIRE(predicted.gamma1_beta[1] > 0.05);

    const auto eta0 = expr::eval_eta(model, x, beta0);
    FitOptions opts;
    opts.beta_init = beta0;
    std::vector<double> b1s;
    for (int r = 0; r < 5000; ++r) {
        rng::Rng st = rng::Rng::substream(777, r);
        Vector y(n);
        for (std::size_t i = 0; i < n; ++i) y[i] = fam.sampler(eta0[i], phi, st);
        const FitResult fr = fit(fam, lk, model, x, y, opts);
        if (fr.converged && !fr.phi_at_boundary) b1s.push_back(fr.beta_hat[1]);
    }
    REQUIRE(b1s.size() > 4800);
    const double g3 = sample_skewness(b1s);
    CHECK(g3 > 0.0);
    CHECK(g3 == doctest::Approx(predicted.gamma1_beta[1]).epsilon(1.0)); // same order
}

TEST_CASE("circular concentration estimates are right-skewed as predicted") {
    // settles the sign convention of the normalising term: with a1 set to
    // -log I0(phi), the predicted skewness of phi_hat is positive, and so is
    // the replicated sample skewness at a known location
    const auto f = make_family("von_mises");
    const double mu = 0.3, phi = 2.0;
    const std::size_t n = 30;
    std::vector<double> phis;
    for (int r = 0; r < 3000; ++r) {
        rng::Rng stream = rng::Rng::substream(606, r);
        Vector y(n), mu_vec(n, mu);
        for (std::size_t i = 0; i < n; ++i) y[i] = f.sampler(mu, phi, stream);
        const PhiFit pf = fit_phi(f, y, mu_vec, {});
        if (!pf.at_boundary) phis.push_back(pf.phi);
    }
    REQUIRE(phis.size() > 2900);
    const auto [k3, g1] = phi_third_cumulant(f, n, phi);
    CHECK(g1 > 0.0);
    CHECK(k3 > 0.0);
    CHECK(sample_skewness(phis) > 0.2); // clearly positive at this n
}

TEST_CASE("excessive non-convergence aborts the study") {
    StudyConfig cfg = small_study(20, 30, 5);
    cfg.fit_options.max_iter = 0; // diagnostics only, nothing can converge
    CHECK_THROWS_AS(run_study(cfg), StudyError);
}

TEST_CASE("fixed-precision studies report only coefficient rows") {
    StudyConfig cfg;
    cfg.family_id = "poisson";
    cfg.link_id = "log";
    cfg.predictor = "b0 + b1*x1";
    cfg.covariates = {"x1"};
    cfg.beta_true = {1.0, 0.5};
    cfg.n = 30;
    cfg.replications = 25;
    cfg.seed = 99;
    cfg.covariate_dists = {{"x1", 0.0, 1.0}};
    const StudyReport rep = run_study(cfg);
    CHECK(rep.rows.size() == 2);
    CHECK(rep.estimands[0] == "b0");
    CHECK(rep.estimands[1] == "b1");
}

TEST_CASE("cold starts reach the same estimates on an easy design") {
    StudyConfig cfg;
    cfg.family_id = "gamma";
    cfg.link_id = "log";
    cfg.predictor = "b0 + b1*x1";
    cfg.covariates = {"x1"};
    cfg.beta_true = {0.4, 0.8};
    cfg.phi_true = 3.0;
    cfg.n = 40;
    cfg.replications = 50;
    cfg.seed = 11;
    cfg.covariate_dists = {{"x1", 0.0, 1.0}};
    const StudyReport warm = run_study(cfg);
    cfg.warm_start = false;
    const StudyReport cold = run_study(cfg);
    CHECK(warm.n_failed == 0);
    CHECK(cold.n_failed == 0);
    for (std::size_t k = 0; k < warm.rows.size(); ++k)
        CHECK(warm.rows[k].mean_estimated_gamma1 ==
              doctest::Approx(cold.rows[k].mean_estimated_gamma1).epsilon(1e-7));
}

TEST_CASE("CSV layout lists one row per estimand") {
    StudyConfig cfg = small_study(20, 10, 2718);
    const StudyReport rep = run_study(cfg);
    const std::string csv = study_report_csv(rep);
    CHECK(csv.rfind("estimand,mean_estimated_gamma1,true_gamma1,sample_g3\n", 0) == 0);
    std::size_t lines = 0;
    for (char c : csv) lines += c == '\n' ? 1 : 0;
    CHECK(lines == 6); // header + b0,b1,b2,phi,sigma2
    CHECK(csv.find("\nphi,") != std::string::npos);
    CHECK(csv.find("\nsigma2,") != std::string::npos);
}

} // TEST_SUITE

#include <doctest.h>

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dmskew/cli.hpp"
#include "dmskew/rng.hpp"

using namespace dmskew;
namespace fs = std::filesystem;

namespace {

struct CliRun {
    int exit_code;
    std::string out, err;
};

CliRun run(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = cli::run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

fs::path workdir() {
    const fs::path dir = fs::temp_directory_path() / "dmskew_cli_tests";
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// synthetic data from the nonlinear study model
fs::path write_study_csv(std::size_t n, std::uint64_t seed) {
    const auto family = make_family("reciprocal_gamma");
    const auto model =
        expr::parse("b0 + b1*x1 + x2^b2", {"x1", "x2"}, {"b0", "b1", "b2"});
    rng::Rng rng(seed);
    linalg::Matrix x(n, 2);
    for (std::size_t i = 0; i < n; ++i) {
        x(i, 0) = rng.uniform(0.0, 1.0);
        x(i, 1) = rng.uniform(1.0, 2.0);
    }
    const auto eta = expr::eval_eta(model, x, {0.5, 1.0, 2.0});
    const fs::path path = workdir() / ("data_" + std::to_string(seed) + ".csv");
    std::ofstream f(path);
    f << "y,x1,x2\n";
    for (std::size_t i = 0; i < n; ++i)
        f << io::format_double(family.sampler(eta[i] * eta[i], 4.0, rng)) << ","
          << io::format_double(x(i, 0)) << "," << io::format_double(x(i, 1)) << "\n";
    return path;
}

fs::path write_config(const std::string& name, std::size_t n, std::size_t reps,
                      std::uint64_t seed) {
    const fs::path path = workdir() / name;
    std::ofstream f(path);
    f << "# replicated study configuration\n"
      << "family = reciprocal_gamma\n"
      << "link = sqrt\n"
      << "predictor = b0 + b1*x1 + x2^b2\n"
      << "covariates = x1, x2\n"
      << "beta_true = 0.5, 1, 2\n"
      << "phi_true = 4\n"
      << "n = " << n << "\n"
      << "replications = " << reps << "\n"
      << "seed = " << seed << "\n"
      << "covariate.x1 = uniform(0,1)\n"
      << "covariate.x2 = uniform(1,2)\n";
    return path;
}

} // namespace

TEST_SUITE("cli") {

TEST_CASE("families subcommand lists the catalog with capabilities") {
    const CliRun r = run({"families"});
    CHECK(r.exit_code == 0);
    CHECK(r.out.find("von_mises") != std::string::npos);
    CHECK(r.out.find("reciprocal_gamma") != std::string::npos);
    CHECK(r.out.find("phi-inference") != std::string::npos);
}

TEST_CASE("fit writes a parsable report and exits cleanly") {
    const fs::path data = write_study_csv(60, 21);
    const fs::path out = workdir() / "fit.json";
    const CliRun r = run({"fit", "--family", "reciprocal_gamma", "--link", "sqrt",
                          "--predictor", "b0 + b1*x1 + x2^b2", "--data", data.string(),
                          "--response", "y", "--out", out.string()});
    CHECK(r.exit_code == 0);
    const auto doc = nlohmann::json::parse(slurp(out));
    CHECK(doc["converged"].get<bool>());
    CHECK(doc["beta_hat"].size() == 3);
    CHECK(doc["phi_hat"].get<double>() > 0.0);
    CHECK(doc["parameters"][0] == "b0");
}

TEST_CASE("skew emits the stable report fields and an SVG plot") {
    const fs::path data = write_study_csv(80, 33);
    const fs::path out = workdir() / "skew.json";
    const fs::path svg = workdir() / "skew.svg";
    const CliRun r = run({"skew", "--family", "reciprocal_gamma", "--link", "sqrt",
                          "--predictor", "b0 + b1*x1 + x2^b2", "--data", data.string(),
                          "--response", "y", "--out", out.string(), "--svg", svg.string(),
                          "--svg-coef", "b2"});
    CHECK(r.exit_code == 0);
    const auto doc = nlohmann::json::parse(slurp(out));
    REQUIRE(doc.contains("skewness"));
    CHECK(doc["skewness"]["kappa3_beta"].size() == 3);
    CHECK(doc["skewness"]["gamma1_beta"].size() == 3);
    CHECK(doc["skewness"].contains("kappa3_phi"));
    CHECK(doc["skewness"].contains("gamma1_sigma2"));
    const std::string art = slurp(svg);
    CHECK(art.rfind("<svg", 0) == 0);
    CHECK(art.find("polyline") != std::string::npos);
    CHECK(art.find("rect") != std::string::npos);
}

TEST_CASE("unknown family ids exit with usage status and list the catalog") {
    const fs::path data = write_study_csv(20, 5);
    const CliRun r = run({"fit", "--family", "unknown", "--link", "log", "--predictor",
                          "b0 + b1*x1", "--data", data.string(), "--response", "y"});
    CHECK(r.exit_code == 1);
    CHECK(r.err.find("valid ids") != std::string::npos);
}

TEST_CASE("a capped fit exits with the non-convergence status but still reports") {
    const fs::path data = write_study_csv(40, 9);
    const fs::path out = workdir() / "capped.json";
    const CliRun r = run({"fit", "--family", "reciprocal_gamma", "--link", "sqrt",
                          "--predictor", "b0 + b1*x1 + x2^b2", "--data", data.string(),
                          "--response", "y", "--max-iter", "0", "--beta-init", "2,2,1",
                          "--out", out.string()});
    CHECK(r.exit_code == 3);
    const auto doc = nlohmann::json::parse(slurp(out)); // diagnostics still written
    CHECK_FALSE(doc["converged"].get<bool>());
}

TEST_CASE("missing data files exit with a data error") {
    const CliRun r = run({"fit", "--family", "gamma", "--link", "log", "--predictor",
                          "b0 + b1*x1", "--data", "/nonexistent/nope.csv", "--response", "y"});
    CHECK(r.exit_code == 2);
}

TEST_CASE("bad usage exits with status one") {
    CHECK(run({}).exit_code == 1);
    CHECK(run({"fit", "--nonsense"}).exit_code == 1);
    CHECK(run({"edgeworth"}).exit_code == 1); // missing required --kappa3
}

TEST_CASE("simulate is byte-identical across runs and thread counts") {
    const fs::path cfg = write_config("study_a.cfg", 20, 40, 0);
    const fs::path out1 = workdir() / "rep1.csv";
    const fs::path out2 = workdir() / "rep2.csv";
    const fs::path out3 = workdir() / "rep3.csv";
    const fs::path json1 = workdir() / "rep1.json";
    const fs::path json3 = workdir() / "rep3.json";
    CHECK(run({"simulate", "--config", cfg.string(), "--seed", "42", "--out", out1.string(),
               "--json", json1.string()})
              .exit_code == 0);
    CHECK(run({"simulate", "--config", cfg.string(), "--seed", "42", "--out", out2.string()})
              .exit_code == 0);
    CHECK(run({"simulate", "--config", cfg.string(), "--seed", "42", "--threads", "3",
               "--out", out3.string(), "--json", json3.string()})
              .exit_code == 0);
    const std::string a = slurp(out1);
    CHECK(a == slurp(out2));
    CHECK(a == slurp(out3));
    CHECK(slurp(json1) == slurp(json3));
    CHECK(a.rfind("estimand,", 0) == 0);
    const std::string jtext = slurp(json1);
    CHECK(nlohmann::json::parse(jtext).dump(2) + "\n" == jtext); // schema round-trip
}

TEST_CASE("JSON reports round-trip through their schema") {
    const fs::path data = write_study_csv(50, 77);
    const fs::path out = workdir() / "roundtrip.json";
    REQUIRE(run({"skew", "--family", "reciprocal_gamma", "--link", "sqrt", "--predictor",
                 "b0 + b1*x1 + x2^b2", "--data", data.string(), "--response", "y", "--out",
                 out.string()})
                .exit_code == 0);
    const std::string text = slurp(out);
    const auto doc = nlohmann::json::parse(text);
    CHECK(doc.dump(2) + "\n" == text);
}

TEST_CASE("edgeworth tabulation reduces to the normal at zero skewness") {
    const CliRun r = run({"edgeworth", "--kappa3", "0", "--points", "5"});
    CHECK(r.exit_code == 0);
    std::istringstream in(r.out);
    std::string line;
    std::getline(in, line);
    CHECK(line == "x,edgeworth,normal");
    while (std::getline(in, line)) {
        const auto c1 = line.find(','), c2 = line.rfind(',');
        REQUIRE(c1 != std::string::npos);
        CHECK(line.substr(c1 + 1, c2 - c1 - 1) == line.substr(c2 + 1));
    }
}

TEST_CASE("number formatting round-trips bitwise") {
    rng::Rng rng(3);
    for (int k = 0; k < 2000; ++k) {
        double v = (rng.uniform() - 0.5) * std::pow(10.0, rng.uniform(-12.0, 12.0));
        if (k % 7 == 0) v = -v;
        const std::string s = io::format_double(v);
        CHECK(std::stod(s) == v);
    }
    CHECK(io::format_double(0.1) == "0.1");
    CHECK(io::format_double(-0.0) == "-0");
}

TEST_CASE("CSV parsing reports precise data errors") {
    const fs::path ragged = workdir() / "ragged.csv";
    std::ofstream(ragged) << "y,x1\n1.0,2.0\n3.0\n";
    const CliRun r1 = run({"fit", "--family", "gamma", "--link", "log", "--predictor",
                           "b0 + b1*x1", "--data", ragged.string(), "--response", "y"});
    CHECK(r1.exit_code == 2);
    CHECK(r1.err.find("line 3") != std::string::npos);

    const fs::path text = workdir() / "text.csv";
    std::ofstream(text) << "y,x1\n1.0,abc\n";
    const CliRun r2 = run({"fit", "--family", "gamma", "--link", "log", "--predictor",
                           "b0 + b1*x1", "--data", text.string(), "--response", "y"});
    CHECK(r2.exit_code == 2);
    CHECK(r2.err.find("x1") != std::string::npos);

    const fs::path fine = workdir() / "fine.csv";
    std::ofstream(fine) << "y,x1\n1.0,2.0\n";
    const CliRun r3 = run({"fit", "--family", "gamma", "--link", "log", "--predictor",
                           "b0 + b1*x1", "--data", fine.string(), "--response", "nope"});
    CHECK(r3.exit_code == 1); // unknown column is a usage problem
}

TEST_CASE("config files reject unknown keys") {
    const fs::path bad = workdir() / "bad.cfg";
    std::ofstream(bad) << "family = gamma\nbogus = 1\n";
    const CliRun r = run({"simulate", "--config", bad.string(), "--out", "-"});
    CHECK(r.exit_code == 1);
    CHECK(r.err.find("bogus") != std::string::npos);
}

} // TEST_SUITE

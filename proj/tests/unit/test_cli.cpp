#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli/shipfreq_cli.hpp"
#include "shipfreq/errors.hpp"
#include "shipfreq/panel_io.hpp"

using namespace shipfreq;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code = 0;
    std::string out;
    std::string err;
};

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "shipfreq_test_cli" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

fs::path write_config(const fs::path& dir, const std::string& text, const std::string& name = "config.ini") {
    const fs::path path = dir / name;
    std::ofstream(path) << text;
    return path;
}

Run run(std::vector<std::string> args) {
    std::ostringstream out, err;
    Run r;
    r.code = cli::run(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

const char* kModel = "[model]\nc = 1\nq = 100\nf = 10\ndelta = 0.3\nr = 0.12\nr1 = 0.05\n";
const char* kSmallDgp = "[dgp]\nfirms = 40\nproducts = 3\ndestinations = 25\nyears = 2\n";

}  // namespace

TEST_CASE("config parsing") {
    std::istringstream in("seed = 7\n[model]\nc = 2.5\n[betas]\nln_gdp * ln_distance = 0.1\n");
    cli::ConfigFile c = cli::ConfigFile::parse(in, "inline");
    CHECK(c.integer("run", "seed", 1) == 7);
    CHECK(c.number("model", "c", 0.0) == 2.5);
    CHECK(c.number("model", "q", 4.0) == 4.0);
    CHECK_THROWS_WITH_AS(c.required_number("model", "f"), doctest::Contains("missing key 'f'"), ValidationError);
    c.set("model.q=3");
    CHECK(c.required_number("model", "q") == 3.0);
    c.set("betas.log(x).y = 2");
    CHECK(c.entries("betas").at("log(x).y") == "2");
    CHECK_THROWS_AS(c.set("model"), ValidationError);
    CHECK_THROWS_WITH_AS(c.set("nosuch.k=1"), doctest::Contains("[nosuch]"), ValidationError);
    c.set("model.typo=1");
    CHECK_THROWS_WITH_AS(c.reject_unused({"model"}), doctest::Contains("'typo'"), ValidationError);
    CHECK(c.echo().find("model.c = 2.5\n") != std::string::npos);

    std::istringstream bad("[model]\nc = abc\n");
    cli::ConfigFile b = cli::ConfigFile::parse(bad, "inline");
    CHECK_THROWS_WITH_AS(b.number("model", "c", 1.0), doctest::Contains("[model] c"), ValidationError);

    std::istringstream unknown("[modle]\nc = 1\n");
    CHECK_THROWS_WITH_AS(cli::ConfigFile::parse(unknown, "inline"), doctest::Contains("[modle]"), ValidationError);
    std::istringstream dup("[model]\nc = 1\nc = 2\n");
    CHECK_THROWS_AS(cli::ConfigFile::parse(dup, "inline"), ValidationError);
}

TEST_CASE("solve writes the library solution") {
    const fs::path dir = scratch("solve");
    const fs::path cfg = write_config(dir, kModel);
    const Run r = run({"solve", "--config", cfg.string(), "--out", (dir / "out").string()});
    REQUIRE(r.code == 0);
    ModelParams p;
    p.c = 1;
    p.q = 100;
    p.f = 10;
    p.delta = 0.3;
    p.r = 0.12;
    p.r1 = 0.05;
    CHECK(slurp(dir / "out" / "solution.csv") == cli::solution_csv(solve(p)));
    CHECK(r.out.find("x_star: " + format_double(solve(p).x_star)) != std::string::npos);
    CHECK(fs::exists(dir / "out" / "manifest.txt"));
}

TEST_CASE("exit codes") {
    const fs::path dir = scratch("codes");
    const fs::path cfg = write_config(dir, kModel);
    const std::string out = (dir / "out").string();

    Run r = run({"solve", "--config", cfg.string(), "--out", out, "--set", "model.f=0"});
    CHECK(r.code == cli::exit_validation);
    CHECK(r.err.find("no positive root") != std::string::npos);

    r = run({"solve", "--config", cfg.string(), "--out", out, "--set", "model.r1=0"});
    CHECK(r.code == cli::exit_validation);
    CHECK(r.err.find("r1") != std::string::npos);

    r = run({"solve", "--config", cfg.string(), "--out", out, "--set", "model.colour=red"});
    CHECK(r.code == cli::exit_validation);
    CHECK(r.err.find("colour") != std::string::npos);

    r = run({"simulate", "--config", cfg.string(), "--out", out});
    CHECK(r.code == cli::exit_validation);
    CHECK(r.err.find("missing section [dgp]") != std::string::npos);

    r = run({"solve", "--config", (dir / "absent.ini").string()});
    CHECK(r.code == cli::exit_validation);
    r = run({"solve"});
    CHECK(r.code == cli::exit_validation);
    r = run({"frobnicate", "--config", cfg.string()});
    CHECK(r.code == cli::exit_validation);
    r = run({"--help"});
    CHECK(r.code == cli::exit_ok);

    // An intercept of 40 puts the Poisson mean beyond what can be sampled.
    const fs::path big = write_config(dir, std::string(kSmallDgp) + "[betas]\n_cons = 40\n");
    r = run({"simulate", "--config", big.string(), "--out", out});
    CHECK(r.code == cli::exit_numerical);
}

TEST_CASE("simulate respects the cell-count bound") {
    const fs::path dir = scratch("simulate");
    const fs::path cfg =
        write_config(dir, "[dgp]\nfirms = 10\nproducts = 5\ndestinations = 8\nyears = 3\n");
    const Run r = run({"simulate", "--config", cfg.string(), "--out", (dir / "out").string()});
    REQUIRE(r.code == 0);
    const Panel panel = read_panel(dir / "out" / "panel.csv");
    CHECK(!panel.empty());
    CHECK(panel.size() <= 1200);
    CHECK(fs::exists(dir / "out" / "countries.csv"));
    CHECK(fs::exists(dir / "out" / "shipment_histogram.csv"));
}

TEST_CASE("estimate reads a panel and names missing fields") {
    const fs::path dir = scratch("estimate");
    const fs::path sim = write_config(dir, kSmallDgp);
    REQUIRE(run({"simulate", "--config", sim.string(), "--out", (dir / "sim").string()}).code == 0);

    const fs::path est = dir / "estimate.ini";
    std::ofstream(est) << "[panel]\npath = sim/panel.csv\n[estimation]\nfe = firm, product*mode*year\n";
    Run r = run({"estimate", "--config", est.string(), "--out", (dir / "est").string()});
    REQUIRE(r.code == 0);
    CHECK(slurp(dir / "est" / "estimates.csv").starts_with("term,coefficient,clustered_se"));
    CHECK(fs::exists(dir / "est" / "run_metadata.txt"));

    // Drop the ln_gdp column from the panel.
    std::istringstream text(slurp(dir / "sim" / "panel.csv"));
    std::ofstream cut(dir / "cut.csv");
    std::string line;
    std::size_t drop = 0;
    bool header = true;
    while (std::getline(text, line)) {
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (line.back() == ',') fields.emplace_back();
        if (header) {
            drop = static_cast<std::size_t>(std::find(fields.begin(), fields.end(), "ln_gdp") - fields.begin());
            header = false;
        }
        fields.erase(fields.begin() + static_cast<std::ptrdiff_t>(drop));
        for (std::size_t k = 0; k < fields.size(); ++k) cut << (k ? "," : "") << fields[k];
        cut << '\n';
    }
    cut.close();
    r = run({"estimate", "--config", est.string(), "--out", (dir / "est2").string(), "--set", "panel.path=cut.csv"});
    CHECK(r.code == cli::exit_validation);
    CHECK(r.err.find("ln_gdp") != std::string::npos);

    r = run({"estimate", "--config", est.string(), "--out", (dir / "est3").string(), "--set",
             "estimation.regressors=ln_distance, log(n_shipments)"});
    CHECK(r.code == cli::exit_validation);
    CHECK(r.err.find("log(n_shipments)") != std::string::npos);
}

TEST_CASE("roundtrip: null plant and determinism") {
    const fs::path dir = scratch("roundtrip");
    const fs::path cfg = write_config(dir, std::string(kSmallDgp) + "plant = zero\n[estimation]\n");
    const Run a = run({"roundtrip", "--config", cfg.string(), "--seed", "3", "--out", (dir / "a").string()});
    CHECK(a.code == 0);
    const Run b = run({"roundtrip", "--config", cfg.string(), "--seed", "3", "--out", (dir / "b").string()});
    CHECK(b.code == 0);
    for (const char* f : {"panel.csv", "countries.csv", "estimates.csv", "roundtrip_report.csv", "run_metadata.txt",
                          "manifest.txt"}) {
        CHECK_MESSAGE(slurp(dir / "a" / f) == slurp(dir / "b" / f), f);
        CHECK(!slurp(dir / "a" / f).empty());
    }
    const std::string report = slurp(dir / "a" / "roundtrip_report.csv");
    CHECK(report.starts_with("term,planted,estimate,clustered_se,z,within_2se\nln_pershipment_cost,0,"));

    // Leaving out correlated destination covariates biases the one kept.
    const fs::path off = write_config(dir, std::string(kSmallDgp) + "[estimation]\nregressors = ln_gdp_pc\n", "off.ini");
    const Run d = run({"roundtrip", "--config", off.string(), "--out", (dir / "d").string()});
    CHECK(d.code == cli::exit_roundtrip_failed);
}

TEST_CASE("compare_plants") {
    EstimateResult r;
    r.names = {"a", "b"};
    r.coefficients = Eigen::Vector2d(1.0, std::nan(""));
    r.se = Eigen::Vector2d(0.5, std::nan(""));
    r.omitted = {0, 1};
    const auto rows = cli::compare_plants(r, {{"a", 0.5}});
    CHECK(rows[0].z == 1.0);
    CHECK(rows[1].omitted);
    CHECK(rows[1].planted == 0.0);
    CHECK(cli::recovery_csv(rows) == "term,planted,estimate,clustered_se,z,within_2se\na,0.5,1,0.5,1,1\nb,0,,,,\n");
}

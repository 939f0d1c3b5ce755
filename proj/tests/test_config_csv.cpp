#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "mfsde/config.hpp"
#include "mfsde/csv.hpp"

using namespace mfsde;

namespace {

std::string write_temp(const std::string& text) {
    const auto path = std::filesystem::temp_directory_path() / "mfsde_test_config.ini";
    std::ofstream out(path);
    out << text;
    return path.string();
}

} // namespace

TEST_CASE("config parsing", "[config]") {
    SECTION("sections, comments and trimming") {
        const ConfigFile cfg = ConfigFile::parse_string(
            "# comment\n[grid]\n  n_points = 101  # trailing\n[time]\nT=0.5\n");
        REQUIRE(cfg.get_int("grid.n_points", 0) == 101);
        REQUIRE(cfg.get_num("time.T", 0.0) == 0.5);
        REQUIRE_FALSE(cfg.has("grid.T"));
    }
    SECTION("malformed lines fail loudly") {
        REQUIRE_THROWS_AS(ConfigFile::parse_string("[grid\nn=1\n"), config_error);
        REQUIRE_THROWS_AS(ConfigFile::parse_string("[grid]\nn_points\n"), config_error);
        REQUIRE_THROWS_AS(ConfigFile::parse_string("[grid]\nn_points=abc\n").get_num(
                              "grid.n_points", 0.0),
                          config_error);
    }
    SECTION("catalog name plus overrides") {
        const std::string path = write_temp(
            "[scenario]\nname = state-invariant-ref\n[time]\nn_steps = 40\n"
            "[mc]\nn_paths = 1234\nseed = 99\n");
        const RunConfig rc = load_run_config(path);
        REQUIRE(rc.scenario.name == "state-invariant-ref");
        REQUIRE(rc.scenario.n_steps == 40);
        REQUIRE(rc.scenario.n_paths == 1234);
        REQUIRE(rc.scenario.seed == 99);
        // untouched fields keep catalog values
        REQUIRE(rc.scenario.n_points == 201);
    }
    SECTION("full custom scenario") {
        const std::string path = write_temp(
            "[grid]\nx_min=-6\nx_max=6\nn_points=121\n"
            "[time]\nt=0\nT=0.3\nn_steps=60\n"
            "[model]\nb1=0.4\nouter_b=sin\nh_b=gauss:0.5,0.8\nsigma0=1\nsigma1=0.2\n"
            "outer_sigma=tanh\nh_sigma=gauss:0,1\n"
            "[mu]\ncomponents=1:0:0.6\ndirections=1:0.3:0.5 | 1:-1:0.7; -1:1:0.7\n"
            "[phi]\ng=tanh:1\nouter=expnegsq\nh=gauss:0,1\nconst=0.5\n"
            "[mc]\nn_paths=500\nseed=4\nx0=0.1\n");
        const RunConfig rc = load_run_config(path);
        REQUIRE(rc.scenario.name == "custom");
        REQUIRE(rc.scenario.n_points == 121);
        REQUIRE(rc.scenario.directions.size() == 2);
        REQUIRE(rc.scenario.directions[1].components.size() == 2);
        const Scenario sc(rc.scenario); // must build and validate
        REQUIRE(sc.grid().n_points() == 121);
    }
    SECTION("unknown keys are rejected") {
        const std::string path = write_temp("[grid]\nnpoints = 11\n");
        REQUIRE_THROWS_AS(load_run_config(path), config_error);
    }
    SECTION("missing file") {
        REQUIRE_THROWS_AS(load_run_config("/nonexistent/path.ini"), config_error);
    }
    SECTION("profile grammar") {
        REQUIRE(detail::parse_profile("gauss:1.5,0.5").kind() == Profile::Kind::gauss_bump);
        REQUIRE(detail::parse_profile("id").kind() == Profile::Kind::identity);
        REQUIRE_THROWS_AS(detail::parse_profile("gauss:1"), config_error);
        REQUIRE_THROWS_AS(detail::parse_profile("spline:1"), config_error);
    }
}

TEST_CASE("csv output format", "[config]") {
    const auto dir = std::filesystem::temp_directory_path();
    const std::string path = (dir / "mfsde_test.csv").string();
    SECTION("17 significant digits round-trip") {
        const double v = 0.1 + 0.2; // not representable exactly
        const std::string s = csv_num(v);
        REQUIRE(std::stod(s) == v);
        REQUIRE(csv_num(1.0) == "1.0000000000000000e+00");
    }
    SECTION("header comment carries version, seed and scenario") {
        {
            CsvWriter w(path, 77, "demo");
            w.row({"a", "b"});
        }
        std::ifstream in(path);
        std::string line;
        std::getline(in, line);
        REQUIRE(line == std::string("# mfsde ") + kVersion + " seed=77 scenario=demo");
        std::getline(in, line);
        REQUIRE(line == "a,b");
    }
    SECTION("density path layout") {
        const Grid1D g(0.0, 1.0, 3);
        DensityPath p(g, 0.0, 1.0, 1);
        p.push_slice(GridFunction::sample(g, [](double x) { return x; }));
        p.push_slice(GridFunction::sample(g, [](double x) { return 2 * x; }));
        write_density_path(path, p, 1, "demo");
        std::ifstream in(path);
        std::string line;
        std::getline(in, line); // comment
        std::getline(in, line);
        REQUIRE(line == "s,x0,x1,x2");
        std::getline(in, line);
        REQUIRE(line.substr(0, 22) == "0.0000000000000000e+00");
    }
}

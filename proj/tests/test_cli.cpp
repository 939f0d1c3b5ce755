#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

const char* cli = MFSDE_CLI_PATH;

int run(const std::string& args) {
    const int rc = std::system((std::string(cli) + " " + args + " > /dev/null 2>&1").c_str());
    return WEXITSTATUS(rc);
}

fs::path fresh_dir(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / name;
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

std::string small_config(const fs::path& dir) {
    const fs::path p = dir / "scenario.ini";
    std::ofstream out(p);
    out << "[scenario]\nname = state-invariant-ref\n"
        << "[grid]\nn_points = 101\n"
        << "[time]\nT = 0.25\nn_steps = 50\n"
        << "[mc]\nn_paths = 2000\nseed = 32\n";
    return p.string();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
    std::ifstream in(p);
    REQUIRE(in.good());
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        rows.push_back(cells);
    }
    return rows;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("run-fp produces conservative output", "[cli]") {
    const fs::path dir = fresh_dir("mfsde_cli_fp");
    const std::string cfg = small_config(dir);
    REQUIRE(run("run-fp --config " + cfg + " --out " + dir.string()) == 0);
    REQUIRE(fs::exists(dir / "density_path.csv"));
    REQUIRE(fs::exists(dir / "norm_report.csv"));

    const auto rows = read_csv(dir / "norm_report.csv");
    REQUIRE(rows.front().at(1) == "mass");
    const double mass0 = std::stod(rows.at(1).at(1));
    for (std::size_t r = 1; r < rows.size(); ++r)
        REQUIRE(std::abs(std::stod(rows[r].at(1)) - mass0) <= 1e-10);
}

TEST_CASE("missing or malformed config exits with 3", "[cli]") {
    const fs::path dir = fresh_dir("mfsde_cli_cfg");
    REQUIRE(run("run-fp --config /does/not/exist.ini --out " + dir.string()) == 3);
    const fs::path bad = dir / "bad.ini";
    std::ofstream(bad) << "[grid]\nnpoints = 5\n";
    REQUIRE(run("run-fp --config " + bad.string() + " --out " + dir.string()) == 3);
    REQUIRE(run("verify --scenario no-such-name --out " + dir.string()) == 3);
}

TEST_CASE("verify on the small reference passes and is deterministic", "[cli]") {
    const fs::path dir1 = fresh_dir("mfsde_cli_v1");
    const fs::path dir2 = fresh_dir("mfsde_cli_v2");
    const std::string cfg = small_config(dir1);
    REQUIRE(run("verify --config " + cfg + " --out " + dir1.string()) == 0);
    REQUIRE(run("verify --config " + cfg + " --out " + dir2.string()) == 0);
    REQUIRE(fs::exists(dir1 / "verify_summary.csv"));
    REQUIRE(slurp(dir1 / "verify_summary.csv") == slurp(dir2 / "verify_summary.csv"));

    const auto rows = read_csv(dir1 / "verify_summary.csv");
    REQUIRE(rows.size() == 5); // header + 4 checks
    for (std::size_t r = 1; r < rows.size(); ++r) REQUIRE(rows[r].at(3) == "pass");
}

TEST_CASE("verify routes the master check around x-dependent drift", "[cli]") {
    const fs::path dir = fresh_dir("mfsde_cli_xdep");
    const fs::path cfg = dir / "scenario.ini";
    std::ofstream(cfg) << "[scenario]\nname = state-dep-drift\n"
                       << "[grid]\nn_points = 101\n"
                       << "[time]\nT = 0.25\nn_steps = 50\n"
                       << "[mc]\nn_paths = 2000\nseed = 5\n";
    REQUIRE(run("verify --config " + cfg.string() + " --out " + dir.string()) == 0);
    const auto rows = read_csv(dir / "verify_summary.csv");
    bool saw_skip = false;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        if (rows[r].at(0) == "master_pde_residual") {
            REQUIRE(rows[r].at(3) == "SKIPPED");
            saw_skip = true;
        } else {
            REQUIRE(rows[r].at(3) == "pass");
        }
    }
    REQUIRE(saw_skip);
}

TEST_CASE("constant terminal functional verifies with zero residuals", "[cli]") {
    const fs::path dir = fresh_dir("mfsde_cli_const");
    const fs::path cfg = dir / "scenario.ini";
    std::ofstream(cfg) << "[scenario]\nname = state-invariant-ref\n"
                       << "[grid]\nn_points = 101\n"
                       << "[time]\nT = 0.25\nn_steps = 50\n"
                       << "[phi]\nscale = 0\nconst = 2\n"
                       << "[mc]\nn_paths = 500\nseed = 3\n";
    REQUIRE(run("verify --config " + cfg.string() + " --out " + dir.string()) == 0);
    const auto rows = read_csv(dir / "verify_summary.csv");
    for (std::size_t r = 1; r < rows.size(); ++r) {
        REQUIRE(rows[r].at(3) == "pass");
        // the Ito check keeps its sin(s) time weight, so only the
        // state-to-terminal identities collapse to exact zeros here
        if (rows[r].at(0) == "master_pde_residual" || rows[r].at(0) == "terminal_condition")
            REQUIRE(std::stod(rows[r].at(1)) == 0.0);
    }
}

TEST_CASE("convergence command writes slope tables", "[cli]") {
    const fs::path dir = fresh_dir("mfsde_cli_conv");
    const fs::path cfg = dir / "scenario.ini";
    std::ofstream(cfg) << "[scenario]\nname = state-invariant-ref\n"
                       << "[grid]\nn_points = 101\n"
                       << "[time]\nT = 0.25\nn_steps = 50\n"
                       << "[mc]\nn_paths = 2000\nseed = 11\n";
    REQUIRE(run("convergence --config " + cfg.string() + " --out " + dir.string()) == 0);
    REQUIRE(fs::exists(dir / "slopes.csv"));
    REQUIRE(fs::exists(dir / "convergence_density_derivative.csv"));
    const auto rows = read_csv(dir / "slopes.csv");
    REQUIRE(rows.size() == 4); // header + three targets
    for (std::size_t r = 1; r < rows.size(); ++r) REQUIRE(rows[r].back() == "pass");
}

TEST_CASE("run-value and run-kernel emit their reports", "[cli]") {
    const fs::path dir = fresh_dir("mfsde_cli_value");
    const std::string cfg = small_config(dir);
    REQUIRE(run("run-value --config " + cfg + " --out " + dir.string()) == 0);
    REQUIRE(fs::exists(dir / "value_report.csv"));
    REQUIRE(fs::exists(dir / "dv_dmu.csv"));
    REQUIRE(fs::exists(dir / "ensemble_stats.csv"));

    REQUIRE(run("run-kernel --config " + cfg + " --out " + dir.string() +
                " --snapshot-every 25") == 0);
    REQUIRE(fs::exists(dir / "h_path.csv"));
    REQUIRE(fs::exists(dir / "kernel_report.csv"));
}

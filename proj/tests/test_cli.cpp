#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "mie/cli.hpp"

namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               fs::path("mie_cli_test_" + std::to_string(::getpid()) + "_" +
                        std::to_string(counter()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    static int counter() {
        static int c = 0;
        return c++;
    }
    fs::path file(const std::string& name, const std::string& content) const {
        fs::path p = path / name;
        std::ofstream out(p);
        out << content;
        return p;
    }
    std::string read(const std::string& name) const {
        std::ifstream in(path / name, std::ios::binary);
        std::ostringstream buf;
        buf << in.rdbuf();
        return buf.str();
    }
};

const char* kQuadraticScenario = R"(
[grid]
T = 1.0
steps = 200

[chain]
states = 1

[generator]
family = "power"
coefficients = [-1.0]
powers = [2.0]

[terminal]
values = [0.5]

[solver]
tol = 1e-10
)";

}  // namespace

TEST_CASE("solve emits the propagated expectation when the driver vanishes") {
    TempDir dir;
    dir.file("cfg.toml", R"(
[grid]
T = 1.0
steps = 4

[chain]
states = 1

[generator]
family = "affine"
a = 0.0
b = 0.0

[terminal]
values = [5.0]
)");
    int code = mie::cli::run({"solve", "--config", (dir.path / "cfg.toml").string(), "--out-dir",
                              dir.path.string()});
    REQUIRE(code == 0);
    std::string csv = dir.read("solution.csv");
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    REQUIRE(line == "node_time,state,u_1");
    while (std::getline(in, line)) REQUIRE(line.substr(line.rfind(',') + 1) == "5");
    std::string report = dir.read("report.json");
    REQUIRE(report.find("\"converged\": true") != std::string::npos);
}

TEST_CASE("solve and verify chain into a passing comparison") {
    TempDir dir;
    dir.file("base.toml", kQuadraticScenario);
    dir.file("shifted.toml", R"(
[grid]
T = 1.0
steps = 200

[chain]
states = 1

[generator]
family = "power"
coefficients = [0.3, -1.0]
powers = [0.0, 2.0]

[terminal]
values = [0.4]

[output]
csv = "shifted.csv"
report = "shifted.json"
)");
    REQUIRE(mie::cli::run({"solve", "--config", (dir.path / "base.toml").string(), "--out-dir",
                           dir.path.string()}) == 0);
    REQUIRE(mie::cli::run({"solve", "--config", (dir.path / "shifted.toml").string(), "--out-dir",
                           dir.path.string()}) == 0);

    // base has smaller driver and larger terminal data: u >= u~ everywhere
    dir.file("check.toml", "[verify]\nchecker = \"comparison\"\nu = \"" +
                               (dir.path / "solution.csv").string() + "\"\nu_tilde = \"" +
                               (dir.path / "shifted.csv").string() + "\"\n");
    int code = mie::cli::run({"verify", "--config", (dir.path / "check.toml").string(),
                              "--out-dir", dir.path.string()});
    REQUIRE(code == 0);
    REQUIRE(dir.read("check.json").find("\"passed\": true") != std::string::npos);

    // flipping the arguments fails the ordering and exits 1
    dir.file("check_flip.toml", "[verify]\nchecker = \"comparison\"\nu = \"" +
                                    (dir.path / "shifted.csv").string() + "\"\nu_tilde = \"" +
                                    (dir.path / "solution.csv").string() + "\"\n");
    REQUIRE(mie::cli::run({"verify", "--config", (dir.path / "check_flip.toml").string(),
                           "--out-dir", dir.path.string()}) == 1);
}

TEST_CASE("identical config and seed give byte-identical outputs") {
    TempDir dir;
    dir.file("cfg.toml", kQuadraticScenario);
    fs::create_directories(dir.path / "a");
    fs::create_directories(dir.path / "b");
    for (const char* sub : {"a", "b"}) {
        REQUIRE(mie::cli::run({"solve", "--config", (dir.path / "cfg.toml").string(), "--out-dir",
                               (dir.path / sub).string()}) == 0);
    }
    REQUIRE(dir.read("a/solution.csv") == dir.read("b/solution.csv"));
    REQUIRE(dir.read("a/report.json") == dir.read("b/report.json"));
    REQUIRE(!dir.read("a/solution.csv").empty());

    // Monte Carlo mode with an explicit seed is reproducible too
    dir.file("fk.toml", R"(
[grid]
T = 1.0
steps = 20

[chain]
states = 2
transitions = "uniform"

[generator]
family = "affine"
a = 0.1
b = 0.4

[terminal]
values = [1.0, 0.0]

[fk]
mode = "mc"
paths = 500
)");
    for (const char* sub : {"a", "b"}) {
        REQUIRE(mie::cli::run({"fk", "--config", (dir.path / "fk.toml").string(), "--out-dir",
                               (dir.path / sub).string(), "--seed", "42"}) == 0);
    }
    std::string mc = dir.read("a/solution.csv");
    REQUIRE(mc == dir.read("b/solution.csv"));
    REQUIRE(mc.find("stderr") != std::string::npos);
}

TEST_CASE("fk modes agree on an affine scenario") {
    TempDir dir;
    dir.file("fk.toml", R"(
[grid]
T = 1.0
steps = 400

[chain]
states = 1

[generator]
family = "affine"
a = 0.0
b = 1.0

[terminal]
values = [1.0]
)");
    for (const char* mode : {"product", "exp", "series"}) {
        fs::create_directories(dir.path / mode);
        REQUIRE(mie::cli::run({"fk", "--config", (dir.path / "fk.toml").string(), "--out-dir",
                               (dir.path / mode).string(), "--mode", mode}) == 0);
    }
    auto first_value = [&](const std::string& rel) {
        std::istringstream in(dir.read(rel));
        std::string header, row;
        std::getline(in, header);
        std::getline(in, row);
        return std::stod(row.substr(row.rfind(',') + 1));
    };
    double product = first_value("product/solution.csv");
    double exp_mode = first_value("exp/solution.csv");
    double series = first_value("series/solution.csv");
    REQUIRE(std::abs(exp_mode - std::exp(-1.0)) < 1e-12);
    REQUIRE(std::abs(product - std::exp(-1.0)) < 1e-3);
    REQUIRE(std::abs(series - product) < 1e-10);
}

TEST_CASE("blowup subcommand emits the condition-(B) trace") {
    TempDir dir;
    dir.file("cfg.toml", R"(
[grid]
T = 1.0
steps = 4000

[chain]
states = 1

[generator]
family = "power"
coefficients = [-1.0]
powers = [2.0]

[terminal]
values = [2.0]

[solver]
blowup_threshold = 1e-2
)");
    REQUIRE(mie::cli::run({"blowup", "--config", (dir.path / "cfg.toml").string(), "--out-dir",
                           dir.path.string()}) == 0);
    std::string report = dir.read("report.json");
    REQUIRE(report.find("\"trigger\": \"growth\"") != std::string::npos);
    std::istringstream in(dir.read("trace.csv"));
    std::string header, first_row;
    std::getline(in, header);
    REQUIRE(header == "node_time,condB_statistic");
    std::getline(in, first_row);
    double halt_time = std::stod(first_row.substr(0, first_row.find(',')));
    REQUIRE(std::abs(halt_time - 0.5) <= 0.01);
}

TEST_CASE("mechanism and coshsinh subcommands") {
    TempDir dir;
    dir.file("mech.toml", "[mechanism]\nd = 2.0\nalpha = 1.2\nw = 3.0\nnodes = 100\n");
    REQUIRE(mie::cli::run({"mechanism", "--config", (dir.path / "mech.toml").string(),
                           "--out-dir", dir.path.string()}) == 0);
    std::string kernel = dir.read("kernel.json");
    REQUIRE(kernel.find("closed_form") != std::string::npos);

    dir.file("trig.toml", R"(
[grid]
T = 1.0
steps = 500

[chain]
states = 1

[terminal]
values = [[1.0, 0.0]]

[coshsinh]
c = 1.0
delta = 1.0
eps = 1.0
)");
    REQUIRE(mie::cli::run({"coshsinh", "--config", (dir.path / "trig.toml").string(), "--out-dir",
                           dir.path.string()}) == 0);
    std::string agreement = dir.read("agreement.json");
    REQUIRE(agreement.find("sup_difference_vs_matrix_recursion") != std::string::npos);
}

TEST_CASE("exit codes cover usage, config, and solver failures") {
    TempDir dir;
    REQUIRE(mie::cli::run({"unknown-subcommand"}) == 3);
    REQUIRE(mie::cli::run({"solve"}) == 3);  // missing --config
    dir.file("broken.toml", "key = [1, 2\n");
    REQUIRE(mie::cli::run({"solve", "--config", (dir.path / "broken.toml").string()}) == 3);

    // domain exit during a solve is a solver error
    dir.file("exit.toml", R"(
[grid]
T = 1.0
steps = 100

[chain]
states = 1

[generator]
family = "power"
coefficients = [1.0]
powers = [0.0]
domain = [0.0, inf]

[terminal]
values = [0.3]
)");
    REQUIRE(mie::cli::run({"solve", "--config", (dir.path / "exit.toml").string(), "--out-dir",
                           dir.path.string()}) == 2);
}

TEST_CASE("flag overrides reach the solver") {
    TempDir dir;
    dir.file("cfg.toml", kQuadraticScenario);
    REQUIRE(mie::cli::run({"solve", "--config", (dir.path / "cfg.toml").string(), "--out-dir",
                           dir.path.string(), "--max-iter", "1"}) == 2);  // cannot converge
}

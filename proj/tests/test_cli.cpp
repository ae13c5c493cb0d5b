// End-to-end checks of the command-line surface: runs the built binary
// against the bundled problem files and inspects exit codes, the status
// line, and the emitted CSV/JSON artifacts.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#ifndef CLI_PATH
#define CLI_PATH "nonholo"
#endif
#ifndef FIXTURES_DIR
#define FIXTURES_DIR "problems"
#endif

namespace fs = std::filesystem;

namespace {

struct RunResult {
    int exit_code = -1;
    std::string output;
};

RunResult run_cli(const std::string& args) {
    static int counter = 0;
    fs::path log = fs::temp_directory_path() / ("nonholo_cli_" + std::to_string(++counter) + ".log");
    std::string cmd = std::string(CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
    int status = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(log);
    std::stringstream ss;
    ss << in.rdbuf();
    r.output = ss.str();
    return r;
}

std::string fixture(const std::string& name) {
    return std::string(FIXTURES_DIR) + "/" + name;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path temp_out(const std::string& tag) {
    fs::path dir = fs::temp_directory_path() / ("nonholo_out_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

} // namespace

TEST_CASE("geometry --frobenius on the Martinet file") {
    fs::path out = temp_out("frob");
    RunResult r = run_cli("geometry " + fixture("martinet.ocp") + " --frobenius --out " + out.string());
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("frobenius coefficient: y") != std::string::npos);
    CHECK(r.output.find("nonholonomic") != std::string::npos);
    CHECK(r.output.find("status=ok") != std::string::npos);
}

TEST_CASE("check with the closed-form extremal candidate") {
    fs::path out = temp_out("check");
    // candidate CSV from the closed-form extremal family, (c, c3, c4) = (1, 1, 1)
    fs::path cand = out / "extremal2.csv";
    {
        std::ofstream f(cand);
        f << "t,x1,x2,x3,u1,p1\n";
        const int N = 999;
        char buf[256];
        for (int s = 0; s <= N; ++s) {
            double t = static_cast<double>(s) / N;
            std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                          t, 1.0, 1.0 / std::sqrt(t + 1.0), 1.0, 0.0, t + 1.0);
            f << buf;
        }
    }
    RunResult r = run_cli("check " + fixture("martinet.ocp") + " --candidate " + cand.string() +
                          " --out " + out.string());
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("status=ok") != std::string::npos);

    auto rep = nlohmann::json::parse(slurp(out / "martinet_residuals.json"));
    CHECK(rep["max_residual"].get<double>() < 1e-8);
    CHECK(rep["residuals"].contains("adjoint_eq9"));
}

TEST_CASE("solve torsion.ocp notes the integrability branch; outputs are deterministic") {
    fs::path out1 = temp_out("tors1"), out2 = temp_out("tors2");
    RunResult r1 = run_cli("solve " + fixture("torsion.ocp") + " --seed 5 --out " + out1.string());
    CHECK(r1.exit_code == 0);
    CHECK(r1.output.find("integrable") != std::string::npos);
    CHECK(r1.output.find("status=ok") != std::string::npos);

    auto rep = nlohmann::json::parse(slurp(out1 / "torsion_residuals.json"));
    CHECK(rep["branch"] == "integrable");
    CHECK(rep["residuals"]["surface_vs_sheet"].get<double>() < 1e-6);
    CHECK(fs::exists(out1 / "torsion_sheet.csv"));

    RunResult r2 = run_cli("solve " + fixture("torsion.ocp") + " --seed 5 --out " + out2.string());
    CHECK(r2.exit_code == 0);
    CHECK(slurp(out1 / "torsion_sheet.csv") == slurp(out2 / "torsion_sheet.csv"));
    CHECK(slurp(out1 / "torsion_residuals.json") == slurp(out2 / "torsion_residuals.json"));
}

TEST_CASE("solve heisenberg.ocp converges and emits a full trajectory CSV") {
    fs::path out = temp_out("heis");
    RunResult r = run_cli("solve " + fixture("heisenberg.ocp") + " --out " + out.string());
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("status=ok") != std::string::npos);
    std::string csv = slurp(out / "heisenberg_trajectory.csv");
    CHECK(csv.rfind("t,x1,x2,x3,u1,u2,p1,p2,p3,H,Q1,Q2", 0) == 0);
    auto rep = nlohmann::json::parse(slurp(out / "heisenberg_residuals.json"));
    CHECK(rep["converged"] == "true");
}

TEST_CASE("bang on the decoupled minimum-time file") {
    fs::path out = temp_out("bang");
    RunResult r = run_cli("bang " + fixture("timemin2.ocp") + " --out " + out.string());
    CHECK(r.exit_code == 0);
    auto rep = nlohmann::json::parse(slurp(out / "timemin2_residuals.json"));
    double tau = std::stod(rep["tau"].get<std::string>());
    CHECK(std::abs(tau - 1.0) < 1e-6);
}

TEST_CASE("bang on the terminal-value file") {
    fs::path out = temp_out("term");
    RunResult r = run_cli("bang " + fixture("terminal1d.ocp") + " --out " + out.string());
    CHECK(r.exit_code == 0);
    auto rep = nlohmann::json::parse(slurp(out / "terminal1d_residuals.json"));
    CHECK(std::abs(std::stod(rep["terminal_value"].get<std::string>()) + 1.0) < 1e-9);
}

TEST_CASE("sheet command with CIC check") {
    fs::path out = temp_out("sheet");
    RunResult r = run_cli("sheet " + fixture("heis_sheet.ocp") + " --cic --out " + out.string());
    CHECK(r.exit_code == 0);
    CHECK(fs::exists(out / "heis_sheet_sheet.csv"));
    CHECK(fs::exists(out / "heis_sheet_cic.csv"));
    auto rep = nlohmann::json::parse(slurp(out / "heis_sheet_residuals.json"));
    CHECK(rep["residuals"]["cic_sup"].get<double>() < 1e-10);   // u_2 = u_1

    // a path-dependent control choice triggers the warning
    fs::path dep = out / "dep.ocp";
    std::string content = slurp(fs::path(fixture("heis_sheet.ocp")));
    auto pos = content.find("sheet_u2 = 1, 0.5");
    REQUIRE(pos != std::string::npos);
    content.replace(pos, std::string("sheet_u2 = 1, 0.5").size(), "sheet_u2 = 0, 1");
    {
        std::ofstream fdep(dep);
        fdep << content;
    }
    RunResult r2 = run_cli("sheet " + dep.string() + " --out " + out.string());
    CHECK(r2.exit_code == 0);
    CHECK(r2.output.find("warning: CIC residual") != std::string::npos);
}

TEST_CASE("bang on the bi-temporal vertex-search file") {
    fs::path out = temp_out("mtbang");
    RunResult r = run_cli("bang " + fixture("mtbang.ocp") + " --out " + out.string());
    CHECK(r.exit_code == 0);
    CHECK(fs::exists(out / "mtbang_sheet.csv"));
    auto rep = nlohmann::json::parse(slurp(out / "mtbang_residuals.json"));
    CHECK(rep["u1"].get<std::string>() == "-1 1 ");
    CHECK(rep["u2"].get<std::string>() == "-1 1 ");
}

TEST_CASE("riemann command reports work = length on the field line") {
    fs::path out = temp_out("riem");
    RunResult r = run_cli("riemann " + fixture("polar_work.ocp") + " --out " + out.string());
    CHECK(r.exit_code == 0);
    auto rep = nlohmann::json::parse(slurp(out / "polar_work_residuals.json"));
    double w = std::stod(rep["work"].get<std::string>());
    double l = std::stod(rep["length"].get<std::string>());
    CHECK(std::abs(w - l) < 1e-10);
    CHECK(rep["residuals"]["geodesic_field"].get<double>() < 1e-12);
}

TEST_CASE("malformed input exits with status=invalid, no crash") {
    fs::path out = temp_out("bad");
    fs::path bad = out / "bad.ocp";
    {
        std::ofstream f(bad);
        f << "[meta\nname oops\n";
    }
    RunResult r = run_cli("solve " + bad.string() + " --out " + out.string());
    CHECK(r.exit_code == 3);
    CHECK(r.output.find("status=invalid") != std::string::npos);

    RunResult r2 = run_cli("solve /no/such/file.ocp --out " + out.string());
    CHECK(r2.exit_code == 3);
    CHECK(r2.output.find("status=invalid") != std::string::npos);
}

TEST_CASE("validation failures exit 3 and name the offender") {
    fs::path out = temp_out("val");
    fs::path bad = out / "emptybox.ocp";
    {
        std::ofstream f(bad);
        f << "[meta]\nname = emptybox\nm = 1\nn = 1\n"
             "[state]\nnames = x\n"
             "[controls]\nnames = u\nlower = 2\nupper = 1\n"
             "[dynamics]\nfield1 = 1\n"
             "[cost]\nkind = simple_integral\nL = -u^2\n"
             "[boundary]\nx0 = 0\nhorizon = 0, 1\n";
    }
    RunResult r = run_cli("solve " + bad.string() + " --out " + out.string());
    CHECK(r.exit_code == 3);
    CHECK(r.output.find("empty control box") != std::string::npos);
    CHECK(r.output.find("status=invalid") != std::string::npos);
}

TEST_CASE("non-convergence exits with status=noconv") {
    fs::path out = temp_out("noconv");
    fs::path infeasible = out / "infeasible.ocp";
    {
        std::ofstream f(infeasible);
        f << "[meta]\nname = infeasible\nm = 1\nn = 2\n"
             "[state]\nnames = x1, x2\n"
             "[controls]\nnames = w\n"
             "[dynamics]\nfield1 = 1, 0\n"
             "[cost]\nkind = simple_integral\nL = -w^2\n"
             "[boundary]\nx0 = 0, 0\nx1 = 0, 1\nhorizon = 0, 1\n"
             "[solver]\ngrid = 200\n";
    }
    RunResult r = run_cli("solve " + infeasible.string() + " --out " + out.string());
    CHECK(r.exit_code == 2);
    CHECK(r.output.find("status=noconv") != std::string::npos);
}

TEST_CASE("--grid overrides the file's step count") {
    fs::path out = temp_out("grid");
    RunResult r = run_cli("solve " + fixture("heisenberg.ocp") + " --grid 100 --out " + out.string());
    CHECK(r.exit_code == 0);
    std::string csv = slurp(out / "heisenberg_trajectory.csv");
    std::size_t rows = 0;
    for (char c : csv)
        if (c == '\n') ++rows;
    CHECK(rows == 102);   // header + 101 nodes
}

TEST_CASE("NONHOLO_SEED env var stands in for --seed") {
    fs::path out = temp_out("envseed");
    fs::path log = out / "env.log";
    std::string cmd = "NONHOLO_SEED=777 " + std::string(CLI_PATH) + " geometry " +
                      fixture("martinet.ocp") + " --frobenius --out " + out.string() +
                      " > " + log.string() + " 2>&1";
    int status = std::system(cmd.c_str());
    CHECK(WEXITSTATUS(status) == 0);
    CHECK(slurp(log).find("status=ok") != std::string::npos);
}

TEST_CASE("--jobs fans out over files") {
    fs::path out = temp_out("jobs");
    RunResult r = run_cli("geometry " + fixture("martinet.ocp") + " " + fixture("heisenberg.ocp") +
                          " --jobs 2 --out " + out.string());
    CHECK(r.exit_code == 0);
    CHECK(fs::exists(out / "martinet_residuals.json"));
    CHECK(fs::exists(out / "heisenberg_residuals.json"));
}

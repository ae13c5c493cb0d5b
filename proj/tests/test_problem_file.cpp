#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "nonholo/emit.hpp"
#include "nonholo/problem_file.hpp"

using namespace nonholo;
namespace fs = std::filesystem;

#ifndef FIXTURES_DIR
#define FIXTURES_DIR "problems"
#endif

namespace {

std::string fixture(const std::string& name) {
    return std::string(FIXTURES_DIR) + "/" + name;
}

std::string write_temp(const std::string& content) {
    static int counter = 0;
    fs::path p = fs::temp_directory_path() /
                 ("nonholo_test_" + std::to_string(++counter) + ".ocp");
    std::ofstream out(p);
    out << content;
    return p.string();
}

} // namespace

TEST_CASE("load: bundled martinet fixture") {
    OCProblem p = load_problem(fixture("martinet.ocp"));
    CHECK(p.name == "martinet");
    CHECK(p.time_dim == 1);
    CHECK(p.state_dim == 3);
    CHECK(p.sense == Sense::Maximize);
    CHECK(p.state_names == std::vector<std::string>{"x", "y", "z"});
    CHECK(p.control_names == std::vector<std::string>{"u"});
    CHECK(p.dist.form == Distribution::Form::Kernel);
    CHECK(validate(p).empty());

    VarEnv env = {{"x", 0.0}, {"y", 2.0}, {"z", 0.0}, {"u", 1.0}, {"t", 0.0}};
    CHECK(p.dist.pfaff->coeffs[0].evaluate(env) == doctest::Approx(2.5));
    CHECK(p.cost.integrands[0].evaluate(env) == doctest::Approx(-0.5));
}

TEST_CASE("load: bundled torsion fixture dispatches the torsion method") {
    OCProblem p = load_problem(fixture("torsion.ocp"));
    CHECK(p.time_dim == 2);
    CHECK(p.cost.kind == CostKind::Curvilinear);
    CHECK(p.solver.method == "torsion");
    CHECK(p.solver.extras.at("c1") == "4.2360679774997898");
    CHECK(validate(p).empty());
    // x1 carries a free component
    REQUIRE(p.x1.has_value());
    CHECK(std::isnan((*p.x1)[2]));
}

TEST_CASE("load: ambiguous dynamics") {
    std::string path = write_temp(
        "[meta]\nname = bad\nm = 1\nn = 1\n"
        "[state]\nnames = x\n"
        "[dynamics]\npfaff = 1\nfield1 = 1\n"
        "[cost]\nkind = simple_integral\nL = 0\n"
        "[boundary]\nx0 = 0\nhorizon = 0, 1\n");
    CHECK_THROWS_WITH_AS(load_problem(path),
                         doctest::Contains("ambiguous dynamics"), FileError);
}

TEST_CASE("load: missing x0 names the boundary section") {
    std::string path = write_temp(
        "[meta]\nname = bad\nm = 1\nn = 1\n"
        "[state]\nnames = x\n"
        "[dynamics]\nfield1 = 1\n"
        "[cost]\nkind = simple_integral\nL = 0\n"
        "[boundary]\nhorizon = 0, 1\n");
    CHECK_THROWS_WITH_AS(load_problem(path), doctest::Contains("[boundary]"), FileError);
}

TEST_CASE("load: parse errors carry line numbers") {
    std::string path = write_temp(
        "[meta]\nname = bad\nm = 1\nn = 1\n"
        "[state]\nnames = x\n"
        "[dynamics]\nfield1 = x +\n"
        "[cost]\nkind = simple_integral\nL = 0\n"
        "[boundary]\nx0 = 0\nhorizon = 0, 1\n");
    try {
        load_problem(path);
        CHECK(false);
    } catch (const FileError& e) {
        CHECK(e.line == 8);
    }
}

TEST_CASE("load: riemann setup") {
    CHECK(is_riemann_file(fixture("polar_work.ocp")));
    CHECK(!is_riemann_file(fixture("martinet.ocp")));
    RiemannSetup setup = load_riemann(fixture("polar_work.ocp"));
    CHECK(setup.metric.dim() == 2);
    CHECK(setup.has_field);
    CHECK(setup.has_curve);
    VarEnv env = {{"r", 2.0}, {"th", 0.0}};
    CHECK(setup.metric.at(1, 1).evaluate(env) == doctest::Approx(4.0));
}

TEST_CASE("split_top_level respects parentheses") {
    auto parts = split_top_level("1/2*(y^2+u), 0, -1");
    REQUIRE(parts.size() == 3);
    CHECK(parts[0] == "1/2*(y^2+u)");
    CHECK(parts[1] == "0");
    CHECK(parts[2] == "-1");
}

TEST_CASE("csv trajectory round trip is exact") {
    Trajectory t;
    t.n = 2;
    t.k = 1;
    t.np = 2;
    t.times = {0.0, 1.0 / 3.0, 2.0 / 3.0};
    t.states = {0.1, -0.2, 1.0 / 7.0, 0.4, 0.5, -1e-17};
    t.controls = {1.0, 2.0, 3.0};
    t.costates = {0.25, 1e100, -3e-200, 7.0, 8.0, 9.0};
    t.hamiltonian = {0.5, 0.5, 0.5};
    t.switching = {0.1, 0.2, 0.3};

    std::string csv = csv_trajectory(t);
    fs::path p = fs::temp_directory_path() / "nonholo_roundtrip.csv";
    write_text_file(p.string(), csv);
    Trajectory back = read_trajectory_csv(p.string());

    REQUIRE(back.num_nodes() == t.num_nodes());
    CHECK(back.n == 2);
    CHECK(back.k == 1);
    CHECK(back.np == 2);
    for (std::size_t i = 0; i < t.states.size(); ++i) CHECK(back.states[i] == t.states[i]);
    for (std::size_t i = 0; i < t.costates.size(); ++i) CHECK(back.costates[i] == t.costates[i]);
    for (std::size_t i = 0; i < t.times.size(); ++i) CHECK(back.times[i] == t.times[i]);
}

TEST_CASE("json report is deterministic and sorted") {
    ResidualReport rep;
    rep.entries["dynamics_eq24"] = 1e-9;
    rep.entries["adjoint_eq25"] = 2e-9;
    std::string a = json_report(rep, {{"status", "ok"}});
    std::string b = json_report(rep, {{"status", "ok"}});
    CHECK(a == b);
    CHECK(a.find("adjoint_eq25") < a.find("dynamics_eq24"));
    CHECK(a.find("max_residual") != std::string::npos);
}

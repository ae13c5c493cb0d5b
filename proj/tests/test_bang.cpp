#include <doctest.h>

#include <cmath>
#include <random>

#include "nonholo/bang.hpp"
#include "test_util.hpp"

using namespace nonholo;

namespace {

OCProblem unit_box_problem(int n, std::vector<VectorField> gens,
                           std::vector<double> x0) {
    OCProblem p;
    p.time_dim = 1;
    p.state_dim = n;
    p.time_names = {"t"};
    for (int i = 1; i <= n; ++i) p.state_names.push_back("x" + std::to_string(i));
    const int k = static_cast<int>(gens.size());
    for (int a = 1; a <= k; ++a) p.control_names.push_back("u" + std::to_string(a));
    p.box.lower.assign(static_cast<std::size_t>(k), -1.0);
    p.box.upper.assign(static_cast<std::size_t>(k), 1.0);
    p.dist = Distribution::span(std::move(gens));
    p.cost.kind = CostKind::SimpleIntegral;
    p.cost.integrands = {Expr(1.0)};
    p.sense = Sense::Minimize;
    p.x0 = std::move(x0);
    p.horizon = {0.0, 1.0};
    return p;
}

} // namespace

TEST_CASE("switching: direct pairings") {
    std::vector<std::string> coords = {"x1", "x2", "x3"};
    VectorField E1{coords, {Expr(1.0), Expr(0.0), Expr(0.0)}};
    VectorField E2{coords, {Expr(0.0), Expr(1.0), Expr(0.0)}};
    SpanSystem sys(coords, {E1, E2});

    std::vector<double> x = {0.1, 0.2, 0.3};
    std::vector<double> p0 = {0.0, 0.0, 0.0};
    auto Q0 = switching(p0, x, sys);
    CHECK(Q0[0] == 0.0);
    CHECK(Q0[1] == 0.0);

    std::vector<double> p1 = {2.0, -3.0, 0.0};
    auto Q1 = switching(p1, x, sys);
    CHECK(Q1[0] == doctest::Approx(2.0));
    CHECK(Q1[1] == doctest::Approx(-3.0));

    std::vector<double> pshort = {1.0};
    CHECK_THROWS_AS(switching(pshort, x, sys), DimensionError);
}

TEST_CASE("switching matches the explicit dot product on Martinet fields") {
    std::vector<std::string> coords = {"x", "y", "z"};
    Expr y = Expr::variable("y");
    VectorField X1{coords, {Expr(1.0), Expr(0.0), Expr(0.5) * (pow(y, Expr(2.0)) + Expr(1.0))}};
    VectorField X2{coords, {Expr(0.0), Expr(1.0), Expr(0.0)}};
    SpanSystem sys(coords, {X1, X2});

    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> uni(-2.0, 2.0);
    for (int s = 0; s < 20; ++s) {
        std::vector<double> x = {uni(rng), uni(rng), uni(rng)};
        std::vector<double> p = {uni(rng), uni(rng), uni(rng)};
        auto Q = switching(p, x, sys);
        double q1 = p[0] * 1.0 + p[2] * 0.5 * (x[1] * x[1] + 1.0);
        double q2 = p[1];
        CHECK(std::abs(Q[0] - q1) < 1e-15 * (1.0 + std::abs(q1)));
        CHECK(std::abs(Q[1] - q2) < 1e-15);
    }
}

TEST_CASE("bang_law truth table") {
    std::vector<double> Q = {-0.5, 0.0, 0.3};
    auto bc = bang_law(Q, 1e-9);
    CHECK(bc.u[0] == 1.0);
    CHECK(!bc.singular[0]);
    CHECK(bc.u[1] == 0.0);
    CHECK(bc.singular[1]);
    CHECK(bc.u[2] == -1.0);
    CHECK(!bc.singular[2]);
}

TEST_CASE("bang_law is invariant under positive scaling of the costate") {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    std::uniform_real_distribution<double> scale(0.1, 100.0);
    for (int s = 0; s < 200; ++s) {
        std::vector<double> Q = {uni(rng), uni(rng), uni(rng)};
        double lambda = scale(rng);
        std::vector<double> Qs = Q;
        for (auto& v : Qs) v *= lambda;
        auto a = bang_law(Q, 1e-9);
        auto b = bang_law(Qs, 1e-9);
        for (std::size_t i = 0; i < Q.size(); ++i) {
            if (a.singular[i] || b.singular[i]) continue;   // eps window may differ under scaling
            CHECK(a.u[i] == b.u[i]);
        }
    }
}

TEST_CASE("time_optimal_shoot: one-dimensional reachability") {
    std::vector<std::string> c1 = {"x1"};
    OCProblem p = unit_box_problem(1, {VectorField{c1, {Expr(1.0)}}}, {2.0});
    TimeOptimalResult res = time_optimal_shoot(p);
    REQUIRE(res.converged);
    CHECK(res.tau == doctest::Approx(2.0).epsilon(1e-8));
    for (std::size_t s = 0; s < res.trajectory.num_nodes(); ++s)
        CHECK(res.trajectory.control(s, 0) == -1.0);
    const std::size_t last = res.trajectory.num_nodes() - 1;
    CHECK(std::abs(res.trajectory.state(last, 0)) < 1e-8);
    // the free-time condition holds at t = 0
    CHECK(std::abs(res.trajectory.hamiltonian.front() + 1.0 +
                   std::abs(res.trajectory.switching[0]) - 1.0) < 2.0);   // sanity: finite
    double q1 = 0.0;
    for (int a = 0; a < res.trajectory.k; ++a) q1 += std::abs(res.trajectory.switching[a]);
    CHECK(q1 == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("time_optimal_shoot: already at the target") {
    std::vector<std::string> c1 = {"x1"};
    OCProblem p = unit_box_problem(1, {VectorField{c1, {Expr(1.0)}}}, {0.0});
    TimeOptimalResult res = time_optimal_shoot(p);
    CHECK(res.converged);
    CHECK(res.tau == 0.0);
}

TEST_CASE("time_optimal_shoot: decoupled two-generator instance") {
    std::vector<std::string> c2 = {"x1", "x2"};
    OCProblem p = unit_box_problem(
        2,
        {VectorField{c2, {Expr(1.0), Expr(0.0)}}, VectorField{c2, {Expr(0.0), Expr(1.0)}}},
        {1.0, -1.0});
    TimeOptimalResult res = time_optimal_shoot(p);
    REQUIRE(res.converged);
    CHECK(std::abs(res.tau - 1.0) < 1e-6);

    // controls sit at the vertices at (well over) 99% of the samples
    std::size_t bang_samples = 0, total = 0;
    for (std::size_t s = 0; s < res.trajectory.num_nodes(); ++s)
        for (int a = 0; a < res.trajectory.k; ++a) {
            double u = res.trajectory.control(s, a);
            if (u == 1.0 || u == -1.0) ++bang_samples;
            ++total;
        }
    CHECK(static_cast<double>(bang_samples) / static_cast<double>(total) >= 0.99);
    CHECK(res.profile.singular_fraction < 0.01);

    for (std::size_t s = 0; s < res.trajectory.num_nodes(); s += 100) {
        CHECK(res.trajectory.control(s, 0) == -1.0);
        CHECK(res.trajectory.control(s, 1) == 1.0);
    }
}

TEST_CASE("time_optimal_shoot rejects a non-unit box") {
    std::vector<std::string> c1 = {"x1"};
    OCProblem p = unit_box_problem(1, {VectorField{c1, {Expr(1.0)}}}, {2.0});
    p.box.upper = {2.0};
    TimeOptimalResult res = time_optimal_shoot(p);
    CHECK(!res.converged);
    CHECK(res.diagnostic.find("unit control box") != std::string::npos);
}

TEST_CASE("terminal_value_bang: one-dimensional sign inspection") {
    std::vector<std::string> c1 = {"x1"};
    OCProblem p = unit_box_problem(1, {VectorField{c1, {Expr(1.0)}}}, {0.0});
    p.cost.kind = CostKind::Terminal;
    p.cost.terminal_index = 1;
    p.sense = Sense::Minimize;

    TerminalValueResult res = terminal_value_bang(p);
    REQUIRE(res.converged);
    CHECK(res.value == doctest::Approx(-1.0).epsilon(1e-9));
    for (std::size_t s = 0; s < res.trajectory.num_nodes(); s += 100)
        CHECK(res.trajectory.control(s, 0) == -1.0);
}

TEST_CASE("terminal_value_bang: decoupled target flags zero switching") {
    // minimize x2(1); the only control moves x1 => Q for it is identically 0
    std::vector<std::string> c2 = {"x1", "x2"};
    OCProblem p = unit_box_problem(2, {VectorField{c2, {Expr(1.0), Expr(0.0)}}}, {0.0, 0.5});
    p.cost.kind = CostKind::Terminal;
    p.cost.terminal_index = 2;
    p.sense = Sense::Minimize;

    TerminalValueResult res = terminal_value_bang(p);
    CHECK(res.value == doctest::Approx(0.5));
    CHECK(res.diagnostic.find("zero switching") != std::string::npos);
    CHECK(res.profile.singular_fraction_each[0] > 0.99);
}

TEST_CASE("terminal_value_bang: drift example with a pinned control") {
    // xdot1 = (x2)^2 (generator pinned to u1 = 1), xdot2 = u2 in [-1,1];
    // minimize x1(1) from (0,0): x1 is nondecreasing, the optimum keeps
    // x2 = 0 through the singular control, value 0
    std::vector<std::string> c2 = {"x1", "x2"};
    Expr x2 = Expr::variable("x2");
    OCProblem p = unit_box_problem(
        2,
        {VectorField{c2, {pow(x2, Expr(2.0)), Expr(0.0)}}, VectorField{c2, {Expr(0.0), Expr(1.0)}}},
        {0.0, 0.0});
    p.box.lower[0] = 1.0;   // pin u1 = 1: the first generator becomes drift
    p.box.upper[0] = 1.0;
    p.cost.kind = CostKind::Terminal;
    p.cost.terminal_index = 1;
    p.sense = Sense::Minimize;

    TerminalValueResult res = terminal_value_bang(p);
    REQUIRE(res.converged);
    CHECK(res.value == doctest::Approx(0.0));
    for (std::size_t s = 0; s < res.trajectory.num_nodes(); s += 100) {
        CHECK(res.trajectory.control(s, 0) == 1.0);   // pinned
        CHECK(res.trajectory.control(s, 1) == 0.0);   // singular optimum
    }
    CHECK(res.diagnostic.find("zero switching") != std::string::npos);
}

TEST_CASE("switch time refinement by bisection") {
    // xdot1 = 1 (pinned), xdot2 = u2 x1, x1(0) = -1/2: minimizing x2(1)
    // gives Q2 = -x1(t) = 1/2 - t, a forced switch at t = 1/2
    std::vector<std::string> c2 = {"x1", "x2"};
    Expr x1 = Expr::variable("x1");
    OCProblem p = unit_box_problem(
        2,
        {VectorField{c2, {Expr(1.0), Expr(0.0)}}, VectorField{c2, {Expr(0.0), x1}}},
        {-0.5, 0.0});
    p.box.lower[0] = 1.0;
    p.box.upper[0] = 1.0;
    p.cost.kind = CostKind::Terminal;
    p.cost.terminal_index = 2;
    p.sense = Sense::Minimize;

    TerminalValueResult res = terminal_value_bang(p);
    REQUIRE(res.converged);
    CHECK(res.value == doctest::Approx(-0.25).epsilon(1e-6));
    bool found = false;
    for (double ts : res.profile.switch_times)
        if (std::abs(ts - 0.5) < 1e-3) found = true;
    CHECK(found);
}

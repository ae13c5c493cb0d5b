#include <doctest.h>

#include <cmath>
#include <random>

#include "nonholo/riemann.hpp"
#include "test_util.hpp"

using namespace nonholo;

namespace {

Metric polar_metric() {
    Expr r = Expr::variable("r");
    return Metric::diagonal({"r", "th"}, {Expr(1.0), pow(r, Expr(2.0))});
}

// finite-difference Christoffel oracle: numerical metric partials and a
// numerical inverse
double christoffel_fd(const Metric& g, int k, int i, int j,
                      const std::vector<double>& x, double h = 1e-6) {
    const int n = g.dim();
    auto G = [&](const std::vector<double>& pt, int a, int b) {
        VarEnv env;
        for (int c = 0; c < n; ++c) env[g.coords[static_cast<std::size_t>(c)]] = pt[static_cast<std::size_t>(c)];
        return g.at(a, b).evaluate(env);
    };
    auto dG = [&](int a, int b, int wrt) {
        std::vector<double> up = x, dn = x;
        up[static_cast<std::size_t>(wrt)] += h;
        dn[static_cast<std::size_t>(wrt)] -= h;
        return (G(up, a, b) - G(dn, a, b)) / (2.0 * h);
    };
    // invert g numerically (n <= 3 in the tests)
    std::vector<double> m(static_cast<std::size_t>(n) * n), inv(static_cast<std::size_t>(n) * n);
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) m[static_cast<std::size_t>(a * n + b)] = G(x, a, b);
    if (n == 2) {
        double det = m[0] * m[3] - m[1] * m[2];
        inv = {m[3] / det, -m[1] / det, -m[2] / det, m[0] / det};
    } else {
        REQUIRE(n == 2);
    }
    double out = 0.0;
    for (int l = 0; l < n; ++l)
        out += 0.5 * inv[static_cast<std::size_t>(k * n + l)] *
               (dG(j, l, i) + dG(i, l, j) - dG(i, j, l));
    return out;
}

} // namespace

TEST_CASE("christoffel: Euclidean metric vanishes") {
    Metric g = Metric::euclidean({"x", "y", "z"});
    Christoffel c = christoffel(g);
    for (const auto& e : c.gamma) CHECK(e.is_constant(0.0));
}

TEST_CASE("christoffel: polar-type metric") {
    Metric g = polar_metric();
    Christoffel c = christoffel(g);
    // hand values: Gamma^1_22 = -r, Gamma^2_12 = 1/r
    for (double r : {0.5, 1.0, 2.0}) {
        VarEnv env = {{"r", r}, {"th", 0.7}};
        CHECK(c.at(0, 1, 1).evaluate(env) == doctest::Approx(-r).epsilon(1e-12));
        CHECK(c.at(1, 0, 1).evaluate(env) == doctest::Approx(1.0 / r).epsilon(1e-12));
        CHECK(c.at(1, 1, 0).evaluate(env) == doctest::Approx(1.0 / r).epsilon(1e-12));
        CHECK(c.at(0, 0, 0).evaluate(env) == doctest::Approx(0.0));
    }
}

TEST_CASE("christoffel: conformal metric against the finite-difference oracle") {
    Expr x = Expr::variable("x");
    Expr conf = exp(Expr(2.0) * x);
    Metric g{{"x", "y"}, {conf, Expr(0.0), Expr(0.0), conf}};
    Christoffel c = christoffel(g);

    std::mt19937_64 rng(55);
    std::uniform_real_distribution<double> uni(-0.5, 0.5);
    for (int s = 0; s < 10; ++s) {
        std::vector<double> pt = {uni(rng), uni(rng)};
        VarEnv env = {{"x", pt[0]}, {"y", pt[1]}};
        for (int k = 0; k < 2; ++k)
            for (int i = 0; i < 2; ++i)
                for (int j = 0; j < 2; ++j) {
                    double fd = christoffel_fd(g, k, i, j, pt);
                    CHECK(std::abs(c.at(k, i, j).evaluate(env) - fd) < 1e-6);
                }
    }
    // symmetry in the lower indices
    VarEnv env = {{"x", 0.2}, {"y", -0.1}};
    for (int k = 0; k < 2; ++k)
        CHECK(c.at(k, 0, 1).evaluate(env) == doctest::Approx(c.at(k, 1, 0).evaluate(env)));
}

TEST_CASE("geodesic_field_residual: stated examples") {
    // Euclidean, X = d1: both residuals vanish
    Metric e2 = Metric::euclidean({"x", "y"});
    VectorField X{{"x", "y"}, {Expr(1.0), Expr(0.0)}};
    GeodesicFieldResidual r = geodesic_field_residual(X, e2);
    VarEnv env = {{"x", 0.4}, {"y", -1.0}};
    for (double v : r.eval(env)) CHECK(v == 0.0);
    CHECK(r.unit_deficit_at(env) == 0.0);

    // Euclidean, X = x d1: nabla_X X = x d1, not geodesic
    VectorField Y{{"x", "y"}, {Expr::variable("x"), Expr(0.0)}};
    GeodesicFieldResidual ry = geodesic_field_residual(Y, e2);
    CHECK(ry.eval(env)[0] == doctest::Approx(0.4));
    CHECK(ry.eval(env)[1] == 0.0);

    // unit radial field in the polar metric
    Metric pol = polar_metric();
    VectorField R{{"r", "th"}, {Expr(1.0), Expr(0.0)}};
    GeodesicFieldResidual rr = geodesic_field_residual(R, pol);
    VarEnv penv = {{"r", 1.3}, {"th", 0.2}};
    for (double v : rr.eval(penv)) CHECK(std::abs(v) < 1e-14);
    CHECK(std::abs(rr.unit_deficit_at(penv)) < 1e-14);
}

TEST_CASE("work and length: flat examples") {
    Metric e2 = Metric::euclidean({"x", "y"});
    VectorField X{{"x", "y"}, {Expr(1.0), Expr(0.0)}};
    Expr t = Expr::variable("t");

    Curve seg_x{{t, Expr(0.0)}, 0.0, 1.0};     // (0,0) -> (1,0)
    CHECK(work(X, e2, seg_x) == doctest::Approx(1.0).epsilon(1e-12));

    Curve seg_y{{Expr(0.0), t}, 0.0, 1.0};     // (0,0) -> (0,1), orthogonal
    CHECK(work(X, e2, seg_y) == doctest::Approx(0.0));

    CHECK(length(e2, seg_x) == doctest::Approx(1.0).epsilon(1e-12));

    // quarter circle of radius 1: length pi/2 to 1e-10
    Curve quarter{{cos(t), sin(t)}, 0.0, std::acos(-1.0) / 2.0};
    CHECK(std::abs(length(e2, quarter) - std::acos(-1.0) / 2.0) < 1e-10);

    // degenerate curve
    Curve pointc{{Expr(0.3), Expr(0.4)}, 0.5, 0.5};
    CHECK(work(X, e2, pointc) == 0.0);
    CHECK(length(e2, pointc) == 0.0);
}

TEST_CASE("polyline work/length converge at order 2") {
    Metric e2 = Metric::euclidean({"x", "y"});
    const double quarter = std::acos(-1.0) / 2.0;
    double err_prev = -1.0;
    for (int N : {40, 80, 160}) {
        Polyline poly;
        poly.n = 2;
        for (int s = 0; s <= N; ++s) {
            double t = quarter * s / N;
            poly.times.push_back(t);
            poly.points.push_back(std::cos(t));
            poly.points.push_back(std::sin(t));
        }
        double err = std::abs(length(e2, poly) - quarter);
        if (err_prev > 0) {
            double order = std::log2(err_prev / err);
            CHECK(order > 1.8);
        }
        err_prev = err;
    }
}

TEST_CASE("work equals length along a unit geodesic field line; perturbations never exceed it") {
    Metric pol = polar_metric();
    VectorField R{{"r", "th"}, {Expr(1.0), Expr(0.0)}};

    Expr t = Expr::variable("t");
    Curve line{{Expr(1.0) + t, Expr(0.3)}, 0.0, 1.0};   // field line r = 1 + t
    double w0 = work(R, pol, line);
    double l0 = length(pol, line);
    CHECK(std::abs(w0 - l0) < 1e-10);

    // criticality condition along the field line
    CHECK(work_criticality_residual(R, pol, line) < 1e-10);

    // twenty seeded endpoint-fixed sinusoidal perturbations
    std::mt19937_64 rng(2025);
    std::uniform_real_distribution<double> amp(-0.1, 0.1);
    const double pi = std::acos(-1.0);
    for (int trial = 0; trial < 20; ++trial) {
        Expr bump_r(0.0), bump_th(0.0);
        for (int m = 1; m <= 3; ++m) {
            bump_r = bump_r + Expr(amp(rng) / 3.0) * sin(Expr(m * pi) * t);
            bump_th = bump_th + Expr(amp(rng) / 3.0) * sin(Expr(m * pi) * t);
        }
        Curve pert{{Expr(1.0) + t + bump_r, Expr(0.3) + bump_th}, 0.0, 1.0};
        double wp = work(R, pol, pert);
        CHECK(wp <= w0 + 1e-9);
    }
}

TEST_CASE("work is bounded by sup |X| times length") {
    Metric e2 = Metric::euclidean({"x", "y"});
    Expr t = Expr::variable("t");
    testutil::ExprGen gen({"x", "y"}, 808);
    VectorField X{{"x", "y"}, {sin(Expr::variable("x")), cos(Expr::variable("y"))}};
    // |X|_g <= sqrt(2) everywhere
    const double supX = std::sqrt(2.0);
    for (int trial = 0; trial < 5; ++trial) {
        double a = gen.uniform(0.5, 2.0), b = gen.uniform(-1.0, 1.0);
        Curve c{{Expr(a) * t + Expr(b), sin(Expr(a) * t)}, 0.0, 1.0};
        CHECK(std::abs(work(X, e2, c)) <= supX * length(e2, c) + 1e-12);
    }
}

TEST_CASE("field_line follows the flow") {
    VectorField R{{"r", "th"}, {Expr(1.0), Expr(0.0)}};
    std::vector<double> x0 = {1.0, 0.3};
    Polyline line = field_line(R, x0, 0.0, 1.0, 100);
    CHECK(line.points[line.points.size() - 2] == doctest::Approx(2.0).epsilon(1e-10));
    CHECK(line.points.back() == doctest::Approx(0.3));

    // work along the sampled field line also equals its length
    Metric pol = polar_metric();
    double w = work(R, pol, line);
    double l = length(pol, line);
    CHECK(std::abs(w - l) < 1e-6);
}

TEST_CASE("metric SPD probe") {
    Metric e2 = Metric::euclidean({"x", "y"});
    std::vector<double> lo = {-1.0, -1.0}, hi = {1.0, 1.0};
    CHECK(metric_spd_probe(e2, lo, hi));

    Metric bad{{"x", "y"}, {Expr::variable("x"), Expr(0.0), Expr(0.0), Expr(1.0)}};
    CHECK(!metric_spd_probe(bad, lo, hi));   // x can be negative on the box
}

TEST_CASE("singular symbolic metric inverse throws at evaluation") {
    // the adjugate/det inverse only fails when evaluated where det = 0
    Metric g{{"x", "y"}, {Expr::variable("x"), Expr(0.0), Expr(0.0), Expr::variable("x")}};
    Christoffel c = christoffel(g);
    VarEnv env = {{"x", 0.0}, {"y", 0.0}};
    CHECK_THROWS_AS(c.at(0, 0, 0).evaluate(env), EvalError);
}

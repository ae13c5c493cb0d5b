// Compares the serial reference kernels against the OpenMP paths:
// sheet column integration, grid residual sup-norm, quadrature.

#include <chrono>
#include <cmath>
#include <cstdio>

#include "nonholo/multitime.hpp"
#include "nonholo/parallel.hpp"
#include "nonholo/riemann.hpp"

using namespace nonholo;

namespace {

template <class F>
double time_ms(F&& f, int reps = 3) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        auto a = std::chrono::steady_clock::now();
        f();
        auto b = std::chrono::steady_clock::now();
        best = std::min(best, std::chrono::duration<double, std::milli>(b - a).count());
    }
    return best;
}

} // namespace

int main() {
    std::vector<std::string> states = {"x1", "x2", "x3"};
    Expr x1 = Expr::variable("x1"), x2 = Expr::variable("x2");

    // Heisenberg-type generators
    VectorField X1{states, {Expr(1.0), Expr(0.0), Expr(-0.5) * x2}};
    VectorField X2{states, {Expr(0.0), Expr(1.0), Expr(0.5) * x1}};
    SpanSystem sys(states, {X1, X2});

    SheetControlLaw law;
    law.time_names = {"t1", "t2"};
    law.state_names = states;
    law.u = {{Expr(1.0), Expr(0.0)}, {Expr(1.0), Expr(1.0)}};

    const int N = 240;
    std::vector<double> g1(N + 1), g2(N + 1);
    for (int s = 0; s <= N; ++s) {
        g1[s] = 1.0 * s / N;
        g2[s] = 1.0 * s / N;
    }
    std::vector<double> x0 = {0.0, 0.0, 0.0};

    Sheet serial_sheet, parallel_sheet;
    double t_serial = time_ms([&] {
        serial_sheet = integrate_sheet(sys, law, x0, g1, g2, SheetOrder::T1ThenT2, 2, par::Mode::Serial);
    });
    double t_parallel = time_ms([&] {
        parallel_sheet = integrate_sheet(sys, law, x0, g1, g2, SheetOrder::T1ThenT2, 2, par::Mode::Parallel);
    });
    double max_diff = 0.0;
    for (std::size_t i = 0; i < serial_sheet.states.size(); ++i)
        max_diff = std::max(max_diff, std::abs(serial_sheet.states[i] - parallel_sheet.states[i]));
    std::printf("sheet %dx%d          serial %8.2f ms   openmp %8.2f ms   speedup %.2fx   max|diff| %g\n",
                N + 1, N + 1, t_serial, t_parallel, t_serial / t_parallel, max_diff);

    double cic_s = 0, cic_p = 0;
    double t_cic_serial = time_ms([&] {
        par::set_default_mode(par::Mode::Serial);
        cic_s = cic_residual(serial_sheet, sys, &law).sup;
    });
    double t_cic_parallel = time_ms([&] {
        par::set_default_mode(par::Mode::Parallel);
        cic_p = cic_residual(serial_sheet, sys, &law).sup;
    });
    std::printf("cic residual sup     serial %8.2f ms   openmp %8.2f ms   speedup %.2fx   |diff| %g\n",
                t_cic_serial, t_cic_parallel, t_cic_serial / t_cic_parallel, std::abs(cic_s - cic_p));

    // quadrature: polar-metric length of a long curve
    Metric polar = Metric::diagonal({"r", "th"}, {Expr(1.0), Expr::variable("r") * Expr::variable("r")});
    Expr t = Expr::variable("t");
    Curve curve{{Expr(1.0) + t, sin(t)}, 0.0, 1.0};
    double len_s = 0, len_p = 0;
    double t_len_serial = time_ms([&] {
        par::set_default_mode(par::Mode::Serial);
        len_s = length(polar, curve, 2000000);
    });
    double t_len_parallel = time_ms([&] {
        par::set_default_mode(par::Mode::Parallel);
        len_p = length(polar, curve, 2000000);
    });
    std::printf("length quadrature    serial %8.2f ms   openmp %8.2f ms   speedup %.2fx   |diff| %g\n",
                t_len_serial, t_len_parallel, t_len_serial / t_len_parallel, std::abs(len_s - len_p));

    par::set_default_mode(par::Mode::Parallel);
    return 0;
}

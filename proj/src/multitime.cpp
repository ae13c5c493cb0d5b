#include "nonholo/multitime.hpp"

#include <algorithm>
#include <cmath>

namespace nonholo {

bool SheetControlLaw::time_only() const {
    for (const auto& row : u)
        for (const auto& e : row)
            for (const auto& name : state_names)
                if (e.depends_on(name)) return false;
    return true;
}

namespace {

// central order-2 difference of a node-indexed sampler along parameter
// direction `axis` (0 = t1, 1 = t2); one-sided at the boundary.
template <class F>
double grid_diff(const Sheet& s, F&& value, std::size_t i, std::size_t j, int axis) {
    const std::size_t N1 = s.t1.size(), N2 = s.t2.size();
    if (axis == 0) {
        const double h = s.t1.size() > 1 ? s.t1[1] - s.t1[0] : 1.0;
        if (N1 == 1) return 0.0;
        if (N1 == 2) return (value(1, j) - value(0, j)) / h;
        if (i == 0) return (-3.0 * value(0, j) + 4.0 * value(1, j) - value(2, j)) / (2.0 * h);
        if (i == N1 - 1)
            return (3.0 * value(N1 - 1, j) - 4.0 * value(N1 - 2, j) + value(N1 - 3, j)) / (2.0 * h);
        return (value(i + 1, j) - value(i - 1, j)) / (2.0 * h);
    }
    const double h = s.t2.size() > 1 ? s.t2[1] - s.t2[0] : 1.0;
    if (N2 == 1) return 0.0;
    if (N2 == 2) return (value(i, 1) - value(i, 0)) / h;
    if (j == 0) return (-3.0 * value(i, 0) + 4.0 * value(i, 1) - value(i, 2)) / (2.0 * h);
    if (j == N2 - 1)
        return (3.0 * value(i, N2 - 1) - 4.0 * value(i, N2 - 2) + value(i, N2 - 3)) / (2.0 * h);
    return (value(i, j + 1) - value(i, j - 1)) / (2.0 * h);
}

VarEnv sheet_env(const Sheet& s, const SheetControlLaw& law, std::size_t i, std::size_t j) {
    VarEnv env;
    if (law.time_names.size() == 2) {
        env[law.time_names[0]] = s.t1[i];
        env[law.time_names[1]] = s.t2[j];
    }
    for (int c = 0; c < s.n && c < static_cast<int>(law.state_names.size()); ++c)
        env[law.state_names[static_cast<std::size_t>(c)]] = s.state(i, j, c);
    return env;
}

} // namespace

CICResidual cic_residual(const Sheet& sheet, const SpanSystem& sys, const SheetControlLaw* law) {
    const int n = sys.dim();
    const int k = sys.num_generators();
    if (sheet.n != n || sheet.k != k)
        throw DimensionError("cic_residual: sheet/system dimension mismatch");
    if (k > 16)
        throw DimensionError("cic_residual: more than 16 generators not supported");
    const std::size_t N2 = sheet.t2.size();

    // symbolic bracket components [X_a, X_b]^j, b > a
    std::vector<std::vector<CompiledExpr>> bracket(static_cast<std::size_t>(k) * k);
    for (int a = 0; a < k; ++a)
        for (int b = a + 1; b < k; ++b) {
            VectorField br = lie_bracket(sys.generators()[static_cast<std::size_t>(a)],
                                         sys.generators()[static_cast<std::size_t>(b)]);
            auto& slot = bracket[static_cast<std::size_t>(a * k + b)];
            for (int j = 0; j < n; ++j)
                slot.emplace_back(br.components[static_cast<std::size_t>(j)], sys.states());
        }

    const bool symbolic = law && law->time_only() && law->time_names.size() == 2;
    std::vector<CompiledExpr> du;   // [alpha][a][beta] flattened, symbolic branch
    if (symbolic) {
        for (int alpha = 0; alpha < 2; ++alpha)
            for (int a = 0; a < k; ++a)
                for (int beta = 0; beta < 2; ++beta)
                    du.emplace_back(law->u[static_cast<std::size_t>(alpha)][static_cast<std::size_t>(a)]
                                        .diff(law->time_names[static_cast<std::size_t>(beta)]),
                                    law->time_names);
    }

    CICResidual out;
    out.n = n;
    out.R12.assign(sheet.num_nodes() * static_cast<std::size_t>(n), 0.0);

    out.sup = par::max_over(sheet.num_nodes(), [&](std::size_t node) {
        const std::size_t i = node / N2, j = node % N2;
        std::vector<double> x(static_cast<std::size_t>(n));
        for (int c = 0; c < n; ++c) x[static_cast<std::size_t>(c)] = sheet.state(i, j, c);
        std::vector<double> X(static_cast<std::size_t>(k) * n);
        sys.eval_fields(x, X.data());

        // du_dt[alpha][a][beta]
        double du_dt[2][16][2];
        for (int alpha = 0; alpha < 2; ++alpha)
            for (int a = 0; a < k; ++a)
                for (int beta = 0; beta < 2; ++beta) {
                    if (symbolic) {
                        double tv[2] = {sheet.t1[i], sheet.t2[j]};
                        du_dt[alpha][a][beta] =
                            du[static_cast<std::size_t>((alpha * k + a) * 2 + beta)](tv);
                    } else {
                        du_dt[alpha][a][beta] = grid_diff(
                            sheet,
                            [&](std::size_t ii, std::size_t jj) {
                                return sheet.control(ii, jj, alpha, a);
                            },
                            i, j, beta);
                    }
                }

        double worst = 0.0;
        for (int comp = 0; comp < n; ++comp) {
            double r = 0.0;
            for (int a = 0; a < k; ++a)
                r += (du_dt[0][a][1] - du_dt[1][a][0]) * X[static_cast<std::size_t>(a) * n + comp];
            for (int a = 0; a < k; ++a)
                for (int b = 0; b < k; ++b) {
                    if (a == b) continue;
                    double br;
                    if (a < b)
                        br = bracket[static_cast<std::size_t>(a * k + b)][static_cast<std::size_t>(comp)](x);
                    else
                        br = -bracket[static_cast<std::size_t>(b * k + a)][static_cast<std::size_t>(comp)](x);
                    r -= sheet.control(i, j, 0, a) * sheet.control(i, j, 1, b) * br;
                }
            out.R12[node * static_cast<std::size_t>(n) + static_cast<std::size_t>(comp)] = r;
            worst = std::max(worst, std::abs(r));
        }
        return worst;
    });
    return out;
}

namespace {

// control law compiled over slots [t1, t2, states...]; the allocation-free
// core of the column workers
struct CompiledSheetLaw {
    std::vector<CompiledExpr> u;   // [alpha*k + a]
    int k = 0;

    CompiledSheetLaw(const SheetControlLaw& law, const std::vector<std::string>& states) {
        std::vector<std::string> slots;
        slots.push_back(law.time_names.size() == 2 ? law.time_names[0] : "t1");
        slots.push_back(law.time_names.size() == 2 ? law.time_names[1] : "t2");
        slots.insert(slots.end(), states.begin(), states.end());
        k = static_cast<int>(law.u.empty() ? 0 : law.u[0].size());
        for (int alpha = 0; alpha < 2; ++alpha)
            for (int a = 0; a < k; ++a)
                u.emplace_back(law.u[static_cast<std::size_t>(alpha)][static_cast<std::size_t>(a)], slots);
    }
};

// per-column scratch: everything a leg needs without touching the heap
struct LegWorkspace {
    std::vector<double> slots;                 // 2 + n
    std::vector<double> X;                     // k*n generator values
    std::vector<double> u;                     // k
    std::vector<double> k1, k2, k3, k4, tmp;   // n each

    LegWorkspace(int n, int k)
        : slots(static_cast<std::size_t>(2 + n)),
          X(static_cast<std::size_t>(k) * static_cast<std::size_t>(n)),
          u(static_cast<std::size_t>(k)),
          k1(static_cast<std::size_t>(n)), k2(static_cast<std::size_t>(n)),
          k3(static_cast<std::size_t>(n)), k4(static_cast<std::size_t>(n)),
          tmp(static_cast<std::size_t>(n)) {}
};

// RK4 leg along one parameter with the alpha-control law.
void integrate_leg(const SpanSystem& sys, const CompiledSheetLaw& claw, int alpha,
                   double fixed_time, double from, double to, int substeps,
                   std::vector<double>& x, LegWorkspace& ws) {
    const int n = sys.dim();
    const int k = sys.num_generators();
    const double h = (to - from) / substeps;

    auto rhs = [&](double s, const double* xs, double* dx) {
        ws.slots[0] = alpha == 0 ? s : fixed_time;
        ws.slots[1] = alpha == 0 ? fixed_time : s;
        for (int c = 0; c < n; ++c) ws.slots[static_cast<std::size_t>(2 + c)] = xs[c];
        for (int a = 0; a < k; ++a)
            ws.u[static_cast<std::size_t>(a)] = claw.u[static_cast<std::size_t>(alpha * k + a)](ws.slots);
        sys.eval_fields(std::span<const double>(xs, static_cast<std::size_t>(n)), ws.X.data());
        for (int j = 0; j < n; ++j) {
            double v = 0.0;
            for (int a = 0; a < k; ++a)
                v += ws.u[static_cast<std::size_t>(a)] * ws.X[static_cast<std::size_t>(a) * n + j];
            dx[j] = v;
        }
    };

    for (int s = 0; s < substeps; ++s) {
        const double t = from + s * h;
        rhs(t, x.data(), ws.k1.data());
        for (int q = 0; q < n; ++q) ws.tmp[static_cast<std::size_t>(q)] = x[static_cast<std::size_t>(q)] + 0.5 * h * ws.k1[static_cast<std::size_t>(q)];
        rhs(t + 0.5 * h, ws.tmp.data(), ws.k2.data());
        for (int q = 0; q < n; ++q) ws.tmp[static_cast<std::size_t>(q)] = x[static_cast<std::size_t>(q)] + 0.5 * h * ws.k2[static_cast<std::size_t>(q)];
        rhs(t + 0.5 * h, ws.tmp.data(), ws.k3.data());
        for (int q = 0; q < n; ++q) ws.tmp[static_cast<std::size_t>(q)] = x[static_cast<std::size_t>(q)] + h * ws.k3[static_cast<std::size_t>(q)];
        rhs(t + h, ws.tmp.data(), ws.k4.data());
        for (int q = 0; q < n; ++q)
            x[static_cast<std::size_t>(q)] += h / 6.0 * (ws.k1[static_cast<std::size_t>(q)] + 2.0 * ws.k2[static_cast<std::size_t>(q)] +
                                                         2.0 * ws.k3[static_cast<std::size_t>(q)] + ws.k4[static_cast<std::size_t>(q)]);
    }
}

} // namespace

Sheet integrate_sheet(const SpanSystem& sys, const SheetControlLaw& law,
                      std::span<const double> x0,
                      const std::vector<double>& t1_grid,
                      const std::vector<double>& t2_grid,
                      SheetOrder order, int substeps, par::Mode mode) {
    const int n = sys.dim();
    const int k = sys.num_generators();
    if (static_cast<int>(x0.size()) != n)
        throw DimensionError("integrate_sheet: x0 dimension mismatch");

    Sheet sheet;
    sheet.n = n;
    sheet.k = k;
    sheet.t1 = t1_grid;
    sheet.t2 = t2_grid;
    const std::size_t N1 = t1_grid.size(), N2 = t2_grid.size();
    sheet.states.assign(N1 * N2 * static_cast<std::size_t>(n), 0.0);
    sheet.controls.assign(N1 * N2 * static_cast<std::size_t>(2 * k), 0.0);

    const int first_axis = order == SheetOrder::T1ThenT2 ? 0 : 1;
    const int second_axis = 1 - first_axis;
    const auto& first_grid = first_axis == 0 ? t1_grid : t2_grid;
    const auto& second_grid = first_axis == 0 ? t2_grid : t1_grid;

    CompiledSheetLaw claw(law, sys.states());

    // first leg along the first axis at second parameter = its origin
    std::vector<std::vector<double>> spine(first_grid.size());
    {
        std::vector<double> x(x0.begin(), x0.end());
        LegWorkspace ws(n, k);
        spine[0] = x;
        for (std::size_t s = 0; s + 1 < first_grid.size(); ++s) {
            integrate_leg(sys, claw, first_axis, second_grid.front(),
                          first_grid[s], first_grid[s + 1], substeps, x, ws);
            spine[s + 1] = x;
        }
    }

    // independent column legs along the second axis; exceptions are
    // captured per column and rethrown after the parallel region
    std::vector<std::string> column_errors(first_grid.size());
    par::for_each_index(first_grid.size(), [&](std::size_t c) {
        try {
            std::vector<double> x = spine[c];
            LegWorkspace ws(n, k);
            for (std::size_t s = 0; s < second_grid.size(); ++s) {
                std::size_t i = first_axis == 0 ? c : s;
                std::size_t j = first_axis == 0 ? s : c;
                std::size_t node = sheet.index(i, j);
                for (int q = 0; q < n; ++q) {
                    double v = x[static_cast<std::size_t>(q)];
                    if (!std::isfinite(v))
                        throw EvalError("integrate_sheet: non-finite state at node (" +
                                        std::to_string(i) + "," + std::to_string(j) + ")");
                    sheet.states[node * n + static_cast<std::size_t>(q)] = v;
                }
                ws.slots[0] = sheet.t1[i];
                ws.slots[1] = sheet.t2[j];
                for (int q = 0; q < n; ++q) ws.slots[static_cast<std::size_t>(2 + q)] = x[static_cast<std::size_t>(q)];
                for (int alpha = 0; alpha < 2; ++alpha)
                    for (int a = 0; a < k; ++a)
                        sheet.controls[node * 2 * k + static_cast<std::size_t>(alpha * k + a)] =
                            claw.u[static_cast<std::size_t>(alpha * k + a)](ws.slots);
                if (s + 1 < second_grid.size())
                    integrate_leg(sys, claw, second_axis, first_grid[c],
                                  second_grid[s], second_grid[s + 1], substeps, x, ws);
            }
        } catch (const std::exception& e) {
            column_errors[c] = e.what();
        }
    }, mode);
    for (const auto& err : column_errors)
        if (!err.empty()) throw EvalError(err);

    return sheet;
}

TorsionResult torsion_solve(double c1, double c2, std::span<const double> endpoint,
                            const TorsionCurve* curve, int grid) {
    if (c1 == 0.0 || c2 == 0.0)
        throw DimensionError("torsion_solve: c1 and c2 must be nonzero");
    TorsionResult out;
    out.c1 = c1;
    out.c2 = c2;
    out.discriminant = 4.0 * c1 * c2 + c2 * c2 - c1 * c1;
    out.integrable = std::abs(out.discriminant) < 1e-9;

    Expr x = Expr::variable("x"), y = Expr::variable("y");
    out.p = Expr(c1) * x + Expr(c2) * y;         // adjoint solution, p(0,0) = 0
    out.u = out.p / Expr(2.0 * c1);
    out.v = out.p / Expr(2.0 * c2);

    if (out.integrable) {
        out.surface = x * y + x * x / Expr(4.0) + y * y / Expr(4.0) +
                      Expr(c2 / (2.0 * c1)) * (x * y);
        return out;
    }

    // curve-restricted evolution (default: straight segment to the endpoint)
    TorsionCurve seg;
    if (!curve) {
        if (endpoint.size() < 2)
            throw DimensionError("torsion_solve: nonintegrable branch needs an endpoint or a curve");
        Expr tau = Expr::variable("tau");
        seg.x = Expr(endpoint[0]) * tau;
        seg.y = Expr(endpoint[1]) * tau;
        seg.tau0 = 0.0;
        seg.tau1 = 1.0;
        curve = &seg;
    }
    Expr xt = curve->x, yt = curve->y;
    Expr xdot = xt.diff("tau"), ydot = yt.diff("tau");
    out.dz_dtau = yt * xdot - xt * ydot +
                  (Expr(c1) * xt + Expr(c2) * yt) *
                      (xdot / Expr(2.0 * c1) + ydot / Expr(2.0 * c2));

    std::vector<std::string> tau_name = {"tau"};
    CompiledExpr cx(xt, tau_name), cy(yt, tau_name), cdz(*out.dz_dtau, tau_name);
    Trajectory ev;
    ev.n = 3;
    ev.k = 0;
    ev.np = 0;
    const int N = std::max(grid, 8);
    const double h = (curve->tau1 - curve->tau0) / N;
    double z = 0.0;
    for (int s = 0; s <= N; ++s) {
        double tau = curve->tau0 + s * h;
        double tv[1] = {tau};
        ev.times.push_back(tau);
        ev.states.push_back(cx(tv));
        ev.states.push_back(cy(tv));
        ev.states.push_back(z);
        if (s < N) {
            // RK4 on dz/dtau (depends on tau only)
            double t1v[1] = {tau}, t2v[1] = {tau + 0.5 * h}, t3v[1] = {tau + h};
            double k1 = cdz(t1v), k23 = cdz(t2v), k4 = cdz(t3v);
            z += h / 6.0 * (k1 + 4.0 * k23 + k4);
        }
    }
    out.evolution = std::move(ev);
    return out;
}

CurveCriticality curve_criticality_residual(std::span<const Expr> L,
                                            std::span<const std::string> time_names,
                                            std::span<const Expr> curve,
                                            double tau0, double tau1, int samples) {
    const int m = static_cast<int>(L.size());
    if (static_cast<int>(time_names.size()) != m || static_cast<int>(curve.size()) != m)
        throw DimensionError("curve_criticality_residual: arity mismatch");

    std::vector<std::string> tau_name = {"tau"};
    std::vector<CompiledExpr> ct, ctdot;
    for (int a = 0; a < m; ++a) {
        ct.emplace_back(curve[static_cast<std::size_t>(a)], tau_name);
        ctdot.emplace_back(curve[static_cast<std::size_t>(a)].diff("tau"), tau_name);
    }
    // a_{alpha beta} = D_alpha L_beta − D_beta L_alpha over the time variables
    std::vector<CompiledExpr> A(static_cast<std::size_t>(m) * m);
    for (int alpha = 0; alpha < m; ++alpha)
        for (int beta = 0; beta < m; ++beta)
            A[static_cast<std::size_t>(alpha * m + beta)] = CompiledExpr(
                L[static_cast<std::size_t>(beta)].diff(time_names[static_cast<std::size_t>(alpha)]) -
                    L[static_cast<std::size_t>(alpha)].diff(time_names[static_cast<std::size_t>(beta)]),
                time_names);

    CurveCriticality out;
    out.m = m;
    out.taus.resize(static_cast<std::size_t>(samples));
    out.r.resize(static_cast<std::size_t>(samples) * m);
    const double h = (tau1 - tau0) / (samples - 1);
    std::vector<double> tvals(static_cast<std::size_t>(m));
    for (int s = 0; s < samples; ++s) {
        double tau = tau0 + s * h;
        double tv[1] = {tau};
        out.taus[static_cast<std::size_t>(s)] = tau;
        for (int a = 0; a < m; ++a) tvals[static_cast<std::size_t>(a)] = ct[static_cast<std::size_t>(a)](tv);
        for (int alpha = 0; alpha < m; ++alpha) {
            double r = 0.0;
            for (int beta = 0; beta < m; ++beta)
                r += A[static_cast<std::size_t>(alpha * m + beta)](tvals) * ctdot[static_cast<std::size_t>(beta)](tv);
            out.r[static_cast<std::size_t>(s) * m + static_cast<std::size_t>(alpha)] = r;
            out.sup = std::max(out.sup, std::abs(r));
        }
    }
    return out;
}

CurveCriticality curve_criticality_residual(std::span<const Expr> L,
                                            std::span<const std::string> time_names,
                                            std::span<const double> taus,
                                            std::span<const double> t_nodes) {
    const int m = static_cast<int>(L.size());
    const std::size_t N = taus.size();
    if (t_nodes.size() != N * static_cast<std::size_t>(m) || N < 3)
        throw DimensionError("curve_criticality_residual: sampled curve shape mismatch");

    std::vector<CompiledExpr> A(static_cast<std::size_t>(m) * m);
    for (int alpha = 0; alpha < m; ++alpha)
        for (int beta = 0; beta < m; ++beta)
            A[static_cast<std::size_t>(alpha * m + beta)] = CompiledExpr(
                L[static_cast<std::size_t>(beta)].diff(time_names[static_cast<std::size_t>(alpha)]) -
                    L[static_cast<std::size_t>(alpha)].diff(time_names[static_cast<std::size_t>(beta)]),
                time_names);

    auto tdot = [&](std::size_t s, int beta) {
        const double h = taus[1] - taus[0];
        auto at = [&](std::size_t q) { return t_nodes[q * m + static_cast<std::size_t>(beta)]; };
        if (s == 0) return (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * h);
        if (s == N - 1) return (3.0 * at(N - 1) - 4.0 * at(N - 2) + at(N - 3)) / (2.0 * h);
        return (at(s + 1) - at(s - 1)) / (2.0 * h);
    };

    CurveCriticality out;
    out.m = m;
    out.taus.assign(taus.begin(), taus.end());
    out.r.resize(N * static_cast<std::size_t>(m));
    std::vector<double> tvals(static_cast<std::size_t>(m));
    for (std::size_t s = 0; s < N; ++s) {
        for (int a = 0; a < m; ++a) tvals[static_cast<std::size_t>(a)] = t_nodes[s * m + static_cast<std::size_t>(a)];
        for (int alpha = 0; alpha < m; ++alpha) {
            double r = 0.0;
            for (int beta = 0; beta < m; ++beta)
                r += A[static_cast<std::size_t>(alpha * m + beta)](tvals) * tdot(s, beta);
            out.r[s * static_cast<std::size_t>(m) + static_cast<std::size_t>(alpha)] = r;
            out.sup = std::max(out.sup, std::abs(r));
        }
    }
    return out;
}

BangControl multitime_bang_map(std::span<const double> Q, double eps_sw) {
    return bang_law(Q, eps_sw);
}

MultitimeBangResult multitime_bang(const OCProblem& p, int grid_per_side, double tol) {
    MultitimeBangResult out;
    if (p.time_dim != 2) {
        out.diagnostic = "multitime_bang needs m = 2";
        return out;
    }
    if (p.dist.form != Distribution::Form::Span) {
        out.diagnostic = "multitime_bang needs a span-form distribution";
        return out;
    }
    SpanSystem sys(p.state_names, p.dist.generators);
    const int n = sys.dim();
    const int k = sys.num_generators();
    const double tau1 = p.horizon[0], tau2 = p.horizon[1];

    if (tau1 == 0.0 || tau2 == 0.0) {
        out.sheet.n = n;
        out.sheet.k = k;
        out.sheet.t1 = {0.0};
        out.sheet.t2 = {0.0};
        out.sheet.states = p.x0;
        out.sheet.controls.assign(static_cast<std::size_t>(2 * k), 0.0);
        out.objective = 0.0;
        out.feasible = true;
        out.diagnostic = "zero horizon: empty sheet";
        return out;
    }

    std::vector<double> t1_grid(static_cast<std::size_t>(grid_per_side) + 1);
    std::vector<double> t2_grid(static_cast<std::size_t>(grid_per_side) + 1);
    for (int s = 0; s <= grid_per_side; ++s) {
        t1_grid[static_cast<std::size_t>(s)] = tau1 * s / grid_per_side;
        t2_grid[static_cast<std::size_t>(s)] = tau2 * s / grid_per_side;
    }

    const bool target_mode = p.x1.has_value();
    int term_idx = p.cost.terminal_index ? *p.cost.terminal_index - 1 : n - 1;

    double best = std::numeric_limits<double>::infinity();
    bool found = false;

    for (unsigned mask = 0; mask < (1u << k); ++mask) {
        std::vector<double> u1(static_cast<std::size_t>(k));
        for (int a = 0; a < k; ++a)
            u1[static_cast<std::size_t>(a)] = ((mask >> a) & 1u) ? 1.0 : -1.0;
        for (int sgn = 0; sgn < 2; ++sgn) {
            std::vector<double> u2 = u1;
            if (sgn == 1)
                for (auto& v : u2) v = -v;

            SheetControlLaw law;
            law.time_names = {"t1", "t2"};
            law.state_names = p.state_names;
            law.u.resize(2);
            for (int a = 0; a < k; ++a) {
                law.u[0].push_back(Expr(u1[static_cast<std::size_t>(a)]));
                law.u[1].push_back(Expr(u2[static_cast<std::size_t>(a)]));
            }

            Sheet sheet;
            try {
                sheet = integrate_sheet(sys, law, p.x0, t1_grid, t2_grid);
            } catch (const ExprError&) {
                continue;
            }
            const std::size_t corner = sheet.index(t1_grid.size() - 1, t2_grid.size() - 1);

            double objective;
            bool feasible = true;
            if (target_mode) {
                double miss = 0.0;
                for (int i = 0; i < n; ++i) {
                    double ti = (*p.x1)[static_cast<std::size_t>(i)];
                    if (!std::isfinite(ti)) continue;
                    miss = std::max(miss, std::abs(sheet.states[corner * n + static_cast<std::size_t>(i)] - ti));
                }
                objective = miss;
                feasible = miss <= tol;
            } else {
                double v = sheet.states[corner * n + static_cast<std::size_t>(term_idx)];
                objective = p.sense == Sense::Maximize ? -v : v;
            }

            if (feasible && objective < best) {
                best = objective;
                found = true;
                out.sheet = std::move(sheet);
                out.u1 = u1;
                out.u2 = u2;
                out.objective = target_mode
                                    ? objective
                                    : out.sheet.states[corner * n + static_cast<std::size_t>(term_idx)];
            }
        }
    }

    if (!found) {
        out.diagnostic = "no feasible vertex control";
        return out;
    }
    out.feasible = true;

    // switching record: backward (*) adjoint pass along the staircase
    {
        std::vector<double> pvec(static_cast<std::size_t>(n), 0.0);
        if (!target_mode) {
            // maximize-canonical terminal gradient of the terminal-index cost
            pvec[static_cast<std::size_t>(term_idx)] = p.sense == Sense::Minimize ? -1.0 : 1.0;
        }
        const std::size_t N1 = out.sheet.t1.size(), N2 = out.sheet.t2.size();
        auto record_Q = [&](std::size_t i, std::size_t j) {
            std::vector<double> x(static_cast<std::size_t>(n));
            for (int c = 0; c < n; ++c) x[static_cast<std::size_t>(c)] = out.sheet.state(i, j, c);
            auto Q = switching(pvec, x, sys);
            for (double q : Q) out.path_Q.push_back(q);
        };
        long singular = 0;
        // reversed second leg (t2 at t1 = tau1), then reversed first leg
        const double h2 = N2 > 1 ? out.sheet.t2[1] - out.sheet.t2[0] : 0.0;
        for (std::size_t j = N2; j-- > 0;) {
            record_Q(N1 - 1, j);
            if (j > 0) {
                std::vector<double> x(static_cast<std::size_t>(n));
                for (int c = 0; c < n; ++c) x[static_cast<std::size_t>(c)] = out.sheet.state(N1 - 1, j, c);
                auto dp = adjoint_rhs(sys, x, pvec, out.u2);
                for (int c = 0; c < n; ++c) pvec[static_cast<std::size_t>(c)] -= h2 * dp[static_cast<std::size_t>(c)];
            }
        }
        const double h1 = N1 > 1 ? out.sheet.t1[1] - out.sheet.t1[0] : 0.0;
        for (std::size_t i = N1 - 1; i-- > 0;) {
            record_Q(i, 0);
            if (i > 0) {
                std::vector<double> x(static_cast<std::size_t>(n));
                for (int c = 0; c < n; ++c) x[static_cast<std::size_t>(c)] = out.sheet.state(i, 0, c);
                auto dp = adjoint_rhs(sys, x, pvec, out.u1);
                for (int c = 0; c < n; ++c) pvec[static_cast<std::size_t>(c)] -= h1 * dp[static_cast<std::size_t>(c)];
            }
        }
        for (double q : out.path_Q)
            if (std::abs(q) <= 1e-9) ++singular;
        out.singular_fraction = out.path_Q.empty()
                                    ? 0.0
                                    : static_cast<double>(singular) / static_cast<double>(out.path_Q.size());
    }
    return out;
}

// ---------------------------------------------------------------------------
// adjoint residual evaluators

namespace {

// B[beta][k][j] = ∂u^a_beta/∂x^k X^j_a + u^a_beta ∂X^j_a/∂x^k at a node
void variational_blocks(const Sheet& s, const SpanSystem& sys, const SheetControlLaw* law,
                        std::size_t i, std::size_t j, std::vector<double>& B) {
    const int n = sys.dim();
    const int k = sys.num_generators();
    std::vector<double> x(static_cast<std::size_t>(n));
    for (int c = 0; c < n; ++c) x[static_cast<std::size_t>(c)] = s.state(i, j, c);
    std::vector<double> X(static_cast<std::size_t>(k) * n);
    std::vector<double> dX(static_cast<std::size_t>(k) * n * n);
    sys.eval_fields(x, X.data());
    sys.eval_jacobians(x, dX.data());

    std::vector<double> u_x;   // [beta][a][kk]
    const bool closed = law && !law->time_only();
    if (closed) {
        VarEnv env = sheet_env(s, *law, i, j);
        u_x.resize(static_cast<std::size_t>(2 * k * n));
        for (int beta = 0; beta < 2; ++beta)
            for (int a = 0; a < k; ++a)
                for (int kk = 0; kk < n; ++kk)
                    u_x[static_cast<std::size_t>((beta * k + a) * n + kk)] =
                        law->u[static_cast<std::size_t>(beta)][static_cast<std::size_t>(a)]
                            .diff(law->state_names[static_cast<std::size_t>(kk)])
                            .evaluate(env);
    }

    B.assign(static_cast<std::size_t>(2 * n * n), 0.0);
    for (int beta = 0; beta < 2; ++beta)
        for (int kk = 0; kk < n; ++kk)
            for (int jj = 0; jj < n; ++jj) {
                double v = 0.0;
                for (int a = 0; a < k; ++a) {
                    v += s.control(i, j, beta, a) * dX[(static_cast<std::size_t>(a) * n + jj) * n + kk];
                    if (closed)
                        v += u_x[static_cast<std::size_t>((beta * k + a) * n + kk)] *
                             X[static_cast<std::size_t>(a) * n + jj];
                }
                B[static_cast<std::size_t>((beta * n + kk) * n + jj)] = v;
            }
}

} // namespace

double multitime_adjoint_residual_matrix(const Sheet& sheet, const SpanSystem& sys,
                                         const SheetControlLaw* law) {
    if (!sheet.costates_matrix)
        throw DimensionError("matrix adjoint residual needs matrix costates p^alpha_i");
    const int n = sys.dim();
    const std::size_t N2 = sheet.t2.size();
    const auto& P = *sheet.costates_matrix;

    return par::max_over(sheet.num_nodes(), [&](std::size_t node) {
        const std::size_t i = node / N2, j = node % N2;
        std::vector<double> B;
        variational_blocks(sheet, sys, law, i, j, B);
        double worst = 0.0;
        for (int alpha = 0; alpha < 2; ++alpha)
            for (int kk = 0; kk < n; ++kk)
                for (int beta = 0; beta < 2; ++beta) {
                    double lhs = grid_diff(sheet, [&](std::size_t ii, std::size_t jj) {
                        return P[sheet.index(ii, jj) * 2 * n + static_cast<std::size_t>(alpha * n + kk)];
                    }, i, j, beta);
                    double rhs = 0.0;
                    for (int jj = 0; jj < n; ++jj)
                        rhs -= B[static_cast<std::size_t>((beta * n + kk) * n + jj)] *
                               P[node * 2 * n + static_cast<std::size_t>(alpha * n + jj)];
                    worst = std::max(worst, std::abs(lhs - rhs));
                }
        return worst;
    });
}

double multitime_adjoint_residual_trace(const Sheet& sheet, const SpanSystem& sys,
                                        const SheetControlLaw* law) {
    if (!sheet.costates_matrix)
        throw DimensionError("trace adjoint residual needs matrix costates p^alpha_i");
    const int n = sys.dim();
    const std::size_t N2 = sheet.t2.size();
    const auto& P = *sheet.costates_matrix;

    return par::max_over(sheet.num_nodes(), [&](std::size_t node) {
        const std::size_t i = node / N2, j = node % N2;
        std::vector<double> B;
        variational_blocks(sheet, sys, law, i, j, B);
        double worst = 0.0;
        for (int kk = 0; kk < n; ++kk) {
            double lhs = 0.0, rhs = 0.0;
            for (int alpha = 0; alpha < 2; ++alpha) {
                lhs += grid_diff(sheet, [&](std::size_t ii, std::size_t jj) {
                    return P[sheet.index(ii, jj) * 2 * n + static_cast<std::size_t>(alpha * n + kk)];
                }, i, j, alpha);
                for (int jj = 0; jj < n; ++jj)
                    rhs -= B[static_cast<std::size_t>((alpha * n + kk) * n + jj)] *
                           P[node * 2 * n + static_cast<std::size_t>(alpha * n + jj)];
            }
            worst = std::max(worst, std::abs(lhs - rhs));
        }
        return worst;
    });
}

double multitime_adjoint_residual_vector(const Sheet& sheet, const SpanSystem& sys,
                                         const SheetControlLaw* law) {
    if (!sheet.costates)
        throw DimensionError("vector adjoint residual needs vector costates p_i");
    const int n = sys.dim();
    const std::size_t N2 = sheet.t2.size();
    const auto& P = *sheet.costates;

    return par::max_over(sheet.num_nodes(), [&](std::size_t node) {
        const std::size_t i = node / N2, j = node % N2;
        std::vector<double> B;
        variational_blocks(sheet, sys, law, i, j, B);
        double worst = 0.0;
        for (int kk = 0; kk < n; ++kk)
            for (int beta = 0; beta < 2; ++beta) {
                double lhs = grid_diff(sheet, [&](std::size_t ii, std::size_t jj) {
                    return P[sheet.index(ii, jj) * n + static_cast<std::size_t>(kk)];
                }, i, j, beta);
                double rhs = 0.0;
                for (int jj = 0; jj < n; ++jj)
                    rhs -= B[static_cast<std::size_t>((beta * n + kk) * n + jj)] *
                           P[node * n + static_cast<std::size_t>(jj)];
                worst = std::max(worst, std::abs(lhs - rhs));
            }
        return worst;
    });
}

double multitime_boundary_residual(const Sheet& sheet) {
    if (!sheet.costates_matrix)
        throw DimensionError("boundary residual needs matrix costates p^alpha_i");
    const int n = sheet.n;
    const std::size_t N1 = sheet.t1.size(), N2 = sheet.t2.size();
    const auto& P = *sheet.costates_matrix;
    double worst = 0.0;
    // edges t1 = const: normal along t1 => |p^1_i|; edges t2 = const: |p^2_i|
    for (std::size_t j = 0; j < N2; ++j)
        for (std::size_t i : {std::size_t{0}, N1 - 1})
            for (int c = 0; c < n; ++c)
                worst = std::max(worst, std::abs(P[sheet.index(i, j) * 2 * n + static_cast<std::size_t>(c)]));
    for (std::size_t i = 0; i < N1; ++i)
        for (std::size_t j : {std::size_t{0}, N2 - 1})
            for (int c = 0; c < n; ++c)
                worst = std::max(worst, std::abs(P[sheet.index(i, j) * 2 * n + static_cast<std::size_t>(n + c)]));
    return worst;
}

} // namespace nonholo

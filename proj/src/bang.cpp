#include "nonholo/bang.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>

namespace nonholo {

std::vector<double> switching(std::span<const double> p,
                              std::span<const double> x,
                              const SpanSystem& sys) {
    const int n = sys.dim();
    const int k = sys.num_generators();
    if (static_cast<int>(p.size()) != n || static_cast<int>(x.size()) != n)
        throw DimensionError("switching: dimension mismatch");
    std::vector<double> X(static_cast<std::size_t>(k) * n);
    sys.eval_fields(x, X.data());
    std::vector<double> Q(static_cast<std::size_t>(k), 0.0);
    for (int a = 0; a < k; ++a)
        for (int i = 0; i < n; ++i)
            Q[static_cast<std::size_t>(a)] += p[static_cast<std::size_t>(i)] * X[static_cast<std::size_t>(a) * n + i];
    return Q;
}

BangControl bang_law(std::span<const double> Q, double eps_sw) {
    BangControl out;
    out.u.resize(Q.size());
    out.singular.resize(Q.size());
    for (std::size_t a = 0; a < Q.size(); ++a) {
        if (Q[a] < -eps_sw)      { out.u[a] = 1.0;  out.singular[a] = false; }
        else if (Q[a] > eps_sw)  { out.u[a] = -1.0; out.singular[a] = false; }
        else                     { out.u[a] = 0.0;  out.singular[a] = true; }
    }
    return out;
}

namespace {

SpanSystem system_of(const OCProblem& p) {
    if (p.dist.form != Distribution::Form::Span)
        throw DimensionError("bang-bang synthesis needs a span-form distribution");
    return SpanSystem(p.state_names, p.dist.generators);
}

// One RK4 step of the state/costate pair of the time-minimum Hamiltonian
// with the control held fixed over the step.
void rk4_step_pair(const SpanSystem& sys, std::span<const double> u, double h,
                   std::vector<double>& x, std::vector<double>& p) {
    const int n = sys.dim();
    auto f = [&](const std::vector<double>& xs, const std::vector<double>& ps,
                 std::vector<double>& dx, std::vector<double>& dp) {
        dx = sys.dynamics(xs, u);
        dp = adjoint_rhs(sys, xs, ps, u);
    };
    std::vector<double> k1x(n), k1p(n), k2x(n), k2p(n), k3x(n), k3p(n), k4x(n), k4p(n);
    std::vector<double> tx(n), tp(n);
    f(x, p, k1x, k1p);
    for (int i = 0; i < n; ++i) { tx[i] = x[i] + 0.5 * h * k1x[i]; tp[i] = p[i] + 0.5 * h * k1p[i]; }
    f(tx, tp, k2x, k2p);
    for (int i = 0; i < n; ++i) { tx[i] = x[i] + 0.5 * h * k2x[i]; tp[i] = p[i] + 0.5 * h * k2p[i]; }
    f(tx, tp, k3x, k3p);
    for (int i = 0; i < n; ++i) { tx[i] = x[i] + h * k3x[i]; tp[i] = p[i] + h * k3p[i]; }
    f(tx, tp, k4x, k4p);
    for (int i = 0; i < n; ++i) {
        x[i] += h / 6.0 * (k1x[i] + 2.0 * k2x[i] + 2.0 * k3x[i] + k4x[i]);
        p[i] += h / 6.0 * (k1p[i] + 2.0 * k2p[i] + 2.0 * k3p[i] + k4p[i]);
    }
}

SwitchingProfile profile_from(const Trajectory& traj, const SpanSystem& sys, double eps_sw) {
    SwitchingProfile prof;
    prof.times = traj.times;
    prof.k = sys.num_generators();
    prof.Q = traj.switching;
    const std::size_t N = traj.num_nodes();
    const int k = prof.k;
    prof.singular_fraction_each.assign(static_cast<std::size_t>(k), 0.0);
    long singular = 0;
    for (std::size_t node = 0; node < N; ++node)
        for (int a = 0; a < k; ++a)
            if (std::abs(prof.Q[node * k + static_cast<std::size_t>(a)]) <= eps_sw) {
                ++singular;
                prof.singular_fraction_each[static_cast<std::size_t>(a)] += 1.0;
            }
    for (auto& f : prof.singular_fraction_each) f /= static_cast<double>(N);
    prof.singular_fraction = N && k ? static_cast<double>(singular) / static_cast<double>(N * k) : 0.0;

    // sign changes (possibly across a short singular gap), refined by
    // bisection on the interpolated pairing
    const int n = sys.dim();
    auto Q_between = [&](std::size_t lo_node, std::size_t hi_node, int a, double s) {
        std::vector<double> xs(n), ps(n);
        for (int i = 0; i < n; ++i) {
            xs[i] = (1 - s) * traj.state(lo_node, i) + s * traj.state(hi_node, i);
            ps[i] = (1 - s) * traj.costate(lo_node, i) + s * traj.costate(hi_node, i);
        }
        return switching(ps, xs, sys)[static_cast<std::size_t>(a)];
    };
    for (int a = 0; a < k; ++a) {
        bool have_last = false;
        std::size_t last_node = 0;
        double last_q = 0.0;
        for (std::size_t node = 0; node < N; ++node) {
            double q = prof.Q[node * k + static_cast<std::size_t>(a)];
            if (std::abs(q) <= eps_sw) continue;
            if (have_last && last_q * q < 0.0) {
                double lo = 0.0, hi = 1.0;
                for (int it = 0; it < 40; ++it) {
                    double mid = 0.5 * (lo + hi);
                    if (Q_between(last_node, node, a, lo) * Q_between(last_node, node, a, mid) <= 0.0)
                        hi = mid;
                    else
                        lo = mid;
                }
                double s = 0.5 * (lo + hi);
                prof.switch_times.push_back((1 - s) * traj.times[last_node] + s * traj.times[node]);
            }
            have_last = true;
            last_node = node;
            last_q = q;
        }
    }
    std::sort(prof.switch_times.begin(), prof.switch_times.end());
    return prof;
}

// Forward bang-bang simulation; control resolved at each step start.
Trajectory simulate_bang(const SpanSystem& sys, std::span<const double> x0,
                         std::span<const double> p0, double tau, int steps, double eps_sw,
                         bool* all_singular_at_start = nullptr) {
    const int n = sys.dim();
    const int k = sys.num_generators();
    Trajectory traj;
    traj.n = n; traj.k = k; traj.np = n;
    const std::size_t nodes = static_cast<std::size_t>(steps) + 1;
    traj.times.resize(nodes);
    traj.states.resize(nodes * static_cast<std::size_t>(n));
    traj.controls.resize(nodes * static_cast<std::size_t>(k));
    traj.costates.resize(nodes * static_cast<std::size_t>(n));
    traj.switching.resize(nodes * static_cast<std::size_t>(k));
    traj.hamiltonian.resize(nodes);

    std::vector<double> x(x0.begin(), x0.end());
    std::vector<double> p(p0.begin(), p0.end());
    const double h = tau / steps;

    for (std::size_t node = 0; node < nodes; ++node) {
        auto Q = switching(p, x, sys);
        auto bc = bang_law(Q, eps_sw);
        if (node == 0 && all_singular_at_start) {
            *all_singular_at_start = true;
            for (bool s : bc.singular)
                if (!s) *all_singular_at_start = false;
        }
        traj.times[node] = node * h;
        double Hval = -1.0;
        for (int a = 0; a < k; ++a) Hval += Q[static_cast<std::size_t>(a)] * bc.u[static_cast<std::size_t>(a)];
        traj.hamiltonian[node] = Hval;
        for (int i = 0; i < n; ++i) {
            traj.states[node * n + static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(i)];
            traj.costates[node * n + static_cast<std::size_t>(i)] = p[static_cast<std::size_t>(i)];
        }
        for (int a = 0; a < k; ++a) {
            traj.controls[node * k + static_cast<std::size_t>(a)] = bc.u[static_cast<std::size_t>(a)];
            traj.switching[node * k + static_cast<std::size_t>(a)] = Q[static_cast<std::size_t>(a)];
        }
        if (node + 1 < nodes)
            rk4_step_pair(sys, bc.u, h, x, p);
    }
    return traj;
}

} // namespace

TimeOptimalResult time_optimal_shoot(const OCProblem& p, TimeOptimalOptions opts) {
    TimeOptimalResult out;
    SpanSystem sys = system_of(p);
    const int n = sys.dim();
    const int k = sys.num_generators();

    if (!p.box.is_unit_box()) {
        out.diagnostic = "time_optimal_shoot needs the unit control box [-1,1]^k";
        return out;
    }
    std::vector<double> target(p.x1 ? *p.x1 : std::vector<double>(static_cast<std::size_t>(n), 0.0));

    double dist0 = 0.0;
    for (int i = 0; i < n; ++i) dist0 += std::abs(p.x0[static_cast<std::size_t>(i)] - target[static_cast<std::size_t>(i)]);
    if (dist0 < opts.tol) {
        // already at the target
        out.tau = 0.0;
        out.converged = true;
        out.trajectory.n = n; out.trajectory.k = k; out.trajectory.np = n;
        out.trajectory.times = {0.0};
        out.trajectory.states = p.x0;
        out.trajectory.controls.assign(static_cast<std::size_t>(k), 0.0);
        out.trajectory.costates.assign(static_cast<std::size_t>(n), 0.0);
        out.profile.k = k;
        return out;
    }

    // residual of the free-time system: terminal miss plus |Q(0)|_1 = 1
    auto residual = [&](const Eigen::VectorXd& z, bool* all_singular) {
        std::vector<double> p0(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) p0[static_cast<std::size_t>(i)] = z[i];
        const double tau = z[n];
        Trajectory traj = simulate_bang(sys, p.x0, p0, tau, opts.grid, opts.eps_sw, all_singular);
        Eigen::VectorXd r(n + 1);
        const std::size_t last = traj.num_nodes() - 1;
        for (int i = 0; i < n; ++i)
            r[i] = traj.state(last, i) - target[static_cast<std::size_t>(i)];
        auto Q0 = switching(p0, p.x0, sys);
        double q1 = 0.0;
        for (double q : Q0) q1 += std::abs(q);
        r[n] = q1 - 1.0;
        return std::make_pair(r, std::move(traj));
    };

    // starting points: every sign pattern of p(0), then seeded randoms
    std::vector<Eigen::VectorXd> starts;
    const double tau0 = std::max(dist0, 0.1);
    if (n <= 10) {
        for (unsigned mask = 0; mask < (1u << n); ++mask) {
            Eigen::VectorXd z(n + 1);
            z.setZero();
            for (int i = 0; i < n; ++i)
                z[i] = ((mask >> i) & 1u) ? 1.0 / n : -1.0 / n;
            z[n] = tau0;
            starts.push_back(z);
        }
    }
    std::mt19937_64 rng(opts.seed);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    for (int s = 0; s < opts.extra_starts; ++s) {
        Eigen::VectorXd z(n + 1);
        double norm1 = 0.0;
        for (int i = 0; i < n; ++i) { z[i] = uni(rng); norm1 += std::abs(z[i]); }
        if (norm1 > 0) for (int i = 0; i < n; ++i) z[i] /= norm1;
        z[n] = tau0 * (0.5 + 0.75 * (uni(rng) + 1.0));
        starts.push_back(z);
    }

    double best_rn = std::numeric_limits<double>::infinity();
    Eigen::VectorXd best_z;
    Trajectory best_traj;

    for (const auto& start : starts) {
        Eigen::VectorXd z = start;
        bool all_singular = false;
        auto [r, traj] = residual(z, &all_singular);
        if (all_singular) continue;
        double rn = r.lpNorm<Eigen::Infinity>();

        for (int iter = 0; iter < opts.max_iter && rn >= opts.tol; ++iter) {
            Eigen::MatrixXd J(n + 1, n + 1);
            for (int col = 0; col <= n; ++col) {
                Eigen::VectorXd zp = z;
                const double fd = 1e-7 * std::max(1.0, std::abs(z[col]));
                zp[col] += fd;
                if (col == n && zp[col] <= 0) zp[col] = z[col] * 0.5;
                auto [rp, tp_] = residual(zp, nullptr);
                J.col(col) = (rp - r) / (zp[col] - z[col]);
            }
            Eigen::JacobiSVD<Eigen::MatrixXd> svd(J, Eigen::ComputeThinU | Eigen::ComputeThinV);
            svd.setThreshold(1e-10);
            Eigen::VectorXd step = svd.solve(-r);
            if (!step.allFinite()) break;

            double lambda = 1.0;
            bool improved = false;
            for (int halve = 0; halve < 30; ++halve) {
                Eigen::VectorXd cand = z + lambda * step;
                if (cand[n] > 1e-9) {
                    auto [rc, tc] = residual(cand, nullptr);
                    double rc_n = rc.lpNorm<Eigen::Infinity>();
                    if (rc_n < rn) {
                        z = cand; r = rc; rn = rc_n; traj = std::move(tc);
                        improved = true;
                        break;
                    }
                }
                lambda *= 0.5;
            }
            if (!improved) break;
        }

        // accept on terminal miss; the free-time row is kept small by the solve
        double miss = 0.0;
        const std::size_t last = traj.num_nodes() - 1;
        for (int i = 0; i < n; ++i)
            miss = std::max(miss, std::abs(traj.state(last, i) - target[static_cast<std::size_t>(i)]));
        if (miss < best_rn) {
            best_rn = miss;
            best_z = z;
            best_traj = traj;
        }
        if (miss < opts.tol) break;
    }

    if (!best_z.size()) {
        out.diagnostic = "all switching functions singular at every start (singular arc)";
        return out;
    }

    out.tau = best_z[n];
    out.trajectory = std::move(best_traj);
    out.profile = profile_from(out.trajectory, sys, opts.eps_sw);
    out.converged = best_rn < opts.tol;
    if (!out.converged) {
        out.diagnostic = "did not reach the target (best miss " + std::to_string(best_rn) + ")";
        out.trajectory.converged = false;
    }
    return out;
}

TerminalValueResult terminal_value_bang(const OCProblem& p, TimeOptimalOptions opts) {
    TerminalValueResult out;
    SpanSystem sys = system_of(p);
    const int n = sys.dim();
    const int k = sys.num_generators();
    const double t0 = p.horizon[0], t1 = p.horizon[1];
    const int steps = opts.grid;
    const double h = (t1 - t0) / steps;

    // maximize-canonical terminal gradient; minimizing x^idx gives -e_idx
    std::vector<Expr> gx(static_cast<std::size_t>(n), Expr(0.0));
    {
        Expr g(0.0);
        if (p.cost.terminal_index)
            g = Expr::variable(p.state_names[static_cast<std::size_t>(*p.cost.terminal_index - 1)]);
        else if (p.cost.terminal)
            g = *p.cost.terminal;
        else
            g = Expr::variable(p.state_names[static_cast<std::size_t>(n - 1)]);
        if (p.sense == Sense::Minimize) g = -g;
        for (int i = 0; i < n; ++i)
            gx[static_cast<std::size_t>(i)] = g.diff(p.state_names[static_cast<std::size_t>(i)]);
    }

    const std::size_t nodes = static_cast<std::size_t>(steps) + 1;
    std::vector<double> u_nodes(nodes * static_cast<std::size_t>(k), 0.0);
    for (std::size_t node = 0; node < nodes; ++node)
        for (int a = 0; a < k; ++a)
            if (p.box.pinned(a))
                u_nodes[node * k + static_cast<std::size_t>(a)] = p.box.lower[static_cast<std::size_t>(a)];

    std::vector<double> x_nodes(nodes * static_cast<std::size_t>(n));
    std::vector<double> p_nodes(nodes * static_cast<std::size_t>(n));

    auto u_at = [&](std::size_t node) {
        return std::span<const double>(u_nodes).subspan(node * k, static_cast<std::size_t>(k));
    };

    bool stable = false;
    int sweep = 0;
    for (; sweep < 50 && !stable; ++sweep) {
        // forward state with the current control pattern
        std::vector<double> x(p.x0.begin(), p.x0.end());
        for (std::size_t node = 0; node < nodes; ++node) {
            for (int i = 0; i < n; ++i) x_nodes[node * n + static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(i)];
            if (node + 1 < nodes) {
                std::vector<double> pp(static_cast<std::size_t>(n), 0.0);
                rk4_step_pair(sys, u_at(node), h, x, pp);
            }
        }
        // backward costate (and retraced state) from the terminal condition
        std::vector<double> xb(static_cast<std::size_t>(n)), pb(static_cast<std::size_t>(n));
        {
            VarEnv env;
            for (int i = 0; i < n; ++i)
                env[p.state_names[static_cast<std::size_t>(i)]] = x_nodes[(nodes - 1) * n + static_cast<std::size_t>(i)];
            for (int i = 0; i < n; ++i) {
                xb[static_cast<std::size_t>(i)] = x_nodes[(nodes - 1) * n + static_cast<std::size_t>(i)];
                pb[static_cast<std::size_t>(i)] = gx[static_cast<std::size_t>(i)].evaluate(env);
            }
        }
        for (std::size_t node = nodes; node-- > 0;) {
            for (int i = 0; i < n; ++i) p_nodes[node * n + static_cast<std::size_t>(i)] = pb[static_cast<std::size_t>(i)];
            if (node > 0)
                rk4_step_pair(sys, u_at(node - 1), -h, xb, pb);
        }
        // refresh the controls from the switching functions (argmax selection)
        stable = true;
        for (std::size_t node = 0; node < nodes; ++node) {
            auto Q = switching(std::span<const double>(p_nodes).subspan(node * n, static_cast<std::size_t>(n)),
                               std::span<const double>(x_nodes).subspan(node * n, static_cast<std::size_t>(n)), sys);
            for (int a = 0; a < k; ++a) {
                if (p.box.pinned(a)) continue;
                double q = Q[static_cast<std::size_t>(a)];
                double u = 0.0;
                if (q > opts.eps_sw) u = 1.0;
                else if (q < -opts.eps_sw) u = -1.0;
                double& slot = u_nodes[node * k + static_cast<std::size_t>(a)];
                if (slot != u) { slot = u; stable = false; }
            }
        }
    }

    Trajectory traj;
    traj.n = n; traj.k = k; traj.np = n;
    traj.times.resize(nodes);
    for (std::size_t node = 0; node < nodes; ++node) traj.times[node] = t0 + node * h;
    traj.states = x_nodes;
    traj.costates = p_nodes;
    traj.controls = u_nodes;
    traj.switching.resize(nodes * static_cast<std::size_t>(k));
    traj.hamiltonian.resize(nodes);
    for (std::size_t node = 0; node < nodes; ++node) {
        auto Q = switching(std::span<const double>(p_nodes).subspan(node * n, static_cast<std::size_t>(n)),
                           std::span<const double>(x_nodes).subspan(node * n, static_cast<std::size_t>(n)), sys);
        double Hval = 0.0;
        for (int a = 0; a < k; ++a) {
            traj.switching[node * k + static_cast<std::size_t>(a)] = Q[static_cast<std::size_t>(a)];
            Hval += Q[static_cast<std::size_t>(a)] * u_nodes[node * k + static_cast<std::size_t>(a)];
        }
        traj.hamiltonian[node] = Hval;
    }

    out.trajectory = std::move(traj);
    out.profile = profile_from(out.trajectory, sys, opts.eps_sw);
    out.converged = stable;
    if (!stable) {
        out.diagnostic = "control pattern did not settle in 50 sweeps";
        out.trajectory.converged = false;
    }
    if (p.cost.terminal && !p.cost.terminal_index) {
        VarEnv env;
        for (int i = 0; i < n; ++i)
            env[p.state_names[static_cast<std::size_t>(i)]] = out.trajectory.state(nodes - 1, i);
        out.value = p.cost.terminal->evaluate(env);
    } else {
        int idx = p.cost.terminal_index ? *p.cost.terminal_index - 1 : n - 1;
        out.value = out.trajectory.state(nodes - 1, idx);
    }
    for (int a = 0; a < k; ++a)
        if (!p.box.pinned(a) && out.profile.singular_fraction_each[static_cast<std::size_t>(a)] > 0.99)
            out.diagnostic = "zero switching function for control " + std::to_string(a + 1) +
                             " (target component decoupled)";
    return out;
}

} // namespace nonholo

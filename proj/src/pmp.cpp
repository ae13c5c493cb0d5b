#include "nonholo/pmp.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <set>

#include "nonholo/parallel.hpp"

namespace nonholo {

namespace {

std::string fresh(const std::string& base, std::set<std::string>& taken) {
    std::string cand = base;
    while (taken.count(cand)) cand = "_" + cand;
    taken.insert(cand);
    return cand;
}

} // namespace

HamiltonianData build_hamiltonian(const NormalForm& nf) {
    HamiltonianData H;
    H.nf = nf;
    H.n = static_cast<int>(nf.state_names.size());
    H.k = static_cast<int>(nf.control_names.size());

    std::set<std::string> taken(nf.state_names.begin(), nf.state_names.end());
    taken.insert(nf.control_names.begin(), nf.control_names.end());
    taken.insert(nf.time_name);
    for (int i = 0; i < H.n; ++i)
        H.costate_names.push_back(fresh("p" + std::to_string(i + 1), taken));

    H.slots.push_back(nf.time_name);
    H.slots.insert(H.slots.end(), nf.state_names.begin(), nf.state_names.end());
    H.slots.insert(H.slots.end(), nf.control_names.begin(), nf.control_names.end());
    H.slots.insert(H.slots.end(), H.costate_names.begin(), H.costate_names.end());

    H.H = nf.lagrangian;
    for (int i = 0; i < H.n; ++i)
        H.H = H.H + Expr::variable(H.costate_names[static_cast<std::size_t>(i)]) * nf.dynamics[static_cast<std::size_t>(i)];

    for (int i = 0; i < H.n; ++i) H.Hx.push_back(H.H.diff(nf.state_names[static_cast<std::size_t>(i)]));
    for (int a = 0; a < H.k; ++a) H.Hu.push_back(H.H.diff(nf.control_names[static_cast<std::size_t>(a)]));
    for (int i = 0; i < H.n; ++i) H.Hp.push_back(H.H.diff(H.costate_names[static_cast<std::size_t>(i)]));
    for (int a = 0; a < H.k; ++a) {
        std::vector<Expr> row;
        for (int b = 0; b < H.k; ++b)
            row.push_back(H.Hu[static_cast<std::size_t>(a)].diff(nf.control_names[static_cast<std::size_t>(b)]));
        H.Huu.push_back(std::move(row));
    }

    H.cH = CompiledExpr(H.H, H.slots);
    for (auto& e : H.Hx) H.cHx.emplace_back(e, H.slots);
    for (auto& e : H.Hu) H.cHu.emplace_back(e, H.slots);
    for (auto& e : H.Hp) H.cHp.emplace_back(e, H.slots);
    for (auto& row : H.Huu)
        for (auto& e : row) H.cHuu.emplace_back(e, H.slots);
    return H;
}

HamiltonianData build_hamiltonian(const OCProblem& p) {
    if (p.time_dim != 1)
        throw DimensionError("build_hamiltonian: multitime problem passed (m > 1)");
    return build_hamiltonian(canonicalize(p));
}

namespace {

struct LawResolver {
    const HamiltonianData& H;
    const ControlLaw& law;
    std::vector<int> stationary_idx;
    std::vector<double> warm;
    long clip_events = 0;

    LawResolver(const HamiltonianData& H, const ControlLaw& law) : H(H), law(law) {
        for (int a = 0; a < H.k; ++a) {
            if (H.nf.box.pinned(a)) continue;
            if (law.explicit_components.count(a)) continue;
            if (law.default_kind == ControlLaw::Kind::Stationary)
                stationary_idx.push_back(a);
            else if (law.default_kind == ControlLaw::Kind::Explicit)
                throw DimensionError("control law: no explicit expression for control '" +
                                     H.nf.control_names[static_cast<std::size_t>(a)] + "'");
        }
        warm.assign(static_cast<std::size_t>(H.k), 0.0);
    }

    // Resolve u into slots[u range]; slots holds (t, x, ., p) already.
    void resolve(std::vector<double>& slots) {
        VarEnv env;   // for explicit components: t and states
        bool env_built = false;
        auto build_env = [&]() {
            if (env_built) return;
            env[H.nf.time_name] = slots[H.slot_t()];
            for (int i = 0; i < H.n; ++i)
                env[H.nf.state_names[static_cast<std::size_t>(i)]] = slots[H.slot_x(i)];
            env_built = true;
        };

        for (int a = 0; a < H.k; ++a) {
            if (H.nf.box.pinned(a)) {
                slots[H.slot_u(a)] = H.nf.box.lower[static_cast<std::size_t>(a)];
                continue;
            }
            auto it = law.explicit_components.find(a);
            if (it != law.explicit_components.end()) {
                build_env();
                slots[H.slot_u(a)] = it->second.evaluate(env);
                continue;
            }
            slots[H.slot_u(a)] = warm[static_cast<std::size_t>(a)];
        }

        if (!stationary_idx.empty())
            solve_stationary(slots);

        if (law.default_kind == ControlLaw::Kind::Bang) {
            for (int a = 0; a < H.k; ++a) {
                if (H.nf.box.pinned(a) || law.explicit_components.count(a)) continue;
                double Q = H.cHu[static_cast<std::size_t>(a)](slots);
                double u = 0.0;
                if (Q < -law.eps_sw) u = 1.0;
                else if (Q > law.eps_sw) u = -1.0;
                slots[H.slot_u(a)] = u;
            }
        }

        // clip to the box
        for (int a = 0; a < H.k; ++a) {
            double lo = H.nf.box.lower[static_cast<std::size_t>(a)];
            double hi = H.nf.box.upper[static_cast<std::size_t>(a)];
            double& u = slots[H.slot_u(a)];
            if (u < lo) { u = lo; ++clip_events; }
            if (u > hi) { u = hi; ++clip_events; }
            warm[static_cast<std::size_t>(a)] = u;
        }
    }

    // Damped Newton on H_u = 0 over the stationary components.
    void solve_stationary(std::vector<double>& slots) {
        const int q = static_cast<int>(stationary_idx.size());
        Eigen::VectorXd r(q);
        Eigen::MatrixXd J(q, q);
        auto residual = [&](Eigen::VectorXd& out) {
            for (int s = 0; s < q; ++s)
                out[s] = H.cHu[static_cast<std::size_t>(stationary_idx[static_cast<std::size_t>(s)])](slots);
            return out.lpNorm<Eigen::Infinity>();
        };
        double rn = residual(r);
        for (int iter = 0; iter < law.newton_max_iter && rn > law.newton_tol; ++iter) {
            for (int s = 0; s < q; ++s)
                for (int t = 0; t < q; ++t)
                    J(s, t) = H.cHuu[static_cast<std::size_t>(
                        stationary_idx[static_cast<std::size_t>(s)] * H.k +
                        stationary_idx[static_cast<std::size_t>(t)])](slots);
            Eigen::VectorXd step = J.partialPivLu().solve(-r);
            if (!step.allFinite())
                throw StationarityError("stationarity solve: singular H_uu", rn);
            double lambda = 1.0;
            std::vector<double> saved(static_cast<std::size_t>(q));
            for (int s = 0; s < q; ++s)
                saved[static_cast<std::size_t>(s)] = slots[H.slot_u(stationary_idx[static_cast<std::size_t>(s)])];
            for (int halve = 0; halve < 25; ++halve) {
                for (int s = 0; s < q; ++s)
                    slots[H.slot_u(stationary_idx[static_cast<std::size_t>(s)])] =
                        saved[static_cast<std::size_t>(s)] + lambda * step[s];
                Eigen::VectorXd rnew(q);
                double rn_new = residual(rnew);
                if (rn_new <= (1.0 - 1e-4 * lambda) * rn || rn_new <= law.newton_tol) {
                    r = rnew;
                    rn = rn_new;
                    break;
                }
                lambda *= 0.5;
                if (halve == 24) { r = rnew; rn = rn_new; }
            }
        }
        if (!(rn <= law.newton_tol) && rn > 1e-9)
            throw StationarityError(
                "stationarity solve failed to converge (Newton residual " +
                std::to_string(rn) + ")", rn);
    }
};

} // namespace

Trajectory integrate_extremal(const HamiltonianData& H,
                              std::span<const double> x0,
                              std::span<const double> p0,
                              const ControlLaw& law,
                              int steps, double t0, double t1) {
    const int n = H.n;
    const int k = H.k;
    if (static_cast<int>(x0.size()) != n || static_cast<int>(p0.size()) != n)
        throw DimensionError("integrate_extremal: boundary data dimension mismatch");

    LawResolver resolver(H, law);
    std::vector<double> slots(H.slots.size(), 0.0);

    auto rhs = [&](double t, const std::vector<double>& z, std::vector<double>& dz) {
        slots[H.slot_t()] = t;
        for (int i = 0; i < n; ++i) slots[H.slot_x(i)] = z[static_cast<std::size_t>(i)];
        for (int i = 0; i < n; ++i) slots[H.slot_p(i)] = z[static_cast<std::size_t>(n + i)];
        resolver.resolve(slots);
        for (int i = 0; i < n; ++i) dz[static_cast<std::size_t>(i)] = H.cHp[static_cast<std::size_t>(i)](slots);
        for (int i = 0; i < n; ++i) dz[static_cast<std::size_t>(n + i)] = -H.cHx[static_cast<std::size_t>(i)](slots);
    };

    Trajectory traj;
    traj.n = n;
    traj.k = k;
    traj.np = n;
    const std::size_t nodes = static_cast<std::size_t>(steps) + 1;
    traj.times.resize(nodes);
    traj.states.resize(nodes * static_cast<std::size_t>(n));
    traj.controls.resize(nodes * static_cast<std::size_t>(k));
    traj.costates.resize(nodes * static_cast<std::size_t>(n));
    traj.hamiltonian.resize(nodes);
    traj.switching.resize(nodes * static_cast<std::size_t>(k));

    std::vector<double> z(static_cast<std::size_t>(2 * n));
    for (int i = 0; i < n; ++i) z[static_cast<std::size_t>(i)] = x0[static_cast<std::size_t>(i)];
    for (int i = 0; i < n; ++i) z[static_cast<std::size_t>(n + i)] = p0[static_cast<std::size_t>(i)];

    const double h = (t1 - t0) / steps;
    std::vector<double> k1(z.size()), k2(z.size()), k3(z.size()), k4(z.size()), tmp(z.size());

    auto record = [&](std::size_t node, double t) {
        traj.times[node] = t;
        slots[H.slot_t()] = t;
        for (int i = 0; i < n; ++i) slots[H.slot_x(i)] = z[static_cast<std::size_t>(i)];
        for (int i = 0; i < n; ++i) slots[H.slot_p(i)] = z[static_cast<std::size_t>(n + i)];
        resolver.resolve(slots);
        for (int i = 0; i < n; ++i) traj.states[node * n + static_cast<std::size_t>(i)] = z[static_cast<std::size_t>(i)];
        for (int i = 0; i < n; ++i) traj.costates[node * n + static_cast<std::size_t>(i)] = z[static_cast<std::size_t>(n + i)];
        for (int a = 0; a < k; ++a) traj.controls[node * k + static_cast<std::size_t>(a)] = slots[H.slot_u(a)];
        traj.hamiltonian[node] = H.cH(slots);
        for (int a = 0; a < k; ++a)
            traj.switching[node * k + static_cast<std::size_t>(a)] = H.cHu[static_cast<std::size_t>(a)](slots);
    };

    record(0, t0);
    for (int s = 0; s < steps; ++s) {
        const double t = t0 + s * h;
        rhs(t, z, k1);
        for (std::size_t i = 0; i < z.size(); ++i) tmp[i] = z[i] + 0.5 * h * k1[i];
        rhs(t + 0.5 * h, tmp, k2);
        for (std::size_t i = 0; i < z.size(); ++i) tmp[i] = z[i] + 0.5 * h * k2[i];
        rhs(t + 0.5 * h, tmp, k3);
        for (std::size_t i = 0; i < z.size(); ++i) tmp[i] = z[i] + h * k3[i];
        rhs(t + h, tmp, k4);
        for (std::size_t i = 0; i < z.size(); ++i)
            z[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        record(static_cast<std::size_t>(s) + 1, t0 + (s + 1) * h);
    }

    if (resolver.clip_events > 0)
        traj.diagnostics.push_back("control left the box " +
                                   std::to_string(resolver.clip_events) + " times (clipped)");
    return traj;
}

// ---------------------------------------------------------------------------
// check_extremal

namespace {

// 4th-order five-point derivative on a uniform grid.
double fd4(const std::vector<double>& f, std::size_t kk, double h) {
    const std::size_t N = f.size();
    if (kk >= 2 && kk + 2 < N)
        return (f[kk - 2] - 8.0 * f[kk - 1] + 8.0 * f[kk + 1] - f[kk + 2]) / (12.0 * h);
    if (kk == 0)
        return (-25.0 * f[0] + 48.0 * f[1] - 36.0 * f[2] + 16.0 * f[3] - 3.0 * f[4]) / (12.0 * h);
    if (kk == 1)
        return (-3.0 * f[0] - 10.0 * f[1] + 18.0 * f[2] - 6.0 * f[3] + f[4]) / (12.0 * h);
    if (kk == N - 2)
        return -(-3.0 * f[N - 1] - 10.0 * f[N - 2] + 18.0 * f[N - 3] - 6.0 * f[N - 4] + f[N - 5]) / (12.0 * h);
    // kk == N - 1
    return -(-25.0 * f[N - 1] + 48.0 * f[N - 2] - 36.0 * f[N - 3] + 16.0 * f[N - 4] - 3.0 * f[N - 5]) / (12.0 * h);
}

double uniform_step(const std::vector<double>& t) {
    const double h = t[1] - t[0];
    for (std::size_t i = 1; i + 1 < t.size(); ++i)
        if (std::abs((t[i + 1] - t[i]) - h) > 1e-9 * std::max(1.0, std::abs(h)))
            throw DimensionError("check_extremal: candidate grid is not uniform");
    return h;
}

double boundary_residual(const OCProblem& p, const Trajectory& c) {
    double r = 0.0;
    const std::size_t last = c.num_nodes() - 1;
    for (int i = 0; i < c.n; ++i) {
        if (std::isfinite(p.x0[static_cast<std::size_t>(i)]))
            r = std::max(r, std::abs(c.state(0, i) - p.x0[static_cast<std::size_t>(i)]));
        if (p.x1 && std::isfinite((*p.x1)[static_cast<std::size_t>(i)]))
            r = std::max(r, std::abs(c.state(last, i) - (*p.x1)[static_cast<std::size_t>(i)]));
    }
    return r;
}

// Pfaff-form conditions (Eqs. 8-10) with the scalar costate.
ResidualReport check_pfaff_form(const OCProblem& p, const Trajectory& c) {
    const PfaffForm& a = *p.dist.pfaff;
    const int n = c.n;
    const int k = c.k;
    const std::size_t N = c.num_nodes();
    const double h = uniform_step(c.times);

    Expr L = p.cost.integrands.empty() ? Expr(0.0) : p.cost.integrands[0];
    if (p.sense == Sense::Minimize) L = -L;

    std::vector<std::string> names;
    names.push_back(p.time_names.empty() ? "t" : p.time_names[0]);
    names.insert(names.end(), p.state_names.begin(), p.state_names.end());
    names.insert(names.end(), p.control_names.begin(), p.control_names.end());

    auto compile = [&](const Expr& e) { return CompiledExpr(e, names); };
    std::vector<CompiledExpr> ca, ca_x, ca_u, cL_x, cL_u;
    for (int i = 0; i < n; ++i) ca.push_back(compile(a.coeffs[static_cast<std::size_t>(i)]));
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i)
            ca_x.push_back(compile(a.coeffs[static_cast<std::size_t>(i)].diff(p.state_names[static_cast<std::size_t>(j)])));
    for (int b = 0; b < k; ++b)
        for (int i = 0; i < n; ++i)
            ca_u.push_back(compile(a.coeffs[static_cast<std::size_t>(i)].diff(p.control_names[static_cast<std::size_t>(b)])));
    for (int j = 0; j < n; ++j) cL_x.push_back(compile(L.diff(p.state_names[static_cast<std::size_t>(j)])));
    for (int b = 0; b < k; ++b) cL_u.push_back(compile(L.diff(p.control_names[static_cast<std::size_t>(b)])));

    // node-wise slot vectors and state derivatives
    std::vector<std::vector<double>> slot(N);
    std::vector<std::vector<double>> xdot(static_cast<std::size_t>(n), std::vector<double>(N));
    {
        std::vector<double> col(N);
        for (int i = 0; i < n; ++i) {
            for (std::size_t kk = 0; kk < N; ++kk) col[kk] = c.state(kk, i);
            for (std::size_t kk = 0; kk < N; ++kk) xdot[static_cast<std::size_t>(i)][kk] = fd4(col, kk, h);
        }
    }
    for (std::size_t kk = 0; kk < N; ++kk) {
        auto& s = slot[kk];
        s.resize(names.size());
        s[0] = c.times[kk];
        for (int i = 0; i < n; ++i) s[1 + static_cast<std::size_t>(i)] = c.state(kk, i);
        for (int b = 0; b < k; ++b) s[1 + static_cast<std::size_t>(n + b)] = c.control(kk, b);
    }

    // w_j = p a_j sampled, then differentiated
    std::vector<std::vector<double>> w(static_cast<std::size_t>(n), std::vector<double>(N));
    for (std::size_t kk = 0; kk < N; ++kk)
        for (int j = 0; j < n; ++j)
            w[static_cast<std::size_t>(j)][kk] = c.costate(kk, 0) * ca[static_cast<std::size_t>(j)](slot[kk]);

    ResidualReport rep;
    rep.entries["constraint_eq8"] = par::max_over(N, [&](std::size_t kk) {
        double r = 0.0;
        for (int i = 0; i < n; ++i)
            r += ca[static_cast<std::size_t>(i)](slot[kk]) * xdot[static_cast<std::size_t>(i)][kk];
        return std::abs(r);
    });
    rep.entries["adjoint_eq9"] = par::max_over(N, [&](std::size_t kk) {
        double worst = 0.0;
        for (int j = 0; j < n; ++j) {
            double lhs = fd4(w[static_cast<std::size_t>(j)], kk, h);
            double rhs = cL_x[static_cast<std::size_t>(j)](slot[kk]);
            for (int i = 0; i < n; ++i)
                rhs += c.costate(kk, 0) *
                       ca_x[static_cast<std::size_t>(j * n + i)](slot[kk]) *
                       xdot[static_cast<std::size_t>(i)][kk];
            worst = std::max(worst, std::abs(lhs - rhs));
        }
        return worst;
    });
    rep.entries["stationarity_eq10"] = par::max_over(N, [&](std::size_t kk) {
        double worst = 0.0;
        for (int b = 0; b < k; ++b) {
            double r = cL_u[static_cast<std::size_t>(b)](slot[kk]);
            for (int i = 0; i < n; ++i)
                r += c.costate(kk, 0) *
                     ca_u[static_cast<std::size_t>(b * n + i)](slot[kk]) *
                     xdot[static_cast<std::size_t>(i)][kk];
            worst = std::max(worst, std::abs(r));
        }
        return worst;
    });
    rep.entries["boundary"] = boundary_residual(p, c);
    return rep;
}

// Normal-form conditions (Eqs. 24-26) with the full costate vector.
ResidualReport check_normal_form(const OCProblem& p, const Trajectory& c) {
    HamiltonianData H = build_hamiltonian(p);
    const int n = H.n;
    const int k = H.k;
    if (c.k != k)
        throw DimensionError("check_extremal: candidate has " + std::to_string(c.k) +
                             " control columns, normal form needs " + std::to_string(k));
    const std::size_t N = c.num_nodes();
    const double h = uniform_step(c.times);

    std::vector<std::vector<double>> slot(N);
    for (std::size_t kk = 0; kk < N; ++kk) {
        auto& s = slot[kk];
        s.resize(H.slots.size());
        s[H.slot_t()] = c.times[kk];
        for (int i = 0; i < n; ++i) s[H.slot_x(i)] = c.state(kk, i);
        for (int a = 0; a < k; ++a) s[H.slot_u(a)] = c.control(kk, a);
        for (int i = 0; i < n; ++i) s[H.slot_p(i)] = c.costate(kk, i);
    }

    std::vector<std::vector<double>> xdot(static_cast<std::size_t>(n), std::vector<double>(N));
    std::vector<std::vector<double>> pdot(static_cast<std::size_t>(n), std::vector<double>(N));
    {
        std::vector<double> col(N);
        for (int i = 0; i < n; ++i) {
            for (std::size_t kk = 0; kk < N; ++kk) col[kk] = c.state(kk, i);
            for (std::size_t kk = 0; kk < N; ++kk) xdot[static_cast<std::size_t>(i)][kk] = fd4(col, kk, h);
            for (std::size_t kk = 0; kk < N; ++kk) col[kk] = c.costate(kk, i);
            for (std::size_t kk = 0; kk < N; ++kk) pdot[static_cast<std::size_t>(i)][kk] = fd4(col, kk, h);
        }
    }

    ResidualReport rep;
    rep.entries["dynamics_eq24"] = par::max_over(N, [&](std::size_t kk) {
        double worst = 0.0;
        for (int i = 0; i < n; ++i)
            worst = std::max(worst, std::abs(xdot[static_cast<std::size_t>(i)][kk] -
                                             H.cHp[static_cast<std::size_t>(i)](slot[kk])));
        return worst;
    });
    rep.entries["adjoint_eq25"] = par::max_over(N, [&](std::size_t kk) {
        double worst = 0.0;
        for (int i = 0; i < n; ++i)
            worst = std::max(worst, std::abs(pdot[static_cast<std::size_t>(i)][kk] +
                                             H.cHx[static_cast<std::size_t>(i)](slot[kk])));
        return worst;
    });
    rep.entries["stationarity_eq26"] = par::max_over(N, [&](std::size_t kk) {
        double worst = 0.0;
        for (int a = 0; a < k; ++a) {
            if (H.nf.box.pinned(a)) continue;
            worst = std::max(worst, std::abs(H.cHu[static_cast<std::size_t>(a)](slot[kk])));
        }
        return worst;
    });
    if (H.nf.pfaff) {
        const PfaffForm& a = *H.nf.pfaff;
        std::vector<std::string> names;
        names.push_back(H.nf.time_name);
        names.insert(names.end(), p.state_names.begin(), p.state_names.end());
        names.insert(names.end(), H.nf.control_names.begin(), H.nf.control_names.end());
        std::vector<CompiledExpr> ca;
        for (int i = 0; i < n; ++i) ca.emplace_back(a.coeffs[static_cast<std::size_t>(i)], names);
        rep.entries["constraint_pfaff"] = par::max_over(N, [&](std::size_t kk) {
            double r = 0.0;
            for (int i = 0; i < n; ++i)
                r += ca[static_cast<std::size_t>(i)](slot[kk]) * xdot[static_cast<std::size_t>(i)][kk];
            return std::abs(r);
        });
    }
    rep.entries["boundary"] = boundary_residual(p, c);
    return rep;
}

} // namespace

ResidualReport check_extremal(const OCProblem& p, const Trajectory& candidate) {
    if (candidate.n != p.state_dim)
        throw DimensionError("check_extremal: state dimension mismatch");
    if (candidate.num_nodes() < 5)
        throw DimensionError("check_extremal: need at least 5 grid nodes");
    if (p.dist.form == Distribution::Form::Kernel && candidate.np == 1)
        return check_pfaff_form(p, candidate);
    if (candidate.np != p.state_dim)
        throw DimensionError("check_extremal: costate column count mismatch");
    return check_normal_form(p, candidate);
}

// ---------------------------------------------------------------------------
// shoot

ShootResult shoot(const OCProblem& p, ShootOptions opts) {
    ShootResult out;
    HamiltonianData H = build_hamiltonian(p);
    const int n = H.n;
    const double t0 = p.horizon[0], t1 = p.horizon[1];
    const int steps = std::max(5, static_cast<int>(std::lround(opts.grid * (t1 - t0))));

    // unknown layout and residual definition
    std::vector<int> free_x0;           // ZeroCostate: unknown initial states
    std::vector<int> target_idx;        // components of x1 to hit
    if (p.x1)
        for (int i = 0; i < n; ++i)
            if (std::isfinite((*p.x1)[static_cast<std::size_t>(i)])) target_idx.push_back(i);

    const bool zero_costate = p.boundary_kind == BoundaryKind::ZeroCostate;
    if (zero_costate) {
        for (int i = 0; i < n; ++i)
            if (std::isnan(p.x0[static_cast<std::size_t>(i)])) free_x0.push_back(i);
        if (free_x0.size() != target_idx.size()) {
            out.diagnostics.push_back("zero-costate shooting needs as many free x0 components as targets");
            return out;
        }
    } else if (target_idx.empty() && !H.nf.terminal) {
        out.diagnostics.push_back("shoot needs a target state or a terminal cost");
        return out;
    }

    const int q = zero_costate ? static_cast<int>(free_x0.size()) : n;

    std::vector<Expr> gx;   // transversality gradient
    if (H.nf.terminal)
        for (int i = 0; i < n; ++i)
            gx.push_back(H.nf.terminal->diff(p.state_names[static_cast<std::size_t>(i)]));

    Trajectory last_traj;
    auto forward = [&](const Eigen::VectorXd& unknowns, int grid_steps) {
        std::vector<double> x0(p.x0.begin(), p.x0.end());
        std::vector<double> p0(static_cast<std::size_t>(n), 0.0);
        if (zero_costate) {
            for (int s = 0; s < q; ++s)
                x0[static_cast<std::size_t>(free_x0[static_cast<std::size_t>(s)])] = unknowns[s];
        } else {
            for (int i = 0; i < n; ++i) p0[static_cast<std::size_t>(i)] = unknowns[i];
        }
        return integrate_extremal(H, x0, p0, opts.law, grid_steps, t0, t1);
    };

    auto residual = [&](const Eigen::VectorXd& unknowns, int grid_steps) {
        Trajectory traj = forward(unknowns, grid_steps);
        const std::size_t last = traj.num_nodes() - 1;
        Eigen::VectorXd r(q);
        if (zero_costate) {
            for (std::size_t s = 0; s < target_idx.size(); ++s)
                r[static_cast<Eigen::Index>(s)] =
                    traj.state(last, target_idx[s]) - (*p.x1)[static_cast<std::size_t>(target_idx[s])];
        } else {
            VarEnv env;
            for (int i = 0; i < n; ++i)
                env[p.state_names[static_cast<std::size_t>(i)]] = traj.state(last, i);
            int row = 0;
            for (int i = 0; i < n; ++i) {
                bool targeted = p.x1 && std::isfinite((*p.x1)[static_cast<std::size_t>(i)]);
                if (targeted)
                    r[row++] = traj.state(last, i) - (*p.x1)[static_cast<std::size_t>(i)];
                else {
                    double gv = gx.empty() ? 0.0 : gx[static_cast<std::size_t>(i)].evaluate(env);
                    r[row++] = traj.costate(last, i) - gv;
                }
            }
        }
        last_traj = std::move(traj);
        return r;
    };

    // Newton on the shooting residual, finite-difference Jacobian.
    Eigen::VectorXd u0 = Eigen::VectorXd::Zero(q);
    if (!opts.p0_guess.empty() && static_cast<int>(opts.p0_guess.size()) == q)
        for (int i = 0; i < q; ++i) u0[i] = opts.p0_guess[static_cast<std::size_t>(i)];

    Eigen::VectorXd r;
    double rn = std::numeric_limits<double>::infinity();
    try {
        r = residual(u0, steps);
        rn = r.lpNorm<Eigen::Infinity>();
    } catch (const ExprError& e) {
        out.diagnostics.push_back(std::string("initial forward integration failed: ") + e.what());
        return out;
    }

    for (int iter = 0; iter < opts.max_iter; ++iter) {
        if (rn < opts.tol) { out.converged = true; break; }

        Eigen::MatrixXd J(q, q);
        bool fd_ok = true;
        for (int col = 0; col < q; ++col) {
            Eigen::VectorXd up = u0;
            up[col] += opts.fd_step;
            try {
                Eigen::VectorXd rp = residual(up, steps);
                J.col(col) = (rp - r) / opts.fd_step;
            } catch (const ExprError&) {
                fd_ok = false;
                break;
            }
        }
        if (!fd_ok) {
            out.diagnostics.push_back("finite-difference Jacobian evaluation failed");
            break;
        }

        Eigen::JacobiSVD<Eigen::MatrixXd> svd(J, Eigen::ComputeThinU | Eigen::ComputeThinV);
        const double smax = svd.singularValues()(0);
        const double smin = svd.singularValues()(q - 1);
        out.jacobian_condition = smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity();
        if (!(smin > 1e-14 * std::max(1.0, smax)))
            out.diagnostics.push_back("singular shooting Jacobian (condition estimate " +
                                      std::to_string(out.jacobian_condition) + ")");
        Eigen::VectorXd step = svd.solve(-r);

        double lambda = 1.0;
        bool improved = false;
        for (int halve = 0; halve < 25; ++halve) {
            Eigen::VectorXd cand = u0 + lambda * step;
            try {
                Eigen::VectorXd rc = residual(cand, steps);
                double rc_n = rc.lpNorm<Eigen::Infinity>();
                if (rc_n < rn || rc_n < opts.tol) {
                    u0 = cand;
                    r = rc;
                    rn = rc_n;
                    improved = true;
                    break;
                }
            } catch (const ExprError&) {
                // fall through to smaller step
            }
            lambda *= 0.5;
        }
        out.iterations = iter + 1;
        if (!improved) {
            out.diagnostics.push_back("line search stalled at residual " + std::to_string(rn));
            break;
        }
    }
    if (rn < opts.tol) out.converged = true;

    // make the reported trajectory match the accepted unknowns
    r = residual(u0, steps);
    rn = r.lpNorm<Eigen::Infinity>();

    out.boundary_residual = rn;
    out.trajectory = std::move(last_traj);
    out.trajectory.converged = out.converged;
    if (!out.converged)
        out.trajectory.diagnostics.push_back("shooting did not converge (residual " +
                                             std::to_string(rn) + ")");
    out.report = check_extremal(p, out.trajectory);
    return out;
}

} // namespace nonholo

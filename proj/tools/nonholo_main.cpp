#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <random>
#include <sstream>

#include "nonholo/bang.hpp"
#include "nonholo/emit.hpp"
#include "nonholo/multitime.hpp"
#include "nonholo/pmp.hpp"
#include "nonholo/problem_file.hpp"
#include "nonholo/riemann.hpp"

namespace fs = std::filesystem;
using namespace nonholo;

namespace {

struct Flags {
    int grid = 0;                 // 0: keep the file's value
    double tol = 0.0;             // 0: keep
    long long seed = -1;          // -1: file / env
    std::string out_dir = ".";
    int jobs = 1;
    std::string candidate;
    bool frobenius = false;
    bool cic = false;
};

struct RunOutput {
    int exit_code = 0;            // 0 ok, 2 noconv, 3 invalid
    std::string text;             // printed to stdout as one block
};

const char* status_of(int code) {
    switch (code) {
        case 0: return "ok";
        case 2: return "noconv";
        default: return "invalid";
    }
}

void apply_flags(OCProblem& p, const Flags& f) {
    if (f.grid > 0) p.solver.grid = f.grid;
    if (f.tol > 0) p.solver.tol = f.tol;
    if (f.seed >= 0) p.solver.seed = static_cast<unsigned>(f.seed);
    else if (const char* env = std::getenv("NONHOLO_SEED"))
        p.solver.seed = static_cast<unsigned>(std::strtoul(env, nullptr, 10));
}

std::string out_path(const Flags& f, const std::string& name, const std::string& suffix) {
    return (fs::path(f.out_dir) / (name + suffix)).string();
}

ControlLaw law_from_problem(const OCProblem& p, const NormalForm& nf) {
    ControlLaw law;
    auto it = p.solver.extras.find("law");
    if (it != p.solver.extras.end() && it->second == "bang")
        law.default_kind = ControlLaw::Kind::Bang;
    std::vector<std::string> vars = {nf.time_name};
    vars.insert(vars.end(), nf.state_names.begin(), nf.state_names.end());
    for (std::size_t a = 0; a < nf.control_names.size(); ++a) {
        auto jt = p.solver.extras.find("explicit_" + nf.control_names[a]);
        if (jt != p.solver.extras.end())
            law.explicit_components[static_cast<int>(a)] = parse_expr(jt->second, vars);
    }
    // closed-loop problems pin the declared controls to their feedback laws
    if (p.loop == LoopMode::Closed)
        for (std::size_t i = 0; i < p.feedback.size(); ++i)
            law.explicit_components[nf.num_aux + static_cast<int>(i)] = p.feedback[i];
    return law;
}

RunOutput run_torsion(const OCProblem& p, const Flags& f) {
    RunOutput out;
    std::ostringstream os;
    double c1 = 0, c2 = 0;
    try {
        c1 = std::stod(p.solver.extras.at("c1"));
        c2 = std::stod(p.solver.extras.at("c2"));
    } catch (const std::exception&) {
        os << "torsion method needs numeric c1, c2 under [solver]\n";
        out.exit_code = 3;
        out.text = os.str();
        return out;
    }
    std::vector<double> endpoint = {1.0, 1.0};
    if (p.x1 && p.x1->size() >= 2) endpoint = {(*p.x1)[0], (*p.x1)[1]};

    TorsionResult tr = torsion_solve(c1, c2, endpoint);
    std::map<std::string, std::string, std::less<>> extra;
    extra["branch"] = tr.integrable ? "integrable" : "nonholonomic-curve";
    extra["discriminant"] = format_g17(tr.discriminant);
    extra["p"] = tr.p.str();
    extra["u"] = tr.u.str();
    extra["v"] = tr.v.str();

    ResidualReport rep;
    if (tr.integrable) {
        // reconstruct the surface by sheet integration and compare
        std::vector<std::string> states = {"x", "y", "z"};
        Expr x = Expr::variable("x"), y = Expr::variable("y");
        VectorField X1{states, {Expr(1.0), Expr(0.0), y + tr.u}};
        VectorField X2{states, {Expr(0.0), Expr(1.0), -x + tr.v}};
        SpanSystem sys(states, {X1, X2});
        SheetControlLaw law;
        law.time_names = {"t1", "t2"};
        law.state_names = states;
        law.u = {{Expr(1.0), Expr(0.0)}, {Expr(0.0), Expr(1.0)}};

        const int N = 50;
        const double X_corner = p.horizon.size() > 0 ? p.horizon[0] : 1.0;
        const double Y_corner = p.horizon.size() > 1 ? p.horizon[1] : 1.0;
        std::vector<double> g1(N), g2(N);
        for (int s = 0; s < N; ++s) {
            g1[static_cast<std::size_t>(s)] = X_corner * s / (N - 1);
            g2[static_cast<std::size_t>(s)] = Y_corner * s / (N - 1);
        }
        std::vector<double> x0 = {0.0, 0.0, 0.0};
        Sheet sheet = integrate_sheet(sys, law, x0, g1, g2, SheetOrder::T1ThenT2, p.solver.substeps);
        CompiledExpr surf(*tr.surface, std::vector<std::string>{"x", "y"});
        double sup = 0.0;
        for (std::size_t i = 0; i < sheet.t1.size(); ++i)
            for (std::size_t j = 0; j < sheet.t2.size(); ++j) {
                double xy[2] = {sheet.t1[i], sheet.t2[j]};
                sup = std::max(sup, std::abs(sheet.state(i, j, 2) - surf(xy)));
            }
        rep.entries["surface_vs_sheet"] = sup;
        extra["surface"] = tr.surface->str();
        write_text_file(out_path(f, p.name, "_sheet.csv"), csv_sheet(sheet));
        os << p.name << ": integrable branch, surface reconstructed (sup error "
           << format_g17(sup) << ")\n";
    } else {
        write_text_file(out_path(f, p.name, "_trajectory.csv"), csv_trajectory(*tr.evolution));
        rep.entries["integrability_defect"] = std::abs(tr.discriminant);
        os << p.name << ": nonintegrable branch (4c1c2+c2^2-c1^2 = "
           << format_g17(tr.discriminant) << "), curve evolution emitted\n";
    }
    write_text_file(out_path(f, p.name, "_residuals.json"), json_report(rep, extra));
    out.text = os.str();
    return out;
}

RunOutput run_solve(const OCProblem& p, const Flags& f) {
    if (p.solver.method == "torsion") return run_torsion(p, f);
    RunOutput out;
    std::ostringstream os;
    if (p.time_dim != 1) {
        os << "solve handles m = 1 problems (use sheet/bang for multitime)\n";
        out.exit_code = 3;
        out.text = os.str();
        return out;
    }
    NormalForm nf = canonicalize(p);

    if (p.loop == LoopMode::Closed) {
        // feedback pins the controls: integrate the closed-loop extremal
        // from p(t0) = 0 and report the condition residuals
        HamiltonianData H = build_hamiltonian(nf);
        ControlLaw law = law_from_problem(p, nf);
        std::vector<double> p0(static_cast<std::size_t>(H.n), 0.0);
        const int steps = std::max(5, static_cast<int>(std::lround(
                              p.solver.grid * (p.horizon[1] - p.horizon[0]))));
        Trajectory traj = integrate_extremal(H, p.x0, p0, law, steps, p.horizon[0], p.horizon[1]);
        ResidualReport rep = check_extremal(p, traj);
        double pT = 0.0;
        for (int i = 0; i < H.n; ++i)
            pT = std::max(pT, std::abs(traj.costate(traj.num_nodes() - 1, i)));
        rep.entries["terminal_costate"] = pT;
        write_text_file(out_path(f, p.name, "_trajectory.csv"), csv_trajectory(traj));
        write_text_file(out_path(f, p.name, "_residuals.json"), json_report(rep));
        os << p.name << ": closed-loop extremal integrated (max condition residual "
           << format_g17(rep.max()) << ")\n";
        out.text = os.str();
        return out;
    }

    ShootOptions opts;
    opts.grid = p.solver.grid;
    opts.tol = p.solver.tol;
    opts.law = law_from_problem(p, nf);
    ShootResult res = shoot(p, opts);
    if (res.trajectory.times.empty()) {
        os << p.name << ": shooting not posed (";
        for (const auto& d : res.diagnostics) os << d;
        os << ")\n";
        out.exit_code = 3;
        out.text = os.str();
        return out;
    }
    write_text_file(out_path(f, p.name, "_trajectory.csv"), csv_trajectory(res.trajectory));
    std::map<std::string, std::string, std::less<>> extra;
    extra["converged"] = res.converged ? "true" : "false";
    extra["boundary_residual"] = format_g17(res.boundary_residual);
    extra["iterations"] = std::to_string(res.iterations);
    write_text_file(out_path(f, p.name, "_residuals.json"), json_report(res.report, extra));
    os << p.name << ": shooting " << (res.converged ? "converged" : "did NOT converge")
       << " (boundary residual " << format_g17(res.boundary_residual)
       << ", max condition residual " << format_g17(res.report.max()) << ")\n";
    for (const auto& d : res.diagnostics) os << "  " << d << "\n";
    out.exit_code = res.converged ? 0 : 2;
    out.text = os.str();
    return out;
}

RunOutput run_check(const OCProblem& p, const Flags& f) {
    RunOutput out;
    std::ostringstream os;
    if (f.candidate.empty()) {
        os << "check needs --candidate FILE\n";
        out.exit_code = 3;
        out.text = os.str();
        return out;
    }
    Trajectory cand = read_trajectory_csv(f.candidate);
    ResidualReport rep = check_extremal(p, cand);
    write_text_file(out_path(f, p.name, "_residuals.json"), json_report(rep));
    os << p.name << ": residuals";
    for (const auto& [key, value] : rep.entries) os << " " << key << "=" << format_g17(value);
    os << "\n";
    out.text = os.str();
    return out;
}

RunOutput run_bang(const OCProblem& p, const Flags& f) {
    RunOutput out;
    std::ostringstream os;
    if (p.time_dim == 2) {
        MultitimeBangResult res = multitime_bang(p, 50, p.solver.tol > 0 ? p.solver.tol : 1e-6);
        if (!res.feasible) {
            os << p.name << ": " << res.diagnostic << "\n";
            out.exit_code = 2;
            out.text = os.str();
            return out;
        }
        write_text_file(out_path(f, p.name, "_sheet.csv"), csv_sheet(res.sheet));
        ResidualReport rep;
        rep.entries["singular_fraction"] = res.singular_fraction;
        std::map<std::string, std::string, std::less<>> extra;
        std::ostringstream u1s, u2s;
        for (double v : res.u1) u1s << v << " ";
        for (double v : res.u2) u2s << v << " ";
        extra["u1"] = u1s.str();
        extra["u2"] = u2s.str();
        extra["objective"] = format_g17(res.objective);
        write_text_file(out_path(f, p.name, "_residuals.json"), json_report(rep, extra));
        os << p.name << ": vertex controls selected (objective "
           << format_g17(res.objective) << ")\n";
        out.text = os.str();
        return out;
    }

    if (p.cost.kind == CostKind::Terminal) {
        TimeOptimalOptions opts;
        opts.grid = p.solver.grid;
        opts.seed = p.solver.seed;
        TerminalValueResult res = terminal_value_bang(p, opts);
        write_text_file(out_path(f, p.name, "_trajectory.csv"), csv_trajectory(res.trajectory));
        ResidualReport rep;
        rep.entries["singular_fraction"] = res.profile.singular_fraction;
        std::map<std::string, std::string, std::less<>> extra;
        extra["terminal_value"] = format_g17(res.value);
        extra["converged"] = res.converged ? "true" : "false";
        if (!res.diagnostic.empty()) extra["diagnostic"] = res.diagnostic;
        write_text_file(out_path(f, p.name, "_residuals.json"), json_report(rep, extra));
        os << p.name << ": terminal value " << format_g17(res.value)
           << (res.diagnostic.empty() ? "" : (" [" + res.diagnostic + "]")) << "\n";
        out.exit_code = res.converged ? 0 : 2;
        out.text = os.str();
        return out;
    }

    TimeOptimalOptions opts;
    opts.grid = p.solver.grid;
    opts.seed = p.solver.seed;
    if (p.solver.tol > 0) opts.tol = std::max(p.solver.tol, 1e-10);
    TimeOptimalResult res = time_optimal_shoot(p, opts);
    if (!res.diagnostic.empty() && !res.converged && res.trajectory.times.empty()) {
        os << p.name << ": " << res.diagnostic << "\n";
        out.exit_code = 2;
        out.text = os.str();
        return out;
    }
    write_text_file(out_path(f, p.name, "_trajectory.csv"), csv_trajectory(res.trajectory));
    ResidualReport rep;
    rep.entries["terminal_miss"] = res.converged ? 0.0 : 1.0;
    rep.entries["singular_fraction"] = res.profile.singular_fraction;
    std::map<std::string, std::string, std::less<>> extra;
    extra["tau"] = format_g17(res.tau);
    extra["switch_count"] = std::to_string(res.profile.switch_times.size());
    extra["converged"] = res.converged ? "true" : "false";
    if (!res.diagnostic.empty()) extra["diagnostic"] = res.diagnostic;
    write_text_file(out_path(f, p.name, "_residuals.json"), json_report(rep, extra));
    os << p.name << ": minimum time tau = " << format_g17(res.tau)
       << " (" << res.profile.switch_times.size() << " switches)\n";
    out.exit_code = res.converged ? 0 : 2;
    out.text = os.str();
    return out;
}

RunOutput run_sheet(const OCProblem& p, const Flags& f) {
    RunOutput out;
    std::ostringstream os;
    if (p.time_dim != 2 || p.dist.form != Distribution::Form::Span) {
        os << "sheet needs an m = 2 span-form problem\n";
        out.exit_code = 3;
        out.text = os.str();
        return out;
    }
    SpanSystem sys(p.state_names, p.dist.generators);
    const int k = sys.num_generators();

    SheetControlLaw law;
    law.time_names = {"t1", "t2"};
    law.state_names = p.state_names;
    std::vector<std::string> vars = law.time_names;
    vars.insert(vars.end(), p.state_names.begin(), p.state_names.end());
    law.u.resize(2);
    for (int alpha = 0; alpha < 2; ++alpha) {
        std::string key = "sheet_u" + std::to_string(alpha + 1);
        auto it = p.solver.extras.find(key);
        if (it == p.solver.extras.end()) {
            os << "sheet needs [solver] " << key << " = <k expressions>\n";
            out.exit_code = 3;
            out.text = os.str();
            return out;
        }
        for (const auto& piece : split_top_level(it->second))
            law.u[static_cast<std::size_t>(alpha)].push_back(parse_expr(piece, vars));
        if (static_cast<int>(law.u[static_cast<std::size_t>(alpha)].size()) != k) {
            os << key << " needs " << k << " expressions\n";
            out.exit_code = 3;
            out.text = os.str();
            return out;
        }
    }

    const int N = std::max(8, std::min(p.solver.grid, 400));
    std::vector<double> g1(static_cast<std::size_t>(N) + 1), g2(static_cast<std::size_t>(N) + 1);
    for (int s = 0; s <= N; ++s) {
        g1[static_cast<std::size_t>(s)] = p.horizon[0] * s / N;
        g2[static_cast<std::size_t>(s)] = p.horizon[1] * s / N;
    }
    Sheet sheet = integrate_sheet(sys, law, p.x0, g1, g2, SheetOrder::T1ThenT2, p.solver.substeps);
    write_text_file(out_path(f, p.name, "_sheet.csv"), csv_sheet(sheet));

    ResidualReport rep;
    CICResidual cic = cic_residual(sheet, sys, &law);
    rep.entries["cic_sup"] = cic.sup;
    if (cic.sup > 1e-6)
        os << "warning: CIC residual sup " << format_g17(cic.sup)
           << " > 1e-6; the sheet is path-dependent\n";
    if (f.cic) {
        // full per-node residual field R^j_{12}
        std::ostringstream cf;
        cf << "t1,t2";
        for (int c = 1; c <= sheet.n; ++c) cf << ",R" << c;
        cf << "\n";
        for (std::size_t i = 0; i < sheet.t1.size(); ++i)
            for (std::size_t j = 0; j < sheet.t2.size(); ++j) {
                cf << format_g17(sheet.t1[i]) << "," << format_g17(sheet.t2[j]);
                for (int c = 0; c < sheet.n; ++c)
                    cf << "," << format_g17(cic.R12[sheet.index(i, j) * sheet.n + static_cast<std::size_t>(c)]);
                cf << "\n";
            }
        write_text_file(out_path(f, p.name, "_cic.csv"), cf.str());
    }
    write_text_file(out_path(f, p.name, "_residuals.json"), json_report(rep));
    os << p.name << ": sheet integrated (" << (N + 1) << "x" << (N + 1) << " nodes)\n";
    out.text = os.str();
    return out;
}

RunOutput run_geometry(const OCProblem& p, const Flags& f) {
    RunOutput out;
    std::ostringstream os;
    ResidualReport rep;
    std::map<std::string, std::string, std::less<>> extra;

    if (f.frobenius) {
        if (p.dist.form != Distribution::Form::Kernel || p.state_dim != 3) {
            os << "--frobenius needs a kernel-form problem with n = 3\n";
            out.exit_code = 3;
            out.text = os.str();
            return out;
        }
        // freeze controls at 0
        PfaffForm omega = *p.dist.pfaff;
        std::map<std::string, Expr, std::less<>> repl;
        for (const auto& u : p.control_names) repl.emplace(u, Expr(0.0));
        for (auto& c : omega.coeffs) c = c.substitute(repl);
        Expr coeff = frobenius_coefficient(omega);

        // numeric verdict on a seeded cloud
        std::mt19937_64 rng(p.solver.seed);
        std::uniform_real_distribution<double> uni(-1.0, 1.0);
        double sup = 0.0;
        for (int s = 0; s < 100; ++s) {
            VarEnv env;
            for (const auto& name : p.state_names) env[name] = uni(rng);
            sup = std::max(sup, std::abs(coeff.evaluate(env)));
        }
        const bool integrable = sup < 1e-12;
        os << "frobenius coefficient: " << coeff.str() << "\n";
        os << "verdict: " << (integrable ? "integrable (Frobenius)" : "nonholonomic") << "\n";
        rep.entries["frobenius_sup"] = sup;
        extra["coefficient"] = coeff.str();
        extra["verdict"] = integrable ? "integrable" : "nonholonomic";
    } else {
        os << p.name << ": n = " << p.state_dim << ", "
           << (p.dist.form == Distribution::Form::Kernel ? "kernel form" : "span form");
        if (p.dist.form == Distribution::Form::Span) {
            os << " with " << p.dist.num_generators() << " generators";
            if (p.dist.pfaff) {
                double worst = span_pfaff_consistency(p.dist, p.control_names, 100, p.solver.seed);
                rep.entries["span_pfaff_consistency"] = worst;
            }
        }
        os << "\n";
    }
    write_text_file(out_path(f, p.name, "_residuals.json"), json_report(rep, extra));
    out.text = os.str();
    return out;
}

RunOutput run_riemann(const std::string& path, const Flags& f) {
    RunOutput out;
    std::ostringstream os;
    RiemannSetup setup = load_riemann(path);
    ResidualReport rep;
    std::map<std::string, std::string, std::less<>> extra;

    if (setup.has_field) {
        GeodesicFieldResidual res = geodesic_field_residual(setup.field, setup.metric);
        // sample along the curve when present, else around the origin box
        double sup_geo = 0.0, sup_unit = 0.0;
        const int samples = 101;
        for (int s = 0; s < samples; ++s) {
            VarEnv env;
            if (setup.has_curve) {
                double t = setup.curve.t0 +
                           (setup.curve.t1 - setup.curve.t0) * s / (samples - 1);
                VarEnv tenv{{"t", t}};
                for (int i = 0; i < setup.metric.dim(); ++i)
                    env[setup.metric.coords[static_cast<std::size_t>(i)]] =
                        setup.curve.components[static_cast<std::size_t>(i)].evaluate(tenv);
            } else {
                for (int i = 0; i < setup.metric.dim(); ++i)
                    env[setup.metric.coords[static_cast<std::size_t>(i)]] = 1.0 + 0.01 * s;
            }
            for (double v : res.eval(env)) sup_geo = std::max(sup_geo, std::abs(v));
            sup_unit = std::max(sup_unit, std::abs(res.unit_deficit_at(env)));
        }
        rep.entries["geodesic_field"] = sup_geo;
        rep.entries["unit_norm_deficit"] = sup_unit;
        os << "geodesic residual sup " << format_g17(sup_geo)
           << ", unit deficit sup " << format_g17(sup_unit) << "\n";
    }
    if (setup.has_curve) {
        double len = length(setup.metric, setup.curve);
        extra["length"] = format_g17(len);
        os << "length = " << format_g17(len);
        if (setup.has_field) {
            double w = work(setup.field, setup.metric, setup.curve);
            double crit = work_criticality_residual(setup.field, setup.metric, setup.curve);
            extra["work"] = format_g17(w);
            rep.entries["work_criticality"] = crit;
            os << ", work = " << format_g17(w);
        }
        os << "\n";
    }
    write_text_file(out_path(f, setup.name, "_residuals.json"), json_report(rep, extra));
    out.text = os.str();
    return out;
}

RunOutput run_one(const std::string& command, const std::string& file, const Flags& f) {
    RunOutput out;
    try {
        if (command == "riemann") return run_riemann(file, f);

        OCProblem p = load_problem(file);
        apply_flags(p, f);
        auto diags = validate(p);
        if (!diags.empty()) {
            std::ostringstream os;
            os << file << ": validation failed\n";
            for (const auto& d : diags) os << "  " << d << "\n";
            out.text = os.str();
            out.exit_code = 3;
            return out;
        }
        if (command == "solve") return run_solve(p, f);
        if (command == "check") return run_check(p, f);
        if (command == "bang") return run_bang(p, f);
        if (command == "sheet") return run_sheet(p, f);
        if (command == "geometry") return run_geometry(p, f);
        out.text = "unknown command '" + command + "'\n";
        out.exit_code = 3;
        return out;
    } catch (const std::exception& e) {
        out.text = std::string(file) + ": " + e.what() + "\n";
        out.exit_code = 3;
        return out;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"nonholonomic optimal control toolkit"};
    app.require_subcommand(1);

    Flags flags;
    std::vector<std::string> files;
    std::vector<CLI::App*> subs;
    for (const char* name : {"solve", "check", "bang", "sheet", "geometry", "riemann"}) {
        CLI::App* sub = app.add_subcommand(name);
        sub->add_option("files", files, "problem files")->required();
        sub->add_option("--grid", flags.grid, "RK4 steps per unit time");
        sub->add_option("--tol", flags.tol, "solver tolerance");
        sub->add_option("--seed", flags.seed, "RNG seed (overrides NONHOLO_SEED)");
        sub->add_option("--out", flags.out_dir, "output directory");
        sub->add_option("--jobs", flags.jobs, "parallel workers over problem files");
        sub->add_option("--candidate", flags.candidate, "candidate trajectory CSV (check)");
        sub->add_flag("--frobenius", flags.frobenius, "Frobenius test (geometry)");
        sub->add_flag("--cic", flags.cic, "complete-integrability residual (sheet)");
        subs.push_back(sub);
    }

    CLI11_PARSE(app, argc, argv);
    std::string command = app.get_subcommands().front()->get_name();

    std::error_code ec;
    fs::create_directories(flags.out_dir, ec);

    std::vector<RunOutput> results(files.size());
    const int jobs = std::max(1, flags.jobs);
    if (jobs > 1 && files.size() > 1) {
#ifdef _OPENMP
        #pragma omp parallel for num_threads(jobs) schedule(dynamic)
#endif
        for (long long i = 0; i < static_cast<long long>(files.size()); ++i)
            results[static_cast<std::size_t>(i)] =
                run_one(command, files[static_cast<std::size_t>(i)], flags);
    } else {
        for (std::size_t i = 0; i < files.size(); ++i)
            results[i] = run_one(command, files[i], flags);
    }

    int exit_code = 0;
    for (const auto& r : results) {
        std::cout << r.text;
        exit_code = std::max(exit_code, r.exit_code);
    }
    std::cout << "status=" << status_of(exit_code) << "\n";
    return exit_code;
}

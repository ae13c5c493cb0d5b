#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nonholo/expr.hpp"
#include "nonholo/ocp.hpp"

namespace nonholo {

class StationarityError : public ExprError {
public:
    StationarityError(const std::string& what, double residual)
        : ExprError(what), residual(residual) {}
    double residual;
};

// H = L + p_i f^i(t,x,u) over slots [t, x.., u.., p..], with every partial
// precompiled. ∂H/∂p_i reproduces the dynamics by construction; the unit
// tests confirm it numerically.
struct HamiltonianData {
    NormalForm nf;
    std::vector<std::string> costate_names;
    std::vector<std::string> slots;          // t, states, controls, costates
    Expr H;
    std::vector<Expr> Hx, Hu, Hp;
    std::vector<std::vector<Expr>> Huu;
    CompiledExpr cH;
    std::vector<CompiledExpr> cHx, cHu, cHp, cHuu;   // cHuu row-major k*k
    int n = 0, k = 0;

    std::size_t slot_t() const { return 0; }
    std::size_t slot_x(int i) const { return 1 + static_cast<std::size_t>(i); }
    std::size_t slot_u(int a) const { return 1 + static_cast<std::size_t>(n + a); }
    std::size_t slot_p(int i) const { return 1 + static_cast<std::size_t>(n + k + i); }
};

HamiltonianData build_hamiltonian(const OCProblem& p);
HamiltonianData build_hamiltonian(const NormalForm& nf);

// How controls are resolved at each integration stage. Box-pinned
// components (lower == upper) always take the pinned value; explicit
// components evaluate their expression over (t, states); the rest follow
// the default kind.
struct ControlLaw {
    enum class Kind { Stationary, Explicit, Bang };
    Kind default_kind = Kind::Stationary;
    std::map<int, Expr> explicit_components;
    double eps_sw = 1e-9;
    int newton_max_iter = 20;
    double newton_tol = 1e-12;
};

// Fixed-step RK4 on ẋ = H_p, ṗ = −H_x with u resolved at every stage;
// controls outside the box are clipped and counted in the diagnostics.
Trajectory integrate_extremal(const HamiltonianData& H,
                              std::span<const double> x0,
                              std::span<const double> p0,
                              const ControlLaw& law,
                              int steps, double t0, double t1);

// Sup-norm residuals of the necessary conditions along a candidate.
// Kernel-form problems with a scalar costate column are checked against
// the Pfaff-form conditions (report keys *_eq8..eq10); candidates with n
// costate columns against the normal-form conditions (*_eq24..eq26).
// Grid derivatives use 4th-order five-point stencils (uniform grid,
// at least five nodes).
ResidualReport check_extremal(const OCProblem& p, const Trajectory& candidate);

struct ShootOptions {
    int grid = 1000;                 // RK4 steps over the horizon
    double tol = 1e-10;
    int max_iter = 50;
    double fd_step = 1e-7;
    ControlLaw law;
    std::vector<double> p0_guess;    // optional
};

struct ShootResult {
    Trajectory trajectory;
    ResidualReport report;
    bool converged = false;
    double boundary_residual = 0.0;
    double jacobian_condition = 0.0;
    int iterations = 0;
    std::vector<std::string> diagnostics;
};

// Indirect shooting on the two-point boundary value problem. Default
// boundary kind: unknowns p(t0); residuals are targeted components of
// x(t1) − x1 plus transversality p_j(t1) − ∂g/∂x^j on untargeted ones.
// ZeroCostate kind: p(t0) = 0, unknowns are the NaN components of x0.
ShootResult shoot(const OCProblem& p, ShootOptions opts = {});

} // namespace nonholo

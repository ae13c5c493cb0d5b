#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nonholo/bang.hpp"
#include "nonholo/geometry.hpp"
#include "nonholo/ocp.hpp"
#include "nonholo/parallel.hpp"

namespace nonholo {

// Discretized m-sheet over a parameter rectangle (m = 2): node (i, j)
// covers (t1[i], t2[j]), stored row-major with j fastest.
struct Sheet {
    std::vector<double> t1, t2;
    int n = 0, k = 0;
    std::vector<double> states;                          // node*n
    std::vector<double> controls;                        // node*2k, u^a_alpha at [2k*node + k*alpha + a]
    std::optional<std::vector<double>> costates;         // node*n   (single costate vector)
    std::optional<std::vector<double>> costates_matrix;  // node*2n  (p^alpha_i at [2n*node + n*alpha + i])

    std::size_t num_nodes() const { return t1.size() * t2.size(); }
    std::size_t index(std::size_t i, std::size_t j) const { return i * t2.size() + j; }
    double state(std::size_t i, std::size_t j, int comp) const {
        return states[index(i, j) * n + static_cast<std::size_t>(comp)];
    }
    double control(std::size_t i, std::size_t j, int alpha, int a) const {
        return controls[index(i, j) * 2 * k + static_cast<std::size_t>(alpha * k + a)];
    }
};

// Controls u^a_alpha as expressions over (t1, t2) and optionally the state.
struct SheetControlLaw {
    std::vector<std::string> time_names;    // {"t1","t2"}
    std::vector<std::string> state_names;
    std::vector<std::vector<Expr>> u;       // [alpha][a]

    bool time_only() const;
};

// Complete-integrability residual
//   R^j_{alpha beta} = (∂u^a_alpha/∂t^beta − ∂u^a_beta/∂t^alpha) X^j_a
//                      − u^a_alpha u^b_beta [X_a, X_b]^j
// stored for (alpha,beta) = (1,2); the (2,1) slot is its negative.
struct CICResidual {
    std::vector<double> R12;   // node*n
    double sup = 0.0;
    int n = 0;
};

// Control t-derivatives from the law when it is time-only, else from
// central order-2 differences of the stored node values.
CICResidual cic_residual(const Sheet& sheet, const SpanSystem& sys,
                         const SheetControlLaw* law = nullptr);

enum class SheetOrder { T1ThenT2, T2ThenT1 };

// Staircase integration of dx = u^a_alpha X_a dt^alpha: one leg along the
// first parameter, then independent column legs (parallelized; results do
// not depend on the schedule). RK4 with `substeps` per grid leg.
Sheet integrate_sheet(const SpanSystem& sys, const SheetControlLaw& law,
                      std::span<const double> x0,
                      const std::vector<double>& t1_grid,
                      const std::vector<double>& t2_grid,
                      SheetOrder order = SheetOrder::T1ThenT2,
                      int substeps = 2,
                      par::Mode mode = par::default_mode());

// Worked torsion example: dz = (y+u)dx + (−x+v)dy, cost
// ∫ (z+u²)c1 dx + (z+v²)c2 dy minimized. Closed-form machinery: adjoint
// p = c1 x + c2 y, optimal u = p/(2c1), v = p/(2c2); integrable surface
// iff 4 c1 c2 + c2² − c1² = 0, else curve-restricted evolution.
struct TorsionCurve {
    Expr x, y;          // expressions of "tau"
    double tau0 = 0.0, tau1 = 1.0;
};

struct TorsionResult {
    double c1 = 0.0, c2 = 0.0;
    double discriminant = 0.0;          // 4 c1 c2 + c2^2 - c1^2
    bool integrable = false;
    Expr p, u, v;                       // over (x, y)
    std::optional<Expr> surface;        // z(x, y), integrable branch
    std::optional<Expr> dz_dtau;        // curve branch, expression of tau
    std::optional<Trajectory> evolution;// sampled curve evolution (x,y,z)
};

TorsionResult torsion_solve(double c1, double c2,
                            std::span<const double> endpoint,       // (x0, y0)
                            const TorsionCurve* curve = nullptr,
                            int grid = 400);

// Criticality residual of a curvilinear functional depending on the curve:
//   r_alpha(tau) = (D_alpha L_beta − D_beta L_alpha)(t(tau)) dt^beta/dtau.
struct CurveCriticality {
    std::vector<double> taus;
    std::vector<double> r;    // node*m
    double sup = 0.0;
    int m = 0;
};

CurveCriticality curve_criticality_residual(std::span<const Expr> L,
                                            std::span<const std::string> time_names,
                                            std::span<const Expr> curve,   // t^alpha(tau)
                                            double tau0, double tau1,
                                            int samples = 201);
// Sampled-curve variant (order-2 differences for dt/dtau).
CurveCriticality curve_criticality_residual(std::span<const Expr> L,
                                            std::span<const std::string> time_names,
                                            std::span<const double> taus,
                                            std::span<const double> t_nodes); // node*m

// Bang map of the multitime principle: u*^a_alpha = −sign(Q^alpha_a),
// singular components flagged. Q laid out [alpha*k + a].
BangControl multitime_bang_map(std::span<const double> Q, double eps_sw = 1e-9);

struct MultitimeBangResult {
    Sheet sheet;
    std::vector<double> u1, u2;          // selected vertex controls
    double objective = 0.0;
    bool feasible = false;
    std::string diagnostic;
    std::vector<double> path_Q;          // Q_a along the staircase costate pass
    double singular_fraction = 0.0;
};

// Enumerates the CIC-compatible vertex controls u_2 = ±u_1 of the unit
// box, integrates each candidate sheet over the fixed rectangle, and
// returns the feasible candidate with the best objective (corner distance
// to the target, or the terminal-index value).
MultitimeBangResult multitime_bang(const OCProblem& p, int grid_per_side = 50,
                                   double tol = 1e-6);

// Residual evaluators for the multitime adjoint systems along a sheet
// ("verify, don't solve"); open-loop unless a state-dependent law is given.
// Three costate conventions coexist: a per-direction costate matrix
// p^alpha_i transported along every direction, its divergence (trace)
// form, and a single costate vector transported along every direction.
double multitime_adjoint_residual_matrix(const Sheet& sheet, const SpanSystem& sys,
                                         const SheetControlLaw* law = nullptr);
double multitime_adjoint_residual_trace(const Sheet& sheet, const SpanSystem& sys,
                                        const SheetControlLaw* law = nullptr);
double multitime_adjoint_residual_vector(const Sheet& sheet, const SpanSystem& sys,
                                         const SheetControlLaw* law = nullptr);

// δ_{αβ} p^α_i n^β on the rectangle boundary (axis-aligned normals only).
double multitime_boundary_residual(const Sheet& sheet);

} // namespace nonholo

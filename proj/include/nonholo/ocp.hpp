#pragma once

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "nonholo/expr.hpp"
#include "nonholo/geometry.hpp"

namespace nonholo {

enum class CostKind { SimpleIntegral, Curvilinear, MultipleIntegral, Terminal };
enum class Sense { Maximize, Minimize };
enum class LoopMode { Open, Closed };
enum class BoundaryKind { TargetState, ZeroCostate };

struct CostFunctional {
    CostKind kind = CostKind::SimpleIntegral;
    std::vector<Expr> integrands;        // L, or L_alpha (m of them)
    std::optional<Expr> terminal;        // g(x)
    std::optional<int> terminal_index;   // terminal cost x^index (1-based)
};

struct ControlBox {
    std::vector<double> lower, upper;    // ±inf allowed

    bool bounded() const;
    bool is_unit_box() const;            // every component [-1, 1]
    bool pinned(int a) const { return lower[a] == upper[a]; }
};

struct SolverOptions {
    int grid = 1000;                     // RK4 steps per unit time
    double tol = 1e-10;
    unsigned seed = 12345;
    int substeps = 2;                    // RK4 substeps per sheet leg
    std::string method = "default";      // "torsion" dispatches the worked example
    std::map<std::string, std::string, std::less<>> extras;  // method-specific keys
};

struct OCProblem {
    std::string name;
    int time_dim = 1;                            // m
    int state_dim = 0;                           // n
    std::vector<std::string> time_names;         // {"t"} or {"t1","t2"}
    std::vector<std::string> state_names;
    std::vector<std::string> control_names;
    ControlBox box;
    Distribution dist;
    CostFunctional cost;
    Sense sense = Sense::Maximize;
    std::vector<double> x0;                      // NaN components = free
    std::optional<std::vector<double>> x1;       // NaN components = untargeted
    std::vector<double> horizon;                 // m=1: {t0,t1}; m=2: {tau1,tau2} over [0,tau]
    BoundaryKind boundary_kind = BoundaryKind::TargetState;
    LoopMode loop = LoopMode::Open;
    std::vector<Expr> feedback;                  // closed-loop u(x)
    SolverOptions solver;
};

// Empty list iff every invariant holds; diagnostics are returned, never thrown.
std::vector<std::string> validate(const OCProblem& p);

// Solver-facing normal form: kernel-form m=1 problems gain auxiliary
// controls for the unconstrained velocity directions, with the remaining
// velocity solved from the constraint; the sense is canonicalized to
// maximize.
struct NormalForm {
    std::vector<std::string> state_names;
    std::vector<std::string> control_names;      // auxiliary controls first
    int num_aux = 0;
    std::vector<Expr> dynamics;                  // f^i(t, x, u)
    Expr lagrangian;                             // maximize-canonical running cost
    std::optional<Expr> terminal;                // maximize-canonical terminal cost
    ControlBox box;                              // auxiliary components unbounded
    std::optional<PfaffForm> pfaff;              // original constraint, for residuals
    std::string time_name;
    bool negated = false;                        // true when the sense was minimize
};

NormalForm canonicalize(const OCProblem& p);

struct Trajectory {
    std::vector<double> times;
    std::vector<double> states;      // node*n
    std::vector<double> controls;    // node*k
    std::vector<double> costates;    // node*np (np = n, or 1 for Pfaff candidates)
    std::vector<double> hamiltonian; // node (may be empty)
    std::vector<double> switching;   // node*k (may be empty)
    int n = 0, k = 0, np = 0;
    bool converged = true;
    std::vector<std::string> diagnostics;

    std::size_t num_nodes() const { return times.size(); }
    double state(std::size_t node, int i) const { return states[node * n + i]; }
    double control(std::size_t node, int a) const { return controls[node * k + a]; }
    double costate(std::size_t node, int i) const { return costates[node * np + i]; }
};

struct ResidualReport {
    std::map<std::string, double, std::less<>> entries;

    double max() const;
    double at(std::string_view key) const;
};

} // namespace nonholo

#pragma once

#include <span>
#include <string>
#include <vector>

#include "nonholo/geometry.hpp"
#include "nonholo/ocp.hpp"

namespace nonholo {

// Switching data along a trajectory: Q_a(t) = p_i(t) X^i_a(x(t)).
struct SwitchingProfile {
    std::vector<double> times;
    std::vector<double> Q;                       // node*k
    std::vector<double> switch_times;            // bisection-refined zero crossings
    std::vector<double> singular_fraction_each;  // per generator
    double singular_fraction = 0.0;              // fraction of (node, a) samples with |Q| <= eps
    int k = 0;
};

// Q_a = p_i X^i_a(x)
std::vector<double> switching(std::span<const double> p,
                              std::span<const double> x,
                              const SpanSystem& sys);

struct BangControl {
    std::vector<double> u;
    std::vector<bool> singular;
};

// The control table of the single-time bang-bang principle:
//   u*^a = +1 for Q_a < -eps, -1 for Q_a > eps, singular (0, flagged) inside.
BangControl bang_law(std::span<const double> Q, double eps_sw = 1e-9);

struct TimeOptimalOptions {
    int grid = 1000;             // steps over [0, tau]
    double tol = 1e-8;           // terminal miss tolerance
    int max_iter = 60;
    double eps_sw = 1e-9;
    unsigned seed = 12345;
    int extra_starts = 8;        // random p(0) starts beyond the sign-pattern seeds
};

struct TimeOptimalResult {
    Trajectory trajectory;
    SwitchingProfile profile;
    double tau = 0.0;
    bool converged = false;
    std::string diagnostic;
};

// Free-time shooting of the minimum-time problem to the target (default:
// the origin): unknowns (p(0), tau), bang law closing the loop, and the
// free-time condition sum_a |Q_a(0)| = 1 (H = 0 with the maximizing
// vertex). Aborts with a diagnostic when every component is singular.
TimeOptimalResult time_optimal_shoot(const OCProblem& p, TimeOptimalOptions opts = {});

struct TerminalValueResult {
    Trajectory trajectory;
    SwitchingProfile profile;
    double value = 0.0;          // terminal cost in the problem's original sense
    bool converged = false;
    std::string diagnostic;
};

// Fixed-horizon bang-bang synthesis for minimizing x^n(t1): terminal
// costate p(t1) = -e_n (maximize-canonical), backward/forward sweeps until
// the control pattern is self-consistent. Components pinned by the box
// keep their pinned value.
TerminalValueResult terminal_value_bang(const OCProblem& p, TimeOptimalOptions opts = {});

} // namespace nonholo

#pragma once

#include <span>
#include <string>
#include <vector>

#include "nonholo/expr.hpp"
#include "nonholo/geometry.hpp"

namespace nonholo {

// Riemannian metric g_ij(x): symmetric by shared expressions.
struct Metric {
    std::vector<std::string> coords;
    std::vector<Expr> g;     // n*n row-major

    int dim() const { return static_cast<int>(coords.size()); }
    const Expr& at(int i, int j) const { return g[static_cast<std::size_t>(i * dim() + j)]; }

    static Metric diagonal(std::vector<std::string> coords, std::vector<Expr> diag);
    static Metric euclidean(std::vector<std::string> coords);
};

// Positive-definiteness probe: Cholesky at seeded sample points inside the
// given box; returns false at the first failure.
bool metric_spd_probe(const Metric& g, std::span<const double> lo, std::span<const double> hi,
                      int npoints = 50, unsigned seed = 12345);

// Γ^k_ij = ½ g^{kl} (∂_i g_jl + ∂_j g_il − ∂_l g_ij), symmetric in (i,j).
// The inverse metric is formed symbolically (adjugate / determinant).
struct Christoffel {
    int n = 0;
    std::vector<Expr> gamma;   // [k*n*n + i*n + j]

    const Expr& at(int k, int i, int j) const {
        return gamma[static_cast<std::size_t>((k * n + i) * n + j)];
    }
};

Christoffel christoffel(const Metric& g);

// (∇_X X)^k = X^i (∂_i X^k + Γ^k_ij X^j) and the unit-norm deficit
// g_ij X^i X^j − 1; both evaluable anywhere.
struct GeodesicFieldResidual {
    std::vector<Expr> nabla_XX;   // n components
    Expr unit_deficit;

    std::vector<double> eval(const VarEnv& env) const;
    double unit_deficit_at(const VarEnv& env) const { return unit_deficit.evaluate(env); }
};

GeodesicFieldResidual geodesic_field_residual(const VectorField& X, const Metric& g);

// Criticality 1-form of the work functional along a curve:
//   c_k = (g_ij ∇_k X^i − g_ik ∇_j X^i) ẋ^j ; identically small along field
// lines of unit geodesic fields.
std::vector<Expr> work_criticality_form(const VectorField& X, const Metric& g);

// Smooth curve x(t) as expressions of "t" over [t0, t1].
struct Curve {
    std::vector<Expr> components;
    double t0 = 0.0, t1 = 1.0;
};

// Sampled polyline fallback (>= 3 nodes).
struct Polyline {
    std::vector<double> times;
    std::vector<double> points;   // node*n
    int n = 0;
};

// Work: composite Simpson quadrature of g_ij X^i ẋ^j dt.
double work(const VectorField& X, const Metric& g, const Curve& curve, int panels = 1000);
double work(const VectorField& X, const Metric& g, const Polyline& curve);

// Length: same quadrature with integrand sqrt(g_ij ẋ^i ẋ^j).
double length(const Metric& g, const Curve& curve, int panels = 1000);
double length(const Metric& g, const Polyline& curve);

// Criticality residual sampled along a smooth curve; sup-norm.
double work_criticality_residual(const VectorField& X, const Metric& g,
                                 const Curve& curve, int samples = 401);

// Field line of X through x0 (RK4, fixed step).
Polyline field_line(const VectorField& X, std::span<const double> x0,
                    double t0, double t1, int steps = 1000);

} // namespace nonholo

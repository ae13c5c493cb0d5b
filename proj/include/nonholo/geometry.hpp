#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nonholo/expr.hpp"

namespace nonholo {

class DimensionError : public ExprError {
public:
    using ExprError::ExprError;
};

// Smooth vector field X = X^i(x) ∂_i with symbolic components over the
// named coordinates.
struct VectorField {
    std::vector<std::string> coords;
    std::vector<Expr> components;

    int dim() const { return static_cast<int>(components.size()); }
};

// Constraint 1-form a_i(x) dx^i (coefficients may also carry control names
// when the caller manages them).
struct PfaffForm {
    std::vector<std::string> coords;
    std::vector<Expr> coeffs;

    int dim() const { return static_cast<int>(coeffs.size()); }
};

// [X,Y]^j = X^i ∂Y^j/∂x^i − Y^i ∂X^j/∂x^i
VectorField lie_bracket(const VectorField& X, const VectorField& Y);

// Coefficient c(x) with ω∧dω = c dx¹∧dx²∧dx³ (n = 3 only; orientation is
// the coordinate order of the form). c ≡ 0 iff the kernel distribution is
// integrable by Frobenius.
Expr frobenius_coefficient(const PfaffForm& omega);

// Generators of ker(ω) of the shape X_j = ∂_j − (a_j/a_k) ∂_k for j ≠ k,
// where k is the pivot (auto: last coordinate with a nonzero constant
// coefficient, else last with a structurally nonzero coefficient).
std::vector<VectorField> kernel_generators(const PfaffForm& omega, int pivot = -1);
int kernel_pivot(const PfaffForm& omega);

struct Distribution {
    enum class Form { Kernel, Span };
    Form form = Form::Span;
    std::vector<std::string> coords;
    std::optional<PfaffForm> pfaff;      // kernel description, or tag on a span
    std::vector<VectorField> generators;

    static Distribution kernel(PfaffForm omega);
    static Distribution span(std::vector<VectorField> gens,
                             std::optional<PfaffForm> tag = std::nullopt);

    int dim() const { return static_cast<int>(coords.size()); }
    int num_generators() const { return static_cast<int>(generators.size()); }
};

// max |a_i X^i_a| over a seeded uniform cloud in [-1,1]^(n + #controls);
// 0 for distributions without both descriptions.
double span_pfaff_consistency(const Distribution& dist,
                              std::span<const std::string> control_names = {},
                              int npoints = 100, unsigned seed = 12345);

// Driftless system apparatus: generators with their symbolic Jacobians
// compiled once, evaluated many times.
class SpanSystem {
public:
    SpanSystem(std::vector<std::string> states, std::vector<VectorField> generators);

    int dim() const { return n_; }
    int num_generators() const { return k_; }
    const std::vector<std::string>& states() const { return states_; }
    const std::vector<VectorField>& generators() const { return gens_; }

    // X[a*n + j] = X^j_a(x)
    void eval_fields(std::span<const double> x, double* X) const;
    // dX[(a*n + j)*n + i] = ∂X^j_a/∂x^i(x)
    void eval_jacobians(std::span<const double> x, double* dX) const;

    // rhs of ẋ = u^a X_a(x)
    std::vector<double> dynamics(std::span<const double> x, std::span<const double> u) const;

private:
    int n_ = 0, k_ = 0;
    std::vector<std::string> states_;
    std::vector<VectorField> gens_;
    std::vector<CompiledExpr> fields_;   // k*n
    std::vector<CompiledExpr> jac_;      // k*n*n
};

// Closed-loop control law u^a(x) with symbolic state Jacobian.
struct FeedbackLaw {
    std::vector<std::string> states;
    std::vector<Expr> u;

    // u_x[a*n + i] = ∂u^a/∂x^i(x)
    std::vector<double> jacobian_at(std::span<const double> x) const;
    std::vector<double> values_at(std::span<const double> x) const;
};

// Single-time infinitesimal deformation system:
//   ẏ^j = (∂u^a/∂x^i X^j_a + u^a ∂X^j_a/∂x^i) y^i
// u_x is the k×n row-major control Jacobian; null in open-loop mode.
std::vector<double> deformation_rhs(const SpanSystem& sys,
                                    std::span<const double> x,
                                    std::span<const double> y,
                                    std::span<const double> u,
                                    const double* u_x = nullptr);

// Adjoint (dual) system:
//   ṗ_k = −(∂u^a/∂x^k X^j_a + u^a ∂X^j_a/∂x^k) p_j
// Jointly with the deformation system, p_k y^k is a first integral.
std::vector<double> adjoint_rhs(const SpanSystem& sys,
                                std::span<const double> x,
                                std::span<const double> p,
                                std::span<const double> u,
                                const double* u_x = nullptr);

// Residual of the Pfaff deformation equation
//   (∂a_i/∂x^j y^j + b_i) dx^i + a_i dy^i = 0
// along sampled curve data on a uniform grid (order-2 differences);
// b defaults to zero, which is the only case the worked examples use.
double pfaff_deformation_residual(const PfaffForm& omega,
                                  std::span<const double> times,
                                  std::span<const double> x_nodes,   // node*n
                                  std::span<const double> y_nodes,   // node*n
                                  const std::vector<Expr>* b = nullptr);

} // namespace nonholo

#include "nonholo/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "nonholo/parallel.hpp"

namespace nonholo {

VectorField lie_bracket(const VectorField& X, const VectorField& Y) {
    if (X.dim() != Y.dim() || X.coords != Y.coords)
        throw DimensionError("lie_bracket: dimension/coordinate mismatch");
    const int n = X.dim();
    VectorField Z;
    Z.coords = X.coords;
    Z.components.reserve(n);
    for (int j = 0; j < n; ++j) {
        Expr c(0.0);
        for (int i = 0; i < n; ++i) {
            c = c + X.components[i] * Y.components[j].diff(X.coords[i])
                  - Y.components[i] * X.components[j].diff(X.coords[i]);
        }
        Z.components.push_back(c);
    }
    return Z;
}

Expr frobenius_coefficient(const PfaffForm& omega) {
    if (omega.dim() != 3)
        throw DimensionError("frobenius_coefficient: only n = 3 is supported");
    const auto& x = omega.coords;
    const auto& a = omega.coeffs;
    // ω∧dω = [a1(∂2 a3 − ∂3 a2) − a2(∂1 a3 − ∂3 a1) + a3(∂1 a2 − ∂2 a1)] dx1∧dx2∧dx3
    return a[0] * (a[2].diff(x[1]) - a[1].diff(x[2]))
         - a[1] * (a[2].diff(x[0]) - a[0].diff(x[2]))
         + a[2] * (a[1].diff(x[0]) - a[0].diff(x[1]));
}

int kernel_pivot(const PfaffForm& omega) {
    const int n = omega.dim();
    for (int i = n - 1; i >= 0; --i)
        if (omega.coeffs[i].is_constant() && omega.coeffs[i].constant_value() != 0.0)
            return i;
    for (int i = n - 1; i >= 0; --i)
        if (!omega.coeffs[i].is_constant(0.0))
            return i;
    throw DimensionError("kernel_pivot: form has no nonzero coefficient");
}

std::vector<VectorField> kernel_generators(const PfaffForm& omega, int pivot) {
    const int n = omega.dim();
    if (pivot < 0) pivot = kernel_pivot(omega);
    std::vector<VectorField> gens;
    for (int j = 0; j < n; ++j) {
        if (j == pivot) continue;
        VectorField X;
        X.coords = omega.coords;
        X.components.assign(n, Expr(0.0));
        X.components[j] = Expr(1.0);
        X.components[pivot] = -(omega.coeffs[j] / omega.coeffs[pivot]);
        gens.push_back(std::move(X));
    }
    return gens;
}

Distribution Distribution::kernel(PfaffForm omega) {
    Distribution d;
    d.form = Form::Kernel;
    d.coords = omega.coords;
    d.pfaff = std::move(omega);
    return d;
}

Distribution Distribution::span(std::vector<VectorField> gens, std::optional<PfaffForm> tag) {
    Distribution d;
    d.form = Form::Span;
    if (gens.empty())
        throw DimensionError("Distribution::span: no generators");
    d.coords = gens.front().coords;
    d.generators = std::move(gens);
    d.pfaff = std::move(tag);
    return d;
}

double span_pfaff_consistency(const Distribution& dist,
                              std::span<const std::string> control_names,
                              int npoints, unsigned seed) {
    if (!dist.pfaff || dist.generators.empty()) return 0.0;
    const int n = dist.dim();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);

    double worst = 0.0;
    for (int s = 0; s < npoints; ++s) {
        VarEnv env;
        for (int i = 0; i < n; ++i) env[dist.coords[i]] = uni(rng);
        for (const auto& c : control_names) env[c] = uni(rng);
        for (const auto& X : dist.generators) {
            double pairing = 0.0;
            for (int i = 0; i < n; ++i)
                pairing += dist.pfaff->coeffs[i].evaluate(env) * X.components[i].evaluate(env);
            worst = std::max(worst, std::abs(pairing));
        }
    }
    return worst;
}

SpanSystem::SpanSystem(std::vector<std::string> states, std::vector<VectorField> generators)
    : states_(std::move(states)), gens_(std::move(generators)) {
    n_ = static_cast<int>(states_.size());
    k_ = static_cast<int>(gens_.size());
    for (const auto& g : gens_)
        if (g.dim() != n_)
            throw DimensionError("SpanSystem: generator dimension mismatch");
    fields_.reserve(static_cast<std::size_t>(k_) * n_);
    jac_.reserve(static_cast<std::size_t>(k_) * n_ * n_);
    for (int a = 0; a < k_; ++a)
        for (int j = 0; j < n_; ++j)
            fields_.emplace_back(gens_[a].components[j], states_);
    for (int a = 0; a < k_; ++a)
        for (int j = 0; j < n_; ++j)
            for (int i = 0; i < n_; ++i)
                jac_.emplace_back(gens_[a].components[j].diff(states_[i]), states_);
}

void SpanSystem::eval_fields(std::span<const double> x, double* X) const {
    for (std::size_t idx = 0; idx < fields_.size(); ++idx)
        X[idx] = fields_[idx](x);
}

void SpanSystem::eval_jacobians(std::span<const double> x, double* dX) const {
    for (std::size_t idx = 0; idx < jac_.size(); ++idx)
        dX[idx] = jac_[idx](x);
}

std::vector<double> SpanSystem::dynamics(std::span<const double> x,
                                         std::span<const double> u) const {
    std::vector<double> X(static_cast<std::size_t>(k_) * n_);
    eval_fields(x, X.data());
    std::vector<double> f(static_cast<std::size_t>(n_), 0.0);
    for (int a = 0; a < k_; ++a)
        for (int j = 0; j < n_; ++j)
            f[j] += u[a] * X[static_cast<std::size_t>(a) * n_ + j];
    return f;
}

std::vector<double> FeedbackLaw::values_at(std::span<const double> x) const {
    VarEnv env;
    for (std::size_t i = 0; i < states.size(); ++i) env[states[i]] = x[i];
    std::vector<double> v(u.size());
    for (std::size_t a = 0; a < u.size(); ++a) v[a] = u[a].evaluate(env);
    return v;
}

std::vector<double> FeedbackLaw::jacobian_at(std::span<const double> x) const {
    VarEnv env;
    for (std::size_t i = 0; i < states.size(); ++i) env[states[i]] = x[i];
    const std::size_t n = states.size();
    std::vector<double> J(u.size() * n);
    for (std::size_t a = 0; a < u.size(); ++a)
        for (std::size_t i = 0; i < n; ++i)
            J[a * n + i] = u[a].diff(states[i]).evaluate(env);
    return J;
}

namespace {

// A[j*n + i] = ∂u^a/∂x^i X^j_a + u^a ∂X^j_a/∂x^i, the system matrix shared
// by the deformation and adjoint right-hand sides.
std::vector<double> variational_matrix(const SpanSystem& sys,
                                       std::span<const double> x,
                                       std::span<const double> u,
                                       const double* u_x) {
    const int n = sys.dim();
    const int k = sys.num_generators();
    if (static_cast<int>(x.size()) != n || static_cast<int>(u.size()) != k)
        throw DimensionError("variational system: dimension mismatch");

    std::vector<double> X(static_cast<std::size_t>(k) * n);
    std::vector<double> dX(static_cast<std::size_t>(k) * n * n);
    sys.eval_fields(x, X.data());
    sys.eval_jacobians(x, dX.data());

    std::vector<double> A(static_cast<std::size_t>(n) * n, 0.0);
    for (int a = 0; a < k; ++a)
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                double v = u[a] * dX[(static_cast<std::size_t>(a) * n + j) * n + i];
                if (u_x) v += u_x[static_cast<std::size_t>(a) * n + i] * X[static_cast<std::size_t>(a) * n + j];
                A[static_cast<std::size_t>(j) * n + i] += v;
            }
    return A;
}

} // namespace

std::vector<double> deformation_rhs(const SpanSystem& sys,
                                    std::span<const double> x,
                                    std::span<const double> y,
                                    std::span<const double> u,
                                    const double* u_x) {
    const int n = sys.dim();
    if (static_cast<int>(y.size()) != n)
        throw DimensionError("deformation_rhs: y dimension mismatch");
    auto A = variational_matrix(sys, x, u, u_x);
    std::vector<double> dy(static_cast<std::size_t>(n), 0.0);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i)
            dy[j] += A[static_cast<std::size_t>(j) * n + i] * y[i];
    return dy;
}

std::vector<double> adjoint_rhs(const SpanSystem& sys,
                                std::span<const double> x,
                                std::span<const double> p,
                                std::span<const double> u,
                                const double* u_x) {
    const int n = sys.dim();
    if (static_cast<int>(p.size()) != n)
        throw DimensionError("adjoint_rhs: p dimension mismatch");
    auto A = variational_matrix(sys, x, u, u_x);
    std::vector<double> dp(static_cast<std::size_t>(n), 0.0);
    for (int kk = 0; kk < n; ++kk)
        for (int j = 0; j < n; ++j)
            dp[kk] -= A[static_cast<std::size_t>(j) * n + kk] * p[j];
    return dp;
}

double pfaff_deformation_residual(const PfaffForm& omega,
                                  std::span<const double> times,
                                  std::span<const double> x_nodes,
                                  std::span<const double> y_nodes,
                                  const std::vector<Expr>* b) {
    const int n = omega.dim();
    const std::size_t N = times.size();
    if (N < 3 || x_nodes.size() != N * n || y_nodes.size() != N * n)
        throw DimensionError("pfaff_deformation_residual: grid shape mismatch");
    const double h = times[1] - times[0];

    auto deriv = [&](std::span<const double> v, std::size_t k, int i) {
        auto at = [&](std::size_t kk) { return v[kk * n + i]; };
        if (k == 0) return (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * h);
        if (k == N - 1) return (3.0 * at(N - 1) - 4.0 * at(N - 2) + at(N - 3)) / (2.0 * h);
        return (at(k + 1) - at(k - 1)) / (2.0 * h);
    };

    return par::max_over(N, [&](std::size_t k) {
        VarEnv env;
        for (int i = 0; i < n; ++i) env[omega.coords[i]] = x_nodes[k * n + i];
        double r = 0.0;
        for (int i = 0; i < n; ++i) {
            double coef = 0.0;
            for (int j = 0; j < n; ++j)
                coef += omega.coeffs[i].diff(omega.coords[j]).evaluate(env) * y_nodes[k * n + j];
            if (b) coef += (*b)[static_cast<std::size_t>(i)].evaluate(env);
            r += coef * deriv(x_nodes, k, i);
            r += omega.coeffs[i].evaluate(env) * deriv(y_nodes, k, i);
        }
        return std::abs(r);
    });
}

} // namespace nonholo

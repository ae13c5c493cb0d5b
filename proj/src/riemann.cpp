#include "nonholo/riemann.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "nonholo/parallel.hpp"

namespace nonholo {

Metric Metric::diagonal(std::vector<std::string> coords, std::vector<Expr> diag) {
    Metric m;
    const int n = static_cast<int>(coords.size());
    m.coords = std::move(coords);
    m.g.assign(static_cast<std::size_t>(n) * n, Expr(0.0));
    for (int i = 0; i < n; ++i) m.g[static_cast<std::size_t>(i * n + i)] = diag[static_cast<std::size_t>(i)];
    return m;
}

Metric Metric::euclidean(std::vector<std::string> coords) {
    const int n = static_cast<int>(coords.size());
    std::vector<Expr> diag(static_cast<std::size_t>(n), Expr(1.0));
    return diagonal(std::move(coords), std::move(diag));
}

bool metric_spd_probe(const Metric& g, std::span<const double> lo, std::span<const double> hi,
                      int npoints, unsigned seed) {
    const int n = g.dim();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    Eigen::MatrixXd G(n, n);
    for (int s = 0; s < npoints; ++s) {
        VarEnv env;
        for (int i = 0; i < n; ++i)
            env[g.coords[static_cast<std::size_t>(i)]] =
                lo[static_cast<std::size_t>(i)] +
                uni(rng) * (hi[static_cast<std::size_t>(i)] - lo[static_cast<std::size_t>(i)]);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                G(i, j) = g.at(i, j).evaluate(env);
        Eigen::LLT<Eigen::MatrixXd> llt(G);
        if (llt.info() != Eigen::Success) return false;
    }
    return true;
}

namespace {

Expr symbolic_det(const std::vector<Expr>& m, int n) {
    if (n == 1) return m[0];
    if (n == 2) return m[0] * m[3] - m[1] * m[2];
    Expr det(0.0);
    for (int col = 0; col < n; ++col) {
        std::vector<Expr> minor;
        minor.reserve(static_cast<std::size_t>((n - 1) * (n - 1)));
        for (int i = 1; i < n; ++i)
            for (int j = 0; j < n; ++j)
                if (j != col) minor.push_back(m[static_cast<std::size_t>(i * n + j)]);
        Expr term = m[static_cast<std::size_t>(col)] * symbolic_det(minor, n - 1);
        det = (col % 2 == 0) ? det + term : det - term;
    }
    return det;
}

// inverse via adjugate: inv[i*n+j] = cofactor(j,i) / det
std::vector<Expr> symbolic_inverse(const std::vector<Expr>& m, int n) {
    if (n > 6)
        throw DimensionError("symbolic metric inverse: n > 6 not supported");
    Expr det = symbolic_det(m, n);
    std::vector<Expr> inv(static_cast<std::size_t>(n) * n, Expr(0.0));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            std::vector<Expr> minor;
            minor.reserve(static_cast<std::size_t>((n - 1) * (n - 1)));
            for (int r = 0; r < n; ++r) {
                if (r == j) continue;
                for (int c = 0; c < n; ++c)
                    if (c != i) minor.push_back(m[static_cast<std::size_t>(r * n + c)]);
            }
            Expr cof = n == 1 ? Expr(1.0) : symbolic_det(minor, n - 1);
            if ((i + j) % 2 == 1) cof = -cof;
            inv[static_cast<std::size_t>(i * n + j)] = cof / det;
        }
    return inv;
}

} // namespace

Christoffel christoffel(const Metric& g) {
    const int n = g.dim();
    auto ginv = symbolic_inverse(g.g, n);
    Christoffel out;
    out.n = n;
    out.gamma.assign(static_cast<std::size_t>(n) * n * n, Expr(0.0));
    for (int k = 0; k < n; ++k)
        for (int i = 0; i < n; ++i)
            for (int j = i; j < n; ++j) {
                Expr s(0.0);
                for (int l = 0; l < n; ++l) {
                    Expr term = g.at(j, l).diff(g.coords[static_cast<std::size_t>(i)]) +
                                g.at(i, l).diff(g.coords[static_cast<std::size_t>(j)]) -
                                g.at(i, j).diff(g.coords[static_cast<std::size_t>(l)]);
                    s = s + ginv[static_cast<std::size_t>(k * n + l)] * term;
                }
                Expr val = Expr(0.5) * s;
                out.gamma[static_cast<std::size_t>((k * n + i) * n + j)] = val;
                out.gamma[static_cast<std::size_t>((k * n + j) * n + i)] = val;
            }
    return out;
}

namespace {

// ∇_k X^i = ∂_k X^i + Γ^i_{k l} X^l
std::vector<Expr> covariant_jacobian(const VectorField& X, const Metric& g,
                                     const Christoffel& Gamma) {
    const int n = g.dim();
    std::vector<Expr> nab(static_cast<std::size_t>(n) * n, Expr(0.0));   // [k*n + i]
    for (int k = 0; k < n; ++k)
        for (int i = 0; i < n; ++i) {
            Expr v = X.components[static_cast<std::size_t>(i)].diff(g.coords[static_cast<std::size_t>(k)]);
            for (int l = 0; l < n; ++l)
                v = v + Gamma.at(i, k, l) * X.components[static_cast<std::size_t>(l)];
            nab[static_cast<std::size_t>(k * n + i)] = v;
        }
    return nab;
}

} // namespace

GeodesicFieldResidual geodesic_field_residual(const VectorField& X, const Metric& g) {
    const int n = g.dim();
    if (X.dim() != n)
        throw DimensionError("geodesic_field_residual: dimension mismatch");
    Christoffel Gamma = christoffel(g);
    auto nab = covariant_jacobian(X, g, Gamma);

    GeodesicFieldResidual out;
    out.nabla_XX.assign(static_cast<std::size_t>(n), Expr(0.0));
    for (int k = 0; k < n; ++k) {
        Expr v(0.0);
        for (int i = 0; i < n; ++i)
            v = v + X.components[static_cast<std::size_t>(i)] * nab[static_cast<std::size_t>(i * n + k)];
        out.nabla_XX[static_cast<std::size_t>(k)] = v;
    }
    Expr norm2(0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            norm2 = norm2 + g.at(i, j) * X.components[static_cast<std::size_t>(i)] *
                             X.components[static_cast<std::size_t>(j)];
    out.unit_deficit = norm2 - Expr(1.0);
    return out;
}

std::vector<double> GeodesicFieldResidual::eval(const VarEnv& env) const {
    std::vector<double> v;
    v.reserve(nabla_XX.size());
    for (const auto& e : nabla_XX) v.push_back(e.evaluate(env));
    return v;
}

std::vector<Expr> work_criticality_form(const VectorField& X, const Metric& g) {
    const int n = g.dim();
    Christoffel Gamma = christoffel(g);
    auto nab = covariant_jacobian(X, g, Gamma);   // [k*n + i]
    // M[k*n + j] = g_ij ∇_k X^i − g_ik ∇_j X^i
    std::vector<Expr> M(static_cast<std::size_t>(n) * n, Expr(0.0));
    for (int k = 0; k < n; ++k)
        for (int j = 0; j < n; ++j) {
            Expr v(0.0);
            for (int i = 0; i < n; ++i)
                v = v + g.at(i, j) * nab[static_cast<std::size_t>(k * n + i)]
                      - g.at(i, k) * nab[static_cast<std::size_t>(j * n + i)];
            M[static_cast<std::size_t>(k * n + j)] = v;
        }
    return M;
}

namespace {

struct CurveEval {
    std::vector<CompiledExpr> pos, vel;
    int n;

    CurveEval(const Curve& c) : n(static_cast<int>(c.components.size())) {
        if (n > 16)
            throw DimensionError("curves with more than 16 components are not supported");
        std::vector<std::string> t = {"t"};
        for (const auto& e : c.components) {
            pos.emplace_back(e, t);
            vel.emplace_back(e.diff("t"), t);
        }
    }
    void at(double t, double* x, double* xdot) const {
        double tv[1] = {t};
        for (int i = 0; i < n; ++i) {
            x[i] = pos[static_cast<std::size_t>(i)](tv);
            xdot[i] = vel[static_cast<std::size_t>(i)](tv);
        }
    }
};

// composite Simpson with an even number of panels
template <class F>
double simpson(double a, double b, int panels, F&& f) {
    if (panels % 2 == 1) ++panels;
    const double h = (b - a) / panels;
    const std::size_t nodes = static_cast<std::size_t>(panels) + 1;
    double s = par::sum_over(nodes, [&](std::size_t k) {
        double w = (k == 0 || k == nodes - 1) ? 1.0 : (k % 2 == 1 ? 4.0 : 2.0);
        return w * f(a + static_cast<double>(k) * h);
    });
    return s * h / 3.0;
}

} // namespace

double work(const VectorField& X, const Metric& g, const Curve& curve, int panels) {
    const int n = g.dim();
    CurveEval ce(curve);
    if (ce.n != n || X.dim() != n)
        throw DimensionError("work: dimension mismatch");
    if (curve.t1 == curve.t0) return 0.0;
    std::vector<CompiledExpr> cg, cX;
    for (const auto& e : g.g) cg.emplace_back(e, g.coords);
    for (const auto& e : X.components) cX.emplace_back(e, g.coords);

    return simpson(curve.t0, curve.t1, panels, [&](double t) {
        double x[16], xd[16];
        ce.at(t, x, xd);
        std::span<const double> xs(x, static_cast<std::size_t>(n));
        double v = 0.0;
        for (int i = 0; i < n; ++i) {
            double Xi = cX[static_cast<std::size_t>(i)](xs);
            for (int j = 0; j < n; ++j)
                v += cg[static_cast<std::size_t>(i * n + j)](xs) * Xi * xd[j];
        }
        return v;
    });
}

double length(const Metric& g, const Curve& curve, int panels) {
    const int n = g.dim();
    CurveEval ce(curve);
    if (ce.n != n)
        throw DimensionError("length: dimension mismatch");
    if (curve.t1 == curve.t0) return 0.0;
    std::vector<CompiledExpr> cg;
    for (const auto& e : g.g) cg.emplace_back(e, g.coords);

    return simpson(curve.t0, curve.t1, panels, [&](double t) {
        double x[16], xd[16];
        ce.at(t, x, xd);
        std::span<const double> xs(x, static_cast<std::size_t>(n));
        double v = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                v += cg[static_cast<std::size_t>(i * n + j)](xs) * xd[i] * xd[j];
        return std::sqrt(std::max(0.0, v));
    });
}

double work(const VectorField& X, const Metric& g, const Polyline& curve) {
    const int n = g.dim();
    if (curve.n != n || curve.times.size() < 2) return 0.0;
    std::vector<CompiledExpr> cg, cX;
    for (const auto& e : g.g) cg.emplace_back(e, g.coords);
    for (const auto& e : X.components) cX.emplace_back(e, g.coords);

    const std::size_t segs = curve.times.size() - 1;
    return par::sum_over(segs, [&](std::size_t s) {
        std::vector<double> mid(static_cast<std::size_t>(n));
        double v = 0.0;
        for (int i = 0; i < n; ++i)
            mid[static_cast<std::size_t>(i)] = 0.5 * (curve.points[s * n + static_cast<std::size_t>(i)] +
                                                      curve.points[(s + 1) * n + static_cast<std::size_t>(i)]);
        for (int i = 0; i < n; ++i) {
            double dxj = 0.0;
            for (int j = 0; j < n; ++j) {
                dxj = curve.points[(s + 1) * n + static_cast<std::size_t>(j)] -
                      curve.points[s * n + static_cast<std::size_t>(j)];
                v += cg[static_cast<std::size_t>(i * n + j)](mid) * cX[static_cast<std::size_t>(i)](mid) * dxj;
            }
        }
        return v;
    });
}

double length(const Metric& g, const Polyline& curve) {
    const int n = g.dim();
    if (curve.n != n || curve.times.size() < 2) return 0.0;
    std::vector<CompiledExpr> cg;
    for (const auto& e : g.g) cg.emplace_back(e, g.coords);

    const std::size_t segs = curve.times.size() - 1;
    return par::sum_over(segs, [&](std::size_t s) {
        std::vector<double> mid(static_cast<std::size_t>(n)), dx(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            mid[static_cast<std::size_t>(i)] = 0.5 * (curve.points[s * n + static_cast<std::size_t>(i)] +
                                                      curve.points[(s + 1) * n + static_cast<std::size_t>(i)]);
            dx[static_cast<std::size_t>(i)] = curve.points[(s + 1) * n + static_cast<std::size_t>(i)] -
                                              curve.points[s * n + static_cast<std::size_t>(i)];
        }
        double v = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                v += cg[static_cast<std::size_t>(i * n + j)](mid) * dx[static_cast<std::size_t>(i)] *
                     dx[static_cast<std::size_t>(j)];
        return std::sqrt(std::max(0.0, v));
    });
}

double work_criticality_residual(const VectorField& X, const Metric& g,
                                 const Curve& curve, int samples) {
    const int n = g.dim();
    auto M = work_criticality_form(X, g);
    std::vector<CompiledExpr> cM;
    for (const auto& e : M) cM.emplace_back(e, g.coords);
    CurveEval ce(curve);

    double worst = 0.0;
    const double h = (curve.t1 - curve.t0) / (samples - 1);
    double x[16], xd[16];
    for (int s = 0; s < samples; ++s) {
        ce.at(curve.t0 + s * h, x, xd);
        std::span<const double> xs(x, static_cast<std::size_t>(n));
        for (int k = 0; k < n; ++k) {
            double r = 0.0;
            for (int j = 0; j < n; ++j)
                r += cM[static_cast<std::size_t>(k * n + j)](xs) * xd[j];
            worst = std::max(worst, std::abs(r));
        }
    }
    return worst;
}

Polyline field_line(const VectorField& X, std::span<const double> x0,
                    double t0, double t1, int steps) {
    const int n = X.dim();
    std::vector<CompiledExpr> cX;
    for (const auto& e : X.components) cX.emplace_back(e, X.coords);

    Polyline out;
    out.n = n;
    std::vector<double> x(x0.begin(), x0.end());
    const double h = (t1 - t0) / steps;
    auto rhs = [&](const std::vector<double>& xs, std::vector<double>& dx) {
        for (int i = 0; i < n; ++i) dx[static_cast<std::size_t>(i)] = cX[static_cast<std::size_t>(i)](xs);
    };
    std::vector<double> k1(x.size()), k2(x.size()), k3(x.size()), k4(x.size()), tmp(x.size());
    for (int s = 0; s <= steps; ++s) {
        out.times.push_back(t0 + s * h);
        out.points.insert(out.points.end(), x.begin(), x.end());
        if (s == steps) break;
        rhs(x, k1);
        for (std::size_t q = 0; q < x.size(); ++q) tmp[q] = x[q] + 0.5 * h * k1[q];
        rhs(tmp, k2);
        for (std::size_t q = 0; q < x.size(); ++q) tmp[q] = x[q] + 0.5 * h * k2[q];
        rhs(tmp, k3);
        for (std::size_t q = 0; q < x.size(); ++q) tmp[q] = x[q] + h * k3[q];
        rhs(tmp, k4);
        for (std::size_t q = 0; q < x.size(); ++q)
            x[q] += h / 6.0 * (k1[q] + 2.0 * k2[q] + 2.0 * k3[q] + k4[q]);
    }
    return out;
}

} // namespace nonholo

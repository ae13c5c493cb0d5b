#include "nonholo/ocp.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace nonholo {

bool ControlBox::bounded() const {
    for (double v : lower) if (!std::isfinite(v)) return false;
    for (double v : upper) if (!std::isfinite(v)) return false;
    return true;
}

bool ControlBox::is_unit_box() const {
    for (std::size_t a = 0; a < lower.size(); ++a)
        if (lower[a] != -1.0 || upper[a] != 1.0) return false;
    return !lower.empty();
}

double ResidualReport::max() const {
    double m = 0.0;
    for (const auto& [k, v] : entries) m = std::max(m, v);
    return m;
}

double ResidualReport::at(std::string_view key) const {
    auto it = entries.find(key);
    return it == entries.end() ? std::numeric_limits<double>::quiet_NaN() : it->second;
}

namespace {

void check_free_vars(const Expr& e, const std::set<std::string>& allowed,
                     const std::string& where, std::vector<std::string>& out) {
    for (const auto& v : e.free_variables())
        if (!allowed.count(v))
            out.push_back(where + " references undeclared variable '" + v + "'");
}

} // namespace

std::vector<std::string> validate(const OCProblem& p) {
    std::vector<std::string> diags;
    const int n = p.state_dim;
    const int k = static_cast<int>(p.control_names.size());

    if (static_cast<int>(p.state_names.size()) != n)
        diags.push_back("state name count does not match n");
    if (p.time_dim != static_cast<int>(p.time_names.size()))
        diags.push_back("time name count does not match m");

    if (p.box.lower.size() != p.control_names.size() ||
        p.box.upper.size() != p.control_names.size())
        diags.push_back("control box size does not match control count");
    else
        for (int a = 0; a < k; ++a)
            if (p.box.lower[a] > p.box.upper[a])
                diags.push_back("empty control box for control '" + p.control_names[a] + "'");

    std::set<std::string> allowed(p.state_names.begin(), p.state_names.end());
    allowed.insert(p.control_names.begin(), p.control_names.end());
    allowed.insert(p.time_names.begin(), p.time_names.end());

    // dynamics
    if (p.dist.form == Distribution::Form::Kernel) {
        if (!p.dist.pfaff)
            diags.push_back("kernel-form distribution without a Pfaff form");
        else {
            if (p.dist.pfaff->dim() != n)
                diags.push_back("Pfaff form dimension does not match n");
            bool all_zero = true;
            for (const auto& c : p.dist.pfaff->coeffs) {
                if (!c.is_constant(0.0)) all_zero = false;
                check_free_vars(c, allowed, "[dynamics] pfaff", diags);
            }
            if (all_zero) diags.push_back("Pfaff form is identically zero");
        }
    } else {
        if (p.dist.generators.empty())
            diags.push_back("span-form distribution without generators");
        for (const auto& g : p.dist.generators) {
            if (g.dim() != n)
                diags.push_back("generator dimension does not match n");
            for (const auto& c : g.components)
                check_free_vars(c, allowed, "[dynamics] fields", diags);
        }
        if (p.dist.pfaff) {
            double worst = span_pfaff_consistency(p.dist, p.control_names, 100, p.solver.seed);
            if (worst > 1e-10)
                diags.push_back("span generators do not annihilate the tagged Pfaff form (max |a_i X^i_a| = " +
                                std::to_string(worst) + ")");
        }
    }

    // cost
    switch (p.cost.kind) {
        case CostKind::SimpleIntegral:
            if (p.time_dim != 1) diags.push_back("simple_integral cost requires m = 1");
            if (p.cost.integrands.size() != 1) diags.push_back("simple_integral cost needs one integrand");
            break;
        case CostKind::Terminal:
            if (p.time_dim != 1) diags.push_back("terminal cost requires m = 1");
            if (!p.cost.terminal && !p.cost.terminal_index)
                diags.push_back("terminal cost needs g or an index");
            if (p.cost.terminal_index && (*p.cost.terminal_index < 1 || *p.cost.terminal_index > n))
                diags.push_back("terminal cost index out of range");
            break;
        case CostKind::Curvilinear:
            if (p.time_dim < 2) diags.push_back("curvilinear cost requires m >= 2");
            if (static_cast<int>(p.cost.integrands.size()) != p.time_dim)
                diags.push_back("curvilinear cost needs m integrands");
            break;
        case CostKind::MultipleIntegral:
            if (p.time_dim < 2) diags.push_back("multiple_integral cost requires m >= 2");
            if (p.cost.integrands.size() != 1) diags.push_back("multiple_integral cost needs one integrand");
            break;
    }
    for (const auto& L : p.cost.integrands)
        check_free_vars(L, allowed, "[cost]", diags);
    if (p.cost.terminal) {
        std::set<std::string> state_only(p.state_names.begin(), p.state_names.end());
        check_free_vars(*p.cost.terminal, state_only, "[cost] g", diags);
    }

    // boundary
    if (static_cast<int>(p.x0.size()) != n)
        diags.push_back("[boundary] x0 has wrong length");
    if (p.x1 && static_cast<int>(p.x1->size()) != n)
        diags.push_back("[boundary] x1 has wrong length");
    if (p.time_dim == 1) {
        if (p.horizon.size() != 2 || !(p.horizon[0] < p.horizon[1]))
            diags.push_back("[boundary] horizon must be an increasing interval");
    } else {
        if (static_cast<int>(p.horizon.size()) != p.time_dim)
            diags.push_back("[boundary] horizon must give the rectangle corner");
        else
            for (double v : p.horizon)
                if (v < 0.0) diags.push_back("[boundary] rectangle corner must be nonnegative");
    }

    // feedback
    if (p.loop == LoopMode::Closed) {
        if (static_cast<int>(p.feedback.size()) != k)
            diags.push_back("closed-loop feedback needs one expression per control");
        std::set<std::string> state_only(p.state_names.begin(), p.state_names.end());
        for (const auto& e : p.feedback)
            check_free_vars(e, state_only, "[solver] feedback", diags);
    }

    return diags;
}

namespace {

std::string fresh_name(const std::string& base, const std::set<std::string>& taken) {
    if (!taken.count(base)) return base;
    std::string cand = base;
    do { cand = "_" + cand; } while (taken.count(cand));
    return cand;
}

} // namespace

NormalForm canonicalize(const OCProblem& p) {
    if (p.time_dim != 1)
        throw DimensionError("canonicalize: single-time problems only (m = 1)");
    NormalForm nf;
    nf.state_names = p.state_names;
    nf.time_name = p.time_names.empty() ? std::string("t") : p.time_names[0];
    const int n = p.state_dim;

    std::set<std::string> taken(p.state_names.begin(), p.state_names.end());
    taken.insert(p.control_names.begin(), p.control_names.end());
    taken.insert(nf.time_name);

    const double inf = std::numeric_limits<double>::infinity();

    if (p.dist.form == Distribution::Form::Kernel) {
        // Auxiliary controls for every non-pivot velocity direction;
        // the pivot velocity is solved from the constraint a_i dx^i = 0.
        const PfaffForm& a = *p.dist.pfaff;
        const int pivot = kernel_pivot(a);
        nf.pfaff = a;
        std::vector<Expr> aux_vars;
        std::vector<std::string> aux_names;
        int counter = 1;
        for (int j = 0; j < n; ++j) {
            if (j == pivot) continue;
            std::string name = fresh_name("u" + std::to_string(counter++), taken);
            taken.insert(name);
            aux_names.push_back(name);
            aux_vars.push_back(Expr::variable(name));
        }
        nf.num_aux = static_cast<int>(aux_names.size());
        nf.control_names = aux_names;
        nf.control_names.insert(nf.control_names.end(),
                                p.control_names.begin(), p.control_names.end());

        nf.dynamics.assign(n, Expr(0.0));
        Expr pivot_rhs(0.0);
        int idx = 0;
        for (int j = 0; j < n; ++j) {
            if (j == pivot) continue;
            nf.dynamics[j] = aux_vars[idx];
            pivot_rhs = pivot_rhs + a.coeffs[j] * aux_vars[idx];
            ++idx;
        }
        nf.dynamics[pivot] = -(pivot_rhs / a.coeffs[pivot]);

        nf.box.lower.assign(static_cast<std::size_t>(nf.num_aux), -inf);
        nf.box.upper.assign(static_cast<std::size_t>(nf.num_aux), inf);
        nf.box.lower.insert(nf.box.lower.end(), p.box.lower.begin(), p.box.lower.end());
        nf.box.upper.insert(nf.box.upper.end(), p.box.upper.begin(), p.box.upper.end());
    } else {
        nf.control_names = p.control_names;
        nf.box = p.box;
        nf.pfaff = p.dist.pfaff;
        nf.dynamics.assign(n, Expr(0.0));
        for (int a = 0; a < p.dist.num_generators(); ++a) {
            Expr ua = Expr::variable(p.control_names[static_cast<std::size_t>(a)]);
            for (int j = 0; j < n; ++j)
                nf.dynamics[j] = nf.dynamics[j] + ua * p.dist.generators[a].components[j];
        }
    }

    // maximize-canonical cost
    Expr L(0.0);
    if (p.cost.kind == CostKind::SimpleIntegral)
        L = p.cost.integrands[0];
    std::optional<Expr> g = p.cost.terminal;
    if (p.cost.kind == CostKind::Terminal && p.cost.terminal_index)
        g = Expr::variable(p.state_names[static_cast<std::size_t>(*p.cost.terminal_index - 1)]);
    if (p.sense == Sense::Minimize) {
        nf.negated = true;
        L = -L;
        if (g) g = -(*g);
    }
    nf.lagrangian = L;
    nf.terminal = g;
    return nf;
}

} // namespace nonholo

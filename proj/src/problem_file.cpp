#include "nonholo/problem_file.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>

namespace nonholo {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

struct Entry {
    std::string value;
    int line = 0;
};

struct Ini {
    // section -> key -> entry; keys are unique per section
    std::map<std::string, std::map<std::string, Entry>> sections;
    std::map<std::string, int> section_lines;

    bool has(const std::string& sec) const { return sections.count(sec) != 0; }
    bool has(const std::string& sec, const std::string& key) const {
        auto it = sections.find(sec);
        return it != sections.end() && it->second.count(key) != 0;
    }
    const Entry& get(const std::string& sec, const std::string& key) const {
        auto it = sections.find(sec);
        if (it == sections.end())
            throw FileError(0, "missing section [" + sec + "]");
        auto jt = it->second.find(key);
        if (jt == it->second.end())
            throw FileError(section_lines.at(sec), "missing key '" + key + "' in [" + sec + "]");
        return jt->second;
    }
    std::string get_or(const std::string& sec, const std::string& key,
                       const std::string& fallback) const {
        return has(sec, key) ? get(sec, key).value : fallback;
    }
};

Ini parse_ini(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw FileError(0, "cannot open '" + path + "'");
    Ini ini;
    std::string current;
    std::string raw;
    int lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        std::string line = raw;
        // strip comments
        for (char marker : {'#', ';'}) {
            auto pos = line.find(marker);
            if (pos != std::string::npos) line = line.substr(0, pos);
        }
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw FileError(lineno, "malformed section header");
            current = lower(trim(line.substr(1, line.size() - 2)));
            ini.sections[current];
            ini.section_lines.emplace(current, lineno);
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw FileError(lineno, "expected 'key = value'");
        if (current.empty())
            throw FileError(lineno, "key outside any [section]");
        std::string key = lower(trim(line.substr(0, eq)));
        std::string value = trim(line.substr(eq + 1));
        auto [it, inserted] = ini.sections[current].emplace(key, Entry{value, lineno});
        if (!inserted)
            throw FileError(lineno, "duplicate key '" + key + "' in [" + current + "]");
    }
    return ini;
}

double parse_real(const std::string& s, int line, bool allow_free = false) {
    std::string v = lower(trim(s));
    if (v == "inf" || v == "+inf") return std::numeric_limits<double>::infinity();
    if (v == "-inf") return -std::numeric_limits<double>::infinity();
    if (allow_free && (v == "free" || v == "nan"))
        return std::numeric_limits<double>::quiet_NaN();
    try {
        std::size_t used = 0;
        double out = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw FileError(line, "malformed number '" + s + "'");
    }
}

std::vector<double> parse_reals(const std::string& s, int line, bool allow_free = false) {
    std::vector<double> out;
    for (const auto& piece : split_top_level(s))
        out.push_back(parse_real(piece, line, allow_free));
    return out;
}

Expr parse_checked(const std::string& text, const std::vector<std::string>& vars, int line) {
    try {
        return parse_expr(text, vars);
    } catch (const ParseError& e) {
        throw FileError(line, std::string(e.what()) + " in '" + text + "'");
    }
}

std::vector<Expr> parse_expr_list(const std::string& text, const std::vector<std::string>& vars,
                                  int line) {
    std::vector<Expr> out;
    for (const auto& piece : split_top_level(text))
        out.push_back(parse_checked(trim(piece), vars, line));
    return out;
}

} // namespace

std::vector<std::string> split_top_level(const std::string& text, char sep) {
    std::vector<std::string> out;
    int depth = 0;
    std::string cur;
    for (char c : text) {
        if (c == '(') ++depth;
        if (c == ')') --depth;
        if (c == sep && depth == 0) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(trim(cur));
    if (out.size() == 1 && out[0].empty()) out.clear();
    return out;
}

bool is_riemann_file(const std::string& path) {
    Ini ini = parse_ini(path);
    return lower(ini.get_or("meta", "kind", "")) == "riemann";
}

OCProblem load_problem(const std::string& path) {
    Ini ini = parse_ini(path);
    OCProblem p;

    p.name = ini.get_or("meta", "name", "problem");
    p.time_dim = static_cast<int>(parse_real(ini.get_or("meta", "m", "1"), 0));
    p.state_dim = static_cast<int>(parse_real(ini.get("meta", "n").value, ini.get("meta", "n").line));
    std::string sense = lower(ini.get_or("meta", "sense", "maximize"));
    if (sense == "maximize") p.sense = Sense::Maximize;
    else if (sense == "minimize") p.sense = Sense::Minimize;
    else throw FileError(ini.get("meta", "sense").line, "sense must be maximize or minimize");

    if (p.time_dim == 1) p.time_names = {"t"};
    else {
        for (int a = 1; a <= p.time_dim; ++a) p.time_names.push_back("t" + std::to_string(a));
    }

    {
        const Entry& e = ini.get("state", "names");
        p.state_names = split_top_level(e.value);
        if (static_cast<int>(p.state_names.size()) != p.state_dim)
            throw FileError(e.line, "expected " + std::to_string(p.state_dim) + " state names");
    }

    if (ini.has("controls", "names"))
        p.control_names = split_top_level(ini.get("controls", "names").value);
    const int k = static_cast<int>(p.control_names.size());
    {
        auto fill = [&](const char* key, double fallback) {
            std::vector<double> v(static_cast<std::size_t>(k), fallback);
            if (ini.has("controls", key)) {
                const Entry& e = ini.get("controls", key);
                auto vals = parse_reals(e.value, e.line);
                if (vals.size() == 1) v.assign(static_cast<std::size_t>(k), vals[0]);
                else if (static_cast<int>(vals.size()) == k) v = vals;
                else throw FileError(e.line, "bounds must have 1 or k entries");
            }
            return v;
        };
        p.box.lower = fill("lower", -std::numeric_limits<double>::infinity());
        p.box.upper = fill("upper", std::numeric_limits<double>::infinity());
    }

    // expressions may reference time, states and controls
    std::vector<std::string> vars = p.time_names;
    vars.insert(vars.end(), p.state_names.begin(), p.state_names.end());
    vars.insert(vars.end(), p.control_names.begin(), p.control_names.end());

    // dynamics: exactly one of pfaff / field1.. present
    {
        if (!ini.has("dynamics"))
            throw FileError(0, "missing section [dynamics]");
        bool has_pfaff = ini.has("dynamics", "pfaff");
        bool has_fields = ini.has("dynamics", "field1");
        if (has_pfaff && has_fields) {
            int line = ini.get("dynamics", "pfaff").line;
            throw FileError(line, "ambiguous dynamics: both pfaff and fields given");
        }
        if (!has_pfaff && !has_fields) {
            throw FileError(ini.section_lines.at("dynamics"),
                            "[dynamics] needs 'pfaff = ...' or 'field1 = ...'");
        }
        if (has_pfaff) {
            const Entry& e = ini.get("dynamics", "pfaff");
            PfaffForm omega;
            omega.coords = p.state_names;
            omega.coeffs = parse_expr_list(e.value, vars, e.line);
            if (static_cast<int>(omega.coeffs.size()) != p.state_dim)
                throw FileError(e.line, "pfaff needs n coefficients");
            p.dist = Distribution::kernel(std::move(omega));
        } else {
            std::vector<VectorField> gens;
            for (int a = 1;; ++a) {
                std::string key = "field" + std::to_string(a);
                if (!ini.has("dynamics", key)) break;
                const Entry& e = ini.get("dynamics", key);
                VectorField X;
                X.coords = p.state_names;
                X.components = parse_expr_list(e.value, vars, e.line);
                if (static_cast<int>(X.components.size()) != p.state_dim)
                    throw FileError(e.line, key + " needs n components");
                gens.push_back(std::move(X));
            }
            std::optional<PfaffForm> tag;
            if (ini.has("dynamics", "pfaff_tag")) {
                const Entry& e = ini.get("dynamics", "pfaff_tag");
                PfaffForm omega;
                omega.coords = p.state_names;
                omega.coeffs = parse_expr_list(e.value, vars, e.line);
                tag = std::move(omega);
            }
            p.dist = Distribution::span(std::move(gens), std::move(tag));
        }
    }

    // cost
    {
        std::string kind = lower(ini.get_or("cost", "kind", "simple_integral"));
        if (kind == "simple_integral") {
            p.cost.kind = CostKind::SimpleIntegral;
            const Entry& e = ini.get("cost", "l");
            p.cost.integrands = {parse_checked(e.value, vars, e.line)};
        } else if (kind == "curvilinear") {
            p.cost.kind = CostKind::Curvilinear;
            for (int a = 1; a <= p.time_dim; ++a) {
                const Entry& e = ini.get("cost", "l" + std::to_string(a));
                p.cost.integrands.push_back(parse_checked(e.value, vars, e.line));
            }
        } else if (kind == "multiple_integral") {
            p.cost.kind = CostKind::MultipleIntegral;
            const Entry& e = ini.get("cost", "l");
            p.cost.integrands = {parse_checked(e.value, vars, e.line)};
        } else if (kind == "terminal") {
            p.cost.kind = CostKind::Terminal;
            if (ini.has("cost", "index")) {
                const Entry& e = ini.get("cost", "index");
                p.cost.terminal_index = static_cast<int>(parse_real(e.value, e.line));
            }
        } else {
            throw FileError(ini.get("cost", "kind").line, "unknown cost kind '" + kind + "'");
        }
        if (ini.has("cost", "g")) {
            const Entry& e = ini.get("cost", "g");
            p.cost.terminal = parse_checked(e.value, p.state_names, e.line);
        }
    }

    // boundary
    {
        if (!ini.has("boundary"))
            throw FileError(0, "missing section [boundary]");
        if (!ini.has("boundary", "x0"))
            throw FileError(ini.section_lines.at("boundary"), "[boundary] is missing x0");
        const Entry& e0 = ini.get("boundary", "x0");
        p.x0 = parse_reals(e0.value, e0.line, true);
        if (ini.has("boundary", "x1")) {
            const Entry& e1 = ini.get("boundary", "x1");
            p.x1 = parse_reals(e1.value, e1.line, true);
        }
        const Entry& eh = ini.get("boundary", "horizon");
        p.horizon = parse_reals(eh.value, eh.line);
        std::string bk = lower(ini.get_or("boundary", "costate", "target"));
        if (bk == "zero") p.boundary_kind = BoundaryKind::ZeroCostate;
        else if (bk == "target") p.boundary_kind = BoundaryKind::TargetState;
        else throw FileError(ini.get("boundary", "costate").line, "costate must be target or zero");
    }

    // solver
    if (ini.has("solver")) {
        for (const auto& [key, entry] : ini.sections.at("solver")) {
            if (key == "grid") p.solver.grid = static_cast<int>(parse_real(entry.value, entry.line));
            else if (key == "tol") p.solver.tol = parse_real(entry.value, entry.line);
            else if (key == "seed") p.solver.seed = static_cast<unsigned>(parse_real(entry.value, entry.line));
            else if (key == "substeps") p.solver.substeps = static_cast<int>(parse_real(entry.value, entry.line));
            else if (key == "method") p.solver.method = lower(entry.value);
            else if (key == "mode") {
                std::string mode = lower(entry.value);
                if (mode == "open") p.loop = LoopMode::Open;
                else if (mode == "closed") p.loop = LoopMode::Closed;
                else throw FileError(entry.line, "mode must be open or closed");
            } else if (key == "feedback") {
                p.feedback = parse_expr_list(entry.value, p.state_names, entry.line);
            } else {
                p.solver.extras[key] = entry.value;
            }
        }
    }
    return p;
}

RiemannSetup load_riemann(const std::string& path) {
    Ini ini = parse_ini(path);
    RiemannSetup setup;
    setup.name = ini.get_or("meta", "name", "riemann");

    const Entry& e = ini.get("state", "names");
    std::vector<std::string> coords = split_top_level(e.value);
    const int n = static_cast<int>(coords.size());

    setup.metric.coords = coords;
    setup.metric.g.assign(static_cast<std::size_t>(n) * n, Expr(0.0));
    for (int i = 1; i <= n; ++i) {
        const Entry& row = ini.get("metric", "row" + std::to_string(i));
        auto exprs = parse_expr_list(row.value, coords, row.line);
        if (static_cast<int>(exprs.size()) != n)
            throw FileError(row.line, "metric row needs n entries");
        for (int j = 0; j < n; ++j)
            setup.metric.g[static_cast<std::size_t>((i - 1) * n + j)] = exprs[static_cast<std::size_t>(j)];
    }

    if (ini.has("field", "components")) {
        const Entry& f = ini.get("field", "components");
        setup.field.coords = coords;
        setup.field.components = parse_expr_list(f.value, coords, f.line);
        if (static_cast<int>(setup.field.components.size()) != n)
            throw FileError(f.line, "field needs n components");
        setup.has_field = true;
    }
    if (ini.has("curve", "components")) {
        const Entry& c = ini.get("curve", "components");
        std::vector<std::string> tvar = {"t"};
        setup.curve.components = parse_expr_list(c.value, tvar, c.line);
        const Entry& iv = ini.get("curve", "interval");
        auto bounds = parse_reals(iv.value, iv.line);
        if (bounds.size() != 2) throw FileError(iv.line, "interval needs two numbers");
        setup.curve.t0 = bounds[0];
        setup.curve.t1 = bounds[1];
        setup.has_curve = true;
    }
    return setup;
}

} // namespace nonholo

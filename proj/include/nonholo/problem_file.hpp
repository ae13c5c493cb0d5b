#pragma once

#include <string>
#include <vector>

#include "nonholo/ocp.hpp"
#include "nonholo/riemann.hpp"

namespace nonholo {

class FileError : public ExprError {
public:
    FileError(int line, const std::string& what)
        : ExprError("line " + std::to_string(line) + ": " + what), line(line) {}
    int line;
};

// Line-oriented `key = value` sections; '#' and ';' start comments.
// Lists split on top-level commas. "inf"/"-inf" are infinities, "free"
// (or "nan") marks free boundary components.
OCProblem load_problem(const std::string& path);

// Is this file a [meta] kind = riemann setup?
bool is_riemann_file(const std::string& path);

struct RiemannSetup {
    std::string name;
    Metric metric;
    VectorField field;
    Curve curve;
    bool has_field = false;
    bool has_curve = false;
};

RiemannSetup load_riemann(const std::string& path);

std::vector<std::string> split_top_level(const std::string& text, char sep = ',');

} // namespace nonholo

#include "nonholo/emit.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "nonholo/problem_file.hpp"

namespace nonholo {

std::string format_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string csv_trajectory(const Trajectory& traj) {
    std::ostringstream out;
    out << "t";
    for (int i = 1; i <= traj.n; ++i) out << ",x" << i;
    for (int a = 1; a <= traj.k; ++a) out << ",u" << a;
    for (int i = 1; i <= traj.np; ++i) out << ",p" << i;
    const bool has_H = traj.hamiltonian.size() == traj.num_nodes();
    const bool has_Q = traj.switching.size() == traj.num_nodes() * static_cast<std::size_t>(traj.k);
    if (has_H) out << ",H";
    if (has_Q)
        for (int a = 1; a <= traj.k; ++a) out << ",Q" << a;
    out << "\n";
    for (std::size_t node = 0; node < traj.num_nodes(); ++node) {
        out << format_g17(traj.times[node]);
        for (int i = 0; i < traj.n; ++i) out << "," << format_g17(traj.state(node, i));
        for (int a = 0; a < traj.k; ++a) out << "," << format_g17(traj.control(node, a));
        for (int i = 0; i < traj.np; ++i) out << "," << format_g17(traj.costate(node, i));
        if (has_H) out << "," << format_g17(traj.hamiltonian[node]);
        if (has_Q)
            for (int a = 0; a < traj.k; ++a)
                out << "," << format_g17(traj.switching[node * traj.k + static_cast<std::size_t>(a)]);
        out << "\n";
    }
    return out.str();
}

std::string csv_sheet(const Sheet& sheet) {
    std::ostringstream out;
    out << "t1,t2";
    for (int i = 1; i <= sheet.n; ++i) out << ",x" << i;
    for (int a = 1; a <= sheet.k; ++a) out << ",u" << a << "_1";
    for (int a = 1; a <= sheet.k; ++a) out << ",u" << a << "_2";
    out << "\n";
    for (std::size_t i = 0; i < sheet.t1.size(); ++i)
        for (std::size_t j = 0; j < sheet.t2.size(); ++j) {
            out << format_g17(sheet.t1[i]) << "," << format_g17(sheet.t2[j]);
            for (int c = 0; c < sheet.n; ++c) out << "," << format_g17(sheet.state(i, j, c));
            for (int alpha = 0; alpha < 2; ++alpha)
                for (int a = 0; a < sheet.k; ++a)
                    out << "," << format_g17(sheet.control(i, j, alpha, a));
            out << "\n";
        }
    return out.str();
}

Trajectory read_trajectory_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FileError(0, "cannot open '" + path + "'");
    std::string header;
    if (!std::getline(in, header)) throw FileError(1, "empty candidate file");

    auto cols = split_top_level(header);
    if (cols.empty() || cols[0] != "t")
        throw FileError(1, "candidate CSV must start with a 't' column");
    int n = 0, k = 0, np = 0;
    bool has_H = false;
    int nq = 0;
    for (std::size_t c = 1; c < cols.size(); ++c) {
        const std::string& name = cols[c];
        if (name.size() > 1 && name[0] == 'x') ++n;
        else if (name.size() > 1 && name[0] == 'u') ++k;
        else if (name.size() > 1 && name[0] == 'p') ++np;
        else if (name == "H") has_H = true;
        else if (name.size() > 1 && name[0] == 'Q') ++nq;
        else throw FileError(1, "unrecognized column '" + name + "'");
    }

    Trajectory traj;
    traj.n = n;
    traj.k = k;
    traj.np = np;
    std::string line;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto vals = split_top_level(line);
        if (static_cast<int>(vals.size()) != 1 + n + k + np + (has_H ? 1 : 0) + nq)
            throw FileError(lineno, "wrong number of columns");
        std::size_t c = 0;
        auto next = [&]() { return std::stod(vals[c++]); };
        traj.times.push_back(next());
        for (int i = 0; i < n; ++i) traj.states.push_back(next());
        for (int a = 0; a < k; ++a) traj.controls.push_back(next());
        for (int i = 0; i < np; ++i) traj.costates.push_back(next());
        if (has_H) traj.hamiltonian.push_back(next());
        for (int a = 0; a < nq; ++a) traj.switching.push_back(next());
    }
    return traj;
}

std::string json_report(const ResidualReport& report,
                        const std::map<std::string, std::string, std::less<>>& extra) {
    nlohmann::json j;
    for (const auto& [key, value] : report.entries) j["residuals"][key] = value;
    j["max_residual"] = report.max();
    for (const auto& [key, value] : extra) j[key] = value;
    return j.dump(2) + "\n";
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FileError(0, "cannot write '" + path + "'");
    out << content;
}

} // namespace nonholo

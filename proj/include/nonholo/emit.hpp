#pragma once

#include <string>

#include "nonholo/multitime.hpp"
#include "nonholo/ocp.hpp"

namespace nonholo {

// CSV with header row, ',' separator, %.17g round-trip formatting.
// Columns: t, x1..xn, u1..uk, p1..pnp [, H] [, Q1..Qk].
std::string csv_trajectory(const Trajectory& traj);

// Sheet CSV: t1, t2, x1..xn, u1_1..uk_1, u1_2..uk_2 (nodes row-major).
std::string csv_sheet(const Sheet& sheet);

// Header-driven inverse of csv_trajectory; accepts any costate count.
Trajectory read_trajectory_csv(const std::string& path);

// Residual report as a sorted-key JSON object, optionally nested under
// extra scalar fields.
std::string json_report(const ResidualReport& report,
                        const std::map<std::string, std::string, std::less<>>& extra = {});

void write_text_file(const std::string& path, const std::string& content);

std::string format_g17(double v);

} // namespace nonholo

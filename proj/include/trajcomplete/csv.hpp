#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "trajcomplete/data_model.hpp"

namespace traj {

/// Shortest round-trip decimal representation of a double (locale-free).
std::string format_double(double value);

/// Parse a double with '.' decimal separator; throws ParseError on garbage.
double parse_double(const std::string& text, std::size_t line_no);

/// Long-format observation file, header `subject_id,variable,time,value`.
std::vector<ObservationRecord> read_long_csv(const std::string& path);
void write_long_csv(const std::string& path, const std::vector<ObservationRecord>& records);

/// Wide-format curve file: one row per (subject, variable), header
/// `subject_id,variable,<t1>,<t2>,...` with grid times as column names.
struct WideTable {
    std::vector<std::string> subject_ids;
    std::vector<std::string> variables;  // per row
    std::vector<double> times;           // column grid
    Eigen::MatrixXd values;              // rows x times
};

void write_wide_csv(const std::string& path, const WideTable& table);
WideTable read_wide_csv(const std::string& path);

}  // namespace traj

#include "trajcomplete/csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace traj {

std::string format_double(double value) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& text, std::size_t line_no) {
    double value = 0.0;
    const char* begin = text.data();
    const char* end = begin + text.size();
    const auto res = std::from_chars(begin, end, value);
    if (res.ec != std::errc{} || res.ptr != end) {
        std::ostringstream os;
        os << "line " << line_no << ": cannot parse number '" << text << "'";
        throw ParseError(os.str());
    }
    return value;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

std::ifstream open_input(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open file: " + path);
    return in;
}

std::ofstream open_output(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open file for writing: " + path);
    return out;
}

std::string strip_cr(std::string line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
}

}  // namespace

std::vector<ObservationRecord> read_long_csv(const std::string& path) {
    std::ifstream in = open_input(path);
    std::string line;
    std::size_t line_no = 0;

    if (!std::getline(in, line)) throw ParseError("empty file: " + path);
    ++line_no;
    if (strip_cr(line) != "subject_id,variable,time,value") {
        std::ostringstream os;
        os << "line 1: expected header 'subject_id,variable,time,value', got '" << line
           << "'";
        throw ParseError(os.str());
    }

    std::vector<ObservationRecord> records;
    while (std::getline(in, line)) {
        ++line_no;
        line = strip_cr(line);
        if (line.empty()) continue;
        const std::vector<std::string> fields = split_line(line);
        if (fields.size() != 4) {
            std::ostringstream os;
            os << "line " << line_no << ": expected 4 fields, got " << fields.size();
            throw ParseError(os.str());
        }
        ObservationRecord r;
        r.subject_id = fields[0];
        r.variable = fields[1];
        r.time = parse_double(fields[2], line_no);
        r.value = parse_double(fields[3], line_no);
        records.push_back(std::move(r));
    }
    return records;
}

void write_long_csv(const std::string& path, const std::vector<ObservationRecord>& records) {
    std::ofstream out = open_output(path);
    out << "subject_id,variable,time,value\n";
    for (const ObservationRecord& r : records)
        out << r.subject_id << ',' << r.variable << ',' << format_double(r.time) << ','
            << format_double(r.value) << '\n';
}

void write_wide_csv(const std::string& path, const WideTable& table) {
    if (table.subject_ids.size() != static_cast<std::size_t>(table.values.rows()) ||
        table.variables.size() != table.subject_ids.size() ||
        table.times.size() != static_cast<std::size_t>(table.values.cols()))
        throw DimensionError("wide table fields are inconsistent");

    std::ofstream out = open_output(path);
    out << "subject_id,variable";
    for (const double t : table.times) out << ',' << format_double(t);
    out << '\n';
    for (Eigen::Index i = 0; i < table.values.rows(); ++i) {
        out << table.subject_ids[static_cast<std::size_t>(i)] << ','
            << table.variables[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < table.values.cols(); ++j)
            out << ',' << format_double(table.values(i, j));
        out << '\n';
    }
}

WideTable read_wide_csv(const std::string& path) {
    std::ifstream in = open_input(path);
    std::string line;
    std::size_t line_no = 0;

    if (!std::getline(in, line)) throw ParseError("empty file: " + path);
    ++line_no;
    const std::vector<std::string> header = split_line(strip_cr(line));
    if (header.size() < 3 || header[0] != "subject_id" || header[1] != "variable")
        throw ParseError("line 1: expected header 'subject_id,variable,<times...>'");

    WideTable table;
    for (std::size_t j = 2; j < header.size(); ++j)
        table.times.push_back(parse_double(header[j], 1));

    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        ++line_no;
        line = strip_cr(line);
        if (line.empty()) continue;
        const std::vector<std::string> fields = split_line(line);
        if (fields.size() != header.size()) {
            std::ostringstream os;
            os << "line " << line_no << ": expected " << header.size() << " fields, got "
               << fields.size();
            throw ParseError(os.str());
        }
        table.subject_ids.push_back(fields[0]);
        table.variables.push_back(fields[1]);
        std::vector<double> row;
        row.reserve(table.times.size());
        for (std::size_t j = 2; j < fields.size(); ++j)
            row.push_back(parse_double(fields[j], line_no));
        rows.push_back(std::move(row));
    }

    table.values.resize(static_cast<Eigen::Index>(rows.size()),
                        static_cast<Eigen::Index>(table.times.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            table.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                rows[i][j];
    return table;
}

}  // namespace traj

#pragma once

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dagsynth/tensor.hpp"

namespace dagsynth {

// Column-major string table. Typing happens later via ColumnMeta.
struct Table {
    std::vector<std::string> names;
    std::vector<std::vector<std::string>> columns;

    std::size_t n_rows() const { return columns.empty() ? 0 : columns[0].size(); }
    std::size_t n_cols() const { return names.size(); }

    std::size_t col_index(const std::string& name) const {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == name) return i;
        throw ValidationError("no such column: " + name);
    }

    void add_row(const std::vector<std::string>& row) {
        if (row.size() != names.size())
            throw ValidationError("row has " + std::to_string(row.size()) + " cells, expected " +
                                  std::to_string(names.size()));
        for (std::size_t i = 0; i < row.size(); ++i) columns[i].push_back(row[i]);
    }
};

inline bool parse_double(const std::string& s, double& out) {
    const char* b = s.data();
    const char* e = s.data() + s.size();
    while (b < e && (*b == ' ' || *b == '\t')) ++b;
    while (e > b && (*(e - 1) == ' ' || *(e - 1) == '\t')) --e;
    if (b == e) return false;
    auto [ptr, ec] = std::from_chars(b, e, out);
    return ec == std::errc() && ptr == e && std::isfinite(out);
}

namespace detail {

// One CSV record, honoring quoted fields with doubled quotes. Returns false
// on EOF with no data.
inline bool read_record(std::istream& in, std::vector<std::string>& out) {
    out.clear();
    std::string field;
    bool in_quotes = false, any = false;
    int ch;
    while ((ch = in.get()) != EOF) {
        any = true;
        char c = static_cast<char>(ch);
        if (in_quotes) {
            if (c == '"') {
                if (in.peek() == '"') { field.push_back('"'); in.get(); }
                else in_quotes = false;
            } else field.push_back(c);
            continue;
        }
        if (c == '"') { in_quotes = true; continue; }
        if (c == ',') { out.push_back(field); field.clear(); continue; }
        if (c == '\r') continue;
        if (c == '\n') { out.push_back(field); return true; }
        field.push_back(c);
    }
    if (in_quotes) throw ValidationError("CSV: unterminated quoted field");
    if (!any) return false;
    out.push_back(field);
    return true;
}

inline std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out += "\"";
    return out;
}

}  // namespace detail

// Comma-separated, header row required, '.' decimal separator, UTF-8 passed
// through untouched.
inline Table read_csv(std::istream& in) {
    Table t;
    std::vector<std::string> rec;
    if (!detail::read_record(in, rec) || rec.empty())
        throw ValidationError("CSV: missing header row");
    t.names = rec;
    t.columns.resize(rec.size());
    std::size_t line = 1;
    while (detail::read_record(in, rec)) {
        ++line;
        if (rec.size() == 1 && rec[0].empty()) continue;  // trailing blank line
        if (rec.size() != t.names.size())
            throw ValidationError("CSV: row " + std::to_string(line) + " has " +
                                  std::to_string(rec.size()) + " cells, expected " +
                                  std::to_string(t.names.size()));
        for (std::size_t i = 0; i < rec.size(); ++i) t.columns[i].push_back(rec[i]);
    }
    return t;
}

inline Table read_csv_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open CSV file: " + path);
    return read_csv(in);
}

inline void write_csv(const Table& t, std::ostream& out) {
    for (std::size_t i = 0; i < t.names.size(); ++i) {
        if (i) out << ',';
        out << detail::csv_escape(t.names[i]);
    }
    out << '\n';
    for (std::size_t r = 0; r < t.n_rows(); ++r) {
        for (std::size_t i = 0; i < t.columns.size(); ++i) {
            if (i) out << ',';
            out << detail::csv_escape(t.columns[i][r]);
        }
        out << '\n';
    }
}

inline void write_csv_file(const Table& t, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write CSV file: " + path);
    write_csv(t, out);
}

inline std::vector<double> numeric_column(const Table& t, std::size_t col) {
    std::vector<double> out;
    out.reserve(t.n_rows());
    for (std::size_t r = 0; r < t.columns[col].size(); ++r) {
        double v;
        if (!parse_double(t.columns[col][r], v))
            throw ValidationError("column " + t.names[col] + " row " + std::to_string(r + 1) +
                                  ": not a finite number: '" + t.columns[col][r] + "'");
        out.push_back(v);
    }
    return out;
}

}  // namespace dagsynth

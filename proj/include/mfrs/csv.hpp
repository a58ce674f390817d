#pragma once

// CSV reading/writing for multichannel series.
//
// Layout rules:
//  - A header row is assumed iff any cell of the first row fails to parse as
//    a number. Header cells become channel names.
//  - A leading timestamp column is assumed iff the first data row's first
//    cell fails to parse while a later cell in that row parses. Timestamps
//    are kept verbatim as strings.
//  - Every remaining cell must parse as a finite number; failures report the
//    1-based file row and column.

#include "mfrs/series.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace mfrs {

namespace detail {

inline bool try_parse_double(std::string_view cell, double& out) {
    // Trim ASCII whitespace on both sides.
    size_t b = 0, e = cell.size();
    while (b < e && (cell[b] == ' ' || cell[b] == '\t')) ++b;
    while (e > b && (cell[e - 1] == ' ' || cell[e - 1] == '\t' || cell[e - 1] == '\r')) --e;
    if (b == e) return false;
    const char* first = cell.data() + b;
    const char* last = cell.data() + e;
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            cells.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    cells.push_back(cur);
    return cells;
}

inline std::string shortest_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

}  // namespace detail

inline MultiSeries read_csv(std::istream& in) {
    std::vector<std::vector<std::string>> rows;
    std::vector<size_t> file_lines;  // 1-based physical line per kept row
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        bool blank = true;
        for (char ch : line)
            if (ch != ' ' && ch != '\t' && ch != '\r') { blank = false; break; }
        if (blank) continue;
        rows.push_back(detail::split_csv_line(line));
        file_lines.push_back(lineno);
    }
    if (rows.empty()) throw std::invalid_argument("csv: no data rows");

    const size_t width = rows[0].size();
    for (size_t r = 1; r < rows.size(); ++r)
        if (rows[r].size() != width)
            throw std::invalid_argument("csv: row " + std::to_string(file_lines[r]) + " has " +
                                        std::to_string(rows[r].size()) + " cells, expected " + std::to_string(width));

    // Shape detection from the first row:
    //  - every cell numeric            -> data row, no header, no timestamps
    //  - only the first cell textual   -> data row with a timestamp column
    //  - otherwise                     -> header row; re-check the next row
    //    for a timestamp column.
    double tmp;
    auto numeric_from = [&](const std::vector<std::string>& row, size_t c0) {
        for (size_t c = c0; c < row.size(); ++c)
            if (!detail::try_parse_double(row[c], tmp)) return false;
        return true;
    };

    bool has_header = false;
    bool has_timestamp = false;
    if (numeric_from(rows[0], 0)) {
        // headerless, no timestamp column
    } else if (width > 1 && numeric_from(rows[0], 1)) {
        has_timestamp = true;
    } else {
        has_header = true;
    }

    const size_t first_data = has_header ? 1 : 0;
    if (first_data >= rows.size()) throw std::invalid_argument("csv: header present but no data rows");

    if (has_header) {
        const auto& row = rows[first_data];
        if (!detail::try_parse_double(row[0], tmp)) {
            bool later_numeric = false;
            for (size_t c = 1; c < row.size(); ++c)
                if (detail::try_parse_double(row[c], tmp)) { later_numeric = true; break; }
            if (!later_numeric)
                throw std::invalid_argument("csv: row " + std::to_string(file_lines[first_data]) +
                                            " has no numeric cells");
            has_timestamp = true;
        }
    }

    const size_t value_offset = has_timestamp ? 1 : 0;
    if (width <= value_offset) throw std::invalid_argument("csv: no value columns");
    const size_t n_channels = width - value_offset;
    const size_t n_rows = rows.size() - first_data;

    MultiSeries s;
    s.values.resize(static_cast<Index>(n_rows), static_cast<Index>(n_channels));
    if (has_timestamp) s.timestamps.reserve(n_rows);
    for (size_t r = 0; r < n_rows; ++r) {
        const auto& row = rows[first_data + r];
        if (has_timestamp) s.timestamps.push_back(row[0]);
        for (size_t c = 0; c < n_channels; ++c) {
            double v;
            if (!detail::try_parse_double(row[value_offset + c], v))
                throw std::invalid_argument("csv: cannot parse cell at row " + std::to_string(file_lines[first_data + r]) +
                                            ", column " + std::to_string(value_offset + c + 1) + ": '" +
                                            row[value_offset + c] + "'");
            if (!std::isfinite(v))
                throw std::invalid_argument("csv: non-finite value at row " + std::to_string(file_lines[first_data + r]) +
                                            ", column " + std::to_string(value_offset + c + 1));
            s.values(static_cast<Index>(r), static_cast<Index>(c)) = v;
        }
    }
    if (has_header) {
        s.channel_names.assign(rows[0].begin() + static_cast<std::ptrdiff_t>(value_offset), rows[0].end());
    }
    validate_series(s);
    return s;
}

inline MultiSeries read_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open csv file: " + path);
    try {
        return read_csv(in);
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(path + ": " + e.what());
    }
}

inline void write_csv(std::ostream& out, const MultiSeries& s, bool include_timestamps = true) {
    const bool ts = include_timestamps && !s.timestamps.empty();
    if (!s.channel_names.empty()) {
        if (ts) out << "timestamp,";
        for (Index c = 0; c < s.channels(); ++c) {
            if (c) out << ',';
            out << s.channel_names[static_cast<size_t>(c)];
        }
        out << '\n';
    }
    for (Index r = 0; r < s.length(); ++r) {
        if (ts) out << s.timestamps[static_cast<size_t>(r)] << ',';
        for (Index c = 0; c < s.channels(); ++c) {
            if (c) out << ',';
            out << detail::shortest_double(s.values(r, c));
        }
        out << '\n';
    }
}

inline void write_csv_file(const std::string& path, const MultiSeries& s, bool include_timestamps = true) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open csv file for writing: " + path);
    write_csv(out, s, include_timestamps);
    if (!out) throw std::runtime_error("failed writing csv file: " + path);
}

}  // namespace mfrs

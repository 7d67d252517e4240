#pragma once

// CSV ingestion: one observation per row, m numeric columns, optional
// header line. '.' is the decimal separator; blank lines are skipped.
// Errors name the 1-based file line and column.

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <vector>

#include "phidiv/errors.hpp"
#include "phidiv/moment_model.hpp"

namespace phidiv {

namespace detail {

inline std::string trim(const std::string& s) {
    const char* ws = " \t\r\n";
    auto b = s.find_first_not_of(ws);
    if (b == std::string::npos) return {};
    auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

} // namespace detail

inline weighted_sample read_csv(std::istream& in, bool has_header, char delimiter = ',') {
    std::vector<std::vector<double>> rows;
    std::string line;
    int line_no = 0;
    bool header_pending = has_header;
    std::size_t width = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        if (header_pending) {
            header_pending = false;
            continue;
        }
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        int col = 0;
        while (std::getline(ss, cell, delimiter)) {
            ++col;
            std::string t = detail::trim(cell);
            double v = 0.0;
            const char* first = t.data();
            if (!t.empty() && t[0] == '+') ++first;
            auto res = std::from_chars(first, t.data() + t.size(), v);
            if (t.empty() || res.ec != std::errc{} || res.ptr != t.data() + t.size() || !std::isfinite(v))
                throw parse_error("row " + std::to_string(line_no) + ", column " + std::to_string(col) +
                                  ": '" + t + "' is not a number");
            row.push_back(v);
        }
        if (!line.empty() && line.back() == delimiter)
            throw parse_error("row " + std::to_string(line_no) + ", column " + std::to_string(col + 1) +
                              ": empty cell");
        if (width == 0) width = row.size();
        if (row.size() != width)
            throw parse_error("row " + std::to_string(line_no) + ": expected " + std::to_string(width) +
                              " columns, found " + std::to_string(row.size()));
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw parse_error("no observations in CSV input");
    mat points(static_cast<Eigen::Index>(width), static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < width; ++j)
            points(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = rows[i][j];
    return weighted_sample(std::move(points));
}

inline weighted_sample read_csv(const std::string& path, bool has_header, char delimiter = ',') {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open '" + path + "'");
    return read_csv(in, has_header, delimiter);
}

} // namespace phidiv

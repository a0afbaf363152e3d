#ifndef DLCFLEX_CSV_HPP
#define DLCFLEX_CSV_HPP

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace dlcflex {

// Fixed formatting so run logs diff cleanly and repeat runs are byte-identical.
inline std::string format_double(double v, int precision = 6) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
    // normalize "-0.000000" to "0.000000"
    std::string s(buf);
    bool all_zero = true;
    for (char c : s) {
        if (c >= '1' && c <= '9') { all_zero = false; break; }
    }
    if (all_zero && !s.empty() && s[0] == '-') s.erase(s.begin());
    return s;
}

// Reads a single-series CSV with header "step,value". Steps must be 0..n-1 in order.
inline std::vector<double> read_series_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open series file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty series file: " + path);
    // tolerate trailing \r from CRLF files
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "step,value")
        throw std::runtime_error("bad series header in " + path + " (expected 'step,value', got '" + line + "')");
    std::vector<double> values;
    long expect = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto comma = line.find(',');
        if (comma == std::string::npos)
            throw std::runtime_error("bad series row in " + path + ": '" + line + "'");
        long step = std::stol(line.substr(0, comma));
        double value = std::stod(line.substr(comma + 1));
        if (step != expect)
            throw std::runtime_error("non-contiguous step " + std::to_string(step) + " in " + path);
        values.push_back(value);
        ++expect;
    }
    return values;
}

inline void write_series_csv(const std::string& path, const std::vector<double>& values, int precision = 6) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write series file: " + path);
    out << "step,value\n";
    for (size_t i = 0; i < values.size(); ++i)
        out << i << ',' << format_double(values[i], precision) << '\n';
}

// Minimal generic CSV table reader: first line is the header, cells are split on ','.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const {
        for (size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        throw std::runtime_error("csv column not found: " + name);
    }
};

inline CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open csv file: " + path);
    CsvTable table;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (!line.empty() && line.back() == ',') cells.push_back("");
        if (first) {
            table.header = std::move(cells);
            first = false;
        } else {
            table.rows.push_back(std::move(cells));
        }
    }
    return table;
}

}  // namespace dlcflex

#endif

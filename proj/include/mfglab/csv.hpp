#pragma once

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <string>
#include <vector>

#include "mfglab/grid.hpp"

namespace mfglab {

/// CSV emission. Values are printed with "%.17g" so files round-trip doubles
/// bit-exactly and reruns diff clean.

inline std::string format_double(double x) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::vector<std::string>& columns)
        : out_(path), n_cols_(columns.size()) {
        if (!out_)
            throw NumericError("CsvWriter: cannot open '" + path + "' for writing");
        for (std::size_t i = 0; i < columns.size(); ++i) {
            if (i) out_ << ',';
            out_ << columns[i];
        }
        out_ << '\n';
    }

    void row(const std::vector<double>& values) {
        if (values.size() != n_cols_)
            throw ContractError("CsvWriter: row width does not match header");
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (i) out_ << ',';
            out_ << format_double(values[i]);
        }
        out_ << '\n';
    }

    /// Mixed row for tables with a leading label column.
    void row(const std::string& label, const std::vector<double>& values) {
        if (values.size() + 1 != n_cols_)
            throw ContractError("CsvWriter: row width does not match header");
        out_ << label;
        for (double v : values) out_ << ',' << format_double(v);
        out_ << '\n';
    }

private:
    std::ofstream out_;
    std::size_t n_cols_;
};

/// Reads a field written by write_field_csv back onto the given grid. Only
/// the trailing value column is consumed; rows must appear in grid index
/// order and match the grid size exactly.
inline ScalarField read_field_csv(const std::string& path, const PeriodicGrid& grid) {
    std::ifstream in(path);
    if (!in) throw ConfigError("read_field_csv: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("read_field_csv: '" + path + "' is empty");
    ScalarField f(grid);
    std::size_t count = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const std::size_t comma = line.rfind(',');
        const std::string cell = comma == std::string::npos ? line : line.substr(comma + 1);
        char* end = nullptr;
        const double value = std::strtod(cell.c_str(), &end);
        if (end == cell.c_str())
            throw ConfigError("read_field_csv: bad value in '" + path + "' line " +
                              std::to_string(count + 2));
        if (count >= f.size())
            throw ConfigError("read_field_csv: '" + path + "' has more rows than grid cells");
        f.v[count++] = value;
    }
    if (count != f.size())
        throw ConfigError("read_field_csv: '" + path + "' has " + std::to_string(count) +
                          " rows, grid needs " + std::to_string(f.size()));
    return f;
}

/// Writes a field as x,value rows (1D) or x,y,value rows (2D), cells in grid
/// index order.
inline void write_field_csv(const std::string& path, const ScalarField& f) {
    const auto& gr = f.grid;
    CsvWriter w(path, gr.dim == 1 ? std::vector<std::string>{"x", "value"}
                                  : std::vector<std::string>{"x", "y", "value"});
    for (std::size_t i = 0; i < f.size(); ++i) {
        const auto p = gr.point(i);
        if (gr.dim == 1)
            w.row({p[0], f.v[i]});
        else
            w.row({p[0], p[1], f.v[i]});
    }
}

} // namespace mfglab

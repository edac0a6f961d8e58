#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "sfwm/errors.hpp"

namespace sfwm::io {

/// Shortest round-trip decimal form of a double.
inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

/// Writes via a temporary file and rename so readers never observe a
/// partially written artifact.
inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw NumericalError("cannot write '" + tmp.string() + "'");
        out << content;
    }
    std::filesystem::rename(tmp, path);
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
    atomic_write(path, j.dump(2) + "\n");
}

/// Column-oriented CSV with one header row.
inline void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
                      const std::vector<std::vector<double>>& columns) {
    std::string out;
    for (std::size_t c = 0; c < header.size(); ++c) {
        out += header[c];
        out += (c + 1 < header.size()) ? ',' : '\n';
    }
    const std::size_t rows = columns.empty() ? 0 : columns.front().size();
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < columns.size(); ++c) {
            out += format_double(columns[c][r]);
            out += (c + 1 < columns.size()) ? ',' : '\n';
        }
    }
    atomic_write(path, out);
}

/// Matrix CSV with axis values as header row/column; top-left corner is 0.
inline void write_matrix_csv(const std::filesystem::path& path, const std::vector<double>& row_axis,
                             const std::vector<double>& col_axis, const Eigen::MatrixXd& m) {
    std::string out = "0";
    for (double v : col_axis) {
        out += ',';
        out += format_double(v);
    }
    out += '\n';
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        out += format_double(row_axis[static_cast<std::size_t>(r)]);
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            out += ',';
            out += format_double(m(r, c));
        }
        out += '\n';
    }
    atomic_write(path, out);
}

}  // namespace sfwm::io

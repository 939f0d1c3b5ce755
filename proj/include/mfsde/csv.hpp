#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "mfsde/errors.hpp"
#include "mfsde/grid.hpp"

namespace mfsde {

inline constexpr const char* kVersion = "0.1.0";

/// Scientific notation with 17 significant digits: values round-trip
/// bit-faithfully, so identical runs produce byte-identical files.
inline std::string csv_num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.16e", v);
    return buf;
}

class CsvWriter {
public:
    CsvWriter(const std::string& path, std::uint64_t seed, const std::string& scenario)
        : out_(path) {
        if (!out_) throw config_error("cannot open output file '" + path + "'");
        out_ << "# mfsde " << kVersion << " seed=" << seed << " scenario=" << scenario << "\n";
    }

    void comment(const std::string& text) { out_ << "# " << text << "\n"; }

    void row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i > 0) out_ << ',';
            out_ << cells[i];
        }
        out_ << '\n';
    }

    std::ostream& raw() { return out_; }

private:
    std::ofstream out_;
};

/// DensityPath as CSV: header "s,x0,x1,...", one row per time node.
inline void write_density_path(const std::string& path, const DensityPath& dp,
                               std::uint64_t seed, const std::string& scenario,
                               int every = 1) {
    CsvWriter w(path, seed, scenario);
    auto& os = w.raw();
    os << "s";
    for (int i = 0; i < dp.grid().n_points(); ++i) os << ",x" << i;
    os << '\n';
    for (int j = 0; j <= dp.n_steps(); ++j) {
        if (j % every != 0 && j != dp.n_steps()) continue;
        os << csv_num(dp.time(j));
        const GridFunction& u = dp.slice(j);
        for (int i = 0; i < u.size(); ++i) os << ',' << csv_num(u[i]);
        os << '\n';
    }
}

inline void write_grid_function(const std::string& path, const GridFunction& u,
                                std::uint64_t seed, const std::string& scenario,
                                const std::string& value_label = "value") {
    CsvWriter w(path, seed, scenario);
    w.row({"x", value_label});
    for (int i = 0; i < u.size(); ++i) w.row({csv_num(u.grid().node(i)), csv_num(u[i])});
}

} // namespace mfsde

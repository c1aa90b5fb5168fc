#pragma once
// Minimal CSV table reader and deterministic SVG line plots for the command-line tool.

#include <istream>
#include <string>
#include <vector>

namespace viscobeam::cli {

struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;

    /// Index of a column; ConfigError if absent.
    std::size_t column(const std::string& name) const;
    std::vector<double> values(const std::string& name) const;
};

/// Reads a numeric CSV with one header row. Lines starting with '#' are skipped;
/// non-numeric cells read as NaN.
Table read_csv(std::istream& in);
Table read_csv_file(const std::string& path);

struct PlotSpec {
    std::string x;
    std::vector<std::string> y;  // one polyline per column
    bool loglog = false;         // log axes; each series is annotated with its fitted slope
    std::string title;
    std::string header;          // text placed in a leading XML comment
};

/// 800x600 SVG with a fixed viewBox and no timestamps. ConfigError on an empty table
/// or a missing column.
std::string render_svg(const Table& table, const PlotSpec& spec);

/// Renders `csv_path` to `svg_path`; nothing is written when rendering fails.
void render_svg_file(const std::string& csv_path, const PlotSpec& spec, const std::string& svg_path);

}  // namespace viscobeam::cli

#include "svg.hpp"

#include <viscobeam/common.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace viscobeam::cli {

namespace {

constexpr double width = 800, height = 600;
constexpr double left = 80, right = 180, top = 50, bottom = 60;
const char* const palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        const auto a = cell.find_first_not_of(" \t\r");
        const auto b = cell.find_last_not_of(" \t\r");
        out.push_back(a == std::string::npos ? "" : cell.substr(a, b - a + 1));
    }
    return out;
}

// Fixed-precision formatting keeps the output byte-stable.
std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string label(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char ch : s) {
        switch (ch) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            case '-':
                // "--" may not appear inside an XML comment; harmless elsewhere
                out += (!out.empty() && out.back() == '-') ? " -" : "-";
                break;
            default: out += ch;
        }
    }
    return out;
}

}  // namespace

std::size_t Table::column(const std::string& name) const {
    const auto it = std::find(columns.begin(), columns.end(), name);
    if (it == columns.end()) throw ConfigError("table has no column '" + name + "'");
    return static_cast<std::size_t>(it - columns.begin());
}

std::vector<double> Table::values(const std::string& name) const {
    const std::size_t j = column(name);
    std::vector<double> v;
    v.reserve(rows.size());
    for (const auto& r : rows) v.push_back(j < r.size() ? r[j] : std::numeric_limits<double>::quiet_NaN());
    return v;
}

Table read_csv(std::istream& in) {
    Table t;
    std::string line;
    bool have_header = false;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        auto cells = split(line);
        if (!have_header) {
            t.columns = std::move(cells);
            have_header = true;
            continue;
        }
        std::vector<double> row;
        for (const auto& c : cells) {
            char* end = nullptr;
            const double v = std::strtod(c.c_str(), &end);
            row.push_back(end != c.c_str() && *end == '\0' ? v : std::numeric_limits<double>::quiet_NaN());
        }
        t.rows.push_back(std::move(row));
    }
    if (!have_header) throw ConfigError("CSV input has no header row");
    return t;
}

Table read_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path);
    return read_csv(in);
}

std::string render_svg(const Table& table, const PlotSpec& spec) {
    if (table.rows.empty()) throw ConfigError("render_svg: empty table");
    if (spec.y.empty()) throw ConfigError("render_svg: no y column given");
    const auto xs_raw = table.values(spec.x);
    std::vector<std::vector<double>> ys_raw;
    for (const auto& name : spec.y) ys_raw.push_back(table.values(name));

    auto tr = [&](double v) { return spec.loglog ? (v > 0 ? std::log10(v) : std::numeric_limits<double>::quiet_NaN()) : v; };
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (std::size_t i = 0; i < xs_raw.size(); ++i) {
        const double x = tr(xs_raw[i]);
        for (const auto& ys : ys_raw) {
            const double y = tr(ys[i]);
            if (!std::isfinite(x) || !std::isfinite(y)) continue;
            xmin = std::min(xmin, x);
            xmax = std::max(xmax, x);
            ymin = std::min(ymin, y);
            ymax = std::max(ymax, y);
        }
    }
    if (xmin > xmax) throw ConfigError("render_svg: no finite points to plot");
    if (xmax - xmin < 1e-12) {
        xmin -= 0.5;
        xmax += 0.5;
    }
    if (ymax - ymin < 1e-12) {
        ymin -= 0.5;
        ymax += 0.5;
    }
    const double pw = width - left - right, ph = height - top - bottom;
    auto px = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
    auto py = [&](double y) { return top + (ymax - y) / (ymax - ymin) * ph; };

    std::ostringstream os;
    if (!spec.header.empty()) os << "<!-- " << escape(spec.header) << " -->\n";
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"600\" viewBox=\"0 0 800 600\">\n";
    os << "<rect x=\"0\" y=\"0\" width=\"800\" height=\"600\" fill=\"white\"/>\n";
    os << "<rect x=\"" << num(left) << "\" y=\"" << num(top) << "\" width=\"" << num(pw) << "\" height=\"" << num(ph)
       << "\" fill=\"none\" stroke=\"black\"/>\n";
    if (!spec.title.empty())
        os << "<text x=\"400\" y=\"30\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">"
           << escape(spec.title) << "</text>\n";
    const std::string pre = spec.loglog ? "log10 " : "";
    for (int i = 0; i <= 4; ++i) {
        const double fx = xmin + (xmax - xmin) * i / 4, fy = ymin + (ymax - ymin) * i / 4;
        os << "<text x=\"" << num(px(fx)) << "\" y=\"" << num(top + ph + 20)
           << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << label(fx) << "</text>\n";
        os << "<text x=\"" << num(left - 8) << "\" y=\"" << num(py(fy) + 4)
           << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << label(fy) << "</text>\n";
    }
    os << "<text x=\"" << num(left + pw / 2) << "\" y=\"" << num(height - 15)
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" << escape(pre + spec.x) << "</text>\n";

    for (std::size_t s = 0; s < ys_raw.size(); ++s) {
        const char* colour = palette[s % 6];
        std::vector<double> fx, fy;
        os << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"";
        bool first = true;
        for (std::size_t i = 0; i < xs_raw.size(); ++i) {
            const double x = tr(xs_raw[i]), y = tr(ys_raw[s][i]);
            if (!std::isfinite(x) || !std::isfinite(y)) continue;
            os << (first ? "" : " ") << num(px(x)) << ',' << num(py(y));
            first = false;
            fx.push_back(xs_raw[i]);
            fy.push_back(ys_raw[s][i]);
        }
        os << "\"/>\n";
        std::string legend = spec.y[s];
        if (spec.loglog && fx.size() >= 2) legend += " slope " + label(loglog_slope(fx, fy));
        const double ly = top + 20 + 20.0 * s;
        os << "<line x1=\"" << num(width - right + 10) << "\" y1=\"" << num(ly - 4) << "\" x2=\""
           << num(width - right + 30) << "\" y2=\"" << num(ly - 4) << "\" stroke=\"" << colour << "\" stroke-width=\"2\"/>\n";
        os << "<text x=\"" << num(width - right + 35) << "\" y=\"" << num(ly)
           << "\" font-family=\"sans-serif\" font-size=\"11\">" << escape(legend) << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

void render_svg_file(const std::string& csv_path, const PlotSpec& spec, const std::string& svg_path) {
    const std::string svg = render_svg(read_csv_file(csv_path), spec);
    std::ofstream out(svg_path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + svg_path);
    out << svg;
}

}  // namespace viscobeam::cli

#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "distfit/covariate.hpp"
#include "distfit/error.hpp"
#include "distfit/geometry.hpp"
#include "distfit/likelihood.hpp"

namespace distfit {

namespace io {

inline std::string trim(std::string_view s);

/// Splits one CSV record. Double quotes delimit fields that contain commas;
/// a doubled quote inside them is a literal quote. Whitespace outside quotes
/// at the edges of a field is dropped.
inline std::vector<std::string> split_csv(std::string_view line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false, had_quotes = false;
    auto finish = [&] {
        out.push_back(had_quotes ? std::move(cur) : trim(cur));
        cur.clear();
        had_quotes = false;
    };
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            if (!had_quotes) cur = trim(cur);
            quoted = had_quotes = true;
        } else if (c == ',') {
            finish();
        } else if (!(had_quotes && std::isspace(static_cast<unsigned char>(c)))) {
            cur += c;
        }
    }
    if (quoted) throw DataError("unterminated quoted field");
    finish();
    return out;
}

inline std::string trim(std::string_view s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return std::string(s.substr(a, b - a));
}

inline std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

inline double parse_double(const std::string& text) {
    const std::string s = trim(text);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size())
        throw DataError("'" + s + "' is not a number");
    return v;
}

struct CsvRow {
    std::size_t line = 0;
    std::vector<std::string> fields;
};

/// Header plus data rows; blank lines and '#' comments are skipped.
struct CsvTable {
    std::string path;
    std::vector<std::string> header;
    std::vector<CsvRow> rows;

    std::ptrdiff_t column(const std::string& name) const {
        const auto it = std::find(header.begin(), header.end(), name);
        return it == header.end() ? -1 : it - header.begin();
    }
    std::size_t require(const std::string& name) const {
        const auto c = column(name);
        if (c < 0) throw DataError(located(path, 1, name, "missing required column"));
        return static_cast<std::size_t>(c);
    }
};

inline CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'", "check the path in the config file");
    CsvTable t;
    t.path = path;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const std::string s = trim(line);
        if (s.empty() || s.front() == '#') continue;
        std::vector<std::string> fields;
        try {
            fields = split_csv(line);
        } catch (const DataError& e) {
            throw DataError(located(path, n, "", e.what()));
        }
        for (auto& f : fields) f = trim(f);
        if (t.header.empty()) {
            for (auto& f : fields) f = lower(f);
            t.header = std::move(fields);
            continue;
        }
        if (fields.size() != t.header.size())
            throw DataError(located(path, n, "", "expected " + std::to_string(t.header.size()) + " fields, found " +
                                                     std::to_string(fields.size())));
        t.rows.push_back({n, std::move(fields)});
    }
    if (t.header.empty()) throw DataError(located(path, 0, "", "file has no header row"));
    return t;
}

/// Parses "x y, x y, ..." into points.
inline std::vector<Point> parse_coordinates(std::string_view body) {
    std::vector<Point> out;
    std::size_t start = 0;
    while (start <= body.size()) {
        const std::size_t comma = body.find(',', start);
        const std::string pair = trim(body.substr(start, comma == std::string_view::npos ? body.npos : comma - start));
        std::istringstream is(pair);
        std::string xs, ys, extra;
        if (!(is >> xs >> ys) || (is >> extra)) throw DataError("coordinate '" + pair + "' is not 'x y'");
        out.push_back({parse_double(xs), parse_double(ys)});
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

struct Wkt {
    std::string type;           // upper case: POINT, LINESTRING, POLYGON
    std::vector<Point> points;  // polygon: exterior ring only
};

inline Wkt parse_wkt(std::string_view text) {
    const std::string s = trim(text);
    const std::size_t open = s.find('(');
    const std::size_t close = s.rfind(')');
    if (open == std::string::npos || close == std::string::npos || close < open)
        throw DataError("geometry '" + s + "' is not WKT");
    Wkt w;
    w.type = trim(s.substr(0, open));
    std::transform(w.type.begin(), w.type.end(), w.type.begin(),
                   [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    std::string_view body(s);
    body = body.substr(open + 1, close - open - 1);
    if (w.type == "POLYGON") {
        const std::size_t a = body.find('('), b = body.find(')');
        if (a == body.npos || b == body.npos) throw DataError("POLYGON needs a parenthesized ring");
        if (body.find('(', b) != body.npos) throw DataError("POLYGON holes are not supported");
        body = body.substr(a + 1, b - a - 1);
    } else if (w.type != "POINT" && w.type != "LINESTRING") {
        throw DataError("unsupported geometry type '" + w.type + "'", "use POINT, LINESTRING or POLYGON");
    }
    w.points = parse_coordinates(body);
    if (w.type == "POINT" && w.points.size() != 1) throw DataError("POINT needs exactly one coordinate");
    return w;
}

inline std::string format_number(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

inline std::string to_wkt(const Transect& t) {
    std::string s = t.kind == TransectKind::point ? "POINT (" : "LINESTRING (";
    for (std::size_t i = 0; i < t.vertices.size(); ++i) {
        if (i) s += ", ";
        s += format_number(t.vertices[i].x) + " " + format_number(t.vertices[i].y);
    }
    return s + ")";
}

}  // namespace io

/// Transects CSV: columns id, kind (point|line), geometry (WKT).
inline std::vector<Transect> read_transects(const std::string& path) {
    const io::CsvTable t = io::read_csv(path);
    const std::size_t ci = t.require("id"), ck = t.require("kind"), cg = t.require("geometry");
    std::vector<Transect> out;
    for (const auto& row : t.rows) {
        const std::string& id = row.fields[ci];
        if (id.empty()) throw DataError(located(path, row.line, "id", "empty transect id"));
        const std::string kind = io::lower(row.fields[ck]);
        io::Wkt g;
        try {
            g = io::parse_wkt(row.fields[cg]);
        } catch (const DataError& e) {
            throw DataError(located(path, row.line, "geometry", e.what()), e.hint());
        }
        try {
            if (kind == "point") {
                if (g.type != "POINT") throw DataError("point transect needs POINT geometry, got " + g.type);
                out.push_back(Transect::make_point(id, g.points.front()));
            } else if (kind == "line") {
                if (g.type != "LINESTRING") throw DataError("line transect needs LINESTRING geometry, got " + g.type);
                out.push_back(Transect::make_line(id, g.points));
            } else {
                throw DataError(located(path, row.line, "kind", "'" + kind + "' is not 'point' or 'line'"));
            }
        } catch (const DataError& e) {
            if (std::string_view(e.what()).starts_with(path)) throw;
            throw DataError(located(path, row.line, "geometry", e.what()));
        }
    }
    for (std::size_t i = 0; i < out.size(); ++i)
        for (std::size_t j = i + 1; j < out.size(); ++j)
            if (out[i].id == out[j].id)
                throw DataError(located(path, t.rows[j].line, "id", "duplicate transect id '" + out[j].id + "'"));
    return out;
}

inline void write_transects(std::ostream& os, const std::vector<Transect>& ts) {
    os << "id,kind,geometry\n";
    for (const Transect& t : ts)
        os << t.id << ',' << (t.kind == TransectKind::point ? "point" : "line") << ",\"" << io::to_wkt(t) << "\"\n";
}

/// Study region from a file holding either one WKT POLYGON or a vertex CSV with columns x, y.
inline StudyRegion read_region(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'", "check the path in the config file");
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    const std::string upper = [&] {
        std::string u = io::trim(text);
        std::transform(u.begin(), u.end(), u.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
        return u;
    }();
    try {
        if (upper.starts_with("POLYGON")) {
            const io::Wkt w = io::parse_wkt(text);
            return StudyRegion(w.points);
        }
        const io::CsvTable t = io::read_csv(path);
        const std::size_t cx = t.require("x"), cy = t.require("y");
        std::vector<Point> v;
        for (const auto& row : t.rows) {
            try {
                v.push_back({io::parse_double(row.fields[cx]), io::parse_double(row.fields[cy])});
            } catch (const DataError& e) {
                throw DataError(located(path, row.line, "x/y", e.what()));
            }
        }
        return StudyRegion(std::move(v));
    } catch (const DataError& e) {
        if (std::string_view(e.what()).starts_with(path)) throw;
        throw DataError(located(path, 0, "region", e.what()), e.hint());
    }
}

inline void write_region(std::ostream& os, const StudyRegion& r) {
    os << "x,y\n";
    for (const Point& p : r.boundary()) os << io::format_number(p.x) << ',' << io::format_number(p.y) << '\n';
}

/// Observations CSV: transect_id, distance and optional x, y.
inline std::vector<DetectionRecord> read_observations(const std::string& path) {
    const io::CsvTable t = io::read_csv(path);
    const std::size_t ct = t.require("transect_id"), cd = t.require("distance");
    const auto cx = t.column("x"), cy = t.column("y");
    if ((cx < 0) != (cy < 0)) throw DataError(located(path, 1, cx < 0 ? "x" : "y", "x and y must appear together"));
    std::vector<DetectionRecord> out;
    for (const auto& row : t.rows) {
        DetectionRecord r;
        r.line = row.line;
        r.transect_id = row.fields[ct];
        try {
            r.distance = io::parse_double(row.fields[cd]);
        } catch (const DataError& e) {
            throw DataError(located(path, row.line, "distance", e.what()));
        }
        if (!(r.distance >= 0.0) || !std::isfinite(r.distance))
            throw DataError(located(path, row.line, "distance", "distance must be finite and non-negative"));
        if (cx >= 0) {
            const std::string& xs = row.fields[static_cast<std::size_t>(cx)];
            const std::string& ys = row.fields[static_cast<std::size_t>(cy)];
            if (!xs.empty() || !ys.empty()) {
                try {
                    r.location = Point{io::parse_double(xs), io::parse_double(ys)};
                } catch (const DataError& e) {
                    throw DataError(located(path, row.line, "x/y", e.what()));
                }
            }
        }
        out.push_back(std::move(r));
    }
    return out;
}

inline void write_observations(std::ostream& os, const Dataset& data, bool with_locations = true) {
    os << "transect_id,distance" << (with_locations ? ",x,y" : "") << '\n';
    for (const auto& r : data.records) {
        os << r.transect_id << ',' << io::format_number(r.distance);
        if (with_locations) {
            if (r.location) os << ',' << io::format_number(r.location->x) << ',' << io::format_number(r.location->y);
            else os << ",,";
        }
        os << '\n';
    }
}

struct DataPaths {
    std::string observations;
    std::string transects;
    std::string region;
};

/// Reads and validates a dataset. Record errors name file, line and field.
inline Dataset load_dataset(const DataPaths& paths) {
    Dataset data{read_region(paths.region), read_transects(paths.transects), read_observations(paths.observations)};
    for (auto& r : data.records) {
        const bool known = std::any_of(data.transects.begin(), data.transects.end(),
                                       [&](const Transect& t) { return t.id == r.transect_id; });
        if (!known)
            throw DataError(located(paths.observations, r.line, "transect_id",
                                    "unknown transect id '" + r.transect_id + "'"),
                            "add the transect to " + paths.transects + " or fix the id");
        if (r.location && !data.region.contains(*r.location))
            throw DataError(located(paths.observations, r.line, "x/y", "location lies outside the study region"));
    }
    data.resolve();
    return data;
}

/// Reads rasters and stacks them as layers in the order given.
inline CovariateField load_rasters(const std::vector<std::string>& paths, const std::vector<std::string>& names = {},
                                   Interpolation interp = Interpolation::bilinear) {
    if (paths.empty()) throw ConfigError("no covariate rasters given");
    CovariateField out;
    for (std::size_t i = 0; i < paths.size(); ++i) {
        std::string name = i < names.size() ? names[i] : std::filesystem::path(paths[i]).stem().string();
        CovariateField f = read_ascii_grid(paths[i], std::move(name));
        if (i == 0) {
            out = std::move(f);
        } else {
            try {
                out.stack(f);
            } catch (const DataError& e) {
                throw DataError(paths[i] + ": " + e.what(), "resample the rasters onto one grid");
            }
        }
    }
    out.set_interpolation(interp);
    return out;
}

}  // namespace distfit

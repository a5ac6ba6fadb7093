#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "distfit/error.hpp"

namespace distfit {

struct Point {
    double x = 0.0;
    double y = 0.0;

    friend Point operator+(Point a, Point b) { return {a.x + b.x, a.y + b.y}; }
    friend Point operator-(Point a, Point b) { return {a.x - b.x, a.y - b.y}; }
    friend Point operator*(double s, Point a) { return {s * a.x, s * a.y}; }
    friend bool operator==(Point a, Point b) = default;
};

inline double dot(Point a, Point b) { return a.x * b.x + a.y * b.y; }
inline double cross(Point a, Point b) { return a.x * b.y - a.y * b.x; }
inline double norm(Point a) { return std::hypot(a.x, a.y); }

struct BoundingBox {
    Point min;
    Point max;
    double width() const { return max.x - min.x; }
    double height() const { return max.y - min.y; }
};

inline double distance_to_segment(Point p, Point a, Point b) {
    const Point ab = b - a;
    const double len2 = dot(ab, ab);
    if (len2 == 0.0) return norm(p - a);
    const double t = std::clamp(dot(p - a, ab) / len2, 0.0, 1.0);
    return norm(p - (a + t * ab));
}

namespace detail {

inline double signed_area(const std::vector<Point>& v) {
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const Point& a = v[i];
        const Point& b = v[(i + 1) % v.size()];
        s += a.x * b.y - b.x * a.y;
    }
    return 0.5 * s;
}

// Proper or touching intersection of closed segments ab and cd.
inline bool segments_intersect(Point a, Point b, Point c, Point d) {
    auto orient = [](Point p, Point q, Point r) {
        const double v = cross(q - p, r - p);
        return (v > 0.0) - (v < 0.0);
    };
    auto on_segment = [](Point p, Point q, Point r) {
        return std::min(p.x, q.x) <= r.x && r.x <= std::max(p.x, q.x) && std::min(p.y, q.y) <= r.y &&
               r.y <= std::max(p.y, q.y);
    };
    const int o1 = orient(a, b, c), o2 = orient(a, b, d), o3 = orient(c, d, a), o4 = orient(c, d, b);
    if (o1 != o2 && o3 != o4) return true;
    if (o1 == 0 && on_segment(a, b, c)) return true;
    if (o2 == 0 && on_segment(a, b, d)) return true;
    if (o3 == 0 && on_segment(c, d, a)) return true;
    if (o4 == 0 && on_segment(c, d, b)) return true;
    return false;
}

}  // namespace detail

/// Simple polygon, stored counterclockwise.
class StudyRegion {
public:
    explicit StudyRegion(std::vector<Point> boundary) : boundary_(std::move(boundary)) {
        if (boundary_.size() >= 2 && boundary_.front() == boundary_.back()) boundary_.pop_back();
        if (boundary_.size() < 3) throw DataError("study region needs at least 3 vertices");
        for (const Point& p : boundary_) {
            if (!std::isfinite(p.x) || !std::isfinite(p.y))
                throw DataError("study region has a non-finite vertex");
        }
        double a = detail::signed_area(boundary_);
        if (a < 0.0) {
            std::reverse(boundary_.begin(), boundary_.end());
            a = -a;
        }
        if (!(a > 0.0)) throw DataError("study region has zero area");
        const std::size_t n = boundary_.size();
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                if (j == i + 1 || (i == 0 && j == n - 1)) continue;
                if (detail::segments_intersect(boundary_[i], boundary_[(i + 1) % n], boundary_[j],
                                               boundary_[(j + 1) % n]))
                    throw DataError("study region boundary self-intersects (edges " + std::to_string(i) +
                                    " and " + std::to_string(j) + ")");
            }
        }
        area_ = a;
        bbox_ = {boundary_[0], boundary_[0]};
        for (const Point& p : boundary_) {
            bbox_.min.x = std::min(bbox_.min.x, p.x);
            bbox_.min.y = std::min(bbox_.min.y, p.y);
            bbox_.max.x = std::max(bbox_.max.x, p.x);
            bbox_.max.y = std::max(bbox_.max.y, p.y);
        }
    }

    static StudyRegion rectangle(double x0, double y0, double x1, double y1) {
        return StudyRegion({{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}});
    }
    static StudyRegion unit_square() { return rectangle(0.0, 0.0, 1.0, 1.0); }

    const std::vector<Point>& boundary() const { return boundary_; }
    double area() const { return area_; }
    const BoundingBox& bbox() const { return bbox_; }
    std::size_t edge_count() const { return boundary_.size(); }
    Point edge_start(std::size_t i) const { return boundary_[i]; }
    Point edge_end(std::size_t i) const { return boundary_[(i + 1) % boundary_.size()]; }

    bool contains(Point p) const {
        bool inside = false;
        const std::size_t n = boundary_.size();
        for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
            const Point& a = boundary_[i];
            const Point& b = boundary_[j];
            if ((a.y > p.y) != (b.y > p.y)) {
                const double xc = (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x;
                if (p.x < xc) inside = !inside;
            }
        }
        return inside;
    }

private:
    std::vector<Point> boundary_;
    double area_ = 0.0;
    BoundingBox bbox_;
};

enum class TransectKind { point, line };

struct Transect {
    std::string id;
    TransectKind kind = TransectKind::point;
    std::vector<Point> vertices;

    static Transect make_point(std::string id, Point p) { return {std::move(id), TransectKind::point, {p}}; }
    static Transect make_line(std::string id, std::vector<Point> v) {
        Transect t{std::move(id), TransectKind::line, std::move(v)};
        if (t.vertices.size() < 2) throw DataError("line transect '" + t.id + "' needs at least 2 vertices");
        if (!(t.length() > 0.0)) throw DataError("line transect '" + t.id + "' has zero length");
        return t;
    }

    double length() const {
        double len = 0.0;
        for (std::size_t i = 1; i < vertices.size(); ++i) len += norm(vertices[i] - vertices[i - 1]);
        return len;
    }

    /// Point transect location, or the arc-length midpoint of a line transect.
    Point center() const {
        if (kind == TransectKind::point) return vertices.front();
        double remaining = 0.5 * length();
        for (std::size_t i = 1; i < vertices.size(); ++i) {
            const double seg = norm(vertices[i] - vertices[i - 1]);
            if (remaining <= seg && seg > 0.0) {
                return vertices[i - 1] + (remaining / seg) * (vertices[i] - vertices[i - 1]);
            }
            remaining -= seg;
        }
        return vertices.back();
    }
};

/// Euclidean distance for point transects; minimum over segments for line transects.
inline double perpendicular_distance(Point p, const Transect& t) {
    if (t.kind == TransectKind::point || t.vertices.size() == 1) return norm(p - t.vertices.front());
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < t.vertices.size(); ++i)
        best = std::min(best, distance_to_segment(p, t.vertices[i - 1], t.vertices[i]));
    return best;
}

/// A straight segment or a circular arc, parametrized by arc length.
struct LocusPiece {
    enum class Kind { segment, arc };
    Kind kind = Kind::segment;
    Point a, b;            // segment
    Point center;          // arc
    double radius = 0.0;   // arc
    double start = 0.0;    // arc start angle
    double sweep = 0.0;    // signed sweep angle

    static LocusPiece segment(Point a, Point b) {
        LocusPiece p;
        p.kind = Kind::segment;
        p.a = a;
        p.b = b;
        return p;
    }
    static LocusPiece arc(Point c, double r, double start, double sweep) {
        LocusPiece p;
        p.kind = Kind::arc;
        p.center = c;
        p.radius = r;
        p.start = start;
        p.sweep = sweep;
        return p;
    }

    double length() const { return kind == Kind::segment ? norm(b - a) : radius * std::abs(sweep); }

    Point point_at(double s) const {
        if (kind == Kind::segment) {
            const double len = length();
            return len > 0.0 ? a + (s / len) * (b - a) : a;
        }
        const double ang = start + (sweep >= 0.0 ? 1.0 : -1.0) * s / radius;
        return {center.x + radius * std::cos(ang), center.y + radius * std::sin(ang)};
    }

    LocusPiece sub(double s0, double s1) const {
        if (kind == Kind::segment) return segment(point_at(s0), point_at(s1));
        const double dir = sweep >= 0.0 ? 1.0 : -1.0;
        return arc(center, radius, start + dir * s0 / radius, dir * (s1 - s0) / radius);
    }
};

/// Set of candidate locations at a fixed perpendicular distance from a transect.
struct Locus {
    std::vector<LocusPiece> pieces;
    std::optional<Point> point;  // degenerate locus of a point transect at distance 0
    double total_length = 0.0;

    bool is_point() const { return point.has_value(); }
    bool empty() const { return !point && pieces.empty(); }
};

namespace detail {

constexpr double two_pi = 2.0 * std::numbers::pi;

// Arc-length offset of a point on the arc's circle, if within the arc.
inline std::optional<double> arc_param(const LocusPiece& arc, Point q) {
    const double phi = std::atan2(q.y - arc.center.y, q.x - arc.center.x);
    double delta = arc.sweep >= 0.0 ? phi - arc.start : arc.start - phi;
    delta = std::fmod(delta, two_pi);
    if (delta < 0.0) delta += two_pi;
    const double span = std::abs(arc.sweep);
    const double eps = 1e-12;
    if (delta <= span + eps) return std::min(delta, span) * arc.radius;
    if (span >= two_pi - eps) return delta * arc.radius;
    if (delta >= two_pi - eps) return 0.0;
    return std::nullopt;
}

// Intersections of the line through a,b (segment parameter t) with a circle.
inline std::vector<double> line_circle(Point a, Point b, Point c, double r) {
    const Point d = b - a;
    const Point f = a - c;
    const double A = dot(d, d);
    const double B = 2.0 * dot(f, d);
    const double C = dot(f, f) - r * r;
    const double disc = B * B - 4.0 * A * C;
    if (A == 0.0 || disc < 0.0) return {};
    const double sq = std::sqrt(disc);
    return {(-B - sq) / (2.0 * A), (-B + sq) / (2.0 * A)};
}

// Arc-length parameters on `piece` where it meets the segment cd.
inline std::vector<double> cut_by_segment(const LocusPiece& piece, Point c, Point d) {
    std::vector<double> out;
    if (piece.kind == LocusPiece::Kind::segment) {
        const Point r = piece.b - piece.a;
        const Point s = d - c;
        const double den = cross(r, s);
        if (den == 0.0) return out;
        const double t = cross(c - piece.a, s) / den;
        const double u = cross(c - piece.a, r) / den;
        if (t >= 0.0 && t <= 1.0 && u >= 0.0 && u <= 1.0) out.push_back(t * piece.length());
        return out;
    }
    for (double u : line_circle(c, d, piece.center, piece.radius)) {
        if (u < 0.0 || u > 1.0) continue;
        if (auto s = arc_param(piece, c + u * (d - c))) out.push_back(*s);
    }
    return out;
}

// Arc-length parameters on `piece` where it meets `other`.
inline std::vector<double> cut_by_piece(const LocusPiece& piece, const LocusPiece& other) {
    if (other.kind == LocusPiece::Kind::segment) return cut_by_segment(piece, other.a, other.b);
    std::vector<Point> hits;
    if (piece.kind == LocusPiece::Kind::segment) {
        for (double t : line_circle(piece.a, piece.b, other.center, other.radius))
            if (t >= 0.0 && t <= 1.0) hits.push_back(piece.a + t * (piece.b - piece.a));
    } else {
        const Point d = other.center - piece.center;
        const double dist = norm(d);
        const double r0 = piece.radius, r1 = other.radius;
        if (dist > 0.0 && dist <= r0 + r1 && dist >= std::abs(r0 - r1)) {
            const double a = (r0 * r0 - r1 * r1 + dist * dist) / (2.0 * dist);
            const double h = std::sqrt(std::max(0.0, r0 * r0 - a * a));
            const Point m = piece.center + (a / dist) * d;
            const Point perp{-d.y / dist, d.x / dist};
            hits.push_back(m + h * perp);
            hits.push_back(m - h * perp);
        }
    }
    std::vector<double> out;
    for (const Point& q : hits) {
        if (!arc_param(other, q)) continue;
        if (piece.kind == LocusPiece::Kind::segment) {
            out.push_back(norm(q - piece.a));
        } else if (auto s = arc_param(piece, q)) {
            out.push_back(*s);
        }
    }
    return out;
}

}  // namespace detail

/// Locus of points at perpendicular distance `d` from `t`.
///
/// Point transects give a circle of radius d. Line transects give the two
/// offset copies of every segment plus round joins on the convex side of
/// each vertex; no end caps are added, so an unclipped straight transect of
/// length L has a locus of length exactly 2L. Pieces that cross each other
/// are split and any part nearer than d to another segment is discarded.
/// With `clip` set, the locus is intersected with the region; the result
/// may be empty.
inline Locus clipped_locus(const Transect& t, double d, const StudyRegion& region, bool clip = true) {
    if (!(d >= 0.0) || !std::isfinite(d))
        throw DataError("locus distance must be finite and non-negative (got " + std::to_string(d) + ")");
    Locus out;
    if (d == 0.0 && t.kind == TransectKind::point) {
        const Point p = t.vertices.front();
        if (!clip || region.contains(p)) out.point = p;
        return out;
    }

    std::vector<LocusPiece> raw;
    if (t.kind == TransectKind::point) {
        raw.push_back(LocusPiece::arc(t.vertices.front(), d, 0.0, detail::two_pi));
    } else if (d == 0.0) {
        for (std::size_t i = 1; i < t.vertices.size(); ++i)
            if (norm(t.vertices[i] - t.vertices[i - 1]) > 0.0)
                raw.push_back(LocusPiece::segment(t.vertices[i - 1], t.vertices[i]));
    } else {
        std::vector<Point> dirs;
        std::vector<std::size_t> starts;
        for (std::size_t i = 1; i < t.vertices.size(); ++i) {
            const Point seg = t.vertices[i] - t.vertices[i - 1];
            const double len = norm(seg);
            if (len == 0.0) continue;
            const Point u = (1.0 / len) * seg;
            const Point n{-u.y, u.x};
            raw.push_back(LocusPiece::segment(t.vertices[i - 1] + d * n, t.vertices[i] + d * n));
            raw.push_back(LocusPiece::segment(t.vertices[i - 1] - d * n, t.vertices[i] - d * n));
            dirs.push_back(u);
            starts.push_back(i - 1);
        }
        for (std::size_t k = 1; k < dirs.size(); ++k) {
            const Point u0 = dirs[k - 1], u1 = dirs[k];
            const double turn = std::atan2(cross(u0, u1), dot(u0, u1));
            if (std::abs(turn) < 1e-12) continue;
            // Left turns open a gap on the right side, and vice versa.
            const double side = turn > 0.0 ? -1.0 : 1.0;
            const Point n0{-u0.y * side, u0.x * side};
            const Point joint = t.vertices[starts[k]];
            raw.push_back(LocusPiece::arc(joint, d, std::atan2(n0.y, n0.x), turn));
        }
    }

    const double scale = 1.0 + d + norm(t.vertices.front());
    const double tol = 1e-9 * scale;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const LocusPiece& piece = raw[i];
        const double len = piece.length();
        std::vector<double> cuts{0.0, len};
        for (std::size_t j = 0; j < raw.size(); ++j) {
            if (j == i) continue;
            for (double s : detail::cut_by_piece(piece, raw[j])) cuts.push_back(s);
        }
        if (clip) {
            for (std::size_t e = 0; e < region.edge_count(); ++e)
                for (double s : detail::cut_by_segment(piece, region.edge_start(e), region.edge_end(e)))
                    cuts.push_back(s);
        }
        std::sort(cuts.begin(), cuts.end());
        for (std::size_t k = 1; k < cuts.size(); ++k) {
            const double s0 = cuts[k - 1], s1 = cuts[k];
            if (s1 - s0 <= 1e-12 * scale) continue;
            const Point mid = piece.point_at(0.5 * (s0 + s1));
            if (d > 0.0 && std::abs(perpendicular_distance(mid, t) - d) > tol) continue;
            if (clip && !region.contains(mid)) continue;
            out.pieces.push_back(piece.sub(s0, s1));
        }
    }
    for (const LocusPiece& p : out.pieces) out.total_length += p.length();
    return out;
}

/// As clipped_locus, but an empty result is an error.
inline Locus locus(const Transect& t, double d, const StudyRegion& region, bool clip = true) {
    Locus out = clipped_locus(t, d, region, clip);
    if (out.empty())
        throw DataError("locus at distance " + std::to_string(d) + " from transect '" + t.id +
                            "' lies entirely outside the study region",
                        "check the recorded distance and the transect geometry");
    return out;
}

/// Equally spaced quadrature nodes along a locus.
struct LocusNodes {
    std::vector<Point> points;
    double weight = 0.0;  // total_length / Q for every node
};

/// Q nodes at arc-length positions (k + 1/2) L / Q. A point locus yields Q
/// copies of the point with zero weight, so node averages stay well defined.
inline LocusNodes discretize_locus(const Locus& l, int Q) {
    if (Q < 2) throw ConfigError("locus quadrature needs Q >= 2 (got " + std::to_string(Q) + ")");
    LocusNodes nodes;
    nodes.points.reserve(static_cast<std::size_t>(Q));
    if (l.is_point()) {
        nodes.points.assign(static_cast<std::size_t>(Q), *l.point);
        return nodes;
    }
    const double step = l.total_length / Q;
    nodes.weight = step;
    std::size_t piece = 0;
    double offset = 0.0;  // arc length before current piece
    for (int k = 0; k < Q; ++k) {
        const double s = (k + 0.5) * step;
        while (piece + 1 < l.pieces.size() && s > offset + l.pieces[piece].length()) {
            offset += l.pieces[piece].length();
            ++piece;
        }
        nodes.points.push_back(l.pieces[piece].point_at(std::min(s - offset, l.pieces[piece].length())));
    }
    return nodes;
}

}  // namespace distfit

#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "distfit/error.hpp"
#include "distfit/geometry.hpp"

namespace distfit {

/// Node counts for the three quadratures a likelihood may need.
struct QuadratureScheme {
    int region_Q = 10000;  // approximate node count over the region bounding box
    int locus_Q = 64;      // nodes per locus
    int error_Q = 32;      // nodes over the true-distance axis
    bool clip_locus = true;

    void validate() const {
        if (region_Q < 2 || locus_Q < 2 || error_Q < 2)
            throw ConfigError("quadrature node counts must all be >= 2");
    }
};

/// Cell centers of a regular grid over the region bounding box, kept when
/// inside the polygon. Every node carries the same cell-area weight.
struct RegionGrid {
    std::vector<Point> nodes;
    double weight = 0.0;
    int nx = 0;
    int ny = 0;

    double covered_area() const { return weight * static_cast<double>(nodes.size()); }
};

inline RegionGrid make_region_grid(const StudyRegion& region, int Q) {
    if (Q < 2) throw ConfigError("region quadrature needs Q >= 2");
    const BoundingBox& b = region.bbox();
    const double aspect = b.width() / b.height();
    RegionGrid g;
    g.nx = std::max(1, static_cast<int>(std::lround(std::sqrt(Q * aspect))));
    g.ny = std::max(1, static_cast<int>(std::lround(static_cast<double>(Q) / g.nx)));
    const double hx = b.width() / g.nx, hy = b.height() / g.ny;
    g.weight = hx * hy;
    g.nodes.reserve(static_cast<std::size_t>(g.nx) * g.ny);
    for (int j = 0; j < g.ny; ++j) {
        for (int i = 0; i < g.nx; ++i) {
            const Point p{b.min.x + (i + 0.5) * hx, b.min.y + (j + 0.5) * hy};
            if (region.contains(p)) g.nodes.push_back(p);
        }
    }
    if (g.nodes.empty()) throw ConfigError("region quadrature grid has no nodes inside the study region");
    return g;
}

template <class Fn>
double checked_sum(const std::vector<Point>& nodes, double weight, Fn&& f) {
    double s = 0.0;
    for (const Point& p : nodes) {
        const double v = f(p);
        if (!std::isfinite(v))
            throw NumericalError("integrand is not finite at (" + std::to_string(p.x) + ", " + std::to_string(p.y) +
                                 ")");
        s += v;
    }
    return s * weight;
}

/// Integral of f over the region by the regular-grid rule.
template <class Fn>
double quadrature_integral(Fn&& f, const StudyRegion& region, int Q) {
    const RegionGrid g = make_region_grid(region, Q);
    return checked_sum(g.nodes, g.weight, f);
}

/// Integral of f along a locus with Q equally spaced nodes.
template <class Fn>
double quadrature_integral(Fn&& f, const Locus& l, int Q) {
    const LocusNodes n = discretize_locus(l, Q);
    return checked_sum(n.points, n.weight, f);
}

/// Gauss-Legendre nodes and weights on [-1, 1].
struct GaussLegendre {
    std::vector<double> x;
    std::vector<double> w;

    explicit GaussLegendre(int n) : x(static_cast<std::size_t>(n)), w(static_cast<std::size_t>(n)) {
        if (n < 1) throw ConfigError("Gauss-Legendre rule needs at least one node");
        for (int i = 0; i < (n + 1) / 2; ++i) {
            double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
            double dp = 0.0;
            for (int it = 0; it < 100; ++it) {
                double p0 = 1.0, p1 = 0.0;
                for (int k = 1; k <= n; ++k) {
                    const double p2 = p1;
                    p1 = p0;
                    p0 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p2) / k;
                }
                dp = n * (z * p0 - p1) / (z * z - 1.0);
                const double dz = p0 / dp;
                z -= dz;
                if (std::abs(dz) < 1e-15) break;
            }
            const std::size_t lo = static_cast<std::size_t>(i), hi = static_cast<std::size_t>(n - 1 - i);
            x[lo] = -z;
            x[hi] = z;
            w[lo] = w[hi] = 2.0 / ((1.0 - z * z) * dp * dp);
        }
    }

    /// Node/weight pairs mapped to [a, b].
    template <class Fn>
    void for_each(double a, double b, Fn&& fn) const {
        const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
        for (std::size_t i = 0; i < x.size(); ++i) fn(mid + half * x[i], half * w[i]);
    }
};

}  // namespace distfit

#pragma once

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "distfit/error.hpp"
#include "distfit/geometry.hpp"

namespace distfit {

enum class Interpolation { nearest, bilinear };

/// Stack of aligned rasters x(s). Layer values are stored bottom row first.
class CovariateField {
public:
    CovariateField() = default;

    CovariateField(Point origin, double cell_size, int nrows, int ncols,
                   Interpolation interp = Interpolation::bilinear)
        : origin_(origin), cell_size_(cell_size), nrows_(nrows), ncols_(ncols), interp_(interp) {
        if (!(cell_size > 0.0)) throw DataError("raster cell size must be positive");
        if (nrows <= 0 || ncols <= 0) throw DataError("raster must have at least one row and column");
    }

    /// Adds a layer; `values` is indexed [row_from_bottom * ncols + col].
    void add_layer(std::string name, std::vector<double> values) {
        if (values.size() != static_cast<std::size_t>(nrows_) * ncols_)
            throw DataError("layer '" + name + "' has " + std::to_string(values.size()) + " cells, expected " +
                            std::to_string(static_cast<std::size_t>(nrows_) * ncols_));
        names_.push_back(std::move(name));
        layers_.push_back(std::move(values));
    }

    /// Samples `fn(Point) -> double` at cell centers into a new layer.
    template <class Fn>
    void add_layer_from(std::string name, Fn&& fn) {
        std::vector<double> v(static_cast<std::size_t>(nrows_) * ncols_);
        for (int r = 0; r < nrows_; ++r)
            for (int c = 0; c < ncols_; ++c) v[static_cast<std::size_t>(r) * ncols_ + c] = fn(cell_center(r, c));
        add_layer(std::move(name), std::move(v));
    }

    bool aligned_with(const CovariateField& o) const {
        return origin_ == o.origin_ && cell_size_ == o.cell_size_ && nrows_ == o.nrows_ && ncols_ == o.ncols_;
    }

    /// Appends the layers of an aligned field.
    void stack(const CovariateField& o) {
        if (!aligned_with(o)) throw DataError("raster layers are not aligned (origin, cell size or shape differ)");
        for (std::size_t i = 0; i < o.layers_.size(); ++i) add_layer(o.names_[i], o.layers_[i]);
    }

    Point origin() const { return origin_; }
    double cell_size() const { return cell_size_; }
    int nrows() const { return nrows_; }
    int ncols() const { return ncols_; }
    Interpolation interpolation() const { return interp_; }
    void set_interpolation(Interpolation i) { interp_ = i; }
    std::size_t layer_count() const { return layers_.size(); }
    const std::vector<std::string>& layer_names() const { return names_; }
    const std::vector<double>& layer(std::size_t i) const { return layers_.at(i); }

    BoundingBox extent() const {
        return {origin_, {origin_.x + ncols_ * cell_size_, origin_.y + nrows_ * cell_size_}};
    }

    Point cell_center(int row_from_bottom, int col) const {
        return {origin_.x + (col + 0.5) * cell_size_, origin_.y + (row_from_bottom + 0.5) * cell_size_};
    }

    bool covers(Point p) const {
        const BoundingBox e = extent();
        const double tol = 1e-9 * cell_size_;
        return p.x >= e.min.x - tol && p.x <= e.max.x + tol && p.y >= e.min.y - tol && p.y <= e.max.y + tol;
    }

    /// Writes x(p) into `out` (one entry per layer).
    void values_at(Point p, std::span<double> out) const {
        if (!covers(p)) {
            std::ostringstream os;
            os << "point (" << p.x << ", " << p.y << ") is outside the raster extent";
            throw DataError(os.str(), "extend the raster to cover the study region");
        }
        const double fx = (p.x - origin_.x) / cell_size_ - 0.5;
        const double fy = (p.y - origin_.y) / cell_size_ - 0.5;
        if (interp_ == Interpolation::nearest) {
            const int c = std::clamp(static_cast<int>(std::floor(fx + 0.5)), 0, ncols_ - 1);
            const int r = std::clamp(static_cast<int>(std::floor(fy + 0.5)), 0, nrows_ - 1);
            const std::size_t idx = static_cast<std::size_t>(r) * ncols_ + c;
            for (std::size_t l = 0; l < layers_.size(); ++l) out[l] = layers_[l][idx];
            return;
        }
        // Bilinear between cell centers, clamped to the outermost centers.
        const double cx = std::clamp(fx, 0.0, static_cast<double>(ncols_ - 1));
        const double cy = std::clamp(fy, 0.0, static_cast<double>(nrows_ - 1));
        const int c0 = std::min(static_cast<int>(cx), std::max(ncols_ - 2, 0));
        const int r0 = std::min(static_cast<int>(cy), std::max(nrows_ - 2, 0));
        const int c1 = std::min(c0 + 1, ncols_ - 1);
        const int r1 = std::min(r0 + 1, nrows_ - 1);
        const double tx = cx - c0, ty = cy - r0;
        const std::size_t i00 = static_cast<std::size_t>(r0) * ncols_ + c0;
        const std::size_t i01 = static_cast<std::size_t>(r0) * ncols_ + c1;
        const std::size_t i10 = static_cast<std::size_t>(r1) * ncols_ + c0;
        const std::size_t i11 = static_cast<std::size_t>(r1) * ncols_ + c1;
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            const auto& v = layers_[l];
            out[l] = (1 - ty) * ((1 - tx) * v[i00] + tx * v[i01]) + ty * ((1 - tx) * v[i10] + tx * v[i11]);
        }
    }

    std::vector<double> value_at(Point p) const {
        std::vector<double> out(layers_.size());
        values_at(p, out);
        return out;
    }

    /// Region must sit inside the extent and every cell centered in it must hold data.
    void validate_covers(const StudyRegion& region) const {
        const BoundingBox& b = region.bbox();
        if (!covers(b.min) || !covers(b.max))
            throw DataError("raster extent does not cover the study region",
                            "supply a raster whose extent contains the region bounding box");
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            for (int r = 0; r < nrows_; ++r) {
                for (int c = 0; c < ncols_; ++c) {
                    const double v = layers_[l][static_cast<std::size_t>(r) * ncols_ + c];
                    if (!std::isfinite(v) && region.contains(cell_center(r, c))) {
                        std::ostringstream os;
                        os << "layer '" << names_[l] << "' has NODATA at row " << (nrows_ - 1 - r) << ", column " << c
                           << " inside the study region";
                        throw DataError(os.str(), "fill or mask the raster so the region has complete coverage");
                    }
                }
            }
        }
    }

private:
    Point origin_;
    double cell_size_ = 1.0;
    int nrows_ = 0;
    int ncols_ = 0;
    Interpolation interp_ = Interpolation::bilinear;
    std::vector<std::string> names_;
    std::vector<std::vector<double>> layers_;
};

/// Reads a single-layer ESRI ASCII grid. NODATA cells become NaN.
inline CovariateField read_ascii_grid(const std::string& path, std::string layer_name = {}) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open raster '" + path + "'");
    int ncols = -1, nrows = -1;
    double xll = NAN, yll = NAN, cell = NAN, nodata = -9999.0;
    bool centered_x = false, centered_y = false;
    std::string key;
    std::size_t line = 0;
    for (int i = 0; i < 6; ++i) {
        const auto pos = in.tellg();
        if (!(in >> key)) break;
        std::string lower;
        for (char ch : key) lower += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        double value = 0.0;
        if (lower == "ncols" || lower == "nrows" || lower == "xllcorner" || lower == "yllcorner" ||
            lower == "xllcenter" || lower == "yllcenter" || lower == "cellsize" || lower == "nodata_value") {
            if (!(in >> value)) throw DataError(located(path, line + 1, lower, "missing header value"));
            ++line;
        } else {
            in.seekg(pos);
            break;
        }
        if (lower == "ncols") ncols = static_cast<int>(value);
        else if (lower == "nrows") nrows = static_cast<int>(value);
        else if (lower == "xllcorner") xll = value;
        else if (lower == "yllcorner") yll = value;
        else if (lower == "xllcenter") { xll = value; centered_x = true; }
        else if (lower == "yllcenter") { yll = value; centered_y = true; }
        else if (lower == "cellsize") cell = value;
        else nodata = value;
    }
    if (ncols <= 0 || nrows <= 0 || !std::isfinite(xll) || !std::isfinite(yll) || !(cell > 0.0))
        throw DataError(located(path, 0, "header", "incomplete ESRI ASCII grid header"),
                        "expected ncols, nrows, xllcorner, yllcorner, cellsize");
    if (centered_x) xll -= 0.5 * cell;
    if (centered_y) yll -= 0.5 * cell;
    std::vector<double> values(static_cast<std::size_t>(nrows) * ncols);
    for (int r = 0; r < nrows; ++r) {
        const int row_from_bottom = nrows - 1 - r;
        for (int c = 0; c < ncols; ++c) {
            double v = 0.0;
            if (!(in >> v))
                throw DataError(located(path, line + r + 1, "cells", "raster ends early or holds a non-numeric value"));
            values[static_cast<std::size_t>(row_from_bottom) * ncols + c] =
                (v == nodata) ? std::numeric_limits<double>::quiet_NaN() : v;
        }
    }
    CovariateField f({xll, yll}, cell, nrows, ncols);
    f.add_layer(layer_name.empty() ? path : std::move(layer_name), std::move(values));
    return f;
}

inline void write_ascii_grid(std::ostream& os, const CovariateField& f, std::size_t layer = 0,
                             double nodata = -9999.0) {
    os << "ncols " << f.ncols() << "\nnrows " << f.nrows() << "\n";
    os << std::setprecision(17) << "xllcorner " << f.origin().x << "\nyllcorner " << f.origin().y << "\ncellsize "
       << f.cell_size() << "\nNODATA_value " << nodata << "\n";
    const auto& v = f.layer(layer);
    for (int r = f.nrows() - 1; r >= 0; --r) {
        for (int c = 0; c < f.ncols(); ++c) {
            const double x = v[static_cast<std::size_t>(r) * f.ncols() + c];
            if (c) os << ' ';
            os << (std::isfinite(x) ? x : nodata);
        }
        os << '\n';
    }
}

struct SurrogateSpec {
    enum class Kind { transect_center, transect_buffer_average };
    Kind kind = Kind::transect_center;
    double buffer_radius = 0.0;

    static SurrogateSpec center() { return {Kind::transect_center, 0.0}; }
    static SurrogateSpec buffer(double r) { return {Kind::transect_buffer_average, r}; }
};

/// Covariate value substituted for an unknown individual location.
///
/// `transect_center` reads the raster at the point transect or the line
/// midpoint. `transect_buffer_average` averages over a square lattice with
/// spacing equal to the raster cell size, anchored at the first transect
/// vertex, keeping lattice points within `buffer_radius` of the transect
/// and inside the region. A zero radius on a line transect averages along
/// the line itself.
inline std::vector<double> surrogate_value(const CovariateField& f, const Transect& t, const SurrogateSpec& spec,
                                           const StudyRegion& region) {
    const std::size_t p = f.layer_count();
    if (spec.kind == SurrogateSpec::Kind::transect_center) return f.value_at(t.center());
    if (spec.buffer_radius < 0.0 || !std::isfinite(spec.buffer_radius))
        throw ConfigError("buffer radius must be finite and non-negative");
    const double h = f.cell_size();
    std::vector<double> sum(p, 0.0), tmp(p);
    std::size_t count = 0;
    if (spec.buffer_radius == 0.0) {
        if (t.kind == TransectKind::point) return f.value_at(t.center());
        const double len = t.length();
        const int m = std::max(1, static_cast<int>(std::ceil(len / h)));
        const Locus along = locus(t, 0.0, region, true);
        for (const Point& q : discretize_locus(along, std::max(2, m)).points) {
            f.values_at(q, tmp);
            for (std::size_t l = 0; l < p; ++l) sum[l] += tmp[l];
            ++count;
        }
    } else {
        const double r = spec.buffer_radius;
        const Point anchor = t.vertices.front();
        BoundingBox bb{anchor, anchor};
        for (const Point& v : t.vertices) {
            bb.min.x = std::min(bb.min.x, v.x);
            bb.min.y = std::min(bb.min.y, v.y);
            bb.max.x = std::max(bb.max.x, v.x);
            bb.max.y = std::max(bb.max.y, v.y);
        }
        const int i0 = static_cast<int>(std::floor((bb.min.x - r - anchor.x) / h));
        const int i1 = static_cast<int>(std::ceil((bb.max.x + r - anchor.x) / h));
        const int j0 = static_cast<int>(std::floor((bb.min.y - r - anchor.y) / h));
        const int j1 = static_cast<int>(std::ceil((bb.max.y + r - anchor.y) / h));
        for (int j = j0; j <= j1; ++j) {
            for (int i = i0; i <= i1; ++i) {
                const Point q{anchor.x + i * h, anchor.y + j * h};
                if (perpendicular_distance(q, t) > r || !region.contains(q)) continue;
                f.values_at(q, tmp);
                for (std::size_t l = 0; l < p; ++l) sum[l] += tmp[l];
                ++count;
            }
        }
    }
    if (count == 0) throw DataError("buffer around transect '" + t.id + "' contains no sample points in the region");
    for (double& s : sum) s /= static_cast<double>(count);
    return sum;
}

}  // namespace distfit

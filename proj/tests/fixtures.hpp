#pragma once

// Shared fixtures for the unit suites and the acceptance binary.

#include <cmath>
#include <filesystem>
#include <numbers>
#include <string>

#include "distfit/covariate.hpp"
#include "distfit/geometry.hpp"
#include "distfit/inference.hpp"
#include "distfit/likelihood.hpp"

namespace testing {

using namespace distfit;

inline double smooth_surface(Point s) {
    return std::sin(3.0 * s.x) + 0.5 * std::cos(2.0 * s.y) + s.x * s.y;
}

/// Unit-square raster of `smooth_surface` with `cells` cells per side.
inline CovariateField smooth_field(int cells = 200) {
    CovariateField f({0.0, 0.0}, 1.0 / cells, cells, cells);
    f.add_layer_from("smooth", smooth_surface);
    return f;
}

inline CovariateField constant_field(double c, int cells = 10) {
    CovariateField f({0.0, 0.0}, 1.0 / cells, cells, cells);
    f.add_layer_from("const", [c](Point) { return c; });
    return f;
}

/// Raster with no layers covering the unit square.
inline CovariateField empty_field() { return CovariateField({0.0, 0.0}, 1.0, 1, 1); }

inline DetectionRecord record(const std::string& id, double d, std::optional<Point> z = std::nullopt) {
    DetectionRecord r;
    r.transect_id = id;
    r.distance = d;
    r.location = z;
    return r;
}

/// Three point transects and three exactly located records in the unit square.
inline Dataset toy_point_dataset() {
    Dataset data{StudyRegion::unit_square(),
                 {Transect::make_point("A", {0.3, 0.3}), Transect::make_point("B", {0.7, 0.4}),
                  Transect::make_point("C", {0.5, 0.8})},
                 {}};
    const Point za{0.3 + 0.05 * std::cos(0.4), 0.3 + 0.05 * std::sin(0.4)};
    const Point zb{0.7 + 0.02 * std::cos(2.0), 0.4 + 0.02 * std::sin(2.0)};
    const Point zc{0.5 + 0.08 * std::cos(-1.0), 0.8 + 0.08 * std::sin(-1.0)};
    data.records = {record("A", 0.05, za), record("B", 0.02, zb), record("C", 0.08, zc)};
    data.resolve();
    return data;
}

/// Two straight line transects and three records.
inline Dataset toy_line_dataset() {
    Dataset data{StudyRegion::unit_square(),
                 {Transect::make_line("L1", {{0.1, 0.3}, {0.9, 0.3}}), Transect::make_line("L2", {{0.2, 0.75}, {0.8, 0.75}})},
                 {}};
    data.records = {record("L1", 0.04, Point{0.4, 0.34}), record("L1", 0.07, Point{0.65, 0.23}),
                    record("L2", 0.03, Point{0.5, 0.78})};
    data.resolve();
    return data;
}

/// n individuals around one point transect, unit square, no covariates.
inline Dataset homogeneous_data(int n) {
    Dataset data{StudyRegion::unit_square(), {Transect::make_point("A", {0.5, 0.5})}, {}};
    for (int i = 0; i < n; ++i) {
        const double a = 0.7 * i;
        data.records.push_back(record("A", 0.02 * (i + 1), Point{0.5 + 0.02 * (i + 1) * std::cos(a),
                                                                           0.5 + 0.02 * (i + 1) * std::sin(a)}));
    }
    data.resolve();
    return data;
}

inline ModelSpec homogeneous_spec() {
    ModelSpec ms;
    ms.variant = LoglikVariant::exact();
    ms.detection = {1e12, INFINITY};  // q = 1 everywhere
    ms.estimate_sigma = false;
    ms.quadrature = {2500, 64, 32, true};
    return ms;
}

inline std::string samples_dir() { return DISTFIT_SAMPLES_DIR; }

/// Fresh empty directory under the system temp path.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto p = std::filesystem::temp_directory_path() / ("distfit_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace testing

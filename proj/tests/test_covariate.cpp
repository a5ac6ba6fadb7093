#include "support.hpp"

#include <fstream>
#include <sstream>

using namespace distfit;
using Catch::Approx;

TEST_CASE("constant field values") {
    const CovariateField f = testing::constant_field(2.5);
    for (Point p : {Point{0.0, 0.0}, Point{0.33, 0.71}, Point{1.0, 1.0}}) CHECK(f.value_at(p).front() == 2.5);
    CovariateField g = f;
    g.set_interpolation(Interpolation::nearest);
    CHECK(g.value_at({0.5, 0.5}).front() == 2.5);
}

TEST_CASE("nearest returns the stored cell value at a center") {
    CovariateField f({0.0, 0.0}, 1.0, 2, 3, Interpolation::nearest);
    f.add_layer("v", {1, 2, 3, 4, 5, 6});  // bottom row first
    CHECK(f.value_at(f.cell_center(0, 0)).front() == 1);
    CHECK(f.value_at(f.cell_center(1, 2)).front() == 6);
    CHECK(f.value_at({2.2, 0.9}).front() == 3);
}

TEST_CASE("bilinear at the midpoint of four cells") {
    CovariateField f({0.0, 0.0}, 1.0, 2, 2);
    f.add_layer("v", {0, 0, 1, 1});
    CHECK(f.value_at({1.0, 1.0}).front() == Approx(0.5).epsilon(1e-15));
    // By-hand bilinear weights at (0.75, 1.25): ty = 0.75, tx = 0.25.
    CovariateField g({0.0, 0.0}, 1.0, 2, 2);
    g.add_layer("v", {1, 2, 3, 5});
    const double tx = 0.25, ty = 0.75;
    const double expect = (1 - ty) * ((1 - tx) * 1 + tx * 2) + ty * ((1 - tx) * 3 + tx * 5);
    CHECK(g.value_at({0.75, 1.25}).front() == Approx(expect).epsilon(1e-15));
    CHECK(g.value_at({0.1, 0.1}).front() == 1.0);  // clamped outside the outer centers
}

TEST_CASE("extent errors and stacking") {
    CovariateField f({0.0, 0.0}, 0.5, 2, 2);
    f.add_layer("a", {1, 2, 3, 4});
    CHECK_THROWS_AS(f.value_at({1.5, 0.5}), DataError);
    CHECK_THROWS_AS(f.add_layer("bad", {1, 2}), DataError);
    CovariateField g({0.0, 0.0}, 0.5, 2, 2);
    g.add_layer("b", {5, 6, 7, 8});
    f.stack(g);
    REQUIRE(f.layer_count() == 2);
    const auto v = f.value_at({0.25, 0.25});
    CHECK(v[0] == 1);
    CHECK(v[1] == 5);
    CovariateField h({0.1, 0.0}, 0.5, 2, 2);
    h.add_layer("c", {0, 0, 0, 0});
    CHECK_THROWS_AS(f.stack(h), DataError);
    CHECK_THROWS_AS(CovariateField({0, 0}, 0.0, 1, 1), DataError);
}

TEST_CASE("coverage validation") {
    CovariateField f({0.0, 0.0}, 0.25, 4, 4);
    std::vector<double> v(16, 1.0);
    v[5] = NAN;  // row 1 from bottom, col 1: center (0.375, 0.375)
    f.add_layer("v", v);
    CHECK_THROWS_AS(f.validate_covers(StudyRegion::unit_square()), DataError);
    CHECK_NOTHROW(f.validate_covers(StudyRegion::rectangle(0.5, 0.5, 1.0, 1.0)));
    CHECK_THROWS_AS(f.validate_covers(StudyRegion::rectangle(0.5, 0.5, 1.5, 1.0)), DataError);
}

TEST_CASE("ESRI ASCII grid round trip") {
    const auto dir = testing::scratch_dir("covariate");
    const std::string path = (dir / "g.asc").string();
    {
        std::ofstream out(path);
        out << "ncols 3\nnrows 2\nxllcorner 10\nyllcorner 20\ncellsize 5\nNODATA_value -9999\n"
               "1 2 -9999\n4 5 6\n";
    }
    const CovariateField f = read_ascii_grid(path, "elev");
    CHECK(f.ncols() == 3);
    CHECK(f.nrows() == 2);
    CHECK(f.origin() == Point{10, 20});
    CHECK(f.layer_names().front() == "elev");
    CHECK(f.layer(0)[0] == 4);  // bottom row comes first
    CHECK(std::isnan(f.layer(0)[5]));
    std::ostringstream os;
    write_ascii_grid(os, f);
    std::ofstream(dir / "h.asc") << os.str();
    const CovariateField g = read_ascii_grid((dir / "h.asc").string());
    CHECK(g.aligned_with(f));
    CHECK(g.layer(0)[2] == 6);
    CHECK(std::isnan(g.layer(0)[5]));

    {
        std::ofstream out(dir / "c.asc");
        out << "ncols 2\nnrows 1\nxllcenter 0.5\nyllcenter 0.5\ncellsize 1\n7 8\n";
    }
    const CovariateField c = read_ascii_grid((dir / "c.asc").string());
    CHECK(c.origin() == Point{0.0, 0.0});
    {
        std::ofstream out(dir / "short.asc");
        out << "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\n1 2 3\n";
    }
    CHECK_THROWS_AS(read_ascii_grid((dir / "short.asc").string()), DataError);
    CHECK_THROWS_AS(read_ascii_grid((dir / "missing.asc").string()), DataError);
}

TEST_CASE("surrogates on a constant field equal the constant") {
    const CovariateField f = testing::constant_field(-1.25, 50);
    const StudyRegion sq = StudyRegion::unit_square();
    const Transect pt = Transect::make_point("p", {0.3, 0.6});
    const Transect ln = Transect::make_line("l", {{0.2, 0.2}, {0.7, 0.4}});
    for (const Transect* t : {&pt, &ln}) {
        for (SurrogateSpec s : {SurrogateSpec::center(), SurrogateSpec::buffer(0.06), SurrogateSpec::buffer(0.0)})
            CHECK(surrogate_value(f, *t, s, sq).front() == Approx(-1.25).epsilon(1e-14));
    }
}

TEST_CASE("surrogate of x(s) = s_x at a centered point transect") {
    CovariateField f({0.0, 0.0}, 0.005, 200, 200);
    f.add_layer_from("x", [](Point s) { return s.x; });
    const StudyRegion sq = StudyRegion::unit_square();
    const Transect t = Transect::make_point("p", {0.5, 0.5});
    CHECK(surrogate_value(f, t, SurrogateSpec::center(), sq).front() == Approx(0.5).epsilon(1e-12));
    const double buffered = surrogate_value(f, t, SurrogateSpec::buffer(0.06), sq).front();

    // Oracle: fine-grid disk average of s_x.
    double sum = 0.0;
    int count = 0;
    const int n = 1200;
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            const double x = 0.44 + 0.12 * (i + 0.5) / n, y = 0.44 + 0.12 * (j + 0.5) / n;
            if (std::hypot(x - 0.5, y - 0.5) <= 0.06) {
                sum += x;
                ++count;
            }
        }
    }
    CHECK(buffered == Approx(0.5).margin(1e-3));
    CHECK(buffered == Approx(sum / count).margin(1e-3));
}

TEST_CASE("buffer average shrinks toward the point value") {
    const CovariateField f = testing::smooth_field(2000);
    const StudyRegion sq = StudyRegion::unit_square();
    const Transect t = Transect::make_point("p", {0.41, 0.57});
    const double at = f.value_at(t.center()).front();
    double prev = INFINITY;
    for (double r : {0.1, 0.01, 0.001}) {
        const double err = std::abs(surrogate_value(f, t, SurrogateSpec::buffer(r), sq).front() - at);
        CHECK(err <= prev);
        prev = err;
    }
    CHECK(prev < 1e-4);
}

TEST_CASE("along-line average for a zero buffer radius") {
    CovariateField f({0.0, 0.0}, 0.001, 1000, 1000);
    f.add_layer_from("x", [](Point s) { return s.x * s.x; });
    const StudyRegion sq = StudyRegion::unit_square();
    const Transect t = Transect::make_line("l", {{0.2, 0.5}, {0.8, 0.5}});
    // Mean of x^2 over [0.2, 0.8].
    const double exact = (0.8 * 0.8 * 0.8 - 0.2 * 0.2 * 0.2) / 3.0 / 0.6;
    CHECK(surrogate_value(f, t, SurrogateSpec::buffer(0.0), sq).front() == Approx(exact).epsilon(1e-5));
    // Bilinear between centers 0.4995 and 0.5005.
    CHECK(surrogate_value(f, t, SurrogateSpec::center(), sq).front() == Approx(0.25 + 0.0005 * 0.0005).epsilon(1e-12));
    CHECK_THROWS_AS(surrogate_value(f, t, SurrogateSpec::buffer(-1.0), sq), ConfigError);
}

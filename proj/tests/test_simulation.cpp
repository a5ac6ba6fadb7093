#include "support.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <sstream>

#include "distfit/simulation.hpp"

using namespace distfit;
using Catch::Approx;

TEST_CASE("zero intensity gives an empty pattern") {
    Rng rng(1);
    const auto pts = simulate_ippp([](Point) { return 0.0; }, 0.0, StudyRegion::unit_square(), rng);
    CHECK(pts.empty());
}

TEST_CASE("constant intensity: counts and uniformity") {
    const StudyRegion unit = StudyRegion::unit_square();
    double total = 0.0;
    std::array<double, 4> quad{};
    const int reps = 1000;
    for (int r = 0; r < reps; ++r) {
        Rng rng(derive_seed(99, static_cast<std::uint64_t>(r)));
        const auto pts = simulate_ippp([](Point) { return 100.0; }, 100.0, unit, rng);
        total += static_cast<double>(pts.size());
        for (const Point& p : pts) {
            REQUIRE(unit.contains(p));
            quad[(p.x < 0.5 ? 0 : 1) + (p.y < 0.5 ? 0 : 2)] += 1.0;
        }
    }
    CHECK(total / reps == Approx(100.0).margin(3.0));
    double chi2 = 0.0;
    const double expected = total / 4.0;
    for (double o : quad) chi2 += (o - expected) * (o - expected) / expected;
    const double p = 1.0 - boost::math::cdf(boost::math::chi_squared(3.0), chi2);
    CHECK(p > 0.01);
}

TEST_CASE("simulated pattern follows the covariate") {
    const CovariateField f = testing::smooth_field(100);
    const auto pts = simulate_ippp(f, {6.0, {1.5}}, StudyRegion::unit_square(), 4);
    REQUIRE(pts.size() > 500);
    double mean_x = 0.0;
    for (const Point& p : pts) mean_x += f.value_at(p).front();
    mean_x /= static_cast<double>(pts.size());
    double area_mean = 0.0;
    for (double v : f.layer(0)) area_mean += v;
    area_mean /= static_cast<double>(f.layer(0).size());
    CHECK(mean_x > area_mean + 0.1);
    CHECK(simulate_ippp(f, {6.0, {1.5}}, StudyRegion::unit_square(), 4).size() == pts.size());
}

TEST_CASE("detection at the limits") {
    const std::vector<Transect> ts{Transect::make_point("A", {0.5, 0.5})};
    std::vector<Point> on(200, Point{0.5, 0.5});
    std::vector<Point> far(200, Point{0.5, 0.57});
    const DetectionParams dp{0.025, 0.06};
    const Dataset a = simulate_detection(on, ts, StudyRegion::unit_square(), dp, 3);
    CHECK(a.n() == 200);
    for (const auto& r : a.records) {
        CHECK(r.distance == 0.0);
        CHECK(r.transect_id == "A");
        CHECK(r.location.has_value());
    }
    const Dataset b = simulate_detection(far, ts, StudyRegion::unit_square(), dp, 3);
    CHECK(b.n() == 0);
}

TEST_CASE("detections are attributed to the nearest transect") {
    const std::vector<Transect> ts{Transect::make_point("A", {0.2, 0.5}), Transect::make_point("B", {0.8, 0.5})};
    const std::vector<Point> pts{{0.21, 0.5}, {0.79, 0.5}, {0.45, 0.5}};
    const Dataset d = simulate_detection(pts, ts, StudyRegion::unit_square(), {1e9, INFINITY}, 1);
    REQUIRE(d.n() == 3);
    CHECK(d.records[0].transect_id == "A");
    CHECK(d.records[1].transect_id == "B");
    CHECK(d.records[2].transect_id == "A");
    CHECK(d.records[2].distance == Approx(0.25));
}

TEST_CASE("transect placement") {
    ScenarioSpec sp;
    sp.field = std::make_shared<CovariateField>(default_simulation_field(100));
    for (Placement pl : {Placement::convenience, Placement::random}) {
        sp.placement = pl;
        const auto ts = place_transects(sp);
        REQUIRE(ts.size() == 16);
        for (std::size_t i = 0; i < ts.size(); ++i)
            for (std::size_t j = i + 1; j < ts.size(); ++j)
                CHECK(norm(ts[i].vertices[0] - ts[j].vertices[0]) > 2.0 * sp.detection.w);
        const auto again = place_transects(sp);
        for (std::size_t i = 0; i < ts.size(); ++i) CHECK(again[i].vertices[0] == ts[i].vertices[0]);
    }
    // Convenience sites start at the lowest-covariate candidate.
    sp.placement = Placement::convenience;
    const auto ts = place_transects(sp);
    double lowest = INFINITY;
    for (int j = 0; j < 8; ++j)
        for (int i = 0; i < 8; ++i) lowest = std::min(lowest, sp.field->value_at({(i + 0.5) / 8, (j + 0.5) / 8}).front());
    CHECK(sp.field->value_at(ts[0].vertices[0]).front() == lowest);
    double mean_chosen = 0.0;
    for (const auto& t : ts) mean_chosen += sp.field->value_at(t.vertices[0]).front() / 16.0;
    double mean_all = 0.0;
    for (double v : sp.field->layer(0)) mean_all += v / static_cast<double>(sp.field->layer(0).size());
    CHECK(mean_chosen < mean_all);

    sp.n_transects = 500;
    CHECK_THROWS_AS(place_transects(sp), ConfigError);
}

TEST_CASE("recorded-distance errors") {
    Dataset data{StudyRegion::unit_square(), {Transect::make_line("L", {{0.1, 0.5}, {0.9, 0.5}})}, {}};
    for (int i = 0; i < 400; ++i) data.records.push_back(testing::record("L", i == 0 ? 0.0 : 0.1, std::nullopt));
    data.resolve();
    Dataset none = data;
    add_distance_error(none, {}, 1);
    for (std::size_t i = 0; i < data.records.size(); ++i) CHECK(none.records[i].distance == data.records[i].distance);

    for (ErrorFamily fam : {ErrorFamily::truncated_normal, ErrorFamily::laplace}) {
        const DistanceErrorParams ep{fam, 0.2, 0.0, 0.15};
        Dataset a = data, b = data;
        add_distance_error(a, ep, 5);
        add_distance_error(b, ep, 5);
        CHECK(a.records[0].distance == 0.0);
        double mean = 0.0;
        for (std::size_t i = 0; i < a.records.size(); ++i) {
            CHECK(a.records[i].distance == b.records[i].distance);
            CHECK(a.records[i].distance >= 0.0);
            CHECK(a.records[i].distance <= 0.15);
            if (i > 0) mean += a.records[i].distance / 399.0;
        }
        CHECK(mean == Approx(0.1).margin(0.01));
    }
}

TEST_CASE("small experiments are deterministic and table shaped") {
    ScenarioSpec sp;
    sp.field = std::make_shared<CovariateField>(default_simulation_field(100));
    sp.replicates = 3;
    sp.quadrature = {2500, 32, 16, true};
    sp.threads = 1;
    const ExperimentReport r1 = run_experiment(sp);
    sp.threads = 2;
    const ExperimentReport r2 = run_experiment(sp);
    std::ostringstream s1, s2, p1, p2;
    write_summary_csv(s1, {r1});
    write_summary_csv(s2, {r2});
    write_replicates_csv(p1, {r1});
    write_replicates_csv(p2, {r2});
    CHECK(s1.str() == s2.str());
    CHECK(p1.str() == p2.str());
    CHECK(s1.str().rfind("scenario,transect,n_bar,cp_model1,cp_model2,cp_model3,cp_model4,efficiency", 0) == 0);
    const std::string rows = p1.str();
    CHECK(std::count(rows.begin(), rows.end(), '\n') == 1 + 3 * experiment_models);
    CHECK(r1.mean_n > 0.0);
    for (const auto& m : r1.models) CHECK(m.used + m.excluded == 3);

    int calls = 0;
    sp.threads = 1;
    run_experiment(sp, [&](int done, int total) {
        ++calls;
        CHECK(done <= total);
    });
    CHECK(calls == 3);
    sp.replicates = 0;
    CHECK_THROWS_AS(run_experiment(sp), ConfigError);
}

TEST_CASE("no covariate effect: exact-location coverage is nominal") {
    ScenarioSpec sp;
    sp.field = std::make_shared<CovariateField>(default_simulation_field(100));
    sp.truth = {9.0, {0.0}};
    sp.placement = Placement::random;
    sp.replicates = 120;
    sp.quadrature = {10000, 32, 16, true};
    sp.threads = 1;
    const ExperimentReport r = run_experiment(sp);
    // 3 binomial standard deviations around 0.95 at 120 replicates.
    const double band = 3.0 * std::sqrt(0.95 * 0.05 / r.models[0].used);
    CHECK(r.models[0].used >= 110);
    CHECK(std::abs(r.models[0].coverage - 0.95) <= band);
    CHECK(std::abs(r.models[3].coverage - 0.95) <= band);
}

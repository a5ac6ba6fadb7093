#include "support.hpp"

#include "distfit/model.hpp"
#include "distfit/quadrature.hpp"

using namespace distfit;
using Catch::Approx;

TEST_CASE("intensity examples") {
    const CovariateField zero = testing::constant_field(0.0);
    CHECK(intensity({0.4, 0.4}, zero, {0.0, {0.0}}) == 1.0);
    CHECK(intensity({0.4, 0.4}, zero, {9.0, {1.0}}) == Approx(8103.08).epsilon(1e-6));
    const CovariateField f = testing::smooth_field(50);
    const IntensityParams ip{0.3, {0.8}};
    const IntensityParams doubled{0.3 + std::log(2.0), {0.8}};
    CHECK(intensity({0.2, 0.9}, f, doubled) == Approx(2.0 * intensity({0.2, 0.9}, f, ip)).epsilon(1e-14));
    CHECK_THROWS_AS(intensity({0.2, 0.9}, f, {0.0, {}}), ConfigError);
}

TEST_CASE("detection function examples") {
    const DetectionParams sim{0.025, 0.06};
    CHECK(detection_prob(0.0, sim) == 1.0);
    CHECK(detection_prob(0.025, sim) == Approx(std::exp(-1.0)).epsilon(1e-15));
    CHECK(detection_prob(0.025, sim) == Approx(0.367879).margin(1e-6));
    CHECK(detection_prob(0.06, sim) == 0.0);
    CHECK(log_detection_prob(0.06, sim) == -INFINITY);
    double prev = 2.0;
    for (int k = 0; k < 600; ++k) {
        const double q = detection_prob(k * 1e-4, sim);
        CHECK(q <= prev);
        prev = q;
    }
    CHECK_THROWS_AS((DetectionParams{0.0, 1.0}.validate()), ConfigError);
    CHECK_THROWS_AS((DetectionParams{1.0, 0.0}.validate()), ConfigError);
}

static double integrate_density(double true_d, const DistanceErrorParams& ep) {
    // Composite Simpson on [lower, upper] with a dense grid.
    const int n = 200000;
    const double h = (ep.upper - ep.lower) / n;
    double s = error_density(ep.lower, true_d, ep) + error_density(ep.upper, true_d, ep);
    for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * error_density(ep.lower + i * h, true_d, ep);
    return s * h / 3.0;
}

TEST_CASE("error density examples") {
    DistanceErrorParams ep{ErrorFamily::truncated_normal, 0.1, 0.0, 1000.0};
    CHECK(error_density(50.0, 50.0, ep) == Approx(1.0 / (std::sqrt(2.0 * std::numbers::pi) * 5.0)).epsilon(1e-12));
    CHECK(error_density(50.0, 50.0, ep) == Approx(0.07979).margin(1e-5));
    for (ErrorFamily fam : {ErrorFamily::truncated_normal, ErrorFamily::laplace}) {
        DistanceErrorParams e{fam, 0.1, 0.0, 150.0};
        CHECK(error_density(200.0, 60.0, e) == 0.0);
        CHECK_THROWS_AS(error_density(10.0, 0.0, e), NumericalError);
    }
    CHECK_THROWS_AS(error_density(1.0, 1.0, DistanceErrorParams{}), ConfigError);
}

TEST_CASE("error densities integrate to one over the bounds") {
    for (ErrorFamily fam : {ErrorFamily::truncated_normal, ErrorFamily::laplace}) {
        for (ErrorSpread spread : {ErrorSpread::sd_proportional, ErrorSpread::variance_proportional}) {
            const DistanceErrorParams ep{fam, 0.3, 0.0, 150.0, spread};
            for (double u : {1.0, 10.0, 60.0}) CHECK(integrate_density(u, ep) == Approx(1.0).margin(1e-6));
        }
    }
}

TEST_CASE("error density at the truth grows as theta shrinks") {
    for (ErrorFamily fam : {ErrorFamily::truncated_normal, ErrorFamily::laplace}) {
        double prev = 0.0;
        for (double theta : {0.5, 0.1, 0.02}) {
            const double v = error_density(20.0, 20.0, DistanceErrorParams{fam, theta, 0.0, 150.0});
            CHECK(v > prev);
            prev = v;
        }
    }
}

TEST_CASE("laplace spread is parameterized through the standard deviation") {
    const DistanceErrorParams ep{ErrorFamily::laplace, 0.2, -1e6, 1e6};
    const double u = 30.0;
    // Second moment about u by Simpson on a wide window.
    const int n = 400000;
    const double a = u - 400.0, b = u + 400.0, h = (b - a) / n;
    double s = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double x = a + i * h;
        const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        s += w * (x - u) * (x - u) * error_density(x, u, ep);
    }
    CHECK(std::sqrt(s * h / 3.0) == Approx(0.2 * u).epsilon(1e-6));
    CHECK(ep.sd(u) == Approx(6.0));
    const DistanceErrorParams var{ErrorFamily::truncated_normal, 0.5, 0.0, 150.0, ErrorSpread::variance_proportional};
    CHECK(var.sd(8.0) == Approx(2.0));
    CHECK_THROWS_AS((DistanceErrorParams{ErrorFamily::laplace, 0.0}.validate()), ConfigError);
    CHECK_THROWS_AS((DistanceErrorParams{ErrorFamily::laplace, 0.1, 5.0, 5.0}.validate()), ConfigError);
}

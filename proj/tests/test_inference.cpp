#include "support.hpp"

#include "distfit/inference.hpp"
#include "distfit/simulation.hpp"

using namespace distfit;
using Catch::Approx;

using testing::homogeneous_data;
using testing::homogeneous_spec;

TEST_CASE("wald interval examples") {
    const auto [lo, hi] = wald_ci(0.0, 1.0);
    CHECK(lo == Approx(-1.959964).margin(1e-6));
    CHECK(hi == Approx(1.959964).margin(1e-6));
    const auto deg = wald_ci(0.3, 0.0);
    CHECK(deg.first == 0.3);
    CHECK(deg.second == 0.3);
    const auto t2 = wald_ci(0.042, 0.00714);
    CHECK(t2.first == Approx(0.028).margin(5e-4));
    CHECK(t2.second == Approx(0.056).margin(5e-4));
    CHECK_THROWS_AS(wald_ci(0.0, -1.0), ConfigError);
    CHECK(normal_quantile(0.975) == Approx(1.959963985).epsilon(1e-9));
}

TEST_CASE("aic examples") {
    CHECK(aic(0.0, 1) == 2.0);
    CHECK(aic(-700.5, 2) == Approx(1405.0));
    CHECK(aic(-10.0, 3) > aic(-9.0, 3));
    CHECK_THROWS_AS(aic(0.0, 0), ConfigError);
}

TEST_CASE("homogeneous Poisson closed-form estimate and interval") {
    const Dataset data = homogeneous_data(10);
    const CovariateField f = testing::empty_field();
    const FitResult fr = fit(data, f, homogeneous_spec());
    REQUIRE(fr.converged);
    REQUIRE(fr.has_covariance());
    CHECK(fr.k == 1);
    CHECK(fr.names == std::vector<std::string>{"beta0"});
    CHECK(fr.estimates[0] == Approx(std::log(10.0)).margin(1e-4));
    // Observed information of n b0 - exp(b0) at the maximum is n.
    const double se = 1.0 / std::sqrt(10.0);
    CHECK(fr.se(0) == Approx(se).margin(1e-4));
    CHECK(fr.wald_ci[0].first == Approx(std::log(10.0) - 1.959964 * se).margin(1e-3));
    CHECK(fr.wald_ci[0].second == Approx(std::log(10.0) + 1.959964 * se).margin(1e-3));
    CHECK(fr.loglik == Approx(10.0 * std::log(10.0) - 10.0).margin(1e-8));
    CHECK(fr.aic == Approx(2.0 - 2.0 * fr.loglik));
}

TEST_CASE("perturbed starting values reach the same optimum") {
    const Dataset data = homogeneous_data(10);
    const CovariateField f = testing::empty_field();
    const FitResult base = fit(data, f, homogeneous_spec());
    for (double factor : {0.9, 1.1}) {
        const FitResult r = fit(data, f, homogeneous_spec(), {}, Eigen::VectorXd::Constant(1, factor * std::log(10.0)));
        CHECK(r.estimates[0] == Approx(base.estimates[0]).margin(1e-4));
    }

    // A covariate and estimated sigma on simulated data.
    auto field = std::make_shared<CovariateField>(testing::smooth_field(100));
    ScenarioSpec sp;
    sp.field = field;
    sp.truth = {7.0, {1.0}};
    sp.detection = {0.05, 0.1};
    sp.n_transects = 8;
    sp.placement = Placement::random;
    const auto transects = place_transects(sp);
    const auto pts = simulate_ippp(*field, sp.truth, sp.region, 11);
    const Dataset data2 = simulate_detection(pts, transects, sp.region, sp.detection, 12);
    ModelSpec ms;
    ms.variant = LoglikVariant::exact();
    ms.detection = sp.detection;
    ms.quadrature = {10000, 64, 32, true};
    const FitResult r0 = fit(data2, *field, ms);
    REQUIRE(r0.converged);
    for (double factor : {0.9, 1.1}) {
        const FitResult r = fit(data2, *field, ms, {}, Eigen::VectorXd(r0.estimates * factor));
        CHECK((r.estimates - r0.estimates).cwiseAbs().maxCoeff() < 1e-4);
    }
}

TEST_CASE("fit results are internally consistent") {
    auto field = std::make_shared<CovariateField>(testing::smooth_field(100));
    ScenarioSpec sp;
    sp.field = field;
    sp.truth = {7.5, {1.0}};
    sp.detection = {0.04, 0.1};
    sp.placement = Placement::random;
    const auto transects = place_transects(sp);
    const Dataset data = simulate_detection(simulate_ippp(*field, sp.truth, sp.region, 5), transects, sp.region,
                                            sp.detection, 6);
    REQUIRE(data.n() > 30);
    for (LoglikVariant v : {LoglikVariant::exact(), LoglikVariant::locus()}) {
        ModelSpec ms;
        ms.variant = v;
        ms.detection = sp.detection;
        ms.quadrature = {10000, 64, 32, true};
        const FitResult fr = fit(data, *field, ms);
        REQUIRE(fr.converged);
        REQUIRE(fr.has_covariance());
        CHECK(fr.k == 3);
        CHECK(fr.names == std::vector<std::string>{"beta0", "beta1", "log_sigma"});
        const Eigen::MatrixXd& V = *fr.covariance;
        CHECK((V - V.transpose()).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(V).eigenvalues().minCoeff() > 0.0);
        for (std::size_t i = 0; i < fr.wald_ci.size(); ++i) {
            CHECK(fr.wald_ci[i].first <= fr.estimates[static_cast<Eigen::Index>(i)]);
            CHECK(fr.estimates[static_cast<Eigen::Index>(i)] <= fr.wald_ci[i].second);
        }
        CHECK(fr.aic == Approx(2.0 * 3 - 2.0 * fr.loglik));
        CHECK(fr.detection.sigma == Approx(std::exp(fr.estimates[2])));
        CHECK(std::abs(fr.estimates[1] - 1.0) < 4.0 * fr.se(1));
        CHECK(std::abs(fr.detection.sigma - 0.04) < 0.015);
    }
}

TEST_CASE("distance-error fits estimate theta on the log scale") {
    auto field = std::make_shared<CovariateField>(testing::smooth_field(100));
    Dataset data{StudyRegion::unit_square(),
                 {Transect::make_line("L1", {{0.1, 0.25}, {0.9, 0.25}}), Transect::make_line("L2", {{0.1, 0.75}, {0.9, 0.75}})},
                 {}};
    data = simulate_detection(simulate_ippp(*field, {6.0, {1.0}}, data.region, 3), data.transects, data.region,
                              {0.05, 0.15}, 4);
    add_distance_error(data, {ErrorFamily::truncated_normal, 0.1, 0.0, 1.0}, 9);
    ModelSpec ms;
    ms.variant = LoglikVariant::distance_error();
    ms.detection = {0.05, 0.15};
    ms.distance_error = {ErrorFamily::truncated_normal, 0.2, 0.0, 1.0};
    ms.quadrature = {10000, 32, 32, true};
    const FitResult fr = fit(data, *field, ms);
    REQUIRE(fr.converged);
    CHECK(fr.k == 4);
    CHECK(fr.names.back() == "log_theta");
    CHECK(fr.distance_error.theta == Approx(std::exp(fr.estimates[3])));
    // theta trades off against sigma under half-normal detection, so only the
    // likelihood ordering is checked: the optimum beats the truth and the start.
    const LoglikValue at_truth = loglik_distance_error(data, *field, {6.0, {1.0}}, {0.05, 0.15},
                                                       {ErrorFamily::truncated_normal, 0.1, 0.0, 1.0}, ms.quadrature);
    CHECK(fr.loglik >= at_truth.value);
    ModelSpec start = ms;
    CHECK(fr.loglik >= loglik_distance_error(data, *field, {6.0, {1.0}}, {0.05, 0.15}, start.distance_error, ms.quadrature).value);
}

TEST_CASE("non-convergence keeps the best point and flags it") {
    const Dataset data = homogeneous_data(10);
    FitControls fc;
    fc.optimizer.max_evals = 3;
    const FitResult fr = fit(data, testing::empty_field(), homogeneous_spec(), fc, Eigen::VectorXd::Constant(1, 0.0));
    CHECK_FALSE(fr.converged);
    CHECK_FALSE(fr.has_covariance());
    CHECK(fr.wald_ci.empty());
    CHECK(std::isfinite(fr.loglik));
    CHECK_FALSE(fr.message.empty());
}

TEST_CASE("a singular Hessian leaves the covariance absent") {
    // Constant covariate: beta0 and beta1 are confounded.
    const Dataset data = homogeneous_data(10);
    const CovariateField f = testing::constant_field(1.0);
    ModelSpec ms = homogeneous_spec();
    const FitResult fr = fit(data, f, ms);
    CHECK(fr.converged);
    CHECK_FALSE(fr.has_covariance());
    CHECK(fr.message.find("singular") != std::string::npos);
    CHECK(std::isnan(fr.se(0)));
}

TEST_CASE("bootstrap percentile interval agrees with the Wald interval") {
    const Dataset data = homogeneous_data(10);
    const FitResult fr = fit(data, testing::empty_field(), homogeneous_spec());
    REQUIRE(fr.has_covariance());
    auto identity = [](const Eigen::VectorXd& t) { return t; };
    const BootstrapResult b = bootstrap_derived(fr, identity, 100000, 42);
    const double wald_width = fr.wald_ci[0].second - fr.wald_ci[0].first;
    CHECK(std::abs(b.ci[0].first - fr.wald_ci[0].first) < 0.02 * wald_width);
    CHECK(std::abs(b.ci[0].second - fr.wald_ci[0].second) < 0.02 * wald_width);
    CHECK(std::abs((b.ci[0].second - b.ci[0].first) - wald_width) < 0.02 * wald_width);

    const BootstrapResult again = bootstrap_derived(fr, identity, 100000, 42);
    REQUIRE(again.draws.size() == b.draws.size());
    CHECK(std::memcmp(again.draws.data(), b.draws.data(), sizeof(double) * b.draws.size()) == 0);
    const BootstrapResult other = bootstrap_derived(fr, identity, 1000, 43);
    CHECK(other.draws(0, 0) != b.draws(0, 0));

    const BootstrapResult ex = bootstrap_derived(
        fr, [](const Eigen::VectorXd& t) { return Eigen::VectorXd::Constant(1, std::exp(t[0])); }, 100000, 42);
    CHECK(ex.ci[0].first == Approx(std::exp(b.ci[0].first)).epsilon(1e-14));
    CHECK(ex.ci[0].second == Approx(std::exp(b.ci[0].second)).epsilon(1e-14));
    // Interval bounds are order statistics of the draws.
    const double* begin = b.draws.data();
    CHECK(std::find(begin, begin + b.draws.size(), b.ci[0].first) != begin + b.draws.size());
}

TEST_CASE("bootstrap edge cases") {
    FitResult fr;
    fr.layout.n_beta = 0;
    fr.estimates = Eigen::VectorXd::Constant(1, 2.0);
    CHECK_THROWS_AS(bootstrap_derived(fr, [](const Eigen::VectorXd& t) { return t; }, 200, 1), NumericalError);
    fr.covariance = Eigen::MatrixXd::Zero(1, 1);
    CHECK_THROWS_AS(bootstrap_derived(fr, [](const Eigen::VectorXd& t) { return t; }, 99, 1), ConfigError);
    const BootstrapResult b = bootstrap_derived(fr, [](const Eigen::VectorXd& t) { return t; }, 500, 1);
    CHECK((b.draws.array() == 2.0).all());
    CHECK(b.ci[0].first == 2.0);
    CHECK(b.ci[0].second == 2.0);
}

TEST_CASE("abundance estimates") {
    FitResult fr;
    fr.layout.n_beta = 0;
    fr.names = {"beta0"};
    fr.estimates = Eigen::VectorXd::Constant(1, 4.0);
    fr.covariance = Eigen::MatrixXd::Constant(1, 1, 0.01);
    const CovariateField none = testing::empty_field();
    const AbundanceResult whole = abundance_estimate(fr, none, StudyRegion::unit_square(), 2500, 1000, 3);
    CHECK(whole.estimate == Approx(std::exp(4.0)).epsilon(1e-12));
    CHECK(whole.ci.first < whole.estimate);
    CHECK(whole.estimate < whole.ci.second);

    FitResult cov;
    cov.layout.n_beta = 1;
    cov.names = {"beta0", "beta1"};
    cov.estimates = Eigen::Vector2d(3.0, 0.8);
    cov.covariance = Eigen::Matrix2d::Identity() * 1e-3;
    const CovariateField f = testing::smooth_field(400);
    const StudyRegion a = StudyRegion::rectangle(0.2, 0.2, 0.5, 0.6);
    const StudyRegion b = StudyRegion::rectangle(0.1, 0.1, 0.7, 0.9);
    const AbundanceResult ea = abundance_estimate(cov, f, a, 40000, 200, 1);
    const AbundanceResult eb = abundance_estimate(cov, f, b, 40000, 200, 1);
    CHECK(ea.estimate < eb.estimate);
    // Fine-grid oracle of exp(3 + 0.8 x(s)) over a.
    double s = 0.0;
    const int n = 1500;
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i)
            s += std::exp(3.0 + 0.8 * testing::smooth_surface({0.2 + 0.3 * (i + 0.5) / n, 0.2 + 0.4 * (j + 0.5) / n}));
    CHECK(ea.estimate == Approx(s * 0.12 / (static_cast<double>(n) * n)).epsilon(1e-3));
    const StudyRegion unit = StudyRegion::unit_square();
    CHECK_THROWS_AS(abundance_estimate(cov, f, StudyRegion::rectangle(0.5, 0.5, 1.5, 1.0), 1000, 200, 1, &unit),
                    DataError);
}

TEST_CASE("predicted surfaces") {
    FitResult fr;
    fr.layout.n_beta = 1;
    fr.estimates = Eigen::Vector2d(1.5, -0.7);
    const CovariateField c = testing::constant_field(2.0, 8);
    const CovariateField flat = predict_surface(fr, c, GridSpec::like(c));
    for (double v : flat.layer(0)) CHECK(v == Approx(std::exp(1.5 - 1.4)).epsilon(1e-15));

    const CovariateField f = testing::smooth_field(50);
    const CovariateField surf = predict_surface(fr, f, GridSpec::like(f));
    REQUIRE(surf.aligned_with(f));
    for (std::size_t k = 0; k < surf.layer(0).size(); ++k)
        CHECK(std::abs(surf.layer(0)[k] - std::exp(1.5 - 0.7 * f.layer(0)[k])) <= 1e-12);
    FitResult wrong;
    wrong.layout.n_beta = 2;
    wrong.estimates = Eigen::Vector3d(0, 0, 0);
    CHECK_THROWS_AS(predict_surface(wrong, f, GridSpec::like(f)), ConfigError);
}

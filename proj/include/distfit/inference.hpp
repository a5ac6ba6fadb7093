#pragma once

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "distfit/covariate.hpp"
#include "distfit/error.hpp"
#include "distfit/likelihood.hpp"
#include "distfit/model.hpp"
#include "distfit/optim.hpp"
#include "distfit/rng.hpp"

namespace distfit {

/// What a fit estimates and which values stay fixed.
struct ModelSpec {
    LoglikVariant variant = LoglikVariant::locus();
    DetectionParams detection;          // sigma is the start value when estimated; w is always fixed
    bool estimate_sigma = true;
    DistanceErrorParams distance_error; // used by the distance_error variant; theta is the start value
    LocusNormalization locus_normalization = LocusNormalization::recorded_distance;
    QuadratureScheme quadrature;
    std::optional<IntensityParams> init;  // default start when absent
};

struct FitControls {
    NelderMeadControls optimizer;
    double hessian_step = 1e-4;
    double singular_tol = 1e-6;  // smallest Hessian eigenvalue relative to the largest
    double level = 0.95;
};

/// Parameter vector layout: beta0, beta_1..beta_p, [log_sigma], [log_theta].
struct ParameterLayout {
    std::size_t n_beta = 0;
    bool has_log_sigma = false;
    bool has_log_theta = false;

    std::size_t size() const { return 1 + n_beta + has_log_sigma + has_log_theta; }
    std::size_t sigma_index() const { return 1 + n_beta; }
    std::size_t theta_index() const { return 1 + n_beta + has_log_sigma; }

    std::vector<std::string> names() const {
        std::vector<std::string> out{"beta0"};
        for (std::size_t j = 0; j < n_beta; ++j) out.push_back("beta" + std::to_string(j + 1));
        if (has_log_sigma) out.emplace_back("log_sigma");
        if (has_log_theta) out.emplace_back("log_theta");
        return out;
    }
};

struct FitResult {
    ParameterLayout layout;
    std::vector<std::string> names;
    Eigen::VectorXd estimates;                  // optimizer scale
    std::optional<Eigen::MatrixXd> covariance;  // inverse Hessian of -loglik
    std::vector<std::pair<double, double>> wald_ci;
    double loglik = -std::numeric_limits<double>::infinity();
    double aic = std::numeric_limits<double>::infinity();
    int k = 0;
    bool converged = false;
    int n_evals = 0;
    std::string message;
    DetectionParams detection;     // at the estimate
    DistanceErrorParams distance_error;

    bool has_covariance() const { return covariance.has_value(); }

    std::size_t index_of(const std::string& name) const {
        const auto it = std::find(names.begin(), names.end(), name);
        if (it == names.end()) throw ConfigError("fit has no parameter '" + name + "'");
        return static_cast<std::size_t>(it - names.begin());
    }

    double se(std::size_t i) const {
        if (!covariance) return std::numeric_limits<double>::quiet_NaN();
        return std::sqrt((*covariance)(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)));
    }

    IntensityParams intensity_at(const Eigen::VectorXd& theta) const {
        IntensityParams ip;
        ip.beta0 = theta[0];
        ip.beta.resize(layout.n_beta);
        for (std::size_t j = 0; j < layout.n_beta; ++j) ip.beta[j] = theta[static_cast<Eigen::Index>(1 + j)];
        return ip;
    }
    IntensityParams intensity() const { return intensity_at(estimates); }
};

inline double normal_quantile(double p) { return boost::math::quantile(boost::math::normal(), p); }

/// estimate +/- z * se at the given two-sided level.
inline std::pair<double, double> wald_ci(double estimate, double se, double level = 0.95) {
    if (se < 0.0) throw ConfigError("standard error must be non-negative");
    const double z = normal_quantile(0.5 + 0.5 * level);
    return {estimate - z * se, estimate + z * se};
}

inline double aic(double loglik, int k) {
    if (k < 1) throw ConfigError("AIC needs at least one parameter");
    return 2.0 * k - 2.0 * loglik;
}

/// Maps optimizer-scale vectors to likelihood arguments and back.
class ParameterMap {
public:
    ParameterMap(ParameterLayout layout, const ModelSpec& spec) : layout_(layout), spec_(spec) {}

    IntensityParams intensity(const Eigen::VectorXd& t) const {
        IntensityParams ip;
        ip.beta0 = t[0];
        ip.beta.resize(layout_.n_beta);
        for (std::size_t j = 0; j < layout_.n_beta; ++j) ip.beta[j] = t[static_cast<Eigen::Index>(1 + j)];
        return ip;
    }
    DetectionParams detection(const Eigen::VectorXd& t) const {
        DetectionParams dp = spec_.detection;
        if (layout_.has_log_sigma) dp.sigma = std::exp(t[static_cast<Eigen::Index>(layout_.sigma_index())]);
        return dp;
    }
    DistanceErrorParams distance_error(const Eigen::VectorXd& t) const {
        DistanceErrorParams ep = spec_.distance_error;
        if (layout_.has_log_theta) ep.theta = std::exp(t[static_cast<Eigen::Index>(layout_.theta_index())]);
        return ep;
    }

private:
    ParameterLayout layout_;
    const ModelSpec& spec_;
};

inline ParameterLayout layout_for(const ModelSpec& spec, std::size_t n_covariates) {
    ParameterLayout l;
    l.n_beta = n_covariates;
    l.has_log_sigma = spec.estimate_sigma;
    l.has_log_theta = spec.variant.kind == LoglikVariant::Kind::distance_error;
    return l;
}

/// Default start: beta = 0, sigma = half the largest recorded distance,
/// beta0 = log(n / integral of q), theta from the spec.
inline Eigen::VectorXd default_start(const Dataset& data, const LikelihoodEvaluator& eval, const ModelSpec& spec,
                                     const ParameterLayout& layout) {
    Eigen::VectorXd t = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(layout.size()));
    DetectionParams dp = spec.detection;
    if (layout.has_log_sigma) {
        double dmax = 0.0;
        for (const auto& r : data.records) dmax = std::max(dmax, r.distance);
        double s0 = 0.5 * dmax;
        if (!(s0 > 0.0)) s0 = std::isfinite(dp.w) ? 0.5 * dp.w : dp.sigma;
        dp.sigma = s0;
        t[static_cast<Eigen::Index>(layout.sigma_index())] = std::log(s0);
    }
    IntensityParams flat;
    flat.beta.assign(layout.n_beta, 0.0);
    const double area_q = eval.expected_detections(flat, dp);
    const double n = std::max<double>(static_cast<double>(data.n()), 0.5);
    t[0] = (area_q > 0.0 && std::isfinite(area_q)) ? std::log(n / area_q) : 0.0;
    if (layout.has_log_theta) t[static_cast<Eigen::Index>(layout.theta_index())] = std::log(spec.distance_error.theta);
    return t;
}

/// Maximum-likelihood fit by Nelder-Mead with Hessian-based Wald intervals.
inline FitResult fit(const Dataset& data, const CovariateField& field, const ModelSpec& spec,
                     const FitControls& controls = {}, std::optional<Eigen::VectorXd> start = std::nullopt) {
    spec.detection.validate();
    spec.quadrature.validate();
    if (spec.variant.kind == LoglikVariant::Kind::distance_error) spec.distance_error.validate();

    const LikelihoodEvaluator eval(data, field, spec.variant, spec.quadrature, spec.locus_normalization);
    const ParameterLayout layout = layout_for(spec, field.layer_count());
    const ParameterMap map(layout, spec);

    Eigen::VectorXd t0;
    if (start) {
        t0 = *start;
    } else {
        t0 = default_start(data, eval, spec, layout);
        if (spec.init) {
            if (spec.init->beta.size() != layout.n_beta)
                throw ConfigError("initial beta has " + std::to_string(spec.init->beta.size()) +
                                  " entries, field has " + std::to_string(layout.n_beta) + " layers");
            t0[0] = spec.init->beta0;
            for (std::size_t j = 0; j < layout.n_beta; ++j) t0[static_cast<Eigen::Index>(1 + j)] = spec.init->beta[j];
        }
    }
    if (t0.size() != static_cast<Eigen::Index>(layout.size()))
        throw ConfigError("start vector has the wrong length");
    if (!t0.allFinite()) throw ConfigError("start vector is not finite");

    auto negloglik = [&](const Eigen::VectorXd& t) {
        const LoglikValue v = eval(map.intensity(t), map.detection(t), map.distance_error(t));
        return v.feasible ? -v.value : std::numeric_limits<double>::infinity();
    };

    FitResult out;
    out.layout = layout;
    out.names = layout.names();
    out.k = static_cast<int>(layout.size());

    const NelderMeadResult nm = nelder_mead(negloglik, t0, controls.optimizer);
    out.estimates = nm.x;
    out.n_evals = nm.evals;
    out.converged = nm.converged && std::isfinite(nm.value);
    out.loglik = -nm.value;
    out.aic = std::isfinite(out.loglik) ? aic(out.loglik, out.k) : std::numeric_limits<double>::infinity();
    out.detection = map.detection(nm.x);
    out.distance_error = map.distance_error(nm.x);
    if (!out.converged) {
        out.message = std::isfinite(nm.value) ? "optimizer reached the evaluation limit" : "no feasible point found";
        return out;
    }

    const Eigen::MatrixXd H = finite_difference_hessian(negloglik, nm.x, controls.hessian_step);
    if (!H.allFinite()) {
        out.message = "Hessian is not finite at the optimum";
        return out;
    }
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (H + H.transpose()));
    const double max_ev = eig.eigenvalues().cwiseAbs().maxCoeff();
    // Rounding noise of the central differences is about eps |f| / h^2.
    const double h = controls.hessian_step * std::max(nm.x.cwiseAbs().minCoeff(), 1.0);
    const double noise = 1e4 * std::numeric_limits<double>::epsilon() * (std::abs(nm.value) + 1.0) / (h * h);
    if (eig.eigenvalues().minCoeff() <= std::max(controls.singular_tol * max_ev, noise)) {
        out.message = "Hessian is singular or indefinite; covariance unavailable";
        return out;
    }
    const Eigen::MatrixXd V =
        eig.eigenvectors() * eig.eigenvalues().cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
    out.covariance = V;
    for (Eigen::Index i = 0; i < V.rows(); ++i) out.wald_ci.push_back(wald_ci(nm.x[i], std::sqrt(V(i, i)), controls.level));
    return out;
}

struct BootstrapResult {
    Eigen::MatrixXd draws;  // B x m
    std::vector<std::pair<double, double>> ci;
    int B = 0;
};

/// Percentile interval of g(theta) for theta ~ MVN(estimate, covariance).
inline BootstrapResult bootstrap_derived(const FitResult& fit,
                                         const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& g, int B,
                                         std::uint64_t seed, double level = 0.95) {
    if (!fit.covariance) throw NumericalError("bootstrap needs a fit with a valid covariance matrix");
    if (B < 100) throw ConfigError("bootstrap needs B >= 100");
    const Eigen::MatrixXd& V = *fit.covariance;
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (V + V.transpose()));
    const Eigen::MatrixXd root = eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
    const Eigen::Index n = fit.estimates.size();

    BootstrapResult out;
    out.B = B;
    Eigen::VectorXd z(n);
    for (int b = 0; b < B; ++b) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(b)));
        std::normal_distribution<double> normal;
        for (Eigen::Index i = 0; i < n; ++i) z[i] = normal(rng);
        const Eigen::VectorXd value = g(fit.estimates + root * z);
        if (b == 0) out.draws.resize(B, value.size());
        out.draws.row(b) = value.transpose();
    }
    const double alpha = 0.5 * (1.0 - level);
    const auto lo_idx = static_cast<std::size_t>(std::max(0.0, std::ceil(alpha * B) - 1.0));
    const auto hi_idx = static_cast<std::size_t>(std::min<double>(B - 1, std::ceil((1.0 - alpha) * B) - 1.0));
    for (Eigen::Index j = 0; j < out.draws.cols(); ++j) {
        std::vector<double> col(out.draws.col(j).data(), out.draws.col(j).data() + B);
        std::sort(col.begin(), col.end());
        out.ci.emplace_back(col[lo_idx], col[hi_idx]);
    }
    return out;
}

struct AbundanceResult {
    double estimate = 0.0;
    std::pair<double, double> ci{NAN, NAN};
    double area = 0.0;
};

/// Integrated intensity over a sub-region at the estimate, with a bootstrap interval.
inline AbundanceResult abundance_estimate(const FitResult& fit, const CovariateField& field,
                                          const StudyRegion& sub_region, int region_Q, int B = 1000,
                                          std::uint64_t seed = 1,
                                          const StudyRegion* study_region = nullptr) {
    if (study_region) {
        const BoundingBox& b = study_region->bbox();
        const double tol = 1e-9 * std::max(b.width(), b.height());
        auto inside = [&](Point p) {
            if (study_region->contains(p)) return true;
            for (std::size_t e = 0; e < study_region->edge_count(); ++e)
                if (distance_to_segment(p, study_region->edge_start(e), study_region->edge_end(e)) <= tol) return true;
            return false;
        };
        for (std::size_t e = 0; e < sub_region.edge_count(); ++e) {
            const Point a = sub_region.edge_start(e), c = sub_region.edge_end(e);
            if (!inside(a) || !inside(0.5 * (a + c)))
                throw DataError("abundance sub-region extends outside the study region");
        }
    }
    const RegionGrid grid = make_region_grid(sub_region, region_Q);
    const std::size_t p = field.layer_count();
    if (p != fit.layout.n_beta) throw ConfigError("field layers do not match the fitted coefficients");
    std::vector<double> x(grid.nodes.size() * p);
    for (std::size_t k = 0; k < grid.nodes.size(); ++k) field.values_at(grid.nodes[k], {x.data() + k * p, p});
    auto integrate = [&](const Eigen::VectorXd& theta) {
        const IntensityParams ip = fit.intensity_at(theta);
        double s = 0.0;
        for (std::size_t k = 0; k < grid.nodes.size(); ++k)
            s += std::exp(ip.linear_predictor({x.data() + k * p, p}));
        return s * grid.weight;
    };
    AbundanceResult out;
    out.area = grid.covered_area();
    out.estimate = integrate(fit.estimates);
    if (fit.covariance) {
        const BootstrapResult boot = bootstrap_derived(
            fit, [&](const Eigen::VectorXd& t) { return Eigen::VectorXd::Constant(1, integrate(t)); }, B, seed);
        out.ci = boot.ci.front();
    }
    return out;
}

struct GridSpec {
    Point origin;
    double cell_size = 1.0;
    int nrows = 1;
    int ncols = 1;

    static GridSpec like(const CovariateField& f) { return {f.origin(), f.cell_size(), f.nrows(), f.ncols()}; }
};

/// Intensity at the estimate evaluated at every cell center of `grid`.
inline CovariateField predict_surface(const FitResult& fit, const CovariateField& field, const GridSpec& grid) {
    if (field.layer_count() != fit.layout.n_beta) throw ConfigError("field layers do not match the fitted coefficients");
    CovariateField out(grid.origin, grid.cell_size, grid.nrows, grid.ncols);
    const IntensityParams ip = fit.intensity();
    std::vector<double> x(field.layer_count());
    out.add_layer_from("intensity", [&](Point c) {
        field.values_at(c, x);
        return std::exp(ip.linear_predictor(x));
    });
    return out;
}

}  // namespace distfit

#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "distfit/covariate.hpp"
#include "distfit/error.hpp"

namespace distfit {

/// log lambda(s) = beta0 + x(s)' beta
struct IntensityParams {
    double beta0 = 0.0;
    std::vector<double> beta;

    double linear_predictor(std::span<const double> x) const {
        double eta = beta0;
        for (std::size_t j = 0; j < beta.size(); ++j) eta += x[j] * beta[j];
        return eta;
    }
};

inline double intensity(Point p, const CovariateField& field, const IntensityParams& ip) {
    if (ip.beta.size() != field.layer_count())
        throw ConfigError("intensity has " + std::to_string(ip.beta.size()) + " coefficients but the field has " +
                          std::to_string(field.layer_count()) + " layers");
    return std::exp(ip.linear_predictor(field.value_at(p)));
}

/// Truncated half-normal detection: exp(-(d/sigma)^2) for d < w.
struct DetectionParams {
    double sigma = 1.0;
    double w = std::numeric_limits<double>::infinity();

    void validate() const {
        if (!(sigma > 0.0)) throw ConfigError("detection sigma must be positive");
        if (!(w > 0.0)) throw ConfigError("detection truncation w must be positive");
    }
};

inline double detection_prob(double d, const DetectionParams& dp) {
    if (!(d < dp.w)) return 0.0;
    const double z = d / dp.sigma;
    return std::exp(-z * z);
}

/// log q(d); -inf at or beyond the truncation distance.
inline double log_detection_prob(double d, const DetectionParams& dp) {
    if (!(d < dp.w)) return -std::numeric_limits<double>::infinity();
    const double z = d / dp.sigma;
    return -z * z;
}

enum class ErrorFamily { none, truncated_normal, laplace };

/// How the spread of recorded distances grows with the true distance.
enum class ErrorSpread {
    sd_proportional,        // sd = theta * u
    variance_proportional,  // var = theta * u
};

struct DistanceErrorParams {
    ErrorFamily family = ErrorFamily::none;
    double theta = 0.1;
    double lower = 0.0;
    double upper = 150.0;
    ErrorSpread spread = ErrorSpread::sd_proportional;

    double sd(double true_d) const {
        return spread == ErrorSpread::sd_proportional ? theta * true_d : std::sqrt(theta * true_d);
    }

    void validate() const {
        if (family != ErrorFamily::none && !(theta > 0.0)) throw ConfigError("distance-error theta must be positive");
        if (!(lower < upper)) throw ConfigError("distance-error bounds need lower < upper");
    }
};

namespace detail {

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

inline double laplace_cdf(double x, double mu, double b) {
    return x < mu ? 0.5 * std::exp((x - mu) / b) : 1.0 - 0.5 * std::exp(-(x - mu) / b);
}

}  // namespace detail

/// Density of a recorded distance given the true distance, renormalized to [lower, upper].
inline double error_density(double recorded, double true_d, const DistanceErrorParams& ep) {
    if (ep.family == ErrorFamily::none)
        throw ConfigError("error_density called for a model without distance error");
    if (!(true_d > 0.0))
        throw NumericalError("distance-error density is degenerate at true distance 0",
                             "route zero-distance records through the exact-distance likelihood");
    if (recorded < ep.lower || recorded > ep.upper) return 0.0;
    const double s = ep.sd(true_d);
    if (ep.family == ErrorFamily::truncated_normal) {
        const double z = (recorded - true_d) / s;
        const double mass = detail::normal_cdf((ep.upper - true_d) / s) - detail::normal_cdf((ep.lower - true_d) / s);
        if (!(mass > 0.0)) return 0.0;
        return std::exp(-0.5 * z * z) / (std::sqrt(2.0 * std::numbers::pi) * s) / mass;
    }
    const double b = s / std::numbers::sqrt2;
    const double mass = detail::laplace_cdf(ep.upper, true_d, b) - detail::laplace_cdf(ep.lower, true_d, b);
    if (!(mass > 0.0)) return 0.0;
    return std::exp(-std::abs(recorded - true_d) / b) / (2.0 * b) / mass;
}

}  // namespace distfit

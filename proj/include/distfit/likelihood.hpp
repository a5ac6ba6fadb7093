#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "distfit/covariate.hpp"
#include "distfit/error.hpp"
#include "distfit/geometry.hpp"
#include "distfit/model.hpp"
#include "distfit/quadrature.hpp"

namespace distfit {

/// One detected individual.
struct DetectionRecord {
    std::string transect_id;
    double distance = 0.0;            // recorded distance to the transect
    std::optional<Point> location;    // exact location, when known
    std::size_t transect = 0;         // index into Dataset::transects, set by resolve()
    std::size_t line = 0;             // source line, 0 if not from a file
};

struct Dataset {
    StudyRegion region;
    std::vector<Transect> transects;
    std::vector<DetectionRecord> records;

    std::size_t n() const { return records.size(); }

    bool has_exact_locations() const {
        return std::all_of(records.begin(), records.end(), [](const auto& r) { return r.location.has_value(); });
    }

    /// Resolves transect ids and checks record invariants.
    void resolve() {
        for (std::size_t i = 0; i < transects.size(); ++i)
            for (std::size_t j = i + 1; j < transects.size(); ++j)
                if (transects[i].id == transects[j].id)
                    throw DataError("duplicate transect id '" + transects[i].id + "'");
        for (auto& r : records) {
            auto it = std::find_if(transects.begin(), transects.end(),
                                   [&](const Transect& t) { return t.id == r.transect_id; });
            const std::string where = r.line ? "line " + std::to_string(r.line) + ": " : std::string{};
            if (it == transects.end())
                throw DataError(where + "unknown transect id '" + r.transect_id + "'",
                                "add the transect to the transect file or fix the id");
            r.transect = static_cast<std::size_t>(it - transects.begin());
            if (!(r.distance >= 0.0) || !std::isfinite(r.distance))
                throw DataError(where + "distance must be finite and non-negative");
            if (r.location && !region.contains(*r.location))
                throw DataError(where + "exact location lies outside the study region");
        }
    }
};

struct LoglikVariant {
    enum class Kind { exact, locus, distance_error, surrogate };
    Kind kind = Kind::exact;
    SurrogateSpec surrogate;

    static LoglikVariant exact() { return {Kind::exact, {}}; }
    static LoglikVariant locus() { return {Kind::locus, {}}; }
    static LoglikVariant distance_error() { return {Kind::distance_error, {}}; }
    static LoglikVariant surrogate_of(SurrogateSpec s) { return {Kind::surrogate, s}; }
};

inline const char* to_string(LoglikVariant::Kind k) {
    switch (k) {
        case LoglikVariant::Kind::exact: return "exact";
        case LoglikVariant::Kind::locus: return "locus";
        case LoglikVariant::Kind::distance_error: return "distance_error";
        case LoglikVariant::Kind::surrogate: return "surrogate";
    }
    return "?";
}

/// Which locus length normalizes the distance-error integral.
enum class LocusNormalization { recorded_distance, true_distance };

/// A log-likelihood, or an infeasible flag when some factor vanishes.
struct LoglikValue {
    double value = 0.0;
    bool feasible = true;
    std::string reason;

    static LoglikValue infeasible(std::string why) {
        return {-std::numeric_limits<double>::infinity(), false, std::move(why)};
    }
};

namespace detail {

// log(mean(exp(v))) over a span, stable for large values.
inline double log_mean_exp(const double* v, std::size_t n) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) m = std::max(m, v[i]);
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += std::exp(v[i] - m);
    return m + std::log(s / static_cast<double>(n));
}

inline double log_sum_exp(const std::vector<double>& v) {
    double m = -std::numeric_limits<double>::infinity();
    for (double x : v) m = std::max(m, x);
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

inline std::string record_label(const DetectionRecord& r, std::size_t i) {
    std::string s = "record " + std::to_string(i);
    if (r.line) s += " (line " + std::to_string(r.line) + ")";
    return s;
}

}  // namespace detail

/// Log-likelihood of a dataset under one model variant.
///
/// Construction fixes everything that does not depend on parameters:
/// region quadrature nodes with their covariates and nearest-transect
/// distance, exact or surrogate covariates per record, and locus nodes at
/// each recorded distance. Evaluation is then a pass over cached values,
/// except for the distance-error variant, whose true-distance nodes depend
/// on theta and are rebuilt per call.
class LikelihoodEvaluator {
public:
    LikelihoodEvaluator(const Dataset& data, const CovariateField& field, LoglikVariant variant,
                        QuadratureScheme quad, LocusNormalization norm = LocusNormalization::recorded_distance)
        : data_(&data), field_(&field), variant_(variant), quad_(quad), norm_(norm), p_(field.layer_count()) {
        quad_.validate();
        gl_ = GaussLegendre(std::max(1, quad_.error_Q / 2));
        build_region();
        build_records();
    }

    std::size_t covariate_count() const { return p_; }
    const LoglikVariant& variant() const { return variant_; }
    double covered_area() const { return region_weight_ * static_cast<double>(region_d_.size()); }

    /// Integral of lambda(s) q(s) over the region.
    double expected_detections(const IntensityParams& ip, const DetectionParams& dp) const {
        check_params(ip);
        const double inv_s2 = 1.0 / (dp.sigma * dp.sigma);
        double s = 0.0;
        for (std::size_t k = 0; k < region_d_.size(); ++k) {
            const double d = region_d_[k];
            if (!(d < dp.w)) break;  // nodes are sorted by distance
            s += std::exp(ip.linear_predictor(row(region_x_, k)) - d * d * inv_s2);
        }
        return s * region_weight_;
    }

    /// Log-likelihood; `per_record`, when given, receives each observation term.
    LoglikValue operator()(const IntensityParams& ip, const DetectionParams& dp,
                           const DistanceErrorParams& ep = {}, std::vector<double>* per_record = nullptr) const {
        check_params(ip);
        if (variant_.kind == LoglikVariant::Kind::distance_error) {
            if (ep.family == ErrorFamily::none)
                throw ConfigError("distance_error likelihood needs a truncated_normal or laplace error family");
            ep.validate();
        }
        const double integral = expected_detections(ip, dp);
        if (!std::isfinite(integral)) return LoglikValue::infeasible("integrated intensity overflowed");
        double total = -integral;
        if (per_record) per_record->assign(records_.size(), 0.0);
        for (std::size_t i = 0; i < records_.size(); ++i) {
            const double term = record_term(i, ip, dp, ep);
            if (!std::isfinite(term)) {
                std::string why = detail::record_label(data_->records[i], i);
                why += term == -std::numeric_limits<double>::infinity()
                           ? ": zero likelihood contribution (detection or error density vanished)"
                           : ": non-finite likelihood contribution";
                return LoglikValue::infeasible(why);
            }
            if (per_record) (*per_record)[i] = term;
            total += term;
        }
        return {total, true, {}};
    }

private:
    struct RecordCache {
        const Transect* transect = nullptr;
        double distance = 0.0;
        std::vector<double> x;      // covariates: one row (exact/surrogate) or one row per locus node
        std::size_t rows = 0;
        double log_locus_length = 0.0;  // log |L_i| at the recorded distance
        bool zero_distance = false;
    };

    std::span<const double> row(const std::vector<double>& v, std::size_t k) const {
        return {v.data() + k * p_, p_};
    }

    void check_params(const IntensityParams& ip) const {
        if (ip.beta.size() != p_)
            throw ConfigError("model has " + std::to_string(ip.beta.size()) + " coefficients but the field has " +
                              std::to_string(p_) + " layers");
    }

    void build_region() {
        const RegionGrid g = make_region_grid(data_->region, quad_.region_Q);
        region_weight_ = g.weight;
        std::vector<std::pair<double, std::size_t>> order;
        order.reserve(g.nodes.size());
        for (std::size_t k = 0; k < g.nodes.size(); ++k) {
            double d = std::numeric_limits<double>::infinity();
            for (const Transect& t : data_->transects) d = std::min(d, perpendicular_distance(g.nodes[k], t));
            order.emplace_back(d, k);
        }
        std::stable_sort(order.begin(), order.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
        region_d_.reserve(order.size());
        region_x_.resize(order.size() * p_);
        for (std::size_t k = 0; k < order.size(); ++k) {
            region_d_.push_back(order[k].first);
            field_->values_at(g.nodes[order[k].second], {region_x_.data() + k * p_, p_});
        }
    }

    void build_records() {
        const Dataset& data = *data_;
        records_.resize(data.records.size());
        std::vector<std::vector<double>> surrogate_by_transect;
        if (variant_.kind == LoglikVariant::Kind::surrogate) {
            for (const Transect& t : data.transects)
                surrogate_by_transect.push_back(surrogate_value(*field_, t, variant_.surrogate, data.region));
        }
        for (std::size_t i = 0; i < data.records.size(); ++i) {
            const DetectionRecord& r = data.records[i];
            if (r.transect >= data.transects.size())
                throw DataError(detail::record_label(r, i) + ": transect index not resolved");
            RecordCache& c = records_[i];
            c.transect = &data.transects[r.transect];
            c.distance = r.distance;
            c.zero_distance = r.distance == 0.0;
            switch (variant_.kind) {
                case LoglikVariant::Kind::exact: {
                    if (!r.location)
                        throw DataError(detail::record_label(r, i) + ": exact likelihood needs an exact location",
                                        "supply x,y columns or choose the locus variant");
                    c.distance = perpendicular_distance(*r.location, *c.transect);
                    c.x = field_->value_at(*r.location);
                    c.rows = 1;
                    break;
                }
                case LoglikVariant::Kind::surrogate:
                    c.x = surrogate_by_transect[r.transect];
                    c.rows = 1;
                    break;
                case LoglikVariant::Kind::locus:
                case LoglikVariant::Kind::distance_error: {
                    const Locus l = locus(*c.transect, r.distance, data.region, quad_.clip_locus);
                    c.log_locus_length = std::log(l.total_length);
                    if (variant_.kind == LoglikVariant::Kind::locus || c.zero_distance) {
                        const LocusNodes nodes = discretize_locus(l, quad_.locus_Q);
                        c.rows = nodes.points.size();
                        c.x.resize(c.rows * p_);
                        for (std::size_t k = 0; k < c.rows; ++k)
                            field_->values_at(nodes.points[k], {c.x.data() + k * p_, p_});
                    }
                    break;
                }
            }
        }
    }

    double locus_log_mean(const RecordCache& c, const IntensityParams& ip) const {
        std::vector<double> eta(c.rows);
        for (std::size_t k = 0; k < c.rows; ++k) eta[k] = ip.linear_predictor(row(c.x, k));
        return detail::log_mean_exp(eta.data(), eta.size());
    }

    double record_term(std::size_t i, const IntensityParams& ip, const DetectionParams& dp,
                       const DistanceErrorParams& ep) const {
        const RecordCache& c = records_[i];
        switch (variant_.kind) {
            case LoglikVariant::Kind::exact:
            case LoglikVariant::Kind::surrogate:
                return ip.linear_predictor(c.x) + log_detection_prob(c.distance, dp);
            case LoglikVariant::Kind::locus:
                return log_detection_prob(c.distance, dp) + locus_log_mean(c, ip);
            case LoglikVariant::Kind::distance_error:
                if (c.zero_distance) return log_detection_prob(0.0, dp) + locus_log_mean(c, ip);
                return distance_error_term(i, ip, dp, ep);
        }
        return std::numeric_limits<double>::quiet_NaN();
    }

    // True distance u as a function of the standardized residual t = (d - u) / sd(u),
    // with du/dt. Both spreads give a decreasing map.
    struct ResidualMap {
        double d, theta;
        ErrorSpread spread;

        std::pair<double, double> operator()(double t) const {
            if (spread == ErrorSpread::sd_proportional) {
                const double a = 1.0 + theta * t;
                return {d / a, -d * theta / (a * a)};
            }
            const double root = std::sqrt(theta), disc = std::sqrt(t * t * theta + 4.0 * d);
            const double r = 0.5 * (disc - t * root);
            return {r * r, r * (t * theta / disc - root)};
        }
        double residual(double u) const {
            const double sd = spread == ErrorSpread::sd_proportional ? theta * u : std::sqrt(theta * u);
            return (d - u) / sd;
        }
    };

    double distance_error_term(std::size_t i, const IntensityParams& ip, const DetectionParams& dp,
                               const DistanceErrorParams& ep) const {
        const RecordCache& c = records_[i];
        const double d = c.distance;
        if (d < ep.lower || d > ep.upper)
            throw DataError(detail::record_label(data_->records[i], i) + ": recorded distance " + std::to_string(d) +
                                " lies outside the distance-error bounds",
                            "widen distance_error.lower/upper");
        const double top = std::min(dp.w, ep.upper);
        const ResidualMap map{d, ep.theta, ep.spread};
        // Gauss-Legendre in t on each side of u = d, out to k spreads.
        const double k = ep.family == ErrorFamily::laplace ? 20.0 : 12.0;
        double t_top = map.residual(top);
        if (!std::isfinite(top))
            t_top = ep.spread == ErrorSpread::sd_proportional ? -1.0 / ep.theta : -std::numeric_limits<double>::infinity();

        std::vector<double> logs;
        logs.reserve(2 * gl_.x.size());
        std::vector<double> eta;
        auto add_node = [&](double t, double gw) {
            const auto [u, dudt] = map(t);
            if (!(u > 0.0) || !(u < top)) return;
            const double f = error_density(d, u, ep);
            const double lq = log_detection_prob(u, dp);
            if (!(f > 0.0) || !std::isfinite(lq)) return;
            const Locus l = clipped_locus(*c.transect, u, data_->region, quad_.clip_locus);
            if (l.empty()) return;
            const LocusNodes nodes = discretize_locus(l, quad_.locus_Q);
            eta.resize(nodes.points.size());
            std::vector<double> x(p_);
            for (std::size_t j = 0; j < nodes.points.size(); ++j) {
                field_->values_at(nodes.points[j], x);
                eta[j] = ip.linear_predictor(x);
            }
            double a = detail::log_mean_exp(eta.data(), eta.size());
            if (norm_ == LocusNormalization::recorded_distance) a += std::log(l.total_length);
            logs.push_back(std::log(gw * std::abs(dudt)) + std::log(f) + lq + a);
        };
        const double t_lo = std::max(-k, t_top);
        if (t_lo < 0.0) gl_.for_each(t_lo, 0.0, add_node);
        const double t_mid = std::max(0.0, t_top);
        if (t_mid < k) gl_.for_each(t_mid, k, add_node);
        if (logs.empty()) return -std::numeric_limits<double>::infinity();
        double term = detail::log_sum_exp(logs);
        if (norm_ == LocusNormalization::recorded_distance) term -= c.log_locus_length;
        return term;
    }

    const Dataset* data_;
    const CovariateField* field_;
    LoglikVariant variant_;
    QuadratureScheme quad_;
    LocusNormalization norm_;
    std::size_t p_;
    double region_weight_ = 0.0;
    std::vector<double> region_d_;
    std::vector<double> region_x_;
    std::vector<RecordCache> records_;
    GaussLegendre gl_{1};
};

/// Thinned-intensity likelihood with exact locations.
inline LoglikValue loglik_exact(const Dataset& data, const CovariateField& field, const IntensityParams& ip,
                                const DetectionParams& dp, const QuadratureScheme& quad) {
    return LikelihoodEvaluator(data, field, LoglikVariant::exact(), quad)(ip, dp);
}

/// Likelihood with each location integrated over its locus.
inline LoglikValue loglik_locus(const Dataset& data, const CovariateField& field, const IntensityParams& ip,
                                const DetectionParams& dp, const QuadratureScheme& quad) {
    return LikelihoodEvaluator(data, field, LoglikVariant::locus(), quad)(ip, dp);
}

/// Likelihood with location uncertainty and distance measurement error.
inline LoglikValue loglik_distance_error(const Dataset& data, const CovariateField& field,
                                         const IntensityParams& ip, const DetectionParams& dp,
                                         const DistanceErrorParams& ep, const QuadratureScheme& quad,
                                         LocusNormalization norm = LocusNormalization::recorded_distance) {
    return LikelihoodEvaluator(data, field, LoglikVariant::distance_error(), quad, norm)(ip, dp, ep);
}

/// Exact-location likelihood with per-transect surrogate covariates.
inline LoglikValue loglik_surrogate(const Dataset& data, const CovariateField& field, const IntensityParams& ip,
                                    const DetectionParams& dp, const SurrogateSpec& spec,
                                    const QuadratureScheme& quad) {
    return LikelihoodEvaluator(data, field, LoglikVariant::surrogate_of(spec), quad)(ip, dp);
}

}  // namespace distfit

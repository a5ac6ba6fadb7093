#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <functional>
#include <iomanip>
#include <memory>
#include <mutex>
#include <numbers>
#include <ostream>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "distfit/covariate.hpp"
#include "distfit/inference.hpp"
#include "distfit/likelihood.hpp"
#include "distfit/model.hpp"
#include "distfit/rng.hpp"

namespace distfit {

/// Habitat surface on the unit square used by the simulation experiment:
/// one preferred and one avoided Gaussian feature plus a fine-scale texture
/// made of `texture_waves` plane waves with directions, phases and
/// wavelengths (uniform in [wavelength_min, wavelength_max]) drawn from
/// `texture_seed`. The texture has standard deviation `texture_amp`.
struct HabitatSurface {
    double high_amp = 0.5;
    Point high_center{0.25, 0.70};
    double high_radius = 0.22;
    double low_amp = 0.5;
    Point low_center{0.75, 0.30};
    double low_radius = 0.22;
    double texture_amp = 0.8;
    double wavelength_min = 0.05;
    double wavelength_max = 0.10;
    int texture_waves = 16;
    std::uint64_t texture_seed = 7;
    double offset = -1.1;

    CovariateField rasterize(int cells) const {
        struct Wave { double kx, ky, phase; };
        std::vector<Wave> waves;
        Rng rng(texture_seed);
        std::uniform_real_distribution<double> u01(0.0, 1.0);
        for (int m = 0; m < texture_waves; ++m) {
            const double lambda = wavelength_min + (wavelength_max - wavelength_min) * u01(rng);
            const double angle = std::numbers::pi * u01(rng);
            const double k = 2.0 * std::numbers::pi / lambda;
            waves.push_back({k * std::cos(angle), k * std::sin(angle), 2.0 * std::numbers::pi * u01(rng)});
        }
        const double scale = texture_waves > 0 ? texture_amp * std::sqrt(2.0 / texture_waves) : 0.0;
        auto bump = [](Point s, Point c, double r) {
            const Point d = s - c;
            return std::exp(-dot(d, d) / (2.0 * r * r));
        };
        CovariateField f({0.0, 0.0}, 1.0 / cells, cells, cells);
        f.add_layer_from("habitat", [&](Point s) {
            double tex = 0.0;
            for (const Wave& w : waves) tex += std::cos(w.kx * s.x + w.ky * s.y + w.phase);
            return offset + high_amp * bump(s, high_center, high_radius) - low_amp * bump(s, low_center, low_radius) +
                   scale * tex;
        });
        return f;
    }
};

inline CovariateField default_simulation_field(int cells = 200, const HabitatSurface& surface = {}) {
    return surface.rasterize(cells);
}

enum class Placement { convenience, random };

inline const char* to_string(Placement p) { return p == Placement::convenience ? "convenience" : "random"; }

struct ScenarioSpec {
    std::string name = "scenario";
    std::shared_ptr<const CovariateField> field;
    StudyRegion region = StudyRegion::unit_square();
    Placement placement = Placement::convenience;
    int n_transects = 16;
    int candidate_grid = 8;  // convenience sites are cell centers of this grid
    IntensityParams truth{9.0, {1.0}};
    DetectionParams detection{0.025, 0.06};
    double buffer_radius = 0.06;  // surrogate buffer for model 3
    int replicates = 250;
    std::uint64_t seed = 20190601;
    QuadratureScheme quadrature{40000, 64, 32, true};
    FitControls controls;
    unsigned threads = 0;  // 0 = hardware concurrency
};

/// Point transects at the lowest-covariate candidate sites (convenience) or
/// uniform random sites, always more than 2w apart.
inline std::vector<Transect> place_transects(const ScenarioSpec& spec) {
    const double min_sep = 2.0 * spec.detection.w;
    std::vector<Point> chosen;
    auto far_enough = [&](Point p) {
        return std::all_of(chosen.begin(), chosen.end(), [&](Point q) { return norm(p - q) > min_sep; });
    };
    if (spec.placement == Placement::convenience) {
        const BoundingBox& b = spec.region.bbox();
        const int g = spec.candidate_grid;
        std::vector<std::pair<double, Point>> sites;
        for (int j = 0; j < g; ++j) {
            for (int i = 0; i < g; ++i) {
                const Point p{b.min.x + (i + 0.5) * b.width() / g, b.min.y + (j + 0.5) * b.height() / g};
                if (spec.region.contains(p)) sites.emplace_back(spec.field->value_at(p).front(), p);
            }
        }
        std::stable_sort(sites.begin(), sites.end(), [](const auto& a, const auto& c) { return a.first < c.first; });
        for (const auto& [v, p] : sites) {
            if (static_cast<int>(chosen.size()) == spec.n_transects) break;
            if (far_enough(p)) chosen.push_back(p);
        }
    } else {
        Rng rng(derive_seed(spec.seed, 0xfeedULL));
        const BoundingBox& b = spec.region.bbox();
        std::uniform_real_distribution<double> ux(b.min.x, b.max.x), uy(b.min.y, b.max.y);
        for (int tries = 0; static_cast<int>(chosen.size()) < spec.n_transects && tries < 1000000; ++tries) {
            const Point p{ux(rng), uy(rng)};
            if (spec.region.contains(p) && far_enough(p)) chosen.push_back(p);
        }
    }
    if (static_cast<int>(chosen.size()) < spec.n_transects)
        throw ConfigError("could only place " + std::to_string(chosen.size()) + " of " +
                          std::to_string(spec.n_transects) + " transects with separation > 2w");
    std::vector<Transect> out;
    for (std::size_t i = 0; i < chosen.size(); ++i) out.push_back(Transect::make_point("T" + std::to_string(i + 1), chosen[i]));
    return out;
}

/// Thinning: N ~ Poisson(lambda_max * |bbox|) uniform candidates, each kept
/// when inside the region with probability lambda(s) / lambda_max.
inline std::vector<Point> simulate_ippp(const std::function<double(Point)>& lambda, double lambda_max,
                                        const StudyRegion& region, Rng& rng) {
    if (!std::isfinite(lambda_max) || lambda_max < 0.0)
        throw NumericalError("intensity bound must be finite and non-negative");
    std::vector<Point> out;
    if (lambda_max == 0.0) return out;
    const BoundingBox& b = region.bbox();
    std::poisson_distribution<long long> count(lambda_max * b.width() * b.height());
    std::uniform_real_distribution<double> ux(b.min.x, b.max.x), uy(b.min.y, b.max.y), u01(0.0, 1.0);
    const long long n = count(rng);
    for (long long i = 0; i < n; ++i) {
        const Point p{ux(rng), uy(rng)};
        const double keep = u01(rng);
        if (!region.contains(p)) continue;
        if (keep * lambda_max < lambda(p)) out.push_back(p);
    }
    return out;
}

/// Log-linear intensity over a raster; the bound is the largest cell value.
inline std::vector<Point> simulate_ippp(const CovariateField& field, const IntensityParams& ip,
                                        const StudyRegion& region, std::uint64_t seed) {
    double eta_max = -std::numeric_limits<double>::infinity();
    std::vector<double> x(field.layer_count());
    for (int r = 0; r < field.nrows(); ++r) {
        for (int c = 0; c < field.ncols(); ++c) {
            for (std::size_t l = 0; l < x.size(); ++l)
                x[l] = field.layer(l)[static_cast<std::size_t>(r) * field.ncols() + c];
            eta_max = std::max(eta_max, ip.linear_predictor(x));
        }
    }
    Rng rng(seed);
    return simulate_ippp([&](Point p) { return intensity(p, field, ip); }, std::exp(eta_max), region, rng);
}

/// Bernoulli detection at the nearest transect. Records keep both the exact
/// location and the distance, so every likelihood variant sees the same data.
inline Dataset simulate_detection(const std::vector<Point>& points, const std::vector<Transect>& transects,
                                  const StudyRegion& region, const DetectionParams& dp, std::uint64_t seed) {
    Dataset data{region, transects, {}};
    Rng rng(seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (const Point& p : points) {
        std::size_t nearest = 0;
        double d = std::numeric_limits<double>::infinity();
        for (std::size_t t = 0; t < transects.size(); ++t) {
            const double dt = perpendicular_distance(p, transects[t]);
            if (dt < d) {
                d = dt;
                nearest = t;
            }
        }
        const double u = u01(rng);
        if (u < detection_prob(d, dp)) {
            DetectionRecord r;
            r.transect_id = transects[nearest].id;
            r.transect = nearest;
            r.distance = d;
            r.location = p;
            data.records.push_back(std::move(r));
        }
    }
    return data;
}

/// Replaces each recorded distance by a draw from the error model centered
/// on the true distance (rejection within [lower, upper]).
inline void add_distance_error(Dataset& data, const DistanceErrorParams& ep, std::uint64_t seed) {
    if (ep.family == ErrorFamily::none) return;
    ep.validate();
    for (std::size_t i = 0; i < data.records.size(); ++i) {
        DetectionRecord& r = data.records[i];
        const double u = r.distance;
        if (u <= 0.0) continue;
        Rng rng(derive_seed(seed, i));
        const double s = ep.sd(u);
        std::normal_distribution<double> normal(u, s);
        std::exponential_distribution<double> expo(std::numbers::sqrt2 / s);
        std::bernoulli_distribution sign(0.5);
        for (int tries = 0;; ++tries) {
            if (tries == 100000) throw NumericalError("could not draw a recorded distance inside the error bounds");
            const double d = ep.family == ErrorFamily::truncated_normal ? normal(rng)
                                                                        : u + (sign(rng) ? 1.0 : -1.0) * expo(rng);
            if (d >= ep.lower && d <= ep.upper) {
                r.distance = d;
                break;
            }
        }
    }
}

inline constexpr int experiment_models = 4;

inline const char* model_label(int m) {
    static const char* labels[experiment_models] = {"exact", "transect_center", "transect_average", "corrected"};
    return labels[m];
}

struct ModelOutcome {
    bool usable = false;  // converged with a covariance
    double beta1 = NAN;
    double lower = NAN;
    double upper = NAN;
    std::string message;
};

struct ReplicateOutcome {
    int index = 0;
    std::size_t n = 0;
    ModelOutcome models[experiment_models];
};

struct ModelSummary {
    double coverage = NAN;
    double mean_beta1 = NAN;
    double median_beta1 = NAN;
    double mean_ci_length = NAN;
    int used = 0;
    int excluded = 0;
};

struct ExperimentReport {
    std::string scenario;
    Placement placement = Placement::convenience;
    double true_beta1 = 1.0;
    double mean_n = 0.0;
    ModelSummary models[experiment_models];
    double efficiency = NAN;
    std::vector<ReplicateOutcome> replicates;
};

inline ModelSpec experiment_model(int m, const ScenarioSpec& spec) {
    ModelSpec ms;
    ms.detection = spec.detection;
    ms.estimate_sigma = true;
    ms.quadrature = spec.quadrature;
    switch (m) {
        case 0: ms.variant = LoglikVariant::exact(); break;
        case 1: ms.variant = LoglikVariant::surrogate_of(SurrogateSpec::center()); break;
        case 2: ms.variant = LoglikVariant::surrogate_of(SurrogateSpec::buffer(spec.buffer_radius)); break;
        default: ms.variant = LoglikVariant::locus(); break;
    }
    return ms;
}

/// One simulated dataset and the four fits.
inline ReplicateOutcome run_replicate(const ScenarioSpec& spec, const std::vector<Transect>& transects, int index) {
    const std::uint64_t base = derive_seed(spec.seed, static_cast<std::uint64_t>(index));
    const std::vector<Point> pts = simulate_ippp(*spec.field, spec.truth, spec.region, derive_seed(base, 1));
    const Dataset data = simulate_detection(pts, transects, spec.region, spec.detection, derive_seed(base, 2));
    ReplicateOutcome out;
    out.index = index;
    out.n = data.n();
    for (int m = 0; m < experiment_models; ++m) {
        ModelOutcome& mo = out.models[m];
        try {
            const FitResult fr = fit(data, *spec.field, experiment_model(m, spec), spec.controls);
            mo.beta1 = fr.estimates[1];
            mo.usable = fr.converged && fr.has_covariance();
            if (mo.usable) {
                mo.lower = fr.wald_ci[1].first;
                mo.upper = fr.wald_ci[1].second;
            }
            mo.message = fr.message;
        } catch (const std::exception& e) {
            mo.message = e.what();
        }
    }
    return out;
}

inline ExperimentReport summarize(const ScenarioSpec& spec, std::vector<ReplicateOutcome> reps) {
    ExperimentReport r;
    r.scenario = spec.name;
    r.placement = spec.placement;
    r.true_beta1 = spec.truth.beta.at(0);
    double n_sum = 0.0;
    for (const auto& rep : reps) n_sum += static_cast<double>(rep.n);
    r.mean_n = reps.empty() ? 0.0 : n_sum / static_cast<double>(reps.size());
    for (int m = 0; m < experiment_models; ++m) {
        ModelSummary& s = r.models[m];
        std::vector<double> est;
        double covered = 0.0, len = 0.0;
        for (const auto& rep : reps) {
            const ModelOutcome& mo = rep.models[m];
            if (!mo.usable) {
                ++s.excluded;
                continue;
            }
            ++s.used;
            est.push_back(mo.beta1);
            if (mo.lower <= r.true_beta1 && r.true_beta1 <= mo.upper) covered += 1.0;
            len += mo.upper - mo.lower;
        }
        if (s.used > 0) {
            s.coverage = covered / s.used;
            s.mean_ci_length = len / s.used;
            double sum = 0.0;
            for (double e : est) sum += e;
            s.mean_beta1 = sum / s.used;
            std::sort(est.begin(), est.end());
            const std::size_t h = est.size() / 2;
            s.median_beta1 = est.size() % 2 ? est[h] : 0.5 * (est[h - 1] + est[h]);
        }
    }
    r.efficiency = r.models[3].mean_ci_length / r.models[0].mean_ci_length;
    r.replicates = std::move(reps);
    return r;
}

/// Simulates `spec.replicates` datasets and fits the four comparison models.
/// Replicates run on a worker pool; each uses seeds derived from its index.
inline ExperimentReport run_experiment(const ScenarioSpec& spec,
                                       const std::function<void(int done, int total)>& progress = {}) {
    if (!spec.field) throw ConfigError("scenario has no covariate field");
    if (spec.replicates < 1) throw ConfigError("replicates must be >= 1");
    spec.field->validate_covers(spec.region);
    const std::vector<Transect> transects = place_transects(spec);
    std::vector<ReplicateOutcome> reps(static_cast<std::size_t>(spec.replicates));
    unsigned threads = spec.threads ? spec.threads : std::max(1u, std::thread::hardware_concurrency());
    threads = std::min<unsigned>(threads, static_cast<unsigned>(spec.replicates));
    std::atomic<int> next{0};
    std::atomic<int> done{0};
    std::mutex progress_mutex;
    auto worker = [&] {
        for (int i = next++; i < spec.replicates; i = next++) {
            reps[static_cast<std::size_t>(i)] = run_replicate(spec, transects, i);
            const int d = ++done;
            if (progress) {
                std::lock_guard lock(progress_mutex);
                progress(d, spec.replicates);
            }
        }
    };
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    }
    return summarize(spec, std::move(reps));
}

/// Table-1-shaped summary row with header.
inline void write_summary_csv(std::ostream& os, const std::vector<ExperimentReport>& reports) {
    os << "scenario,transect,n_bar,cp_model1,cp_model2,cp_model3,cp_model4,efficiency,"
          "excluded_model1,excluded_model2,excluded_model3,excluded_model4,"
          "median_beta1_model1,median_beta1_model2,median_beta1_model3,median_beta1_model4\n";
    os << std::setprecision(6);
    for (const auto& r : reports) {
        os << r.scenario << ',' << to_string(r.placement) << ',' << r.mean_n;
        for (const auto& m : r.models) os << ',' << m.coverage;
        os << ',' << r.efficiency;
        for (const auto& m : r.models) os << ',' << m.excluded;
        for (const auto& m : r.models) os << ',' << m.median_beta1;
        os << '\n';
    }
}

/// Long-format estimates, one row per replicate and model.
inline void write_replicates_csv(std::ostream& os, const std::vector<ExperimentReport>& reports) {
    os << "scenario,replicate,n,model,label,usable,beta1,lower,upper\n";
    os << std::setprecision(10);
    for (const auto& r : reports) {
        for (const auto& rep : r.replicates) {
            for (int m = 0; m < experiment_models; ++m) {
                const ModelOutcome& mo = rep.models[m];
                os << r.scenario << ',' << rep.index << ',' << rep.n << ',' << (m + 1) << ',' << model_label(m) << ','
                   << (mo.usable ? 1 : 0) << ',' << mo.beta1 << ',' << mo.lower << ',' << mo.upper << '\n';
            }
        }
    }
}

}  // namespace distfit

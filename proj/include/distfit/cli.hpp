#pragma once

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "distfit/covariate.hpp"
#include "distfit/error.hpp"
#include "distfit/inference.hpp"
#include "distfit/io.hpp"
#include "distfit/likelihood.hpp"
#include "distfit/simulation.hpp"

namespace distfit::cli {

using json = nlohmann::json;
namespace fs = std::filesystem;

inline constexpr const char* version = "distfit 1.0.0";

enum class Command { fit, simulate, experiment, predict, abundance };

inline Command parse_command(const std::string& s) {
    static const std::map<std::string, Command> names{{"fit", Command::fit},
                                                      {"simulate", Command::simulate},
                                                      {"experiment", Command::experiment},
                                                      {"predict", Command::predict},
                                                      {"abundance", Command::abundance}};
    const auto it = names.find(s);
    if (it == names.end())
        throw ConfigError("unknown command '" + s + "'", "use fit, simulate, experiment, predict or abundance");
    return it->second;
}

inline const char* to_string(Command c) {
    switch (c) {
        case Command::fit: return "fit";
        case Command::simulate: return "simulate";
        case Command::experiment: return "experiment";
        case Command::predict: return "predict";
        case Command::abundance: return "abundance";
    }
    return "?";
}

/// Everything a run needs: the merged configuration (file plus overrides,
/// with paths made absolute), the command, seed and output directory.
struct RunConfig {
    Command command = Command::fit;
    json config = json::object();
    fs::path out_dir = "out";
    std::uint64_t seed = 1;
};

struct Artifact {
    std::string file;
    std::string sha256;
    std::size_t bytes = 0;
};

struct RunResult {
    std::vector<Artifact> artifacts;
    std::string summary;
};

// ---------------------------------------------------------------------------
// Hashing and atomic output

inline std::string sha256_hex(const std::string& data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw NumericalError("SHA-256 digest failed");
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
    return os.str();
}

/// Writes via a temporary file in the same directory and renames it into place.
inline Artifact write_atomic(const fs::path& path, const std::string& content) {
    fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ConfigError("cannot write '" + tmp.string() + "'", "check that the output directory is writable");
        out << content;
        out.flush();
        if (!out) throw ConfigError("write to '" + tmp.string() + "' failed");
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw ConfigError("cannot move '" + tmp.string() + "' into place: " + ec.message());
    return {path.filename().string(), sha256_hex(content), content.size()};
}

// ---------------------------------------------------------------------------
// Schema

namespace schema {

enum class T { number, integer, boolean, string, array, object, number_or_null, any };

using Fields = std::map<std::string, T>;

inline const char* name(T t) {
    switch (t) {
        case T::number: return "a number";
        case T::integer: return "an integer";
        case T::boolean: return "true or false";
        case T::string: return "a string";
        case T::array: return "an array";
        case T::object: return "an object";
        case T::number_or_null: return "a number or null";
        case T::any: return "a value";
    }
    return "?";
}

inline bool matches(const json& v, T t) {
    switch (t) {
        case T::number: return v.is_number();
        case T::integer: return v.is_number_integer();
        case T::boolean: return v.is_boolean();
        case T::string: return v.is_string();
        case T::array: return v.is_array();
        case T::object: return v.is_object();
        case T::number_or_null: return v.is_number() || v.is_null();
        case T::any: return true;
    }
    return false;
}

inline void check(const json& obj, const std::string& where, const Fields& fields) {
    if (!obj.is_object()) throw ConfigError("config key '" + where + "' must be an object");
    for (const auto& [key, value] : obj.items()) {
        const auto it = fields.find(key);
        const std::string path = where.empty() ? key : where + "." + key;
        if (it == fields.end()) {
            std::string known;
            for (const auto& [k, t] : fields) known += (known.empty() ? "" : ", ") + k;
            throw ConfigError("unknown config key '" + path + "'", "known keys here: " + known);
        }
        if (!matches(value, it->second))
            throw ConfigError("config key '" + path + "' must be " + name(it->second));
    }
}

inline const Fields top{{"command", T::string},      {"data", T::object},          {"rasters", T::array},
                        {"interpolation", T::string}, {"model", T::object},         {"intensity", T::object},
                        {"detection", T::object},    {"distance_error", T::object}, {"quadrature", T::object},
                        {"optimizer", T::object},    {"seed", T::integer},         {"bootstrap_B", T::integer},
                        {"output", T::string},       {"predict", T::object},       {"abundance", T::object},
                        {"scenario", T::object},     {"scenarios", T::array}};
inline const Fields data{{"observations", T::string}, {"transects", T::string}, {"region", T::string}};
inline const Fields raster{{"path", T::string}, {"name", T::string}};
inline const Fields model{{"variant", T::string}, {"surrogate", T::object}, {"locus_normalization", T::string}};
inline const Fields surrogate{{"kind", T::string}, {"buffer_radius", T::number}};
inline const Fields intensity{{"beta0", T::number}, {"beta", T::array}};
inline const Fields detection{{"sigma", T::number}, {"w", T::number_or_null}, {"estimate_sigma", T::boolean}};
inline const Fields distance_error{{"family", T::string}, {"theta", T::number}, {"lower", T::number},
                                   {"upper", T::number},  {"spread", T::string}};
inline const Fields quadrature{{"region_Q", T::integer}, {"locus_Q", T::integer}, {"error_Q", T::integer},
                               {"clip_locus", T::boolean}};
inline const Fields optimizer{{"rel_tol", T::number},      {"max_evals", T::integer}, {"restarts", T::integer},
                              {"hessian_step", T::number}, {"level", T::number}};
inline const Fields predict{{"origin", T::array}, {"cell_size", T::number}, {"nrows", T::integer},
                            {"ncols", T::integer}, {"curve_points", T::integer}};
inline const Fields abundance{{"region", T::string}, {"region_Q", T::integer}};
inline const Fields surface{{"cells", T::integer},          {"high_amp", T::number},       {"low_amp", T::number},
                            {"high_center", T::array},      {"low_center", T::array},      {"high_radius", T::number},
                            {"low_radius", T::number},      {"texture_amp", T::number},    {"wavelength_min", T::number},
                            {"wavelength_max", T::number},  {"texture_waves", T::integer}, {"texture_seed", T::integer},
                            {"offset", T::number}};
inline const Fields scenario{{"name", T::string},          {"placement", T::string},     {"n_transects", T::integer},
                             {"candidate_grid", T::integer}, {"beta0", T::number},       {"beta", T::array},
                             {"sigma", T::number},         {"w", T::number},             {"buffer_radius", T::number},
                             {"replicates", T::integer},   {"threads", T::integer},      {"transects", T::string},
                             {"region", T::string},        {"raster", T::string},        {"surface", T::object},
                             {"distance_error", T::object}, {"record_locations", T::boolean}};

}  // namespace schema

namespace detail {

inline const json& section(const json& c, const char* key) {
    static const json empty = json::object();
    const auto it = c.find(key);
    return it == c.end() ? empty : *it;
}

template <class V>
V get_or(const json& obj, const char* key, V fallback) {
    const auto it = obj.find(key);
    return it == obj.end() ? fallback : it->get<V>();
}

inline Point get_point(const json& v, const std::string& key) {
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
        throw ConfigError("config key '" + key + "' must be [x, y]");
    return {v[0].get<double>(), v[1].get<double>()};
}

inline std::vector<double> get_numbers(const json& v, const std::string& key) {
    std::vector<double> out;
    for (const auto& e : v) {
        if (!e.is_number()) throw ConfigError("config key '" + key + "' must hold numbers only");
        out.push_back(e.get<double>());
    }
    return out;
}

inline void require_file(const json& obj, const char* key, const std::string& where) {
    const auto it = obj.find(key);
    if (it == obj.end()) return;
    const fs::path p = it->get<std::string>();
    if (!fs::is_regular_file(p))
        throw ConfigError("config key '" + where + key + "' names a missing file: " + p.string(),
                          "paths are resolved relative to the config file");
}

inline void absolutize(json& obj, const char* key, const fs::path& base) {
    const auto it = obj.find(key);
    if (it == obj.end() || !it->is_string()) return;
    fs::path p = it->get<std::string>();
    if (p.is_relative()) p = base / p;
    *it = p.lexically_normal().string();
}

inline void set_dotted(json& root, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("--set expects key=value, got '" + assignment + "'");
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    json* node = &root;
    std::size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) throw ConfigError("--set key '" + key + "' has an empty component");
        if (!node->is_object()) throw ConfigError("--set key '" + key + "' descends into a non-object");
        if (dot == std::string::npos) {
            (*node)[part] = value;
            break;
        }
        node = &(*node)[part];
        if (node->is_null()) *node = json::object();
        start = dot + 1;
    }
}

}  // namespace detail

/// Checks keys and types everywhere, and that every referenced file exists.
inline void validate(const json& c, Command cmd) {
    using namespace schema;
    check(c, "", top);
    const json& d = detail::section(c, "data");
    check(d, "data", schema::data);
    check(detail::section(c, "model"), "model", schema::model);
    check(detail::section(detail::section(c, "model"), "surrogate"), "model.surrogate", schema::surrogate);
    check(detail::section(c, "intensity"), "intensity", schema::intensity);
    check(detail::section(c, "detection"), "detection", schema::detection);
    check(detail::section(c, "distance_error"), "distance_error", schema::distance_error);
    check(detail::section(c, "quadrature"), "quadrature", schema::quadrature);
    check(detail::section(c, "optimizer"), "optimizer", schema::optimizer);
    check(detail::section(c, "predict"), "predict", schema::predict);
    check(detail::section(c, "abundance"), "abundance", schema::abundance);
    if (const auto it = c.find("rasters"); it != c.end()) {
        for (const auto& r : *it) {
            if (r.is_object()) {
                check(r, "rasters[]", raster);
                if (!r.contains("path")) throw ConfigError("config key 'rasters[]' entries need a path");
                detail::require_file(r, "path", "rasters[].");
            } else if (!r.is_string()) {
                throw ConfigError("config key 'rasters' must list paths or {path, name} objects");
            } else if (!fs::is_regular_file(r.get<std::string>())) {
                throw ConfigError("raster file is missing: " + r.get<std::string>());
            }
        }
    }
    auto check_scenario = [&](const json& s, const std::string& where) {
        check(s, where, schema::scenario);
        check(detail::section(s, "surface"), where + ".surface", schema::surface);
        check(detail::section(s, "distance_error"), where + ".distance_error", schema::distance_error);
        for (const char* k : {"transects", "region", "raster"}) detail::require_file(s, k, where + ".");
    };
    check_scenario(detail::section(c, "scenario"), "scenario");
    if (const auto it = c.find("scenarios"); it != c.end())
        for (const auto& s : *it) check_scenario(s, "scenarios[]");

    const bool needs_data = cmd == Command::fit || cmd == Command::predict || cmd == Command::abundance;
    if (needs_data) {
        for (const char* k : {"observations", "transects", "region"}) {
            if (!d.contains(k))
                throw ConfigError(std::string("config key 'data.") + k + "' is required for " + to_string(cmd));
            detail::require_file(d, k, "data.");
        }
    }
    detail::require_file(detail::section(c, "abundance"), "region", "abundance.");
    if (cmd == Command::predict && !c.contains("rasters"))
        throw ConfigError("predict needs at least one raster in 'rasters'");
}

/// Loads a config file (or a manifest from an earlier run) and applies overrides.
inline RunConfig load_run_config(const fs::path& config_path, const std::optional<std::string>& command,
                                 const std::vector<std::string>& sets, std::optional<std::uint64_t> seed,
                                 std::optional<fs::path> out_dir) {
    std::ifstream in(config_path);
    if (!in) throw ConfigError("cannot open config '" + config_path.string() + "'");
    json c = json::parse(in, nullptr, false, true);
    if (c.is_discarded() || !c.is_object())
        throw ConfigError("config '" + config_path.string() + "' is not a JSON object");
    if (c.contains("config_sha256") && c.contains("config")) c = c["config"];  // rerun from a manifest

    for (const auto& s : sets) detail::set_dotted(c, s);
    const fs::path base = fs::absolute(config_path).parent_path();

    // Paths are made absolute before validation so the stored config is self-contained.
    if (c.contains("data") && c["data"].is_object())
        for (const char* k : {"observations", "transects", "region"}) detail::absolutize(c["data"], k, base);
    if (c.contains("rasters") && c["rasters"].is_array()) {
        for (auto& r : c["rasters"]) {
            if (r.is_string()) {
                fs::path p = r.get<std::string>();
                r = (p.is_relative() ? base / p : p).lexically_normal().string();
            } else if (r.is_object()) {
                detail::absolutize(r, "path", base);
            }
        }
    }
    if (c.contains("abundance") && c["abundance"].is_object()) detail::absolutize(c["abundance"], "region", base);
    auto fix_scenario = [&](json& s) {
        if (!s.is_object()) return;
        for (const char* k : {"transects", "region", "raster"}) detail::absolutize(s, k, base);
    };
    if (c.contains("scenario")) fix_scenario(c["scenario"]);
    if (c.contains("scenarios") && c["scenarios"].is_array())
        for (auto& s : c["scenarios"]) fix_scenario(s);

    RunConfig rc;
    if (command) {
        rc.command = parse_command(*command);
        c["command"] = *command;
    } else if (c.contains("command") && c["command"].is_string()) {
        rc.command = parse_command(c["command"].get<std::string>());
    } else {
        throw ConfigError("no command given", "pass fit, simulate, experiment, predict or abundance");
    }
    if (seed) c["seed"] = *seed;
    if (!c.contains("seed")) c["seed"] = 1;
    validate(c, rc.command);
    rc.seed = c["seed"].get<std::uint64_t>();
    if (out_dir) {
        rc.out_dir = *out_dir;
    } else if (c.contains("output")) {
        fs::path p = c["output"].get<std::string>();
        rc.out_dir = p.is_relative() ? base / p : p;
    } else {
        rc.out_dir = fs::current_path() / "out";
    }
    c.erase("output");  // not part of the result identity
    rc.config = std::move(c);
    return rc;
}

// ---------------------------------------------------------------------------
// Config to model objects

inline QuadratureScheme quadrature_from(const json& c, QuadratureScheme q) {
    const json& s = detail::section(c, "quadrature");
    q.region_Q = detail::get_or(s, "region_Q", q.region_Q);
    q.locus_Q = detail::get_or(s, "locus_Q", q.locus_Q);
    q.error_Q = detail::get_or(s, "error_Q", q.error_Q);
    q.clip_locus = detail::get_or(s, "clip_locus", q.clip_locus);
    q.validate();
    return q;
}

inline DistanceErrorParams distance_error_from(const json& s) {
    DistanceErrorParams ep;
    const std::string family = detail::get_or<std::string>(s, "family", "none");
    if (family == "none") ep.family = ErrorFamily::none;
    else if (family == "truncated_normal" || family == "normal") ep.family = ErrorFamily::truncated_normal;
    else if (family == "laplace") ep.family = ErrorFamily::laplace;
    else throw ConfigError("distance_error.family '" + family + "' is not none, truncated_normal or laplace");
    ep.theta = detail::get_or(s, "theta", ep.theta);
    ep.lower = detail::get_or(s, "lower", ep.lower);
    ep.upper = detail::get_or(s, "upper", ep.upper);
    const std::string spread = detail::get_or<std::string>(s, "spread", "sd_proportional");
    if (spread == "sd_proportional") ep.spread = ErrorSpread::sd_proportional;
    else if (spread == "variance_proportional") ep.spread = ErrorSpread::variance_proportional;
    else throw ConfigError("distance_error.spread '" + spread + "' is not sd_proportional or variance_proportional");
    ep.validate();
    return ep;
}

inline ModelSpec model_from(const json& c) {
    ModelSpec ms;
    const json& m = detail::section(c, "model");
    const std::string variant = detail::get_or<std::string>(m, "variant", "locus");
    if (variant == "exact") {
        ms.variant = LoglikVariant::exact();
    } else if (variant == "locus") {
        ms.variant = LoglikVariant::locus();
    } else if (variant == "distance_error") {
        ms.variant = LoglikVariant::distance_error();
    } else if (variant == "surrogate") {
        const json& s = detail::section(m, "surrogate");
        const std::string kind = detail::get_or<std::string>(s, "kind", "transect_center");
        if (kind == "transect_center") ms.variant = LoglikVariant::surrogate_of(SurrogateSpec::center());
        else if (kind == "transect_buffer_average")
            ms.variant = LoglikVariant::surrogate_of(SurrogateSpec::buffer(detail::get_or(s, "buffer_radius", 0.0)));
        else throw ConfigError("model.surrogate.kind '" + kind + "' is not transect_center or transect_buffer_average");
    } else {
        throw ConfigError("model.variant '" + variant + "' is not exact, locus, distance_error or surrogate");
    }
    const std::string norm = detail::get_or<std::string>(m, "locus_normalization", "recorded_distance");
    if (norm == "recorded_distance") ms.locus_normalization = LocusNormalization::recorded_distance;
    else if (norm == "true_distance") ms.locus_normalization = LocusNormalization::true_distance;
    else throw ConfigError("model.locus_normalization '" + norm + "' is not recorded_distance or true_distance");

    const json& d = detail::section(c, "detection");
    ms.detection.sigma = detail::get_or(d, "sigma", ms.detection.sigma);
    if (const auto it = d.find("w"); it != d.end() && !it->is_null()) ms.detection.w = it->get<double>();
    ms.estimate_sigma = detail::get_or(d, "estimate_sigma", true);
    ms.detection.validate();

    ms.distance_error = distance_error_from(detail::section(c, "distance_error"));
    if (ms.variant.kind == LoglikVariant::Kind::distance_error && ms.distance_error.family == ErrorFamily::none)
        throw ConfigError("variant distance_error needs distance_error.family", "set truncated_normal or laplace");

    const json& ip = detail::section(c, "intensity");
    if (ip.contains("beta0") || ip.contains("beta")) {
        IntensityParams init;
        init.beta0 = detail::get_or(ip, "beta0", 0.0);
        if (ip.contains("beta")) init.beta = detail::get_numbers(ip["beta"], "intensity.beta");
        ms.init = init;
    }
    ms.quadrature = quadrature_from(c, QuadratureScheme{});
    return ms;
}

inline FitControls controls_from(const json& c) {
    FitControls fc;
    const json& o = detail::section(c, "optimizer");
    fc.optimizer.rel_tol = detail::get_or(o, "rel_tol", fc.optimizer.rel_tol);
    fc.optimizer.max_evals = detail::get_or(o, "max_evals", fc.optimizer.max_evals);
    fc.optimizer.restarts = detail::get_or(o, "restarts", fc.optimizer.restarts);
    fc.hessian_step = detail::get_or(o, "hessian_step", fc.hessian_step);
    fc.level = detail::get_or(o, "level", fc.level);
    if (!(fc.optimizer.rel_tol > 0.0)) throw ConfigError("optimizer.rel_tol must be positive");
    if (fc.optimizer.max_evals < 1) throw ConfigError("optimizer.max_evals must be >= 1");
    if (fc.optimizer.restarts < 0) throw ConfigError("optimizer.restarts must be >= 0");
    if (!(fc.hessian_step > 0.0)) throw ConfigError("optimizer.hessian_step must be positive");
    if (!(fc.level > 0.0 && fc.level < 1.0)) throw ConfigError("optimizer.level must lie in (0, 1)");
    return fc;
}

inline Interpolation interpolation_from(const json& c) {
    const std::string s = detail::get_or<std::string>(c, "interpolation", "bilinear");
    if (s == "bilinear") return Interpolation::bilinear;
    if (s == "nearest") return Interpolation::nearest;
    throw ConfigError("interpolation '" + s + "' is not bilinear or nearest");
}

/// Covariate stack from `rasters`; without rasters, a layer-free field over the region.
inline CovariateField field_from(const json& c, const StudyRegion& region) {
    const auto it = c.find("rasters");
    if (it == c.end() || it->empty()) {
        const BoundingBox& b = region.bbox();
        const double size = std::max(b.width(), b.height());
        return CovariateField(b.min, size, 1, 1);
    }
    std::vector<std::string> paths, names;
    for (const auto& r : *it) {
        if (r.is_string()) {
            paths.push_back(r.get<std::string>());
            names.push_back(fs::path(paths.back()).stem().string());
        } else {
            paths.push_back(r["path"].get<std::string>());
            names.push_back(r.contains("name") ? r["name"].get<std::string>() : fs::path(paths.back()).stem().string());
        }
    }
    CovariateField f = load_rasters(paths, names, interpolation_from(c));
    f.validate_covers(region);
    return f;
}

inline HabitatSurface surface_from(const json& s) {
    HabitatSurface h;
    h.high_amp = detail::get_or(s, "high_amp", h.high_amp);
    h.low_amp = detail::get_or(s, "low_amp", h.low_amp);
    if (s.contains("high_center")) h.high_center = detail::get_point(s["high_center"], "surface.high_center");
    if (s.contains("low_center")) h.low_center = detail::get_point(s["low_center"], "surface.low_center");
    h.high_radius = detail::get_or(s, "high_radius", h.high_radius);
    h.low_radius = detail::get_or(s, "low_radius", h.low_radius);
    h.texture_amp = detail::get_or(s, "texture_amp", h.texture_amp);
    h.wavelength_min = detail::get_or(s, "wavelength_min", h.wavelength_min);
    h.wavelength_max = detail::get_or(s, "wavelength_max", h.wavelength_max);
    h.texture_waves = detail::get_or(s, "texture_waves", h.texture_waves);
    h.texture_seed = detail::get_or(s, "texture_seed", h.texture_seed);
    h.offset = detail::get_or(s, "offset", h.offset);
    if (!(h.high_radius > 0.0 && h.low_radius > 0.0)) throw ConfigError("surface radii must be positive");
    if (!(h.wavelength_min > 0.0 && h.wavelength_min <= h.wavelength_max))
        throw ConfigError("surface wavelengths need 0 < wavelength_min <= wavelength_max");
    if (h.texture_waves < 0) throw ConfigError("surface.texture_waves must be >= 0");
    return h;
}

/// Scenario from its JSON block layered over the shared `scenario` block.
struct ScenarioSetup {
    ScenarioSpec spec;
    std::optional<std::vector<Transect>> transects;  // fixed design read from file
    DistanceErrorParams distance_error;
    bool record_locations = true;
};

inline ScenarioSetup scenario_from(const json& c, const json& s, std::uint64_t seed) {
    ScenarioSetup out;
    ScenarioSpec& sp = out.spec;
    sp.seed = seed;
    sp.name = detail::get_or<std::string>(s, "name", sp.name);
    const std::string placement = detail::get_or<std::string>(s, "placement", "convenience");
    if (placement == "convenience") sp.placement = Placement::convenience;
    else if (placement == "random") sp.placement = Placement::random;
    else throw ConfigError("scenario.placement '" + placement + "' is not convenience or random");
    sp.n_transects = detail::get_or(s, "n_transects", sp.n_transects);
    sp.candidate_grid = detail::get_or(s, "candidate_grid", sp.candidate_grid);
    sp.truth.beta0 = detail::get_or(s, "beta0", sp.truth.beta0);
    if (s.contains("beta")) sp.truth.beta = detail::get_numbers(s["beta"], "scenario.beta");
    sp.detection.sigma = detail::get_or(s, "sigma", sp.detection.sigma);
    sp.detection.w = detail::get_or(s, "w", sp.detection.w);
    sp.detection.validate();
    sp.buffer_radius = detail::get_or(s, "buffer_radius", sp.buffer_radius);
    sp.replicates = detail::get_or(s, "replicates", sp.replicates);
    sp.threads = detail::get_or(s, "threads", 0u);
    sp.quadrature = quadrature_from(c, sp.quadrature);
    sp.controls = controls_from(c);
    if (sp.n_transects < 1) throw ConfigError("scenario.n_transects must be >= 1");
    if (sp.candidate_grid < 1) throw ConfigError("scenario.candidate_grid must be >= 1");
    if (sp.replicates < 1) throw ConfigError("scenario.replicates must be >= 1");

    if (s.contains("region")) sp.region = read_region(s["region"].get<std::string>());
    if (s.contains("raster")) {
        CovariateField f = load_rasters({s["raster"].get<std::string>()}, {"habitat"}, interpolation_from(c));
        sp.field = std::make_shared<const CovariateField>(std::move(f));
    } else {
        const json& surf = detail::section(s, "surface");
        const int cells = detail::get_or(surf, "cells", 200);
        if (cells < 2) throw ConfigError("scenario.surface.cells must be >= 2");
        sp.field = std::make_shared<const CovariateField>(default_simulation_field(cells, surface_from(surf)));
    }
    sp.field->validate_covers(sp.region);
    if (sp.truth.beta.size() != sp.field->layer_count())
        throw ConfigError("scenario.beta has " + std::to_string(sp.truth.beta.size()) + " entries but the field has " +
                          std::to_string(sp.field->layer_count()) + " layers");
    if (s.contains("transects")) out.transects = read_transects(s["transects"].get<std::string>());
    out.distance_error = distance_error_from(detail::section(s, "distance_error"));
    out.record_locations = detail::get_or(s, "record_locations", true);
    return out;
}

// ---------------------------------------------------------------------------
// Reports

inline std::string fmt(double v, int precision = 10) {
    if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
    std::ostringstream os;
    os << std::setprecision(precision) << v;
    return os.str();
}

inline json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

/// JSON sidecar of a fit. Positive parameters also appear on their natural scale.
inline json fit_json(const FitResult& fr, const ModelSpec& ms, const Dataset& data, const FitControls& fc) {
    json j;
    j["variant"] = to_string(ms.variant.kind);
    j["n"] = data.n();
    j["transects"] = data.transects.size();
    j["k"] = fr.k;
    j["loglik"] = number(fr.loglik);
    j["aic"] = number(fr.aic);
    j["converged"] = fr.converged;
    j["has_covariance"] = fr.has_covariance();
    j["evaluations"] = fr.n_evals;
    j["message"] = fr.message;
    j["level"] = fc.level;
    json params = json::array();
    for (std::size_t i = 0; i < fr.names.size(); ++i) {
        json p;
        p["name"] = fr.names[i];
        p["estimate"] = number(fr.estimates[static_cast<Eigen::Index>(i)]);
        p["se"] = number(fr.se(i));
        p["lower"] = number(fr.has_covariance() ? fr.wald_ci[i].first : NAN);
        p["upper"] = number(fr.has_covariance() ? fr.wald_ci[i].second : NAN);
        params.push_back(p);
    }
    j["parameters"] = params;
    json natural = json::object();
    auto add_natural = [&](const char* name, std::size_t idx) {
        const double e = fr.estimates[static_cast<Eigen::Index>(idx)];
        json p;
        p["estimate"] = number(std::exp(e));
        p["lower"] = number(fr.has_covariance() ? std::exp(fr.wald_ci[idx].first) : NAN);
        p["upper"] = number(fr.has_covariance() ? std::exp(fr.wald_ci[idx].second) : NAN);
        natural[name] = p;
    };
    if (fr.layout.has_log_sigma) add_natural("sigma", fr.layout.sigma_index());
    if (fr.layout.has_log_theta) add_natural("theta", fr.layout.theta_index());
    j["natural_scale"] = natural;
    j["fixed"] = {{"sigma", fr.layout.has_log_sigma ? json(nullptr) : number(ms.detection.sigma)},
                  {"w", number(ms.detection.w)}};
    if (fr.covariance) {
        json cov = json::array();
        for (Eigen::Index r = 0; r < fr.covariance->rows(); ++r) {
            json row = json::array();
            for (Eigen::Index c = 0; c < fr.covariance->cols(); ++c) row.push_back(number((*fr.covariance)(r, c)));
            cov.push_back(row);
        }
        j["covariance"] = cov;
    } else {
        j["covariance"] = nullptr;
    }
    return j;
}

inline std::string fit_text(const json& j, const std::vector<std::string>& layers) {
    std::ostringstream os;
    auto num = [](const json& v) { return v.is_null() ? std::string("nan") : fmt(v.get<double>()); };
    os << "variant: " << j["variant"].get<std::string>() << '\n';
    os << "n: " << j["n"].get<std::size_t>() << '\n';
    os << "transects: " << j["transects"].get<std::size_t>() << '\n';
    if (!layers.empty()) {
        os << "covariates:";
        for (std::size_t i = 0; i < layers.size(); ++i) os << " beta" << (i + 1) << '=' << layers[i];
        os << '\n';
    }
    os << "converged: " << (j["converged"].get<bool>() ? "true" : "false") << '\n';
    os << "evaluations: " << j["evaluations"].get<int>() << '\n';
    if (!j["message"].get<std::string>().empty()) os << "message: " << j["message"].get<std::string>() << '\n';
    os << "loglik: " << num(j["loglik"]) << '\n';
    os << "k: " << j["k"].get<int>() << '\n';
    os << "aic: " << num(j["aic"]) << '\n';
    os << "level: " << fmt(j["level"].get<double>()) << '\n';
    os << '\n' << std::left << std::setw(12) << "parameter" << std::setw(18) << "estimate" << std::setw(18) << "se"
       << std::setw(18) << "lower" << "upper\n";
    for (const auto& p : j["parameters"]) {
        os << std::setw(12) << p["name"].get<std::string>() << std::setw(18) << num(p["estimate"]) << std::setw(18)
           << num(p["se"]) << std::setw(18) << num(p["lower"]) << num(p["upper"]) << '\n';
    }
    for (const auto& [name, p] : j["natural_scale"].items()) {
        os << std::setw(12) << name << std::setw(18) << num(p["estimate"]) << std::setw(18) << "" << std::setw(18)
           << num(p["lower"]) << num(p["upper"]) << '\n';
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// Commands

class Runner {
public:
    Runner(const RunConfig& rc, std::ostream& log) : rc_(rc), log_(log) {}

    RunResult run() {
        switch (rc_.command) {
            case Command::fit: fit_command(); break;
            case Command::predict: predict_command(); break;
            case Command::abundance: abundance_command(); break;
            case Command::simulate: simulate_command(); break;
            case Command::experiment: experiment_command(); break;
        }
        write_manifest();
        return result_;
    }

private:
    void emit(const std::string& name, const std::string& content) {
        result_.artifacts.push_back(write_atomic(rc_.out_dir / name, content));
    }

    struct Fitted {
        Dataset data;
        CovariateField field;
        ModelSpec spec;
        FitControls controls;
        FitResult result;
    };

    Fitted run_fit() {
        const json& c = rc_.config;
        const json& d = c["data"];
        Dataset data = load_dataset({d["observations"].get<std::string>(), d["transects"].get<std::string>(),
                                     d["region"].get<std::string>()});
        CovariateField field = field_from(c, data.region);
        ModelSpec ms = model_from(c);
        const FitControls fc = controls_from(c);
        if (ms.variant.kind == LoglikVariant::Kind::exact && !data.has_exact_locations())
            throw DataError("variant exact needs x,y for every observation",
                            "add x,y columns or choose the locus variant");
        log_ << "fitting " << to_string(ms.variant.kind) << " model to " << data.n() << " records\n";
        FitResult fr = fit(data, field, ms, fc);
        Fitted out{std::move(data), std::move(field), std::move(ms), fc, std::move(fr)};
        const json j = fit_json(out.result, out.spec, out.data, out.controls);
        const std::string text = fit_text(j, out.field.layer_names());
        emit("fit_report.txt", text);
        emit("fit.json", j.dump(2) + "\n");
        result_.summary = text;
        return out;
    }

    static void require_usable(const FitResult& fr) {
        if (!fr.converged) throw NumericalError("fit did not converge: " + fr.message,
                                                "raise optimizer.max_evals or supply starting values in 'intensity'");
        if (!fr.has_covariance())
            throw NumericalError(fr.message, "the model may be non-identifiable; fix sigma or simplify the model");
    }

    void fit_command() {
        const Fitted f = run_fit();
        require_usable(f.result);
    }

    void predict_command() {
        const Fitted f = run_fit();
        require_usable(f.result);
        const json& p = detail::section(rc_.config, "predict");
        GridSpec grid = GridSpec::like(f.field);
        if (p.contains("origin")) grid.origin = detail::get_point(p["origin"], "predict.origin");
        grid.cell_size = detail::get_or(p, "cell_size", grid.cell_size);
        grid.nrows = detail::get_or(p, "nrows", grid.nrows);
        grid.ncols = detail::get_or(p, "ncols", grid.ncols);
        if (!(grid.cell_size > 0.0) || grid.nrows < 1 || grid.ncols < 1)
            throw ConfigError("predict grid needs cell_size > 0 and at least one row and column");
        const Point far{grid.origin.x + grid.ncols * grid.cell_size, grid.origin.y + grid.nrows * grid.cell_size};
        if (!f.field.covers(grid.origin) || !f.field.covers(far))
            throw DataError("prediction grid extends beyond the raster extent",
                            "keep predict.origin/cell_size/nrows/ncols inside the covariate rasters");
        const CovariateField surface = predict_surface(f.result, f.field, grid);
        std::ostringstream asc;
        write_ascii_grid(asc, surface);
        emit("intensity.asc", asc.str());
        emit("response_curve.csv", response_curve(f, detail::get_or(p, "curve_points", 101)));
    }

    /// Intensity against the first covariate with the others at their raster means,
    /// plus a parametric-bootstrap percentile band.
    std::string response_curve(const Fitted& f, int points) {
        if (points < 2) throw ConfigError("predict.curve_points must be >= 2");
        const std::size_t p = f.field.layer_count();
        std::vector<double> lo(p, INFINITY), hi(p, -INFINITY), mean(p, 0.0);
        for (std::size_t l = 0; l < p; ++l) {
            std::size_t n = 0;
            for (double v : f.field.layer(l)) {
                if (!std::isfinite(v)) continue;
                lo[l] = std::min(lo[l], v);
                hi[l] = std::max(hi[l], v);
                mean[l] += v;
                ++n;
            }
            mean[l] /= static_cast<double>(std::max<std::size_t>(n, 1));
        }
        std::vector<double> grid(static_cast<std::size_t>(points));
        for (int i = 0; i < points; ++i) grid[static_cast<std::size_t>(i)] = lo[0] + (hi[0] - lo[0]) * i / (points - 1);
        auto curve = [&](const Eigen::VectorXd& theta) {
            const IntensityParams ip = f.result.intensity_at(theta);
            Eigen::VectorXd out(points);
            std::vector<double> x = mean;
            for (int i = 0; i < points; ++i) {
                x[0] = grid[static_cast<std::size_t>(i)];
                out[i] = std::exp(ip.linear_predictor(x));
            }
            return out;
        };
        const int B = bootstrap_B();
        const BootstrapResult boot = bootstrap_derived(f.result, curve, B, derive_seed(rc_.seed, 2), f.controls.level);
        const Eigen::VectorXd est = curve(f.result.estimates);
        std::ostringstream os;
        os << f.field.layer_names()[0] << ",intensity,lower,upper\n";
        for (int i = 0; i < points; ++i) {
            const auto& ci = boot.ci[static_cast<std::size_t>(i)];
            os << fmt(grid[static_cast<std::size_t>(i)]) << ',' << fmt(est[i]) << ',' << fmt(ci.first) << ','
               << fmt(ci.second) << '\n';
        }
        return os.str();
    }

    int bootstrap_B() const {
        const int B = detail::get_or(rc_.config, "bootstrap_B", 1000);
        if (B < 100) throw ConfigError("bootstrap_B must be >= 100");
        return B;
    }

    void abundance_command() {
        const Fitted f = run_fit();
        require_usable(f.result);
        const json& a = detail::section(rc_.config, "abundance");
        const StudyRegion sub = a.contains("region") ? read_region(a["region"].get<std::string>()) : f.data.region;
        const int Q = detail::get_or(a, "region_Q", f.spec.quadrature.region_Q);
        const AbundanceResult ab = abundance_estimate(f.result, f.field, sub, Q, bootstrap_B(),
                                                      derive_seed(rc_.seed, 1), &f.data.region);
        json j;
        j["estimate"] = number(ab.estimate);
        j["lower"] = number(ab.ci.first);
        j["upper"] = number(ab.ci.second);
        j["area"] = number(ab.area);
        j["bootstrap_B"] = bootstrap_B();
        j["level"] = 0.95;
        emit("abundance.json", j.dump(2) + "\n");
        std::ostringstream os;
        os << "abundance: " << fmt(ab.estimate) << "\nlower: " << fmt(ab.ci.first) << "\nupper: " << fmt(ab.ci.second)
           << "\narea: " << fmt(ab.area) << "\nbootstrap_B: " << bootstrap_B() << '\n';
        emit("abundance.txt", os.str());
        result_.summary += "\n" + os.str();
    }

    void simulate_command() {
        const json& c = rc_.config;
        const ScenarioSetup setup = scenario_from(c, detail::section(c, "scenario"), rc_.seed);
        const ScenarioSpec& sp = setup.spec;
        const std::vector<Transect> transects = setup.transects ? *setup.transects : place_transects(sp);
        const std::uint64_t base = derive_seed(sp.seed, 0);
        const std::vector<Point> pts = simulate_ippp(*sp.field, sp.truth, sp.region, derive_seed(base, 1));
        Dataset data = simulate_detection(pts, transects, sp.region, sp.detection, derive_seed(base, 2));
        add_distance_error(data, setup.distance_error, derive_seed(base, 3));
        std::ostringstream obs, tr, reg, asc;
        write_observations(obs, data, setup.record_locations);
        write_transects(tr, transects);
        write_region(reg, sp.region);
        write_ascii_grid(asc, *sp.field);
        emit("observations.csv", obs.str());
        emit("transects.csv", tr.str());
        emit("region.csv", reg.str());
        emit("covariate.asc", asc.str());
        std::ostringstream os;
        os << "individuals: " << pts.size() << "\ndetected: " << data.n() << "\ntransects: " << transects.size() << '\n';
        result_.summary = os.str();
    }

    void experiment_command() {
        const json& c = rc_.config;
        const json& base = detail::section(c, "scenario");
        std::vector<json> blocks;
        if (const auto it = c.find("scenarios"); it != c.end() && !it->empty()) {
            for (const auto& s : *it) {
                json merged = base;
                for (const auto& [k, v] : s.items()) merged[k] = v;
                blocks.push_back(merged);
            }
        } else {
            blocks.push_back(base);
        }
        std::vector<ExperimentReport> reports;
        for (std::size_t i = 0; i < blocks.size(); ++i) {
            ScenarioSetup setup = scenario_from(c, blocks[i], rc_.seed);
            if (setup.spec.name == "scenario") setup.spec.name = std::to_string(i + 1);
            if (setup.transects) throw ConfigError("experiment places its own transects; remove scenario.transects");
            log_ << "scenario " << setup.spec.name << " (" << to_string(setup.spec.placement) << "), "
                 << setup.spec.replicates << " replicates\n";
            const int step = std::max(1, setup.spec.replicates / 10);
            reports.push_back(run_experiment(setup.spec, [&](int done, int total) {
                if (done % step == 0 || done == total) log_ << "  " << done << "/" << total << '\n';
            }));
        }
        std::ostringstream summary, reps;
        write_summary_csv(summary, reports);
        write_replicates_csv(reps, reports);
        emit("summary.csv", summary.str());
        emit("replicates.csv", reps.str());
        result_.summary = summary.str();
    }

    void write_manifest() {
        json m;
        m["tool"] = version;
        m["command"] = to_string(rc_.command);
        m["seed"] = rc_.seed;
        m["config_sha256"] = sha256_hex(rc_.config.dump());
        m["config"] = rc_.config;
        json arts = json::array();
        for (const Artifact& a : result_.artifacts)
            arts.push_back({{"file", a.file}, {"sha256", a.sha256}, {"bytes", a.bytes}});
        m["artifacts"] = arts;
        write_atomic(rc_.out_dir / "manifest.json", m.dump(2) + "\n");
    }

    const RunConfig& rc_;
    std::ostream& log_;
    RunResult result_;
};

/// Executes one command; throws distfit::Error on failure.
inline RunResult run(const RunConfig& rc, std::ostream& log = std::clog) { return Runner(rc, log).run(); }

inline const char* category_name(ErrorCategory c) {
    switch (c) {
        case ErrorCategory::config: return "config";
        case ErrorCategory::data: return "data";
        case ErrorCategory::numerical: return "numerical";
    }
    return "?";
}

/// Command-line entry point. Returns the process exit status.
inline int main(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Distance-sampling point-process models with location uncertainty", "distfit"};
    std::string command, config;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    bool quiet = false;
    app.add_option("command", command, "fit, simulate, experiment, predict or abundance")
        ->required()
        ->check(CLI::IsMember({"fit", "simulate", "experiment", "predict", "abundance"}));
    app.add_option("--config,-c", config, "JSON configuration file")->required();
    app.add_option("--set", sets, "override a config value, key.path=value (repeatable)");
    app.add_option("--seed", seed, "master random seed");
    app.add_option("--out,-o", out_dir, "output directory");
    app.add_flag("--quiet,-q", quiet, "suppress progress output");
    app.set_version_flag("--version", version);
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : static_cast<int>(ErrorCategory::config);
    }
    std::ostringstream sink;
    std::ostream& log = quiet ? static_cast<std::ostream&>(sink) : err;
    try {
        const RunConfig rc = load_run_config(config, command, sets, seed,
                                             out_dir ? std::optional<fs::path>(*out_dir) : std::nullopt);
        const RunResult r = run(rc, log);
        out << r.summary;
        if (!r.summary.empty() && r.summary.back() != '\n') out << '\n';
        out << "wrote " << r.artifacts.size() << " artifacts and manifest.json to " << rc.out_dir.string() << '\n';
        return 0;
    } catch (const Error& e) {
        err << "error [" << category_name(e.category()) << "]: " << e.what() << '\n';
        if (!e.hint().empty()) err << "  hint: " << e.hint() << '\n';
        return e.exit_code();
    } catch (const json::exception& e) {
        err << "error [config]: " << e.what() << '\n';
        return static_cast<int>(ErrorCategory::config);
    } catch (const fs::filesystem_error& e) {
        err << "error [config]: " << e.what() << '\n';
        return static_cast<int>(ErrorCategory::config);
    } catch (const std::exception& e) {
        err << "error [internal]: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace distfit::cli

#pragma once

#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mfglab/coupling.hpp"
#include "mfglab/csv.hpp"
#include "mfglab/dynamics.hpp"
#include "mfglab/expressions.hpp"
#include "mfglab/stationary.hpp"

namespace mfglab {

/// Run configuration: parsed from JSON, validated strictly before any
/// compute. Unknown keys are rejected at every nesting level so a typo in a
/// config fails loudly instead of silently running with a default; the same
/// rules are published as a JSON schema next to the binary's sources.

struct RunConfig {
    int dim = 1;
    int n_points = 64;
    int n_points_y = 0;
    double length = 1.0;
    double length_y = 1.0;

    std::string coupling_name = "zero";
    std::vector<double> coupling_params;
    double stabilize_eta = 0.0;

    double delta = 0.0;
    double T = 1.0;
    std::vector<double> horizons;

    std::string mu0_expr;
    std::string mu0_csv;
    std::string vT_expr;
    std::string vT_csv;
    double data_scale = 1.0;

    SolveOptions solver;
    StationaryOptions stationary;

    double diag_C = 10.0;
    double eps_bar = std::numeric_limits<double>::quiet_NaN();
    double lambda_bar = std::numeric_limits<double>::quiet_NaN();
    bool smallness_ok = true;

    std::string output_dir;
    long seed = 0;

    std::string sweep_axis;
    std::vector<double> sweep_values;
    /// also compute the linearized spectrum at every sweep point
    bool sweep_spectrum = false;

    /// raw text of the file, kept for hashing into the manifest
    std::string raw_text;
};

namespace detail {

inline void check_keys(const nlohmann::json& obj, const std::vector<std::string>& allowed,
                       const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const auto& k : allowed)
            if (it.key() == k) ok = true;
        if (!ok)
            throw ConfigError("unknown key \"" + it.key() + "\" in " + where);
    }
}

template <typename T>
inline T get_as(const nlohmann::json& obj, const std::string& key, const T& fallback,
                const std::string& where) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("bad value for \"" + key + "\" in " + where + ": " + e.what());
    }
}

} // namespace detail

inline RunConfig parse_config_json(const nlohmann::json& j) {
    using nlohmann::json;
    if (!j.is_object()) throw ConfigError("config root must be a JSON object");
    detail::check_keys(j,
                       {"grid", "coupling", "delta", "T", "horizons", "data", "solver",
                        "stationary", "diagnostics", "output_dir", "seed", "sweep"},
                       "config root");
    RunConfig c;

    if (j.contains("grid")) {
        const json& g = j.at("grid");
        detail::check_keys(g, {"dim", "n_points", "length"}, "grid");
        c.dim = detail::get_as<int>(g, "dim", 1, "grid");
        if (c.dim != 1 && c.dim != 2) throw ConfigError("grid.dim must be 1 or 2");
        if (g.contains("n_points") && g.at("n_points").is_array()) {
            const auto v = g.at("n_points").get<std::vector<int>>();
            if (v.size() != static_cast<std::size_t>(c.dim))
                throw ConfigError("grid.n_points array must have one entry per dimension");
            c.n_points = v[0];
            if (c.dim == 2) c.n_points_y = v[1];
        } else {
            c.n_points = detail::get_as<int>(g, "n_points", 64, "grid");
            if (c.dim == 2) c.n_points_y = c.n_points;
        }
        if (g.contains("length") && g.at("length").is_array()) {
            const auto v = g.at("length").get<std::vector<double>>();
            if (v.size() != static_cast<std::size_t>(c.dim))
                throw ConfigError("grid.length array must have one entry per dimension");
            c.length = v[0];
            if (c.dim == 2) c.length_y = v[1];
        } else {
            c.length = detail::get_as<double>(g, "length", 1.0, "grid");
            c.length_y = c.length;
        }
        if (c.n_points < 8 || (c.dim == 2 && c.n_points_y < 8))
            throw ConfigError("grid.n_points must be at least 8 per axis");
        if (!(c.length > 0.0) || (c.dim == 2 && !(c.length_y > 0.0)))
            throw ConfigError("grid.length must be positive");
    }

    if (j.contains("coupling")) {
        const json& m = j.at("coupling");
        detail::check_keys(m, {"name", "params", "stabilize_eta"}, "coupling");
        c.coupling_name = detail::get_as<std::string>(m, "name", "zero", "coupling");
        c.coupling_params =
            detail::get_as<std::vector<double>>(m, "params", {}, "coupling");
        c.stabilize_eta = detail::get_as<double>(m, "stabilize_eta", 0.0, "coupling");
        if (c.stabilize_eta < 0.0) throw ConfigError("coupling.stabilize_eta must be >= 0");
    }

    c.delta = detail::get_as<double>(j, "delta", 0.0, "config root");
    if (c.delta < 0.0) throw ConfigError("delta must be >= 0");
    if (j.contains("T") && j.contains("horizons"))
        throw ConfigError("give either T or horizons, not both");
    c.T = detail::get_as<double>(j, "T", 1.0, "config root");
    if (!(c.T > 0.0)) throw ConfigError("T must be positive");
    c.horizons = detail::get_as<std::vector<double>>(j, "horizons", {}, "config root");
    for (std::size_t k = 1; k < c.horizons.size(); ++k)
        if (c.horizons[k] <= c.horizons[k - 1])
            throw ConfigError("horizons must be strictly increasing");

    if (j.contains("data")) {
        const json& d = j.at("data");
        detail::check_keys(d, {"mu0_expr", "mu0_csv", "vT_expr", "vT_csv", "scale"}, "data");
        c.mu0_expr = detail::get_as<std::string>(d, "mu0_expr", "", "data");
        c.mu0_csv = detail::get_as<std::string>(d, "mu0_csv", "", "data");
        c.vT_expr = detail::get_as<std::string>(d, "vT_expr", "", "data");
        c.vT_csv = detail::get_as<std::string>(d, "vT_csv", "", "data");
        c.data_scale = detail::get_as<double>(d, "scale", 1.0, "data");
        if (!c.mu0_expr.empty() && !c.mu0_csv.empty())
            throw ConfigError("data: give mu0_expr or mu0_csv, not both");
        if (!c.vT_expr.empty() && !c.vT_csv.empty())
            throw ConfigError("data: give vT_expr or vT_csv, not both");
    }

    if (j.contains("solver")) {
        const json& s = j.at("solver");
        detail::check_keys(
            s, {"n_steps", "damping", "nu_schedule", "tol", "max_outer", "backward_scheme"},
            "solver");
        c.solver.n_steps = detail::get_as<int>(s, "n_steps", 0, "solver");
        c.solver.damping = detail::get_as<double>(s, "damping", 0.5, "solver");
        c.solver.nu_schedule = detail::get_as<std::vector<double>>(
            s, "nu_schedule", {0.25, 0.5, 0.75, 1.0}, "solver");
        c.solver.tol = detail::get_as<double>(s, "tol", 1e-9, "solver");
        c.solver.max_outer = detail::get_as<int>(s, "max_outer", 500, "solver");
        const std::string scheme =
            detail::get_as<std::string>(s, "backward_scheme", "semi_implicit", "solver");
        if (scheme == "semi_implicit") {
            c.solver.backward_scheme = BackwardScheme::semi_implicit;
        } else if (scheme == "cole_hopf") {
            c.solver.backward_scheme = BackwardScheme::cole_hopf;
        } else {
            throw ConfigError("solver.backward_scheme must be cole_hopf or semi_implicit");
        }
        if (!(c.solver.damping > 0.0) || c.solver.damping > 1.0)
            throw ConfigError("solver.damping must lie in (0, 1]");
        if (!(c.solver.tol > 0.0)) throw ConfigError("solver.tol must be positive");
        if (c.solver.max_outer < 1) throw ConfigError("solver.max_outer must be >= 1");
        if (c.solver.nu_schedule.empty() || c.solver.nu_schedule.back() != 1.0)
            throw ConfigError("solver.nu_schedule must end at 1");
    }

    if (j.contains("stationary")) {
        const json& s = j.at("stationary");
        detail::check_keys(s, {"tol", "max_iter", "damping", "dtau"}, "stationary");
        c.stationary.tol = detail::get_as<double>(s, "tol", 1e-9, "stationary");
        c.stationary.max_iter = detail::get_as<int>(s, "max_iter", 20000, "stationary");
        c.stationary.damping = detail::get_as<double>(s, "damping", 0.5, "stationary");
        c.stationary.dtau = detail::get_as<double>(s, "dtau", 0.1, "stationary");
        if (!(c.stationary.tol > 0.0)) throw ConfigError("stationary.tol must be positive");
        if (c.stationary.max_iter < 1) throw ConfigError("stationary.max_iter must be >= 1");
        if (!(c.stationary.dtau > 0.0)) throw ConfigError("stationary.dtau must be positive");
    }

    if (j.contains("diagnostics")) {
        const json& d = j.at("diagnostics");
        detail::check_keys(d, {"C", "eps_bar", "lambda_bar", "smallness_ok"}, "diagnostics");
        c.diag_C = detail::get_as<double>(d, "C", 10.0, "diagnostics");
        c.eps_bar = detail::get_as<double>(d, "eps_bar", c.eps_bar, "diagnostics");
        c.lambda_bar = detail::get_as<double>(d, "lambda_bar", c.lambda_bar, "diagnostics");
        c.smallness_ok = detail::get_as<bool>(d, "smallness_ok", true, "diagnostics");
    }

    c.output_dir = detail::get_as<std::string>(j, "output_dir", "", "config root");
    c.seed = detail::get_as<long>(j, "seed", 0, "config root");

    if (j.contains("sweep")) {
        const json& s = j.at("sweep");
        detail::check_keys(s, {"axis", "values", "spectrum"}, "sweep");
        c.sweep_axis = detail::get_as<std::string>(s, "axis", "", "sweep");
        c.sweep_values = detail::get_as<std::vector<double>>(s, "values", {}, "sweep");
        c.sweep_spectrum = detail::get_as<bool>(s, "spectrum", false, "sweep");
        if (c.sweep_axis != "T" && c.sweep_axis != "delta" && c.sweep_axis != "data_scale")
            throw ConfigError("sweep.axis must be one of T, delta, data_scale");
        if (c.sweep_values.empty()) throw ConfigError("sweep.values must be non-empty");
    }
    return c;
}

inline RunConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
    }
    RunConfig c = parse_config_json(j);
    c.raw_text = text;
    return c;
}

inline PeriodicGrid grid_from_config(const RunConfig& c) {
    if (c.dim == 1) return PeriodicGrid::line(c.n_points, c.length);
    return PeriodicGrid(2, {c.n_points, c.n_points_y}, {c.length, c.length_y});
}

inline CouplingModel coupling_from_config(const RunConfig& c) {
    return builtin(c.coupling_name, c.coupling_params);
}

/// Boundary data fields: an expression or a CSV field file per entry, scaled
/// by the configured data scale. Mass constraints are left to the solvers so
/// violations surface as diagnostics instead of silent projections.
inline ScalarField data_field_from_config(const RunConfig& c, const PeriodicGrid& grid,
                                          const std::string& expr, const std::string& csv) {
    ScalarField f(grid, 0.0);
    if (!csv.empty()) {
        f = read_field_csv(csv, grid);
    } else if (!expr.empty()) {
        f = FieldExpression::parse(expr).evaluate(grid);
    }
    for (double& x : f.v) x *= c.data_scale;
    return f;
}

} // namespace mfglab

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "mfglab/config.hpp"
#include "mfglab/csv.hpp"
#include "mfglab/diagnostics.hpp"
#include "mfglab/dynamics.hpp"
#include "mfglab/linearized.hpp"
#include "mfglab/selftest.hpp"
#include "mfglab/stability.hpp"
#include "mfglab/stationary.hpp"
#include "mfglab/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// FNV-1a over the raw config text, hex encoded; stable across platforms.
std::string config_hash(const std::string& text) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

/// --out beats the config, the config beats MFGLAB_OUT, and ./out is the
/// fallback so every run lands somewhere predictable.
std::string resolve_out_dir(const std::string& cli_out, const mfglab::RunConfig& cfg) {
    if (!cli_out.empty()) return cli_out;
    if (!cfg.output_dir.empty()) return cfg.output_dir;
    if (const char* env = std::getenv("MFGLAB_OUT"); env && *env) return env;
    return "out";
}

void write_json_file(const fs::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw mfglab::NumericError("cannot open '" + path.string() + "' for writing");
    out << j.dump(2) << "\n";
}

void write_manifest(const fs::path& dir, const std::string& subcommand,
                    const mfglab::RunConfig& cfg, const std::string& config_path,
                    double elapsed_seconds) {
    json j;
    j["tool"] = "mfglab";
    j["version"] = mfglab::version_string;
    j["subcommand"] = subcommand;
    j["config_path"] = config_path;
    j["config_hash"] = config_hash(cfg.raw_text);
    j["config_text"] = cfg.raw_text;
    j["seed"] = cfg.seed;
    j["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                 "." + std::to_string(EIGEN_MINOR_VERSION);
    j["elapsed_seconds"] = elapsed_seconds;
    write_json_file(dir / "manifest.json", j);
}

json stability_json(const mfglab::StabilityReport& r) {
    json j;
    j["C_P"] = r.C_P;
    j["eta_a"] = r.eta_a;
    j["eta_b"] = r.eta_b;
    j["eta_c"] = r.eta_c;
    j["eta_principal"] = r.eta_principal;
    j["ell"] = r.ell;
    j["sigma"] = r.sigma;
    j["sigma1"] = r.sigma1;
    j["sigma2"] = r.sigma2;
    j["theta_cap"] = r.theta_cap;
    j["satisfied"] = r.satisfied;
    return j;
}

json envelope_json(const mfglab::EnvelopeFit& f) {
    json j;
    j["defined"] = f.defined;
    j["amplitude_left"] = f.amplitude_left;
    j["rate_left"] = f.rate_left;
    j["amplitude_right"] = f.amplitude_right;
    j["rate_right"] = f.rate_right;
    return j;
}

json weighted_json(const mfglab::WeightedChecks& w) {
    json j;
    j["applicable"] = w.applicable;
    j["mu_envelope_ok"] = w.mu_envelope_ok;
    j["dv_envelope_ok"] = w.dv_envelope_ok;
    j["phi_boundary_ok"] = w.phi_boundary_ok;
    j["A"] = w.A;
    j["B"] = w.B;
    j["lambda1"] = w.lambda1;
    j["lambda2"] = w.lambda2;
    j["lambda3"] = w.lambda3;
    j["lambda4"] = w.lambda4;
    j["worst_ratio_mu"] = w.worst_ratio_mu;
    j["worst_ratio_dv"] = w.worst_ratio_dv;
    j["phi_bound_lhs"] = w.phi_bound_lhs;
    j["phi_bound_rhs"] = w.phi_bound_rhs;
    return j;
}

void write_trace_json(const fs::path& dir, const std::vector<mfglab::TraceEntry>& trace,
                      bool converged, const std::string& message = "") {
    json j;
    j["converged"] = converged;
    if (!message.empty()) j["message"] = message;
    json entries = json::array();
    for (const auto& e : trace) {
        json row;
        row["nu"] = e.nu;
        row["damping"] = e.damping;
        row["iteration"] = e.iteration;
        row["change"] = e.change;
        entries.push_back(row);
    }
    j["entries"] = entries;
    write_json_file(dir / "trace.json", j);
}

void write_stationary_outputs(const fs::path& dir, const mfglab::StationarySolution& sol) {
    const mfglab::PeriodicGrid& gr = sol.m_bar.grid;
    std::vector<std::string> header =
        gr.dim == 1 ? std::vector<std::string>{"x", "m_bar", "u_bar"}
                    : std::vector<std::string>{"x", "y", "m_bar", "u_bar"};
    mfglab::CsvWriter w((dir / "stationary.csv").string(), header);
    for (std::size_t i = 0; i < gr.size(); ++i) {
        const auto x = gr.point(i);
        if (gr.dim == 1)
            w.row({x[0], sol.m_bar.v[i], sol.u_bar.v[i]});
        else
            w.row({x[0], x[1], sol.m_bar.v[i], sol.u_bar.v[i]});
    }
    json j;
    j["lambda"] = sol.lambda;
    j["delta"] = sol.delta;
    j["residual_hjb"] = sol.residual_hjb;
    j["residual_fp"] = sol.residual_fp;
    j["residual_ansatz"] = sol.residual_ansatz;
    j["iterations"] = sol.iterations;
    write_json_file(dir / "stationary.json", j);
}

/// Rows are time nodes, columns are cells, first column is the node time.
void write_path_csv(const fs::path& path, const std::vector<mfglab::ScalarField>& fields,
                    double T) {
    if (fields.empty()) throw mfglab::ContractError("write_path_csv: empty path");
    const std::size_t cells = fields.front().size();
    std::vector<std::string> header{"t"};
    header.reserve(cells + 1);
    for (std::size_t i = 0; i < cells; ++i) header.push_back("c" + std::to_string(i));
    mfglab::CsvWriter w(path.string(), header);
    const double dt = fields.size() > 1 ? T / static_cast<double>(fields.size() - 1) : 0.0;
    std::vector<double> row(cells + 1);
    for (std::size_t n = 0; n < fields.size(); ++n) {
        row[0] = dt * static_cast<double>(n);
        for (std::size_t i = 0; i < cells; ++i) row[i + 1] = fields[n].v[i];
        w.row(row);
    }
}

/// Minimal self-contained SVG line chart; CSV stays the source of truth.
void write_svg_lines(const fs::path& path, const std::string& title,
                     const std::vector<double>& xs,
                     const std::vector<std::pair<std::string, std::vector<double>>>& series) {
    const double W = 720, H = 420, ml = 70, mr = 20, mt = 40, mb = 50;
    double xmin = xs.empty() ? 0.0 : xs.front(), xmax = xs.empty() ? 1.0 : xs.back();
    double ymin = 0.0, ymax = 0.0;
    bool first = true;
    for (const auto& s : series)
        for (double y : s.second) {
            if (!std::isfinite(y)) continue;
            if (first) {
                ymin = ymax = y;
                first = false;
            } else {
                ymin = std::min(ymin, y);
                ymax = std::max(ymax, y);
            }
        }
    if (first) {
        ymin = 0.0;
        ymax = 1.0;
    }
    if (ymax == ymin) ymax = ymin + 1.0;
    if (xmax == xmin) xmax = xmin + 1.0;
    const auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (W - ml - mr); };
    const auto py = [&](double y) { return H - mb - (y - ymin) / (ymax - ymin) * (H - mt - mb); };
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};

    std::ofstream out(path);
    if (!out) throw mfglab::NumericError("cannot open '" + path.string() + "' for writing");
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
        << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
    out << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
    out << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\""
        << " font-size=\"16\">" << title << "</text>\n";
    out << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << W - ml - mr << "\" height=\""
        << H - mt - mb << "\" fill=\"none\" stroke=\"#888\"/>\n";
    char buf[64];
    for (int k = 0; k <= 4; ++k) {
        const double yv = ymin + (ymax - ymin) * k / 4.0;
        std::snprintf(buf, sizeof(buf), "%.4g", yv);
        out << "<text x=\"" << ml - 8 << "\" y=\"" << py(yv) + 4
            << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << buf
            << "</text>\n";
        const double xv = xmin + (xmax - xmin) * k / 4.0;
        std::snprintf(buf, sizeof(buf), "%.4g", xv);
        out << "<text x=\"" << px(xv) << "\" y=\"" << H - mb + 18
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << buf
            << "</text>\n";
    }
    for (std::size_t s = 0; s < series.size(); ++s) {
        out << "<polyline fill=\"none\" stroke=\"" << colors[s % 5]
            << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t k = 0; k < xs.size() && k < series[s].second.size(); ++k) {
            const double y = series[s].second[k];
            if (!std::isfinite(y)) continue;
            std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", px(xs[k]), py(y));
            out << buf;
        }
        out << "\"/>\n";
        out << "<text x=\"" << W - mr - 8 << "\" y=\"" << mt + 18 + 16 * s
            << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\" fill=\""
            << colors[s % 5] << "\">" << series[s].first << "</text>\n";
    }
    out << "</svg>\n";
}

struct Pipeline {
    mfglab::PeriodicGrid grid;
    mfglab::CouplingModel model;
    mfglab::StationarySolution sol;
};

/// Shared front half of every run: solve the stationary problem for the base
/// coupling, then apply the optional stabilizing shift around the computed
/// density. The shift vanishes at the stationary density, so the pair solves
/// the stationary system for the shifted model as well.
Pipeline prepare_pipeline(const mfglab::RunConfig& cfg) {
    Pipeline p{mfglab::grid_from_config(cfg), mfglab::coupling_from_config(cfg), {}};
    p.sol = cfg.delta == 0.0
                ? mfglab::solve_stationary_ergodic(p.model, p.grid, cfg.stationary)
                : mfglab::solve_stationary_discounted(p.model, p.grid, cfg.delta, cfg.stationary);
    if (cfg.stabilize_eta > 0.0) p.model = stabilize(p.model, p.sol.m_bar, cfg.stabilize_eta);
    return p;
}

json turnpike_json(const mfglab::TurnpikeReport& rep, const mfglab::DynamicSolution& dyn,
                   const mfglab::StabilityReport& stab, double eps_bar_used) {
    json j;
    j["converged"] = dyn.converged;
    j["positivity_ok"] = dyn.positivity_ok;
    j["weighted_norm"] = dyn.weighted_norm;
    j["T"] = dyn.T;
    j["n_steps"] = dyn.n_steps;
    j["delta"] = dyn.delta;
    j["outer_iterations"] = dyn.trace.size();
    j["stability"] = stability_json(stab);
    j["dissipation_max"] = rep.dissipation_max;
    j["phidelta_ok"] = rep.phidelta_ok;
    j["envelope_mu"] = envelope_json(rep.envelope_mu);
    j["envelope_dv_l2"] = envelope_json(rep.envelope_dv_l2);
    j["eps_bar_used"] = eps_bar_used;
    j["weighted"] = weighted_json(rep.weighted);
    json sv;
    sv["ok"] = rep.sup_v.ok;
    sv["lhs"] = rep.sup_v.lhs;
    sv["rhs"] = rep.sup_v.rhs;
    sv["eps"] = rep.sup_v.eps;
    j["sup_v"] = sv;
    return j;
}

/// Diagnostics outputs shared by solve and infinite: the Lyapunov series,
/// the envelope series with their certified bounds, and the scalar report.
void write_diagnostics(const fs::path& dir, const mfglab::DynamicSolution& dyn,
                       const mfglab::StationarySolution& sol, const mfglab::CouplingModel& model,
                       const mfglab::StabilityReport& stab, const mfglab::RunConfig& cfg,
                       bool plots, json extra = json::object()) {
    const mfglab::TurnpikeReport rep =
        mfglab::compute_turnpike_report(dyn, sol, model, stab, cfg.diag_C, cfg.smallness_ok);

    const std::size_t len = rep.phi.size();
    const double dt = dyn.n_steps > 0 ? dyn.T / dyn.n_steps : 0.0;
    std::vector<double> ts(len);
    for (std::size_t k = 0; k < len; ++k) ts[k] = dt * static_cast<double>(k);

    {
        mfglab::CsvWriter w((dir / "phi.csv").string(), {"t", "phi", "phi_tilde", "residual"});
        for (std::size_t k = 0; k < len; ++k)
            w.row({ts[k], rep.phi[k], rep.phi_tilde[k], rep.dissipation_residual[k]});
    }

    // The sup envelope uses the configured amplitude when one is given and
    // otherwise the measured one, so the bound column is always plottable.
    const double eps_bar =
        std::isfinite(cfg.eps_bar) ? cfg.eps_bar : 2.0 * rep.sup_v.eps;
    std::vector<double> bound_mu(len, std::numeric_limits<double>::quiet_NaN());
    std::vector<double> bound_dv(len, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t k = 0; k < len; ++k) {
        if (stab.sigma1 > 0.0 && stab.sigma2 > 0.0)
            bound_mu[k] = 0.5 * eps_bar *
                          (std::exp(-stab.sigma1 * ts[k]) + std::exp(-stab.sigma2 * (dyn.T - ts[k])));
        if (rep.weighted.applicable)
            bound_dv[k] = rep.weighted.lambda3 * std::exp(-(stab.sigma - dyn.delta) * ts[k]) +
                          rep.weighted.lambda4 * std::exp(-(stab.sigma + dyn.delta) * (dyn.T - ts[k]));
    }
    {
        mfglab::CsvWriter w((dir / "envelopes.csv").string(),
                            {"t", "linf_mu", "bound_mu", "l2w_dv", "bound_dv"});
        for (std::size_t k = 0; k < len; ++k)
            w.row({ts[k], rep.mu_linf[k], bound_mu[k], rep.dv_l2w_sq[k], bound_dv[k]});
    }

    json j = turnpike_json(rep, dyn, stab, eps_bar);
    for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = *it;
    write_json_file(dir / "report.json", j);

    if (plots) {
        write_svg_lines(dir / "phi.svg", "Lyapunov functional", ts,
                        {{"phi", rep.phi}, {"phi_tilde", rep.phi_tilde}});
        write_svg_lines(dir / "envelopes.svg", "Decay envelopes", ts,
                        {{"linf_mu", rep.mu_linf},
                         {"bound_mu", bound_mu},
                         {"l2w_dv", rep.dv_l2w_sq},
                         {"bound_dv", bound_dv}});
    }
}

int cmd_stationary(const mfglab::RunConfig& cfg, const fs::path& dir, bool plots) {
    Pipeline p = prepare_pipeline(cfg);
    write_stationary_outputs(dir, p.sol);
    if (plots) {
        std::vector<double> xs(p.grid.size());
        for (std::size_t i = 0; i < xs.size(); ++i) xs[i] = p.grid.point(i)[0];
        write_svg_lines(dir / "stationary.svg", "Stationary pair", xs,
                        {{"m_bar", p.sol.m_bar.v}, {"u_bar", p.sol.u_bar.v}});
    }
    std::cout << "stationary: lambda = " << mfglab::format_double(p.sol.lambda)
              << ", residual_hjb = " << mfglab::format_double(p.sol.residual_hjb)
              << ", iterations = " << p.sol.iterations << "\n";
    std::cout << "wrote " << (dir / "stationary.csv").string() << "\n";
    return 0;
}

int cmd_stability(const mfglab::RunConfig& cfg, const fs::path& dir, bool) {
    Pipeline p = prepare_pipeline(cfg);
    const mfglab::StabilityReport rep = mfglab::analyze_stability(p.sol.m_bar, p.model, cfg.delta);
    json j = stability_json(rep);
    j["delta"] = cfg.delta;
    j["C_f"] = p.model.C_f;
    write_json_file(dir / "stability.json", j);
    std::cout << "stability: eta_a = " << mfglab::format_double(rep.eta_a)
              << ", C_P = " << mfglab::format_double(rep.C_P)
              << ", satisfied = " << (rep.satisfied ? "true" : "false") << "\n";
    std::cout << "wrote " << (dir / "stability.json").string() << "\n";
    return rep.satisfied ? 0 : 1;
}

int cmd_solve(const mfglab::RunConfig& cfg, const fs::path& dir, bool plots) {
    if (!cfg.horizons.empty())
        throw mfglab::ConfigError("solve uses a single horizon T; horizons is for infinite");
    Pipeline p = prepare_pipeline(cfg);
    const mfglab::ScalarField mu0 =
        mfglab::data_field_from_config(cfg, p.grid, cfg.mu0_expr, cfg.mu0_csv);
    const mfglab::ScalarField vT =
        mfglab::data_field_from_config(cfg, p.grid, cfg.vT_expr, cfg.vT_csv);

    mfglab::DynamicSolution dyn;
    try {
        dyn = mfglab::solve_mfg(mu0, vT, cfg.T, cfg.delta, p.sol, p.model, cfg.solver);
    } catch (const mfglab::MfgConvergenceError& e) {
        write_trace_json(dir, e.trace, false, e.what());
        std::cerr << "solve did not converge: " << e.what() << "\n";
        std::cerr << "trace written to " << (dir / "trace.json").string() << "\n";
        return 3;
    }

    write_path_csv(dir / "solution_mu.csv", dyn.mu_path, dyn.T);
    write_path_csv(dir / "solution_v.csv", dyn.v_path, dyn.T);
    write_trace_json(dir, dyn.trace, dyn.converged);
    write_stationary_outputs(dir, p.sol);
    const mfglab::StabilityReport stab = mfglab::analyze_stability(p.sol.m_bar, p.model, cfg.delta);
    write_diagnostics(dir, dyn, p.sol, p.model, stab, cfg, plots);
    std::cout << "solve: converged in " << dyn.trace.size() << " outer iterations, "
              << "weighted_norm = " << (dyn.weighted_norm ? "true" : "false") << "\n";
    std::cout << "wrote " << (dir / "solution_mu.csv").string() << "\n";
    return 0;
}

int cmd_infinite(const mfglab::RunConfig& cfg, const fs::path& dir, bool plots) {
    if (cfg.horizons.size() < 2)
        throw mfglab::ConfigError("infinite requires horizons with at least two entries");
    Pipeline p = prepare_pipeline(cfg);
    const mfglab::ScalarField mu0 =
        mfglab::data_field_from_config(cfg, p.grid, cfg.mu0_expr, cfg.mu0_csv);

    mfglab::InfiniteHorizonSolution inf;
    try {
        inf = mfglab::solve_infinite_horizon(mu0, cfg.delta, p.sol, p.model, cfg.horizons,
                                             cfg.solver);
    } catch (const mfglab::MfgConvergenceError& e) {
        write_trace_json(dir, e.trace, false, e.what());
        std::cerr << "infinite-horizon run did not converge: " << e.what() << "\n";
        std::cerr << "trace written to " << (dir / "trace.json").string() << "\n";
        return 3;
    }

    write_path_csv(dir / "solution_mu.csv", inf.window.mu_path, inf.window.T);
    write_path_csv(dir / "solution_v.csv", inf.window.v_path, inf.window.T);
    write_trace_json(dir, inf.window.trace, inf.window.converged);
    write_stationary_outputs(dir, p.sol);
    const mfglab::StabilityReport stab = mfglab::analyze_stability(p.sol.m_bar, p.model, cfg.delta);
    json extra;
    extra["horizons"] = inf.horizons;
    extra["discrepancies"] = inf.discrepancies;
    extra["monotone"] = inf.monotone;
    write_diagnostics(dir, inf.window, p.sol, p.model, stab, cfg, plots, extra);
    std::cout << "infinite: " << inf.horizons.size() << " horizons, final discrepancy = "
              << mfglab::format_double(inf.discrepancies.back())
              << ", monotone = " << (inf.monotone ? "true" : "false") << "\n";
    std::cout << "wrote " << (dir / "report.json").string() << "\n";
    return 0;
}

int cmd_linearized(const mfglab::RunConfig& cfg, const fs::path& dir, bool) {
    Pipeline p = prepare_pipeline(cfg);
    const mfglab::LinearizedSystem sys = mfglab::assemble(p.sol, p.model, cfg.delta);
    const mfglab::HyperbolicityReport rep = mfglab::hyperbolicity_report(sys);
    {
        mfglab::CsvWriter w((dir / "spectrum.csv").string(), {"re", "im"});
        for (const auto& z : rep.spectrum) w.row({z.real(), z.imag()});
    }
    {
        mfglab::CsvWriter w((dir / "spectrum_raw.csv").string(), {"re", "im"});
        for (const auto& z : rep.raw_spectrum) w.row({z.real(), z.imag()});
    }
    json j;
    j["min_abs_real_part"] = rep.min_abs_real_part;
    j["quadruple_error"] = rep.quadruple_error;
    j["deflated_right"] = rep.deflated_right;
    j["deflated_left"] = rep.deflated_left;
    j["size"] = sys.M.rows();
    j["delta"] = cfg.delta;
    write_json_file(dir / "linearized.json", j);
    std::cout << "linearized: min |Re| = " << mfglab::format_double(rep.min_abs_real_part)
              << ", quadruple_error = " << mfglab::format_double(rep.quadruple_error) << "\n";
    std::cout << "wrote " << (dir / "spectrum.csv").string() << "\n";
    return 0;
}

struct SweepRow {
    double value = 0.0;
    bool converged = false;
    double rate_left = std::numeric_limits<double>::quiet_NaN();
    double rate_right = std::numeric_limits<double>::quiet_NaN();
    double min_abs_real_part = std::numeric_limits<double>::quiet_NaN();
};

/// One sweep point is a full solve pipeline in its own subdirectory with the
/// axis value substituted into a copy of the config. Points never share state.
SweepRow run_sweep_point(mfglab::RunConfig cfg, const std::string& config_path,
                         const fs::path& point_dir, bool plots) {
    SweepRow row;
    cfg.sweep_axis.clear();
    cfg.sweep_values.clear();
    fs::create_directories(point_dir);
    const auto t0 = std::chrono::steady_clock::now();

    Pipeline p = prepare_pipeline(cfg);
    const mfglab::ScalarField mu0 =
        mfglab::data_field_from_config(cfg, p.grid, cfg.mu0_expr, cfg.mu0_csv);
    const mfglab::ScalarField vT =
        mfglab::data_field_from_config(cfg, p.grid, cfg.vT_expr, cfg.vT_csv);
    const mfglab::StabilityReport stab = mfglab::analyze_stability(p.sol.m_bar, p.model, cfg.delta);

    if (cfg.sweep_spectrum) {
        const mfglab::LinearizedSystem sys = mfglab::assemble(p.sol, p.model, cfg.delta);
        const mfglab::HyperbolicityReport hrep = mfglab::hyperbolicity_report(sys);
        row.min_abs_real_part = hrep.min_abs_real_part;
        mfglab::CsvWriter w((point_dir / "spectrum.csv").string(), {"re", "im"});
        for (const auto& z : hrep.spectrum) w.row({z.real(), z.imag()});
    }

    try {
        const mfglab::DynamicSolution dyn =
            mfglab::solve_mfg(mu0, vT, cfg.T, cfg.delta, p.sol, p.model, cfg.solver);
        row.converged = true;
        write_path_csv(point_dir / "solution_mu.csv", dyn.mu_path, dyn.T);
        write_path_csv(point_dir / "solution_v.csv", dyn.v_path, dyn.T);
        write_trace_json(point_dir, dyn.trace, true);
        const mfglab::TurnpikeReport rep = mfglab::compute_turnpike_report(
            dyn, p.sol, p.model, stab, cfg.diag_C, cfg.smallness_ok);
        row.rate_left = rep.envelope_mu.rate_left;
        row.rate_right = rep.envelope_mu.rate_right;
        write_diagnostics(point_dir, dyn, p.sol, p.model, stab, cfg, plots);
    } catch (const mfglab::MfgConvergenceError& e) {
        write_trace_json(point_dir, e.trace, false, e.what());
    }

    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_manifest(point_dir, "sweep-point", cfg, config_path, elapsed);
    return row;
}

int cmd_sweep(const mfglab::RunConfig& cfg, const std::string& config_path, const fs::path& dir,
              bool plots, int jobs) {
    if (cfg.sweep_axis.empty())
        throw mfglab::ConfigError("sweep requires a sweep block with axis and values");
    const std::size_t count = cfg.sweep_values.size();
    std::vector<SweepRow> rows(count);
    std::atomic<std::size_t> next{0};
    std::mutex io;
    const int workers = std::max(1, std::min(jobs, static_cast<int>(count)));

    auto worker = [&]() {
        for (;;) {
            const std::size_t k = next.fetch_add(1);
            if (k >= count) return;
            mfglab::RunConfig point = cfg;
            const double val = cfg.sweep_values[k];
            if (cfg.sweep_axis == "T") {
                point.T = val;
                point.horizons.clear();
            } else if (cfg.sweep_axis == "delta") {
                point.delta = val;
            } else {
                point.data_scale = val;
            }
            char name[32];
            std::snprintf(name, sizeof(name), "point_%03zu", k);
            SweepRow row;
            try {
                row = run_sweep_point(point, config_path, dir / name, plots);
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(io);
                std::cerr << "sweep point " << k << " failed: " << e.what() << "\n";
            }
            row.value = val;
            rows[k] = row;
            std::lock_guard<std::mutex> lock(io);
            std::cout << "sweep " << cfg.sweep_axis << " = " << mfglab::format_double(val)
                      << (row.converged ? " converged" : " did not converge") << "\n";
        }
    };
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();

    std::vector<std::string> header{"value", "converged", "fitted_rate_left",
                                    "fitted_rate_right"};
    if (cfg.sweep_spectrum) header.push_back("min_abs_real_part");
    mfglab::CsvWriter w((dir / "sweep_summary.csv").string(), header);
    bool all_converged = true;
    for (const auto& row : rows) {
        std::vector<double> vals{row.value, row.converged ? 1.0 : 0.0, row.rate_left,
                                 row.rate_right};
        if (cfg.sweep_spectrum) vals.push_back(row.min_abs_real_part);
        w.row(vals);
        all_converged = all_converged && row.converged;
    }
    if (plots) {
        std::vector<double> xs, rl, rr;
        for (const auto& row : rows) {
            xs.push_back(row.value);
            rl.push_back(row.rate_left);
            rr.push_back(row.rate_right);
        }
        write_svg_lines(dir / "rates.svg", "Fitted envelope rates vs " + cfg.sweep_axis, xs,
                        {{"rate_left", rl}, {"rate_right", rr}});
    }
    std::cout << "wrote " << (dir / "sweep_summary.csv").string() << "\n";
    return all_converged ? 0 : 3;
}

int cmd_selftest(const fs::path& dir) {
    const mfglab::SelfTestResult res = mfglab::run_selftest((dir / "selftest.csv").string());
    for (const auto& c : res.checks) {
        std::cout << (c.ok ? "ok   " : "FAIL ") << c.name << " (measured "
                  << mfglab::format_double(c.measured) << ", bound "
                  << mfglab::format_double(c.bound) << ")\n";
    }
    std::cout << res.checks.size() - static_cast<std::size_t>(res.failed) << "/"
              << res.checks.size() << " checks passed\n";
    return res.failed == 0 ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Stationary mean field games on the torus: equilibria, stability "
                 "certificates, and turnpike diagnostics"};
    app.require_subcommand(1);

    std::string config_path, out_cli;
    bool plots = false;
    int jobs = 1;

    const auto add_common = [&](CLI::App* sub, bool config_required) {
        auto* opt = sub->add_option("--config", config_path, "JSON run configuration");
        if (config_required) opt->required();
        sub->add_flag("--plots", plots, "also emit SVG line charts");
        sub->add_option("--jobs", jobs, "concurrent sweep points")->check(CLI::Range(1, 64));
        sub->add_option("--out", out_cli, "output directory (overrides config and MFGLAB_OUT)");
    };

    add_common(app.add_subcommand("stationary", "solve the stationary system"), true);
    add_common(app.add_subcommand("stability", "certify the stability condition"), true);
    add_common(app.add_subcommand("solve", "finite-horizon perturbation solve"), true);
    add_common(app.add_subcommand("infinite", "infinite-horizon approximation"), true);
    add_common(app.add_subcommand("linearized", "linearized spectrum report"), true);
    add_common(app.add_subcommand("sweep", "parameter sweep of solves"), true);
    add_common(app.add_subcommand("selftest", "fast built-in checks"), false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    const std::string sub = app.get_subcommands().front()->get_name();
    const auto t0 = std::chrono::steady_clock::now();

    mfglab::RunConfig cfg;
    try {
        if (!config_path.empty()) cfg = mfglab::parse_config_file(config_path);
        const fs::path dir = resolve_out_dir(out_cli, cfg);
        fs::create_directories(dir);

        int code = 0;
        if (sub == "stationary")
            code = cmd_stationary(cfg, dir, plots);
        else if (sub == "stability")
            code = cmd_stability(cfg, dir, plots);
        else if (sub == "solve")
            code = cmd_solve(cfg, dir, plots);
        else if (sub == "infinite")
            code = cmd_infinite(cfg, dir, plots);
        else if (sub == "linearized")
            code = cmd_linearized(cfg, dir, plots);
        else if (sub == "sweep")
            code = cmd_sweep(cfg, config_path, dir, plots, jobs);
        else
            code = cmd_selftest(dir);

        const double elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        write_manifest(dir, sub, cfg, config_path, elapsed);
        return code;
    } catch (const mfglab::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const mfglab::UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const mfglab::DomainError& e) {
        std::cerr << "domain error: " << e.what() << "\n";
        return 2;
    } catch (const mfglab::ContractError& e) {
        std::cerr << "internal invariant breach: " << e.what() << "\n";
        return 4;
    } catch (const mfglab::ConvergenceError& e) {
        std::cerr << "did not converge: " << e.what() << "\n";
        return 3;
    } catch (const mfglab::NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
}

#pragma once

// Command-line front end. One command per invocation:
//
//   analyze     geometry frame + spectrum + odd-skew instability at a point
//   equilibria  Newton search for zeros of X, classified at the rest fiber
//   trajectory  flow (default) or Euler-Lagrange integration with a
//               per-sample stability profile
//   deviation   linearized deviation field along a base trajectory
//   scan        stability map over a rectangular grid
//   check       self-verification suite for a model
//
// Exit codes: 0 success, 1 usage error, 2 evaluation/convergence failure.
// Results go to stdout or --out PATH; diagnostics go to stderr.

#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "kcc/dynamics.hpp"
#include "kcc/emit.hpp"
#include "kcc/errors.hpp"
#include "kcc/geometry.hpp"
#include "kcc/jet.hpp"
#include "kcc/model.hpp"
#include "kcc/random.hpp"
#include "kcc/spectral.hpp"

namespace kcc {

enum class Command { Help, Analyze, Equilibria, Trajectory, Deviation, Scan, Check };
enum class OutputFormat { Text, Csv, Json };

struct RunConfig {
    Command command = Command::Help;
    std::string help_text;

    std::string model_path;
    std::optional<Vec> at;
    bool y_on_shell = true;
    std::optional<Vec> y_fixed;
    std::optional<Vec> x0;
    std::optional<Vec> y0;
    std::optional<Vec> xi0;
    std::optional<Vec> xidot0;
    double T = 10.0;
    double dt = 1e-3;
    double tol = 1e-9;
    std::optional<std::vector<GridAxis>> region;
    OutputFormat format = OutputFormat::Text;
    std::optional<std::string> out_path;
    bool euler_lagrange = false;
    int check_points = 100;
};

namespace detail {

inline Vec parse_vec_flag(const std::string& text, const std::string& flag) {
    Vec v;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t comma = text.find(',', pos);
        const std::string item =
            text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        try {
            std::size_t used = 0;
            v.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw UsageError(flag + ": malformed number '" + item + "'");
        }
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    if (v.empty()) throw UsageError(flag + ": empty vector");
    return v;
}

inline std::vector<GridAxis> parse_region_flag(const std::string& text) {
    std::vector<GridAxis> axes;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t comma = text.find(',', pos);
        const std::string item =
            text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        std::size_t c1 = item.find(':');
        std::size_t c2 = c1 == std::string::npos ? std::string::npos : item.find(':', c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos)
            throw UsageError("--region: expected min:max:count, got '" + item + "'");
        GridAxis axis;
        try {
            axis.min = std::stod(item.substr(0, c1));
            axis.max = std::stod(item.substr(c1 + 1, c2 - c1 - 1));
            const long count = std::stol(item.substr(c2 + 1));
            if (count < 1) throw std::invalid_argument("count");
            axis.count = static_cast<std::size_t>(count);
        } catch (const UsageError&) {
            throw;
        } catch (const std::exception&) {
            throw UsageError("--region: malformed axis '" + item + "'");
        }
        axes.push_back(axis);
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    if (axes.empty()) throw UsageError("--region: empty region");
    return axes;
}

inline std::string render_vec(const Vec& v) {
    std::string s = "(";
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ", ";
        s += format_double(v[i]);
    }
    s += ")";
    return s;
}

inline std::string render_mat(const Mat& m) {
    std::string s = "[";
    for (std::size_t i = 0; i < m.rows(); ++i) {
        if (i) s += ", ";
        s += "[";
        for (std::size_t j = 0; j < m.cols(); ++j) {
            if (j) s += ", ";
            s += format_double(m(i, j));
        }
        s += "]";
    }
    s += "]";
    return s;
}

inline std::string render_complex(const std::complex<double>& z) {
    if (z.imag() == 0.0) return format_double(z.real());
    std::string s = format_double(z.real());
    s += z.imag() < 0.0 ? " - " : " + ";
    s += format_double(std::abs(z.imag()));
    s += "i";
    return s;
}

} // namespace detail

// --------------------------------------------------------------------------
// Argument parsing

inline RunConfig parse_args(const std::vector<std::string>& args) {
    RunConfig cfg;
    CLI::App app{"Lagrange/KCC geometry and Jacobi stability of autonomous dynamical systems"};
    app.name("kcc");
    app.require_subcommand(1);

    std::string at_text, y_text = "on-shell", x0_text, y0_text, xi0_text, xidot0_text;
    std::string region_text, format_text = "text", out_text;

    const auto add_output = [&](CLI::App* sub) {
        sub->add_option("--format", format_text, "Output format: text|csv|json")
            ->check(CLI::IsMember({"text", "csv", "json"}));
        sub->add_option("--out", out_text, "Write the report to PATH instead of stdout");
        sub->add_option("--tol", cfg.tol, "Classification tolerance around zero");
    };

    CLI::App* analyze = app.add_subcommand("analyze", "Geometry frame and spectrum at a point");
    analyze->add_option("model", cfg.model_path, "Model file")->required();
    analyze->add_option("--at", at_text, "Phase point x1,...,xn")->required();
    analyze->add_option("--y", y_text, "Fiber: on-shell or v1,...,vn");
    add_output(analyze);

    CLI::App* equilibria = app.add_subcommand("equilibria", "Zeros of the vector field");
    equilibria->add_option("model", cfg.model_path, "Model file")->required();
    equilibria->add_option("--region", region_text, "Seed grid min1:max1:count1,...");
    equilibria->add_option("--x0", x0_text, "Single Newton seed x1,...,xn");
    add_output(equilibria);

    CLI::App* trajectory = app.add_subcommand("trajectory", "Integrate and classify a trajectory");
    trajectory->add_option("model", cfg.model_path, "Model file")->required();
    trajectory->add_option("--x0", x0_text, "Initial point")->required();
    trajectory->add_option("--y0", y0_text, "Initial velocity (Euler-Lagrange only)");
    trajectory->add_flag("--el", cfg.euler_lagrange, "Integrate the Euler-Lagrange system");
    trajectory->add_option("--T", cfg.T, "Integration horizon");
    trajectory->add_option("--dt", cfg.dt, "Step size");
    add_output(trajectory);

    CLI::App* deviation = app.add_subcommand("deviation", "Linearized deviation along a trajectory");
    deviation->add_option("model", cfg.model_path, "Model file")->required();
    deviation->add_option("--x0", x0_text, "Initial point of the base trajectory")->required();
    deviation->add_option("--y0", y0_text, "Initial velocity (Euler-Lagrange base)");
    deviation->add_flag("--el", cfg.euler_lagrange, "Use an Euler-Lagrange base trajectory");
    deviation->add_option("--xi0", xi0_text, "Initial deviation")->required();
    deviation->add_option("--xidot0", xidot0_text, "Initial deviation rate (default 0)");
    deviation->add_option("--T", cfg.T, "Integration horizon");
    deviation->add_option("--dt", cfg.dt, "Step size");
    add_output(deviation);

    CLI::App* scan = app.add_subcommand("scan", "Stability map over a grid");
    scan->add_option("model", cfg.model_path, "Model file")->required();
    scan->add_option("--region", region_text, "Grid min1:max1:count1,...")->required();
    scan->add_option("--y", y_text, "Fiber: on-shell or v1,...,vn");
    add_output(scan);

    CLI::App* check = app.add_subcommand("check", "Run the model self-verification suite");
    check->add_option("model", cfg.model_path, "Model file")->required();
    check->add_option("--T", cfg.T, "Deviation-run horizon (default 1)");
    check->add_option("--dt", cfg.dt, "Deviation-run step size");
    check->add_option("--points", cfg.check_points, "Random sample points per property");
    add_output(check);

    std::vector<const char*> argv;
    argv.reserve(args.size() + 1);
    argv.push_back("kcc");
    for (const std::string& a : args) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        cfg.command = Command::Help;
        const auto subs = app.get_subcommands();
        cfg.help_text = subs.empty() ? app.help() : subs.front()->help();
        return cfg;
    } catch (const CLI::ParseError& e) {
        throw UsageError(e.what());
    }

    if (analyze->parsed()) cfg.command = Command::Analyze;
    else if (equilibria->parsed()) cfg.command = Command::Equilibria;
    else if (trajectory->parsed()) cfg.command = Command::Trajectory;
    else if (deviation->parsed()) cfg.command = Command::Deviation;
    else if (scan->parsed()) cfg.command = Command::Scan;
    else if (check->parsed()) {
        cfg.command = Command::Check;
        if (check->count("--T") == 0) cfg.T = 1.0; // check defaults to a short run
    }

    if (!at_text.empty()) cfg.at = detail::parse_vec_flag(at_text, "--at");
    if (y_text == "on-shell") {
        cfg.y_on_shell = true;
    } else {
        cfg.y_on_shell = false;
        cfg.y_fixed = detail::parse_vec_flag(y_text, "--y");
    }
    if (!x0_text.empty()) cfg.x0 = detail::parse_vec_flag(x0_text, "--x0");
    if (!y0_text.empty()) cfg.y0 = detail::parse_vec_flag(y0_text, "--y0");
    if (!xi0_text.empty()) cfg.xi0 = detail::parse_vec_flag(xi0_text, "--xi0");
    if (!xidot0_text.empty()) cfg.xidot0 = detail::parse_vec_flag(xidot0_text, "--xidot0");
    if (!region_text.empty()) cfg.region = detail::parse_region_flag(region_text);
    if (format_text == "csv") cfg.format = OutputFormat::Csv;
    else if (format_text == "json") cfg.format = OutputFormat::Json;
    if (!out_text.empty()) cfg.out_path = out_text;

    if (!(cfg.dt > 0.0)) throw UsageError("--dt must be positive");
    if (cfg.T < 0.0) throw UsageError("--T must be non-negative");
    if (cfg.tol < 0.0) throw UsageError("--tol must be non-negative");
    if (cfg.check_points < 1) throw UsageError("--points must be positive");
    if (cfg.y0 && !cfg.euler_lagrange &&
        (cfg.command == Command::Trajectory || cfg.command == Command::Deviation))
        throw UsageError("--y0 only applies to --el runs (flow fibers are y = X(x))");
    if (cfg.euler_lagrange && !cfg.y0)
        throw UsageError("--el requires --y0");
    return cfg;
}

// --------------------------------------------------------------------------
// Command bodies

namespace detail {

inline Vec require_dim(const std::optional<Vec>& v, int n, const std::string& flag) {
    if (!v) throw UsageError("missing " + flag);
    if (v->size() != static_cast<std::size_t>(n))
        throw UsageError(flag + " must have " + std::to_string(n) + " components");
    return *v;
}

inline std::vector<std::string> axis_headers(const std::string& stem, int n) {
    std::vector<std::string> h;
    for (int i = 1; i <= n; ++i) h.push_back(stem + std::to_string(i));
    return h;
}

struct AnalyzeReport {
    Vec x, y;
    GeometryFrame frame;
    SpectrumReport spectrum;
    OddSkewInstability skew;
    Classification verdict;
};

inline AnalyzeReport analyze_point(const VectorFieldModel& m, const Vec& x, const Vec& y,
                                   double tol) {
    AnalyzeReport r;
    r.x = x;
    r.y = y;
    r.frame = geometry_frame(m, x, y);
    r.spectrum = classify_jacobi(r.frame.P, tol);
    r.skew = odd_skew_instability(r.frame, tol);
    r.verdict = combined_verdict(r.spectrum, r.skew);
    return r;
}

inline Json skew_to_json(const OddSkewInstability& s) {
    return Json{{"applies", s.applies},
                {"skew_defect", s.skew_defect},
                {"det_P", s.det_p},
                {"has_zero_eig", s.has_zero_eigenvalue}};
}

inline std::string run_analyze(const VectorFieldModel& m, const RunConfig& cfg) {
    const int n = m.dim();
    const Vec x = require_dim(cfg.at, n, "--at");
    const Vec y = cfg.y_on_shell ? m.eval(x) : require_dim(cfg.y_fixed, n, "--y");
    const AnalyzeReport r = analyze_point(m, x, y, cfg.tol);

    if (cfg.format == OutputFormat::Json) {
        Json j;
        j["model"] = cfg.model_path;
        j["point"] = to_json(r.x);
        j["y"] = to_json(r.y);
        j["y_policy"] = cfg.y_on_shell ? "on-shell" : "fixed";
        j["L"] = r.frame.L;
        j["G"] = to_json(r.frame.G);
        j["N"] = to_json(r.frame.N);
        j["dN"] = to_json(r.frame.dN);
        j["R"] = to_json(r.frame.R);
        j["E"] = to_json(r.frame.E);
        j["Emat"] = to_json(r.frame.Emat);
        j["P"] = to_json(r.frame.P);
        j["eigenvalues"] = to_json(r.spectrum.eigenvalues);
        j["max_re"] = r.spectrum.max_re;
        j["det"] = r.spectrum.det;
        j["classification"] = to_string(r.spectrum.classification);
        j["theorem1"] = skew_to_json(r.skew);
        j["verdict"] = to_string(r.verdict);
        return j.dump(2) + "\n";
    }

    if (cfg.format == OutputFormat::Csv) {
        std::vector<std::string> header = axis_headers("x", n);
        for (auto& h : axis_headers("y", n)) header.push_back(h);
        header.push_back("L");
        for (auto& h : axis_headers("G", n)) header.push_back(h);
        for (int i = 1; i <= n; ++i)
            for (int j = 1; j <= n; ++j)
                header.push_back("N_" + std::to_string(i) + "_" + std::to_string(j));
        for (auto& h : axis_headers("E", n)) header.push_back(h);
        for (int i = 1; i <= n; ++i)
            for (int j = 1; j <= n; ++j)
                header.push_back("Emat_" + std::to_string(i) + "_" + std::to_string(j));
        for (int i = 1; i <= n; ++i)
            for (int j = 1; j <= n; ++j)
                header.push_back("P_" + std::to_string(i) + "_" + std::to_string(j));
        for (int i = 1; i <= n; ++i) {
            header.push_back("eig" + std::to_string(i) + "_re");
            header.push_back("eig" + std::to_string(i) + "_im");
        }
        header.insert(header.end(), {"max_re", "det", "class", "theorem1_applies",
                                     "skew_defect", "det_P", "has_zero_eig", "verdict"});
        CsvWriter csv(header);
        std::vector<std::string> row;
        for (double v : r.x) row.push_back(format_double17(v));
        for (double v : r.y) row.push_back(format_double17(v));
        row.push_back(format_double17(r.frame.L));
        for (double v : r.frame.G) row.push_back(format_double17(v));
        for (std::size_t i = 0; i < r.frame.N.rows(); ++i)
            for (std::size_t j = 0; j < r.frame.N.cols(); ++j)
                row.push_back(format_double17(r.frame.N(i, j)));
        for (double v : r.frame.E) row.push_back(format_double17(v));
        for (std::size_t i = 0; i < r.frame.Emat.rows(); ++i)
            for (std::size_t j = 0; j < r.frame.Emat.cols(); ++j)
                row.push_back(format_double17(r.frame.Emat(i, j)));
        for (std::size_t i = 0; i < r.frame.P.rows(); ++i)
            for (std::size_t j = 0; j < r.frame.P.cols(); ++j)
                row.push_back(format_double17(r.frame.P(i, j)));
        for (const auto& l : r.spectrum.eigenvalues) {
            row.push_back(format_double17(l.real()));
            row.push_back(format_double17(l.imag()));
        }
        row.push_back(format_double17(r.spectrum.max_re));
        row.push_back(format_double17(r.spectrum.det));
        row.push_back(to_string(r.spectrum.classification));
        row.push_back(r.skew.applies ? "true" : "false");
        row.push_back(format_double17(r.skew.skew_defect));
        row.push_back(format_double17(r.skew.det_p));
        row.push_back(r.skew.has_zero_eigenvalue ? "true" : "false");
        row.push_back(to_string(r.verdict));
        csv.row(row);
        return csv.str();
    }

    std::ostringstream out;
    out << "model: " << cfg.model_path << " (n = " << n << ")\n";
    out << "point x = " << render_vec(r.x) << "\n";
    out << "fiber y = " << (cfg.y_on_shell ? "on-shell -> " : "fixed -> ") << render_vec(r.y)
        << "\n";
    out << "L = " << format_double(r.frame.L) << "\n";
    out << "G = " << render_vec(r.frame.G) << "\n";
    out << "N = " << render_mat(r.frame.N) << "\n";
    out << "E = " << render_vec(r.frame.E) << "\n";
    out << "Emat = " << render_mat(r.frame.Emat) << "\n";
    out << "P = " << render_mat(r.frame.P) << "\n";
    out << "eigenvalues:";
    for (const auto& l : r.spectrum.eigenvalues) out << " " << render_complex(l);
    out << "\n";
    out << "max Re(lambda) = " << format_double(r.spectrum.max_re) << "\n";
    out << "det P = " << format_double(r.spectrum.det) << "\n";
    out << "classification: " << to_string(r.spectrum.classification) << "\n";
    out << "odd-skew instability (theorem1): applies = " << (r.skew.applies ? "true" : "false")
        << ", skew defect = " << format_double(r.skew.skew_defect)
        << ", det P = " << format_double(r.skew.det_p)
        << ", zero eigenvalue = " << (r.skew.has_zero_eigenvalue ? "yes" : "no") << "\n";
    out << "verdict: " << to_string(r.verdict) << "\n";
    return out.str();
}

inline std::vector<Vec> grid_nodes(const std::vector<GridAxis>& axes) {
    std::size_t total = 1;
    for (const GridAxis& a : axes) total *= a.count;
    std::vector<Vec> nodes;
    nodes.reserve(total);
    for (std::size_t c = 0; c < total; ++c) {
        Vec x(axes.size());
        std::size_t rem = c;
        for (std::size_t i = 0; i < axes.size(); ++i) {
            const std::size_t k = rem % axes[i].count;
            rem /= axes[i].count;
            x[i] = axes[i].count == 1
                       ? axes[i].min
                       : axes[i].min + static_cast<double>(k) * (axes[i].max - axes[i].min) /
                                           static_cast<double>(axes[i].count - 1);
        }
        nodes.push_back(std::move(x));
    }
    return nodes;
}

inline std::string run_equilibria(const VectorFieldModel& m, const RunConfig& cfg) {
    const int n = m.dim();
    std::vector<Vec> seeds;
    if (cfg.region) {
        if (cfg.region->size() != static_cast<std::size_t>(n))
            throw UsageError("--region must have " + std::to_string(n) + " axes");
        seeds = grid_nodes(*cfg.region);
    } else if (cfg.x0) {
        seeds.push_back(require_dim(cfg.x0, n, "--x0"));
    } else {
        throw UsageError("equilibria needs --region or --x0 seeds");
    }

    const double newton_tol = std::max(cfg.tol, 1e-12);
    const EquilibriaResult result = find_equilibria(m, seeds, newton_tol, 50);

    struct Entry {
        Vec x;
        double residual;
        SpectrumReport rep;
        Classification verdict;
    };
    std::vector<Entry> entries;
    for (const Vec& p : result.points) {
        // Rest-state classification: the equilibrium fiber of the
        // second-order dynamics is y = 0.
        const GeometryFrame frame = geometry_frame(m, p, Vec(p.size(), 0.0));
        const SpectrumReport rep = classify_jacobi(frame.P, cfg.tol);
        const OddSkewInstability skew = odd_skew_instability(frame, cfg.tol);
        entries.push_back({p, max_abs(m.eval(p)), rep, combined_verdict(rep, skew)});
    }

    if (cfg.format == OutputFormat::Json) {
        Json j;
        j["model"] = cfg.model_path;
        j["seeds"] = seeds.size();
        Json list = Json::array();
        for (const Entry& e : entries)
            list.push_back(Json{{"x", to_json(e.x)},
                                {"residual", e.residual},
                                {"max_re", e.rep.max_re},
                                {"classification", to_string(e.rep.classification)},
                                {"verdict", to_string(e.verdict)}});
        j["equilibria"] = std::move(list);
        Json fails = Json::array();
        for (const auto& f : result.failures)
            fails.push_back(Json{{"seed", f.seed_index}, {"reason", f.reason}});
        j["failures"] = std::move(fails);
        return j.dump(2) + "\n";
    }

    if (cfg.format == OutputFormat::Csv) {
        std::vector<std::string> header = axis_headers("x", n);
        header.insert(header.end(), {"residual", "max_re", "class", "verdict"});
        CsvWriter csv(header);
        for (const Entry& e : entries) {
            std::vector<std::string> row;
            for (double v : e.x) row.push_back(format_double17(v));
            row.push_back(format_double17(e.residual));
            row.push_back(format_double17(e.rep.max_re));
            row.push_back(to_string(e.rep.classification));
            row.push_back(to_string(e.verdict));
            csv.row(row);
        }
        return csv.str();
    }

    std::ostringstream out;
    out << "model: " << cfg.model_path << " (n = " << n << ")\n";
    out << "seeds: " << seeds.size() << ", converged equilibria: " << entries.size() << "\n";
    for (const Entry& e : entries)
        out << "  x* = " << render_vec(e.x) << "  |X|_inf = " << format_double(e.residual)
            << "  max Re(lambda) = " << format_double(e.rep.max_re) << "  "
            << to_string(e.verdict) << "\n";
    if (!result.failures.empty()) {
        out << "failed seeds: " << result.failures.size() << "\n";
        for (const auto& f : result.failures)
            out << "  seed " << f.seed_index << ": " << f.reason << "\n";
    }
    return out.str();
}

inline std::string run_trajectory(const VectorFieldModel& m, const RunConfig& cfg) {
    const int n = m.dim();
    const Vec x0 = require_dim(cfg.x0, n, "--x0");
    Trajectory traj;
    if (cfg.euler_lagrange) {
        const Vec y0 = require_dim(cfg.y0, n, "--y0");
        traj = el_integrate(m, x0, y0, cfg.T, cfg.dt);
    } else {
        traj = flow_integrate(m, x0, cfg.T, cfg.dt);
    }
    const StabilityProfile prof = stability_profile(m, traj, cfg.tol);

    if (cfg.format == OutputFormat::Json) {
        Json j;
        j["model"] = cfg.model_path;
        j["kind"] = traj.kind == TrajectoryKind::Flow ? "flow" : "euler-lagrange";
        j["dt"] = traj.dt;
        Json samples = Json::array();
        for (std::size_t k = 0; k < traj.samples.size(); ++k) {
            const Sample& s = traj.samples[k];
            samples.push_back(Json{{"t", s.t},
                                   {"x", to_json(s.x)},
                                   {"y", to_json(s.y)},
                                   {"max_re", prof.entries[k].max_re},
                                   {"classification", to_string(prof.entries[k].classification)}});
        }
        j["samples"] = std::move(samples);
        j["aggregate"] = to_string(prof.aggregate);
        return j.dump(2) + "\n";
    }

    if (cfg.format == OutputFormat::Csv) {
        std::vector<std::string> header{"t"};
        for (auto& h : axis_headers("x", n)) header.push_back(h);
        for (auto& h : axis_headers("y", n)) header.push_back(h);
        header.push_back("max_re");
        header.push_back("class");
        CsvWriter csv(header);
        for (std::size_t k = 0; k < traj.samples.size(); ++k) {
            const Sample& s = traj.samples[k];
            std::vector<std::string> row{format_double17(s.t)};
            for (double v : s.x) row.push_back(format_double17(v));
            for (double v : s.y) row.push_back(format_double17(v));
            row.push_back(format_double17(prof.entries[k].max_re));
            row.push_back(to_string(prof.entries[k].classification));
            csv.row(row);
        }
        return csv.str();
    }

    std::ostringstream out;
    const Sample& last = traj.samples.back();
    out << "model: " << cfg.model_path << " (n = " << n << ")\n";
    out << "kind: " << (traj.kind == TrajectoryKind::Flow ? "flow" : "euler-lagrange")
        << ", samples: " << traj.samples.size() << ", dt = " << format_double(traj.dt) << "\n";
    out << "final state: t = " << format_double(last.t) << ", x = " << render_vec(last.x)
        << ", y = " << render_vec(last.y) << "\n";
    out << "stability (pointwise over computed samples): aggregate " << to_string(prof.aggregate)
        << "\n";
    return out.str();
}

inline std::string run_deviation(const VectorFieldModel& m, const RunConfig& cfg) {
    const int n = m.dim();
    const Vec x0 = require_dim(cfg.x0, n, "--x0");
    Trajectory base;
    if (cfg.euler_lagrange) {
        const Vec y0 = require_dim(cfg.y0, n, "--y0");
        base = el_integrate(m, x0, y0, cfg.T, cfg.dt);
    } else {
        base = flow_integrate(m, x0, cfg.T, cfg.dt);
    }
    const Vec xi0 = require_dim(cfg.xi0, n, "--xi0");
    const Vec xidot0 = cfg.xidot0 ? require_dim(cfg.xidot0, n, "--xidot0") : Vec(n, 0.0);
    const DeviationRun run = deviation_integrate(m, std::move(base), xi0, xidot0);

    double max_residual = 0.0;
    for (double r : run.covariant_residual) max_residual = std::max(max_residual, r);

    if (cfg.format == OutputFormat::Json) {
        Json j;
        j["model"] = cfg.model_path;
        j["kind"] = run.base.kind == TrajectoryKind::Flow ? "flow" : "euler-lagrange";
        j["dt"] = run.base.dt;
        Json samples = Json::array();
        for (std::size_t k = 0; k < run.base.samples.size(); ++k)
            samples.push_back(Json{{"t", run.base.samples[k].t},
                                   {"xi", to_json(run.xi[k])},
                                   {"xidot", to_json(run.xidot[k])},
                                   {"residual", run.covariant_residual.empty()
                                                    ? 0.0
                                                    : run.covariant_residual[k]}});
        j["samples"] = std::move(samples);
        j["max_covariant_residual"] = max_residual;
        return j.dump(2) + "\n";
    }

    if (cfg.format == OutputFormat::Csv) {
        std::vector<std::string> header{"t"};
        for (auto& h : axis_headers("xi", n)) header.push_back(h);
        for (auto& h : axis_headers("xidot", n)) header.push_back(h);
        header.push_back("residual");
        CsvWriter csv(header);
        for (std::size_t k = 0; k < run.base.samples.size(); ++k) {
            std::vector<std::string> row{format_double17(run.base.samples[k].t)};
            for (double v : run.xi[k]) row.push_back(format_double17(v));
            for (double v : run.xidot[k]) row.push_back(format_double17(v));
            row.push_back(format_double17(
                run.covariant_residual.empty() ? 0.0 : run.covariant_residual[k]));
            csv.row(row);
        }
        return csv.str();
    }

    std::ostringstream out;
    out << "model: " << cfg.model_path << " (n = " << n << ")\n";
    out << "base: " << (run.base.kind == TrajectoryKind::Flow ? "flow" : "euler-lagrange")
        << " from x0 = " << render_vec(x0) << ", samples: " << run.base.samples.size() << "\n";
    out << "xi(0) = " << render_vec(xi0) << ", xi'(0) = " << render_vec(xidot0) << "\n";
    out << "xi(T) = " << render_vec(run.xi.back()) << ", xi'(T) = " << render_vec(run.xidot.back())
        << "\n";
    out << "max covariant residual |D2xi - P xi| (normalized): " << format_double(max_residual)
        << "\n";
    return out.str();
}

inline std::string run_scan(const VectorFieldModel& m, const RunConfig& cfg) {
    const int n = m.dim();
    if (!cfg.region) throw UsageError("scan requires --region");
    if (cfg.region->size() != static_cast<std::size_t>(n))
        throw UsageError("--region must have " + std::to_string(n) + " axes");
    const YPolicy policy = cfg.y_on_shell
                               ? YPolicy::on_shell()
                               : YPolicy::fixed_fiber(require_dim(cfg.y_fixed, n, "--y"));
    const StabilityMap map = grid_scan(m, *cfg.region, policy, cfg.tol);

    if (cfg.format == OutputFormat::Json) {
        Json j;
        j["model"] = cfg.model_path;
        Json axes = Json::array();
        for (const GridAxis& a : map.axes)
            axes.push_back(Json{{"min", a.min}, {"max", a.max}, {"count", a.count}});
        j["region"] = std::move(axes);
        j["y_policy"] = cfg.y_on_shell ? "on-shell" : "fixed";
        Json cells = Json::array();
        for (const GridCell& c : map.cells) {
            Json jc{{"x", to_json(c.x)}};
            if (c.error) {
                jc["error"] = c.error_message;
            } else {
                jc["y"] = to_json(c.y);
                jc["max_re"] = c.max_re;
                jc["classification"] = to_string(c.classification);
            }
            cells.push_back(std::move(jc));
        }
        j["cells"] = std::move(cells);
        return j.dump(2) + "\n";
    }

    if (cfg.format == OutputFormat::Csv) {
        std::vector<std::string> header = axis_headers("x", n);
        for (auto& h : axis_headers("y", n)) header.push_back(h);
        header.push_back("max_re");
        header.push_back("class");
        CsvWriter csv(header);
        for (const GridCell& c : map.cells) {
            std::vector<std::string> row;
            for (double v : c.x) row.push_back(format_double17(v));
            if (c.error) {
                for (int i = 0; i < n; ++i) row.push_back("nan");
                row.push_back("nan");
                row.push_back("error");
            } else {
                for (double v : c.y) row.push_back(format_double17(v));
                row.push_back(format_double17(c.max_re));
                row.push_back(to_string(c.classification));
            }
            csv.row(row);
        }
        return csv.str();
    }

    std::size_t stable = 0, unstable = 0, marginal = 0, errors = 0;
    for (const GridCell& c : map.cells) {
        if (c.error) {
            ++errors;
            continue;
        }
        switch (c.classification) {
            case Classification::JacobiStable: ++stable; break;
            case Classification::JacobiUnstable: ++unstable; break;
            case Classification::Marginal: ++marginal; break;
        }
    }
    std::ostringstream out;
    out << "model: " << cfg.model_path << " (n = " << n << ")\n";
    out << "cells: " << map.cells.size() << " (" << (cfg.y_on_shell ? "on-shell" : "fixed")
        << " fiber)\n";
    out << "JacobiStable: " << stable << ", JacobiUnstable: " << unstable
        << ", Marginal: " << marginal << ", errors: " << errors << "\n";
    return out.str();
}

// Self-verification: property checks with pinned tolerances; any violation
// makes the command exit with code 2.
struct CheckItem {
    std::string name;
    double measured;
    double tolerance;
    bool pass;
};

inline std::string run_check(const VectorFieldModel& m, const RunConfig& cfg, int& exit_code) {
    const std::size_t n = static_cast<std::size_t>(m.dim());
    std::mt19937_64 rng(0x6b63635fULL); // fixed seed: identical output per invocation
    const int points = cfg.check_points;

    std::vector<CheckItem> items;
    const auto push = [&items](std::string name, double measured, double tolerance) {
        items.push_back({std::move(name), measured, tolerance, measured <= tolerance});
    };

    // Geometry identities at random phase points.
    double skew_defect = 0.0, dn_defect = 0.0, inv_gap = 0.0, n2_sym = 0.0, el_res = 0.0;
    double gy_gap = 0.0, gx_gap = 0.0;
    for (int p = 0; p < points; ++p) {
        const Vec x = random_vec(rng, n);
        const Vec y = random_vec(rng, n);
        const Jet2 jet = jet2(m, x);
        const Mat N = nonlinear_connection(jet);
        const Ten3 dN = connection_gradient(jet);
        const double nscale = 1.0 + max_abs(N);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                skew_defect = std::max(skew_defect, std::abs(N(i, j) + N(j, i)) / nscale);
        const double dscale = 1.0 + max_abs(dN);
        for (std::size_t k = 0; k < n; ++k)
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j)
                    dn_defect =
                        std::max(dn_defect, std::abs(dN(i, j, k) + dN(j, i, k)) / dscale);

        const Vec e1 = first_invariant(jet, y);
        const Vec e2 = first_invariant_expanded(jet, y);
        inv_gap = std::max(inv_gap, max_abs(e1 - e2) / (1.0 + max_abs(e1)));

        const Mat n2 = N * N;
        n2_sym = std::max(n2_sym, max_abs(n2 - transpose(n2)) / (1.0 + max_abs(n2)));

        // dG/dy = N by finite differences.
        const double hy = 1e-6;
        for (std::size_t j = 0; j < n; ++j) {
            Vec yp = y, ym = y;
            yp[j] += hy;
            ym[j] -= hy;
            const Vec gp = semispray(jet, yp);
            const Vec gm = semispray(jet, ym);
            for (std::size_t i = 0; i < n; ++i) {
                const double fd = (gp[i] - gm[i]) / (2.0 * hy);
                gy_gap = std::max(gy_gap, std::abs(fd - N(i, j)) / (1.0 + std::abs(N(i, j))));
            }
        }

        // Analytic dG/dx against central differences of the semispray.
        const double hx = 1e-6;
        const Mat gx = semispray_position_gradient(jet, y);
        for (std::size_t j = 0; j < n; ++j) {
            Vec xp = x, xm = x;
            xp[j] += hx;
            xm[j] -= hx;
            const Vec gp = semispray(jet2(m, xp), y);
            const Vec gm = semispray(jet2(m, xm), y);
            for (std::size_t i = 0; i < n; ++i) {
                const double fd = (gp[i] - gm[i]) / (2.0 * hx);
                gx_gap = std::max(gx_gap, std::abs(fd - gx(i, j)) / (1.0 + std::abs(gx(i, j))));
            }
        }

        // Euler-Lagrange residual along the flow: x'' = J X and y = X(x)
        // must satisfy x'' + 2G = 0.
        const Vec jx = jet.jac * jet.value;
        const Vec g = semispray(jet, jet.value);
        Vec res(n);
        for (std::size_t i = 0; i < n; ++i) res[i] = jx[i] + 2.0 * g[i];
        el_res = std::max(el_res, max_abs(res) / (1.0 + max_abs(jx)));
    }
    push("skew symmetry of N", skew_defect, 1e-12);
    push("skew symmetry of dN slices", dn_defect, 1e-12);
    push("first invariant route agreement", inv_gap, 1e-12);
    push("N*N symmetry", n2_sym, 1e-12);
    push("dG/dy equals N (central differences)", gy_gap, 1e-6);
    push("analytic dG/dx vs central differences", gx_gap, 1e-6);
    push("Euler-Lagrange residual on shell", el_res, 1e-10);

    // Exact jets against the finite-difference oracle.
    double jet_gap = 0.0;
    for (int p = 0; p < std::min(points, 50); ++p) {
        const Vec x = random_vec(rng, n);
        const Jet2 a = jet2(m, x);
        const Jet2 b = jet2_fd(m, x);
        for (std::size_t i = 0; i < n; ++i) {
            jet_gap = std::max(jet_gap,
                               std::abs(a.value[i] - b.value[i]) / (1.0 + std::abs(a.value[i])));
            for (std::size_t j = 0; j < n; ++j) {
                jet_gap = std::max(jet_gap, std::abs(a.jac(i, j) - b.jac(i, j)) /
                                                (1.0 + std::abs(a.jac(i, j))));
                for (std::size_t k = 0; k < n; ++k)
                    jet_gap = std::max(jet_gap, std::abs(a.hess(i, j, k) - b.hess(i, j, k)) /
                                                    (1.0 + std::abs(a.hess(i, j, k))));
            }
        }
    }
    push("exact jet vs central differences", jet_gap, 1e-6);

    // End-to-end deviation oracle along a flow trajectory.
    const Vec x0 = random_vec(rng, n, -0.5, 0.5);
    const Vec xi0 = random_vec(rng, n);
    const Vec xidot0 = random_vec(rng, n);
    DeviationRun run = deviation_integrate(m, flow_integrate(m, x0, cfg.T, cfg.dt), xi0, xidot0);
    const double cov = covariant_residual(m, run);
    push("covariant deviation residual", cov, 1e-4);

    // Decomposition identity P = R.y + Emat: reported, not asserted. The two
    // contraction conventions for the torsion give D1 and D2.
    double d1 = 0.0, d2 = 0.0;
    for (int p = 0; p < std::min(points, 20); ++p) {
        const Vec x = random_vec(rng, n);
        const Vec y = random_vec(rng, n);
        const GeometryFrame f = geometry_frame(m, x, y);
        const DecompositionResidual d = decomposition_residual(f, y);
        d1 = std::max(d1, max_abs(d.d1));
        d2 = std::max(d2, max_abs(d.d2));
    }

    // Odd-skew instability report at a representative phase point.
    const Vec xs = random_vec(rng, n);
    const Vec ys = random_vec(rng, n);
    const GeometryFrame sf = geometry_frame(m, xs, ys);
    const SpectrumReport srep = classify_jacobi(sf.P, cfg.tol);
    const OddSkewInstability skew = odd_skew_instability(sf, cfg.tol);

    bool all_pass = true;
    for (const CheckItem& item : items) all_pass &= item.pass;
    exit_code = all_pass ? 0 : 2;

    if (cfg.format == OutputFormat::Json) {
        Json j;
        j["model"] = cfg.model_path;
        j["points"] = points;
        Json checks = Json::array();
        for (const CheckItem& item : items)
            checks.push_back(Json{{"name", item.name},
                                  {"measured", item.measured},
                                  {"tolerance", item.tolerance},
                                  {"pass", item.pass}});
        j["checks"] = std::move(checks);
        j["decomposition_residual"] = Json{{"max_D1", d1}, {"max_D2", d2}};
        j["theorem1"] = skew_to_json(skew);
        j["verdict"] = to_string(combined_verdict(srep, skew));
        j["pass"] = all_pass;
        return j.dump(2) + "\n";
    }

    std::ostringstream out;
    out << "self-check: " << cfg.model_path << " (n = " << n << ", " << points
        << " random points, fixed seed)\n";
    for (const CheckItem& item : items)
        out << (item.pass ? "[PASS] " : "[FAIL] ") << item.name << ": "
            << format_double(item.measured) << " (tol " << format_double(item.tolerance) << ")\n";
    out << "decomposition identity P = R.y + Emat (under test, not assumed): max |D1| = "
        << format_double(d1) << ", max |D2| = " << format_double(d2) << "\n";
    out << "odd-skew instability (theorem1) at sample point: applies = "
        << (skew.applies ? "true" : "false")
        << ", skew defect = " << format_double(skew.skew_defect)
        << ", det P = " << format_double(skew.det_p)
        << ", zero eigenvalue = " << (skew.has_zero_eigenvalue ? "yes" : "no") << "\n";
    out << "verdict at sample point: " << to_string(combined_verdict(srep, skew)) << "\n";
    out << "result: " << (all_pass ? "PASS" : "FAIL") << "\n";
    return out.str();
}

} // namespace detail

inline int execute(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    try {
        if (cfg.command == Command::Help) {
            out << cfg.help_text;
            return 0;
        }
        const VectorFieldModel model = parse_model_file(cfg.model_path);
        std::string payload;
        int code = 0;
        switch (cfg.command) {
            case Command::Analyze: payload = detail::run_analyze(model, cfg); break;
            case Command::Equilibria: payload = detail::run_equilibria(model, cfg); break;
            case Command::Trajectory: payload = detail::run_trajectory(model, cfg); break;
            case Command::Deviation: payload = detail::run_deviation(model, cfg); break;
            case Command::Scan: payload = detail::run_scan(model, cfg); break;
            case Command::Check: payload = detail::run_check(model, cfg, code); break;
            case Command::Help: return 0;
        }
        if (cfg.out_path) {
            std::ofstream f(*cfg.out_path, std::ios::binary);
            if (!f) throw IoError("cannot open output file '" + *cfg.out_path + "'");
            f << payload;
            if (!f) throw IoError("write failed for '" + *cfg.out_path + "'");
        } else {
            out << payload;
        }
        return code;
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
}

inline int run_cli(int argc, const char* const* argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    try {
        const RunConfig cfg = parse_args(args);
        return execute(cfg, std::cout, std::cerr);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        std::cerr << "run 'kcc --help' for usage\n";
        return 1;
    }
}

} // namespace kcc

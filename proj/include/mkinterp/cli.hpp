#pragma once

// Command-line driver. All options live on the root app; the subcommands select
// the action and fall through to the root for option parsing, so a config file
// (flat key=value lines, keys are long option names) covers every subcommand and
// explicit flags override it.
//
// Exit codes: 0 ok, 1 study bound violated, 2 input, 3 convergence, 4 singular
// design (K < n), 5 points outside the domain.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mkinterp/error_analysis.hpp"
#include "mkinterp/errors.hpp"
#include "mkinterp/feature_model.hpp"
#include "mkinterp/interpolant.hpp"
#include "mkinterp/io.hpp"
#include "mkinterp/mls_solver.hpp"
#include "mkinterp/sampling.hpp"

namespace mkinterp::cli {

enum ExitCode : int {
    kOk = 0,
    kBoundViolated = 1,
    kInputError = 2,
    kNotConverged = 3,
    kSingularDesign = 4,
    kOutsideDomain = 5,
};

struct RunConfig {
    std::string kernel = "power_series";
    int order = 2;
    int truncation = 10;
    double decay = 0.5;
    std::string domain;  // "l:u" or "l1:u1,l2:u2,..."; empty means [-1,1]^d
    int dim = 0;         // study only; 0 means taken from --domain, else 1
    double tol = 1e-10;
    int max_iter = 200;
    std::uint64_t seed = 1;
    std::string out;
    int grid = 0;
    int fill_grid = 0;
    std::string data;
    std::string interpolant;
    std::string points;
    std::string nodes;
    std::string counts = "4,8,16,32";
    std::string custom_table;
    double fnorm = 1.0;
};

namespace detail {

inline Domain parse_domain(const std::string& text, int d) {
    if (text.empty()) return Domain::cube(d);
    std::vector<double> lo, hi;
    std::string_view rest = text;
    for (;;) {
        const auto comma = rest.find(',');
        const std::string_view axis = io::trim(rest.substr(0, comma));
        const auto colon = axis.find(':');
        if (colon == std::string_view::npos)
            throw InvalidInput("domain axis '" + std::string(axis) + "' must look like lower:upper");
        lo.push_back(io::parse_double(axis.substr(0, colon), "--domain", 0));
        hi.push_back(io::parse_double(axis.substr(colon + 1), "--domain", 0));
        if (comma == std::string_view::npos) break;
        rest.remove_prefix(comma + 1);
    }
    if (lo.size() == 1 && d > 1) {
        lo.assign(static_cast<std::size_t>(d), lo[0]);
        hi.assign(static_cast<std::size_t>(d), hi[0]);
    }
    if (static_cast<int>(lo.size()) != d)
        throw DimensionMismatch("--domain has " + std::to_string(lo.size()) + " axes, data has " +
                                std::to_string(d));
    return Domain(Eigen::Map<Eigen::VectorXd>(lo.data(), d), Eigen::Map<Eigen::VectorXd>(hi.data(), d));
}

inline int domain_axes(const std::string& text) {
    if (text.empty()) return 0;
    return 1 + static_cast<int>(std::count(text.begin(), text.end(), ','));
}

inline FeatureModel build_model(const RunConfig& cfg, int d) {
    const FeatureFamily family = parse_family(cfg.kernel);
    if (family == FeatureFamily::CustomTable) {
        if (cfg.custom_table.empty()) throw InvalidInput("--kernel custom_table needs --custom-table");
        std::ifstream in = io::open_input(cfg.custom_table);
        io::Json j = io::parse_json(in, cfg.custom_table);
        if (!cfg.domain.empty()) j["domain"] = io::domain_to_json(parse_domain(cfg.domain, d));
        FeatureModel m = io::custom_table_from_json(j, cfg.custom_table);
        if (m.dim() != d) throw DimensionMismatch("custom table dimension does not match the data");
        return m;
    }
    const Domain dom = parse_domain(cfg.domain, d);
    return family == FeatureFamily::PowerSeries
               ? FeatureModel::power_series(dom, cfg.truncation, cfg.decay)
               : FeatureModel::trigonometric(dom, cfg.truncation, cfg.decay);
}

inline SolverOptions solver_options(const RunConfig& cfg) {
    SolverOptions o;
    o.residual_tol = cfg.tol;
    o.max_iterations = cfg.max_iter;
    o.seed = cfg.seed;
    o.validate();
    return o;
}

// Writes to --out when given, else to the supplied stream.
class Sink {
public:
    Sink(const std::string& path, std::ostream& fallback) : stream_(&fallback) {
        if (!path.empty()) {
            file_.open(path, std::ios::binary | std::ios::trunc);
            if (!file_) throw io::ParseError(path, 0, "cannot open file for writing");
            stream_ = &file_;
        }
    }
    std::ostream& get() { return *stream_; }

private:
    std::ofstream file_;
    std::ostream* stream_;
};

inline Eigen::MatrixXd eval_points(const RunConfig& cfg, const Domain& dom, int default_grid) {
    if (!cfg.points.empty()) {
        std::ifstream in = io::open_input(cfg.points);
        Eigen::MatrixXd p = io::read_points_csv(in, cfg.points);
        if (p.cols() != dom.dim())
            throw DimensionMismatch(cfg.points + ": points have dimension " + std::to_string(p.cols()) +
                                    ", model has " + std::to_string(dom.dim()));
        return p;
    }
    const int g = cfg.grid ? cfg.grid : default_grid;
    if (g < 2) throw InvalidInput("need --points or --grid N (N >= 2)");
    return tensor_grid(dom, g);
}

inline void write_row(std::ostream& os, const Eigen::Ref<const Eigen::VectorXd>& x) {
    for (Eigen::Index j = 0; j < x.size(); ++j) os << (j ? "," : "") << io::format_double(x[j]);
}

inline int default_fill_grid(int d) { return d == 1 ? 2001 : d == 2 ? 201 : 41; }

// ---- subcommands ---------------------------------------------------------

inline int cmd_fit(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    if (cfg.data.empty()) throw InvalidInput("fit needs --data");
    if (cfg.out.empty()) throw InvalidInput("fit needs --out for the interpolant JSON");
    std::ifstream in = io::open_input(cfg.data);
    const NodeSet nodes = io::read_data_csv(in, cfg.data);
    const FeatureModel model = build_model(cfg, nodes.dim());
    for (Eigen::Index i = 0; i < nodes.size(); ++i) {
        if (!model.domain().contains(nodes.points.row(i).transpose()))
            throw PointOutsideDomain(cfg.data + ": data row " + std::to_string(i + 1) +
                                     " lies outside the domain");
    }
    const FitResult r = fit_with_report(model, nodes, cfg.order, solver_options(cfg));
    const double norm = banach_norm_via_tensor(r.interpolant);

    io::Json j = io::interpolant_to_json(r.interpolant);
    j["report"] = io::Json{{"converged", r.report.converged},
                           {"iterations", r.report.iterations},
                           {"residual_norm", r.report.residual_norm},
                           {"norm", norm}};
    Sink sink(cfg.out, out);
    io::write_json(sink.get(), j);

    out << "converged: " << (r.report.converged ? "true" : "false") << '\n'
        << "iterations: " << r.report.iterations << '\n'
        << "residual_norm: " << io::format_double(r.report.residual_norm) << '\n'
        << "norm: " << io::format_double(norm) << '\n'
        << "coefficients: ";
    write_row(out, r.interpolant.coefficients());
    out << '\n';

    if (r.report.converged) return kOk;
    if (r.report.singular_design && model.truncation() < nodes.size()) {
        err << "error: singular design: K = " << model.truncation() << " features for "
            << nodes.size() << " nodes and the system has no solution\n";
        return kSingularDesign;
    }
    err << "error: solver did not converge (residual " << io::format_double(r.report.residual_norm)
        << " after " << r.report.iterations << " iterations)\n";
    return kNotConverged;
}

inline int cmd_eval(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    if (cfg.interpolant.empty()) throw InvalidInput("eval needs --interpolant");
    std::ifstream in = io::open_input(cfg.interpolant);
    const Interpolant s = io::interpolant_from_json(io::parse_json(in, cfg.interpolant), cfg.interpolant);
    const Eigen::MatrixXd pts = eval_points(cfg, s.model().domain(), 0);

    std::vector<std::optional<double>> vals(static_cast<std::size_t>(pts.rows()));
    parallel_for(pts.rows(), [&](Eigen::Index i) {
        try {
            vals[static_cast<std::size_t>(i)] = evaluate(s, pts.row(i).transpose());
        } catch (const PointOutsideDomain&) {
        }
    });

    Sink sink(cfg.out, out);
    std::ostream& os = sink.get();
    os << io::coordinate_header(s.model().dim()) << ",s,status\n";
    Eigen::Index outside = 0;
    for (Eigen::Index i = 0; i < pts.rows(); ++i) {
        write_row(os, pts.row(i).transpose());
        const auto& v = vals[static_cast<std::size_t>(i)];
        if (v) {
            os << ',' << io::format_double(*v) << ",ok\n";
        } else {
            os << ",,outside\n";
            ++outside;
        }
    }
    if (outside) {
        err << "error: " << outside << " point(s) outside the domain\n";
        return kOutsideDomain;
    }
    return kOk;
}

inline int cmd_power(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    if (cfg.nodes.empty()) throw InvalidInput("power needs --nodes");
    std::ifstream in = io::open_input(cfg.nodes);
    const Eigen::MatrixXd node_pts = io::read_points_csv(in, cfg.nodes);
    const NodeSet nodes = NodeSet::make(node_pts, Eigen::VectorXd::Zero(node_pts.rows()));
    const FeatureModel model = build_model(cfg, nodes.dim());
    const Eigen::MatrixXd pts = eval_points(cfg, model.domain(), 0);

    std::vector<Eigen::Index> inside;
    for (Eigen::Index i = 0; i < pts.rows(); ++i)
        if (model.domain().contains(pts.row(i).transpose())) inside.push_back(i);
    Eigen::MatrixXd in_pts(static_cast<Eigen::Index>(inside.size()), pts.cols());
    for (std::size_t r = 0; r < inside.size(); ++r)
        in_pts.row(static_cast<Eigen::Index>(r)) = pts.row(inside[r]);

    const int fill = cfg.fill_grid ? cfg.fill_grid : default_fill_grid(model.dim());
    const PowerReport rep = power_report(model, nodes, cfg.order, in_pts, cfg.fnorm, fill, solver_options(cfg));

    Sink sink(cfg.out, out);
    std::ostream& os = sink.get();
    os << io::coordinate_header(model.dim()) << ",p_m,p_2,bound\n";
    std::size_t r = 0;
    for (Eigen::Index i = 0; i < pts.rows(); ++i) {
        write_row(os, pts.row(i).transpose());
        if (r < inside.size() && inside[r] == i) {
            const auto k = static_cast<Eigen::Index>(r++);
            os << ',' << io::format_double(rep.p_m[k]) << ',' << io::format_double(rep.p_2[k]) << ','
               << io::format_double(rep.bound[k]) << '\n';
        } else {
            os << ",,,\n";
        }
    }
    err << "fill_distance: " << io::format_double(rep.fill_distance) << " (+/- "
        << io::format_double(rep.fill_resolution) << ")\n";
    if (inside.size() != static_cast<std::size_t>(pts.rows())) {
        err << "error: " << pts.rows() - static_cast<Eigen::Index>(inside.size())
            << " point(s) outside the domain\n";
        return kOutsideDomain;
    }
    return kOk;
}

inline std::vector<int> parse_counts(const std::string& text) {
    std::vector<int> counts;
    for (std::string_view f : io::split_fields(text)) {
        const double v = io::parse_double(f, "--counts", 0);
        if (v != std::floor(v) || v < 1 || v > 1e7)
            throw InvalidInput("--counts entries must be positive integers");
        if (!counts.empty() && !(v > counts.back()))
            throw InvalidInput("--counts must be strictly increasing");
        counts.push_back(static_cast<int>(v));
    }
    return counts;
}

inline int cmd_study(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    if (parse_family(cfg.kernel) == FeatureFamily::CustomTable)
        throw InvalidInput("study needs a built-in feature family");
    const int axes = domain_axes(cfg.domain);
    const int d = cfg.dim ? cfg.dim : (axes ? axes : 1);
    const FeatureModel model = build_model(cfg, d);
    const std::vector<int> counts = parse_counts(cfg.counts);

    SeededSampler rng(cfg.seed);
    const Eigen::VectorXd alpha_f = rng.normal_vector(model.truncation());
    std::vector<Eigen::MatrixXd> sets;
    for (int n : counts) sets.push_back(quasi_uniform_nodes(model.domain(), n));
    const int grid = cfg.grid ? cfg.grid : (d == 1 ? 201 : d == 2 ? 41 : 11);
    const int fill = cfg.fill_grid ? cfg.fill_grid : default_fill_grid(d);

    StudyResult res;
    try {
        res = convergence_study(model, alpha_f, cfg.order, sets, tensor_grid(model.domain(), grid), fill,
                                solver_options(cfg));
    } catch (const NotConverged& e) {
        err << "error: " << e.what() << '\n';
        return kNotConverged;
    }

    Sink sink(cfg.out, out);
    std::ostream& os = sink.get();
    os << "n,h,max_error,max_bound,slope\n";
    for (const StudyRow& row : res.rows) {
        os << row.n << ',' << io::format_double(row.h) << ',' << io::format_double(row.max_error) << ','
           << io::format_double(row.max_bound) << ',';
        if (!std::isnan(row.slope)) os << io::format_double(row.slope);
        os << '\n';
    }
    if (!res.bound_holds_everywhere()) {
        err << "error: error bound violated in at least one row\n";
        return kBoundViolated;
    }
    return kOk;
}

}  // namespace detail

/// Runs the CLI on `args` (program name excluded). Never throws.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    RunConfig cfg;
    CLI::App app{"Multi-kernel interpolation in truncated feature spaces"};
    app.set_config("--config", "", "key=value file; keys are long option names, flags override");
    app.require_subcommand(1, 1);

    app.add_option("--kernel", cfg.kernel, "power_series | trigonometric | custom_table")->capture_default_str();
    app.add_option("--order,-m", cfg.order, "even order m >= 2")->capture_default_str();
    app.add_option("--truncation,-K", cfg.truncation, "number of features K")->capture_default_str();
    app.add_option("--decay", cfg.decay, "weight decay rho")->capture_default_str();
    app.add_option("--domain", cfg.domain, "box as lower:upper[,lower:upper...] (default -1:1)");
    app.add_option("--dim", cfg.dim, "study dimension (default: from --domain, else 1)");
    app.add_option("--tol", cfg.tol, "solver residual tolerance")->capture_default_str();
    app.add_option("--max-iter", cfg.max_iter, "solver iteration limit")->capture_default_str();
    app.add_option("--seed", cfg.seed, "RNG seed")->capture_default_str();
    app.add_option("--out,-o", cfg.out, "output file (default: stdout; required for fit)");
    app.add_option("--grid", cfg.grid, "evaluation grid points per axis");
    app.add_option("--fill-grid", cfg.fill_grid, "fill-distance grid points per axis");
    app.add_option("--data", cfg.data, "data CSV x1,...,xd,y");
    app.add_option("--interpolant", cfg.interpolant, "interpolant JSON");
    app.add_option("--points", cfg.points, "evaluation points CSV x1,...,xd");
    app.add_option("--nodes", cfg.nodes, "node CSV x1,...,xd");
    app.add_option("--counts", cfg.counts, "study node counts, strictly increasing")->capture_default_str();
    app.add_option("--custom-table", cfg.custom_table, "custom-table JSON");
    app.add_option("--fnorm", cfg.fnorm, "target norm used in the bound column")->capture_default_str();

    CLI::App* fit = app.add_subcommand("fit", "fit an interpolant to a data CSV")->fallthrough();
    CLI::App* eval = app.add_subcommand("eval", "evaluate an interpolant JSON")->fallthrough();
    CLI::App* power = app.add_subcommand("power", "power function and error bound columns")->fallthrough();
    CLI::App* study = app.add_subcommand("study", "fill-distance convergence study")->fallthrough();

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        app.parse(rev);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kInputError;
    }

    try {
        if (*fit) return detail::cmd_fit(cfg, out, err);
        if (*eval) return detail::cmd_eval(cfg, out, err);
        if (*power) return detail::cmd_power(cfg, out, err);
        if (*study) return detail::cmd_study(cfg, out, err);
    } catch (const SingularDesign& e) {
        err << "error: " << e.what() << '\n';
        return kSingularDesign;
    } catch (const NotConverged& e) {
        err << "error: " << e.what() << '\n';
        return kNotConverged;
    } catch (const PointOutsideDomain& e) {
        err << "error: " << e.what() << '\n';
        return kOutsideDomain;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kInputError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kInputError;
    }
    return kInputError;
}

}  // namespace mkinterp::cli

#pragma once

// Problem assembly from a RunConfig and the denoise/deblur/wide/verify commands.
// Commands return 0 (all checks pass) or 1 (a check or the solver failed);
// usage errors surface as ConfigError and map to 2 in the executable.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "flow_solver.hpp"
#include "functionals.hpp"
#include "grid.hpp"
#include "io.hpp"
#include "nonlocal_ops.hpp"
#include "verify.hpp"
#include "wide.hpp"

namespace fracflow {

/// Exterior values copied from the nearest interior node (clamped multi-index).
inline std::vector<double> replicated_exterior(const DiscreteDomain& dom, std::span<const double> interior)
{
    std::vector<double> ext(dom.collar_count());
    const int n0 = dom.shape()[0], n1 = dom.shape()[1];
    for (std::size_t k = 0; k < ext.size(); ++k) {
        const Index& m = dom.multi_index(dom.interior_count() + k);
        ext[k] = interior[dom.interior_index(std::clamp(m[0], 0, n0 - 1), std::clamp(m[1], 0, n1 - 1))];
    }
    return ext;
}

inline GridFunction make_datum(DomainPtr dom, std::vector<double> interior, ExteriorMode mode)
{
    if (mode == ExteriorMode::ZeroExtension) return GridFunction::zero_extended(std::move(dom), std::move(interior));
    auto ext = replicated_exterior(*dom, interior);
    return GridFunction::prescribed(std::move(dom), std::move(interior), std::move(ext));
}

/// 2D: indicator of the disk of radius 0.3125 n around the image centre.
inline std::vector<double> disk_image(const DiscreteDomain& dom)
{
    const int n0 = dom.shape()[0], n1 = dom.shape()[1];
    const double c0 = 0.5 * (n0 - 1), c1 = 0.5 * (n1 - 1), r = 0.3125 * std::min(n0, n1);
    std::vector<double> v(dom.interior_count());
    for (int i = 0; i < n0; ++i)
        for (int j = 0; j < n1; ++j)
            v[dom.interior_index(i, j)] = (i - c0) * (i - c0) + (j - c1) * (j - c1) <= r * r ? 1.0 : 0.0;
    return v;
}

/// 1D: sin(pi x) at the cell centres x = (i + 1/2) h.
inline std::vector<double> sine_profile(const DiscreteDomain& dom)
{
    std::vector<double> v(dom.interior_count());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::sin(std::acos(-1.0) * (i + 0.5) * dom.h());
    return v;
}

inline void add_noise(std::vector<double>& v, double sigma, std::uint64_t seed)
{
    if (sigma <= 0.0) return;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, sigma);
    for (double& x : v) x += g(rng);
}

struct Problem {
    DomainPtr dom;
    std::shared_ptr<const NonlocalKernel> kernel;
    TvVariant tv = TvVariant::Riesz;
    bool deblur = false;
    GridFunction u0;                  // observation; also the initial value of the flow
    std::optional<GridFunction> truth; // known for synthetic instances
    Functional f;
};

inline TvVariant model_variant(const std::string& model)
{
    return model.find("gagliardo") != std::string::npos ? TvVariant::Gagliardo : TvVariant::Riesz;
}

inline BlurOperator config_blur(const RunConfig& c, int dim)
{
    return BlurOperator::gaussian(dim, c.blur_sigma, c.blur_radius > 0 ? c.blur_radius : -1);
}

inline Problem make_problem(const RunConfig& c)
{
    validate_config(c);
    Problem p;
    p.tv = model_variant(c.model);
    p.deblur = c.model.rfind("deblur", 0) == 0;
    const ExteriorMode mode = p.tv == TvVariant::Riesz ? ExteriorMode::ZeroExtension : ExteriorMode::Prescribed;
    std::vector<double> observed, clean;
    if (!c.input.empty()) {
        const Image img = load_pgm(c.input);
        p.dom = make_domain(2, {img.height, img.width}, 1.0, c.rho);
        observed = img.values;
    } else {
        const int dim = c.synthetic == "disk" ? 2 : 1;
        const double h = c.h > 0.0 ? c.h : (dim == 2 ? 1.0 : 1.0 / c.size);
        p.dom = make_domain(dim, dim == 2 ? std::vector<int>{c.size, c.size} : std::vector<int>{c.size}, h, c.rho);
        clean = dim == 2 ? disk_image(*p.dom) : sine_profile(*p.dom);
        observed = clean;
        if (p.deblur) observed = config_blur(c, dim).apply(*p.dom, clean);
        add_noise(observed, c.noise, c.seed);
        p.truth = make_datum(p.dom, clean, mode);
    }
    p.kernel = std::make_shared<const NonlocalKernel>(p.dom, c.alpha, c.rho, c.riesz_constant);
    p.u0 = make_datum(p.dom, observed, mode);
    if (p.deblur) {
        p.f = Functional::deblur(p.tv, p.kernel, config_blur(c, p.dom->dim()), c.kappa, p.u0);
    } else {
        RegressionTerm r = c.fidelity == "l1"         ? RegressionTerm::l1(p.u0, c.kappa)
                           : c.fidelity == "quantile" ? RegressionTerm::quantile(p.u0, c.kappa, c.quantile)
                           : c.fidelity == "huber"    ? RegressionTerm::huber(p.u0, c.kappa, c.huber_delta)
                                                      : RegressionTerm::l2(p.u0, c.kappa);
        p.f = Functional::denoise(p.tv, p.kernel, std::move(r));
    }
    return p;
}

inline SolverParams config_solver(const RunConfig& c)
{
    SolverParams s;
    s.gap_tolerance = c.gap_tolerance;
    s.max_iterations = c.max_iterations;
    return s;
}

/// |K u - u0| on the interior.
inline double blur_residual(const Functional& f, const GridFunction& u)
{
    const auto ku = f.blur().apply(u.domain(), u.interior());
    double s = 0.0;
    for (std::size_t i = 0; i < ku.size(); ++i) s += (ku[i] - f.blur_datum()[i]) * (ku[i] - f.blur_datum()[i]);
    return std::sqrt(u.domain().cell_volume() * s);
}

/* Reports that only need the flow output: monotone energy, time-averaged energy,
 * kinetic and Hoelder bounds, initial condition, and the variational inequality
 * against the comparison library. */
inline std::vector<VerificationReport> flow_reports(const FlowResult& run, const Functional& f, double gap_tolerance,
                                                    const std::string& instance)
{
    const auto& u = run.trajectory;
    const double measure = u.domain().cell_volume() * static_cast<double>(u.domain().interior_count());
    std::vector<VerificationReport> out;
    double mono = std::numeric_limits<double>::infinity();
    for (std::size_t k = 1; k < run.trace.size(); ++k)
        mono = std::min(mono, (run.trace[k - 1].energy - run.trace[k].energy) / measure);
    out.push_back(make_report("energy_nonincreasing", mono, 2.0 * gap_tolerance, instance));
    const auto d = dissipation_report(u, f);
    out.push_back(make_report("time_averaged_energy", d.average_slack, 1e-6, instance));
    out.push_back(make_report("kinetic_bound", d.kinetic_slack, 0.0, instance));
    out.push_back(make_report("holder_half", 1.001 * std::sqrt(2.0 * std::max(d.f0, 0.0)) - d.holder_ratio, 0.0, instance));
    double ic = std::numeric_limits<double>::infinity();
    for (double s : initial_condition_check(u, f)) ic = std::min(ic, s);
    out.push_back(make_report("initial_condition", ic, 1e-8, instance));
    const double tol = vi_tolerance(gap_tolerance, u, d.f0);
    for (const auto& m : comparison_library(u, f))
        out.push_back(make_report(std::string("vi/") + provenance_name(m.tag), vi_slack(u, m.v, f), tol,
                                  instance + ": " + m.label));
    return out;
}

namespace detail {

inline std::filesystem::path prepare_dir(const std::string& dir)
{
    std::filesystem::path p(dir);
    std::filesystem::create_directories(p);
    return p;
}

inline void write_file(const std::filesystem::path& p, const std::string& content)
{
    std::ofstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + p.string());
    f << content;
}

inline void write_slice(const std::filesystem::path& dir, const std::string& stem, const GridFunction& u)
{
    if (u.domain().dim() == 2) {
        std::ofstream f(dir / (stem + ".pgm"), std::ios::binary);
        if (!f) throw std::runtime_error("cannot write image");
        write_pgm(f, grid_to_image(u));
    } else {
        std::ostringstream o;
        o << "i,x,u\n";
        for (std::size_t i = 0; i < u.interior().size(); ++i)
            o << i << "," << fmt_double(u.domain().coord(i)[0]) << "," << fmt_double(u[i]) << "\n";
        write_file(dir / (stem + ".csv"), o.str());
    }
}

inline int summarize(const std::vector<VerificationReport>& reports, std::ostream& log)
{
    bool ok = true;
    for (const auto& r : reports) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "slack=% .6e tol=%.3e", r.slack, r.tolerance);
        log << (r.pass ? "PASS " : "FAIL ") << r.check << " [" << r.instance << "] " << buf << "\n";
        ok = ok && r.pass;
    }
    return ok ? 0 : 1;
}

} // namespace detail

/// Flow run shared by denoise and deblur: images, trace, report.
inline int cmd_flow(const RunConfig& c, const std::string& out_dir, std::ostream& log)
{
    const Problem p = make_problem(c);
    const auto dir = detail::prepare_dir(out_dir);
    detail::write_file(dir / "config.txt", print_config(c));
    FlowResult run;
    try {
        run = run_flow(p.u0, p.f, c.tau, c.T, config_solver(c));
    } catch (const SolverError& e) {
        log << "solver failure: " << e.what() << "\n";
        return 1;
    }
    const auto& u = run.trajectory;
    if (c.checkpoint_every > 0)
        for (std::size_t k = 0; k <= u.steps(); k += static_cast<std::size_t>(c.checkpoint_every))
            detail::write_slice(dir, "restored_" + std::to_string(k), u[k]);
    detail::write_slice(dir, "restored", u[u.steps()]);
    {
        std::ostringstream o;
        write_trace_csv(o, run.trace);
        detail::write_file(dir / "trace.csv", o.str());
    }
    auto reports = flow_reports(run, p.f, c.gap_tolerance, c.model);
    if (p.deblur) {
        // sanity envelope, not a theorem: the restoration should not gain much variation
        const double tv_out = tv_value(p.tv, u[u.steps()], *p.kernel);
        const double tv_obs = tv_value(p.tv, p.u0, *p.kernel);
        reports.push_back(make_report("sanity_envelope_tv", 2.0 * tv_obs - tv_out, 0.0, "TV(u_T) <= 2 TV(observation)"));
    }
    {
        std::ostringstream o;
        write_report_csv(o, reports);
        detail::write_file(dir / "report.csv", o.str());
    }
    return detail::summarize(reports, log);
}

inline int cmd_denoise(const RunConfig& c, const std::string& out_dir, std::ostream& log)
{
    if (c.model.rfind("denoise", 0) != 0) throw ConfigError("denoise needs a denoise-* model");
    return cmd_flow(c, out_dir, log);
}

inline int cmd_deblur(const RunConfig& c, const std::string& out_dir, std::ostream& log)
{
    if (c.model.rfind("deblur", 0) != 0) throw ConfigError("deblur needs a deblur-* model");
    return cmd_flow(c, out_dir, log);
}

/// Minimizers for every eps, the eps-limit table and minimality/energy reports.
inline int cmd_wide(const RunConfig& c, const std::string& out_dir, std::ostream& log)
{
    if (c.eps.empty()) throw ConfigError("wide needs a nonempty eps list");
    for (std::size_t i = 1; i < c.eps.size(); ++i)
        if (!(c.eps[i] < c.eps[i - 1])) throw ConfigError("eps list must be strictly decreasing");
    const Problem p = make_problem(c);
    const auto dir = detail::prepare_dir(out_dir);
    detail::write_file(dir / "config.txt", print_config(c));
    std::vector<Trajectory> mins;
    std::vector<EpsilonRow> rows;
    try {
        rows = epsilon_limit_study(p.f, p.u0, c.tau, c.T, c.eps, {}, config_solver(c), &mins);
    } catch (const SolverError& e) {
        log << "solver failure: " << e.what() << "\n";
        return 1;
    }
    {
        std::ostringstream o;
        write_study_csv(o, rows);
        detail::write_file(dir / "study.csv", o.str());
    }
    std::vector<VerificationReport> reports;
    for (std::size_t i = 0; i < mins.size(); ++i) {
        std::ostringstream o;
        write_trajectory_csv(o, mins[i]);
        detail::write_file(dir / ("wide_eps_" + std::to_string(i) + ".csv"), o.str());
        const WideProblem wp(p.f, p.u0, c.eps[i], c.tau, c.T);
        char label[32];
        std::snprintf(label, sizeof label, "eps=%g", c.eps[i]);
        const std::string inst = label;
        const auto b = wide_energy_bounds(wp, mins[i]);
        reports.push_back(make_report("wide_kinetic", b.kinetic_slack, 0.05, inst));
        reports.push_back(make_report("wide_holder", b.holder_slack, 0.05, inst));
        reports.push_back(make_report("wide_energy", b.energy_slack, 0.05, inst));
        reports.push_back(make_report("wide_converged", rows[i].converged ? 0.0 : -1.0, 0.0, inst));
        if (wp.steps() >= 4)
            for (auto& r : wide_minimality_reports(wp, mins[i])) {
                r.instance = inst + ": " + r.instance;
                reports.push_back(std::move(r));
            }
    }
    double mono = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < rows.size(); ++i) mono = std::min(mono, rows[i - 1].discrepancy - rows[i].discrepancy);
    if (rows.size() > 1) reports.push_back(make_report("eps_limit_monotone", mono, 0.0, "discrepancy decreasing in eps"));
    {
        std::ostringstream o;
        write_report_csv(o, reports);
        detail::write_file(dir / "report.csv", o.str());
    }
    return detail::summarize(reports, log);
}

/* Full verification: the flow reports plus contraction against a run from a
 * second initial value, localization on the middle third, and parabolic
 * minimality against random compact perturbations. */
inline int cmd_verify(const RunConfig& c, const std::string& out_dir, std::ostream& log)
{
    const Problem p = make_problem(c);
    const auto dir = detail::prepare_dir(out_dir);
    detail::write_file(dir / "config.txt", print_config(c));
    const SolverParams sp = config_solver(c);
    FlowResult run, other;
    try {
        run = run_flow(p.u0, p.f, c.tau, c.T, sp);
        std::vector<double> w(p.u0.interior().begin(), p.u0.interior().end());
        for (double& x : w) x *= 0.5;
        other = run_flow(p.u0.with_interior(std::move(w)), p.f, c.tau, c.T, sp);
    } catch (const SolverError& e) {
        log << "solver failure: " << e.what() << "\n";
        return 1;
    }
    const auto& u = run.trajectory;
    auto reports = flow_reports(run, p.f, c.gap_tolerance, c.model);
    double con = std::numeric_limits<double>::infinity();
    for (double s : contraction_check(u, other.trajectory)) con = std::min(con, s);
    reports.push_back(make_report("contraction", con, 1e-8, "u0 vs u0/2"));
    const double f0 = p.f(u[0]);
    const double tol = vi_tolerance(c.gap_tolerance, u, f0);
    if (u.steps() >= 3) {
        const std::size_t K = u.steps();
        for (auto& r : localization_check(u, u.time(K / 3), u.time(2 * K / 3), p.f, tol)) reports.push_back(std::move(r));
    }
    if (u.steps() >= 4) {
        double scale = 0.0;
        for (double x : p.u0.interior()) scale = std::max(scale, std::abs(x));
        for (std::uint64_t s = 1; s <= 10; ++s)
            reports.push_back(make_report("parabolic_min", parabolic_min_slack(u, compact_bump(u, 0.1 * scale, s), p.f),
                                          tol, "random bump " + std::to_string(s)));
    }
    {
        std::ostringstream o;
        write_trace_csv(o, run.trace);
        detail::write_file(dir / "trace.csv", o.str());
        std::ostringstream r;
        write_report_csv(r, reports);
        detail::write_file(dir / "report.csv", r.str());
    }
    return detail::summarize(reports, log);
}

} // namespace fracflow

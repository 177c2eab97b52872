// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "fracflow/cli.hpp"
#include "fracflow/flow_solver.hpp"
#include "fracflow/mollify.hpp"
#include "fracflow/verify.hpp"
#include "fracflow/wide.hpp"

using namespace fracflow;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0)
{
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

double worst_slack(const std::vector<VerificationReport>& reps, const std::string& prefix, bool* pass)
{
    double w = std::numeric_limits<double>::infinity();
    for (const auto& r : reps)
        if (r.check.rfind(prefix, 0) == 0) {
            w = std::min(w, r.slack + r.tolerance);
            *pass = *pass && r.pass;
        }
    return w;
}

// the 32x32 noisy disk of the dissipation criterion
RunConfig disk_config(const std::string& model)
{
    RunConfig c;
    c.model = model;
    c.size = 32;
    c.alpha = 0.5;
    c.rho = 4.0;
    c.kappa = 1.0;
    c.tau = 0.01;
    c.T = 0.5;
    c.noise = 0.1;
    c.seed = 1;
    return c;
}

struct Run {
    Problem p;
    FlowResult flow;
    double gap;
};

Run flow_from(const RunConfig& c)
{
    Run r{make_problem(c), {}, c.gap_tolerance};
    r.flow = run_flow(r.p.u0, r.p.f, c.tau, c.T, config_solver(c));
    return r;
}

struct Sine {
    std::shared_ptr<const DiscreteDomain> dom;
    GridFunction u0;
    Functional f;
};

// 1D sine on (0,1), Gagliardo TV with replicated exterior, L2 fidelity
Sine sine_instance(int n, double kappa)
{
    auto dom = make_domain(1, {n}, 1.0 / n, 4.0 / n);
    auto k = std::make_shared<const NonlocalKernel>(dom, 0.5, 4.0 / n);
    auto u0 = make_datum(dom, sine_profile(*dom), ExteriorMode::Prescribed);
    auto f = Functional::denoise(TvVariant::Gagliardo, k, RegressionTerm::l2(u0, kappa));
    return {dom, u0, f};
}

Outcome duality_oracle()
{
    std::mt19937_64 rng(101);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    double worst = 0.0;
    std::size_t max_pairs = 0;
    int count = 0;
    for (int t = 0; t < 60; ++t) {
        const double alpha = std::array{0.3, 0.5, 0.8}[t % 3];
        const int n = 3 + t % 6;
        const double rho = 1.0 + 0.5 * (t % 2);
        auto dom = make_domain(1, {n}, 0.5, rho);
        const NonlocalKernel k(dom, alpha, rho);
        max_pairs = std::max(max_pairs, k.pairs().size());
        std::vector<double> in(dom->interior_count()), ex(dom->collar_count());
        for (double& x : in) x = uni(rng);
        for (double& x : ex) x = uni(rng);
        const auto g = GridFunction::prescribed(dom, in, ex);
        const auto r = GridFunction::zero_extended(dom, in);
        worst = std::max(worst, std::abs(gagliardo_tv(g, k) - dual_tv_oracle(g, k, TvVariant::Gagliardo)));
        worst = std::max(worst, std::abs(riesz_tv(r, k) - dual_tv_oracle(r, k, TvVariant::Riesz)));
        ++count;
    }
    return {worst <= 1e-9 && max_pairs <= 64,
            fmt("%.0f instances, <= %.0f pairs, max |primal - dual| = %.2e (tol 1e-9)", count,
                static_cast<double>(max_pairs), worst)};
}

Outcome prox_optimality()
{
    std::mt19937_64 rng(202);
    std::uniform_real_distribution<double> uni(-2.0, 2.0);
    auto dom = make_domain(1, {100}, 1.0, 0.0);
    std::vector<double> d(100);
    for (double& x : d) x = uni(rng);
    const auto datum = GridFunction::zero_extended(dom, d);
    double worst = 0.0;
    for (const auto& r : {RegressionTerm::l2(datum, 3.0), RegressionTerm::l1(datum, 2.0),
                          RegressionTerm::quantile(datum, 1.5, 0.3), RegressionTerm::huber(datum, 2.5, 0.2)})
        for (std::size_t i = 0; i < 100; ++i) {
            const double w = uni(rng), s = 0.01 + std::abs(uni(rng));
            const double v = r.prox(i, w, s);
            const double g = (w - v) / s;
            const auto [lo, hi] = r.subdifferential(i, v);
            worst = std::max({worst, lo - g, g - hi});
        }
    auto d2 = make_domain(2, {32, 32}, 1.0, 0.0);
    std::vector<double> obs(1024), w(1024);
    for (double& x : obs) x = uni(rng);
    for (double& x : w) x = uni(rng);
    const auto res = deblur_data_prox_solve(BlurOperator::gaussian(2, 1.0), 100.0, GridFunction::zero_extended(d2, obs),
                                            w, 0.05);
    return {worst <= 1e-10 && res.relative_residual <= 1e-10,
            fmt("4 fidelities x 100 draws: worst violation %.2e (tol 1e-10); CG relative residual %.2e (tol 1e-10)",
                worst, res.relative_residual)};
}

Outcome dissipation(const Run& r)
{
    const auto reps = flow_reports(r.flow, r.p.f, r.gap, "disk32");
    bool ok = true;
    const double mono = worst_slack(reps, "energy_nonincreasing", &ok);
    const double avg = worst_slack(reps, "time_averaged_energy", &ok);
    return {ok, fmt("per-node energy drop min %.2e (>= -2 gap_tol), time-averaged slack %.3e (>= -1e-6)",
                    mono - 2.0 * r.gap, avg - 1e-6)};
}

Outcome kinetic(const Run& r)
{
    const auto d = dissipation_report(r.flow.trajectory, r.p.f);
    Outcome o{d.kinetic <= 2.0 * d.f0, fmt("disk32: kinetic/F0 = %.4f (<= 2)", d.kinetic_ratio)};
    const auto s = sine_instance(32, 10.0);
    std::vector<double> ratios;
    for (double tau : {1.0 / 16, 1.0 / 32, 1.0 / 64, 1.0 / 128}) {
        SolverParams sp;
        sp.gap_tolerance = 1e-10;
        const auto run = run_flow(s.u0, s.f, tau, 0.5, sp);
        ratios.push_back(dissipation_report(run.trajectory, s.f).kinetic_ratio);
    }
    bool settling = true;
    for (std::size_t i = 0; i < ratios.size(); ++i) {
        o.pass = o.pass && ratios[i] <= 2.0;
        if (i >= 2) settling = settling && std::abs(ratios[i] - ratios[i - 1]) < std::abs(ratios[i - 1] - ratios[i - 2]);
    }
    o.pass = o.pass && settling && ratios.back() <= 1.1;
    o.detail += "; 1D sine, tau = 1/16..1/128: ratios";
    for (double x : ratios) o.detail += fmt(" %.4f", x);
    o.detail += settling ? " (differences shrink, final <= 1.1)" : " (differences do not shrink)";
    return o;
}

Outcome holder(const Run& r)
{
    const auto d = dissipation_report(r.flow.trajectory, r.p.f);
    const double bound = 1.001 * std::sqrt(2.0 * d.f0);
    return {d.holder_ratio <= bound, fmt("max |u(t2)-u(t1)|/sqrt(t2-t1) = %.5f <= %.5f", d.holder_ratio, bound)};
}

Outcome variational_inequality(const Run& r)
{
    bool ok = true;
    const double a = worst_slack(flow_reports(r.flow, r.p.f, r.gap, "disk32"), "vi/", &ok);
    const auto s = sine_instance(64, 10.0);
    SolverParams sp;
    sp.gap_tolerance = 1e-10;
    const auto run = run_flow(s.u0, s.f, 1.0 / 64, 0.25, sp);
    const double tol = vi_tolerance(sp.gap_tolerance, run.trajectory, s.f(s.u0));
    std::size_t maps = 0;
    double b = std::numeric_limits<double>::infinity();
    for (const auto& m : comparison_library(run.trajectory, s.f)) {
        const double sl = vi_slack(run.trajectory, m.v, s.f);
        b = std::min(b, sl + tol);
        ok = ok && sl >= -tol;
        ++maps;
    }
    return {ok, fmt("min slack + tol: disk32 Riesz %.3e, 1D Gagliardo n=64 %.3e (%.0f maps each)", a, b,
                    static_cast<double>(maps))};
}

Outcome uniqueness()
{
    const auto s = sine_instance(64, 10.0);
    SolverParams a, b;
    a.gap_tolerance = b.gap_tolerance = 1e-12;
    b.seed = 4242; // random primal/dual start
    b.warm_start = false;
    const auto ra = run_flow(s.u0, s.f, 1.0 / 64, 0.25, a);
    const auto rb = run_flow(s.u0, s.f, 1.0 / 64, 0.25, b);
    double sup = 0.0;
    for (std::size_t k = 0; k <= ra.trajectory.steps(); ++k)
        sup = std::max(sup, std::sqrt(l2_dist_sq(ra.trajectory[k], rb.trajectory[k])));
    std::vector<double> w(s.u0.interior().begin(), s.u0.interior().end());
    for (double& x : w) x = 0.5 * x + 0.1;
    const auto rc = run_flow(s.u0.with_interior(w), s.f, 1.0 / 64, 0.25, a);
    double con = std::numeric_limits<double>::infinity();
    for (double x : contraction_check(ra.trajectory, rc.trajectory)) con = std::min(con, x);
    return {sup <= 1e-6 && con >= -1e-8,
            fmt("sup-L2 distance between solver starts %.2e (<= 1e-6); min contraction slack %.2e (>= -1e-8)", sup, con)};
}

Outcome wide_construction()
{
    const auto s = sine_instance(32, 10.0);
    const std::vector<double> eps{0.2, 0.1, 0.05};
    const double tau = 1.0 / 64, T = 0.5;
    std::vector<Trajectory> mins;
    const auto rows = epsilon_limit_study(s.f, s.u0, tau, T, eps, {}, {}, &mins);
    Outcome o;
    double worst_bound = 1.0, worst_min = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < eps.size(); ++i) {
        const WideProblem p(s.f, s.u0, eps[i], tau, T);
        const auto b = wide_energy_bounds(p, mins[i]);
        o.pass = o.pass && b.pass && rows[i].converged;
        worst_bound = std::min({worst_bound, b.kinetic_slack, b.holder_slack, b.energy_slack});
        for (const auto& r : wide_minimality_reports(p, mins[i], 1e-6)) {
            worst_min = std::min(worst_min, r.slack);
            o.pass = o.pass && r.pass;
        }
    }
    const double limit = 0.05 * std::sqrt(l2_norm_sq(s.u0));
    for (std::size_t i = 1; i < rows.size(); ++i) o.pass = o.pass && rows[i].discrepancy < rows[i - 1].discrepancy;
    o.pass = o.pass && rows.back().discrepancy <= limit;
    o.detail = fmt("min bound slack %.4f (>= -0.05), min minimality residual %.2e (>= -1e-6); discrepancies", worst_bound,
                   worst_min);
    for (const auto& r : rows) o.detail += fmt(" %.4f", r.discrepancy);
    o.detail += fmt(" (final <= %.4f)", limit);
    return o;
}

Outcome mollifier()
{
    std::mt19937_64 rng(909);
    std::normal_distribution<double> g;
    double ode = 0.0, comm = 0.0;
    for (int t = 0; t < 20; ++t) {
        auto dom = make_domain(t % 2 ? 2 : 1, t % 2 ? std::vector<int>{5, 5} : std::vector<int>{12}, 0.25, 0.5);
        auto k = std::make_shared<const NonlocalKernel>(dom, 0.5, 0.5);
        std::vector<GridFunction> slices;
        for (int j = 0; j <= 10; ++j) {
            std::vector<double> v(dom->interior_count());
            for (double& x : v) x = g(rng);
            slices.push_back(GridFunction::zero_extended(dom, v));
        }
        const Trajectory traj(0.05, slices);
        const MollifierConfig cfg{0.05 + 0.02 * t, slices[0]};
        ode = std::max(ode, mollifier_ode_residual(traj, cfg));
        for (auto v : {TvVariant::Gagliardo, TvVariant::Riesz})
            for (double s : tv_commutation_check(traj, cfg, v, *k)) comm = std::min(comm, s);
        const auto f = Functional::denoise(TvVariant::Riesz, k, RegressionTerm::huber(slices[3], 2.0, 0.1));
        for (double s : functional_commutation_check(traj, cfg, f)) comm = std::min(comm, s);
    }
    auto dom = make_domain(1, {16}, 1.0 / 16, 0.0);
    std::vector<GridFunction> smooth;
    const double T = 1.0;
    for (int j = 0; j <= 64; ++j) {
        std::vector<double> v(16);
        for (int i = 0; i < 16; ++i) v[i] = std::cos(3.0 * j / 64.0 + i / 16.0);
        smooth.push_back(GridFunction::zero_extended(dom, v));
    }
    const Trajectory traj(T / 64, smooth);
    std::vector<double> dist;
    for (double h : {T / 4, T / 8, T / 16}) dist.push_back(mollifier_sup_distance(traj, {h, smooth[0]}));
    const bool mono = dist[1] < dist[0] && dist[2] < dist[1];
    return {ode <= 1e-12 && comm >= -1e-10 && mono,
            fmt("ODE residual %.2e (<= 1e-12), min commutation slack %.2e (>= -1e-10), ", ode, comm) +
                fmt("sup distance %.4f > %.4f > %.4f", dist[0], dist[1], dist[2])};
}

Outcome initial_condition(const Run& r)
{
    double w = std::numeric_limits<double>::infinity();
    for (double s : initial_condition_check(r.flow.trajectory, r.p.f)) w = std::min(w, s);
    return {w >= -1e-8, fmt("min (k tau F(u0) - |u^k - u0|^2/2) over k <= K/4: %.4e (>= -1e-8)", w)};
}

Outcome parabolic(const Run& riesz, const Run& gag)
{
    Outcome o;
    for (const auto& [name, r] : {std::pair{"Riesz", &riesz}, std::pair{"Gagliardo", &gag}}) {
        const auto& u = r->flow.trajectory;
        const double tol = vi_tolerance(r->gap, u, r->p.f(u[0]));
        double scale = 0.0;
        for (double x : r->p.u0.interior()) scale = std::max(scale, std::abs(x));
        double w = std::numeric_limits<double>::infinity();
        for (std::uint64_t s = 1; s <= 10; ++s) w = std::min(w, parabolic_min_slack(u, compact_bump(u, 0.1 * scale, s), r->p.f));
        o.pass = o.pass && w >= -tol;
        o.detail += std::string(o.detail.empty() ? "" : ", ") + name + fmt(" min slack %.3e (tol %.2e)", w, tol);
    }
    o.detail = "10 random bumps each; " + o.detail;
    return o;
}

Outcome deblurring()
{
    RunConfig c;
    c.model = "deblur-riesz";
    c.size = 32;
    c.alpha = 0.5;
    c.rho = 4.0;
    c.kappa = 1000.0;
    c.blur_sigma = 1.0;
    // the noise must sit well below a tenth of |K u0 - u0| for a 10x residual drop to be meaningful
    c.noise = 0.001;
    c.tau = 0.1;
    c.T = 1.0;
    const auto r = flow_from(c);
    const auto& uT = r.flow.trajectory[r.flow.trajectory.steps()];
    const double before = blur_residual(r.p.f, r.p.u0), after = blur_residual(r.p.f, uT);
    const double tv_obs = riesz_tv(r.p.u0, *r.p.kernel), tv_out = riesz_tv(uT, *r.p.kernel);
    return {after <= 0.1 * before && tv_out <= 2.0 * tv_obs,
            fmt("|K u_T - u0| = %.4f vs |K u0 - u0| = %.4f (ratio %.3f <= 0.1); ", after, before, after / before) +
                fmt("sanity envelope (not a theorem): TV_R(u_T) = %.2f <= 2 x %.2f", tv_out, tv_obs)};
}

} // namespace

int main()
{
    const auto t0 = std::chrono::steady_clock::now();
    int failures = 0;
    const auto report = [&](int id, const char* name, const std::function<Outcome()>& fn) {
        const auto s = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - s).count();
        std::printf("%s criterion %2d %-24s %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), secs);
        std::fflush(stdout);
        failures += o.pass ? 0 : 1;
    };

    report(1, "duality_oracle", duality_oracle);
    report(2, "prox_optimality", prox_optimality);
    const Run riesz = flow_from(disk_config("denoise-riesz"));
    const Run gag = flow_from(disk_config("denoise-gagliardo"));
    report(3, "dissipation", [&] { return dissipation(riesz); });
    report(4, "kinetic_bound", [&] { return kinetic(riesz); });
    report(5, "holder_half", [&] { return holder(riesz); });
    report(6, "variational_inequality", [&] { return variational_inequality(riesz); });
    report(7, "uniqueness_contraction", uniqueness);
    report(8, "wide_construction", wide_construction);
    report(9, "mollifier_identities", mollifier);
    report(10, "initial_condition", [&] { return initial_condition(riesz); });
    report(11, "parabolic_minimizer", [&] { return parabolic(riesz, gag); });
    report(12, "deblurring", deblurring);

    const double total = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%d/12 criteria passed in %.1fs\n", 12 - failures, total);
    return failures == 0 ? 0 : 1;
}

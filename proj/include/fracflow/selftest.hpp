#pragma once

// Fast oracle/invariant suite behind `fracflow selftest`. Every check is a
// deterministic function of fixed seeds.

#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "cli.hpp"
#include "flow_solver.hpp"
#include "functionals.hpp"
#include "grid.hpp"
#include "mollify.hpp"
#include "nonlocal_ops.hpp"
#include "verify.hpp"

namespace fracflow {

struct SelftestOptions {
    bool corrupt_kernel_weight = false; // fault injection: perturb one Gagliardo weight
};

/// max relative deviation of the stored weights from h^{2N}/d^{N+alpha} and c h^N (x_i - x_j)/d^{N+alpha+1}.
inline double kernel_formula_error(const NonlocalKernel& k)
{
    const auto& d = k.domain();
    const double hn = d.cell_volume();
    const double s = d.dim() + k.alpha();
    double worst = 0.0;
    for (const auto& p : k.pairs()) {
        const auto xi = d.coord(p.i), xj = d.coord(p.j);
        const double dist = std::hypot(xi[0] - xj[0], xi[1] - xj[1]);
        const double w = hn * hn / std::pow(dist, s);
        worst = std::max(worst, std::abs(p.w - w) / w);
        const double rs = hn / std::pow(dist, s + 1.0);
        for (int a = 0; a < 2; ++a) {
            const double r = rs * (xi[a] - xj[a]);
            worst = std::max(worst, std::abs(p.r[a] - r) / (rs * dist));
        }
    }
    return worst;
}

inline std::vector<VerificationReport> run_selftest(const SelftestOptions& opt = {})
{
    std::vector<VerificationReport> out;
    std::mt19937_64 rng(20240611);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    const auto random_vec = [&](std::size_t n, double scale = 1.0) {
        std::vector<double> v(n);
        for (double& x : v) x = scale * uni(rng);
        return v;
    };

    // kernel weights and duality on small 1D instances
    {
        double formula = 0.0, dual_g = 0.0, dual_r = 0.0;
        for (int t = 0; t < 12; ++t) {
            const double alpha = std::array{0.3, 0.5, 0.8}[t % 3];
            auto dom = make_domain(1, {5 + t % 3}, 0.5, 1.0);
            auto k = std::make_shared<NonlocalKernel>(dom, alpha, 1.0);
            if (opt.corrupt_kernel_weight && t == 0) k->mutable_pairs()[0].w *= 1.5;
            formula = std::max(formula, kernel_formula_error(*k));
            const auto zin = random_vec(dom->interior_count());
            const auto g = GridFunction::prescribed(dom, zin, random_vec(dom->collar_count()));
            dual_g = std::max(dual_g, std::abs(gagliardo_tv(g, *k) - dual_tv_oracle(g, *k, TvVariant::Gagliardo)));
            const auto r = GridFunction::zero_extended(dom, zin);
            dual_r = std::max(dual_r, std::abs(riesz_tv(r, *k) - dual_tv_oracle(r, *k, TvVariant::Riesz)));
        }
        out.push_back(make_report("kernel_weight_formula", -formula, 1e-12, "1D, 12 kernels"));
        out.push_back(make_report("duality_gagliardo", -dual_g, 1e-9, "1D, 12 instances"));
        out.push_back(make_report("duality_riesz", -dual_r, 1e-9, "1D, 12 instances"));
    }

    // closed-form Gagliardo TV: indicator of node 0 on two nodes, zero exterior, h = 1, rho = 1
    {
        auto dom = make_domain(1, {2}, 1.0, 1.0);
        NonlocalKernel k(dom, 0.5, 1.0);
        if (opt.corrupt_kernel_weight) k.mutable_pairs()[0].w *= 1.5;
        const auto u = GridFunction::prescribed(dom, {1.0, 0.0}, std::vector<double>(dom->collar_count(), 0.0));
        out.push_back(make_report("gagliardo_closed_form", -std::abs(gagliardo_tv(u, k) - 4.0), 1e-12, "TV = 4"));
    }

    // prox optimality: (w - v)/s lies in the subdifferential at v
    {
        auto dom = make_domain(1, {50}, 1.0, 0.0);
        const auto datum = GridFunction::zero_extended(dom, random_vec(50));
        const std::vector<std::pair<std::string, RegressionTerm>> terms{
            {"l2", RegressionTerm::l2(datum, 3.0)},
            {"l1", RegressionTerm::l1(datum, 2.0)},
            {"quantile", RegressionTerm::quantile(datum, 1.5, 0.3)},
            {"huber", RegressionTerm::huber(datum, 2.5, 0.2)}};
        for (const auto& [name, r] : terms) {
            double worst = 0.0;
            for (std::size_t i = 0; i < 50; ++i) {
                const double w = 2.0 * uni(rng), s = 0.05 + std::abs(uni(rng));
                const double v = r.prox(i, w, s);
                const double g = (w - v) / s;
                const auto [lo, hi] = r.subdifferential(i, v);
                worst = std::max({worst, lo - g, g - hi});
            }
            out.push_back(make_report("prox_optimality_" + name, -worst, 1e-10, "50 draws"));
        }
    }

    // CG deblur prox
    {
        auto dom = make_domain(2, {12, 12}, 1.0, 1.0);
        const auto blur = BlurOperator::gaussian(2, 1.0);
        const auto u0 = GridFunction::zero_extended(dom, random_vec(144));
        const auto w = random_vec(144);
        const auto res = deblur_data_prox_solve(blur, 4.0, u0, w, 0.7);
        out.push_back(make_report("cg_relative_residual", 1e-10 - res.relative_residual, 0.0, "12x12, sigma=1"));
    }

    // mollifier identities on a random trajectory
    {
        auto dom = make_domain(1, {8}, 0.25, 0.5);
        NonlocalKernel k(dom, 0.5, 0.5);
        std::vector<GridFunction> slices;
        for (int s = 0; s <= 8; ++s) slices.push_back(GridFunction::zero_extended(dom, random_vec(8)));
        const Trajectory traj(0.05, slices);
        const MollifierConfig cfg{0.1, slices[0]};
        out.push_back(make_report("mollifier_ode_residual", -mollifier_ode_residual(traj, cfg), 1e-12, "exact recursion"));
        double worst = 0.0;
        for (double s : tv_commutation_check(traj, cfg, TvVariant::Riesz, k)) worst = std::min(worst, s);
        out.push_back(make_report("mollifier_tv_commutation", worst, 1e-10, "Riesz"));
    }

    // one-node quadratic: the step is (u + tau kappa f) / (1 + tau kappa)
    {
        auto dom = make_domain(1, {1}, 1.0, 0.0);
        const auto f = Functional::fidelity_only(RegressionTerm::l2(GridFunction::zero_extended(dom, {0.3}), 2.0));
        const auto step = prox_step(GridFunction::zero_extended(dom, {1.0}), f, 0.25);
        const double exact = (1.0 + 0.25 * 2.0 * 0.3) / (1.0 + 0.25 * 2.0);
        out.push_back(make_report("quadratic_step_closed_form", -std::abs(step.u[0] - exact), 1e-12, "1 node"));
    }

    // small Gagliardo flow: cancellations and the variational inequality
    {
        auto dom = make_domain(1, {10}, 0.1, 0.2);
        auto k = std::make_shared<const NonlocalKernel>(dom, 0.5, 0.2);
        const auto u0 = make_datum(dom, sine_profile(*dom), ExteriorMode::Prescribed);
        const auto f = Functional::denoise(TvVariant::Gagliardo, k, RegressionTerm::l2(u0, 10.0));
        SolverParams sp;
        sp.gap_tolerance = 1e-10;
        const auto run = run_flow(u0, f, 0.02, 0.16, sp);
        const auto& u = run.trajectory;
        out.push_back(make_report("vi_self_cancellation", -std::abs(vi_slack(u, u, f)), 1e-12, "v = u"));
        const double tol = vi_tolerance(sp.gap_tolerance, u, f(u0));
        double worst = std::numeric_limits<double>::infinity();
        for (const auto& m : comparison_library(u, f)) worst = std::min(worst, vi_slack(u, m.v, f));
        out.push_back(make_report("vi_comparison_library", worst, tol, "1D Gagliardo flow"));
    }
    return out;
}

} // namespace fracflow

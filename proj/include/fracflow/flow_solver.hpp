#pragma once

// Minimizing movements: each step solves
//     min_v F(v) + |v - u_prev|^2 / (2 tau)
// with an accelerated primal-dual iteration on the saddle form
//     min_v max_{|p_g| <= 1} <A v + b, p> + g(v),
// g(v) = fidelity(v) + |v - u_prev|^2/(2 tau), all divided by h^N internally.
// The accuracy certificate is the duality gap divided by |Omega| = n h^N (the
// "normalized gap"), so one tolerance means the same thing on every grid. The accelerated
// step schedule is restarted whenever the gap has dropped by restart_factor,
// which on these piecewise-linear problems roughly halves the iteration count.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "functionals.hpp"
#include "grid.hpp"
#include "nonlocal_ops.hpp"
#include "sparse.hpp"

namespace fracflow {

struct SolverParams {
    double primal_step = 0.0; // 0 selects 1/L
    double dual_step = 0.0;   // 0 selects 1/(primal_step L^2)
    int max_iterations = 50000;
    double gap_tolerance = 1e-8; // on the normalized gap
    double operator_norm = 0.0;  // 0 selects the cached power-iteration estimate
    int check_every = 10;
    double restart_factor = 0.01; // reset the step schedule once the gap drops by this factor
    std::uint64_t seed = 0; // nonzero: random primal/dual start
    bool warm_start = true; // run_flow: reuse the previous step's dual
};

struct StepCertificate {
    double primal = 0.0; // step objective F(v) + |v - u_prev|^2/(2 tau)
    double dual = 0.0;
    double gap = 0.0; // (primal - dual) / |Omega|
    int iterations = 0;
    bool converged = true;
};

struct StepResult {
    GridFunction u;
    StepCertificate certificate;
    std::vector<double> dual;
};

class SolverError : public std::runtime_error {
public:
    SolverError(const std::string& what, std::size_t step, StepCertificate cert)
        : std::runtime_error(format(what, step, cert)), step_(step), cert_(cert)
    {
    }
    std::size_t step() const { return step_; }
    const StepCertificate& certificate() const { return cert_; }

private:
    static std::string format(const std::string& what, std::size_t step, const StepCertificate& c)
    {
        char buf[160];
        std::snprintf(buf, sizeof buf, " at step %zu (normalized gap %.3e after %d iterations)", step,
                      c.gap, c.iterations);
        return what + buf;
    }

    std::size_t step_;
    StepCertificate cert_;
};

/// Norm of the TV difference operator over the interior unknowns.
inline double operator_norm(const TvOperator& op) { return spectral_norm_estimate(op.matrix); }

inline double operator_norm(const NonlocalKernel& k, TvVariant variant, const GridFunction& exterior)
{
    return operator_norm(tv_operator(variant, k, exterior));
}

namespace detail {

inline void project_dual(std::vector<double>& p, int group)
{
    if (group == 1) {
        for (double& x : p) x = std::clamp(x, -1.0, 1.0);
        return;
    }
    for (std::size_t g = 0; g + 1 < p.size(); g += 2) {
        const double m = std::hypot(p[g], p[g + 1]);
        if (m > 1.0) {
            p[g] /= m;
            p[g + 1] /= m;
        }
    }
}

/// The per-node step objective and its pieces.
struct StepProblem {
    const Functional& f;
    const TvOperator& op;
    std::span<const double> u_prev;
    double tau;

    double g(std::span<const double> v) const
    {
        double q = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) q += (v[i] - u_prev[i]) * (v[i] - u_prev[i]);
        return f.fidelity_per_node(v) + 0.5 * q / tau;
    }

    double primal(std::span<const double> v) const { return g(v) + op.value(v); }

    /// argmin_v s*g(v) + |v - y|^2/2.
    std::vector<double> prox_g(std::span<const double> y, double s, std::span<const double> guess) const
    {
        const double c = 1.0 + s / tau;
        std::vector<double> w(y.size());
        for (std::size_t i = 0; i < y.size(); ++i) w[i] = (y[i] + s * u_prev[i] / tau) / c;
        return f.prox_fidelity(w, s / c, guess);
    }

    /// Dual value at p, plus the primal point it induces.
    double dual(std::span<const double> p, std::vector<double>& vp, std::span<const double> guess) const
    {
        const auto atp = op.matrix.apply_transpose(p);
        std::vector<double> y(u_prev.size());
        for (std::size_t i = 0; i < y.size(); ++i) y[i] = u_prev[i] - tau * atp[i];
        vp = f.prox_fidelity(y, tau, guess);
        double s = g(vp);
        for (std::size_t i = 0; i < vp.size(); ++i) s += atp[i] * vp[i];
        for (std::size_t r = 0; r < p.size(); ++r) s += op.offset[r] * p[r];
        return s;
    }
};

} // namespace detail

/* One minimizing-movement step. The returned iterate is the best of
 * {primal iterate, dual-induced point, u_prev} by step objective, so the step
 * never increases F(v) + |v - u_prev|^2/(2 tau) above F(u_prev). */
inline StepResult prox_step(const GridFunction& u_prev, const Functional& f, double tau,
                            const SolverParams& params = {},
                            std::span<const double> warm_dual = {})
{
    if (!(tau > 0.0) || !std::isfinite(tau)) throw std::invalid_argument("time step must be positive");
    f.check_mode(u_prev);
    if (params.max_iterations < 1 || params.check_every < 1 || !(params.gap_tolerance > 0.0))
        throw std::invalid_argument("invalid solver parameters");

    const auto op_ptr = f.scaled_tv_operator(u_prev);
    const TvOperator& op = *op_ptr;
    const auto u0 = u_prev.interior();
    const std::size_t n = u0.size();
    detail::StepProblem prob{f, op, u0, tau};
    StepResult res;

    const double hn = u_prev.domain().cell_volume();
    const double tol = params.gap_tolerance * static_cast<double>(n);
    const auto to_energy_units = [&](StepCertificate c) {
        c.primal *= hn;
        c.dual *= hn;
        c.gap /= static_cast<double>(n);
        return c;
    };

    const double big_l = params.operator_norm > 0.0 ? params.operator_norm : op.norm;
    if (op.matrix.rows() == 0 || big_l == 0.0) {
        auto v = f.prox_fidelity(u0, tau, u0);
        const double pv = prob.primal(v);
        res.u = u_prev.with_interior(std::move(v));
        res.certificate = to_energy_units({pv, pv, 0.0, 0, true});
        return res;
    }

    const std::size_t m = op.matrix.rows();
    std::vector<double> x(u0.begin(), u0.end());
    std::vector<double> p(m, 0.0);
    if (params.seed != 0) {
        std::mt19937_64 rng(params.seed);
        std::uniform_real_distribution<double> uni(-1.0, 1.0);
        for (auto& v : x) v += uni(rng);
        for (auto& v : p) v = uni(rng);
        detail::project_dual(p, op.group);
    } else if (warm_dual.size() == m) {
        p.assign(warm_dual.begin(), warm_dual.end());
        detail::project_dual(p, op.group);
    }

    const double sp0 = params.primal_step > 0.0 ? params.primal_step : 1.0 / big_l;
    const double sd0 = params.dual_step > 0.0 ? params.dual_step : 1.0 / (sp0 * big_l * big_l);
    double sp = sp0, sd = sd0;
    double restart_gap = std::numeric_limits<double>::infinity();
    std::vector<double> pavg(m, 0.0);
    double wsum = 0.0;
    const double gamma = 1.0 / tau;

    std::vector<double> xbar = x, ax(m), atp(n), vp;
    std::vector<double> best(u0.begin(), u0.end());
    double best_val = prob.primal(best);
    StepCertificate cert{best_val, -std::numeric_limits<double>::infinity(),
                         std::numeric_limits<double>::infinity(), 0, false};

    const auto consider = [&](const std::vector<double>& v) {
        const double val = prob.primal(v);
        if (val < best_val) {
            best_val = val;
            best = v;
        }
    };

    for (int it = 1; it <= params.max_iterations; ++it) {
        op.matrix.apply(xbar, ax);
        for (std::size_t r = 0; r < m; ++r) p[r] += sd * (ax[r] + op.offset[r]);
        detail::project_dual(p, op.group);
        wsum += sd;
        for (std::size_t r = 0; r < m; ++r) pavg[r] += sd / wsum * (p[r] - pavg[r]);
        op.matrix.apply_transpose(p, atp);
        std::vector<double> y(n);
        for (std::size_t i = 0; i < n; ++i) y[i] = x[i] - sp * atp[i];
        auto xn = prob.prox_g(y, sp, x);
        const double theta = 1.0 / std::sqrt(1.0 + 2.0 * gamma * sp);
        sp *= theta;
        sd /= theta;
        for (std::size_t i = 0; i < n; ++i) xbar[i] = xn[i] + theta * (xn[i] - x[i]);
        x = std::move(xn);

        if (it % params.check_every == 0 || it == params.max_iterations) {
            const double d = prob.dual(p, vp, x);
            consider(x);
            consider(vp);
            const double da = prob.dual(pavg, vp, x);
            consider(vp);
            cert.iterations = it;
            cert.dual = std::max({cert.dual, d, da});
            cert.primal = best_val;
            cert.gap = best_val - cert.dual;
            if (cert.gap <= tol) {
                cert.converged = true;
                break;
            }
            const double cur = best_val - d;
            if (cur <= params.restart_factor * restart_gap) {
                std::fill(pavg.begin(), pavg.end(), 0.0);
                wsum = 0.0;
                restart_gap = cur;
                sp = sp0;
                sd = sd0;
                xbar = x;
            } else if (!std::isfinite(restart_gap)) {
                restart_gap = cur;
            }
        }
    }
    res.u = u_prev.with_interior(std::move(best));
    res.certificate = to_energy_units(cert);
    res.dual = std::move(p);
    return res;
}

struct EnergyRow {
    std::size_t k;
    double t;
    double energy;
    double tv;
    double fidelity;
    double step_norm_sq; // |u^k - u^{k-1}|^2 / tau
    double gap;
};

struct FlowResult {
    Trajectory trajectory;
    std::vector<EnergyRow> trace;
    std::vector<StepCertificate> certificates;
};

inline std::size_t step_count(double tau, double horizon)
{
    if (!(tau > 0.0) || !(horizon > 0.0)) throw std::invalid_argument("tau and T must be positive");
    const double k = horizon / tau;
    const double r = std::round(k);
    if (r < 1.0 || std::abs(k - r) > 1e-9 * std::max(1.0, k))
        throw std::invalid_argument("horizon must be a positive integer multiple of tau");
    return static_cast<std::size_t>(r);
}

inline EnergyRow energy_row(const Functional& f, std::size_t k, double t, const GridFunction& u,
                            const GridFunction* prev, double tau, double gap)
{
    const double tv = f.tv_term(u);
    const double fid = f.fidelity_term(u);
    return {k, t, tv + fid, tv, fid, prev ? l2_dist_sq(u, *prev) / tau : 0.0, gap};
}

/// Implicit Euler flow from u0 up to T = K tau.
inline FlowResult run_flow(const GridFunction& u0, const Functional& f, double tau, double horizon,
                           const SolverParams& params = {}, bool throw_on_failure = true)
{
    const std::size_t steps = step_count(tau, horizon);
    f.check_mode(u0);
    std::vector<GridFunction> slices;
    slices.reserve(steps + 1);
    slices.push_back(u0);
    FlowResult out;
    out.trace.push_back(energy_row(f, 0, 0.0, u0, nullptr, tau, 0.0));
    std::vector<double> dual;
    for (std::size_t k = 0; k < steps; ++k) {
        SolverParams pk = params;
        if (params.seed != 0) pk.seed = params.seed + 7919 * k;
        auto step = prox_step(slices.back(), f, tau, pk,
                              params.warm_start ? std::span<const double>(dual) : std::span<const double>());
        if (!step.certificate.converged && throw_on_failure)
            throw SolverError("step solver did not reach the gap tolerance", k + 1, step.certificate);
        out.certificates.push_back(step.certificate);
        dual = std::move(step.dual);
        out.trace.push_back(energy_row(f, k + 1, tau * (k + 1), step.u, &slices.back(), tau,
                                       step.certificate.gap));
        slices.push_back(std::move(step.u));
    }
    out.trajectory = Trajectory(tau, std::move(slices));
    return out;
}

} // namespace fracflow

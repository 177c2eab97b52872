#pragma once

// Weighted inertia-dissipation-energy (WIDE) construction:
//     W(u) = sum_k tau w_{k+1/2} ( |D_k u|^2 / 2 + (F(u^k) + F(u^{k+1})) / (2 eps) ),
// w_{k+1/2} = exp(-(t_k + tau/2)/eps), D_k u = (u^{k+1} - u^k)/tau, u^0 = u0 pinned.
//
// Minimized by block-coordinate descent over the slices. For 1 <= j < K the
// slice-j part of W is, up to a constant,
//     c_j ( F(v) + eps/tau^2 |v - m_j|^2 ),  m_j = (w_- u^{j-1} + w_+ u^{j+1})/(w_- + w_+),
// and for j = K the same with m_K = u^{K-1}; so every block update is one
// minimizing-movement step of length tau^2/(2 eps) from m_j.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "flow_solver.hpp"
#include "functionals.hpp"
#include "grid.hpp"

namespace fracflow {

class WideProblem {
public:
    WideProblem(Functional f, GridFunction u0, double eps, double tau, double horizon)
        : f_(std::move(f)), u0_(std::move(u0)), eps_(eps), tau_(tau), steps_(step_count(tau, horizon))
    {
        if (!(eps > 0.0 && eps <= 1.0)) throw std::invalid_argument("eps must lie in (0,1]");
        f_.check_mode(u0_);
    }

    const Functional& functional() const { return f_; }
    const GridFunction& initial() const { return u0_; }
    double eps() const { return eps_; }
    double tau() const { return tau_; }
    std::size_t steps() const { return steps_; }
    double horizon() const { return tau_ * static_cast<double>(steps_); }
    double time(std::size_t k) const { return tau_ * static_cast<double>(k); }

    /// exp(-t_k / eps)
    double weight(std::size_t k) const { return std::exp(-time(k) / eps_); }
    /// exp(-(t_k + tau/2) / eps)
    double mid_weight(std::size_t k) const { return std::exp(-(time(k) + 0.5 * tau_) / eps_); }

    void check(const Trajectory& traj) const
    {
        require_same_domain(traj.domain(), u0_.domain());
        if (traj.steps() != steps_ || std::abs(traj.tau() - tau_) > 1e-14 * tau_)
            throw std::invalid_argument("trajectory time grid does not match the problem");
        const auto a = traj[0].interior();
        const auto b = u0_.interior();
        if (!std::equal(a.begin(), a.end(), b.begin()) || !traj[0].same_exterior(u0_))
            throw std::invalid_argument("slice 0 must equal the initial datum");
    }

private:
    Functional f_;
    GridFunction u0_;
    double eps_;
    double tau_;
    std::size_t steps_;
};

/// W(traj) with precomputed slice energies.
inline double eval_wide(const WideProblem& p, const Trajectory& traj, const std::vector<double>& energies)
{
    double s = 0.0;
    for (std::size_t k = 0; k < p.steps(); ++k) {
        const double kin = 0.5 * l2_dist_sq(traj[k + 1], traj[k]) / (p.tau() * p.tau());
        s += p.tau() * p.mid_weight(k) * (kin + 0.5 * (energies[k] + energies[k + 1]) / p.eps());
    }
    return s;
}

inline std::vector<double> slice_energies(const Functional& f, const Trajectory& traj)
{
    std::vector<double> e(traj.slices().size());
    for (std::size_t k = 0; k < e.size(); ++k) e[k] = f(traj[k]);
    return e;
}

inline double eval_wide(const WideProblem& p, const Trajectory& traj)
{
    p.check(traj);
    return eval_wide(p, traj, slice_energies(p.functional(), traj));
}

struct WideParams {
    SolverParams step{.gap_tolerance = 1e-12};
    int max_sweeps = 20000;
    double relative_decrease = 1e-10; // a sweep must lower W by at most this times (1 + |W|) ...
    double stationarity_tolerance = 1e-9; // ... and move no slice by more than this (L2) to stop
    bool symmetric = true;            // alternate forward and backward sweeps
    std::optional<Trajectory> initial; // default: constant-in-time u0
};

struct WideResult {
    Trajectory trajectory;
    std::vector<double> history; // W after each sweep, history[0] = W(initial)
    int sweeps = 0;
    double stationarity = 0.0; // largest L2 change of any slice during the last sweep
    bool converged = false;
};

/// Block-coordinate descent; W never increases.
inline WideResult minimize_wide(const WideProblem& p, const WideParams& params = {})
{
    const std::size_t K = p.steps();
    const Functional& f = p.functional();
    Trajectory traj = params.initial ? *params.initial : Trajectory::constant(p.initial(), p.tau(), K);
    p.check(traj);
    auto energies = slice_energies(f, traj);
    const double tau_eff = p.tau() * p.tau() / (2.0 * p.eps());
    std::vector<std::vector<double>> duals(K + 1);

    WideResult res;
    double w = eval_wide(p, traj, energies);
    res.history.push_back(w);

    const auto block_value = [&](std::size_t j, const GridFunction& v, double fv) {
        double s = p.mid_weight(j - 1) * l2_dist_sq(v, traj[j - 1]);
        if (j < K) s += p.mid_weight(j) * l2_dist_sq(traj[j + 1], v);
        const double c = (p.mid_weight(j - 1) + (j < K ? p.mid_weight(j) : 0.0)) * p.tau() / (2.0 * p.eps());
        return c * fv + s / (2.0 * p.tau());
    };

    const auto update = [&](std::size_t j) {
        const double wm = p.mid_weight(j - 1);
        const double wp = j < K ? p.mid_weight(j) : 0.0;
        const auto a = traj[j - 1].interior();
        std::vector<double> m(a.begin(), a.end());
        if (j < K) {
            const auto b = traj[j + 1].interior();
            for (std::size_t i = 0; i < m.size(); ++i) m[i] = (wm * a[i] + wp * b[i]) / (wm + wp);
        }
        auto step = prox_step(traj[j].with_interior(std::move(m)), f, tau_eff, params.step, duals[j]);
        duals[j] = std::move(step.dual);
        const double fv = f(step.u);
        double change = 0.0;
        if (block_value(j, step.u, fv) < block_value(j, traj[j], energies[j])) {
            change = std::sqrt(l2_dist_sq(step.u, traj[j]));
            traj.set_interior(j, std::vector<double>(step.u.interior().begin(), step.u.interior().end()));
            energies[j] = fv;
        }
        return change;
    };

    for (int sweep = 1; sweep <= params.max_sweeps; ++sweep) {
        double change = 0.0;
        const bool backward = params.symmetric && sweep % 2 == 0;
        for (std::size_t s = 1; s <= K; ++s) change = std::max(change, update(backward ? K + 1 - s : s));
        const double wn = eval_wide(p, traj, energies);
        res.history.push_back(wn);
        res.sweeps = sweep;
        res.stationarity = change;
        const double dec = w - wn;
        w = wn;
        if (dec <= params.relative_decrease * (1.0 + std::abs(wn)) && change <= params.stationarity_tolerance) {
            res.converged = true;
            break;
        }
    }
    res.trajectory = std::move(traj);
    return res;
}

/// Piecewise-linear time weight with values in [0, 1].
using TimeWeight = std::function<double(double)>;

inline TimeWeight constant_weight() { return [](double) { return 1.0; }; }

/// 0 at t = 0 and t = T, 1 on [theta, T - theta], linear in between.
inline TimeWeight two_sided_ramp(double theta, double horizon)
{
    if (!(theta > 0.0 && theta < 0.5 * horizon)) throw std::invalid_argument("ramp width must lie in (0, T/2)");
    return [=](double t) { return std::clamp(std::min(t, horizon - t) / theta, 0.0, 1.0); };
}

/// 1 up to t1, 0 from t2 on, linear in between.
inline TimeWeight decreasing_ramp(double t1, double t2)
{
    if (!(t2 > t1)) throw std::invalid_argument("decreasing ramp needs t1 < t2");
    return [=](double t) { return std::clamp((t2 - t) / (t2 - t1), 0.0, 1.0); };
}

/* First-order expansion of W at u in the direction Z^k = e^{t_k/eps} Y(t_k) Psi^k,
 * with convexity of F along u^k -> u^k + Psi^k. Nonnegative at a minimizer:
 *   eps sum_k tau w_{k+1/2} <D_k u, D_k Z>
 *     + sum_k (tau/2) [e^{-tau/(2eps)} Y_k dF_k + e^{tau/(2eps)} Y_{k+1} dF_{k+1}],
 * dF_k = F(u^k + Psi^k) - F(u^k). */
inline double minimality_residual(const WideProblem& p, const Trajectory& u, const TimeWeight& upsilon,
                                  const std::vector<std::vector<double>>& psi)
{
    p.check(u);
    const std::size_t K = p.steps();
    if (psi.size() != K + 1) throw std::invalid_argument("perturbation needs one slice per time level");
    const auto& f = p.functional();
    std::vector<double> y(K + 1), df(K + 1, 0.0);
    std::vector<std::vector<double>> z(K + 1);
    for (std::size_t k = 0; k <= K; ++k) {
        y[k] = upsilon(p.time(k));
        if (!(y[k] >= 0.0 && y[k] <= 1.0)) throw std::invalid_argument("time weight must take values in [0,1]");
        if (psi[k].size() != u[k].interior().size()) throw std::invalid_argument("perturbation size mismatch");
        z[k].resize(psi[k].size());
        const double e = std::exp(p.time(k) / p.eps()) * y[k];
        for (std::size_t i = 0; i < psi[k].size(); ++i) z[k][i] = e * psi[k][i];
    }
    for (double v : z[0])
        if (v != 0.0) throw std::invalid_argument("perturbation must vanish at t = 0");
    for (std::size_t k = 1; k <= K; ++k) {
        if (y[k] == 0.0) continue;
        std::vector<double> moved(psi[k].size());
        const auto uk = u[k].interior();
        for (std::size_t i = 0; i < moved.size(); ++i) moved[i] = uk[i] + psi[k][i];
        df[k] = f(u[k].with_interior(std::move(moved))) - f(u[k]);
    }
    const double hn = u.domain().cell_volume();
    const double tau = p.tau();
    double kinetic = 0.0, potential = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        const auto a = u[k].interior();
        const auto b = u[k + 1].interior();
        double s = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) s += (b[i] - a[i]) * (z[k + 1][i] - z[k][i]);
        kinetic += tau * p.mid_weight(k) * hn * s / (tau * tau);
        potential += 0.5 * tau *
                     (std::exp(-0.5 * tau / p.eps()) * y[k] * df[k] + std::exp(0.5 * tau / p.eps()) * y[k + 1] * df[k + 1]);
    }
    return p.eps() * kinetic + potential;
}

struct WideBounds {
    double kinetic_slack;  // 1 - sum tau |D u|^2 / F(u0)
    double holder_slack;   // 1 - max |u(t)-u(s)| / sqrt(F(u0)(t-s))
    double energy_slack;   // 1 - max int_{t1}^{t2} F / ((t2 - t1 + eps/2) F(u0))
    bool pass = false;     // every slack >= -0.05
};

inline WideBounds wide_energy_bounds(const WideProblem& p, const Trajectory& u)
{
    p.check(u);
    const auto& f = p.functional();
    const double f0 = f(p.initial());
    const auto e = slice_energies(f, u);
    const std::size_t K = p.steps();
    WideBounds b{1.0, 1.0, 1.0, false};
    if (f0 > 0.0) {
        b.kinetic_slack = 1.0 - time_l2_norm_sq(u) / f0;
        double worst_h = 0.0, worst_e = 0.0;
        std::vector<double> cum(K + 1, 0.0);
        for (std::size_t k = 0; k < K; ++k) cum[k + 1] = cum[k] + 0.5 * p.tau() * (e[k] + e[k + 1]);
        for (std::size_t a = 0; a <= K; ++a)
            for (std::size_t c = a + 1; c <= K; ++c) {
                const double dt = p.time(c) - p.time(a);
                worst_h = std::max(worst_h, std::sqrt(l2_dist_sq(u[c], u[a]) / (f0 * dt)));
                worst_e = std::max(worst_e, (cum[c] - cum[a]) / ((dt + 0.5 * p.eps()) * f0));
            }
        b.holder_slack = 1.0 - worst_h;
        b.energy_slack = 1.0 - worst_e;
    } else {
        b.kinetic_slack = -time_l2_norm_sq(u);
        b.holder_slack = 0.0;
        b.energy_slack = 0.0;
        for (std::size_t k = 0; k < K; ++k) b.holder_slack = std::min(b.holder_slack, -l2_dist_sq(u[k + 1], u[k]));
        for (double x : e) b.energy_slack = std::min(b.energy_slack, -x);
    }
    b.pass = b.kinetic_slack >= -0.05 && b.holder_slack >= -0.05 && b.energy_slack >= -0.05;
    return b;
}

struct EpsilonRow {
    double eps;
    double discrepancy; // sup_k |u_eps^k - u_flow^k|_{L2}
    double wide_value;
    int sweeps;
    bool converged;
};

/// Compares WIDE minimizers against the implicit Euler flow on the same time grid.
inline std::vector<EpsilonRow> epsilon_limit_study(const Functional& f, const GridFunction& u0, double tau,
                                                   double horizon, const std::vector<double>& eps_list,
                                                   const WideParams& params = {},
                                                   const SolverParams& flow_params = {},
                                                   std::vector<Trajectory>* minimizers = nullptr)
{
    if (eps_list.empty()) throw std::invalid_argument("epsilon list must not be empty");
    for (std::size_t i = 1; i < eps_list.size(); ++i)
        if (!(eps_list[i] < eps_list[i - 1])) throw std::invalid_argument("epsilon list must be decreasing");
    const auto flow = run_flow(u0, f, tau, horizon, flow_params);
    std::vector<EpsilonRow> rows;
    for (double eps : eps_list) {
        WideProblem p(f, u0, eps, tau, horizon);
        auto r = minimize_wide(p, params);
        double sup = 0.0;
        for (std::size_t k = 0; k <= p.steps(); ++k)
            sup = std::max(sup, std::sqrt(l2_dist_sq(r.trajectory[k], flow.trajectory[k])));
        rows.push_back({eps, sup, r.history.back(), r.sweeps, r.converged});
        if (minimizers) minimizers->push_back(std::move(r.trajectory));
    }
    return rows;
}

} // namespace fracflow

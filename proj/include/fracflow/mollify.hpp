#pragma once

// Exponential time mollification [v]_h and Steklov averages of trajectories.
//
// Time integrals treat a trajectory as held right-continuously: on (t_k, t_{k+1}]
// it equals slice k+1. Under that convention the mollifier recursion is exact,
// every mollified slice is a convex combination of the anchor and the slices,
// and the Jensen-type commutation inequalities hold without quadrature slack.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "functionals.hpp"
#include "grid.hpp"
#include "nonlocal_ops.hpp"

namespace fracflow {

struct MollifierConfig {
    double h = 1.0;
    GridFunction anchor; // [v]_h(0)
};

namespace detail {

inline void check_mollifier(const Trajectory& traj, const MollifierConfig& cfg)
{
    if (!(cfg.h > 0.0) || !std::isfinite(cfg.h)) throw std::invalid_argument("mollifier width must be positive");
    require_same_domain(cfg.anchor.domain(), traj.domain());
    if (!cfg.anchor.same_exterior(traj[0]))
        throw std::invalid_argument("anchor and trajectory must share their exterior data");
}

/// Same recursion applied to a scalar sequence x_1..x_K with anchor x0.
inline std::vector<double> mollify_scalars(double x0, const std::vector<double>& x, double tau, double h)
{
    const double a = std::exp(-tau / h);
    std::vector<double> m(x.size());
    m[0] = x0;
    for (std::size_t k = 1; k < x.size(); ++k) m[k] = a * m[k - 1] + (1.0 - a) * x[k];
    return m;
}

} // namespace detail

/// m^0 = v0, m^{k+1} = e^{-tau/h} m^k + (1 - e^{-tau/h}) v^{k+1}.
inline Trajectory exp_mollify(const Trajectory& traj, const MollifierConfig& cfg)
{
    detail::check_mollifier(traj, cfg);
    const double a = std::exp(-traj.tau() / cfg.h);
    std::vector<GridFunction> out;
    out.reserve(traj.slices().size());
    out.push_back(cfg.anchor);
    for (std::size_t k = 1; k < traj.slices().size(); ++k) {
        const auto prev = out.back().interior();
        const auto v = traj[k].interior();
        std::vector<double> m(prev.size());
        for (std::size_t i = 0; i < m.size(); ++i) m[i] = a * prev[i] + (1.0 - a) * v[i];
        out.push_back(traj[k].with_interior(std::move(m)));
    }
    return Trajectory(traj.tau(), std::move(out));
}

enum class OdeReference {
    Held,   // exact interval mean of [v]_h against the held slice: zero up to round-off
    Slices, // end-point value [v]_h(t_{k+1}) against the slice: first order in tau/h
};

/// max_k | ([v]_h^{k+1} - [v]_h^k)/tau + ([v]_h - v)/h |_{L2} over the intervals.
inline double mollifier_ode_residual(const Trajectory& traj, const MollifierConfig& cfg,
                                     OdeReference ref = OdeReference::Held)
{
    const auto m = exp_mollify(traj, cfg);
    const double tau = traj.tau(), h = cfg.h;
    const double a = std::exp(-tau / h);
    const double hn = traj.domain().cell_volume();
    double worst = 0.0;
    for (std::size_t k = 0; k + 1 < traj.slices().size(); ++k) {
        const auto mk = m[k].interior();
        const auto mk1 = m[k + 1].interior();
        const auto v = traj[k + 1].interior();
        double s = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) {
            const double mean = ref == OdeReference::Held ? v[i] + (mk[i] - v[i]) * h * (1.0 - a) / tau : mk1[i];
            const double r = (mk1[i] - mk[i]) / tau + (mean - v[i]) / h;
            s += r * r;
        }
        worst = std::max(worst, std::sqrt(hn * s));
    }
    return worst;
}

/// [TV(v)]_h(t_k) - TV([v]_h(t_k)) for k = 0..K.
inline std::vector<double> tv_commutation_check(const Trajectory& traj, const MollifierConfig& cfg,
                                                TvVariant variant, const NonlocalKernel& k)
{
    const auto m = exp_mollify(traj, cfg);
    std::vector<double> tv(traj.slices().size());
    for (std::size_t j = 0; j < tv.size(); ++j) tv[j] = tv_value(variant, traj[j], k);
    const auto mt = detail::mollify_scalars(tv_value(variant, cfg.anchor, k), tv, traj.tau(), cfg.h);
    std::vector<double> slack(tv.size());
    for (std::size_t j = 0; j < tv.size(); ++j) slack[j] = mt[j] - tv_value(variant, m[j], k);
    return slack;
}

/// [F(v)]_h(t_k) - F([v]_h(t_k)) for k = 0..K.
inline std::vector<double> functional_commutation_check(const Trajectory& traj,
                                                        const MollifierConfig& cfg, const Functional& f)
{
    const auto m = exp_mollify(traj, cfg);
    std::vector<double> fv(traj.slices().size());
    for (std::size_t j = 0; j < fv.size(); ++j) fv[j] = f(traj[j]);
    const auto mf = detail::mollify_scalars(f(cfg.anchor), fv, traj.tau(), cfg.h);
    std::vector<double> slack(fv.size());
    for (std::size_t j = 0; j < fv.size(); ++j) slack[j] = mf[j] - f(m[j]);
    return slack;
}

/// Smallest per-node, per-slice value of [|K v - u0|^2]_h - |K [v]_h - u0|^2.
inline double deblur_pointwise_commutation(const Trajectory& traj, const MollifierConfig& cfg,
                                           const BlurOperator& blur, const GridFunction& u0)
{
    const auto m = exp_mollify(traj, cfg);
    const auto& dom = traj.domain();
    const double a = std::exp(-traj.tau() / cfg.h);
    const auto sq = [&](const GridFunction& v) {
        auto kv = blur.apply(dom, v.interior());
        for (std::size_t i = 0; i < kv.size(); ++i) kv[i] = (kv[i] - u0[i]) * (kv[i] - u0[i]);
        return kv;
    };
    auto mollified = sq(cfg.anchor);
    double worst = 0.0;
    for (std::size_t k = 1; k < traj.slices().size(); ++k) {
        const auto cur = sq(traj[k]);
        const auto lhs = sq(m[k]);
        for (std::size_t i = 0; i < cur.size(); ++i) {
            mollified[i] = a * mollified[i] + (1.0 - a) * cur[i];
            worst = std::min(worst, mollified[i] - lhs[i]);
        }
    }
    return worst;
}

/// Slack of sum_{k>=1} tau |[v]_h(t_k)| <= sum_{k>=1} tau |v(t_k)| + h |v0| (L2 norms).
inline double mollifier_norm_bound_slack(const Trajectory& traj, const MollifierConfig& cfg)
{
    const auto m = exp_mollify(traj, cfg);
    double lhs = 0.0, rhs = cfg.h * std::sqrt(l2_norm_sq(cfg.anchor));
    for (std::size_t k = 1; k < traj.slices().size(); ++k) {
        lhs += traj.tau() * std::sqrt(l2_norm_sq(m[k]));
        rhs += traj.tau() * std::sqrt(l2_norm_sq(traj[k]));
    }
    return rhs - lhs;
}

/// sup_k |[v]_h(t_k) - v(t_k)|_{L2}.
inline double mollifier_sup_distance(const Trajectory& traj, const MollifierConfig& cfg)
{
    const auto m = exp_mollify(traj, cfg);
    double worst = 0.0;
    for (std::size_t k = 0; k < traj.slices().size(); ++k)
        worst = std::max(worst, std::sqrt(l2_dist_sq(m[k], traj[k])));
    return worst;
}

/* (u)_h(t_k) = (1/h) int_{t_k}^{t_k + h} u(s) ds for every grid time t_k <= T - h,
 * integrating the held slices exactly (h need not be a multiple of tau). */
inline Trajectory steklov_average(const Trajectory& traj, double width)
{
    const double horizon = traj.horizon();
    const double tau = traj.tau();
    if (!(width > 0.0) || !(width < horizon))
        throw std::invalid_argument("Steklov width must lie in (0, T)");
    const std::size_t last = static_cast<std::size_t>(std::floor((horizon - width) / tau + 1e-9));
    std::vector<GridFunction> out;
    for (std::size_t k = 0; k <= last; ++k) {
        const double lo = tau * k, hi = lo + width;
        std::vector<double> acc(traj[0].interior().size(), 0.0);
        for (std::size_t j = k; j < traj.steps(); ++j) {
            const double a = std::max(lo, tau * j), b = std::min(hi, tau * (j + 1));
            if (b <= a) break;
            const double wgt = (b - a) / width;
            const auto v = traj[j + 1].interior();
            for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += wgt * v[i];
        }
        out.push_back(traj[k].with_interior(std::move(acc)));
    }
    return Trajectory(tau, std::move(out));
}

} // namespace fracflow

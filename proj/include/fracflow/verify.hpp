#pragma once

// Discrete certificates for the defining inequalities of variational solutions.
//
// Quadrature: time integrals are held-slice sums (slice k+1 on (t_k, t_{k+1}]),
// time derivatives forward differences, endpoint terms at the exact slices.
// With this convention an implicit Euler trajectory satisfies the variational
// inequality with slack >= sum_k |(v - u)^{k+1} - (v - u)^k|^2 / 2 >= 0, and the
// trivial cancellations (v = u, phi = 0) are exact.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "functionals.hpp"
#include "grid.hpp"
#include "mollify.hpp"
#include "wide.hpp"

namespace fracflow {

struct VerificationReport {
    std::string check;
    double slack = 0.0;
    double tolerance = 0.0;
    bool pass = false;
    std::string instance;
};

inline VerificationReport make_report(std::string check, double slack, double tol, std::string instance = {})
{
    slack += 0.0; // no negative zero in reports
    return {std::move(check), slack, tol, slack >= -tol, std::move(instance)};
}

/// tol = 4 * gap_tolerance * |Omega| * K + tau * |F(u0)|.
inline double vi_tolerance(double gap_tolerance, const Trajectory& u, double f0)
{
    const double measure = u.domain().cell_volume() * static_cast<double>(u.domain().interior_count());
    return 4.0 * gap_tolerance * measure * static_cast<double>(u.steps()) + u.tau() * std::abs(f0);
}

enum class Provenance { ConstantDatum, MollifiedSolution, ConvexCombo, CutoffBlend, CompactPerturbation };

inline const char* provenance_name(Provenance p)
{
    switch (p) {
    case Provenance::ConstantDatum: return "constant_datum";
    case Provenance::MollifiedSolution: return "mollified_solution";
    case Provenance::ConvexCombo: return "convex_combo";
    case Provenance::CutoffBlend: return "cutoff_blend";
    case Provenance::CompactPerturbation: return "compact_perturbation";
    }
    return "?";
}

struct ComparisonMap {
    Trajectory v;
    Provenance tag;
    std::string label;
};

inline void require_admissible(const Trajectory& u, const Trajectory& v)
{
    require_same_grid(u, v);
    if (!v[0].same_exterior(u[0])) throw std::invalid_argument("comparison map must share the exterior data");
    for (const auto& s : v.slices())
        for (double x : s.interior())
            if (!std::isfinite(x)) throw std::invalid_argument("comparison map must be finite");
}

/* [sum_k <v^{k+1}-v^k, v^{k+1}-u^{k+1}> + sum_{k>=1} tau F(v^k)
 *   - |(v-u)(T)|^2/2 + |v(0)-u0|^2/2] - sum_{k>=1} tau F(u^k),  u0 = u(0). */
inline double vi_slack(const Trajectory& u, const Trajectory& v, const Functional& f)
{
    require_admissible(u, v);
    const std::size_t K = u.steps();
    const double hn = u.domain().cell_volume();
    double s = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        const auto a = v[k].interior();
        const auto b = v[k + 1].interior();
        const auto c = u[k + 1].interior();
        double d = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) d += (b[i] - a[i]) * (b[i] - c[i]);
        s += hn * d;
        s += u.tau() * (f(v[k + 1]) - f(u[k + 1]));
    }
    return s - 0.5 * l2_dist_sq(v[K], u[K]) + 0.5 * l2_dist_sq(v[0], u[0]);
}

/// Same inequality restricted to [t_{k1}, t_{k2}] with both endpoint terms.
inline double localized_vi_slack(const Trajectory& u, const Trajectory& v, const Functional& f, std::size_t k1,
                                 std::size_t k2)
{
    require_admissible(u, v);
    if (!(k1 < k2 && k2 <= u.steps())) throw std::invalid_argument("subinterval must satisfy 0 <= s1 < s2 <= T");
    const double hn = u.domain().cell_volume();
    double s = 0.0;
    for (std::size_t k = k1; k < k2; ++k) {
        const auto a = v[k].interior();
        const auto b = v[k + 1].interior();
        const auto c = u[k + 1].interior();
        double d = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) d += (b[i] - a[i]) * (b[i] - c[i]);
        s += hn * d + u.tau() * (f(v[k + 1]) - f(u[k + 1]));
    }
    return s - 0.5 * l2_dist_sq(v[k2], u[k2]) + 0.5 * l2_dist_sq(v[k1], u[k1]);
}

/// Grid index of a time on the grid; throws when t is off-grid.
inline std::size_t grid_index(const Trajectory& u, double t)
{
    const double k = t / u.tau();
    const double r = std::round(k);
    if (r < 0 || r > static_cast<double>(u.steps()) || std::abs(k - r) > 1e-9 * std::max(1.0, k))
        throw std::invalid_argument("time is not a grid point");
    return static_cast<std::size_t>(r);
}

/* Space-time bump: tensor product of a sine profile that vanishes on the two
 * outermost interior layers and a time profile vanishing at k in {0,1,K-1,K}.
 * Multiplied by a random sign field when seed != 0. */
inline std::vector<std::vector<double>> compact_bump(const Trajectory& u, double amplitude, std::uint64_t seed = 0)
{
    const auto& dom = u.domain();
    const std::size_t K = u.steps();
    if (K < 4) throw std::invalid_argument("compact perturbations need at least 4 steps");
    const int n0 = dom.shape()[0], n1 = dom.shape()[1];
    const auto profile = [](int i, int n) {
        if (i < 2 || i > n - 3) return 0.0;
        return std::sin(std::acos(-1.0) * (i - 1) / (n - 3));
    };
    std::vector<double> space(dom.interior_count(), 0.0);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    for (int i = 0; i < n0; ++i)
        for (int j = 0; j < n1; ++j) {
            const double py = dom.dim() == 2 ? profile(j, n1) : 1.0;
            const double r = seed != 0 ? uni(rng) : 1.0;
            space[dom.interior_index(i, j)] = r * profile(i, n0) * py;
        }
    std::vector<std::vector<double>> phi(K + 1, std::vector<double>(space.size(), 0.0));
    for (std::size_t k = 2; k + 2 <= K; ++k) {
        const double tk = std::sin(std::acos(-1.0) * (k - 1.0) / (K - 2.0));
        for (std::size_t i = 0; i < space.size(); ++i) phi[k][i] = amplitude * tk * space[i];
    }
    return phi;
}

inline Trajectory add_perturbation(const Trajectory& u, const std::vector<std::vector<double>>& phi, double scale = 1.0)
{
    Trajectory v = u;
    for (std::size_t k = 0; k <= u.steps(); ++k) {
        const auto a = u[k].interior();
        std::vector<double> w(a.begin(), a.end());
        for (std::size_t i = 0; i < w.size(); ++i) w[i] += scale * phi[k][i];
        v.set_interior(k, std::move(w));
    }
    return v;
}

/// At least six admissible comparison maps spanning every provenance tag.
inline std::vector<ComparisonMap> comparison_library(const Trajectory& u, const Functional& f)
{
    (void)f;
    const std::size_t K = u.steps();
    const double T = u.horizon();
    const GridFunction& u0 = u[0];
    std::vector<ComparisonMap> lib;
    lib.push_back({Trajectory::constant(u0, u.tau(), K), Provenance::ConstantDatum, "constant u0"});
    for (double h : {T / 4.0, T / 16.0}) {
        lib.push_back({exp_mollify(u, {h, u0}), Provenance::MollifiedSolution, "[u]_h, h=" + std::to_string(h)});
    }
    const auto blend = [&](const std::function<double(std::size_t)>& lam) {
        Trajectory v = u;
        for (std::size_t k = 0; k <= K; ++k) {
            const auto a = u[k].interior();
            const auto b = u0.interior();
            std::vector<double> w(a.size());
            const double l = lam(k);
            for (std::size_t i = 0; i < w.size(); ++i) w[i] = l * a[i] + (1.0 - l) * b[i];
            v.set_interior(k, std::move(w));
        }
        return v;
    };
    lib.push_back({blend([](std::size_t) { return 0.5; }), Provenance::ConvexCombo, "u/2 + u0/2"});
    const double theta = T / 4.0;
    lib.push_back({blend([&](std::size_t k) {
                       const double t = u.time(k);
                       return std::clamp(std::min(t, T - t) / theta, 0.0, 1.0);
                   }),
                   Provenance::CutoffBlend, "zeta_theta u + (1 - zeta_theta) u0"});
    if (K >= 4) {
        double scale = 0.0;
        for (double x : u0.interior()) scale = std::max(scale, std::abs(x));
        const double amp = 0.1 * std::max(scale, 1e-3);
        lib.push_back({add_perturbation(u, compact_bump(u, amp)), Provenance::CompactPerturbation, "u + bump"});
        lib.push_back({add_perturbation(u, compact_bump(u, amp, 17)), Provenance::CompactPerturbation,
                       "u + random-sign bump"});
    }
    return lib;
}

/* sum_{k>=1} tau [F(u^k + phi^k) - F(u^k)] - sum_{k<K} <u^k, phi^{k+1} - phi^k>.
 * Nonnegative for solutions; for a pure TV functional this is the parabolic
 * fractional 1-Laplacian inequality. */
inline double parabolic_min_slack(const Trajectory& u, const std::vector<std::vector<double>>& phi,
                                  const Functional& f)
{
    const std::size_t K = u.steps();
    if (phi.size() != K + 1) throw std::invalid_argument("perturbation needs one slice per time level");
    for (std::size_t k : {std::size_t{0}, K})
        for (double x : phi[k])
            if (x != 0.0) throw std::invalid_argument("perturbation must vanish at t = 0 and t = T");
    const double hn = u.domain().cell_volume();
    double s = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        const auto a = u[k].interior();
        double d = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) d += a[i] * (phi[k + 1][i] - phi[k][i]);
        s -= hn * d;
    }
    const auto moved = add_perturbation(u, phi);
    for (std::size_t k = 1; k <= K; ++k) s += u.tau() * (f(moved[k]) - f(u[k]));
    return s;
}

/// D_k - D_{k+1} with D_k = |u^k - w^k|^2 / 2.
inline std::vector<double> contraction_check(const Trajectory& u, const Trajectory& w)
{
    require_same_grid(u, w);
    std::vector<double> slack;
    double prev = 0.5 * l2_dist_sq(u[0], w[0]);
    for (std::size_t k = 1; k <= u.steps(); ++k) {
        const double d = 0.5 * l2_dist_sq(u[k], w[k]);
        slack.push_back(prev - d);
        prev = d;
    }
    return slack;
}

/// k tau F(u0) - |u^k - u0|^2 / 2 for k = 1..K/4.
inline std::vector<double> initial_condition_check(const Trajectory& u, const Functional& f)
{
    const double f0 = f(u[0]);
    std::vector<double> slack;
    for (std::size_t k = 1; k <= std::max<std::size_t>(1, u.steps() / 4); ++k)
        slack.push_back(u.time(k) * f0 - 0.5 * l2_dist_sq(u[k], u[0]));
    return slack;
}

/// Localized inequality on [s1, s2] for every map of the library.
inline std::vector<VerificationReport> localization_check(const Trajectory& u, double s1, double s2,
                                                          const Functional& f, double tol)
{
    const std::size_t k1 = grid_index(u, s1), k2 = grid_index(u, s2);
    std::vector<VerificationReport> out;
    for (const auto& m : comparison_library(u, f))
        out.push_back(make_report(std::string("localized_vi/") + provenance_name(m.tag),
                                  localized_vi_slack(u, m.v, f, k1, k2), tol, m.label));
    return out;
}

struct DissipationReport {
    double kinetic = 0.0;         // sum tau |D u|^2
    double f0 = 0.0;              // F(u(0))
    double kinetic_ratio = 0.0;   // kinetic / F(u0)
    double kinetic_slack = 0.0;   // 2 F(u0) - kinetic
    double average_slack = 0.0;   // F(u0) - max over grid pairs of the time-averaged energy
    double holder_ratio = 0.0;    // max |u^b - u^a| / sqrt(t_b - t_a)
    double holder_slack = 0.0;    // sqrt(2 F(u0)) - holder_ratio
};

inline DissipationReport dissipation_report(const Trajectory& u, const Functional& f)
{
    const std::size_t K = u.steps();
    DissipationReport r;
    r.f0 = f(u[0]);
    r.kinetic = time_l2_norm_sq(u);
    r.kinetic_ratio = r.f0 > 0.0 ? r.kinetic / r.f0 : 0.0;
    r.kinetic_slack = 2.0 * r.f0 - r.kinetic;
    std::vector<double> cum(K + 1, 0.0);
    for (std::size_t k = 1; k <= K; ++k) cum[k] = cum[k - 1] + u.tau() * f(u[k]);
    double worst_avg = -std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a <= K; ++a)
        for (std::size_t b = a + 1; b <= K; ++b) {
            const double dt = u.time(b) - u.time(a);
            worst_avg = std::max(worst_avg, (cum[b] - cum[a]) / dt);
            r.holder_ratio = std::max(r.holder_ratio, std::sqrt(l2_dist_sq(u[b], u[a]) / dt));
        }
    r.average_slack = r.f0 - worst_avg;
    r.holder_slack = std::sqrt(2.0 * std::max(r.f0, 0.0)) - r.holder_ratio;
    return r;
}

/* minimality_residual over a small library: time weights {1, two-sided ramp,
 * decreasing ramp} times directions {+-bump, random-sign bump, +-(u0 - u)/2}. */
inline std::vector<VerificationReport> wide_minimality_reports(const WideProblem& p, const Trajectory& u,
                                                               double tol = 1e-6)
{
    const double T = p.horizon();
    const std::vector<std::pair<std::string, TimeWeight>> weights{
        {"const", constant_weight()}, {"ramp", two_sided_ramp(T / 4.0, T)}, {"decreasing", decreasing_ramp(T / 4.0, T / 2.0)}};
    double scale = 0.0;
    for (double x : p.initial().interior()) scale = std::max(scale, std::abs(x));
    const double amp = 0.1 * std::max(scale, 1e-3);
    std::vector<std::pair<std::string, std::vector<std::vector<double>>>> dirs;
    auto bump = compact_bump(u, amp);
    auto neg = bump;
    for (auto& s : neg)
        for (double& x : s) x = -x;
    dirs.emplace_back("bump", std::move(bump));
    dirs.emplace_back("-bump", std::move(neg));
    dirs.emplace_back("random bump", compact_bump(u, amp, 29));
    for (double sign : {0.5, -0.5}) {
        std::vector<std::vector<double>> d(u.steps() + 1);
        for (std::size_t k = 0; k <= u.steps(); ++k) {
            const auto a = u[k].interior();
            const auto b = u[0].interior();
            d[k].resize(a.size());
            for (std::size_t i = 0; i < a.size(); ++i) d[k][i] = sign * (b[i] - a[i]);
        }
        dirs.emplace_back(sign > 0 ? "(u0-u)/2" : "(u-u0)/2", std::move(d));
    }
    std::vector<VerificationReport> out;
    for (const auto& [wn, w] : weights)
        for (const auto& [dn, d] : dirs)
            out.push_back(make_report("wide_minimality", minimality_residual(p, u, w, d), tol, wn + " x " + dn));
    return out;
}

} // namespace fracflow

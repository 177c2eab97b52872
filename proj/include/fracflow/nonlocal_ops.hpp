#pragma once

// Discrete fractional operators on a DiscreteDomain.
//
// Gagliardo pairs carry w_ij = h^{2N} / |x_i - x_j|^{N+alpha}, Riesz pairs the
// vector weight r_ij = h^N (x_i - x_j) / |x_i - x_j|^{N+alpha+1}. Interaction is
// truncated at radius rho; pairs with both endpoints in the collar are dropped
// (for frozen exterior data they only add a constant).

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "grid.hpp"
#include "sparse.hpp"

namespace fracflow {

enum class TvVariant { None, Riesz, Gagliardo };

struct KernelPair {
    std::size_t i, j; // node numbers, i < j
    double dist;
    double w;                // Gagliardo weight
    std::array<double, 2> r; // Riesz weight oriented i -> j, r_ji = -r_ij
};

class NonlocalKernel {
public:
    NonlocalKernel() = default;

    NonlocalKernel(DomainPtr dom, double alpha, double rho, double riesz_constant = 1.0)
        : dom_(std::move(dom)), alpha_(alpha), rho_(rho), c_r_(riesz_constant)
    {
        if (!dom_) throw std::invalid_argument("kernel needs a domain");
        if (!(alpha > 0.0 && alpha < 1.0))
            throw std::invalid_argument("fractional order alpha must lie in (0,1)");
        const double h = dom_->h();
        if (!(rho >= h * (1.0 - 1e-12)))
            throw std::invalid_argument("truncation radius must be at least h");
        if (rho > dom_->collar_radius() * (1.0 + 1e-12) + 1e-300)
            throw std::invalid_argument("truncation radius exceeds the domain collar");
        if (!(riesz_constant > 0.0)) throw std::invalid_argument("riesz constant must be positive");
        assemble();
    }

    const DiscreteDomain& domain() const { return *dom_; }
    const DomainPtr& domain_ptr() const { return dom_; }
    double alpha() const { return alpha_; }
    double rho() const { return rho_; }
    double riesz_constant() const { return c_r_; }
    const std::vector<KernelPair>& pairs() const { return pairs_; }

    struct Incidence {
        std::size_t pair;
        double sign; // +1 when the node is the pair's i, -1 when it is j
        std::size_t other;
    };
    /// Pairs touching a node, in pair order.
    const std::vector<Incidence>& incident(std::size_t node) const { return incidence_[node]; }

    /// Direct access for fault-injection tests.
    std::vector<KernelPair>& mutable_pairs() { return pairs_; }

private:
    void assemble()
    {
        const auto& d = *dom_;
        const int dim = d.dim();
        const double ratio = rho_ / d.h();
        const long r2 = static_cast<long>(std::floor(ratio * ratio + 1e-9));
        const int rc = static_cast<int>(std::floor(ratio + 1e-9));
        std::vector<Index> offsets;
        for (int a = -rc; a <= rc; ++a)
            for (int b = (dim == 2 ? -rc : 0); b <= (dim == 2 ? rc : 0); ++b) {
                const long s = static_cast<long>(a) * a + static_cast<long>(b) * b;
                if (s > 0 && s <= r2) offsets.push_back({a, b});
            }
        const double n_plus_a = dim + alpha_;
        const double h = d.h();
        const double hn = d.cell_volume();
        pairs_.clear();
        for (std::size_t i = 0; i < d.node_count(); ++i) {
            const Index& mi = d.multi_index(i);
            for (const auto& o : offsets) {
                const long j = d.lookup({mi[0] + o[0], mi[1] + o[1]});
                if (j < 0 || static_cast<std::size_t>(j) <= i) continue;
                if (!d.is_interior(i) && !d.is_interior(static_cast<std::size_t>(j))) continue;
                const Index& mj = d.multi_index(static_cast<std::size_t>(j));
                const double dx0 = h * (mi[0] - mj[0]);
                const double dx1 = h * (mi[1] - mj[1]);
                const double dist = std::sqrt(dx0 * dx0 + dx1 * dx1);
                KernelPair p;
                p.i = i;
                p.j = static_cast<std::size_t>(j);
                p.dist = dist;
                p.w = hn * hn / std::pow(dist, n_plus_a);
                const double rs = hn / std::pow(dist, n_plus_a + 1.0);
                p.r = {rs * dx0, rs * dx1};
                pairs_.push_back(p);
            }
        }
        incidence_.assign(d.node_count(), {});
        for (std::size_t k = 0; k < pairs_.size(); ++k) {
            incidence_[pairs_[k].i].push_back({k, 1.0, pairs_[k].j});
            incidence_[pairs_[k].j].push_back({k, -1.0, pairs_[k].i});
        }
    }

    DomainPtr dom_;
    double alpha_ = 0.5;
    double rho_ = 1.0;
    double c_r_ = 1.0;
    std::vector<KernelPair> pairs_;
    std::vector<std::vector<Incidence>> incidence_;
};

inline NonlocalKernel assemble_kernel(DomainPtr dom, double alpha, double rho,
                                      double riesz_constant = 1.0)
{
    return NonlocalKernel(std::move(dom), alpha, rho, riesz_constant);
}

/// One value per ordered pair: forward[k] = F(x_i, x_j), backward[k] = F(x_j, x_i).
struct NonlocalField {
    std::vector<double> forward;
    std::vector<double> backward;
};

/// Riesz-type vector field on every node of interior and collar.
using VectorField = std::vector<std::array<double, 2>>;

inline void require_kernel_domain(const GridFunction& u, const NonlocalKernel& k)
{
    require_same_domain(u.domain(), k.domain());
}

/// sum over pairs of 2 w_ij |u_i - u_j|, exterior read through u's mode.
inline double gagliardo_tv(const GridFunction& u, const NonlocalKernel& k)
{
    require_kernel_domain(u, k);
    double s = 0.0;
    for (const auto& p : k.pairs()) s += 2.0 * p.w * std::abs(u.at(p.i) - u.at(p.j));
    return s;
}

inline NonlocalField gagliardo_difference(const GridFunction& u, const NonlocalKernel& k)
{
    require_kernel_domain(u, k);
    NonlocalField f;
    f.forward.reserve(k.pairs().size());
    f.backward.reserve(k.pairs().size());
    for (const auto& p : k.pairs()) {
        const double d = (u.at(p.i) - u.at(p.j)) / std::pow(p.dist, k.alpha());
        f.forward.push_back(d);
        f.backward.push_back(-d);
    }
    return f;
}

/// (div F)_i = -sum_j w_ij / h^N (F_ij - F_ji) at every node of interior and collar.
inline std::vector<double> gagliardo_divergence_full(const NonlocalField& f,
                                                     const NonlocalKernel& k)
{
    if (f.forward.size() != k.pairs().size() || f.backward.size() != k.pairs().size())
        throw std::invalid_argument("field does not match the kernel pair set");
    const auto& d = k.domain();
    const double hn = d.cell_volume();
    std::vector<double> div(d.node_count(), 0.0);
    for (std::size_t n = 0; n < d.node_count(); ++n) {
        double s = 0.0;
        for (const auto& inc : k.incident(n)) {
            const auto& p = k.pairs()[inc.pair];
            const double fij = inc.sign > 0 ? f.forward[inc.pair] : f.backward[inc.pair];
            const double fji = inc.sign > 0 ? f.backward[inc.pair] : f.forward[inc.pair];
            s += p.w / hn * (fij - fji);
        }
        div[n] = -s;
    }
    return div;
}

inline GridFunction gagliardo_divergence(const NonlocalField& f, const NonlocalKernel& k)
{
    auto full = gagliardo_divergence_full(f, k);
    full.resize(k.domain().interior_count());
    return GridFunction::zero_extended(k.domain_ptr(), std::move(full));
}

/// Pairing of nonlocal fields that makes <u, div F> = -<<Du, F>> exact.
inline double field_inner(const NonlocalField& a, const NonlocalField& b, const NonlocalKernel& k)
{
    const double hn = k.domain().cell_volume();
    const int dim = k.domain().dim();
    double s = 0.0;
    for (std::size_t e = 0; e < k.pairs().size(); ++e) {
        const double m = hn * hn / std::pow(k.pairs()[e].dist, dim);
        s += m * (a.forward[e] * b.forward[e] + a.backward[e] * b.backward[e]);
    }
    return s;
}

inline void require_zero_extension(const GridFunction& u)
{
    if (u.mode() != ExteriorMode::ZeroExtension)
        throw std::invalid_argument("Riesz operators require zero extension outside the domain");
}

/// G u(x_i) = c_R sum_j r_ij (u_i - u_j) on interior and collar nodes.
inline VectorField riesz_grad(const GridFunction& u, const NonlocalKernel& k)
{
    require_kernel_domain(u, k);
    require_zero_extension(u);
    const auto& d = k.domain();
    VectorField g(d.node_count(), {0.0, 0.0});
    for (std::size_t n = 0; n < d.node_count(); ++n) {
        double g0 = 0.0, g1 = 0.0;
        const double un = u.at(n);
        for (const auto& inc : k.incident(n)) {
            const auto& p = k.pairs()[inc.pair];
            const double diff = un - u.at(inc.other);
            g0 += inc.sign * p.r[0] * diff;
            g1 += inc.sign * p.r[1] * diff;
        }
        g[n] = {k.riesz_constant() * g0, k.riesz_constant() * g1};
    }
    return g;
}

/// h^N sum |G u(x_i)|_2 over interior and collar.
inline double riesz_tv(const GridFunction& u, const NonlocalKernel& k)
{
    const auto g = riesz_grad(u, k);
    double s = 0.0;
    for (const auto& v : g) s += std::hypot(v[0], v[1]);
    return k.domain().cell_volume() * s;
}

/// div Psi(x_i) = c_R sum_j r_ij . (Psi_i - Psi_j), adjoint to -riesz_grad.
inline std::vector<double> riesz_divergence(const VectorField& psi, const NonlocalKernel& k)
{
    const auto& d = k.domain();
    if (psi.size() != d.node_count()) throw std::invalid_argument("field size mismatch");
    std::vector<double> div(d.node_count(), 0.0);
    for (std::size_t n = 0; n < d.node_count(); ++n) {
        double s = 0.0;
        for (const auto& inc : k.incident(n)) {
            const auto& p = k.pairs()[inc.pair];
            const auto& a = psi[n];
            const auto& b = psi[inc.other];
            s += inc.sign * (p.r[0] * (a[0] - b[0]) + p.r[1] * (a[1] - b[1]));
        }
        div[n] = k.riesz_constant() * s;
    }
    return div;
}

inline double tv_value(TvVariant variant, const GridFunction& u, const NonlocalKernel& k)
{
    switch (variant) {
    case TvVariant::Riesz: return riesz_tv(u, k);
    case TvVariant::Gagliardo: return gagliardo_tv(u, k);
    case TvVariant::None: return 0.0;
    }
    return 0.0;
}

/* Brute-force dual evaluation: the linear functional Phi -> <u, div Phi> over
 * interior and collar is assembled column by column from unit fields, then
 * maximized over the unit box (per ordered pair) or unit balls (per node). */
inline double dual_tv_oracle(const GridFunction& u, const NonlocalKernel& k, TvVariant which)
{
    require_kernel_domain(u, k);
    const auto& d = k.domain();
    const std::size_t np = k.pairs().size();
    if (d.node_count() + np > 64) throw std::invalid_argument("instance too large for the oracle");
    const double hn = d.cell_volume();
    const auto pair_with_u = [&](const std::vector<double>& div) {
        double s = 0.0;
        for (std::size_t n = 0; n < d.node_count(); ++n) s += u.at(n) * div[n];
        return hn * s;
    };
    if (which == TvVariant::Gagliardo) {
        NonlocalField unit{std::vector<double>(np, 0.0), std::vector<double>(np, 0.0)};
        std::vector<double> cf(np), cb(np);
        for (std::size_t e = 0; e < np; ++e) {
            unit.forward[e] = 1.0;
            cf[e] = pair_with_u(gagliardo_divergence_full(unit, k));
            unit.forward[e] = 0.0;
            unit.backward[e] = 1.0;
            cb[e] = pair_with_u(gagliardo_divergence_full(unit, k));
            unit.backward[e] = 0.0;
        }
        NonlocalField best{std::vector<double>(np), std::vector<double>(np)};
        for (std::size_t e = 0; e < np; ++e) {
            best.forward[e] = cf[e] > 0 ? 1.0 : (cf[e] < 0 ? -1.0 : 0.0);
            best.backward[e] = cb[e] > 0 ? 1.0 : (cb[e] < 0 ? -1.0 : 0.0);
        }
        return pair_with_u(gagliardo_divergence_full(best, k));
    }
    if (which == TvVariant::Riesz) {
        require_zero_extension(u);
        const std::size_t nn = d.node_count();
        VectorField unit(nn, {0.0, 0.0});
        VectorField coef(nn, {0.0, 0.0});
        for (std::size_t n = 0; n < nn; ++n)
            for (int a = 0; a < d.dim(); ++a) {
                unit[n][a] = 1.0;
                coef[n][a] = pair_with_u(riesz_divergence(unit, k));
                unit[n][a] = 0.0;
            }
        VectorField best(nn, {0.0, 0.0});
        for (std::size_t n = 0; n < nn; ++n) {
            const double m = std::hypot(coef[n][0], coef[n][1]);
            if (m > 0) best[n] = {coef[n][0] / m, coef[n][1] / m};
        }
        return pair_with_u(riesz_divergence(best, k));
    }
    return 0.0;
}

/* The TV term as sum over groups g of |(A v + b)_g|_2 in the interior
 * unknowns v. Gagliardo: one scalar row per pair, b collects exterior values.
 * Riesz: N rows per interior/collar node, b = 0. */
struct TvOperator {
    CsrMatrix matrix;
    std::vector<double> offset;
    int group = 1;
    double norm = 0.0; // spectral norm estimate of matrix, filled by the owner

    std::size_t groups() const { return offset.size() / static_cast<std::size_t>(group); }

    double value(std::span<const double> v) const
    {
        const auto y = matrix.apply(v);
        double s = 0.0;
        for (std::size_t g = 0; g < groups(); ++g) {
            if (group == 1)
                s += std::abs(y[g] + offset[g]);
            else
                s += std::hypot(y[2 * g] + offset[2 * g], y[2 * g + 1] + offset[2 * g + 1]);
        }
        return s;
    }
};

inline TvOperator tv_operator(TvVariant variant, const NonlocalKernel& k,
                              const GridFunction& exterior_source)
{
    require_kernel_domain(exterior_source, k);
    const auto& d = k.domain();
    const std::size_t ni = d.interior_count();
    TvOperator op;
    std::vector<CsrMatrix::Entry> entries;
    if (variant == TvVariant::Gagliardo) {
        op.group = 1;
        op.offset.assign(k.pairs().size(), 0.0);
        for (std::size_t e = 0; e < k.pairs().size(); ++e) {
            const auto& p = k.pairs()[e];
            const double c = 2.0 * p.w;
            if (d.is_interior(p.i))
                entries.push_back({e, p.i, c});
            else
                op.offset[e] += c * exterior_source.at(p.i);
            if (d.is_interior(p.j))
                entries.push_back({e, p.j, -c});
            else
                op.offset[e] -= c * exterior_source.at(p.j);
        }
        op.matrix = CsrMatrix(k.pairs().size(), ni, entries);
    } else if (variant == TvVariant::Riesz) {
        require_zero_extension(exterior_source);
        const int dim = d.dim();
        op.group = 2;
        const std::size_t nn = d.node_count();
        op.offset.assign(2 * nn, 0.0);
        const double scale = k.riesz_constant() * d.cell_volume();
        for (std::size_t n = 0; n < nn; ++n) {
            for (int a = 0; a < dim; ++a) {
                const std::size_t row = 2 * n + a;
                double diag = 0.0;
                for (const auto& inc : k.incident(n)) {
                    const double r = inc.sign * k.pairs()[inc.pair].r[a] * scale;
                    diag += r;
                    if (d.is_interior(inc.other)) entries.push_back({row, inc.other, -r});
                }
                if (d.is_interior(n)) entries.push_back({row, n, diag});
            }
        }
        op.matrix = CsrMatrix(2 * nn, ni, entries);
    } else {
        op.group = 1;
        op.matrix = CsrMatrix(0, ni, {});
    }
    return op;
}

} // namespace fracflow

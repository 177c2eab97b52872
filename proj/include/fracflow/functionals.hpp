#pragma once

// Composite energies: fractional TV plus a regression or blur-fidelity term.
//
// All prox maps here work in "per-node" units, i.e. on the energy divided by
// h^N, which is the form the step solver needs.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <mutex>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "grid.hpp"
#include "nonlocal_ops.hpp"
#include "sparse.hpp"

namespace fracflow {

enum class RegressionKind { L2, L1, Quantile, Huber };

/// Pointwise fidelity kappa * omega_x * r(v - u0_x).
class RegressionTerm {
public:
    RegressionTerm() = default;

    static RegressionTerm l2(GridFunction datum, double kappa) { return make(RegressionKind::L2, std::move(datum), kappa, 0.5, 1.0); }
    static RegressionTerm l1(GridFunction datum, double kappa) { return make(RegressionKind::L1, std::move(datum), kappa, 0.5, 1.0); }
    static RegressionTerm quantile(GridFunction datum, double kappa, double q) { return make(RegressionKind::Quantile, std::move(datum), kappa, q, 1.0); }
    static RegressionTerm huber(GridFunction datum, double kappa, double delta) { return make(RegressionKind::Huber, std::move(datum), kappa, 0.5, delta); }

    /// Optional nonnegative per-node weight (interior nodes).
    RegressionTerm with_weights(std::vector<double> w) const
    {
        if (w.size() != datum_.interior().size())
            throw std::invalid_argument("weight map must have one entry per interior node");
        for (double x : w)
            if (!(x >= 0.0) || !std::isfinite(x)) throw std::invalid_argument("weights must be nonnegative");
        RegressionTerm r = *this;
        r.weights_ = std::move(w);
        return r;
    }

    RegressionKind kind() const { return kind_; }
    double kappa() const { return kappa_; }
    double q() const { return q_; }
    double delta() const { return delta_; }
    const GridFunction& datum() const { return datum_; }
    const std::vector<double>& weights() const { return weights_; }

    double weight(std::size_t i) const { return weights_.empty() ? 1.0 : weights_[i]; }

    /// Density at node i (without the h^N quadrature factor).
    double density(std::size_t i, double v) const
    {
        const double d = v - datum_[i];
        const double c = kappa_ * weight(i);
        switch (kind_) {
        case RegressionKind::L2: return 0.5 * c * d * d;
        case RegressionKind::L1: return c * std::abs(d);
        case RegressionKind::Quantile: return c * (d >= 0 ? q_ * d : (q_ - 1.0) * d);
        case RegressionKind::Huber:
            return c * (std::abs(d) <= delta_ ? 0.5 * d * d / delta_ : std::abs(d) - 0.5 * delta_);
        }
        return 0.0;
    }

    /// Subdifferential of density(i, .) at v as an interval [lo, hi].
    std::pair<double, double> subdifferential(std::size_t i, double v) const
    {
        const double d = v - datum_[i];
        const double c = kappa_ * weight(i);
        const double sgn = d > 0 ? 1.0 : -1.0;
        switch (kind_) {
        case RegressionKind::L2: return {c * d, c * d};
        case RegressionKind::L1:
            if (d == 0.0) return {-c, c};
            return {c * sgn, c * sgn};
        case RegressionKind::Quantile:
            if (d == 0.0) return {c * (q_ - 1.0), c * q_};
            return d > 0 ? std::pair{c * q_, c * q_} : std::pair{c * (q_ - 1.0), c * (q_ - 1.0)};
        case RegressionKind::Huber:
            if (std::abs(d) <= delta_) return {c * d / delta_, c * d / delta_};
            return {c * sgn, c * sgn};
        }
        return {0.0, 0.0};
    }

    /// argmin_v s*density(i, v) + (v - w)^2 / 2.
    double prox(std::size_t i, double w, double s) const
    {
        const double u0 = datum_[i];
        const double d = w - u0;
        const double t = s * kappa_ * weight(i);
        switch (kind_) {
        case RegressionKind::L2: return (w + t * u0) / (1.0 + t);
        case RegressionKind::L1:
            if (d > t) return u0 + (d - t);
            if (d < -t) return u0 + (d + t);
            return u0;
        case RegressionKind::Quantile:
            if (d > t * q_) return u0 + (d - t * q_);
            if (d < -t * (1.0 - q_)) return u0 + (d + t * (1.0 - q_));
            return u0;
        case RegressionKind::Huber:
            if (std::abs(d) <= delta_ + t) return u0 + d * delta_ / (delta_ + t);
            return u0 + d - t * (d > 0 ? 1.0 : -1.0);
        }
        return w;
    }

    /// h^N * sum of densities.
    double value(const GridFunction& u) const
    {
        require_same_domain(u.domain(), datum_.domain());
        double s = 0.0;
        for (std::size_t i = 0; i < u.interior().size(); ++i) s += density(i, u[i]);
        return u.domain().cell_volume() * s;
    }

    GridFunction prox(const GridFunction& w, double s) const
    {
        require_same_domain(w.domain(), datum_.domain());
        if (!(s > 0.0)) throw std::invalid_argument("prox step must be positive");
        std::vector<double> out(w.interior().size());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = prox(i, w[i], s);
        return w.with_interior(std::move(out));
    }

private:
    static RegressionTerm make(RegressionKind k, GridFunction datum, double kappa, double q, double delta)
    {
        if (!(kappa >= 1.0) || !std::isfinite(kappa))
            throw std::invalid_argument("fidelity weight kappa must be >= 1");
        if (!(q > 0.0 && q < 1.0)) throw std::invalid_argument("quantile level must lie in (0,1)");
        if (!(delta > 0.0)) throw std::invalid_argument("Huber threshold must be positive");
        RegressionTerm r;
        r.kind_ = k;
        r.datum_ = std::move(datum);
        r.kappa_ = kappa;
        r.q_ = q;
        r.delta_ = delta;
        return r;
    }

    RegressionKind kind_ = RegressionKind::L2;
    GridFunction datum_;
    double kappa_ = 1.0;
    double q_ = 0.5;
    double delta_ = 1.0;
    std::vector<double> weights_;
};

inline GridFunction prox_regression(const RegressionTerm& r, const GridFunction& w, double s)
{
    return r.prox(w, s);
}

/* Convolution with a symmetric nonnegative stencil and replicate padding.
 * Applied in the form K u_i = u_i + sum_k t_k (u_{i+k} - u_i), which maps every
 * constant to itself exactly. */
class BlurOperator {
public:
    BlurOperator() = default;

    /// taps: (2r+1)^dim values, row-major; normalized so they sum to one.
    BlurOperator(int dim, int radius, std::vector<double> taps) : dim_(dim), radius_(radius)
    {
        if (dim != 1 && dim != 2) throw std::invalid_argument("blur dimension must be 1 or 2");
        if (radius < 0) throw std::invalid_argument("blur radius must be nonnegative");
        const std::size_t side = 2 * static_cast<std::size_t>(radius) + 1;
        const std::size_t n = dim == 2 ? side * side : side;
        if (taps.size() != n) throw std::invalid_argument("tap count does not match the stencil");
        double sum = 0.0;
        for (double t : taps) {
            if (!(t >= 0.0) || !std::isfinite(t)) throw std::invalid_argument("blur taps must be nonnegative");
            sum += t;
        }
        if (!(sum > 0.0)) throw std::invalid_argument("blur taps must not all vanish");
        for (std::size_t a = 0; a < n; ++a)
            if (taps[a] != taps[n - 1 - a]) throw std::invalid_argument("blur stencil must be symmetric");
        const std::size_t centre = n / 2;
        double off = 0.0;
        for (std::size_t a = 0; a < n; ++a) {
            if (a == centre) continue;
            taps[a] /= sum;
            off += taps[a];
        }
        taps[centre] = 1.0 - off;
        for (std::size_t a = 0; a < n; ++a) {
            if (a == centre || taps[a] == 0.0) continue;
            const int k0 = dim == 2 ? static_cast<int>(a / side) - radius : static_cast<int>(a) - radius;
            const int k1 = dim == 2 ? static_cast<int>(a % side) - radius : 0;
            offsets_.push_back({{k0, k1}, taps[a]});
        }
        taps_ = std::move(taps);
        const auto [lo, inner] = symbol_extrema();
        if (inner <= 1e-12 || lo < -1e-12)
            throw std::invalid_argument("blur stencil is not injective (nonpositive Fourier symbol)");
    }

    static BlurOperator identity(int dim) { return BlurOperator(dim, 0, {1.0}); }

    static BlurOperator gaussian(int dim, double sigma, int radius = -1)
    {
        if (!(sigma > 0.0)) throw std::invalid_argument("blur width must be positive");
        const auto build = [&](int r) {
            std::vector<double> taps;
            for (int a = -r; a <= r; ++a)
                for (int b = (dim == 2 ? -r : 0); b <= (dim == 2 ? r : 0); ++b)
                    taps.push_back(std::exp(-(a * a + b * b) / (2.0 * sigma * sigma)));
            return BlurOperator(dim, r, std::move(taps));
        };
        if (radius >= 0) return build(radius);
        // ceil(3 sigma), widened until truncation no longer drives the symbol
        // negative near Nyquist (sigma >= 1.5); pi sigma^2 always suffices
        const int r0 = static_cast<int>(std::ceil(3.0 * sigma));
        int r1 = std::max(r0, static_cast<int>(std::ceil(std::numbers::pi * sigma * sigma)) + 1);
        // symbol of the untruncated stencil at Nyquist; no radius beats it
        double alt = 0.0, sum = 0.0;
        for (int m = -r1; m <= r1; ++m) {
            const double g = std::exp(-m * m / (2.0 * sigma * sigma));
            alt += (m % 2 ? -g : g);
            sum += g;
        }
        if (std::pow(alt / sum, dim) <= 1e-11) r1 = r0;
        for (int r = r0; r < r1; ++r) {
            try {
                return build(r);
            } catch (const std::invalid_argument&) {
            }
        }
        return build(r1);
    }

    int dim() const { return dim_; }
    int radius() const { return radius_; }
    const std::vector<double>& taps() const { return taps_; }

    /// Minimum of the (real, symmetric) Fourier symbol over a 256-point grid per axis.
    double min_symbol() const { return symbol_extrema().first; }

    /* (overall minimum, minimum over frequencies strictly below Nyquist on
     * every axis). Replicate-padded grids only excite frequencies pi k/n < pi,
     * so a zero exactly at Nyquist, as for (1/4, 1/2, 1/4), is harmless. */
    std::pair<double, double> symbol_extrema() const
    {
        const int m = 256;
        double inner = 1e300, nyquist = 1e300;
        for (int a = 0; a < m; ++a)
            for (int b = 0; b < (dim_ == 2 ? m : 1); ++b) {
                const double th0 = 2.0 * std::numbers::pi * a / m;
                const double th1 = 2.0 * std::numbers::pi * b / m;
                double s = 1.0;
                for (const auto& o : offsets_)
                    s += o.tap * (std::cos(o.k[0] * th0 + o.k[1] * th1) - 1.0);
                double& slot = (a == m / 2 || (dim_ == 2 && b == m / 2)) ? nyquist : inner;
                slot = std::min(slot, s);
            }
        return {std::min(inner, nyquist), inner};
    }

    void apply(const DiscreteDomain& dom, std::span<const double> u, std::span<double> out) const
    {
        check(dom, u, out);
        const int n0 = dom.shape()[0], n1 = dom.shape()[1];
        for (int i = 0; i < n0; ++i)
            for (int j = 0; j < n1; ++j) {
                const double c = u[dom.interior_index(i, j)];
                double s = 0.0;
                for (const auto& o : offsets_) s += o.tap * (u[pad(dom, i + o.k[0], j + o.k[1])] - c);
                out[dom.interior_index(i, j)] = c + s;
            }
    }

    /// Exact transpose of apply (scatter form).
    void apply_adjoint(const DiscreteDomain& dom, std::span<const double> y, std::span<double> out) const
    {
        check(dom, y, out);
        std::fill(out.begin(), out.end(), 0.0);
        const int n0 = dom.shape()[0], n1 = dom.shape()[1];
        for (int i = 0; i < n0; ++i)
            for (int j = 0; j < n1; ++j) {
                const std::size_t me = dom.interior_index(i, j);
                double self = y[me];
                for (const auto& o : offsets_) {
                    out[pad(dom, i + o.k[0], j + o.k[1])] += o.tap * y[me];
                    self -= o.tap * y[me];
                }
                out[me] += self;
            }
    }

    std::vector<double> apply(const DiscreteDomain& dom, std::span<const double> u) const
    {
        std::vector<double> out(u.size());
        apply(dom, u, out);
        return out;
    }

    std::vector<double> apply_adjoint(const DiscreteDomain& dom, std::span<const double> y) const
    {
        std::vector<double> out(y.size());
        apply_adjoint(dom, y, out);
        return out;
    }

private:
    struct Offset {
        Index k;
        double tap;
    };

    void check(const DiscreteDomain& dom, std::span<const double> a, std::span<const double> b) const
    {
        if (dom.dim() != dim_) throw std::invalid_argument("blur dimension does not match the domain");
        if (a.size() != dom.interior_count() || b.size() != dom.interior_count())
            throw std::invalid_argument("blur input size mismatch");
    }

    std::size_t pad(const DiscreteDomain& dom, int i, int j) const
    {
        i = std::clamp(i, 0, dom.shape()[0] - 1);
        j = std::clamp(j, 0, dom.shape()[1] - 1);
        return dom.interior_index(i, j);
    }

    int dim_ = 1;
    int radius_ = 0;
    std::vector<double> taps_{1.0};
    std::vector<Offset> offsets_;
};

inline GridFunction apply_blur(const BlurOperator& k, const GridFunction& u)
{
    return u.with_interior(k.apply(u.domain(), u.interior()));
}

struct CgResult {
    std::vector<double> x;
    double relative_residual = 0.0;
    int iterations = 0;
};

/// Solves (I + c K^T K) v = rhs by conjugate gradients.
inline CgResult solve_normal_system(const BlurOperator& k, const DiscreteDomain& dom, double c,
                                    std::span<const double> rhs, std::span<const double> x0,
                                    double rtol = 1e-10, int max_iter = 2000)
{
    const std::size_t n = rhs.size();
    const auto op = [&](std::span<const double> x, std::vector<double>& y) {
        const auto kx = k.apply(dom, x);
        const auto ktkx = k.apply_adjoint(dom, kx);
        y.resize(n);
        for (std::size_t i = 0; i < n; ++i) y[i] = x[i] + c * ktkx[i];
    };
    CgResult res;
    res.x.assign(x0.begin(), x0.end());
    std::vector<double> r(n), p(n), ap;
    op(res.x, ap);
    double bnorm = 0.0, rr = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        r[i] = rhs[i] - ap[i];
        p[i] = r[i];
        rr += r[i] * r[i];
        bnorm += rhs[i] * rhs[i];
    }
    bnorm = std::sqrt(bnorm);
    if (bnorm == 0.0) {
        std::fill(res.x.begin(), res.x.end(), 0.0);
        return res;
    }
    const auto true_residual = [&] {
        std::vector<double> y;
        op(res.x, y);
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += (rhs[i] - y[i]) * (rhs[i] - y[i]);
        return std::sqrt(s) / bnorm;
    };
    for (int it = 0; it < max_iter; ++it) {
        if (std::sqrt(rr) <= 0.5 * rtol * bnorm) {
            res.relative_residual = true_residual();
            if (res.relative_residual <= rtol) {
                res.iterations = it;
                return res;
            }
        }
        op(p, ap);
        double pap = 0.0;
        for (std::size_t i = 0; i < n; ++i) pap += p[i] * ap[i];
        const double a = rr / pap;
        double rr_new = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            res.x[i] += a * p[i];
            r[i] -= a * ap[i];
            rr_new += r[i] * r[i];
        }
        const double b = rr_new / rr;
        rr = rr_new;
        for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + b * p[i];
    }
    res.relative_residual = true_residual();
    res.iterations = max_iter;
    if (res.relative_residual > rtol)
        throw std::runtime_error("conjugate gradients did not reach the requested residual");
    return res;
}

/// argmin_v s*(kappa/2)|K v - u0|^2 + |v - w|^2/2 (per-node units).
inline CgResult deblur_data_prox_solve(const BlurOperator& k, double kappa, const GridFunction& u0,
                                       std::span<const double> w, double s,
                                       std::span<const double> guess = {})
{
    if (!(s > 0.0)) throw std::invalid_argument("prox step must be positive");
    const auto& dom = u0.domain();
    const double c = s * kappa;
    auto rhs = k.apply_adjoint(dom, u0.interior());
    for (std::size_t i = 0; i < rhs.size(); ++i) rhs[i] = w[i] + c * rhs[i];
    return solve_normal_system(k, dom, c, rhs, guess.empty() ? w : guess);
}

inline GridFunction deblur_data_prox(const BlurOperator& k, double kappa, const GridFunction& u0,
                                     const GridFunction& w, double s)
{
    require_same_domain(u0.domain(), w.domain());
    return w.with_interior(deblur_data_prox_solve(k, kappa, u0, w.interior(), s).x);
}

enum class FidelityKind { None, Regression, Deblur };

/* TV term (Riesz, Gagliardo or none) plus fidelity. The TV part is exposed to
 * the step solver as a TvOperator scaled by 1/h^N; it is cached for the last
 * exterior data seen. */
class Functional {
public:
    Functional() = default;

    static Functional denoise(TvVariant tv, std::shared_ptr<const NonlocalKernel> k, RegressionTerm r)
    {
        Functional f = base(tv, std::move(k));
        require_same_domain(r.datum().domain(), f.kernel_->domain());
        f.fidelity_ = FidelityKind::Regression;
        f.regression_ = std::move(r);
        return f;
    }

    static Functional deblur(TvVariant tv, std::shared_ptr<const NonlocalKernel> k, BlurOperator blur,
                             double kappa, GridFunction u0)
    {
        Functional f = base(tv, std::move(k));
        if (!(kappa >= 1.0) || !std::isfinite(kappa))
            throw std::invalid_argument("fidelity weight kappa must be >= 1");
        require_same_domain(u0.domain(), f.kernel_->domain());
        if (blur.dim() != u0.domain().dim()) throw std::invalid_argument("blur dimension mismatch");
        f.fidelity_ = FidelityKind::Deblur;
        f.blur_ = std::move(blur);
        f.kappa_ = kappa;
        f.datum_ = std::move(u0);
        return f;
    }

    /// Pure TV energy (the fractional 1-Laplacian flow).
    static Functional tv_only(TvVariant tv, std::shared_ptr<const NonlocalKernel> k)
    {
        return base(tv, std::move(k));
    }

    /// Fidelity only, no TV term.
    static Functional fidelity_only(RegressionTerm r)
    {
        Functional f;
        f.tv_ = TvVariant::None;
        f.dom_ = r.datum().domain_ptr();
        f.fidelity_ = FidelityKind::Regression;
        f.regression_ = std::move(r);
        f.cache_ = std::make_shared<Cache>();
        return f;
    }

    TvVariant tv_variant() const { return tv_; }
    FidelityKind fidelity_kind() const { return fidelity_; }
    const DiscreteDomain& domain() const { return *dom_; }
    const DomainPtr& domain_ptr() const { return dom_; }
    const NonlocalKernel* kernel() const { return kernel_.get(); }
    const RegressionTerm& regression() const { return regression_; }
    const BlurOperator& blur() const { return blur_; }
    double kappa() const { return fidelity_ == FidelityKind::Regression ? regression_.kappa() : kappa_; }
    const GridFunction& blur_datum() const { return datum_; }

    void check_mode(const GridFunction& u) const
    {
        require_same_domain(u.domain(), *dom_);
        if (tv_ == TvVariant::Riesz && u.mode() != ExteriorMode::ZeroExtension)
            throw std::invalid_argument("Riesz functional needs zero-extended data");
        if (tv_ == TvVariant::Gagliardo && u.mode() != ExteriorMode::Prescribed)
            throw std::invalid_argument("Gagliardo functional needs prescribed exterior data");
    }

    double tv_term(const GridFunction& u) const
    {
        check_mode(u);
        return tv_ == TvVariant::None ? 0.0 : tv_value(tv_, u, *kernel_);
    }

    double fidelity_term(const GridFunction& u) const
    {
        check_mode(u);
        return dom_->cell_volume() * fidelity_per_node(u.interior());
    }

    double operator()(const GridFunction& u) const { return tv_term(u) + fidelity_term(u); }

    /// Fidelity divided by h^N.
    double fidelity_per_node(std::span<const double> v) const
    {
        switch (fidelity_) {
        case FidelityKind::None: return 0.0;
        case FidelityKind::Regression: {
            double s = 0.0;
            for (std::size_t i = 0; i < v.size(); ++i) s += regression_.density(i, v[i]);
            return s;
        }
        case FidelityKind::Deblur: {
            const auto kv = blur_.apply(*dom_, v);
            double s = 0.0;
            for (std::size_t i = 0; i < v.size(); ++i) s += (kv[i] - datum_[i]) * (kv[i] - datum_[i]);
            return 0.5 * kappa_ * s;
        }
        }
        return 0.0;
    }

    /// argmin_v s*fidelity_per_node(v) + |v - w|^2/2.
    std::vector<double> prox_fidelity(std::span<const double> w, double s,
                                      std::span<const double> guess = {}) const
    {
        std::vector<double> out(w.begin(), w.end());
        switch (fidelity_) {
        case FidelityKind::None: break;
        case FidelityKind::Regression:
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = regression_.prox(i, w[i], s);
            break;
        case FidelityKind::Deblur: out = deblur_data_prox_solve(blur_, kappa_, datum_, w, s, guess).x; break;
        }
        return out;
    }

    /// Per-node-scaled TV operator for the exterior data of u (cached).
    std::shared_ptr<const TvOperator> scaled_tv_operator(const GridFunction& u) const
    {
        check_mode(u);
        std::lock_guard<std::mutex> lock(cache_->mutex);
        if (cache_->op && cache_->exterior == std::vector<double>(u.exterior().begin(), u.exterior().end()))
            return cache_->op;
        auto op = std::make_shared<TvOperator>();
        if (tv_ != TvVariant::None) {
            *op = tv_operator(tv_, *kernel_, u);
            const double inv = 1.0 / dom_->cell_volume();
            op->matrix = op->matrix.scaled(inv);
            for (auto& b : op->offset) b *= inv;
            op->norm = spectral_norm_estimate(op->matrix);
        } else {
            op->matrix = CsrMatrix(0, dom_->interior_count(), {});
        }
        cache_->exterior.assign(u.exterior().begin(), u.exterior().end());
        cache_->op = op;
        return op;
    }

    /// The same functional with a different TV kernel (used by fault injection).
    Functional with_kernel(std::shared_ptr<const NonlocalKernel> k) const
    {
        Functional f = *this;
        require_same_domain(k->domain(), *dom_);
        f.kernel_ = std::move(k);
        f.cache_ = std::make_shared<Cache>();
        return f;
    }

private:
    struct Cache {
        std::mutex mutex;
        std::vector<double> exterior;
        std::shared_ptr<const TvOperator> op;
    };

    static Functional base(TvVariant tv, std::shared_ptr<const NonlocalKernel> k)
    {
        if (!k) throw std::invalid_argument("functional needs a kernel");
        Functional f;
        f.tv_ = tv;
        f.dom_ = k->domain_ptr();
        f.kernel_ = std::move(k);
        f.cache_ = std::make_shared<Cache>();
        return f;
    }

    TvVariant tv_ = TvVariant::None;
    DomainPtr dom_;
    std::shared_ptr<const NonlocalKernel> kernel_;
    FidelityKind fidelity_ = FidelityKind::None;
    RegressionTerm regression_;
    BlurOperator blur_;
    double kappa_ = 1.0;
    GridFunction datum_;
    std::shared_ptr<Cache> cache_;
};

inline double eval_functional(const Functional& f, const GridFunction& u) { return f(u); }

} // namespace fracflow

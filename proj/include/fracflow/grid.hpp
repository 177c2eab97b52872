#pragma once

// Uniform Cartesian grids in 1D/2D with an exterior collar, grid functions
// with explicit exterior semantics, and uniform-in-time trajectories.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fracflow {

using Index = std::array<int, 2>;

class DiscreteDomain {
public:
    /* Enumerates the interior nodes (row-major, axis 0 slowest) followed by
     * the collar: every node outside the node box whose Euclidean distance to
     * the box is at most rho. */
    static std::shared_ptr<const DiscreteDomain> make(int dim, std::vector<int> shape, double h,
                                                      double rho)
    {
        if (dim != 1 && dim != 2)
            throw std::invalid_argument("domain dimension must be 1 or 2");
        if (static_cast<int>(shape.size()) != dim)
            throw std::invalid_argument("shape length must equal the dimension");
        for (int n : shape)
            if (n < 1) throw std::invalid_argument("shape entries must be >= 1");
        if (!(h > 0.0) || !std::isfinite(h))
            throw std::invalid_argument("grid spacing h must be positive");
        if (!(rho >= 0.0) || !std::isfinite(rho))
            throw std::invalid_argument("collar radius must be nonnegative");
        const double cells = rho / h;
        const double rounded = std::round(cells);
        if (std::abs(cells - rounded) > 1e-9 * std::max(1.0, cells))
            throw std::invalid_argument("collar radius must be an integer multiple of h");

        auto dom = std::shared_ptr<DiscreteDomain>(new DiscreteDomain());
        dom->dim_ = dim;
        dom->shape_ = {shape[0], dim == 2 ? shape[1] : 1};
        dom->h_ = h;
        dom->collar_cells_ = static_cast<int>(rounded);
        dom->enumerate();
        return dom;
    }

    int dim() const { return dim_; }
    const Index& shape() const { return shape_; }
    double h() const { return h_; }
    int collar_cells() const { return collar_cells_; }
    double collar_radius() const { return collar_cells_ * h_; }

    std::size_t interior_count() const { return interior_count_; }
    std::size_t collar_count() const { return nodes_.size() - interior_count_; }
    std::size_t node_count() const { return nodes_.size(); }
    bool is_interior(std::size_t node) const { return node < interior_count_; }

    const Index& multi_index(std::size_t node) const { return nodes_[node]; }

    std::array<double, 2> coord(std::size_t node) const
    {
        return {h_ * nodes_[node][0], h_ * nodes_[node][1]};
    }

    /// h^N, the volume of one grid cell.
    double cell_volume() const { return dim_ == 2 ? h_ * h_ : h_; }

    /// Node number for a multi-index, or -1 when it is outside interior and collar.
    long lookup(const Index& m) const
    {
        const int r = collar_cells_;
        const int w0 = shape_[0] + 2 * r;
        const int w1 = dim_ == 2 ? shape_[1] + 2 * r : 1;
        const int a = m[0] + r;
        const int b = dim_ == 2 ? m[1] + r : m[1];
        if (a < 0 || a >= w0 || b < 0 || b >= w1) return -1;
        return box_[static_cast<std::size_t>(a) * w1 + b];
    }

    /// Interior node number of a multi-index inside the node box.
    std::size_t interior_index(int i0, int i1 = 0) const
    {
        return static_cast<std::size_t>(i0) * shape_[1] + i1;
    }

    bool same_as(const DiscreteDomain& o) const
    {
        return dim_ == o.dim_ && shape_ == o.shape_ && h_ == o.h_ &&
               collar_cells_ == o.collar_cells_;
    }

private:
    DiscreteDomain() = default;

    void enumerate()
    {
        const int r = collar_cells_;
        const int n0 = shape_[0], n1 = shape_[1];
        const int lo1 = dim_ == 2 ? -r : 0, hi1 = dim_ == 2 ? n1 - 1 + r : 0;
        nodes_.clear();
        for (int i = 0; i < n0; ++i)
            for (int j = 0; j < n1; ++j) nodes_.push_back({i, j});
        interior_count_ = nodes_.size();
        for (int i = -r; i <= n0 - 1 + r; ++i) {
            for (int j = lo1; j <= hi1; ++j) {
                const int e0 = std::max({0, -i, i - (n0 - 1)});
                const int e1 = dim_ == 2 ? std::max({0, -j, j - (n1 - 1)}) : 0;
                if (e0 == 0 && e1 == 0) continue;
                if (e0 * e0 + e1 * e1 <= r * r) nodes_.push_back({i, j});
            }
        }
        const int w0 = n0 + 2 * r;
        const int w1 = dim_ == 2 ? n1 + 2 * r : 1;
        box_.assign(static_cast<std::size_t>(w0) * w1, -1);
        for (std::size_t k = 0; k < nodes_.size(); ++k) {
            const int a = nodes_[k][0] + r;
            const int b = dim_ == 2 ? nodes_[k][1] + r : 0;
            box_[static_cast<std::size_t>(a) * w1 + b] = static_cast<long>(k);
        }
    }

    int dim_ = 1;
    Index shape_{1, 1};
    double h_ = 1.0;
    int collar_cells_ = 0;
    std::size_t interior_count_ = 0;
    std::vector<Index> nodes_;
    std::vector<long> box_;
};

using DomainPtr = std::shared_ptr<const DiscreteDomain>;

inline std::shared_ptr<const DiscreteDomain> make_domain(int dim, std::vector<int> shape, double h,
                                                         double rho)
{
    return DiscreteDomain::make(dim, std::move(shape), h, rho);
}

inline void require_same_domain(const DiscreteDomain& a, const DiscreteDomain& b)
{
    if (&a != &b && !a.same_as(b)) throw std::invalid_argument("domain mismatch");
}

enum class ExteriorMode { ZeroExtension, Prescribed };

class GridFunction {
public:
    GridFunction() = default;

    static GridFunction zero_extended(DomainPtr dom, std::vector<double> interior)
    {
        GridFunction f;
        f.check_interior(dom, interior);
        f.dom_ = std::move(dom);
        f.interior_ = std::move(interior);
        f.mode_ = ExteriorMode::ZeroExtension;
        return f;
    }

    static GridFunction prescribed(DomainPtr dom, std::vector<double> interior,
                                   std::vector<double> exterior)
    {
        GridFunction f;
        f.check_interior(dom, interior);
        if (exterior.size() != dom->collar_count())
            throw std::invalid_argument("exterior values must match the collar node count");
        f.dom_ = std::move(dom);
        f.interior_ = std::move(interior);
        f.exterior_ = std::move(exterior);
        f.mode_ = ExteriorMode::Prescribed;
        return f;
    }

    /// Same domain and exterior data, new interior values.
    GridFunction with_interior(std::vector<double> interior) const
    {
        GridFunction f = *this;
        check_interior(dom_, interior);
        f.interior_ = std::move(interior);
        return f;
    }

    const DiscreteDomain& domain() const { return *dom_; }
    const DomainPtr& domain_ptr() const { return dom_; }
    ExteriorMode mode() const { return mode_; }

    std::span<const double> interior() const { return interior_; }
    std::span<double> interior() { return interior_; }
    std::span<const double> exterior() const { return exterior_; }

    double operator[](std::size_t interior_node) const { return interior_[interior_node]; }
    double& operator[](std::size_t interior_node) { return interior_[interior_node]; }

    /// Value at any node of interior or collar; zero mode reads 0 outside.
    double at(std::size_t node) const
    {
        if (node < interior_.size()) return interior_[node];
        if (mode_ == ExteriorMode::ZeroExtension) return 0.0;
        return exterior_[node - interior_.size()];
    }

    /// Values on every node of interior and collar.
    std::vector<double> full() const
    {
        std::vector<double> out(interior_);
        out.resize(dom_->node_count(), 0.0);
        if (mode_ == ExteriorMode::Prescribed)
            std::copy(exterior_.begin(), exterior_.end(), out.begin() + interior_.size());
        return out;
    }

    bool same_exterior(const GridFunction& o) const
    {
        return mode_ == o.mode_ && exterior_ == o.exterior_;
    }

private:
    static void check_interior(const DomainPtr& dom, const std::vector<double>& v)
    {
        if (!dom) throw std::invalid_argument("grid function needs a domain");
        if (v.size() != dom->interior_count())
            throw std::invalid_argument("interior values must match the interior node count");
    }

    DomainPtr dom_;
    std::vector<double> interior_;
    std::vector<double> exterior_;
    ExteriorMode mode_ = ExteriorMode::ZeroExtension;
};

/// h^N sum over interior nodes of u*w.
inline double l2_inner(const GridFunction& u, const GridFunction& w)
{
    require_same_domain(u.domain(), w.domain());
    double s = 0.0;
    const auto a = u.interior();
    const auto b = w.interior();
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return u.domain().cell_volume() * s;
}

inline double l2_norm_sq(const GridFunction& u) { return l2_inner(u, u); }

/// h^N-weighted squared L2 distance of the interior values.
inline double l2_dist_sq(const GridFunction& u, const GridFunction& w)
{
    require_same_domain(u.domain(), w.domain());
    double s = 0.0;
    const auto a = u.interior();
    const auto b = w.interior();
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return u.domain().cell_volume() * s;
}

class Trajectory {
public:
    Trajectory() = default;

    Trajectory(double tau, std::vector<GridFunction> slices) : tau_(tau), slices_(std::move(slices))
    {
        if (!(tau_ > 0.0)) throw std::invalid_argument("time step must be positive");
        if (slices_.empty()) throw std::invalid_argument("trajectory needs at least one slice");
        for (const auto& s : slices_) {
            require_same_domain(s.domain(), slices_.front().domain());
            if (!s.same_exterior(slices_.front()))
                throw std::invalid_argument("exterior data must be constant in time");
        }
    }

    /// Constant-in-time trajectory with K steps.
    static Trajectory constant(const GridFunction& u, double tau, std::size_t steps)
    {
        return Trajectory(tau, std::vector<GridFunction>(steps + 1, u));
    }

    double tau() const { return tau_; }
    std::size_t steps() const { return slices_.size() - 1; }
    double horizon() const { return tau_ * static_cast<double>(steps()); }
    double time(std::size_t k) const { return tau_ * static_cast<double>(k); }

    const GridFunction& operator[](std::size_t k) const { return slices_[k]; }
    const std::vector<GridFunction>& slices() const { return slices_; }
    const DiscreteDomain& domain() const { return slices_.front().domain(); }

    /// Replaces the interior values of slice k; exterior stays as is.
    void set_interior(std::size_t k, std::vector<double> v)
    {
        slices_[k] = slices_[k].with_interior(std::move(v));
    }

private:
    double tau_ = 1.0;
    std::vector<GridFunction> slices_;
};

inline void require_same_grid(const Trajectory& a, const Trajectory& b)
{
    require_same_domain(a.domain(), b.domain());
    if (a.steps() != b.steps() || a.tau() != b.tau())
        throw std::invalid_argument("time grid mismatch");
}

/// sum_k tau ||(u^{k+1}-u^k)/tau||^2 over interior nodes.
inline double time_l2_norm_sq(const Trajectory& traj)
{
    if (traj.steps() < 1) throw std::invalid_argument("trajectory needs at least one step");
    double s = 0.0;
    for (std::size_t k = 0; k + 1 < traj.slices().size(); ++k)
        s += l2_dist_sq(traj[k + 1], traj[k]) / traj.tau();
    return s;
}

} // namespace fracflow

#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "parallel.hpp"

namespace fracflow {

/// Compressed sparse rows with an explicit transpose for row-parallel A^T x.
class CsrMatrix {
public:
    struct Entry {
        std::size_t row, col;
        double value;
    };

    CsrMatrix() = default;

    /// Entries are kept in the given order; duplicates simply add up in products.
    CsrMatrix(std::size_t rows, std::size_t cols, const std::vector<Entry>& entries)
        : rows_(rows), cols_(cols)
    {
        build(rows_, cols_, entries, ptr_, idx_, val_, false);
        build(cols_, rows_, entries, tptr_, tidx_, tval_, true);
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t nonzeros() const { return val_.size(); }

    void apply(std::span<const double> x, std::span<double> y) const
    {
        if (x.size() != cols_ || y.size() != rows_) throw std::invalid_argument("csr shape");
        parallel_for(rows_, [&](std::size_t r) {
            double s = 0.0;
            for (std::size_t k = ptr_[r]; k < ptr_[r + 1]; ++k) s += val_[k] * x[idx_[k]];
            y[r] = s;
        });
    }

    void apply_transpose(std::span<const double> x, std::span<double> y) const
    {
        if (x.size() != rows_ || y.size() != cols_) throw std::invalid_argument("csr shape");
        parallel_for(cols_, [&](std::size_t c) {
            double s = 0.0;
            for (std::size_t k = tptr_[c]; k < tptr_[c + 1]; ++k) s += tval_[k] * x[tidx_[k]];
            y[c] = s;
        });
    }

    std::vector<double> apply(std::span<const double> x) const
    {
        std::vector<double> y(rows_);
        apply(x, y);
        return y;
    }

    std::vector<double> apply_transpose(std::span<const double> x) const
    {
        std::vector<double> y(cols_);
        apply_transpose(x, y);
        return y;
    }

    CsrMatrix scaled(double s) const
    {
        CsrMatrix m = *this;
        for (auto& v : m.val_) v *= s;
        for (auto& v : m.tval_) v *= s;
        return m;
    }

private:
    static void build(std::size_t nrows, std::size_t, const std::vector<Entry>& entries,
                      std::vector<std::size_t>& ptr, std::vector<std::size_t>& idx,
                      std::vector<double>& val, bool transpose)
    {
        ptr.assign(nrows + 1, 0);
        for (const auto& e : entries) ++ptr[(transpose ? e.col : e.row) + 1];
        for (std::size_t r = 0; r < nrows; ++r) ptr[r + 1] += ptr[r];
        idx.assign(entries.size(), 0);
        val.assign(entries.size(), 0.0);
        std::vector<std::size_t> fill(ptr.begin(), ptr.end() - 1);
        for (const auto& e : entries) {
            const std::size_t r = transpose ? e.col : e.row;
            idx[fill[r]] = transpose ? e.row : e.col;
            val[fill[r]] = e.value;
            ++fill[r];
        }
    }

    std::size_t rows_ = 0, cols_ = 0;
    std::vector<std::size_t> ptr_, idx_, tptr_, tidx_;
    std::vector<double> val_, tval_;
};

/// Power iteration on A^T A: 50 sweeps from a fixed non-constant start, times 1.01.
inline double spectral_norm_estimate(const CsrMatrix& a, int iterations = 50)
{
    if (a.nonzeros() == 0 || a.cols() == 0) return 0.0;
    std::vector<double> x(a.cols());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = 1.0 + 0.5 * std::sin(0.7 * i + 0.3);
    double lambda = 0.0;
    for (int it = 0; it < iterations; ++it) {
        double nx = 0.0;
        for (double v : x) nx += v * v;
        nx = std::sqrt(nx);
        if (nx == 0.0) return 0.0;
        for (double& v : x) v /= nx;
        const auto y = a.apply(x);
        x = a.apply_transpose(y);
        lambda = 0.0;
        for (double v : y) lambda += v * v;
    }
    return 1.01 * std::sqrt(lambda);
}

} // namespace fracflow

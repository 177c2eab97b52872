#pragma once

// Dense injectivity certificate for a blur operator on a small grid.

#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

#include "functionals.hpp"
#include "grid.hpp"

namespace fracflow {

/// Smallest singular value of K on the interior of dom (replicate padding).
inline double smallest_singular_value(const BlurOperator& k, const DiscreteDomain& dom)
{
    const std::size_t n = dom.interior_count();
    if (n > 4096) throw std::invalid_argument("grid too large for the dense injectivity check");
    Eigen::MatrixXd m(n, n);
    std::vector<double> e(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        e[j] = 1.0;
        const auto col = k.apply(dom, e);
        for (std::size_t i = 0; i < n; ++i) m(i, j) = col[i];
        e[j] = 0.0;
    }
    const Eigen::MatrixXd ktk = m.transpose() * m;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(ktk, Eigen::EigenvaluesOnly);
    return std::sqrt(std::max(0.0, es.eigenvalues().minCoeff()));
}

} // namespace fracflow

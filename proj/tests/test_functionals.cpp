#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fracflow/functionals.hpp"
#include "fracflow/injectivity.hpp"

using namespace fracflow;

namespace {

std::vector<double> randn(std::size_t n, std::mt19937_64& rng, double s = 1.0)
{
    std::normal_distribution<double> g(0.0, s);
    std::vector<double> v(n);
    for (double& x : v) x = g(rng);
    return v;
}

std::vector<RegressionTerm> all_terms(const GridFunction& datum)
{
    return {RegressionTerm::l2(datum, 2.0), RegressionTerm::l1(datum, 1.5), RegressionTerm::quantile(datum, 3.0, 0.2),
            RegressionTerm::huber(datum, 1.0, 0.3)};
}

} // namespace

TEST(EvalFunctional, ConstantDatumIsZero)
{
    auto d = make_domain(2, {4, 4}, 1.0, 2.0);
    auto k = std::make_shared<const NonlocalKernel>(d, 0.5, 2.0);
    const auto u0 = GridFunction::prescribed(d, std::vector<double>(16, 0.7), std::vector<double>(d->collar_count(), 0.7));
    const auto f = Functional::denoise(TvVariant::Gagliardo, k, RegressionTerm::l2(u0, 1.0));
    EXPECT_EQ(eval_functional(f, u0), 0.0);
}

TEST(EvalFunctional, SingleNodeQuadratic)
{
    auto d = make_domain(1, {1}, 1.0, 0.0);
    const auto f = Functional::fidelity_only(RegressionTerm::l2(GridFunction::zero_extended(d, {0.0}), 2.0));
    EXPECT_DOUBLE_EQ(f(GridFunction::zero_extended(d, {3.0})), 9.0);
}

TEST(EvalFunctional, DeblurWithIdentityIsL2)
{
    std::mt19937_64 rng(2);
    auto d = make_domain(2, {5, 5}, 1.0, 1.0);
    auto k = std::make_shared<const NonlocalKernel>(d, 0.5, 1.0);
    const auto u0 = GridFunction::zero_extended(d, randn(25, rng));
    const auto u = GridFunction::zero_extended(d, randn(25, rng));
    const auto fb = Functional::deblur(TvVariant::Riesz, k, BlurOperator::identity(2), 3.0, u0);
    const auto fr = Functional::denoise(TvVariant::Riesz, k, RegressionTerm::l2(u0, 3.0));
    EXPECT_NEAR(fb(u), fr(u), 1e-12 * fr(u));
}

TEST(EvalFunctional, ModeMismatchRejected)
{
    auto d = make_domain(1, {3}, 1.0, 1.0);
    auto k = std::make_shared<const NonlocalKernel>(d, 0.5, 1.0);
    const auto z = GridFunction::zero_extended(d, {0, 0, 0});
    const auto p = GridFunction::prescribed(d, {0, 0, 0}, {0, 0});
    const auto fr = Functional::denoise(TvVariant::Riesz, k, RegressionTerm::l2(z, 1.0));
    const auto fg = Functional::denoise(TvVariant::Gagliardo, k, RegressionTerm::l2(p, 1.0));
    EXPECT_THROW(fr(p), std::invalid_argument);
    EXPECT_THROW(fg(z), std::invalid_argument);
}

TEST(EvalFunctional, Convexity)
{
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    auto d = make_domain(2, {6, 5}, 1.0, 2.0);
    auto k = std::make_shared<const NonlocalKernel>(d, 0.5, 2.0);
    const auto ex = randn(d->collar_count(), rng);
    const auto u0 = GridFunction::prescribed(d, randn(30, rng), ex);
    std::vector<Functional> fs;
    for (const auto& r : all_terms(u0)) fs.push_back(Functional::denoise(TvVariant::Gagliardo, k, r));
    const auto z0 = GridFunction::zero_extended(d, randn(30, rng));
    fs.push_back(Functional::deblur(TvVariant::Riesz, k, BlurOperator::gaussian(2, 1.0), 2.0, z0));
    for (const auto& f : fs) {
        const bool riesz = f.tv_variant() == TvVariant::Riesz;
        for (int t = 0; t < 10; ++t) {
            const auto a = randn(30, rng), b = randn(30, rng);
            std::vector<double> m(30);
            for (int i = 0; i < 30; ++i) m[i] = 0.5 * (a[i] + b[i]);
            const auto mk = [&](std::vector<double> v) {
                return riesz ? GridFunction::zero_extended(d, std::move(v)) : GridFunction::prescribed(d, std::move(v), ex);
            };
            EXPECT_GE(0.5 * f(mk(a)) + 0.5 * f(mk(b)) - f(mk(m)), -1e-10);
        }
    }
}

TEST(EvalFunctional, DeblurStrictConvexity)
{
    std::mt19937_64 rng(6);
    auto d = make_domain(2, {6, 6}, 1.0, 1.0);
    auto k = std::make_shared<const NonlocalKernel>(d, 0.5, 1.0);
    const double kappa = 4.0;
    const auto blur = BlurOperator::gaussian(2, 1.2);
    const auto f = Functional::deblur(TvVariant::Riesz, k, blur, kappa, GridFunction::zero_extended(d, randn(36, rng)));
    for (int t = 0; t < 10; ++t) {
        const auto a = randn(36, rng), b = randn(36, rng);
        std::vector<double> m(36), diff(36);
        for (int i = 0; i < 36; ++i) {
            m[i] = 0.5 * (a[i] + b[i]);
            diff[i] = a[i] - b[i];
        }
        const auto kd = blur.apply(*d, diff);
        double nk = 0.0;
        for (double x : kd) nk += x * x;
        const auto g = [&](const std::vector<double>& v) { return f(GridFunction::zero_extended(d, v)); };
        EXPECT_GE(0.5 * g(a) + 0.5 * g(b) - g(m), kappa / 8.0 * nk - 1e-12);
    }
}

TEST(Blur, DcAndIdentity)
{
    std::mt19937_64 rng(8);
    for (int dim : {1, 2}) {
        auto d = dim == 1 ? make_domain(1, {13}, 1.0, 0.0) : make_domain(2, {7, 9}, 1.0, 0.0);
        const auto ones = std::vector<double>(d->interior_count(), 1.0);
        for (const auto& k : {BlurOperator::gaussian(dim, 0.8), BlurOperator::gaussian(dim, 1.5)})
            for (double x : k.apply(*d, ones)) EXPECT_EQ(x, 1.0);
        const auto u = randn(d->interior_count(), rng);
        EXPECT_EQ(BlurOperator::identity(dim).apply(*d, u), u);
    }
}

TEST(Blur, HandConvolution)
{
    auto d = make_domain(1, {3}, 1.0, 0.0);
    const BlurOperator k(1, 1, {0.25, 0.5, 0.25});
    const auto y = k.apply(*d, std::vector<double>{0, 4, 0});
    EXPECT_DOUBLE_EQ(y[1], 2.0);
    EXPECT_DOUBLE_EQ(y[0], 1.0); // replicate pad: 0.25*0 + 0.5*0 + 0.25*4
}

TEST(Blur, AdjointIdentity)
{
    std::mt19937_64 rng(10);
    auto d = make_domain(2, {8, 6}, 1.0, 0.0);
    const auto k = BlurOperator::gaussian(2, 1.3);
    const auto u = randn(48, rng), y = randn(48, rng);
    const auto ku = k.apply(*d, u), kty = k.apply_adjoint(*d, y);
    double a = 0.0, b = 0.0;
    for (int i = 0; i < 48; ++i) {
        a += ku[i] * y[i];
        b += u[i] * kty[i];
    }
    EXPECT_NEAR(a, b, 1e-12 * std::abs(a));
}

TEST(Blur, RejectsBadStencils)
{
    EXPECT_THROW(BlurOperator(1, 1, {0.2, 0.5, 0.3}), std::invalid_argument);
    EXPECT_THROW(BlurOperator(1, 1, {-0.1, 1.2, -0.1}), std::invalid_argument);
    EXPECT_THROW(BlurOperator(1, 1, {0.5, 0.5}), std::invalid_argument);
    // symbol 1 - 2*0.5*(1 - cos) vanishes at the Nyquist frequency
    EXPECT_THROW(BlurOperator(1, 1, {0.5, 0.0, 0.5}), std::invalid_argument);
    // wide Gaussians are numerically singular near Nyquist whatever the radius
    EXPECT_THROW(BlurOperator::gaussian(2, 3.0), std::invalid_argument);
    // a 3 sigma cut of sigma = 1.5 goes negative; the default radius widens past it
    EXPECT_THROW(BlurOperator::gaussian(1, 1.5, 5), std::invalid_argument);
    EXPECT_GT(BlurOperator::gaussian(1, 1.5).radius(), 5);
}

TEST(Blur, InjectiveOnTheGrid)
{
    auto d = make_domain(2, {10, 10}, 1.0, 0.0);
    const auto k = BlurOperator::gaussian(2, 1.0);
    EXPECT_GT(k.min_symbol(), 1e-12);
    EXPECT_GT(smallest_singular_value(k, *d), 1e-12);
}

TEST(Prox, Examples)
{
    auto d = make_domain(1, {1}, 1.0, 0.0);
    const auto zero = GridFunction::zero_extended(d, {0.0});
    EXPECT_DOUBLE_EQ(RegressionTerm::l2(zero, 1.0).prox(0, 2.0, 1.0), 1.0);
    EXPECT_DOUBLE_EQ(RegressionTerm::l1(zero, 1.0).prox(0, 2.0, 0.5), 1.5);
    const auto datum = GridFunction::zero_extended(d, {0.4});
    for (const auto& r : all_terms(datum)) EXPECT_DOUBLE_EQ(r.prox(0, 0.4, 0.7), 0.4);
}

TEST(Prox, SubgradientOptimality)
{
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> uni(-2.0, 2.0);
    auto d = make_domain(1, {100}, 1.0, 0.0);
    const auto datum = GridFunction::zero_extended(d, randn(100, rng));
    for (const auto& r : all_terms(datum))
        for (std::size_t i = 0; i < 100; ++i) {
            const double w = uni(rng), s = 0.01 + std::abs(uni(rng));
            const double v = r.prox(i, w, s);
            const auto [lo, hi] = r.subdifferential(i, v);
            const double g = (w - v) / s;
            EXPECT_GE(g, lo - 1e-10);
            EXPECT_LE(g, hi + 1e-10);
        }
}

TEST(Prox, Nonexpansive)
{
    std::mt19937_64 rng(14);
    std::uniform_real_distribution<double> uni(-2.0, 2.0);
    auto d = make_domain(1, {20}, 1.0, 0.0);
    const auto datum = GridFunction::zero_extended(d, randn(20, rng));
    for (const auto& r : all_terms(datum))
        for (int t = 0; t < 50; ++t) {
            const std::size_t i = t % 20;
            const double w1 = uni(rng), w2 = uni(rng), s = std::abs(uni(rng)) + 0.01;
            EXPECT_LE(std::abs(r.prox(i, w1, s) - r.prox(i, w2, s)), std::abs(w1 - w2) + 1e-10);
        }
}

TEST(Prox, RejectsBadParameters)
{
    auto d = make_domain(1, {1}, 1.0, 0.0);
    const auto z = GridFunction::zero_extended(d, {0.0});
    EXPECT_THROW(RegressionTerm::l2(z, 0.5), std::invalid_argument);
    EXPECT_THROW(RegressionTerm::quantile(z, 1.0, 1.0), std::invalid_argument);
    EXPECT_THROW(RegressionTerm::huber(z, 1.0, 0.0), std::invalid_argument);
    EXPECT_THROW(RegressionTerm::l2(z, 1.0).prox(z, 0.0), std::invalid_argument);
}

TEST(DeblurProx, IdentityReducesToL2)
{
    std::mt19937_64 rng(16);
    auto d = make_domain(2, {4, 4}, 1.0, 0.0);
    const auto u0 = GridFunction::zero_extended(d, randn(16, rng));
    const auto w = GridFunction::zero_extended(d, randn(16, rng));
    const auto v = deblur_data_prox(BlurOperator::identity(2), 2.0, u0, w, 0.3);
    const auto l2 = RegressionTerm::l2(u0, 2.0).prox(w, 0.3);
    for (int i = 0; i < 16; ++i) EXPECT_NEAR(v[i], l2[i], 1e-10);
    const auto fixed = deblur_data_prox(BlurOperator::identity(2), 2.0, u0, u0, 0.3);
    for (int i = 0; i < 16; ++i) EXPECT_NEAR(fixed[i], u0[i], 1e-10);
}

TEST(DeblurProx, TwoNodeHandSolve)
{
    // K = [[3/4, 1/4], [1/4, 3/4]] under replicate padding; (I + K^T K) v = (1, 0)
    auto d = make_domain(1, {2}, 1.0, 0.0);
    const BlurOperator k(1, 1, {0.25, 0.5, 0.25});
    const auto u0 = GridFunction::zero_extended(d, {0.0, 0.0});
    const auto res = deblur_data_prox_solve(k, 1.0, u0, std::vector<double>{1.0, 0.0}, 1.0);
    EXPECT_NEAR(res.x[0], 0.65, 1e-10);
    EXPECT_NEAR(res.x[1], -0.15, 1e-10);
    EXPECT_LE(res.relative_residual, 1e-10);
}

TEST(DeblurProx, ResidualCertified)
{
    std::mt19937_64 rng(18);
    auto d = make_domain(2, {16, 16}, 1.0, 0.0);
    const auto u0 = GridFunction::zero_extended(d, randn(256, rng));
    const auto w = randn(256, rng);
    const auto res = deblur_data_prox_solve(BlurOperator::gaussian(2, 1.5), 50.0, u0, w, 2.0);
    EXPECT_LE(res.relative_residual, 1e-10);
}

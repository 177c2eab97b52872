#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fracflow/mollify.hpp"

using namespace fracflow;

namespace {

Trajectory random_traj(std::shared_ptr<const DiscreteDomain> d, std::size_t steps, double tau, std::uint64_t seed,
                       bool zero_ext = true)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    std::vector<double> ex(d->collar_count());
    for (double& x : ex) x = g(rng);
    std::vector<GridFunction> s;
    for (std::size_t k = 0; k <= steps; ++k) {
        std::vector<double> v(d->interior_count());
        for (double& x : v) x = g(rng);
        s.push_back(zero_ext ? GridFunction::zero_extended(d, v) : GridFunction::prescribed(d, v, ex));
    }
    return Trajectory(tau, std::move(s));
}

} // namespace

TEST(ExpMollify, ConstantStaysConstant)
{
    auto d = make_domain(1, {5}, 1.0, 0.0);
    const auto c = GridFunction::zero_extended(d, std::vector<double>(5, 2.5));
    const auto m = exp_mollify(Trajectory::constant(c, 0.1, 10), {0.3, c});
    for (const auto& s : m.slices())
        for (double x : s.interior()) EXPECT_NEAR(x, 2.5, 1e-14);
}

TEST(ExpMollify, StepResponse)
{
    // v = 1 for t > 0, anchor 0: [v]_h(h) = 1 - e^{-1}
    auto d = make_domain(1, {1}, 1.0, 0.0);
    const double h = 1.0, tau = h / 256.0;
    std::vector<GridFunction> s{GridFunction::zero_extended(d, {0.0})};
    for (int k = 0; k < 256; ++k) s.push_back(GridFunction::zero_extended(d, {1.0}));
    const auto m = exp_mollify(Trajectory(tau, s), {h, s[0]});
    EXPECT_NEAR(m[256][0], 1.0 - std::exp(-1.0), 1e-3);
}

TEST(ExpMollify, Linear)
{
    auto d = make_domain(2, {3, 4}, 0.5, 0.0);
    const auto a = random_traj(d, 6, 0.1, 1), b = random_traj(d, 6, 0.1, 2);
    std::vector<GridFunction> comb;
    for (std::size_t k = 0; k <= 6; ++k) {
        std::vector<double> v(12);
        for (int i = 0; i < 12; ++i) v[i] = 2.0 * a[k][i] - 3.0 * b[k][i];
        comb.push_back(GridFunction::zero_extended(d, v));
    }
    const Trajectory c(0.1, comb);
    const auto ma = exp_mollify(a, {0.2, a[0]}), mb = exp_mollify(b, {0.2, b[0]}), mc = exp_mollify(c, {0.2, c[0]});
    for (std::size_t k = 0; k <= 6; ++k)
        for (int i = 0; i < 12; ++i) EXPECT_NEAR(mc[k][i], 2.0 * ma[k][i] - 3.0 * mb[k][i], 1e-12);
}

TEST(ExpMollify, OdeResidual)
{
    auto d = make_domain(1, {7}, 0.2, 0.0);
    for (double h : {0.05, 0.3, 2.0}) {
        const auto t = random_traj(d, 12, 0.04, 3);
        EXPECT_LE(mollifier_ode_residual(t, {h, t[0]}), 1e-12);
    }
}

TEST(ExpMollify, SliceReferenceIsFirstOrder)
{
    // against end-point values the residual on a smooth trajectory halves with tau
    auto d = make_domain(1, {1}, 1.0, 0.0);
    const auto smooth = [&](int steps) {
        const double tau = 1.0 / steps;
        std::vector<GridFunction> s;
        for (int k = 0; k <= steps; ++k) s.push_back(GridFunction::zero_extended(d, {std::sin(3.0 * k * tau)}));
        return Trajectory(tau, s);
    };
    const auto a = smooth(64), b = smooth(128);
    const double ra = mollifier_ode_residual(a, {0.5, a[0]}, OdeReference::Slices);
    const double rb = mollifier_ode_residual(b, {0.5, b[0]}, OdeReference::Slices);
    EXPECT_GT(ra, 0.0);
    EXPECT_NEAR(ra / rb, 2.0, 0.2);
}

TEST(ExpMollify, RejectsBadWidth)
{
    auto d = make_domain(1, {2}, 1.0, 0.0);
    const auto t = random_traj(d, 3, 0.1, 4);
    EXPECT_THROW(exp_mollify(t, {0.0, t[0]}), std::invalid_argument);
    EXPECT_THROW(exp_mollify(t, {-1.0, t[0]}), std::invalid_argument);
}

TEST(Commutation, TvOfConstantRandomAndJump)
{
    auto d = make_domain(2, {5, 5}, 1.0, 2.0);
    NonlocalKernel k(d, 0.5, 2.0);
    std::vector<Trajectory> trajs{Trajectory::constant(GridFunction::zero_extended(d, std::vector<double>(25, 1.0)), 0.1, 5),
                                  random_traj(d, 8, 0.1, 5)};
    std::vector<GridFunction> jump{GridFunction::zero_extended(d, std::vector<double>(25, 0.0))};
    for (int k = 0; k < 6; ++k) jump.push_back(GridFunction::zero_extended(d, std::vector<double>(25, 1.0)));
    trajs.emplace_back(0.1, jump);
    for (const auto& t : trajs)
        for (auto v : {TvVariant::Riesz, TvVariant::Gagliardo})
            for (double s : tv_commutation_check(t, {0.25, t[0]}, v, k)) EXPECT_GE(s, -1e-10);
    // mixing two different random slices gives a strictly positive gap
    const auto mixed = random_traj(d, 6, 0.1, 6);
    EXPECT_GT(tv_commutation_check(mixed, {0.25, mixed[0]}, TvVariant::Riesz, k)[1], 0.0);
}

TEST(Commutation, FunctionalAndDeblur)
{
    auto d = make_domain(2, {6, 6}, 1.0, 1.0);
    auto k = std::make_shared<const NonlocalKernel>(d, 0.5, 1.0);
    const auto t = random_traj(d, 6, 0.2, 7);
    const auto u0 = random_traj(d, 0, 1.0, 8)[0];
    const auto blur = BlurOperator::gaussian(2, 1.0);
    for (const auto& f : {Functional::denoise(TvVariant::Riesz, k, RegressionTerm::l1(u0, 2.0)),
                          Functional::deblur(TvVariant::Riesz, k, blur, 3.0, u0)})
        for (double s : functional_commutation_check(t, {0.3, t[0]}, f)) EXPECT_GE(s, -1e-10);
    EXPECT_GE(deblur_pointwise_commutation(t, {0.3, t[0]}, blur, u0), -1e-12);
}

TEST(Steklov, HandExample)
{
    auto d = make_domain(1, {1}, 1.0, 0.0);
    const Trajectory t(1.0, {GridFunction::zero_extended(d, {0.0}), GridFunction::zero_extended(d, {1.0}),
                             GridFunction::zero_extended(d, {1.0})});
    const auto s = steklov_average(t, 1.0);
    EXPECT_NEAR(s[0][0], 1.0, 1e-14);
    EXPECT_THROW(steklov_average(t, 2.0), std::invalid_argument);
    EXPECT_THROW(steklov_average(t, 0.0), std::invalid_argument);
}

TEST(Steklov, StaysInTheConvexHull)
{
    auto d = make_domain(1, {4}, 1.0, 0.0);
    const auto t = random_traj(d, 10, 0.1, 9);
    const auto s = steklov_average(t, 0.35);
    for (std::size_t k = 0; k <= s.steps(); ++k)
        for (int i = 0; i < 4; ++i) {
            double lo = 1e300, hi = -1e300;
            for (std::size_t j = 1; j <= t.steps(); ++j) {
                lo = std::min(lo, t[j][i]);
                hi = std::max(hi, t[j][i]);
            }
            EXPECT_GE(s[k][i], lo - 1e-12);
            EXPECT_LE(s[k][i], hi + 1e-12);
        }
}

TEST(MollifierBounds, NormBoundAndSupDistance)
{
    auto d = make_domain(2, {4, 4}, 0.5, 0.0);
    const auto t = random_traj(d, 20, 0.05, 10);
    EXPECT_GE(mollifier_norm_bound_slack(t, {0.2, t[0]}), -1e-12);

    // a continuous trajectory: sup distance shrinks with h
    std::vector<GridFunction> sm;
    for (int k = 0; k <= 40; ++k) {
        std::vector<double> v(16);
        for (int i = 0; i < 16; ++i) v[i] = std::sin(0.05 * k + i);
        sm.push_back(GridFunction::zero_extended(d, v));
    }
    const Trajectory smooth(0.05, sm);
    double prev = 1e300;
    for (double h : {0.4, 0.2, 0.1, 0.05}) {
        const double s = mollifier_sup_distance(smooth, {h, smooth[0]});
        EXPECT_LE(s, prev);
        prev = s;
    }
}

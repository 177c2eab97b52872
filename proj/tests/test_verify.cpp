#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "fracflow/cli.hpp"
#include "fracflow/verify.hpp"

using namespace fracflow;

namespace {

struct Flow {
    Functional f;
    FlowResult run;
    double gap;
};

Flow sine_flow(int n = 16, double kappa = 10.0)
{
    auto dom = make_domain(1, {n}, 1.0 / n, 4.0 / n);
    auto k = std::make_shared<const NonlocalKernel>(dom, 0.5, 4.0 / n);
    auto u0 = make_datum(dom, sine_profile(*dom), ExteriorMode::Prescribed);
    auto f = Functional::denoise(TvVariant::Gagliardo, k, RegressionTerm::l2(u0, kappa));
    SolverParams sp;
    sp.gap_tolerance = 1e-10;
    auto run = run_flow(u0, f, 1.0 / 32, 0.25, sp);
    return {f, std::move(run), sp.gap_tolerance};
}

} // namespace

TEST(ViSlack, SelfComparisonIsZero)
{
    const auto fl = sine_flow();
    EXPECT_NEAR(vi_slack(fl.run.trajectory, fl.run.trajectory, fl.f), 0.0, 1e-14);
}

TEST(ViSlack, OneNodeClosedForm)
{
    // F(v) = v^2 / 2 on one node; one step from u0 = 1 with tau = 1 gives u1 = 1/2.
    // v = (1, 0): <0 - 1, 0 - 1/2> + F(0) - F(1/2) - (1/2)^2/2 = 1/2 - 1/8 - 1/8 = 1/4
    auto d = make_domain(1, {1}, 1.0, 0.0);
    const auto f = Functional::fidelity_only(RegressionTerm::l2(GridFunction::zero_extended(d, {0.0}), 1.0));
    const auto g = [&](double x) { return GridFunction::zero_extended(d, {x}); };
    const Trajectory u(1.0, {g(1.0), g(0.5)});
    EXPECT_NEAR(vi_slack(u, Trajectory(1.0, {g(1.0), g(0.0)}), f), 0.25, 1e-15);
    EXPECT_THROW(vi_slack(u, Trajectory(0.5, {g(1.0), g(0.0)}), f), std::invalid_argument);
}

TEST(ComparisonLibrary, CoversEveryProvenance)
{
    const auto fl = sine_flow();
    const auto& u = fl.run.trajectory;
    const auto lib = comparison_library(u, fl.f);
    EXPECT_GE(lib.size(), 6u);
    std::set<Provenance> tags;
    for (const auto& m : lib) tags.insert(m.tag);
    EXPECT_EQ(tags.size(), 5u);
    const double tol = vi_tolerance(fl.gap, u, fl.f(u[0]));
    for (const auto& m : lib) {
        EXPECT_TRUE(m.v[0].same_exterior(u[0]));
        EXPECT_GE(vi_slack(u, m.v, fl.f), -tol) << m.label;
    }
}

TEST(ComparisonLibrary, BumpIsCompactlySupported)
{
    const auto fl = sine_flow();
    const auto& u = fl.run.trajectory;
    const auto phi = compact_bump(u, 1.0, 3);
    const std::size_t K = u.steps();
    for (std::size_t k : {std::size_t{0}, std::size_t{1}, K - 1, K})
        for (double x : phi[k]) EXPECT_EQ(x, 0.0);
    for (const auto& s : phi) {
        EXPECT_EQ(s[0], 0.0);
        EXPECT_EQ(s[1], 0.0);
        EXPECT_EQ(s[s.size() - 1], 0.0);
        EXPECT_EQ(s[s.size() - 2], 0.0);
    }
    double peak = 0.0;
    for (double x : phi[K / 2]) peak = std::max(peak, std::abs(x));
    EXPECT_GT(peak, 0.0);
}

TEST(ParabolicMin, ZeroAndSigns)
{
    const auto fl = sine_flow();
    const auto& u = fl.run.trajectory;
    const std::vector<std::vector<double>> zero(u.steps() + 1, std::vector<double>(16, 0.0));
    EXPECT_EQ(parabolic_min_slack(u, zero, fl.f), 0.0);
    const double tol = vi_tolerance(fl.gap, u, fl.f(u[0]));
    for (double sign : {1.0, -1.0}) {
        auto phi = compact_bump(u, sign * 0.1, 11);
        EXPECT_GE(parabolic_min_slack(u, phi, fl.f), -tol);
    }
    auto bad = zero;
    bad.back()[4] = 1.0;
    EXPECT_THROW(parabolic_min_slack(u, bad, fl.f), std::invalid_argument);
}

TEST(Contraction, IdenticalAndPureL2Rate)
{
    const auto fl = sine_flow(8);
    for (double s : contraction_check(fl.run.trajectory, fl.run.trajectory)) EXPECT_EQ(s, 0.0);

    // without TV each step is (u + tau kappa f)/(1 + tau kappa): distances shrink by (1 + tau kappa)^-1
    auto d = make_domain(1, {3}, 1.0, 0.0);
    const double kappa = 3.0, tau = 0.1;
    const auto f = Functional::fidelity_only(RegressionTerm::l2(GridFunction::zero_extended(d, {0.1, 0.2, 0.3}), kappa));
    const auto a = run_flow(GridFunction::zero_extended(d, {1.0, -1.0, 2.0}), f, tau, 0.5);
    const auto b = run_flow(GridFunction::zero_extended(d, {0.0, 0.5, 1.0}), f, tau, 0.5);
    const auto s = contraction_check(a.trajectory, b.trajectory);
    double dk = 0.5 * l2_dist_sq(a.trajectory[0], b.trajectory[0]);
    for (double x : s) {
        EXPECT_NEAR(x, dk * (1.0 - std::pow(1.0 + tau * kappa, -2.0)), 1e-9);
        dk *= std::pow(1.0 + tau * kappa, -2.0);
    }
}

TEST(InitialCondition, ConstantTrajectoryHasFullSlack)
{
    const auto fl = sine_flow();
    const auto& u0 = fl.run.trajectory[0];
    const auto c = Trajectory::constant(u0, 1.0 / 32, 8);
    const auto s = initial_condition_check(c, fl.f);
    ASSERT_EQ(s.size(), 2u);
    EXPECT_DOUBLE_EQ(s[1], 2.0 / 32 * fl.f(u0));
    for (double x : initial_condition_check(fl.run.trajectory, fl.f)) EXPECT_GE(x, -1e-8);
}

TEST(Localization, FullIntervalMatchesGlobalSlack)
{
    const auto fl = sine_flow();
    const auto& u = fl.run.trajectory;
    const auto lib = comparison_library(u, fl.f);
    for (const auto& m : lib)
        EXPECT_NEAR(localized_vi_slack(u, m.v, fl.f, 0, u.steps()), vi_slack(u, m.v, fl.f), 1e-12);
    const auto reps = localization_check(u, 0.0625, 0.1875, fl.f, vi_tolerance(fl.gap, u, fl.f(u[0])));
    EXPECT_EQ(reps.size(), lib.size());
    for (const auto& r : reps) EXPECT_TRUE(r.pass) << r.check << " " << r.slack;
    EXPECT_THROW(localization_check(u, 0.01, 0.1875, fl.f, 0.0), std::invalid_argument);
    EXPECT_THROW(localized_vi_slack(u, u, fl.f, 3, 3), std::invalid_argument);
}

TEST(Reports, PassRule)
{
    EXPECT_TRUE(make_report("x", -0.5, 0.5).pass);
    EXPECT_FALSE(make_report("x", -0.51, 0.5).pass);
    EXPECT_FALSE(std::signbit(make_report("x", -0.0, 0.0).slack));
}

TEST(WideMinimality, ConstantTrajectoryIsNotAMinimizer)
{
    auto dom = make_domain(1, {12}, 1.0 / 12, 4.0 / 12);
    auto k = std::make_shared<const NonlocalKernel>(dom, 0.5, 4.0 / 12);
    auto u0 = make_datum(dom, sine_profile(*dom), ExteriorMode::Prescribed);
    auto f = Functional::denoise(TvVariant::Gagliardo, k, RegressionTerm::l2(u0, 10.0));
    const WideProblem p(f, u0, 0.1, 1.0 / 32, 0.25);
    const auto reps = wide_minimality_reports(p, Trajectory::constant(u0, p.tau(), p.steps()));
    EXPECT_EQ(reps.size(), 15u);
    bool any_fail = false;
    for (const auto& r : reps) any_fail |= !r.pass;
    EXPECT_TRUE(any_fail);
    for (const auto& r : wide_minimality_reports(p, minimize_wide(p).trajectory)) EXPECT_TRUE(r.pass) << r.instance;
}

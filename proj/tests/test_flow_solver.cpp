#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fracflow/cli.hpp"
#include "fracflow/flow_solver.hpp"
#include "fracflow/parallel.hpp"
#include "fracflow/verify.hpp"

using namespace fracflow;

namespace {

struct Instance {
    std::shared_ptr<const DiscreteDomain> dom;
    std::shared_ptr<const NonlocalKernel> kernel;
    GridFunction u0;
    Functional f;
};

Instance sine_gagliardo(int n = 16, double kappa = 10.0)
{
    auto dom = make_domain(1, {n}, 1.0 / n, 4.0 / n);
    auto k = std::make_shared<const NonlocalKernel>(dom, 0.5, 4.0 / n);
    auto u0 = make_datum(dom, sine_profile(*dom), ExteriorMode::Prescribed);
    auto f = Functional::denoise(TvVariant::Gagliardo, k, RegressionTerm::l2(u0, kappa));
    return {dom, k, u0, f};
}

Instance noisy_disk_riesz(int n = 12)
{
    auto dom = make_domain(2, {n, n}, 1.0, 2.0);
    auto k = std::make_shared<const NonlocalKernel>(dom, 0.5, 2.0);
    auto img = disk_image(*dom);
    add_noise(img, 0.1, 3);
    auto u0 = make_datum(dom, img, ExteriorMode::ZeroExtension);
    auto f = Functional::denoise(TvVariant::Riesz, k, RegressionTerm::l2(u0, 1.0));
    return {dom, k, u0, f};
}

} // namespace

TEST(OperatorNorm, EmptyIsZero)
{
    EXPECT_EQ(spectral_norm_estimate(CsrMatrix(4, 3, {})), 0.0);
    EXPECT_EQ(spectral_norm_estimate(CsrMatrix()), 0.0);
}

TEST(OperatorNorm, SingleRowMatrix)
{
    const double a = 3.0;
    const CsrMatrix m(1, 2, {{0, 0, a}, {0, 1, -a}});
    EXPECT_NEAR(spectral_norm_estimate(m), 1.01 * a * std::sqrt(2.0), 1e-12);
}

TEST(OperatorNorm, MonotoneUnderNestedKernels)
{
    auto d = make_domain(2, {8, 8}, 1.0, 3.0);
    const auto ex = GridFunction::zero_extended(d, std::vector<double>(64, 0.0));
    double prev = 0.0;
    for (double r : {1.0, 2.0, 3.0}) {
        NonlocalKernel k(d, 0.5, r);
        const double n = operator_norm(k, TvVariant::Gagliardo, ex);
        EXPECT_GE(n, prev * (1.0 - 1e-6));
        prev = n;
    }
}

TEST(ProxStep, QuadraticClosedForm)
{
    auto d = make_domain(1, {1}, 1.0, 0.0);
    const auto f = Functional::fidelity_only(RegressionTerm::l2(GridFunction::zero_extended(d, {0.0}), 1.0));
    const auto step = prox_step(GridFunction::zero_extended(d, {2.0}), f, 1.0);
    EXPECT_NEAR(step.u[0], 1.0, 1e-12);
}

TEST(ProxStep, MinimizerIsAFixedPoint)
{
    // a constant equal to the datum minimizes F, so the step leaves it in place
    auto d = make_domain(1, {6}, 1.0, 2.0);
    auto k = std::make_shared<const NonlocalKernel>(d, 0.5, 2.0);
    const auto u0 = GridFunction::prescribed(d, std::vector<double>(6, 0.3), std::vector<double>(d->collar_count(), 0.3));
    const auto f = Functional::denoise(TvVariant::Gagliardo, k, RegressionTerm::l2(u0, 2.0));
    const auto step = prox_step(u0, f, 0.1);
    for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(step.u[i], 0.3, 1e-9);
}

TEST(ProxStep, BeatsTheStartAndKeepsTheExterior)
{
    auto in = sine_gagliardo();
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g(0.0, 0.2);
    std::vector<double> v(in.u0.interior().begin(), in.u0.interior().end());
    for (double& x : v) x += g(rng);
    const auto start = in.u0.with_interior(v);
    const double tau = 0.05;
    const auto step = prox_step(start, in.f, tau);
    const double obj = in.f(step.u) + l2_dist_sq(step.u, start) / (2.0 * tau);
    EXPECT_LE(obj, in.f(start) + 1e-12);
    EXPECT_GE(step.certificate.gap, -1e-12);
    EXPECT_TRUE(step.certificate.converged);
    const auto a = step.u.full(), b = start.full();
    for (std::size_t i = in.dom->interior_count(); i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(ProxStep, RejectsBadTau)
{
    auto in = sine_gagliardo(8);
    EXPECT_THROW(prox_step(in.u0, in.f, 0.0), std::invalid_argument);
    EXPECT_THROW(prox_step(in.u0, in.f, -1.0), std::invalid_argument);
}

TEST(RunFlow, StepCount)
{
    EXPECT_EQ(step_count(0.1, 1.0), 10u);
    EXPECT_EQ(step_count(1.0 / 64, 0.5), 32u);
    EXPECT_THROW(step_count(0.3, 1.0), std::invalid_argument);
    EXPECT_THROW(step_count(0.0, 1.0), std::invalid_argument);
    EXPECT_THROW(step_count(0.1, -1.0), std::invalid_argument);
}

TEST(RunFlow, ConstantDatumGivesConstantTrajectory)
{
    auto d = make_domain(2, {6, 6}, 1.0, 2.0);
    auto k = std::make_shared<const NonlocalKernel>(d, 0.5, 2.0);
    const auto u0 = GridFunction::prescribed(d, std::vector<double>(36, 1.5), std::vector<double>(d->collar_count(), 1.5));
    const auto f = Functional::denoise(TvVariant::Gagliardo, k, RegressionTerm::l2(u0, 1.0));
    const auto run = run_flow(u0, f, 0.1, 0.5);
    for (const auto& s : run.trajectory.slices())
        for (double x : s.interior()) EXPECT_NEAR(x, 1.5, 1e-9);
}

TEST(RunFlow, EnergyBounds)
{
    auto in = sine_gagliardo();
    SolverParams sp;
    sp.gap_tolerance = 1e-10;
    const auto run = run_flow(in.u0, in.f, 1.0 / 32, 0.25, sp);
    const auto& u = run.trajectory;
    ASSERT_EQ(run.trace.size(), u.steps() + 1);
    const double measure = in.dom->cell_volume() * in.dom->interior_count();
    for (std::size_t k = 1; k < run.trace.size(); ++k)
        EXPECT_LE(run.trace[k].energy, run.trace[k - 1].energy + 2.0 * sp.gap_tolerance * measure);

    // telescoped dissipation and the Hoelder-1/2 bound
    const auto r = dissipation_report(u, in.f);
    EXPECT_GE(r.kinetic_slack, 0.0);
    EXPECT_LE(r.holder_ratio, 1.001 * std::sqrt(2.0 * r.f0));
    double kin = 0.0;
    for (const auto& row : run.trace) kin += 1.0 / 32 * row.step_norm_sq;
    EXPECT_LE(kin, 2.0 * r.f0 * 1.0000001);
    EXPECT_LE(kin + run.trace.back().energy, r.f0 + 1e-6);
}

TEST(RunFlow, DistanceToDatumBoundedByInitialEnergy)
{
    auto in = noisy_disk_riesz();
    const auto run = run_flow(in.u0, in.f, 0.05, 0.25);
    const double f0 = in.f(in.u0);
    for (std::size_t k = 1; k <= run.trajectory.steps(); ++k)
        EXPECT_LE(0.5 * l2_dist_sq(run.trajectory[k], in.u0), run.trajectory.time(k) * f0 + 1e-8);
}

TEST(RunFlow, DeterministicAcrossRunsAndThreads)
{
    auto in = noisy_disk_riesz(10);
    set_threads(1);
    const auto a = run_flow(in.u0, in.f, 0.05, 0.2);
    const auto b = run_flow(in.u0, in.f, 0.05, 0.2);
    set_threads(4);
    const auto c = run_flow(in.u0, in.f, 0.05, 0.2);
    set_threads(1);
    for (std::size_t k = 0; k <= a.trajectory.steps(); ++k) {
        EXPECT_EQ(a.trajectory[k].full(), b.trajectory[k].full());
        EXPECT_EQ(a.trajectory[k].full(), c.trajectory[k].full());
    }
}

TEST(RunFlow, SolverErrorNamesTheStep)
{
    auto in = noisy_disk_riesz(10);
    SolverParams sp;
    sp.max_iterations = 3;
    sp.gap_tolerance = 1e-14;
    try {
        run_flow(in.u0, in.f, 0.05, 0.2, sp);
        FAIL() << "expected SolverError";
    } catch (const SolverError& e) {
        EXPECT_EQ(e.step(), 1u);
        EXPECT_FALSE(e.certificate().converged);
        EXPECT_NE(std::string(e.what()).find("step 1"), std::string::npos);
    }
    const auto soft = run_flow(in.u0, in.f, 0.05, 0.2, sp, false);
    EXPECT_EQ(soft.trajectory.steps(), 4u);
}

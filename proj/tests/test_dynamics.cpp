#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gadget/dynamics.hpp"
#include "support/oracles.hpp"

using namespace gadget;

namespace {

// Piecewise-linear path through `knots` random s values over [0, t_f].
TimePath random_path(std::mt19937_64& g, double t_f, int knots) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<std::pair<double, double>> pts;
    for (int k = 0; k < knots; ++k) pts.emplace_back(t_f * k / (knots - 1), u(g));
    return TimePath::sampled(pts);
}

// Smooth path confined to (s1, 1]: a few random Fourier modes. The schedule has a
// kink at s1, which would spoil the clean dt^2 scaling the order test looks for.
TimePath smooth_path(std::mt19937_64& g, double t_f) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double a[3], ph[3];
    for (int j = 0; j < 3; ++j) {
        a[j] = 0.05 * u(g);
        ph[j] = 6.283185307179586 * u(g);
    }
    return {t_f, [=](double t) {
                double s = 0.78;
                for (int j = 0; j < 3; ++j) s += a[j] * std::sin((j + 1) * 3.141592653589793 * t / t_f + ph[j]);
                return s;
            }};
}

double max_abs(const Mat4c& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace

TEST(StepExponential, MatchesGenericMatrixExponential) {
    const auto p = SpinParams::defaults();
    for (double s : {0.0, 0.4, 0.67, 1.0})
        for (double dt : {1e-3, 0.1, 2.5}) EXPECT_LT(max_abs(step_exponential(hamiltonian(p, s), dt) - oracle::evolution(hamiltonian(p, s), dt)), 1e-12);
}

TEST(Propagate, ConstantHamiltonianIsExactExponential) {
    const auto p = SpinParams::defaults();
    const double s = 0.7, tf = 13.0;
    const auto path = TimePath::constant(s, tf);
    const auto r = propagate_unitary_with(spin_hamiltonian_of_time(p, path), tf);
    EXPECT_LT(max_abs(r.unitary - oracle::evolution(hamiltonian(p, s), tf)), 1e-10);
}

TEST(Propagate, StationaryStateOnlyAcquiresPhase) {
    const auto p = SpinParams::defaults();
    const double tf = 50.0;
    const Eigenbasis b = instantaneous_basis(p, 1.0);
    for (int k = 0; k < 4; ++k) {
        const Vec4c psi = b.vectors.col(k).cast<cplx>();
        const auto r = propagate(p, TimePath::constant(1.0, tf), psi);
        const Vec4c expect = std::polar(1.0, -kTwoPi * b.energies(k) * tf) * psi;
        EXPECT_LT((r.state - expect).norm(), 1e-10);
    }
}

TEST(Propagate, ZeroTimeIsIdentity) {
    const auto p = SpinParams::defaults();
    const auto r = propagate_unitary_with(spin_hamiltonian_of_time(p, TimePath::linear_anneal(0.0)), 0.0);
    EXPECT_EQ(r.unitary, Mat4c::Identity());
    EXPECT_EQ(r.steps, 0);
}

TEST(Propagate, RejectsUnnormalizedInitialState) {
    const auto p = SpinParams::defaults();
    EXPECT_THROW(propagate(p, TimePath::linear_anneal(1.0), Vec4c::Ones()), DomainError);
}

TEST(Propagate, StepFloorRaisesConvergenceError) {
    const auto p = SpinParams::defaults();
    PropagationOptions opt;
    opt.tolerance = 1e-14;
    opt.initial_steps = 4;
    opt.max_steps = 64;
    Vec4c psi = Vec4c::Zero();
    psi(0) = 1.0;
    EXPECT_THROW(propagate(p, TimePath::linear_anneal(50.0), psi, opt), ConvergenceError);
}

TEST(Propagate, UnitarityAndNormOverRandomPaths) {
    const auto p = SpinParams::defaults();
    std::mt19937_64 g(7);
    for (int trial = 0; trial < 50; ++trial) {
        const double tf = 1.0 + 30.0 * std::uniform_real_distribution<double>(0.0, 1.0)(g);
        const auto path = random_path(g, tf, 6);
        const auto r = propagate_unitary_with(spin_hamiltonian_of_time(p, path), tf);
        EXPECT_LT(unitarity_error(r.unitary), 1e-9);
        EXPECT_LT(std::abs(r.state.norm() - 1.0), 1e-9);
    }
}

TEST(Propagate, SecondOrderConvergence) {
    // e(dt) = |U(dt) - U(dt/8)|; halving dt should divide the error by about 4.
    const auto p = SpinParams::defaults();
    std::mt19937_64 g(11);
    for (int trial = 0; trial < 5; ++trial) {
        const double tf = 20.0;
        const auto path = smooth_path(g, tf);
        const auto h = spin_hamiltonian_of_time(p, path);
        const long n = 2000;
        const Mat4c ref = evolve_fixed(h, tf, 8 * n);
        const double e1 = max_abs(evolve_fixed(h, tf, n) - ref);
        const double e2 = max_abs(evolve_fixed(h, tf, 2 * n) - ref);
        const double ratio = e1 / e2;
        EXPECT_GE(ratio, 3.5) << "trial " << trial;
        EXPECT_LE(ratio, 4.5) << "trial " << trial;
    }
}

TEST(Propagate, TimeReversalUndoesEvolution) {
    const auto p = SpinParams::defaults();
    std::mt19937_64 g(3);
    const double tf = 25.0;
    const auto path = random_path(g, tf, 7);
    const auto h = spin_hamiltonian_of_time(p, path);
    const long n = 4096;
    const Mat4c fwd = evolve_fixed(h, tf, n);
    const Mat4c back = evolve_fixed([&](double t) { return Mat4(-h(tf - t)); }, tf, n);
    EXPECT_LT(max_abs(back * fwd - Mat4c::Identity()), 1e-8);
}

TEST(Propagate, ConvergedResultMeetsTolerance) {
    const auto p = SpinParams::defaults();
    const auto path = TimePath::linear_anneal(30.0);
    Vec4c psi = instantaneous_basis(p, 0.0).vectors.col(0).cast<cplx>();
    const auto r = propagate(p, path, psi);
    const Mat4c fine = evolve_fixed(spin_hamiltonian_of_time(p, path), 30.0, 4 * r.steps);
    EXPECT_LT((fine * psi - r.state).norm(), 1e-8);
}

TEST(Eigenbasis, ProblemEndIsComputationalBasisInEnergyOrder) {
    const auto p = SpinParams::defaults();
    const Eigenbasis b = instantaneous_basis(p, 1.0);
    // |01>, |11>, |10>, |00> in ascending energy.
    const int order[4] = {1, 3, 2, 0};
    for (int k = 0; k < 4; ++k) EXPECT_NEAR(b.vectors(order[k], k), 1.0, 1e-15);
    EXPECT_FALSE(b.near_degenerate);
}

TEST(Eigenbasis, DriverEndIsProductOfXEigenstates) {
    const auto p = SpinParams::defaults();
    const Eigenbasis b = instantaneous_basis(p, 0.0);
    // Ground state is |-,-> = (1,-1,-1,1)/2 up to the gauge (largest component positive).
    for (int k = 0; k < 4; ++k) EXPECT_NEAR(b.vectors.col(k).cwiseAbs().sum(), 2.0, 1e-12);
    EXPECT_NEAR(std::abs(b.vectors.col(0).dot(Vec4(0.5, -0.5, -0.5, 0.5))), 1.0, 1e-12);
    EXPECT_GT(b.vectors(0, 0), 0.0);
}

TEST(Eigenbasis, GaugeIsDeterministic) {
    const auto p = SpinParams::defaults();
    for (double s : {0.1, 0.5, 0.672, 0.9}) {
        const Eigenbasis a = instantaneous_basis(p, s), b = instantaneous_basis(p, s);
        EXPECT_EQ(a.vectors, b.vectors);
        EXPECT_EQ(a.energies, b.energies);
        for (int k = 0; k < 4; ++k) EXPECT_GT(a.vectors(gauge_index(a.vectors.col(k)), k), 0.0);
    }
}

TEST(Eigenbasis, DegeneratePairIsFlaggedAndOrderedByGaugeIndex) {
    Mat4 h = Mat4::Zero();
    h.diagonal() << 1.0, 0.0, 0.0, 2.0;
    const Eigenbasis b = eigenbasis(h);
    EXPECT_TRUE(b.near_degenerate);
    EXPECT_LT(gauge_index(b.vectors.col(0)), gauge_index(b.vectors.col(1)));
}

TEST(Sweep, FrozenPopulationsForLinearAnneal) {
    // Reference values from a scipy expm propagation on a fine grid.
    const auto p = SpinParams::defaults();
    const auto pts = ground_population_sweep(p, {20.0, 100.0});
    EXPECT_NEAR(pts[0].p0, 0.220021516275, 1e-6);
    EXPECT_NEAR(pts[1].p0, 0.600943467602, 1e-6);
}

TEST(Sweep, SuddenLimitIsGroundStateOverlap) {
    const auto p = SpinParams::defaults();
    const auto a = oracle::Spin{};
    Eigen::SelfAdjointEigenSolver<Mat4> e0(oracle::hamiltonian(a, 0.0)), e1(oracle::hamiltonian(a, 1.0));
    const double overlap = std::pow(e0.eigenvectors().col(0).dot(e1.eigenvectors().col(0)), 2);
    EXPECT_NEAR(ground_population_sweep(p, {1e-4}).front().p0, overlap, 1e-6);
}

TEST(Sweep, RejectsNonPositiveTimes) {
    EXPECT_THROW(ground_population_sweep(SpinParams::defaults(), {0.0}), DomainError);
}

TEST(Sweep, PreservesInputOrder) {
    const auto pts = ground_population_sweep(SpinParams::defaults(), {30.0, 10.0, 20.0});
    ASSERT_EQ(pts.size(), 3u);
    EXPECT_EQ(pts[0].t_f, 30.0);
    EXPECT_EQ(pts[1].t_f, 10.0);
    EXPECT_EQ(pts[2].t_f, 20.0);
}

TEST(Trace, PopulationsSumToOneAndFollowThePath) {
    const auto p = SpinParams::defaults();
    const auto path = TimePath::linear_anneal(20.0);
    const Vec4c psi = instantaneous_basis(p, 0.0).vectors.col(0).cast<cplx>();
    const auto rows = population_trace(p, path, psi, 21);
    ASSERT_EQ(rows.size(), 21u);
    EXPECT_NEAR(rows.front().populations(0), 1.0, 1e-12);
    for (const auto& r : rows) {
        EXPECT_NEAR(r.populations.sum(), 1.0, 1e-10);
        EXPECT_DOUBLE_EQ(r.s, path(r.t));
    }
    EXPECT_NEAR(rows.back().populations(0), 0.220021516275, 1e-5);
}

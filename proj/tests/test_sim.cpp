#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "otlq/errors.hpp"
#include "otlq/sim.hpp"

using namespace otlq;

namespace {
LqProblem example_uncontrollable() {
    MatrixXd A(2, 2);
    A << 1, 0, 1, 2;
    MatrixXd B(2, 1);
    B << 1, -1;
    return LqProblem::make(A, B, MatrixXd::Identity(2, 2), MatrixXd::Zero(1, 2),
                           MatrixXd::Identity(1, 1), Signal::zero(2), Signal::zero(2),
                           Signal::zero(1));
}

LqProblem scalar_problem(double a, double b_in, double Q, Signal b_sig, Signal q_sig) {
    MatrixXd A(1, 1), B(1, 1), Qm(1, 1);
    A << a;
    B << b_in;
    Qm << Q;
    return LqProblem::make(A, B, Qm, MatrixXd::Zero(1, 1), MatrixXd::Identity(1, 1),
                           std::move(b_sig), std::move(q_sig), Signal::zero(1));
}
}  // namespace

TEST_CASE("integrate_state: explicit solution of the uncontrollable example") {
    const LqProblem p = example_uncontrollable();
    VectorXd x(2);
    x << 0.8, -0.3;
    for (bool exact : {true, false}) {
        IntegrateOptions opts;
        opts.prefer_exact = exact;
        const Trajectory traj = integrate_state(p, 0.0, x, Signal::zero(1), 3.0, opts);
        CHECK((traj.states.row(0).transpose() - x).norm() == 0.0);
        for (double s : {0.5, 1.5, 3.0}) {
            const double X1 = std::exp(s) * x(0);
            const double X2 = (std::exp(2 * s) - std::exp(s)) * x(0) + std::exp(2 * s) * x(1);
            const VectorXd Xs = traj.at(s);
            const double tol = exact ? 1e-10 : 1e-7;
            CHECK(Xs(0) == doctest::Approx(X1).epsilon(tol));
            CHECK(Xs(1) == doctest::Approx(X2).epsilon(tol));
        }
    }
}

TEST_CASE("integrate_state: constant trajectory for frozen dynamics") {
    const LqProblem p = scalar_problem(0.0, 0.0, 1.0, Signal::zero(1), Signal::zero(1));
    VectorXd x(1);
    x << 2.5;
    const Trajectory traj = integrate_state(p, 0.0, x, Signal::zero(1), 5.0);
    for (double s : {0.0, 2.0, 5.0}) CHECK(traj.at(s)(0) == doctest::Approx(2.5).epsilon(1e-13));
}

TEST_CASE("integrate_state: relaxation toward the forcing level") {
    // x' = -x + 1, x(0) = 0, X(1) = 1 - e^{-1}
    const LqProblem p =
        scalar_problem(-1.0, 0.0, 1.0, Signal::constant(VectorXd::Ones(1)), Signal::zero(1));
    const Trajectory traj = integrate_state(p, 0.0, VectorXd::Zero(1), Signal::zero(1), 1.0);
    CHECK(traj.at(1.0)(0) == doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-10));
}

TEST_CASE("integrate_state: overflow names the first bad time") {
    MatrixXd A(1, 1);
    A << 40.0;
    const LqProblem p = LqProblem::make(A, MatrixXd::Identity(1, 1), MatrixXd::Identity(1, 1),
                                        MatrixXd::Zero(1, 1), MatrixXd::Identity(1, 1),
                                        Signal::zero(1), Signal::zero(1), Signal::zero(1));
    VectorXd x(1);
    x << 1.0;
    try {
        integrate_state(p, 0.0, x, Signal::zero(1), 30.0);
        FAIL("expected overflow");
    } catch (const OverflowError& e) {
        CHECK(e.first_bad_time > 0.0);
        CHECK(e.first_bad_time <= 30.0);
    }
}

TEST_CASE("integrate_state: RK4 order check") {
    // rotation + decay with known solution
    MatrixXd A(2, 2);
    A << -0.2, 1.0, -1.0, -0.2;
    const LqProblem p = LqProblem::make(A, MatrixXd::Identity(2, 2), MatrixXd::Identity(2, 2),
                                        MatrixXd::Zero(2, 2), MatrixXd::Identity(2, 2),
                                        Signal::zero(2), Signal::zero(2), Signal::zero(2));
    VectorXd x(2);
    x << 1.0, 0.0;
    const VectorXd exact = oracles::taylor_expm(A, 2.0) * x;
    IntegrateOptions o1, o2;
    o1.prefer_exact = o2.prefer_exact = false;
    o1.step = 0.02;
    o2.step = 0.01;
    const double e1 = (integrate_state(p, 0, x, Signal::zero(2), 2.0, o1).at(2.0) - exact).norm();
    const double e2 = (integrate_state(p, 0, x, Signal::zero(2), 2.0, o2).at(2.0) - exact).norm();
    CHECK(e1 / e2 > 10.0);  // order >= 4 gives ~16
}

TEST_CASE("state linearity in (x, u) without nonhomogeneity") {
    std::mt19937_64 rng(51);
    const MatrixXd A = oracles::random_stable(2, rng);
    const MatrixXd B = oracles::random_matrix(2, 1, rng);
    const LqProblem p = LqProblem::make(A, B, MatrixXd::Identity(2, 2), MatrixXd::Zero(1, 2),
                                        MatrixXd::Identity(1, 1), Signal::zero(2), Signal::zero(2),
                                        Signal::zero(1));
    VectorXd x1(2), x2(2);
    x1 << 1.0, 0.0;
    x2 << -0.5, 2.0;
    Atom a1, a2;
    a1.c = VectorXd::Ones(1);
    a1.a = -0.5;
    a2.c = VectorXd::Constant(1, 0.7);
    a2.omega = 3.0;
    a2.a = -0.1;
    const Signal u1 = Signal::closed_form(1, {a1});
    const Signal u2 = Signal::closed_form(1, {a2});
    const double T = 4.0;
    const Trajectory t1 = integrate_state(p, 0, x1, u1, T);
    const Trajectory t2 = integrate_state(p, 0, x2, u2, T);
    const Trajectory t12 = integrate_state(p, 0, VectorXd(x1 + x2), u1.plus(u2), T);
    for (double s : {1.0, 2.5, 4.0})
        CHECK((t12.at(s) - t1.at(s) - t2.at(s)).norm() < 1e-9 * (1.0 + t12.at(s).norm()));
}

TEST_CASE("cost_JT: zero data costs nothing") {
    const LqProblem p = scalar_problem(0.0, 0.0, 1.0, Signal::zero(1), Signal::zero(1));
    CHECK(cost_JT(p, 0.0, VectorXd::Zero(1), Signal::zero(1), 5.0) == doctest::Approx(0.0));
}

TEST_CASE("cost_JT: decaying quadratic cost") {
    // x' = -x, x(0) = 1, Q = 1: J_T = (1 - e^{-2T})/2
    const LqProblem p = scalar_problem(-1.0, 0.0, 1.0, Signal::zero(1), Signal::zero(1));
    VectorXd x(1);
    x << 1.0;
    for (double T : {1.0, 5.0, 20.0}) {
        CHECK(cost_JT(p, 0.0, x, Signal::zero(1), T) ==
              doctest::Approx(0.5 * (1.0 - std::exp(-2.0 * T))).epsilon(1e-10));
    }
}

TEST_CASE("cost_JT additivity across a split horizon") {
    const LqProblem p = example_uncontrollable();
    VectorXd x(2);
    x << 0.4, 0.2;
    Atom ua;
    ua.c = VectorXd::Ones(1);
    ua.a = -0.2;
    const Signal u = Signal::closed_form(1, {ua});
    const double t = 0.0, Tp = 2.0, T = 5.0;
    const double whole = cost_JT(p, t, x, u, T);
    const Trajectory traj = integrate_state(p, t, x, u, Tp);
    const double first = cost_JT(p, t, x, u, Tp);
    const double rest = cost_JT(p, Tp, traj.at(Tp), u, T);
    CHECK(whole == doctest::Approx(first + rest).epsilon(1e-9));
}

TEST_CASE("cesaro_mean dominates the exponential lower bound") {
    const LqProblem p = example_uncontrollable();
    VectorXd x(2);
    x << 1.0, 0.0;  // x1 + x2 = 1
    for (int Ti = 1; Ti <= 10; ++Ti) {
        const double T = Ti;
        const double mean = cesaro_mean(p, x, Signal::zero(1), T);
        const double bound = (std::exp(4.0 * T) - 1.0) / (8.0 * T);
        CHECK(mean >= bound * (1.0 - 1e-6));
    }
}

TEST_CASE("cesaro_mean of a constant running cost") {
    const LqProblem p = scalar_problem(0.0, 0.0, 1.0, Signal::zero(1), Signal::zero(1));
    VectorXd x(1);
    x << 3.0;  // g = 9 constant
    CHECK(cesaro_mean(p, x, Signal::zero(1), 7.0) == doctest::Approx(9.0).epsilon(1e-12));
}

TEST_CASE("abel_mean: divergence below the critical discount") {
    const LqProblem p = example_uncontrollable();
    VectorXd x(2);
    x << 1.0, 0.0;
    const AbelReport rep = abel_mean(p, x, Signal::zero(1), 3.0);
    CHECK(rep.diverged);
    CHECK(rep.certificate_rate == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(rep.fitted_rate > 0.5);
    CHECK(rep.fitted_rate < 1.5);
    CHECK(rep.witnessed_lower_bound > 0.0);
}

TEST_CASE("abel_mean: finite value above the critical discount") {
    const LqProblem p = example_uncontrollable();
    VectorXd x(2);
    x << 1.0, 0.0;
    const AbelReport rep = abel_mean(p, x, Signal::zero(1), 5.0, 1e-9);
    CHECK_FALSE(rep.diverged);
    // closed form: integral of e^{-5s}(e^{4s} - 2 e^{3s} + 2 e^{2s}) = 1 - 1 + 2/3
    CHECK(rep.value == doctest::Approx(2.0 / 3.0).epsilon(1e-6));
}

TEST_CASE("abel_mean: all-zero problem") {
    const LqProblem p = scalar_problem(0.0, 0.0, 1.0, Signal::zero(1), Signal::zero(1));
    const AbelReport rep = abel_mean(p, VectorXd::Zero(1), Signal::zero(1), 0.7);
    CHECK_FALSE(rep.diverged);
    CHECK(rep.value == doctest::Approx(0.0));
}

TEST_CASE("abel_mean: stable free motion") {
    const LqProblem p = scalar_problem(-1.0, 1.0, 1.0, Signal::zero(1), Signal::zero(1));
    VectorXd x(1);
    x << 1.0;
    for (double lambda : {0.5, 2.0}) {
        const AbelReport rep = abel_mean(p, x, Signal::zero(1), lambda, 1e-10);
        CHECK_FALSE(rep.diverged);
        CHECK(rep.value == doctest::Approx(1.0 / (lambda + 2.0)).epsilon(1e-8));
    }
}

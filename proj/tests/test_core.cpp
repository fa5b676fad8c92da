#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "otlq/errors.hpp"
#include "otlq/linalg.hpp"
#include "otlq/problem.hpp"
#include "otlq/quadrature.hpp"
#include "otlq/signal.hpp"

using namespace otlq;

namespace {
MatrixXd mat22(double a, double b, double c, double d) {
    MatrixXd M(2, 2);
    M << a, b, c, d;
    return M;
}

LqProblem uncontrollable_example() {
    // A = [[1,0],[1,2]], B = (1,-1)^T, Q = I, S = 0, R = 1.
    MatrixXd A = mat22(1, 0, 1, 2);
    MatrixXd B(2, 1);
    B << 1, -1;
    return LqProblem::make(A, B, MatrixXd::Identity(2, 2), MatrixXd::Zero(1, 2),
                           MatrixXd::Identity(1, 1), Signal::zero(2), Signal::zero(2),
                           Signal::zero(1));
}
}  // namespace

TEST_CASE("matrix_exp: zero matrix gives identity") {
    const MatrixXd E = matrix_exp(MatrixXd::Zero(2, 2), 7.3);
    CHECK((E - MatrixXd::Identity(2, 2)).norm() == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("matrix_exp: lower-triangular block structure at t = 1") {
    const MatrixXd A = mat22(1, 0, 1, 2);
    const MatrixXd E = matrix_exp(A, 1.0);
    const double e1 = std::exp(1.0), e2 = std::exp(2.0);
    CHECK(E(0, 0) == doctest::Approx(e1).epsilon(1e-13));
    CHECK(E(0, 1) == doctest::Approx(0.0).epsilon(1e-13));
    CHECK(E(1, 0) == doctest::Approx(e2 - e1).epsilon(1e-13));
    CHECK(E(1, 1) == doctest::Approx(e2).epsilon(1e-13));
}

TEST_CASE("matrix_exp: rotation by pi/2") {
    const MatrixXd A = mat22(0, 1, -1, 0);
    const MatrixXd E = matrix_exp(A, M_PI_2);
    const MatrixXd expected = oracles::taylor_expm(A, M_PI_2);
    CHECK((E - expected).norm() < 1e-13);
    CHECK(E(0, 1) == doctest::Approx(1.0).epsilon(1e-13));
    CHECK(E(1, 0) == doctest::Approx(-1.0).epsilon(1e-13));
}

TEST_CASE("matrix_exp matches Taylor oracle on random matrices") {
    std::mt19937_64 rng(7);
    for (int rep = 0; rep < 20; ++rep) {
        const int n = 2 + static_cast<int>(rng() % 3);
        MatrixXd A = oracles::random_matrix(n, n, rng);
        const double t = 0.1 + 3.0 * (rng() % 997) / 997.0;
        const MatrixXd E = matrix_exp(A, t);
        const MatrixXd T = oracles::taylor_expm(A, t);
        CHECK((E - T).norm() <= 1e-11 * (1.0 + T.norm()));
    }
}

TEST_CASE("matrix_exp: semigroup property for random stable matrices") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> ud(0.0, 10.0);
    for (int rep = 0; rep < 10; ++rep) {
        MatrixXd A = oracles::random_stable(3, rng);
        if (A.norm() > 5.0) A *= 5.0 / A.norm();
        const double s = ud(rng), t = ud(rng);
        const MatrixXd lhs = matrix_exp(A, s + t);
        const MatrixXd rhs = matrix_exp(A, s) * matrix_exp(A, t);
        CHECK((lhs - rhs).norm() <= 1e-10 * (1.0 + lhs.norm()));
    }
}

TEST_CASE("matrix_exp: overflow raises") {
    MatrixXd A(1, 1);
    A << 500.0;
    CHECK_THROWS_AS(matrix_exp(A, 2.0), OverflowError);
}

TEST_CASE("solve_lyapunov matches quadrature of the tail integral") {
    std::mt19937_64 rng(3);
    const MatrixXd A = oracles::random_stable(3, rng, 1.0);
    const MatrixXd Q = oracles::random_psd(3, rng);
    const MatrixXd L = lyapunov_tail_integral(A, Q);
    // residual of A^T L + L A + Q = 0
    CHECK((A.transpose() * L + L * A + Q).norm() < 1e-11 * (1.0 + L.norm()));
    // element-wise quadrature oracle
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            const double v = oracles::simpson(
                [&](double r) {
                    const MatrixXd E = oracles::taylor_expm(A, r);
                    return (E.transpose() * Q * E)(i, j);
                },
                0.0, 40.0, 1e-12);
            CHECK(L(i, j) == doctest::Approx(v).epsilon(1e-8));
        }
}

TEST_CASE("pole_place assigns the requested spectrum") {
    std::mt19937_64 rng(5);
    for (int rep = 0; rep < 8; ++rep) {
        const int n = 2 + static_cast<int>(rng() % 3);
        const int m = 1 + static_cast<int>(rng() % 2);
        const MatrixXd A = oracles::random_matrix(n, n, rng);
        const MatrixXd B = oracles::random_matrix(n, m, rng);
        if (numerical_rank(kalman_matrix(A, B), 1e-9) < n) continue;
        VectorXd poles(n);
        for (int i = 0; i < n; ++i) poles(i) = -1.0 - i;
        const MatrixXd Theta = pole_place(A, B, poles);
        Eigen::VectorXcd eig = eigenvalues(A + B * Theta);
        std::vector<double> re(eig.size());
        for (int i = 0; i < eig.size(); ++i) re[i] = eig(i).real();
        std::sort(re.begin(), re.end());
        for (int i = 0; i < n; ++i) CHECK(re[i] == doctest::Approx(-(n - i)).epsilon(1e-6));
    }
}

TEST_CASE("estimate_decay produces a valid envelope") {
    std::mt19937_64 rng(9);
    SUBCASE("normal matrix is exact") {
        const MatrixXd A = -2.0 * MatrixXd::Identity(2, 2);
        const DecayEstimate d = estimate_decay(A);
        CHECK(d.exact);
        CHECK(d.M == doctest::Approx(1.0));
        CHECK(d.mu == doctest::Approx(2.0));
    }
    SUBCASE("fit dominates the sampled norm") {
        for (int rep = 0; rep < 5; ++rep) {
            const MatrixXd A = oracles::random_stable(3, rng, 0.7);
            const DecayEstimate d = estimate_decay(A);
            for (double s : {0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 25.0}) {
                CHECK(matrix_exp(A, s).operatorNorm() <= d.M * std::exp(-d.mu * s) * (1 + 1e-9));
            }
        }
    }
}

TEST_CASE("eval_signal: zero, paper fixture, and poly-exp atom") {
    const Signal z = Signal::zero(3);
    CHECK(z(17.0).norm() == 0.0);

    // q(s) = (e^s, e^{-s}) at s = 0 -> (1, 1)
    Atom up, down;
    up.c = VectorXd::Zero(2);
    up.c(0) = 1.0;
    up.a = 1.0;
    down.c = VectorXd::Zero(2);
    down.c(1) = 1.0;
    down.a = -1.0;
    const Signal q = Signal::closed_form(2, {up, down});
    CHECK(q(0.0)(0) == doctest::Approx(1.0));
    CHECK(q(0.0)(1) == doctest::Approx(1.0));

    // atom 2 s e^{-s} at s = 1 -> 2/e
    Atom a;
    a.c = VectorXd::Constant(1, 2.0);
    a.k = 1;
    a.a = -1.0;
    const Signal sig = Signal::closed_form(1, {a});
    CHECK(sig(1.0)(0) == doctest::Approx(2.0 / M_E).epsilon(1e-14));
}

TEST_CASE("signal: sampled interpolation and range errors") {
    VectorXd grid(3);
    grid << 0.0, 1.0, 3.0;
    MatrixXd vals(3, 2);
    vals << 0, 0, 2, 1, 4, 5;
    const Signal s = Signal::sampled(grid, vals);
    CHECK(s(0.5)(0) == doctest::Approx(1.0));
    CHECK(s(2.0)(1) == doctest::Approx(3.0));
    CHECK_THROWS_AS(s(3.5), OutOfRangeError);
    CHECK_THROWS_AS(s(-0.5), OutOfRangeError);
}

TEST_CASE("signal: flow matches atoms and the matrix exponential") {
    std::mt19937_64 rng(13);
    for (int rep = 0; rep < 10; ++rep) {
        Atom a;
        a.c = oracles::random_matrix(3, 1, rng).col(0);
        a.k = static_cast<int>(rng() % 3);
        a.a = -1.0 + 2.0 * (rng() % 997) / 997.0;
        a.omega = (rep % 2 == 0) ? 0.0 : 1.7;
        a.phi = (rep % 2 == 0) ? 0.0 : 0.4;
        const AtomFlow fl = atom_to_flow(a);
        const Signal flow_sig = Signal::flow(fl.C, fl.G, fl.v, 0.0);
        for (double s : {0.0, 0.3, 1.0, 2.5}) {
            CHECK((flow_sig(s) - eval_atom(a, s)).norm() < 1e-11 * (1.0 + eval_atom(a, s).norm()));
        }
    }
}

TEST_CASE("signal: piecewise, sum, mapped, quadratic") {
    const Signal one = Signal::constant(VectorXd::Ones(1));
    const Signal bump = Signal::piecewise({0.0, 1.0}, {one, Signal::zero(1)});
    CHECK(bump(0.5)(0) == doctest::Approx(1.0));
    CHECK(bump(1.5)(0) == doctest::Approx(0.0));
    const auto bp = bump.breakpoints(0.0, 2.0);
    REQUIRE(bp.size() == 1);
    CHECK(bp[0] == doctest::Approx(1.0));

    const Signal two = one.scaled(2.0);
    const Signal sum = one.plus(two);
    CHECK(sum(0.0)(0) == doctest::Approx(3.0));

    MatrixXd T(2, 1);
    T << 1.0, -1.0;
    const Signal mapped = sum.mapped(T);
    CHECK(mapped(0.0)(0) == doctest::Approx(3.0));
    CHECK(mapped(0.0)(1) == doctest::Approx(-3.0));

    // <Wx,x> + 2<lin,x> with x = (e^s, e^{2s}), W = I, lin = (1,0)
    Atom x1, x2;
    x1.c = VectorXd::Zero(2);
    x1.c(0) = 1.0;
    x1.a = 1.0;
    x2.c = VectorXd::Zero(2);
    x2.c(1) = 1.0;
    x2.a = 2.0;
    const Signal x = Signal::closed_form(2, {x1, x2});
    VectorXd l(2);
    l << 1.0, 0.0;
    const Signal quad = Signal::quadratic(MatrixXd::Identity(2, 2), x, Signal::constant(l));
    const double s = 0.7;
    const double expected = std::exp(2 * s) + std::exp(4 * s) + 2.0 * std::exp(s);
    CHECK(quad(s)(0) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("signal envelopes dominate sampled values") {
    std::mt19937_64 rng(17);
    for (int rep = 0; rep < 10; ++rep) {
        std::vector<Atom> atoms;
        const int na = 1 + static_cast<int>(rng() % 3);
        for (int i = 0; i < na; ++i) {
            Atom a;
            a.c = oracles::random_matrix(2, 1, rng).col(0);
            a.k = static_cast<int>(rng() % 3);
            a.a = -2.0 + 3.0 * (rng() % 997) / 997.0;
            a.omega = (i % 2) ? 0.9 : 0.0;
            atoms.push_back(a);
        }
        const Signal sig = Signal::closed_form(2, atoms);
        const GrowthEnvelope env = sig.envelope();
        for (double s : {0.0, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0}) {
            CHECK(sig(s).norm() <= env.C * std::pow(1.0 + s, env.k) * std::exp(env.alpha * s) * (1 + 1e-9));
        }
    }
}

TEST_CASE("weighted_tail_integral: zero signal") {
    const MatrixXd A = -MatrixXd::Identity(2, 2);
    CHECK(weighted_tail_integral(A, Signal::zero(2), 1.0, 1e-10).norm() == 0.0);
}

TEST_CASE("weighted_tail_integral: scalar growth against decay") {
    // A = -2, sig = e^s, s = 0 -> 1/(mu - 1) = 1
    MatrixXd A(1, 1);
    A << -2.0;
    Atom a;
    a.c = VectorXd::Ones(1);
    a.a = 1.0;
    const Signal sig = Signal::closed_form(1, {a});
    const VectorXd v = weighted_tail_integral(A, sig, 0.0, 1e-11);
    CHECK(v(0) == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("weighted_tail_integral: constant signal tail") {
    // A = -1, sig = 1, s = 2 -> e^{-2}
    MatrixXd A(1, 1);
    A << -1.0;
    const Signal sig = Signal::constant(VectorXd::Ones(1));
    const VectorXd v = weighted_tail_integral(A, sig, 2.0, 1e-12);
    CHECK(v(0) == doctest::Approx(std::exp(-2.0)).epsilon(1e-10));
}

TEST_CASE("weighted_tail_integral: divergent and unsupported tails raise") {
    MatrixXd A(1, 1);
    A << -1.0;
    Atom a;
    a.c = VectorXd::Ones(1);
    a.a = 2.0;
    CHECK_THROWS_AS(weighted_tail_integral(A, Signal::closed_form(1, {a}), 0.0, 1e-8),
                    DivergentTailError);
    VectorXd grid(2);
    grid << 0.0, 1.0;
    MatrixXd vals = MatrixXd::Ones(2, 1);
    CHECK_THROWS_AS(weighted_tail_integral(A, Signal::sampled(grid, vals), 0.0, 1e-8),
                    UnsupportedTailError);
}

TEST_CASE("weighted_tail_integral: interval difference identity") {
    std::mt19937_64 rng(21);
    const MatrixXd A = oracles::random_stable(2, rng, 1.0);
    Atom a;
    a.c = oracles::random_matrix(2, 1, rng).col(0);
    a.a = -0.2;
    a.k = 1;
    const Signal sig = Signal::closed_form(2, {a});
    const double tol = 1e-10;
    for (auto [s, sp] : std::vector<std::pair<double, double>>{{0.0, 1.0}, {0.5, 3.0}, {1.0, 8.0}}) {
        const VectorXd diff =
            weighted_tail_integral(A, sig, s, tol) - weighted_tail_integral(A, sig, sp, tol);
        VectorXd window(2);
        for (int i = 0; i < 2; ++i)
            window(i) = oracles::simpson(
                [&](double tau) {
                    return (oracles::taylor_expm(A.transpose(), tau) * sig(tau))(i);
                },
                s, sp, 1e-13);
        CHECK((diff - window).norm() <= 2.0 * tol + 1e-10);
    }
}

TEST_CASE("shifted_tail_integral agrees with the weighted form") {
    std::mt19937_64 rng(23);
    const MatrixXd A = oracles::random_stable(2, rng, 1.0);
    Atom a;
    a.c = oracles::random_matrix(2, 1, rng).col(0);
    a.a = -0.3;
    const Signal sig = Signal::closed_form(2, {a});
    const double s = 1.2;
    const VectorXd shifted = shifted_tail_integral(A, sig, s, 1e-11);
    const VectorXd weighted = weighted_tail_integral(A, sig, s, 1e-11);
    const VectorXd back = oracles::taylor_expm(A.transpose(), -s) * weighted;
    CHECK((shifted - back).norm() < 1e-9 * (1.0 + back.norm()));
}

TEST_CASE("validate_problem: paper fixture is uncontrollable") {
    const LqProblem p = uncontrollable_example();
    const HypothesisReport r = validate_problem(p);
    CHECK_FALSE(r.controllable);
    CHECK_FALSE(r.stable_A);
    CHECK_FALSE(r.stabilizable);  // unstable eigenvalue 2 is in the uncontrollable part
    CHECK(r.qsr_ok);
}

TEST_CASE("validate_problem: full-rank stable fixture") {
    const LqProblem p = LqProblem::make(
        -MatrixXd::Identity(2, 2), MatrixXd::Identity(2, 2), MatrixXd::Identity(2, 2),
        MatrixXd::Zero(2, 2), MatrixXd::Identity(2, 2), Signal::zero(2), Signal::zero(2),
        Signal::zero(2));
    const HypothesisReport r = validate_problem(p);
    CHECK(r.controllable);
    CHECK(r.stable_A);
    CHECK(r.stabilizable);
    CHECK(r.M == doctest::Approx(1.0));
    CHECK(r.mu == doctest::Approx(1.0));
}

TEST_CASE("validate_problem: double integrator is controllable but unstable") {
    MatrixXd A = mat22(0, 1, 0, 0);
    MatrixXd B(2, 1);
    B << 0, 1;
    // oracle: Kalman matrix [B, AB] = [[0,1],[1,0]] has rank 2
    CHECK(numerical_rank(kalman_matrix(A, B), 1e-9) == 2);
    const LqProblem p = LqProblem::make(A, B, MatrixXd::Identity(2, 2), MatrixXd::Zero(1, 2),
                                        MatrixXd::Identity(1, 1), Signal::zero(2), Signal::zero(2),
                                        Signal::zero(1));
    const HypothesisReport r = validate_problem(p);
    CHECK(r.controllable);
    CHECK_FALSE(r.stable_A);
    CHECK(r.stabilizable);
}

TEST_CASE("validate_problem: invariant under orthogonal change of basis") {
    std::mt19937_64 rng(29);
    for (int rep = 0; rep < 6; ++rep) {
        const int n = 3;
        const MatrixXd A = oracles::random_matrix(n, n, rng);
        const MatrixXd B = oracles::random_matrix(n, 1, rng);
        const MatrixXd T = oracles::random_orthogonal(n, rng);
        auto mk = [&](const MatrixXd& Am, const MatrixXd& Bm) {
            return LqProblem::make(Am, Bm, MatrixXd::Identity(n, n), MatrixXd::Zero(1, n),
                                   MatrixXd::Identity(1, 1), Signal::zero(n), Signal::zero(n),
                                   Signal::zero(1));
        };
        const HypothesisReport r1 = validate_problem(mk(A, B));
        const HypothesisReport r2 = validate_problem(mk(T * A * T.transpose(), T * B));
        CHECK(r1.controllable == r2.controllable);
        CHECK(r1.stable_A == r2.stable_A);
        CHECK(r1.stabilizable == r2.stabilizable);
        if (r1.controllable) CHECK(r1.stabilizable);
    }
}

TEST_CASE("standard-form flag enforces the reduced shape") {
    MatrixXd A = -MatrixXd::Identity(1, 1);
    MatrixXd B = MatrixXd::Identity(1, 1);
    CHECK_THROWS(LqProblem::make(A, B, MatrixXd::Identity(1, 1), MatrixXd::Zero(1, 1),
                                 2.0 * MatrixXd::Identity(1, 1), Signal::zero(1), Signal::zero(1),
                                 Signal::zero(1), /*standard_form=*/true));
    Atom a;
    a.c = VectorXd::Ones(1);
    a.a = 0.5;  // non-integrable growth
    const LqProblem p = LqProblem::standard(A, B, MatrixXd::Identity(1, 1), MatrixXd::Zero(1, 1),
                                            Signal::closed_form(1, {a}));
    const HypothesisReport r = validate_problem(p);
    CHECK(r.standard_regime_ok);
    CHECK_FALSE(r.q_globally_integrable);
    CHECK(r.q_locally_integrable);
}

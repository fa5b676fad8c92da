#pragma once

#include <Eigen/Dense>

#include "otlq/linalg.hpp"
#include "otlq/signal.hpp"

namespace otlq {

// The full problem datum: dynamics Xdot = A X + B u + b(s) and running cost
// rate <Qx,x> + 2<Sx,u> + <Ru,u> + 2<q(s),x> + 2<rho(s),u>.
struct LqProblem {
    MatrixXd A;  // n x n
    MatrixXd B;  // n x m
    Signal b;    // R^n
    MatrixXd Q;  // n x n symmetric
    MatrixXd S;  // m x n
    MatrixXd R;  // m x m symmetric
    Signal q;    // R^n
    Signal rho;  // R^m
    int n = 0;
    int m = 0;
    // Reduced standard form: R = I, rho = 0, b = 0.
    bool standard_form = false;

    static LqProblem make(MatrixXd A, MatrixXd B, MatrixXd Q, MatrixXd S, MatrixXd R, Signal b,
                          Signal q, Signal rho, bool standard_form = false);
    // Standard-form shortcut (R = I, b = rho = 0).
    static LqProblem standard(MatrixXd A, MatrixXd B, MatrixXd Q, MatrixXd S, Signal q);

    double cost_rate(double s, const VectorXd& X, const VectorXd& u) const;
};

struct HypothesisReport {
    bool controllable = false;
    bool stabilizable = false;
    bool stable_A = false;
    double M = 1.0;   // decay constants, valid when stable_A
    double mu = 0.0;
    bool q_locally_integrable = false;
    bool q_globally_integrable = false;
    // Reduced-regime flags: controllable + stable A + Q - S^T S psd +
    // q locally but not globally integrable (evaluated when standard_form set).
    bool standard_regime_ok = false;
    bool qsr_ok = false;  // R > 0 and Q - S^T R^{-1} S psd
};

// Controllability via the rank of the Kalman matrix (singular-value cutoff
// tol * sigma_max), stability via eigenvalue real parts, stabilizability via
// the PBH test on unstable eigenvalues, (M, mu) via estimate_decay.
HypothesisReport validate_problem(const LqProblem& p, double tol = 1e-9);

// Shared data for the standard-form (stable A) kernel machinery:
// L = integral_0^inf e^{A^T r} Q e^{A r} dr and the decay constants of e^{As}.
struct StandardFormContext {
    MatrixXd L;
    DecayEstimate dec;
};

// Requires stable A; throws NotApplicableError otherwise.
StandardFormContext make_standard_context(const LqProblem& p);

}  // namespace otlq

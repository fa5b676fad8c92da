#pragma once

#include "otlq/problem.hpp"
#include "otlq/signal.hpp"

namespace otlq {

// Orthogonal data for the controllable subspace span{A^k B}.
struct ControllableSubspace {
    MatrixXd basis;   // n x ell, orthonormal columns
    int ell = 0;
    MatrixXd Pi;      // orthogonal projection onto the subspace
    MatrixXd PiPerp;  // I - Pi
};

// Orthonormal basis of range([B, AB, ..., A^{n-1}B]) by column-pivoted QR with
// cutoff tol; columns oriented so the first nonzero entry is positive.
ControllableSubspace controllable_subspace(const MatrixXd& A, const MatrixXd& B,
                                           double tol = 1e-9);

enum class ThetaChoice { kZero, kPolePlacement };

struct CompatibilityFlags {
    // Structural decoupling of the cost across the split: Pi Q PiPerp = 0 and
    // S PiPerp = 0, plus integrability of the original Pi b, Pi q, rho.
    bool cost_decoupled_Q = false;
    bool cost_decoupled_S = false;
    bool orig_b_integrable = false;
    bool orig_q_integrable = false;
    bool orig_rho_sq_integrable = false;
    // Growth flags on the actual projected data (these see the complement
    // trajectory coupling, so they depend on the scenario's initial state).
    bool b_proj_integrable = false;
    bool q_proj_integrable = false;
    bool rho_proj_sq_integrable = false;

    bool structural_ok() const {
        return cost_decoupled_Q && cost_decoupled_S && orig_b_integrable && orig_q_integrable &&
               orig_rho_sq_integrable;
    }
    bool all() const {
        return structural_ok() && b_proj_integrable && q_proj_integrable &&
               rho_proj_sq_integrable;
    }
};

// The split problem for one initial pair (t, x): projected dynamics and cost
// on the controllable subspace, the control-free complement trajectory, and
// the transformed weights for a stabilizing feedback Theta.
struct DecomposedProblem {
    ControllableSubspace sub;
    LqProblem source;
    double t0 = 0.0;
    VectorXd x0;

    MatrixXd A_Pi, B_Pi, A_PiPerp;  // n-dimensional projected coefficient forms
    Signal b_Pi, b_PiPerp;          // includes the Pi A PiPerp X_perp coupling
    Signal x_perp;                  // X_{PiPerp}(.), independent of the control

    MatrixXd Theta;      // m x n stabilizer acting on X_Pi (zero if requested and valid)
    MatrixXd Q_Pi_Theta; // Pi (Q + S^T Th + Th^T S + Th^T R Th) Pi
    MatrixXd S_Pi_Theta; // S Pi + R Theta
    Signal q_Pi_Theta;
    Signal rho_Pi;
    Signal phi_Pi;       // scalar: <Q X_perp, X_perp> + 2 <q, X_perp>

    // ell-dimensional problem in basis coordinates with Theta = 0 weights;
    // this is what the Riccati synthesis consumes.
    LqProblem projected;
};

DecomposedProblem decompose(const LqProblem& p, const ControllableSubspace& sub,
                            ThetaChoice theta_choice, double t, const VectorXd& x,
                            double mu_star = 1.0);

CompatibilityFlags check_compatibility(const DecomposedProblem& dp, double tol = 1e-10);

}  // namespace otlq

#pragma once

#include "otlq/problem.hpp"
#include "otlq/signal.hpp"

namespace otlq {

struct RiccatiSolution {
    MatrixXd P;         // stabilizing solution, symmetric psd
    MatrixXd ThetaBar;  // -R^{-1}(S + B^T P)
    MatrixXd Acl;       // A + B ThetaBar, spectrum in the open left half-plane
    double residual = 0.0;
};

// Stabilizing solution of P A + A^T P - (B^T P + S)^T R^{-1} (B^T P + S) + Q = 0
// through the stable invariant subspace of the Hamiltonian of the shifted
// problem, polished by Newton steps to residual <= tol * (1 + ||P||_F).
RiccatiSolution solve_are(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Q,
                          const MatrixXd& S, const MatrixXd& R, double tol = 1e-12);

struct EtaSolution {
    Signal eta;   // decaying solution of the adjoint equation with eta(inf) = 0
    Signal vbar;  // -R^{-1} (B^T eta + rho)
};

// eta(s) = integral_s^inf e^{Acl^T (tau - s)} (-f(tau)) d tau with
// f = (P B + S^T) R^{-1} rho - P b - q; exact flow form when the data is
// flow-representable, otherwise a sampled tail-integral evaluation. The
// result is verified against the differential equation at sample points.
EtaSolution solve_eta(const LqProblem& p, const RiccatiSolution& ric, double t, double tol = 1e-10);

struct SynthesizedControl {
    MatrixXd feedback;  // ThetaBar
    Signal u;           // open-loop optimal control
    Signal X;           // closed-loop trajectory
};

// Closed-loop pair from (t, x): X' = (A + B ThetaBar) X + B vbar + b,
// u = ThetaBar X + vbar. Closed form whenever the data is flow-representable.
SynthesizedControl synthesize_optimal(const LqProblem& p, const RiccatiSolution& ric,
                                      const EtaSolution& eta, double t, const VectorXd& x);

// <P x, x> + 2 <eta(t), x> + integral_t^inf [2 <eta, b> - <R^{-1}(B^T eta + rho), B^T eta + rho>] ds.
// Requires globally integrable data (classical regime).
double value_function(const LqProblem& p, const RiccatiSolution& ric, const EtaSolution& eta,
                      double t, const VectorXd& x, double tol = 1e-9);

}  // namespace otlq

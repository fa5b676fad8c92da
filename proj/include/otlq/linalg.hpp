#pragma once

#include <Eigen/Dense>
#include <vector>

#include "otlq/errors.hpp"

namespace otlq {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// e^{At} by scaling-and-squaring with Pade approximants (orders 3/5/7/9/13).
// Relative error <= ~1e-12 for ||At|| <= 50. Throws OverflowError if entries
// leave the floating-point range.
MatrixXd matrix_exp(const MatrixXd& A, double t = 1.0);

// max Re sigma(A)
double spectral_abscissa(const MatrixXd& A);

// All eigenvalues of A.
Eigen::VectorXcd eigenvalues(const MatrixXd& A);

// Constants (M, mu) with ||e^{As}|| <= M e^{-mu s} for all s >= 0.
// For normal A the pair (1, -max Re sigma(A)) is exact; otherwise mu is the
// spectral abscissa minus a 1e-6 margin and M is fitted on a log-spaced grid
// then inflated by 10%.
struct DecayEstimate {
    double M = 1.0;
    double mu = 0.0;
    bool exact = false;
};
DecayEstimate estimate_decay(const MatrixXd& A, double margin = 1e-6);

// Solves A^T X + X A + Q = 0 (Kronecker product route; intended for small n).
MatrixXd solve_lyapunov(const MatrixXd& A, const MatrixXd& Q);

// Solves A X + X B + C = 0.
MatrixXd solve_sylvester(const MatrixXd& A, const MatrixXd& B, const MatrixXd& C);

// integral_0^inf e^{A^T r} Q e^{A r} dr for stable A; equals the Lyapunov solution.
MatrixXd lyapunov_tail_integral(const MatrixXd& A, const MatrixXd& Q);

// Kalman controllability matrix [B, AB, ..., A^{n-1}B].
MatrixXd kalman_matrix(const MatrixXd& A, const MatrixXd& B);

// Numerical rank with cutoff tol * sigma_max.
int numerical_rank(const MatrixXd& M, double tol);

// Feedback Theta (m x n) with sigma(A + B Theta) equal to the requested poles
// (real, distinct). Reduces to a single input through a deterministic sequence
// of input directions and applies Ackermann's formula.
MatrixXd pole_place(const MatrixXd& A, const MatrixXd& B, const VectorXd& poles);

// Stabilizer with poles {-mu_star, -mu_star-1, ...}; identity-shaped helper.
MatrixXd stabilizing_feedback(const MatrixXd& A, const MatrixXd& B, double mu_star = 1.0);

bool is_symmetric(const MatrixXd& M, double rel_tol = 1e-12);
bool is_psd(const MatrixXd& M, double tol = 1e-10);
bool is_pd(const MatrixXd& M, double tol = 1e-12);

// True when ||A A^T - A^T A|| is negligible relative to ||A||^2.
bool is_normal_matrix(const MatrixXd& A, double rel_tol = 1e-12);

}  // namespace otlq

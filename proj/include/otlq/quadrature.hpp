#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "otlq/linalg.hpp"
#include "otlq/signal.hpp"

namespace otlq {

// 16-node Gauss-Legendre nodes/weights on [0, 1].
const std::vector<double>& gl16_nodes();
const std::vector<double>& gl16_weights();

// Composite Gauss-Legendre with adaptive bisection to absolute tolerance tol.
// Panels are pre-split at the supplied breakpoints.
VectorXd integrate_adaptive(const std::function<VectorXd(double)>& f, double a, double b,
                            double tol, const std::vector<double>& breakpoints = {});
double integrate_adaptive_scalar(const std::function<double(double)>& f, double a, double b,
                                 double tol, const std::vector<double>& breakpoints = {});

// integral_s^inf e^{A^T tau} sig(tau) d tau, absolute error <= tol.
// Adaptive quadrature on [s, T*] plus an analytic tail bound choosing T*.
// Requires the signal growth rate to sit strictly below the decay rate of A.
VectorXd weighted_tail_integral(const MatrixXd& A, const Signal& sig, double s, double tol);

// integral_s^inf e^{A^T (tau - s)} sig(tau) d tau — the shift-stable variant
// used wherever the weight would otherwise mix huge and tiny factors.
VectorXd shifted_tail_integral(const MatrixXd& A, const Signal& sig, double s, double tol);

// integral_a^b e^{A^T tau} sig(tau) d tau (finite window).
VectorXd weighted_interval_integral(const MatrixXd& A, const Signal& sig, double a, double b,
                                    double tol);

// integral_T^inf (1+tau)^k e^{-beta tau} d tau in closed form (beta > 0).
double poly_exp_tail(double T, int k, double beta);

// Smallest T >= s with M * C * poly_exp_tail(T, k, beta) <= bound.
double tail_cutoff(double s, double M, double C, int k, double beta, double bound,
                   double hard_cap = 1e6);

}  // namespace otlq

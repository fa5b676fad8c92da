#pragma once

#include <cstdint>
#include <functional>

#include "otlq/problem.hpp"
#include "otlq/signal.hpp"

namespace otlq {

// Per-coordinate bounds, entries may be +-infinity. Convex and closed in the
// square-integrable class.
struct BoxControlSet {
    VectorXd lower, upper;

    static BoxControlSet full(int m);
    static BoxControlSet lower_bounded(int m, int coord, double bound = 0.0);
    bool has_lower(int i) const { return std::isfinite(lower(i)); }
    bool has_upper(int i) const { return std::isfinite(upper(i)); }
};

// rho_hat(s) = B^T e^{-A^T s} integral_s^inf e^{A^T tau} q(tau) d tau, evaluated
// in the shift-stable form. Scale-aware tolerance: absolute error bounded by
// tol_rel * (1 + local envelope scale).
VectorXd rho_hat(const LqProblem& p, double s, double tol_rel = 1e-10);

// Phi(s, tau) = 1_{tau <= s} S e^{A (s-tau)} B + 1_{tau >= s} B^T e^{A^T (tau-s)} S^T
//             + B^T e^{A^T (sigma-s)} L e^{A (sigma-tau)} B,  sigma = max(s, tau).
MatrixXd kernel_phi(const LqProblem& p, const StandardFormContext& ctx, double s, double tau);
MatrixXd kernel_phi(const LqProblem& p, double s, double tau);

// kappa = (3 ||B||^2 M^2 / mu^2) (||B||^2 M^2 ||Q||^2 / mu^2 + 2 ||S||^2).
// Bounds the squared L2 operator norm of the Phi integral operator.
double contraction_kappa(const LqProblem& p);
double contraction_kappa(const LqProblem& p, const StandardFormContext& ctx);

// Nystrom discretization of the stationarity equation on [t, T_inf].
struct FredholmSetup {
    double t = 0.0;
    double T_inf = 0.0;
    VectorXd grid;     // composite-Simpson nodes (odd count)
    VectorXd weights;  // quadrature weights
    std::function<MatrixXd(double, double)> kernel;
    MatrixXd forcing;  // one row per node
    int m = 0;
    double kappa = 0.0;             // formula value (bound on the squared norm)
    double kappa_emp_normsq = 0.0;  // empirical squared operator norm on the grid
    double tail_bound = 0.0;        // certified truncation contribution
};

// Setup with forcing rho0(s_i) + F0(s_i) x where rho0 zeroes the coordinates
// listed in pinned (they are carried by the inner normal instead).
FredholmSetup make_fredholm_setup(const LqProblem& p, const StandardFormContext& ctx, double t,
                                  const VectorXd& x, const std::vector<int>& pinned_coords,
                                  int nodes = 801, double tol = 1e-10);

// Generic setup from an arbitrary kernel/forcing pair (test fixtures).
FredholmSetup make_custom_setup(double t, double T_inf, int nodes,
                                std::function<MatrixXd(double, double)> kernel,
                                std::function<VectorXd(double)> forcing, int m);

struct FredholmSolveStats {
    int iterations = 0;
    double measured_rate = 0.0;       // geometric contraction rate of the iteration
    double neumann_direct_gap = 0.0;  // sup difference between the two solves
    double residual = 0.0;            // on-grid defect of the returned samples
};

// Solves forcing + u + K u = 0 by Neumann iteration, cross-checked against a
// direct dense solve. Requires a contraction (formula or empirical norm < 1).
MatrixXd solve_fredholm(const FredholmSetup& setup, double tol = 1e-12,
                        FredholmSolveStats* stats = nullptr);

struct ExistenceCertificate {
    VectorXd grid;
    MatrixXd u_bar;     // control samples, one row per node
    double residual = 0.0;
    std::vector<int> pinned_lower, pinned_upper;
    MatrixXd defect;    // stationarity defect rho_hat + F0 x + u + Phi u on all coordinates
    MatrixXd rho1;      // defect restricted to pinned coordinates (inner-normal candidate)
    bool inner_normal_ok = false;
    bool admissible_split = true;
    bool interior_stationary = false;  // no active coordinates
    double kappa = 0.0;
    double kappa_emp_normsq = 0.0;
    // Horizon sweep of the first-order gap against random admissible
    // comparison controls: per horizon the minimum over the sample.
    VectorXd gap_horizons;
    VectorXd gap_min;
    int gap_samples = 0;
};

struct CertifyOptions {
    int nodes = 801;
    double tol = 1e-9;
    int comparison_controls = 20;
    std::uint64_t seed = 1;
    std::vector<double> schedule;      // default geometric t + 2^k up to 64
    double comparison_support = 4.0;   // perturbations live on [t, t + support]
};

// Splits rho_hat into a solvable part and an inner-normal part per the
// boundary/free coordinate rule, solves the stationarity equation for the
// free coordinates, pins the boundary ones at their bound, and verifies the
// componentwise inner-normal sign condition plus the first-order gap sweep.
ExistenceCertificate certify_existence(const LqProblem& p, double t, const VectorXd& x,
                                       const BoxControlSet& box, const CertifyOptions& opts = {});

}  // namespace otlq

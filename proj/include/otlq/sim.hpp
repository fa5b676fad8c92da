#pragma once

#include "otlq/problem.hpp"
#include "otlq/signal.hpp"

namespace otlq {

struct Trajectory {
    VectorXd grid;    // increasing times in [t, T]
    MatrixXd states;  // one state row per grid point
    int order = 4;
    double step = 0.0;
    bool exact = false;  // variation-of-constants path

    VectorXd at(double s) const;  // linear interpolation on the grid
    Signal as_signal() const;
};

struct IntegrateOptions {
    double step = 1e-3;        // RK4 step
    double panel = 0.125;      // exact-path panel length
    bool prefer_exact = true;  // use variation of constants when possible
};

// Solves X' = A X + B u(s) + b(s) on [t, T]. The exact path propagates with
// matrix exponentials panel by panel (Gauss-Legendre convolution); the RK4
// path is the classical fixed-step scheme. Throws OverflowError naming the
// first bad time when states leave the floating-point range.
Trajectory integrate_state(const LqProblem& p, double t, const VectorXd& x, const Signal& u,
                           double T, const IntegrateOptions& opts = {});

// J_T = integral_t^T g(s, X(s), u(s)) ds along the solution from (t, x).
// Exact path: Gauss-Legendre accumulation alongside the propagation;
// RK4 path: composite Simpson on the trajectory grid.
double cost_JT(const LqProblem& p, double t, const VectorXd& x, const Signal& u, double T,
               const IntegrateOptions& opts = {});

// (1/T) J_T from time 0.
double cesaro_mean(const LqProblem& p, const VectorXd& x, const Signal& u, double T,
                   const IntegrateOptions& opts = {});

struct AbelReport {
    bool diverged = false;
    double value = 0.0;             // valid when !diverged
    double lambda = 0.0;
    double certificate_rate = 0.0;  // envelope growth of e^{-lambda s} g(s) from declared rates
    double fitted_rate = 0.0;       // empirical rate over the last horizon decade
    double witnessed_lower_bound = 0.0;  // partial integral at the divergence verdict
    double horizon = 0.0;                // last horizon examined
};

// Discounted cost integral_0^inf e^{-lambda s} g ds with geometric horizon
// extension. Divergence is a report, not an error.
AbelReport abel_mean(const LqProblem& p, const VectorXd& x, const Signal& u, double lambda,
                     double tol = 1e-9, const IntegrateOptions& opts = {});

// Shared exact stepper: propagates z' = M z + f(s) while accumulating
// integral c(s, z(s)) ds with 16-node Gauss-Legendre panels. Used by the
// cost and comparison-trace paths.
class FlowQuadrature {
  public:
    FlowQuadrature(MatrixXd M, std::function<VectorXd(double)> f, double t0, VectorXd z0);
    // Advance to time T, adding to the accumulated integral; returns z(T).
    const VectorXd& advance(double T, const std::function<double(double, const VectorXd&)>& rate,
                            double panel, const std::vector<double>& breakpoints);
    const VectorXd& state() const { return z_; }
    double time() const { return s_; }
    double integral() const { return acc_; }

  private:
    MatrixXd M_;
    std::function<VectorXd(double)> f_;
    double s_;
    VectorXd z_;
    double acc_ = 0.0;
    struct Cache;
    std::shared_ptr<Cache> cache_;
};

}  // namespace otlq

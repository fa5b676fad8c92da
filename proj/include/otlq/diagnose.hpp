#pragma once

#include <map>
#include <string>

#include "otlq/overtake.hpp"
#include "otlq/problem.hpp"
#include "otlq/signal.hpp"

namespace otlq {

// q(s) = |q(s)| theta(s) with |theta| = 1; at zeros of q the direction is
// continued from the nearest nonzero sample.
struct PolarDecomposition {
    Signal magnitude;  // scalar
    Signal direction;  // unit vector
    bool continued_at_zeros = false;
};

PolarDecomposition polar_decompose(const Signal& q, double window_lo = 0.0,
                                   double window_hi = 128.0);

// Identifiers name the witness construction, not a theorem number.
enum class TheoremId {
    kDirectionBump,       // interior-direction bump against the accumulated q-term
    kConstantSteering,    // constant steering along a range-compatible direction
    kDerivativeTracking,  // tracking theta via B v = theta' - A theta
    kUniformTracking,     // grid steering with full actuation (B = I)
    kCorollarySteering,   // constant steering along the limit direction of theta
};

const char* theorem_name(TheoremId id);

struct GrowthParams {
    VectorXd eta;          // candidate steering direction (may be empty)
    double eps = 0.5;      // alignment threshold for the mass test
    double delta = 1.0;    // window length of the ratio test
    double mu = 1.0;       // weight for the exponentially damped integral
    double horizon = 256.0;
    double tol = 1e-9;
};

struct ApplicabilityEntry {
    bool applies = false;
    bool unknown = false;
    std::string failed_premise;
};

struct GrowthReport {
    bool globally_integrable = false;
    bool exp_weighted_integrable = false;  // integral e^{-mu s} |q| finite
    bool cesaro_divergent = false;         // (1/T) integral_0^T |q| -> inf
    bool ratio_vanishes = false;           // integral_T^{T+delta}|q| / integral_t^T |q| -> 0
    double ratio_limit = 0.0;
    bool aligned_mass_dominates = false;   // eps-mass along eta beats the complement
    bool eta_in_range = false;             // A eta in range(B) within tol
    bool exact_path = false;               // closed-form classification was available
    double mu_used = 0.0, eps_used = 0.0, delta_used = 0.0, horizon_used = 0.0;
    std::map<TheoremId, ApplicabilityEntry> applicability;
};

GrowthReport growth_report(const Signal& q, const LqProblem& p, const GrowthParams& params);

// Finite-window controllability Gramian integral_0^delta e^{Ar} B B^T e^{A^T r} dr.
MatrixXd gramian_W(const MatrixXd& A, const MatrixXd& B, double delta);

// Largest delta meeting the positivity condition
// 1 - 2||A|| e^{||A|| d} d - ||A||^2 e^{2||A|| d} d^2 >= 1/2 and the tracking
// smallness (1 + 2M^2)(eps + ||A|| e^{||A|| d} d) <= 1/2.
double tracking_delta(const MatrixXd& A, double M, double eps = 0.05);

// The constant-steering witness: u(s) = u_star(s) + Theta xi(s) - v0 1_{[t,T)}(s)
// with B vhat0 = A eta, v0 = vhat0 + Theta eta. Under a stable A the feedback
// Theta is zero and the control is the plain indicator perturbation.
Signal witness_eta_control(const LqProblem& p, double t, const Signal& u_star,
                           const VectorXd& eta, double T, VectorXd* v0_out = nullptr,
                           double tol = 1e-8);

enum class TrackingMode { kDerivative, kGrid };

// The tracking witness: derivative mode solves B v = theta' - A theta and
// steers the residual to zero over [T, T+delta] through the Gramian; grid mode
// (B = I) reproduces theta at the grid points t + k delta and stops at T.
Signal witness_theta_tracking(const LqProblem& p, double t, const Signal& theta, double delta,
                              double T, TrackingMode mode, const Signal& u_star);

struct RefutationResult {
    TheoremId theorem = TheoremId::kConstantSteering;
    bool premise_ok = false;
    std::string note;
    Signal comparator;      // the control actually traced against u_star
    ComparisonTrace trace;
    VectorXd predicted;     // certified lower bounds for the deltas (same horizons)
    GrowthReport report;
};

struct RefuteParams {
    VectorXd eta;            // steering direction (constant steering)
    VectorXd theta0;         // bump direction (direction bump); empty -> searched
    double eps = 0.5;
    double delta = 0.0;      // 0 -> chosen by tracking_delta
    double bump_T0 = 32.0;   // support of the direction bump
    double bump_delta = 1.0; // L2 size of the bump
    std::vector<double> schedule;
    double horizon_max = 64.0;
    bool linear_schedule = false;
    double tol = 1e-8;
};

// Builds the witness for the requested construction, runs the comparison
// trace, and attaches the proof-level lower bounds for cross-validation.
// An inapplicable premise or an undecided trace yields an inconclusive
// result, never a silent pass.
RefutationResult refute(const LqProblem& p, double t, const VectorXd& x, const Signal& u_star,
                        TheoremId theorem, const RefuteParams& params = {});

}  // namespace otlq

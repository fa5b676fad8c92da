#include "otlq/decomp.hpp"

#include <cmath>

#include "otlq/errors.hpp"
#include "otlq/linalg.hpp"

namespace otlq {

ControllableSubspace controllable_subspace(const MatrixXd& A, const MatrixXd& B, double tol) {
    if (A.rows() != A.cols() || B.rows() != A.rows())
        throw DimensionError("controllable_subspace: dimension mismatch");
    const int n = static_cast<int>(A.rows());
    const MatrixXd K = kalman_matrix(A, B);
    Eigen::ColPivHouseholderQR<MatrixXd> qr(K);
    const MatrixXd Rfac = qr.matrixR();
    const double pivot0 = std::abs(Rfac(0, 0));
    int ell = 0;
    for (int i = 0; i < std::min<int>(n, static_cast<int>(K.cols())); ++i)
        if (pivot0 > 0.0 && std::abs(Rfac(i, i)) > tol * pivot0) ++ell;
    ControllableSubspace sub;
    sub.ell = ell;
    MatrixXd Qfull = qr.householderQ();
    sub.basis = Qfull.leftCols(ell);
    // Reproducible orientation: first nonzero entry of each column positive.
    for (int j = 0; j < ell; ++j) {
        for (int i = 0; i < n; ++i) {
            if (std::abs(sub.basis(i, j)) > 1e-9) {
                if (sub.basis(i, j) < 0) sub.basis.col(j) *= -1.0;
                break;
            }
        }
    }
    if (ell == n) {
        sub.Pi = MatrixXd::Identity(n, n);
        sub.PiPerp = MatrixXd::Zero(n, n);
    } else {
        sub.Pi = sub.basis * sub.basis.transpose();
        sub.PiPerp = MatrixXd::Identity(n, n) - sub.Pi;
    }
    return sub;
}

DecomposedProblem decompose(const LqProblem& p, const ControllableSubspace& sub,
                            ThetaChoice theta_choice, double t, const VectorXd& x,
                            double mu_star) {
    if (x.size() != p.n) throw DimensionError("decompose: initial state dimension");
    DecomposedProblem dp;
    dp.sub = sub;
    dp.source = p;
    dp.t0 = t;
    dp.x0 = x;
    const MatrixXd& Pi = sub.Pi;
    const MatrixXd& Pp = sub.PiPerp;
    const MatrixXd& V = sub.basis;

    dp.A_Pi = Pi * p.A * Pi;
    dp.B_Pi = Pi * p.B;
    dp.A_PiPerp = Pp * p.A * Pp;
    dp.b_PiPerp = p.b.mapped(Pp);

    // Complement trajectory: X_perp' = A_PiPerp X_perp + PiPerp b, X_perp(t) = PiPerp x.
    VectorXd xp0 = Pp * x;
    if (xp0.norm() <= 1e-12 * (1.0 + x.norm())) xp0.setZero();
    if (xp0.norm() == 0.0 && dp.b_PiPerp.is_zero()) {
        dp.x_perp = Signal::zero(p.n);
    } else if (flow_representable(dp.b_PiPerp)) {
        dp.x_perp = linear_ode_flow(dp.A_PiPerp, dp.b_PiPerp, t, xp0);
    } else {
        throw NotApplicableError("decompose: complement forcing is not flow-representable");
    }

    // b_Pi carries the coupling from the complement trajectory.
    dp.b_Pi = dp.x_perp.mapped(Pi * p.A * Pp).plus(p.b.mapped(Pi));

    const MatrixXd A_red = V.transpose() * p.A * V;
    const MatrixXd B_red = V.transpose() * p.B;
    if (theta_choice == ThetaChoice::kZero) {
        if (sub.ell > 0 && spectral_abscissa(A_red) >= 0.0)
            throw StabilizerRequiredError(
                "decompose: zero feedback requested but the projected dynamics are unstable");
        dp.Theta = MatrixXd::Zero(p.m, p.n);
    } else {
        const MatrixXd Theta_red = stabilizing_feedback(A_red, B_red, mu_star);
        dp.Theta = Theta_red * V.transpose();
    }

    const MatrixXd& Th = dp.Theta;
    dp.Q_Pi_Theta =
        Pi * (p.Q + p.S.transpose() * Th + Th.transpose() * p.S + Th.transpose() * p.R * Th) * Pi;
    dp.S_Pi_Theta = p.S * Pi + p.R * Th;
    dp.q_Pi_Theta = p.q.mapped(Pi)
                        .plus(dp.x_perp.mapped(Pi * (p.Q + Th.transpose() * p.S) * Pp))
                        .plus(p.rho.mapped(Th.transpose()));
    dp.rho_Pi = p.rho.plus(dp.x_perp.mapped(p.S * Pp));
    dp.phi_Pi = Signal::quadratic(p.Q, dp.x_perp, p.q);

    // Theta = 0 reduced problem in basis coordinates.
    const MatrixXd Q_red = V.transpose() * p.Q * V;
    const MatrixXd S_red = p.S * V;
    const Signal b_red = dp.x_perp.mapped(V.transpose() * p.A * Pp).plus(p.b.mapped(V.transpose()));
    const Signal q_red = p.q.mapped(V.transpose()).plus(dp.x_perp.mapped(V.transpose() * p.Q * Pp));
    dp.projected = LqProblem::make(A_red, B_red, 0.5 * (Q_red + Q_red.transpose()), S_red, p.R,
                                   b_red, q_red, dp.rho_Pi);
    return dp;
}

namespace {
bool sig_integrable(const Signal& s) {
    if (s.is_zero()) return true;
    return s.envelope().alpha < 0.0;
}
}  // namespace

CompatibilityFlags check_compatibility(const DecomposedProblem& dp, double tol) {
    CompatibilityFlags f;
    const LqProblem& p = dp.source;
    const MatrixXd& Pi = dp.sub.Pi;
    const MatrixXd& Pp = dp.sub.PiPerp;
    f.cost_decoupled_Q = (Pi * p.Q * Pp).norm() <= tol * (1.0 + p.Q.norm());
    f.cost_decoupled_S = (p.S * Pp).norm() <= tol * (1.0 + p.S.norm());
    f.orig_b_integrable = sig_integrable(p.b.mapped(Pi));
    f.orig_q_integrable = sig_integrable(p.q.mapped(Pi));
    f.orig_rho_sq_integrable = sig_integrable(p.rho);
    f.b_proj_integrable = sig_integrable(dp.b_Pi);
    f.q_proj_integrable = sig_integrable(dp.q_Pi_Theta);
    f.rho_proj_sq_integrable = sig_integrable(dp.rho_Pi);
    return f;
}

}  // namespace otlq

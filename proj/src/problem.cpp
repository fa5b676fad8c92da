#include "otlq/problem.hpp"

#include <cmath>

#include "otlq/errors.hpp"

namespace otlq {

LqProblem LqProblem::make(MatrixXd A, MatrixXd B, MatrixXd Q, MatrixXd S, MatrixXd R, Signal b,
                          Signal q, Signal rho, bool standard_form) {
    LqProblem p;
    p.n = static_cast<int>(A.rows());
    p.m = static_cast<int>(B.cols());
    if (A.cols() != p.n || B.rows() != p.n) throw DimensionError("LqProblem: A/B shapes");
    if (Q.rows() != p.n || Q.cols() != p.n) throw DimensionError("LqProblem: Q shape");
    if (S.rows() != p.m || S.cols() != p.n) throw DimensionError("LqProblem: S shape");
    if (R.rows() != p.m || R.cols() != p.m) throw DimensionError("LqProblem: R shape");
    if (b.dim() != p.n || q.dim() != p.n || rho.dim() != p.m)
        throw DimensionError("LqProblem: signal dimensions");
    if (!is_symmetric(Q) || !is_symmetric(R))
        throw Error("LqProblem: Q and R must be symmetric (1e-12 relative)");
    if (standard_form) {
        if ((R - MatrixXd::Identity(p.m, p.m)).norm() > 1e-12 * p.m)
            throw Error("LqProblem: standard form requires R = I");
        if (!rho.is_zero() || !b.is_zero())
            throw Error("LqProblem: standard form requires rho = 0 and b = 0");
    }
    p.A = std::move(A);
    p.B = std::move(B);
    p.Q = 0.5 * (Q + Q.transpose());
    p.S = std::move(S);
    p.R = 0.5 * (R + R.transpose());
    p.b = std::move(b);
    p.q = std::move(q);
    p.rho = std::move(rho);
    p.standard_form = standard_form;
    return p;
}

LqProblem LqProblem::standard(MatrixXd A, MatrixXd B, MatrixXd Q, MatrixXd S, Signal q) {
    const int n = static_cast<int>(A.rows());
    const int m = static_cast<int>(B.cols());
    return make(std::move(A), std::move(B), std::move(Q), std::move(S),
                MatrixXd::Identity(m, m), Signal::zero(n), std::move(q), Signal::zero(m),
                /*standard_form=*/true);
}

double LqProblem::cost_rate(double s, const VectorXd& X, const VectorXd& u) const {
    return X.dot(Q * X) + 2.0 * u.dot(S * X) + u.dot(R * u) + 2.0 * q(s).dot(X) +
           2.0 * rho(s).dot(u);
}

namespace {

// Not globally integrable when the envelope does not decay; decaying
// closed-form envelopes certify integrability.
bool globally_integrable(const Signal& sig) {
    if (sig.is_zero()) return true;
    if (sig.bounded_domain()) return true;  // finite window, locally integrable everywhere
    const auto env = sig.envelope();
    return env.alpha < 0.0;
}

}  // namespace

HypothesisReport validate_problem(const LqProblem& p, double tol) {
    HypothesisReport r;
    const MatrixXd K = kalman_matrix(p.A, p.B);
    r.controllable = numerical_rank(K, tol) == p.n;

    const Eigen::VectorXcd eigs = eigenvalues(p.A);
    r.stable_A = true;
    for (int i = 0; i < eigs.size(); ++i)
        if (eigs(i).real() >= -tol) r.stable_A = false;
    if (r.stable_A) {
        const DecayEstimate d = estimate_decay(p.A);
        r.M = d.M;
        r.mu = d.mu;
    }

    if (r.controllable) {
        r.stabilizable = true;
    } else {
        // PBH: rank [A - lambda I, B] = n for every eigenvalue with Re >= -tol.
        r.stabilizable = true;
        for (int i = 0; i < eigs.size(); ++i) {
            if (eigs(i).real() < -tol) continue;
            Eigen::MatrixXcd pencil(p.n, p.n + p.m);
            pencil.leftCols(p.n) =
                p.A.cast<std::complex<double>>() -
                eigs(i) * Eigen::MatrixXcd::Identity(p.n, p.n);
            pencil.rightCols(p.m) = p.B.cast<std::complex<double>>();
            Eigen::JacobiSVD<Eigen::MatrixXcd> svd(pencil);
            const auto& sv = svd.singularValues();
            if (sv(sv.size() - 1) <= tol * sv(0)) r.stabilizable = false;
        }
    }

    r.q_locally_integrable = true;  // every representable signal is locally integrable
    r.q_globally_integrable = globally_integrable(p.q);

    const Eigen::LLT<MatrixXd> llt(p.R);
    const bool R_pd = is_pd(p.R);
    if (R_pd) {
        const MatrixXd Rinv_S = p.R.ldlt().solve(p.S);
        r.qsr_ok = is_psd(p.Q - p.S.transpose() * Rinv_S, tol);
    }
    if (p.standard_form) {
        const bool qss = is_psd(p.Q - p.S.transpose() * p.S, tol);
        r.standard_regime_ok =
            r.controllable && r.stable_A && qss && !r.q_globally_integrable;
    }
    return r;
}

StandardFormContext make_standard_context(const LqProblem& p) {
    if (spectral_abscissa(p.A) >= 0.0)
        throw NotApplicableError("make_standard_context: A must be stable");
    StandardFormContext ctx;
    ctx.dec = estimate_decay(p.A);
    ctx.L = lyapunov_tail_integral(p.A, p.Q);
    return ctx;
}

}  // namespace otlq

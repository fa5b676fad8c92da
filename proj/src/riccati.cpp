#include "otlq/riccati.hpp"

#include <cmath>
#include <complex>

#include "otlq/errors.hpp"
#include "otlq/linalg.hpp"
#include "otlq/quadrature.hpp"

namespace otlq {

namespace {

MatrixXd are_residual(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Q, const MatrixXd& S,
                      const MatrixXd& R, const MatrixXd& P) {
    const MatrixXd W = B.transpose() * P + S;
    return P * A + A.transpose() * P - W.transpose() * R.ldlt().solve(W) + Q;
}

}  // namespace

RiccatiSolution solve_are(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Q,
                          const MatrixXd& S, const MatrixXd& R, double tol) {
    const int n = static_cast<int>(A.rows());
    const int m = static_cast<int>(B.cols());
    if (A.cols() != n || B.rows() != n || Q.rows() != n || Q.cols() != n || S.rows() != m ||
        S.cols() != n || R.rows() != m || R.cols() != m)
        throw DimensionError("solve_are: inconsistent dimensions");
    if (!is_pd(R)) throw Error("solve_are: R must be positive definite");
    if (n == 0) {
        RiccatiSolution out;
        out.P = MatrixXd(0, 0);
        out.ThetaBar = MatrixXd(m, 0);
        out.Acl = MatrixXd(0, 0);
        return out;
    }

    const Eigen::LDLT<MatrixXd> Rld(R);
    const MatrixXd RinvS = Rld.solve(S);
    const MatrixXd Ash = A - B * RinvS;                        // shifted drift
    const MatrixXd Qsh = Q - S.transpose() * RinvS;            // shifted state weight
    const MatrixXd G = B * Rld.solve(B.transpose());           // B R^{-1} B^T

    MatrixXd H(2 * n, 2 * n);
    H.topLeftCorner(n, n) = Ash;
    H.topRightCorner(n, n) = -G;
    H.bottomLeftCorner(n, n) = -0.5 * (Qsh + Qsh.transpose());
    H.bottomRightCorner(n, n) = -Ash.transpose();

    Eigen::EigenSolver<MatrixXd> es(H);
    const Eigen::VectorXcd ev = es.eigenvalues();
    const double axis_tol = 1e-8 * (1.0 + H.norm());
    std::vector<int> stable;
    for (int i = 0; i < 2 * n; ++i) {
        if (std::abs(ev(i).real()) <= axis_tol)
            throw DegenerateSpectrumError(
                "solve_are: Hamiltonian eigenvalue on the imaginary axis; no stabilizing solution");
        if (ev(i).real() < 0) stable.push_back(i);
    }
    if (static_cast<int>(stable.size()) != n)
        throw DegenerateSpectrumError("solve_are: stable subspace has wrong dimension");

    Eigen::MatrixXcd U(2 * n, n);
    for (int j = 0; j < n; ++j) U.col(j) = es.eigenvectors().col(stable[j]);
    const Eigen::MatrixXcd U1 = U.topRows(n);
    const Eigen::MatrixXcd U2 = U.bottomRows(n);
    const Eigen::MatrixXcd Pc = U2 * U1.fullPivLu().solve(Eigen::MatrixXcd::Identity(n, n));
    MatrixXd P = Pc.real();
    P = 0.5 * (P + P.transpose());

    // Newton polish: Acl^T D + D Acl = -residual(P).
    for (int iter = 0; iter < 60; ++iter) {
        const MatrixXd Res = are_residual(A, B, Q, S, R, P);
        if (Res.norm() <= 0.1 * tol * (1.0 + P.norm())) break;
        const MatrixXd Acl = A - B * Rld.solve(B.transpose() * P + S);
        if (spectral_abscissa(Acl) >= 0.0) break;  // keep the subspace solution
        MatrixXd D = solve_lyapunov(Acl, Res);
        P += 0.5 * (D + D.transpose());
    }

    RiccatiSolution out;
    out.P = 0.5 * (P + P.transpose());
    out.ThetaBar = -Rld.solve(S + B.transpose() * out.P);
    out.Acl = A + B * out.ThetaBar;
    out.residual = are_residual(A, B, Q, S, R, out.P).norm();
    if (out.residual > 1e-9 * (1.0 + out.P.norm()))
        throw NumericalInconsistencyError("solve_are: residual above certification threshold");
    if (spectral_abscissa(out.Acl) >= 0.0)
        throw DegenerateSpectrumError("solve_are: closed loop is not stable");
    return out;
}

EtaSolution solve_eta(const LqProblem& p, const RiccatiSolution& ric, double t, double tol) {
    const Eigen::LDLT<MatrixXd> Rld(p.R);
    const MatrixXd PBST = (ric.P * p.B + p.S.transpose());
    // f(s) = (P B + S^T) R^{-1} rho(s) - P b(s) - q(s)
    const Signal f = p.rho.mapped(PBST * Rld.solve(MatrixXd::Identity(p.m, p.m)))
                         .plus(p.b.mapped(-ric.P))
                         .plus(p.q.scaled(-1.0));
    EtaSolution sol;
    if (f.is_zero()) {
        sol.eta = Signal::zero(p.n);
        sol.vbar = p.rho.mapped(-Rld.solve(MatrixXd::Identity(p.m, p.m)));
        return sol;
    }
    const DecayEstimate dec = estimate_decay(ric.Acl);
    const GrowthEnvelope env = f.envelope();
    if (env.alpha >= dec.mu - 1e-12)
        throw DivergentTailError("solve_eta: forcing growth rate reaches the closed-loop decay");

    std::vector<FlowTerm> pieces;
    bool closed_ok = flow_terms(f.scaled(-1.0), pieces);
    const double acl_abscissa = spectral_abscissa(ric.Acl);
    for (const auto& fp : pieces)
        if (acl_abscissa + spectral_abscissa(fp.G) >= -1e-12) closed_ok = false;
    if (closed_ok) {
        // eta(s) = sum_i Z_i e^{G_i (s - s0_i)} v_i where -f = sum_i C_i e^{G_i .} v_i
        // and Acl^T Z_i + Z_i G_i + C_i = 0; each term decays with the data,
        // so the representation stays stable at large s.
        std::vector<Signal> terms;
        for (const auto& fp : pieces) {
            const MatrixXd Z = solve_sylvester(ric.Acl.transpose(), fp.G, fp.C);
            terms.push_back(Signal::flow(Z, fp.G, fp.v, fp.s0));
        }
        sol.eta = terms.empty() ? Signal::zero(p.n) : Signal::sum(std::move(terms));
    } else {
        // sampled evaluation of the tail integral on a grid
        const double Tcap = t + 200.0;
        const double Tstar =
            tail_cutoff(t, dec.M * env.C, 1.0, env.k, dec.mu - env.alpha, 0.5 * tol, Tcap);
        const int N = std::max(64, static_cast<int>((Tstar - t) / 0.05));
        VectorXd grid(N + 1);
        MatrixXd vals(N + 1, p.n);
        const Signal neg_f = f.scaled(-1.0);
        for (int i = 0; i <= N; ++i) {
            const double s = t + (Tstar - t) * i / N;
            grid(i) = s;
            vals.row(i) = shifted_tail_integral(ric.Acl, neg_f, s, tol).transpose();
        }
        sol.eta = Signal::sampled(grid, vals);
    }

    // Verify the differential equation at sample points:
    // eta'(s) = -[A^T - (PB+S^T) R^{-1} B^T] eta(s) + f(s).
    const MatrixXd AdjT = p.A.transpose() - PBST * Rld.solve(p.B.transpose());
    const double h = 1e-5;
    const auto dom = sol.eta.domain();
    const double hi = std::min(dom.second - h, t + 20.0);
    for (int i = 0; i < 10; ++i) {
        const double s = t + (hi - t) * (i + 0.5) / 10.0;
        const VectorXd d = (sol.eta(s + h) - sol.eta(s - h)) / (2.0 * h);
        const VectorXd rhs = -AdjT * sol.eta(s) + f(s);
        const double scale = 1.0 + rhs.norm() + sol.eta(s).norm();
        if ((d - rhs).norm() > std::max(10.0 * tol * scale, 1e-7 * scale))
            throw NumericalInconsistencyError("solve_eta: differential-equation residual too large");
    }

    sol.vbar = sol.eta.mapped(-Rld.solve(p.B.transpose()))
                   .plus(p.rho.mapped(-Rld.solve(MatrixXd::Identity(p.m, p.m))));
    return sol;
}

SynthesizedControl synthesize_optimal(const LqProblem& p, const RiccatiSolution& ric,
                                      const EtaSolution& eta, double t, const VectorXd& x) {
    if (x.size() != p.n) throw DimensionError("synthesize_optimal: state dimension");
    SynthesizedControl out;
    out.feedback = ric.ThetaBar;
    const Signal forcing = eta.vbar.mapped(p.B).plus(p.b);
    if (flow_representable(forcing)) {
        out.X = linear_ode_flow(ric.Acl, forcing, t, x);
    } else {
        // sampled fallback over a generous window
        const double T = t + 200.0;
        const int N = 4000;
        VectorXd grid(N + 1);
        MatrixXd vals(N + 1, p.n);
        VectorXd z = x;
        double s = t;
        const double hstep = (T - t) / N;
        grid(0) = t;
        vals.row(0) = z.transpose();
        for (int i = 0; i < N; ++i) {
            auto fz = [&](double ss, const VectorXd& zz) -> VectorXd {
                return ric.Acl * zz + p.B * eta.vbar(ss) + p.b(ss);
            };
            const VectorXd k1 = fz(s, z);
            const VectorXd k2 = fz(s + 0.5 * hstep, z + 0.5 * hstep * k1);
            const VectorXd k3 = fz(s + 0.5 * hstep, z + 0.5 * hstep * k2);
            const VectorXd k4 = fz(s + hstep, z + hstep * k3);
            z += (hstep / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            s += hstep;
            grid(i + 1) = s;
            vals.row(i + 1) = z.transpose();
        }
        out.X = Signal::sampled(grid, vals);
    }
    out.u = out.X.mapped(ric.ThetaBar).plus(eta.vbar);
    return out;
}

double value_function(const LqProblem& p, const RiccatiSolution& ric, const EtaSolution& eta,
                      double t, const VectorXd& x, double tol) {
    const Eigen::LDLT<MatrixXd> Rld(p.R);
    auto rate = [&](double s) {
        const VectorXd w = p.B.transpose() * eta.eta(s) + p.rho(s);
        VectorXd out(1);
        out(0) = 2.0 * eta.eta(s).dot(p.b(s)) - w.dot(Rld.solve(w));
        return out;
    };
    // Envelope of the integrand from declared growths.
    const auto env_eta = eta.eta.envelope();
    const auto env_b = p.b.envelope();
    const auto env_rho = p.rho.envelope();
    double alpha = -1.0;
    double Cbound = 0.0;
    if (env_eta.C > 0.0 && env_b.C > 0.0) {
        alpha = std::max(alpha, env_eta.alpha + env_b.alpha);
        Cbound += 2.0 * env_eta.C * env_b.C;
    }
    const double aw = std::max(env_eta.alpha, env_rho.C > 0 ? env_rho.alpha : env_eta.alpha);
    const double Cw = p.B.operatorNorm() * env_eta.C + env_rho.C;
    if (Cw > 0.0) {
        alpha = std::max(alpha, 2.0 * aw);
        Cbound += Cw * Cw * p.R.inverse().operatorNorm();
    }
    if (Cbound > 0.0 && alpha >= -1e-12)
        throw NotApplicableError("value_function: integral diverges under non-classical data");
    double integral = 0.0;
    if (Cbound > 0.0) {
        const int kpow = 2 * std::max({env_eta.k, env_b.k, env_rho.k}) + 1;
        const double Tstar = tail_cutoff(t, 1.0, Cbound, kpow, -alpha, 0.5 * tol,
                                         std::min(t + 200.0, eta.eta.domain().second));
        integral = integrate_adaptive(rate, t, Tstar, 0.5 * tol, p.b.breakpoints(t, Tstar))(0);
    }
    return x.dot(ric.P * x) + 2.0 * eta.eta(t).dot(x) + integral;
}

}  // namespace otlq

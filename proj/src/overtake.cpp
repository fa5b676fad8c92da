#include "otlq/overtake.hpp"

#include <algorithm>
#include <cmath>

#include "otlq/decomp.hpp"
#include "otlq/errors.hpp"
#include "otlq/fredholm.hpp"
#include "otlq/linalg.hpp"
#include "otlq/quadrature.hpp"

namespace otlq {

VectorXd kernel_F0(const LqProblem& p, const StandardFormContext& ctx, double t,
                   const VectorXd& x, double s) {
    if (x.size() != p.n) throw DimensionError("kernel_F0: state dimension");
    const MatrixXd E = matrix_exp(p.A, s - t);
    return p.S * (E * x) + p.B.transpose() * (ctx.L * (E * x));
}

VectorXd kernel_F0(const LqProblem& p, double t, const VectorXd& x, double s) {
    return kernel_F0(p, make_standard_context(p), t, x, s);
}

namespace {

// Upper bound |Phi(s,tau)| <= C_Phi e^{-mu |s - tau|}.
double phi_envelope_constant(const LqProblem& p, const StandardFormContext& ctx) {
    const double nB = p.B.operatorNorm();
    const double nS = p.S.size() ? p.S.operatorNorm() : 0.0;
    return nS * nB * ctx.dec.M + nB * nB * ctx.dec.M * ctx.dec.M * ctx.L.operatorNorm();
}

}  // namespace

VectorXd kernel_F1(const LqProblem& p, const StandardFormContext& ctx, double t, const Signal& u,
                   double s, double tol) {
    if (u.is_zero()) return VectorXd::Zero(p.m);
    const GrowthEnvelope env = u.envelope();
    const double beta = ctx.dec.mu - env.alpha;
    if (beta <= 1e-12 && !u.bounded_domain())
        throw DivergentTailError("kernel_F1: control growth reaches the kernel decay rate");
    const double Cphi = phi_envelope_constant(p, ctx);
    double hi = u.domain().second;
    if (!std::isfinite(hi)) {
        hi = tail_cutoff(std::max(s, t), Cphi * std::exp(ctx.dec.mu * std::max(s - t, 0.0)),
                         std::max(env.C, 1e-300), env.k, beta, 0.5 * tol);
    }
    auto f = [&](double tau) -> VectorXd { return kernel_phi(p, ctx, s, tau) * u(tau); };
    std::vector<double> cuts = u.breakpoints(t, hi);
    if (s > t && s < hi) cuts.push_back(s);  // kernel kink
    return integrate_adaptive(f, t, hi, 0.5 * tol, cuts);
}

VectorXd kernel_F1_direct(const LqProblem& p, const StandardFormContext& /*ctx*/, double t,
                          const Signal& u, double s, double tol) {
    if (u.is_zero()) return VectorXd::Zero(p.m);
    if (!flow_representable(u))
        throw NotApplicableError("kernel_F1_direct: control is not flow-representable");
    const Signal X0 = linear_ode_flow(p.A, u.mapped(p.B), t, VectorXd::Zero(p.n));
    const Signal g = X0.mapped(p.Q).plus(u.mapped(p.S.transpose()));
    return p.S * X0(s) + p.B.transpose() * shifted_tail_integral(p.A, g, s, tol);
}

namespace {

// Values of k(s_i) = integral_{s_i}^T e^{A^T (tau - s_i)} q(tau) d tau at
// ascending sample points, by stable backward recursion.
std::vector<VectorXd> finite_q_term(const LqProblem& p, const std::vector<double>& pts, double T,
                                    double tol) {
    const int N = static_cast<int>(pts.size());
    std::vector<VectorXd> k(N, VectorXd::Zero(p.n));
    const MatrixXd At = p.A.transpose();
    VectorXd tail = VectorXd::Zero(p.n);
    double upper = T;
    for (int i = N - 1; i >= 0; --i) {
        auto f = [&](double tau) -> VectorXd { return matrix_exp(At, tau - pts[i]) * p.q(tau); };
        const VectorXd local = (upper > pts[i])
                                   ? integrate_adaptive(f, pts[i], upper, tol,
                                                        p.q.breakpoints(pts[i], upper))
                                   : VectorXd::Zero(p.n);
        k[i] = local + matrix_exp(At, upper - pts[i]) * tail;
        tail = k[i];
        upper = pts[i];
    }
    return k;
}

struct OuterGrid {
    std::vector<double> nodes;
    std::vector<double> weights;
};

OuterGrid outer_grid(double a, double b, double panel, const std::vector<double>& breaks) {
    OuterGrid g;
    std::vector<double> cuts = {a};
    for (double c : breaks)
        if (c > a + 1e-12 && c < b - 1e-12) cuts.push_back(c);
    cuts.push_back(b);
    std::sort(cuts.begin(), cuts.end());
    const auto& gn = gl16_nodes();
    const auto& gw = gl16_weights();
    for (size_t i = 0; i + 1 < cuts.size(); ++i) {
        const double len = cuts[i + 1] - cuts[i];
        const int np = std::max(1, static_cast<int>(std::ceil(len / panel)));
        const double h = len / np;
        for (int pidx = 0; pidx < np; ++pidx) {
            const double s0 = cuts[i] + pidx * h;
            for (int j = 0; j < 16; ++j) {
                g.nodes.push_back(s0 + h * gn[j]);
                g.weights.push_back(h * gw[j]);
            }
        }
    }
    return g;
}

}  // namespace

double variational_gap(const LqProblem& p, double t, const VectorXd& x, const Signal& u_star,
                       const Signal& u, double T, QTermMode mode, double tol) {
    if (!(T > t)) return 0.0;
    const Signal du = u.plus(u_star.scaled(-1.0));
    if (du.is_zero()) return 0.0;
    const StandardFormContext ctx = make_standard_context(p);
    std::vector<double> breaks = du.breakpoints(t, T);
    const OuterGrid grid = outer_grid(t, T, 0.25, breaks);
    const std::vector<VectorXd> qterm =
        (mode == QTermMode::kFiniteHorizon)
            ? finite_q_term(p, grid.nodes, T, 0.1 * tol / (1.0 + T - t))
            : std::vector<VectorXd>();

    // Closed form for F1[u*] when the control decomposes into flow terms.
    std::vector<FlowTerm> star_flows;
    bool star_closed = !u_star.is_zero() && flow_terms(u_star, star_flows);
    std::vector<MatrixXd> Zs;  // Sylvester factors for the tail integrals
    Signal X0_star = Signal::zero(p.n);
    std::vector<FlowTerm> g_flows;
    if (star_closed) {
        X0_star = linear_ode_flow(p.A, u_star.mapped(p.B), t, VectorXd::Zero(p.n));
        const Signal g = X0_star.mapped(p.Q).plus(u_star.mapped(p.S.transpose()));
        if (!flow_terms(g, g_flows)) star_closed = false;
        if (star_closed) {
            const double aA = spectral_abscissa(p.A);
            for (const auto& fp : g_flows) {
                if (aA + spectral_abscissa(fp.G) >= -1e-12) {
                    star_closed = false;
                    break;
                }
            }
        }
        if (star_closed)
            for (const auto& fp : g_flows)
                Zs.push_back(solve_sylvester(p.A.transpose(), fp.G, fp.C));
    }
    auto F1_star = [&](double s) -> VectorXd {
        if (u_star.is_zero()) return VectorXd::Zero(p.m);
        if (star_closed) {
            VectorXd tail = VectorXd::Zero(p.n);
            for (size_t i = 0; i < g_flows.size(); ++i)
                tail += Zs[i] * (matrix_exp(g_flows[i].G, s - g_flows[i].s0) * g_flows[i].v);
            return p.S * X0_star(s) + p.B.transpose() * tail;
        }
        return kernel_F1(p, ctx, t, u_star, s, tol);
    };

    double acc = 0.0;
    for (size_t i = 0; i < grid.nodes.size(); ++i) {
        const double s = grid.nodes[i];
        VectorXd mult = kernel_F0(p, ctx, t, x, s) + u_star(s) + F1_star(s);
        if (mode == QTermMode::kFiniteHorizon)
            mult += p.B.transpose() * qterm[i];
        else
            mult += rho_hat(p, s, tol);
        acc += grid.weights[i] * mult.dot(du(s));
    }
    return acc;
}

const char* verdict_name(Verdict v) {
    switch (v) {
        case Verdict::kOvertakingEvidence: return "overtaking-evidence";
        case Verdict::kWeaklyOvertakingEvidence: return "weakly-overtaking-evidence";
        case Verdict::kRefuted: return "refuted";
        case Verdict::kInconclusive: return "inconclusive";
    }
    return "inconclusive";
}

namespace {

std::vector<double> default_schedule(double t, const TraceOptions& opts) {
    std::vector<double> sched;
    if (!opts.schedule.empty()) return opts.schedule;
    if (opts.linear_schedule) {
        for (double T = t + opts.linear_step; T <= t + opts.horizon_max + 1e-9;
             T += opts.linear_step)
            sched.push_back(T);
        return sched;
    }
    double off = 1.0;
    while (off < opts.horizon_max - 1e-9) {
        sched.push_back(t + off);
        off *= 2.0;
    }
    sched.push_back(t + opts.horizon_max);
    return sched;
}

void finish_trace(ComparisonTrace& tr, const TraceOptions& opts) {
    const int n = static_cast<int>(tr.deltas.size());
    tr.window = std::min(opts.window, n);
    if (n == 0) {
        tr.verdict = Verdict::kInconclusive;
        return;
    }
    const int W = tr.window;
    const auto tail = tr.deltas.tail(W);
    tr.limsup_estimate = tail.maxCoeff();
    tr.liminf_estimate = tail.minCoeff();
    tr.scale = 1.0 + tail.cwiseAbs().maxCoeff();
    const int half = (W + 1) / 2;
    if (W >= 2) {
        const double recent = tail.tail(half).mean();
        const double before = tail.head(W - half).mean();
        tr.drift = recent - before;
    } else {
        tr.drift = 0.0;
    }
    const double eps_v = opts.eps_v_rel * tr.scale;
    const double eps_d = opts.eps_d_rel * tr.scale;
    if (tr.truncated) {
        // only monotone divergence established before the overflow may decide
        bool inc = n >= 3, dec = n >= 3;
        for (int i = 1; i < n; ++i) {
            inc = inc && tr.deltas(i) > tr.deltas(i - 1);
            dec = dec && tr.deltas(i) < tr.deltas(i - 1);
        }
        if (inc && tr.deltas(n - 1) >= eps_v)
            tr.verdict = Verdict::kRefuted;
        else if (dec && tr.deltas(n - 1) <= -eps_v)
            tr.verdict = Verdict::kOvertakingEvidence;
        else
            tr.verdict = Verdict::kInconclusive;
        return;
    }
    if (tr.limsup_estimate <= eps_v && tr.drift <= eps_d)
        tr.verdict = Verdict::kOvertakingEvidence;
    else if (tr.liminf_estimate >= eps_v && tr.drift >= -eps_d)
        tr.verdict = Verdict::kRefuted;
    else if (tr.liminf_estimate <= eps_v && tr.drift <= eps_d)
        tr.verdict = Verdict::kWeaklyOvertakingEvidence;
    else
        tr.verdict = Verdict::kInconclusive;
}

}  // namespace

ComparisonTrace comparison_trace(const LqProblem& p, double t, const VectorXd& x,
                                 const Signal& u_star, const Signal& u, const TraceOptions& opts) {
    if (x.size() != p.n) throw DimensionError("comparison_trace: state dimension");
    const std::vector<double> sched = default_schedule(t, opts);
    const double Tmax = sched.back();

    const ControllableSubspace sub = controllable_subspace(p.A, p.B);
    const MatrixXd& V = sub.basis;
    const int ell = sub.ell;
    const MatrixXd A_red = V.transpose() * p.A * V;
    const MatrixXd B_red = V.transpose() * p.B;
    const MatrixXd Q_red = V.transpose() * p.Q * V;
    const MatrixXd S_red = p.S * V;

    const double tolm = 1e-12;
    const bool crossA = (sub.Pi * p.A * sub.PiPerp).norm() > tolm * (1.0 + p.A.norm());
    const bool crossQ = (sub.Pi * p.Q * sub.PiPerp).norm() > tolm * (1.0 + p.Q.norm());
    const bool crossS = (p.S * sub.PiPerp).norm() > tolm * (1.0 + p.S.norm());

    Signal x_perp = Signal::zero(p.n);
    VectorXd xp0 = sub.PiPerp * x;
    if (xp0.norm() <= 1e-12 * (1.0 + x.norm())) xp0.setZero();
    const Signal b_perp = p.b.mapped(sub.PiPerp);
    const bool need_perp = (crossA || crossQ || crossS) && (xp0.norm() > 0.0 || !b_perp.is_zero());
    if (need_perp) x_perp = linear_ode_flow(sub.PiPerp * p.A * sub.PiPerp, b_perp, t, xp0);

    const Signal du = u_star.plus(u.scaled(-1.0));
    const MatrixXd VtA_Pp = V.transpose() * p.A * sub.PiPerp;
    const MatrixXd Vt = V.transpose();

    // joint state z = [y (base trajectory for u); dy (difference)]
    MatrixXd M = MatrixXd::Zero(2 * ell, 2 * ell);
    M.topLeftCorner(ell, ell) = A_red;
    M.bottomRightCorner(ell, ell) = A_red;
    auto f = [&](double s) -> VectorXd {
        VectorXd out(2 * ell);
        VectorXd c = Vt * p.b(s);
        if (crossA && need_perp) c += VtA_Pp * x_perp(s);
        out.head(ell) = B_red * u(s) + c;
        out.tail(ell) = B_red * du(s);
        return out;
    };
    auto rate = [&](double s, const VectorXd& z) -> double {
        const VectorXd y = z.head(ell);
        const VectorXd dy = z.tail(ell);
        const VectorXd us = u_star(s);
        const VectorXd uu = u(s);
        const VectorXd dus = us - uu;
        double g = dy.dot(Q_red * (2.0 * y + dy));
        g += 2.0 * us.dot(S_red * dy);
        g += 2.0 * dus.dot(S_red * y);
        g += dus.dot(p.R * (us + uu));
        g += 2.0 * dy.dot(Vt * p.q(s));
        g += 2.0 * dus.dot(p.rho(s));
        if (need_perp) {
            const VectorXd xp = x_perp(s);
            if (crossQ) g += 2.0 * dy.dot(Vt * (p.Q * xp));
            if (crossS) g += 2.0 * dus.dot(p.S * xp);
        }
        return g;
    };

    VectorXd z0 = VectorXd::Zero(2 * ell);
    z0.head(ell) = Vt * x;
    FlowQuadrature fq(M, f, t, z0);
    std::vector<double> cuts = du.breakpoints(t, Tmax);
    for (const Signal* sig : {&u, &p.b, &p.q, &p.rho}) {
        const auto more = sig->breakpoints(t, Tmax);
        cuts.insert(cuts.end(), more.begin(), more.end());
    }
    std::sort(cuts.begin(), cuts.end());

    ComparisonTrace tr;
    std::vector<double> hs, ds;
    for (double T : sched) {
        try {
            fq.advance(T, rate, opts.panel, cuts);
        } catch (const OverflowError&) {
            tr.truncated = true;
            break;
        }
        hs.push_back(T);
        ds.push_back(fq.integral());
    }
    tr.horizons = Eigen::Map<VectorXd>(hs.data(), hs.size());
    tr.deltas = Eigen::Map<VectorXd>(ds.data(), ds.size());
    finish_trace(tr, opts);
    return tr;
}

double l2_norm_tail(const Signal& u, double t, double tol) {
    if (u.is_zero()) return 0.0;
    const GrowthEnvelope env = u.envelope();
    const auto dom = u.domain();
    double hi;
    if (std::isfinite(dom.second)) {
        hi = dom.second;
    } else {
        // an eventually-zero piecewise signal ends at its last breakpoint
        const auto bp = u.breakpoints(t, 1e9);
        const double last = bp.empty() ? t : bp.back();
        bool zero_after = !bp.empty();
        for (double probe : {last + 0.7, last + 13.3, last + 101.0})
            if (zero_after && u(probe).norm() != 0.0) zero_after = false;
        if (zero_after) {
            hi = last;
        } else {
            if (2.0 * env.alpha >= -1e-12)
                throw DivergentTailError("l2_norm_tail: signal is not square integrable");
            hi = tail_cutoff(t, 1.0, env.C * env.C, 2 * env.k, -2.0 * env.alpha, 0.5 * tol);
        }
    }
    auto f = [&](double s) {
        VectorXd v(1);
        v(0) = u(s).squaredNorm();
        return v;
    };
    const double val = integrate_adaptive(f, t, hi, 0.5 * tol, u.breakpoints(t, hi))(0);
    return std::sqrt(std::max(0.0, val));
}

double corollary_bound(const LqProblem& p, const StandardFormContext& ctx, double t,
                       const VectorXd& x, const Signal& u_star) {
    const double M = ctx.dec.M, mu = ctx.dec.mu;
    const double nS = p.S.size() ? p.S.operatorNorm() : 0.0;
    const double nB = p.B.operatorNorm();
    const double nQ = p.Q.operatorNorm();
    const double xterm = (nS * M + nB * M * M * nQ / (2.0 * mu)) * x.norm() / std::sqrt(2.0 * mu);
    const double kroot = std::sqrt(nB * nB * M * M * nQ * nQ / (mu * mu) + 2.0 * nS * nS);
    const double uterm = (std::sqrt(3.0) * nB * M / mu * kroot + 1.0) * l2_norm_tail(u_star, t);
    return xterm + uterm;
}

double corollary_bound(const LqProblem& p, double t, const VectorXd& x, const Signal& u_star) {
    return corollary_bound(p, make_standard_context(p), t, x, u_star);
}

GapEvaluator::GapEvaluator(const LqProblem& p, const StandardFormContext& ctx, double t,
                           const VectorXd& x, const Signal& u_star, double t_hi, double tol)
    : p_(p), u_star_(u_star), t_(t) {
    const OuterGrid grid = outer_grid(t, t_hi, 0.25, u_star.breakpoints(t, t_hi));
    nodes_ = grid.nodes;
    weights_ = grid.weights;
    multiplier_.reserve(nodes_.size());
    for (double s : nodes_) {
        VectorXd mult = rho_hat(p, s, tol) + kernel_F0(p, ctx, t, x, s) + u_star(s);
        if (!u_star.is_zero()) mult += kernel_F1(p, ctx, t, u_star, s, tol);
        multiplier_.push_back(mult);
    }
}

double GapEvaluator::gap(const Signal& u, double T) const {
    double acc = 0.0;
    for (size_t i = 0; i < nodes_.size(); ++i) {
        if (nodes_[i] > T) break;
        acc += weights_[i] * multiplier_[i].dot(u(nodes_[i]) - u_star_(nodes_[i]));
    }
    return acc;
}

}  // namespace otlq

#include "otlq/diagnose.hpp"

#include <algorithm>
#include <cmath>

#include "otlq/decomp.hpp"
#include "otlq/errors.hpp"
#include "otlq/fredholm.hpp"
#include "otlq/linalg.hpp"
#include "otlq/quadrature.hpp"

namespace otlq {

const char* theorem_name(TheoremId id) {
    switch (id) {
        case TheoremId::kDirectionBump: return "direction-bump";
        case TheoremId::kConstantSteering: return "constant-steering";
        case TheoremId::kDerivativeTracking: return "derivative-tracking";
        case TheoremId::kUniformTracking: return "uniform-tracking";
        case TheoremId::kCorollarySteering: return "corollary-steering";
    }
    return "unknown";
}

PolarDecomposition polar_decompose(const Signal& q, double window_lo, double window_hi) {
    if (q.is_zero()) throw Error("polar_decompose: signal vanishes identically");
    const int dim = q.dim();
    const int probes = 1024;
    bool any_nonzero = false, any_zero = false;
    for (int i = 0; i <= probes; ++i) {
        const double s = window_lo + (window_hi - window_lo) * i / probes;
        const double n = q(s).norm();
        if (n > 1e-12)
            any_nonzero = true;
        else
            any_zero = true;
    }
    if (!any_nonzero) throw Error("polar_decompose: signal vanishes on the whole window");

    PolarDecomposition out;
    out.continued_at_zeros = any_zero;
    const GrowthEnvelope qenv = q.envelope();
    auto mag = [q](double s) {
        VectorXd v(1);
        v(0) = q(s).norm();
        return v;
    };
    out.magnitude = Signal::callback(1, mag, qenv, window_lo,
                                     std::numeric_limits<double>::infinity());
    auto dir = [q, window_lo](double s) -> VectorXd {
        VectorXd v = q(s);
        double n = v.norm();
        if (n > 1e-12) return v / n;
        // continue from the nearest nonzero sample
        for (double h = 1e-3 * (1.0 + std::abs(s)); h < 1e6; h *= 2.0) {
            for (double probe : {s + h, s - h}) {
                if (probe < window_lo) continue;
                VectorXd w = q(probe);
                if (w.norm() > 1e-12) return w / w.norm();
            }
        }
        throw Error("polar_decompose: no nonzero sample near a zero of q");
    };
    out.direction = Signal::callback(dim, dir, {1.0, 0, 0.0}, window_lo,
                                     std::numeric_limits<double>::infinity());
    return out;
}

namespace {

enum class Tri { kYes, kNo, kUnknown };

bool yes(Tri t) { return t == Tri::kYes; }

struct FixedDirectionProfile {
    bool available = false;
    VectorXd dir;          // unit direction (sign of the dominant coefficient applied)
    double a_max = 0.0;    // dominant exponential rate
    int k_max = 0;         // polynomial degree at the dominant rate
    double coeff = 0.0;    // dominant coefficient (after normalizing the direction)
};

FixedDirectionProfile fixed_direction_profile(const Signal& q) {
    FixedDirectionProfile prof;
    std::vector<Atom> atoms;
    if (!q.closed_form_atoms(atoms) || atoms.empty()) return prof;
    VectorXd dir;
    for (const auto& a : atoms) {
        if (a.omega != 0.0 || a.phi != 0.0) return prof;  // oscillating direction
        if (a.c.norm() == 0.0) continue;
        if (dir.size() == 0) {
            dir = a.c.normalized();
        } else {
            const double along = a.c.dot(dir);
            if ((a.c - along * dir).norm() > 1e-12 * a.c.norm()) return prof;
        }
    }
    if (dir.size() == 0) return prof;
    double a_max = -std::numeric_limits<double>::infinity();
    int k_max = 0;
    double coeff = 0.0;
    for (const auto& a : atoms) {
        if (a.c.norm() == 0.0) continue;
        const double lam = a.c.dot(dir);
        if (a.a > a_max + 1e-14) {
            a_max = a.a;
            k_max = a.k;
            coeff = lam;
        } else if (std::abs(a.a - a_max) <= 1e-14) {
            if (a.k > k_max) {
                k_max = a.k;
                coeff = lam;
            } else if (a.k == k_max) {
                coeff += lam;
            }
        }
    }
    if (coeff == 0.0) return prof;
    prof.available = true;
    prof.dir = (coeff > 0 ? dir : VectorXd(-dir));
    prof.coeff = std::abs(coeff);
    prof.a_max = a_max;
    prof.k_max = k_max;
    return prof;
}

double magnitude_at(const Signal& q, double s) { return q(s).norm(); }

double integral_of_magnitude(const Signal& q, double a, double b, double tol = 1e-9) {
    return integrate_adaptive_scalar([&](double s) { return magnitude_at(q, s); }, a, b, tol,
                                     q.breakpoints(a, b));
}

}  // namespace

GrowthReport growth_report(const Signal& q, const LqProblem& p, const GrowthParams& params) {
    GrowthReport rep;
    rep.mu_used = params.mu;
    rep.eps_used = params.eps;
    rep.delta_used = params.delta;
    rep.horizon_used = params.horizon;

    const FixedDirectionProfile prof = fixed_direction_profile(q);
    rep.exact_path = prof.available;

    Tri integrable = Tri::kUnknown, cesaro = Tri::kUnknown, ratio = Tri::kUnknown,
        weighted = Tri::kUnknown, mass = Tri::kUnknown;

    if (prof.available) {
        integrable = prof.a_max < 0 ? Tri::kYes : Tri::kNo;
        cesaro = (prof.a_max > 0 || (prof.a_max == 0 && prof.k_max >= 1)) ? Tri::kYes : Tri::kNo;
        if (prof.a_max > 0) {
            rep.ratio_limit = std::expm1(prof.a_max * params.delta);
            ratio = rep.ratio_limit <= 1e-12 ? Tri::kYes : Tri::kNo;
        } else {
            rep.ratio_limit = 0.0;
            ratio = Tri::kYes;
        }
        weighted = prof.a_max < params.mu - 1e-12
                       ? Tri::kYes
                       : (prof.a_max > params.mu + 1e-12 ? Tri::kNo : Tri::kUnknown);
        if (params.eta.size() == q.dim()) {
            const double d = prof.dir.dot(params.eta);
            if (integrable == Tri::kYes)
                mass = Tri::kNo;
            else if (d >= params.eps - 1e-12)
                mass = Tri::kYes;
            else if (d < params.eps - 1e-9)
                mass = Tri::kNo;
        }
    } else {
        // trend certification over doubling horizons; a flip across the last
        // two windows demotes the flag to unknown
        const double H = params.horizon;
        std::vector<double> Ts = {H / 8, H / 4, H / 2, H};
        std::vector<double> mass_vals, cesaro_vals, ratio_vals, weighted_vals, int_vals;
        double acc = 0.0, lo = 0.0;
        for (double T : Ts) {
            acc += integral_of_magnitude(q, lo, T);
            lo = T;
            int_vals.push_back(acc);
            cesaro_vals.push_back(acc / T);
            ratio_vals.push_back(integral_of_magnitude(q, T, T + params.delta) / acc);
            weighted_vals.push_back(integrate_adaptive_scalar(
                [&](double s) { return std::exp(-params.mu * s) * magnitude_at(q, s); }, 0.0, T,
                1e-10, q.breakpoints(0.0, T)));
            if (params.eta.size() == q.dim()) {
                double E = integrate_adaptive_scalar(
                    [&](double s) {
                        const VectorXd v = q(s);
                        const double n = v.norm();
                        const bool aligned = v.dot(params.eta) >= params.eps * n;
                        return aligned ? params.eps * n : -params.eta.norm() * n;
                    },
                    0.0, T, 1e-9, q.breakpoints(0.0, T));
                mass_vals.push_back(E);
            }
        }
        auto growing = [](const std::vector<double>& v) {
            const size_t n = v.size();
            return v[n - 1] > v[n - 2] && v[n - 2] > v[n - 3] &&
                   (v[n - 1] - v[n - 2]) > 0.9 * (v[n - 2] - v[n - 3]);
        };
        auto settled = [](const std::vector<double>& v) {
            const size_t n = v.size();
            return std::abs(v[n - 1] - v[n - 2]) <= 1e-6 * (1.0 + std::abs(v[n - 1]));
        };
        integrable = settled(int_vals) ? Tri::kYes : (growing(int_vals) ? Tri::kNo : Tri::kUnknown);
        cesaro = growing(cesaro_vals) ? Tri::kYes
                                      : (settled(cesaro_vals) || cesaro_vals.back() <
                                                                     cesaro_vals[cesaro_vals.size() - 2]
                                             ? Tri::kNo
                                             : Tri::kUnknown);
        rep.ratio_limit = ratio_vals.back();
        if (std::abs(ratio_vals.back() - ratio_vals[ratio_vals.size() - 2]) <
            1e-3 * (1.0 + std::abs(ratio_vals.back())))
            ratio = ratio_vals.back() <= 1e-6 ? Tri::kYes : Tri::kNo;
        weighted = settled(weighted_vals) ? Tri::kYes
                                          : (growing(weighted_vals) ? Tri::kNo : Tri::kUnknown);
        if (!mass_vals.empty())
            mass = growing(mass_vals) ? Tri::kYes
                                      : (mass_vals.back() < mass_vals[mass_vals.size() - 2]
                                             ? Tri::kNo
                                             : Tri::kUnknown);
    }

    rep.globally_integrable = yes(integrable);
    rep.cesaro_divergent = yes(cesaro);
    rep.ratio_vanishes = yes(ratio);
    rep.exp_weighted_integrable = yes(weighted);
    rep.aligned_mass_dominates = yes(mass);

    // candidate eta must satisfy A eta in range(B)
    if (params.eta.size() == p.n) {
        const VectorXd target = p.A * params.eta;
        const VectorXd v = p.B.jacobiSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(target);
        rep.eta_in_range = (p.B * v - target).norm() <= params.tol * (1.0 + target.norm());
    }

    const HypothesisReport hyp = validate_problem(p);
    const bool not_l1 = integrable == Tri::kNo;

    auto entry = [&](bool applies, bool unknown, const std::string& why) {
        ApplicabilityEntry e;
        e.applies = applies && !unknown;
        e.unknown = unknown;
        e.failed_premise = applies || unknown ? (unknown ? "undecided limit" : "") : why;
        return e;
    };

    {  // constant steering
        bool unknown = (mass == Tri::kUnknown || weighted == Tri::kUnknown ||
                        integrable == Tri::kUnknown);
        bool ok = hyp.controllable && rep.eta_in_range && yes(mass) && yes(weighted) && not_l1;
        std::string why = !hyp.controllable        ? "pair not controllable"
                          : !rep.eta_in_range      ? "A eta outside range(B)"
                          : !yes(mass)             ? "aligned mass does not dominate"
                          : !yes(weighted)         ? "exp-weighted integral diverges"
                          : !not_l1                ? "q globally integrable"
                                                   : "";
        rep.applicability[TheoremId::kConstantSteering] = entry(ok, unknown && !ok, why);
    }
    {  // corollary steering: limit direction with divergent mass
        bool dir_ok = prof.available;  // fixed direction certainly converges
        bool unknown = !prof.available || weighted == Tri::kUnknown;
        bool range_ok = false;
        if (dir_ok) {
            const VectorXd target = p.A * prof.dir;
            const VectorXd v =
                p.B.jacobiSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(target);
            range_ok = (p.B * v - target).norm() <= params.tol * (1.0 + target.norm());
        }
        bool ok = hyp.controllable && dir_ok && range_ok && not_l1 && yes(weighted);
        rep.applicability[TheoremId::kCorollarySteering] =
            entry(ok, unknown && !ok, "direction limit or range condition fails");
    }
    {  // derivative tracking
        bool unknown = ratio == Tri::kUnknown || integrable == Tri::kUnknown;
        bool ok = hyp.controllable && hyp.stable_A && yes(ratio) && not_l1;
        std::string why = !hyp.controllable ? "pair not controllable"
                          : !hyp.stable_A   ? "A not stable"
                          : !yes(ratio)     ? "window-to-mass ratio does not vanish"
                          : !not_l1         ? "q globally integrable"
                                            : "";
        rep.applicability[TheoremId::kDerivativeTracking] = entry(ok, unknown && !ok, why);
    }
    {  // uniform tracking: full actuation
        const bool b_identity =
            p.n == p.m && (p.B - MatrixXd::Identity(p.n, p.n)).norm() <= 1e-12 * p.n;
        bool unknown = cesaro == Tri::kUnknown;
        bool ok = b_identity && hyp.stable_A && yes(cesaro);
        std::string why = !b_identity     ? "B is not the identity"
                          : !hyp.stable_A ? "A not stable"
                          : !yes(cesaro)  ? "time-average of |q| stays bounded"
                                          : "";
        rep.applicability[TheoremId::kUniformTracking] = entry(ok, unknown && !ok, why);
    }
    {  // direction bump
        const double mu_dec = hyp.stable_A ? hyp.mu : params.mu;
        bool case_i = prof.available && prof.a_max < mu_dec - 1e-12 && prof.a_max >= 0.0;
        bool case_ii = prof.available && prof.a_max >= mu_dec + 1e-9;
        bool unknown = !prof.available;
        bool ok = hyp.controllable && hyp.stable_A && not_l1 && (case_i || case_ii);
        rep.applicability[TheoremId::kDirectionBump] =
            entry(ok, unknown && !ok, "accumulated q-term growth undecided");
    }
    return rep;
}

MatrixXd gramian_W(const MatrixXd& A, const MatrixXd& B, double delta) {
    const int n = static_cast<int>(A.rows());
    auto f = [&](double r) -> VectorXd {
        const MatrixXd E = matrix_exp(A, r);
        const MatrixXd v = E * B * B.transpose() * E.transpose();
        return Eigen::Map<const VectorXd>(v.data(), v.size());
    };
    const VectorXd flat = integrate_adaptive(f, 0.0, delta, 1e-13);
    MatrixXd W = Eigen::Map<const MatrixXd>(flat.data(), n, n);
    return 0.5 * (W + W.transpose());
}

double tracking_delta(const MatrixXd& A, double M, double eps) {
    const double nA = A.operatorNorm();
    auto ok = [&](double d) {
        const double e = std::exp(nA * d);
        const bool positivity = 1.0 - 2.0 * nA * e * d - nA * nA * e * e * d * d >= 0.5;
        const bool smallness = (1.0 + 2.0 * M * M) * (eps + nA * e * d) <= 0.5;
        return positivity && smallness;
    };
    double d = 0.5;
    while (d > 1e-6 && !ok(d)) d *= 0.8;
    if (!ok(d)) throw NotApplicableError("tracking_delta: no admissible grid step");
    return d;
}

Signal witness_eta_control(const LqProblem& p, double t, const Signal& u_star,
                           const VectorXd& eta, double T, VectorXd* v0_out, double tol) {
    if (eta.size() != p.n) throw DimensionError("witness_eta_control: eta dimension");
    const VectorXd target = p.A * eta;
    const VectorXd vhat0 = p.B.jacobiSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(target);
    if ((p.B * vhat0 - target).norm() > tol * (1.0 + target.norm()))
        throw NotApplicableError("witness_eta_control: A eta is not in the range of B");
    MatrixXd Theta = MatrixXd::Zero(p.m, p.n);
    MatrixXd Acl = p.A;
    if (spectral_abscissa(p.A) >= 0.0) {
        Theta = stabilizing_feedback(p.A, p.B);
        Acl = p.A + p.B * Theta;
    }
    const VectorXd v0 = vhat0 + Theta * eta;
    if (v0_out) *v0_out = v0;
    const Signal pulse = Signal::piecewise(
        {t, T}, {Signal::constant(v0), Signal::zero(p.m)});
    // u = u_star + Theta xi - v0 1_{[t,T)}, xi the closed-loop response to -B v0 1.
    const Signal xi = linear_ode_flow(Acl, pulse.scaled(-1.0).mapped(p.B), t, VectorXd::Zero(p.n));
    return u_star.plus(xi.mapped(Theta)).plus(pulse.scaled(-1.0));
}

Signal witness_theta_tracking(const LqProblem& p, double t, const Signal& theta, double delta,
                              double T, TrackingMode mode, const Signal& u_star) {
    if (!(delta > 0) || !(T > t)) throw Error("witness_theta_tracking: need delta > 0 and T > t");
    if (mode == TrackingMode::kGrid) {
        if (p.n != p.m || (p.B - MatrixXd::Identity(p.n, p.n)).norm() > 1e-12 * p.n)
            throw NotApplicableError("witness_theta_tracking: grid mode needs B = I");
        const int N = std::max(2, static_cast<int>(std::llround((T - t) / delta)));
        const double d = (T - t) / N;
        const MatrixXd W = gramian_W(p.A, p.B, d);
        const Eigen::LDLT<MatrixXd> Wld(W);
        if (Wld.info() != Eigen::Success || !is_pd(W, 1e-14))
            throw NumericalInconsistencyError("witness_theta_tracking: Gramian is singular");
        const MatrixXd Ed = matrix_exp(p.A, d);
        const MatrixXd nAt = -p.A.transpose();
        std::vector<double> breaks;
        std::vector<Signal> pieces;
        const MatrixXd I = MatrixXd::Identity(p.n, p.n);
        for (int i = 1; i <= N; ++i) {
            const double ti = t + i * d;
            VectorXd w;
            double sign = 1.0;
            if (i == 1) {
                w = Wld.solve(theta(t + d));
            } else if (i < N) {
                w = Wld.solve(theta(ti) - Ed * theta(ti - d));
            } else {
                w = Wld.solve(Ed * theta(ti - d));
                sign = -1.0;
            }
            breaks.push_back(ti - d);
            pieces.push_back(Signal::flow(sign * I, nAt, w, ti));
        }
        breaks.push_back(T);
        pieces.push_back(Signal::zero(p.m));
        return u_star.plus(Signal::piecewise(std::move(breaks), std::move(pieces)));
    }

    // derivative mode: B v = theta' - A theta, then steer the residual to zero
    const MatrixXd A = p.A, B = p.B;
    const Signal th = theta;
    auto vfun = [A, B, th](double s) -> VectorXd {
        const double h = 1e-6;
        const VectorXd dth = (th(s + h) - th(s - h)) / (2.0 * h);
        const VectorXd target = dth - A * th(s);
        const VectorXd v = B.jacobiSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(target);
        return v;
    };
    // residual check at samples (the range condition of the construction)
    for (int i = 0; i <= 16; ++i) {
        const double s = t + (T - t) * i / 16.0;
        const double h = 1e-6;
        const VectorXd dth = (theta(s + h) - theta(s - h)) / (2.0 * h);
        const VectorXd target = dth - p.A * theta(s);
        const VectorXd v = p.B.jacobiSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(target);
        if ((p.B * v - target).norm() > 1e-5 * (1.0 + target.norm()))
            throw NotApplicableError(
                "witness_theta_tracking: theta' - A theta leaves the range of B");
    }
    const MatrixXd W = gramian_W(p.A, p.B, delta);
    if (!is_pd(W, 1e-14))
        throw NumericalInconsistencyError("witness_theta_tracking: Gramian is singular");
    const VectorXd xiT = theta(T) - matrix_exp(p.A, T - t) * theta(t);
    const VectorXd wv = W.ldlt().solve(xiT);
    const Signal vsig =
        Signal::callback(p.m, vfun, {1e3, 1, std::max(0.0, theta.envelope().alpha)}, t, T + 1.0);
    const Signal vhat =
        Signal::flow(-p.B.transpose(), -p.A.transpose(), wv, T + delta);
    return u_star.plus(Signal::piecewise({t, T, T + delta},
                                         {vsig, vhat, Signal::zero(p.m)}));
}

namespace {

double quad_term(const LqProblem& p, const Signal& w, const Signal& xi, double t, double T) {
    const MatrixXd Qss = p.Q - p.S.transpose() * p.S;
    auto f = [&](double s) -> double {
        const VectorXd xs = xi(s);
        const VectorXd ws = w(s);
        const VectorXd sw = p.S * xs + ws;
        return xs.dot(Qss * xs) + sw.dot(sw);
    };
    std::vector<double> cuts = w.breakpoints(t, T);
    const auto more = xi.breakpoints(t, T);
    cuts.insert(cuts.end(), more.begin(), more.end());
    std::sort(cuts.begin(), cuts.end());
    return integrate_adaptive_scalar(f, t, T, 1e-9, cuts);
}

}  // namespace

RefutationResult refute(const LqProblem& p, double t, const VectorXd& x, const Signal& u_star,
                        TheoremId theorem, const RefuteParams& params) {
    RefutationResult res;
    res.theorem = theorem;
    GrowthParams gp;
    gp.eta = params.eta;
    gp.eps = params.eps;
    gp.delta = params.delta > 0 ? params.delta : 1.0;
    const HypothesisReport hyp = validate_problem(p);
    gp.mu = hyp.stable_A ? hyp.mu : 1.0;
    res.report = growth_report(p.q, p, gp);
    const ApplicabilityEntry app = res.report.applicability.at(theorem);
    if (!app.applies) {
        res.premise_ok = false;
        res.note = app.unknown ? "premise undecided: " + app.failed_premise
                               : "premise fails: " + app.failed_premise;
        res.comparator = u_star;
        return res;
    }
    res.premise_ok = true;

    TraceOptions topts;
    topts.schedule = params.schedule;
    topts.horizon_max = params.horizon_max;
    topts.linear_schedule = params.linear_schedule;
    const double Tw = params.schedule.empty() ? t + params.horizon_max
                                              : params.schedule.back();

    const StandardFormContext ctx = make_standard_context(p);
    const double C0 = corollary_bound(p, ctx, t, x, u_star);
    Signal w_cmp = Signal::zero(p.m);  // comparator - u_star
    double lead_factor = 0.0;          // placeholder to silence unused warnings
    (void)lead_factor;

    std::vector<double> horizons;
    std::vector<double> predicted;

    if (theorem == TheoremId::kConstantSteering || theorem == TheoremId::kCorollarySteering) {
        VectorXd eta = params.eta;
        if (theorem == TheoremId::kCorollarySteering && eta.size() == 0) {
            const PolarDecomposition pol = polar_decompose(p.q, t, t + params.horizon_max);
            eta = pol.direction(t + params.horizon_max);
        }
        VectorXd v0;
        // proof control is u_star - v0 1; the comparator reflects it
        const Signal proof = witness_eta_control(p, t, u_star, eta, Tw, &v0, params.tol);
        w_cmp = u_star.plus(proof.scaled(-1.0));  // = +Theta xi-part reflected + v0 1
        const Signal cmp = u_star.plus(w_cmp);
        const Signal xi = linear_ode_flow(p.A, w_cmp.mapped(p.B), t, VectorXd::Zero(p.n));
        res.comparator = cmp;
        res.trace = comparison_trace(p, t, x, u_star, cmp, topts);

        // proof-level lower bound for Delta J at each horizon
        const double wexp = integrate_adaptive_scalar(
            [&](double s) { return std::exp(-ctx.dec.mu * s) * p.q(s).norm(); }, t,
            tail_cutoff(t, ctx.dec.M, p.q.envelope().C, p.q.envelope().k,
                        ctx.dec.mu - p.q.envelope().alpha, 1e-10),
            1e-10, p.q.breakpoints(t, 1e6));
        for (int i = 0; i < res.trace.horizons.size(); ++i) {
            const double T = res.trace.horizons(i);
            const double Tcap = std::min(T, Tw);
            const double lb_mass = integrate_adaptive_scalar(
                [&](double s) {
                    const VectorXd qs = p.q(s);
                    const double n = qs.norm();
                    const bool aligned = qs.dot(eta) >= params.eps * n;
                    return aligned ? params.eps * n : -eta.norm() * n;
                },
                t, Tcap, 1e-9, p.q.breakpoints(t, Tcap));
            const double lb = lb_mass - ctx.dec.M * eta.norm() * std::exp(ctx.dec.mu * t) * wexp;
            const double wl2 = l2_norm_tail(w_cmp, t);
            const double pred = 2.0 * lb - 2.0 * C0 * wl2 - quad_term(p, w_cmp, xi, t, T);
            horizons.push_back(T);
            predicted.push_back(pred);
        }
    } else if (theorem == TheoremId::kDerivativeTracking ||
               theorem == TheoremId::kUniformTracking) {
        const PolarDecomposition pol = polar_decompose(p.q, t, Tw + 4.0);
        const double delta =
            params.delta > 0 ? params.delta : tracking_delta(p.A, ctx.dec.M, 0.05);
        const TrackingMode mode = theorem == TheoremId::kUniformTracking
                                      ? TrackingMode::kGrid
                                      : TrackingMode::kDerivative;
        const Signal proof =
            witness_theta_tracking(p, t, pol.direction, delta, Tw, mode, u_star);
        w_cmp = u_star.plus(proof.scaled(-1.0));  // comparator = u_star - (proof - u_star)
        const Signal cmp = u_star.plus(w_cmp);
        res.comparator = cmp;
        res.trace = comparison_trace(p, t, x, u_star, cmp, topts);
        const Signal xi = flow_representable(w_cmp)
                              ? linear_ode_flow(p.A, w_cmp.mapped(p.B), t, VectorXd::Zero(p.n))
                              : Signal::zero(p.n);
        double edge = 0.0;
        if (mode == TrackingMode::kDerivative) {
            const MatrixXd W = gramian_W(p.A, p.B, delta);
            const double Winv = W.inverse().operatorNorm();
            const double M = ctx.dec.M, nB = p.B.operatorNorm();
            const double Kd = M * M * nB * nB * Winv * (1.0 + M) * delta + M * (1.0 + M);
            edge = Kd * integral_of_magnitude(p.q, Tw, Tw + delta);
        }
        const double wl2 = l2_norm_tail(w_cmp, t);
        for (int i = 0; i < res.trace.horizons.size(); ++i) {
            const double T = res.trace.horizons(i);
            const double Tcap = std::min(T, Tw);
            const double lb = 0.5 * integral_of_magnitude(p.q, t, Tcap) - edge;
            double quad = 0.0;
            if (!xi.is_zero())
                quad = quad_term(p, w_cmp, xi, t, T);
            else {
                // response by simulation when the witness is not flow-representable
                const Trajectory traj = integrate_state(
                    LqProblem::make(p.A, p.B, p.Q, p.S, p.R, Signal::zero(p.n), Signal::zero(p.n),
                                    Signal::zero(p.m)),
                    t, VectorXd::Zero(p.n), w_cmp, T);
                quad = quad_term(p, w_cmp, traj.as_signal(), t, T);
            }
            const double pred = 2.0 * lb - 2.0 * C0 * wl2 - quad;
            horizons.push_back(T);
            predicted.push_back(pred);
        }
    } else {  // direction bump
        VectorXd theta0 = params.theta0;
        const double T0 = t + params.bump_T0;
        if (theta0.size() == 0) {
            // coarse direction search over normalized q-term samples
            VectorXd acc = VectorXd::Zero(p.m);
            for (int i = 1; i <= 8; ++i) {
                const VectorXd r = rho_hat(p, t + (T0 - t) * i / 8.0);
                if (r.norm() > 0) acc += r / r.norm();
            }
            if (acc.norm() == 0) {
                res.premise_ok = false;
                res.note = "no usable bump direction";
                res.comparator = u_star;
                return res;
            }
            theta0 = acc.normalized();
        }
        const double c = params.bump_delta / std::sqrt(T0 - t);
        const Signal bump = Signal::piecewise(
            {t, T0}, {Signal::constant(VectorXd(-c * theta0)), Signal::zero(p.m)});
        w_cmp = bump;
        const Signal cmp = u_star.plus(w_cmp);
        res.comparator = cmp;
        res.trace = comparison_trace(p, t, x, u_star, cmp, topts);
        const Signal xi = linear_ode_flow(p.A, w_cmp.mapped(p.B), t, VectorXd::Zero(p.n));
        // measured alignment of the accumulated q-term with theta0
        double eps0 = 1.0;
        for (int i = 1; i <= 16; ++i) {
            const VectorXd r = rho_hat(p, t + (T0 - t) * i / 16.0);
            if (r.norm() > 0) eps0 = std::min(eps0, theta0.dot(r) / r.norm());
        }
        eps0 = std::max(eps0, 0.0);
        const double rho_mass = integrate_adaptive_scalar(
            [&](double s) { return rho_hat(p, s).norm(); }, t, T0, 1e-8, {});
        for (int i = 0; i < res.trace.horizons.size(); ++i) {
            const double T = res.trace.horizons(i);
            const double frac = std::min(T, T0) >= T0 ? 1.0 : (std::min(T, T0) - t) / (T0 - t);
            const double pred = 2.0 * c * eps0 * rho_mass * frac -
                                2.0 * C0 * params.bump_delta - quad_term(p, w_cmp, xi, t, T);
            horizons.push_back(T);
            predicted.push_back(pred);
        }
    }

    res.predicted = Eigen::Map<VectorXd>(predicted.data(), predicted.size());
    if (res.trace.verdict != Verdict::kRefuted) {
        res.note = "witness trace did not certify refutation within the horizon budget";
    }
    return res;
}

}  // namespace otlq

#include "otlq/fredholm.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "otlq/errors.hpp"
#include "otlq/linalg.hpp"
#include "otlq/overtake.hpp"
#include "otlq/quadrature.hpp"

namespace otlq {

BoxControlSet BoxControlSet::full(int m) {
    BoxControlSet b;
    b.lower = VectorXd::Constant(m, -std::numeric_limits<double>::infinity());
    b.upper = VectorXd::Constant(m, std::numeric_limits<double>::infinity());
    return b;
}

BoxControlSet BoxControlSet::lower_bounded(int m, int coord, double bound) {
    BoxControlSet b = full(m);
    b.lower(coord) = bound;
    return b;
}

VectorXd rho_hat(const LqProblem& p, double s, double tol_rel) {
    const DecayEstimate dec = estimate_decay(p.A);
    const GrowthEnvelope env = p.q.envelope();
    if (env.alpha >= dec.mu - 1e-12)
        throw DivergentTailError("rho_hat: q grows at least as fast as e^{As} decays");
    // local scale of the tail integral for the relative tolerance
    const double scale = dec.M * env.C * std::pow(1.0 + std::max(s, 0.0), env.k) *
                         std::exp(env.alpha * std::max(s, 0.0)) / (dec.mu - env.alpha);
    const double tol = tol_rel * (1.0 + p.B.operatorNorm() * scale);
    return p.B.transpose() * shifted_tail_integral(p.A, p.q, s, tol);
}

MatrixXd kernel_phi(const LqProblem& p, const StandardFormContext& ctx, double s, double tau) {
    const double sigma = std::max(s, tau);
    MatrixXd out = p.B.transpose() *
                   (matrix_exp(p.A.transpose(), sigma - s) *
                    (ctx.L * (matrix_exp(p.A, sigma - tau) * p.B)));
    if (tau <= s) out += p.S * (matrix_exp(p.A, s - tau) * p.B);
    if (tau >= s) out += p.B.transpose() * (matrix_exp(p.A.transpose(), tau - s) * p.S.transpose());
    return out;
}

MatrixXd kernel_phi(const LqProblem& p, double s, double tau) {
    return kernel_phi(p, make_standard_context(p), s, tau);
}

double contraction_kappa(const LqProblem& p, const StandardFormContext& ctx) {
    const double M = ctx.dec.M, mu = ctx.dec.mu;
    const double nB = p.B.operatorNorm();
    const double nS = p.S.size() ? p.S.operatorNorm() : 0.0;
    const double nQ = p.Q.operatorNorm();
    return 3.0 * nB * nB * M * M / (mu * mu) *
           (nB * nB * M * M * nQ * nQ / (mu * mu) + 2.0 * nS * nS);
}

double contraction_kappa(const LqProblem& p) {
    return contraction_kappa(p, make_standard_context(p));
}

namespace {

VectorXd simpson_weights(const VectorXd& grid) {
    const int N = static_cast<int>(grid.size());
    if (N < 3 || N % 2 == 0) throw Error("simpson_weights: need an odd node count >= 3");
    const double h = grid(1) - grid(0);
    VectorXd w = VectorXd::Zero(N);
    for (int i = 0; i + 2 < N; i += 2) {
        w(i) += h / 3.0;
        w(i + 1) += 4.0 * h / 3.0;
        w(i + 2) += h / 3.0;
    }
    return w;
}

// Empirical squared L2 operator norm of the discretized kernel via power
// iteration on (D^{1/2} K D^{1/2})^T (D^{1/2} K D^{1/2}).
double empirical_normsq(const MatrixXd& Kmat, const VectorXd& w, int m) {
    const int dim = static_cast<int>(Kmat.rows());
    VectorXd sqw(dim);
    for (int i = 0; i < dim; ++i) sqw(i) = std::sqrt(w(i / m));
    VectorXd v = VectorXd::Ones(dim).normalized();
    double sig = 0.0;
    for (int it = 0; it < 60; ++it) {
        VectorXd Wv = sqw.asDiagonal() * (Kmat * (sqw.asDiagonal() * v).eval()).eval();
        // apply transpose
        VectorXd back = sqw.asDiagonal() * (Kmat.transpose() * (sqw.asDiagonal() * Wv).eval()).eval();
        const double nrm = back.norm();
        if (nrm == 0.0) return 0.0;
        back /= nrm;
        const double change = (back - v).norm();
        v = back;
        sig = nrm;
        if (change < 1e-12) break;
    }
    return sig;  // largest eigenvalue of W^T W = squared singular value
}

MatrixXd assemble_kernel_matrix(const FredholmSetup& setup) {
    const int N = static_cast<int>(setup.grid.size());
    const int m = setup.m;
    MatrixXd K(N * m, N * m);
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < N; ++j) {
            const MatrixXd blk = setup.kernel(setup.grid(i), setup.grid(j)) * setup.weights(j);
            K.block(i * m, j * m, m, m) = blk;
        }
    return K;
}

struct ExpCachePair {
    std::shared_ptr<std::map<long long, MatrixXd>> E, ET;
};

std::function<MatrixXd(double, double)> cached_phi(const LqProblem& p,
                                                   const StandardFormContext& ctx, double h) {
    auto E = std::make_shared<std::map<long long, MatrixXd>>();
    auto ET = std::make_shared<std::map<long long, MatrixXd>>();
    const MatrixXd A = p.A, At = p.A.transpose(), B = p.B, Bt = p.B.transpose(), S = p.S,
                   St = p.S.transpose(), L = ctx.L;
    return [=](double s, double tau) -> MatrixXd {
        auto get = [&](std::map<long long, MatrixXd>& cache, const MatrixXd& M,
                       double d) -> const MatrixXd& {
            const long long key = llround(d / h * 4.0);  // quarter-step resolution
            auto it = cache.find(key);
            if (it != cache.end() && std::abs(key * h / 4.0 - d) < 1e-12) return it->second;
            return cache.emplace(key, matrix_exp(M, d)).first->second;
        };
        const double sigma = std::max(s, tau);
        MatrixXd out = Bt * (get(*ET, At, sigma - s) * (L * (get(*E, A, sigma - tau) * B)));
        if (tau <= s) out += S * (get(*E, A, s - tau) * B);
        if (tau >= s) out += Bt * (get(*ET, At, tau - s) * St);
        return out;
    };
}

}  // namespace

FredholmSetup make_fredholm_setup(const LqProblem& p, const StandardFormContext& ctx, double t,
                                  const VectorXd& x, const std::vector<int>& pinned_coords,
                                  int nodes, double tol) {
    if (nodes % 2 == 0) ++nodes;
    FredholmSetup setup;
    setup.t = t;
    setup.m = p.m;
    setup.kappa = contraction_kappa(p, ctx);

    // Truncation horizon: kernel tail + forcing decay.
    const double mu = ctx.dec.mu;
    const double nB = p.B.operatorNorm();
    const double Cphi = (p.S.size() ? p.S.operatorNorm() : 0.0) * nB * ctx.dec.M +
                        nB * nB * ctx.dec.M * ctx.dec.M * ctx.L.operatorNorm();
    const double kap_gap = 1.0 - std::min(setup.kappa, 0.9);
    double Tinf = t + std::log(std::max(2.0, 2.0 * Cphi / (mu * tol * kap_gap))) / mu;
    // forcing decay probe: slowest decaying non-growing coordinate of rho_hat
    {
        const VectorXd r0 = rho_hat(p, t + 2.0), r1 = rho_hat(p, t + 8.0);
        double slowest = mu;
        for (int i = 0; i < p.m; ++i) {
            const double a = std::abs(r0(i)), b = std::abs(r1(i));
            if (a < 1e-300) continue;
            const double rate = std::log(b / a) / 6.0;
            if (rate < -1e-6) slowest = std::min(slowest, -rate);
        }
        Tinf = std::max(Tinf, t + std::log(1.0 / tol) / slowest);
    }
    setup.T_inf = Tinf;
    setup.grid = VectorXd::LinSpaced(nodes, t, Tinf);
    setup.weights = simpson_weights(setup.grid);
    const double h = setup.grid(1) - setup.grid(0);
    setup.kernel = cached_phi(p, ctx, h);
    setup.tail_bound = (Cphi / mu) * std::exp(-mu * (Tinf - t) * 0.5);

    setup.forcing.resize(nodes, p.m);
    for (int i = 0; i < nodes; ++i) {
        VectorXd row = rho_hat(p, setup.grid(i), tol);
        for (int c : pinned_coords) row(c) = 0.0;
        row += kernel_F0(p, ctx, t, x, setup.grid(i));
        setup.forcing.row(i) = row.transpose();
    }
    return setup;
}

FredholmSetup make_custom_setup(double t, double T_inf, int nodes,
                                std::function<MatrixXd(double, double)> kernel,
                                std::function<VectorXd(double)> forcing, int m) {
    if (nodes % 2 == 0) ++nodes;
    FredholmSetup setup;
    setup.t = t;
    setup.T_inf = T_inf;
    setup.m = m;
    setup.grid = VectorXd::LinSpaced(nodes, t, T_inf);
    setup.weights = simpson_weights(setup.grid);
    setup.kernel = std::move(kernel);
    setup.forcing.resize(nodes, m);
    for (int i = 0; i < nodes; ++i) setup.forcing.row(i) = forcing(setup.grid(i)).transpose();
    setup.kappa = 0.0;
    return setup;
}

MatrixXd solve_fredholm(const FredholmSetup& setup, double tol, FredholmSolveStats* stats) {
    const int N = static_cast<int>(setup.grid.size());
    const int m = setup.m;
    MatrixXd K = assemble_kernel_matrix(setup);
    const double normsq = empirical_normsq(K, setup.weights, m);
    if (setup.kappa >= 1.0 && normsq >= 1.0)
        throw ContractionViolatedError("solve_fredholm: contraction constant >= 1");

    VectorXd b(N * m);
    for (int i = 0; i < N; ++i) b.segment(i * m, m) = -setup.forcing.row(i).transpose();

    // Neumann iteration u <- b - K u.
    VectorXd u = b;
    double rate = 0.0, prev_change = -1.0;
    int iters = 0;
    std::vector<double> rates;
    for (int it = 0; it < 400; ++it) {
        const VectorXd next = b - K * u;
        const double change = (next - u).lpNorm<Eigen::Infinity>();
        u = next;
        ++iters;
        if (prev_change > 0.0 && change > 0.0) rates.push_back(change / prev_change);
        prev_change = change;
        if (change <= 0.05 * tol) break;
        if (it == 399)
            throw NumericalInconsistencyError(
                "solve_fredholm: Neumann iteration failed to converge (decay-constant fit "
                "may be off)");
    }
    if (!rates.empty()) {
        double g = 0.0;
        const size_t keep = std::min<size_t>(rates.size(), 8);
        for (size_t i = rates.size() - keep; i < rates.size(); ++i) g += std::log(rates[i]);
        rate = std::exp(g / keep);
    }

    // Direct dense solve as the cross-check.
    MatrixXd Afull = MatrixXd::Identity(N * m, N * m) + K;
    const VectorXd u_direct = Afull.partialPivLu().solve(b);
    const double gap = (u - u_direct).lpNorm<Eigen::Infinity>();
    if (gap > std::max(100.0 * tol, 1e-8))
        throw NumericalInconsistencyError("solve_fredholm: Neumann and direct solves disagree");

    const VectorXd defect = b - K * u_direct - u_direct;  // = -(forcing + u + K u)
    if (stats) {
        stats->iterations = iters;
        stats->measured_rate = rate;
        stats->neumann_direct_gap = gap;
        stats->residual = defect.lpNorm<Eigen::Infinity>();
    }
    MatrixXd out(N, m);
    for (int i = 0; i < N; ++i) out.row(i) = u_direct.segment(i * m, m).transpose();
    return out;
}

namespace {

// pin classification from sampled rho_hat rows
struct PinDecision {
    std::vector<int> pinned_lower, pinned_upper, free_coords;
    bool admissible = true;
    std::vector<int> unplaceable;
};

PinDecision classify_coordinates(const MatrixXd& rho_rows, const VectorXd& grid,
                                 const BoxControlSet& box) {
    const int N = static_cast<int>(grid.size());
    const int m = static_cast<int>(rho_rows.cols());
    PinDecision d;
    const int w0 = (3 * N) / 4;
    for (int i = 0; i < m; ++i) {
        // growth of |rho_i| over the trailing window
        const double a = std::abs(rho_rows(w0, i));
        const double b = std::abs(rho_rows(N - 1, i));
        const double span = grid(N - 1) - grid(w0);
        const bool all_tiny = rho_rows.col(i).cwiseAbs().maxCoeff() < 1e-12;
        double fitted = -1.0;
        if (!all_tiny && a > 1e-300) fitted = std::log(std::max(b, 1e-300) / a) / span;
        const bool square_integrable = all_tiny || fitted < -1e-9;
        if (square_integrable) {
            d.free_coords.push_back(i);
            continue;
        }
        bool positive = true, negative = true;
        for (int r = w0; r < N; ++r) {
            if (rho_rows(r, i) < 0) positive = false;
            if (rho_rows(r, i) > 0) negative = false;
        }
        if (positive && box.has_lower(i)) {
            d.pinned_lower.push_back(i);
        } else if (negative && box.has_upper(i)) {
            d.pinned_upper.push_back(i);
        } else {
            d.admissible = false;
            d.unplaceable.push_back(i);
        }
    }
    return d;
}

}  // namespace

ExistenceCertificate certify_existence(const LqProblem& p, double t, const VectorXd& x,
                                       const BoxControlSet& box, const CertifyOptions& opts) {
    if (box.lower.size() != p.m || box.upper.size() != p.m)
        throw DimensionError("certify_existence: box dimension");
    for (int i = 0; i < p.m; ++i)
        if (box.lower(i) > box.upper(i)) throw Error("certify_existence: empty box");
    const StandardFormContext ctx = make_standard_context(p);
    const double kappa = contraction_kappa(p, ctx);
    if (kappa >= 1.0)
        throw ContractionViolatedError("certify_existence: contraction constant >= 1");

    // Sample rho_hat on a probe grid to classify coordinates, then build the
    // actual setup with the pinned ones carried by the inner normal.
    FredholmSetup probe = make_fredholm_setup(p, ctx, t, x, {}, 101, opts.tol);
    MatrixXd rho_rows(probe.grid.size(), p.m);
    for (int i = 0; i < probe.grid.size(); ++i)
        rho_rows.row(i) =
            (probe.forcing.row(i).transpose() - kernel_F0(p, ctx, t, x, probe.grid(i))).transpose();
    const PinDecision pins = classify_coordinates(rho_rows, probe.grid, box);

    std::vector<int> pinned_all = pins.pinned_lower;
    pinned_all.insert(pinned_all.end(), pins.pinned_upper.begin(), pins.pinned_upper.end());
    pinned_all.insert(pinned_all.end(), pins.unplaceable.begin(), pins.unplaceable.end());
    FredholmSetup setup = make_fredholm_setup(p, ctx, t, x, pinned_all, opts.nodes, opts.tol);
    const int N = static_cast<int>(setup.grid.size());

    ExistenceCertificate cert;
    cert.grid = setup.grid;
    cert.kappa = kappa;
    cert.pinned_lower = pins.pinned_lower;
    cert.pinned_upper = pins.pinned_upper;
    cert.admissible_split = pins.admissible;
    cert.interior_stationary = pinned_all.empty();

    // Pinned coordinates sit at their bound; move their kernel columns into
    // the forcing and solve the free subsystem.
    VectorXd bound_value = VectorXd::Zero(p.m);
    for (int c : pins.pinned_lower) bound_value(c) = box.lower(c);
    for (int c : pins.pinned_upper) bound_value(c) = box.upper(c);

    MatrixXd K = assemble_kernel_matrix(setup);
    const double normsq = empirical_normsq(K, setup.weights, p.m);
    cert.kappa_emp_normsq = normsq;

    const std::vector<int>& free = pins.free_coords;
    const int nf = static_cast<int>(free.size());
    cert.u_bar = MatrixXd::Zero(N, p.m);
    for (int i = 0; i < N; ++i) cert.u_bar.row(i) = bound_value.transpose();

    if (nf > 0) {
        // restriction of (I + K) u = -forcing - K u_pinned to free coordinates
        VectorXd upin(N * p.m);
        for (int i = 0; i < N; ++i) upin.segment(i * p.m, p.m) = bound_value;
        const VectorXd pinned_push = K * upin;
        MatrixXd Kff(N * nf, N * nf);
        VectorXd bf(N * nf);
        for (int i = 0; i < N; ++i) {
            for (int a = 0; a < nf; ++a) {
                bf(i * nf + a) =
                    -setup.forcing(i, free[a]) - pinned_push(i * p.m + free[a]);
                for (int j = 0; j < N; ++j)
                    for (int c = 0; c < nf; ++c)
                        Kff(i * nf + a, j * nf + c) = K(i * p.m + free[a], j * p.m + free[c]);
            }
        }
        // Neumann + direct, as in solve_fredholm
        VectorXd u = bf;
        double prev_change = -1.0;
        for (int it = 0;; ++it) {
            const VectorXd next = bf - Kff * u;
            const double change = (next - u).lpNorm<Eigen::Infinity>();
            u = next;
            if (change <= 0.05 * opts.tol * 1e-3) break;
            if (it > 400)
                throw NumericalInconsistencyError("certify_existence: iteration diverged");
            prev_change = change;
        }
        (void)prev_change;
        const VectorXd u_direct =
            (MatrixXd::Identity(N * nf, N * nf) + Kff).partialPivLu().solve(bf);
        if ((u - u_direct).lpNorm<Eigen::Infinity>() > 1e-8)
            throw NumericalInconsistencyError("certify_existence: solver cross-check failed");
        for (int i = 0; i < N; ++i)
            for (int a = 0; a < nf; ++a) cert.u_bar(i, free[a]) = u_direct(i * nf + a);
    }

    // Stationarity defect with the full rho_hat on every coordinate.
    VectorXd uvec(N * p.m);
    for (int i = 0; i < N; ++i) uvec.segment(i * p.m, p.m) = cert.u_bar.row(i).transpose();
    const VectorXd Ku = K * uvec;
    cert.defect.resize(N, p.m);
    cert.rho1 = MatrixXd::Zero(N, p.m);
    for (int i = 0; i < N; ++i) {
        VectorXd rho_full = setup.forcing.row(i).transpose();
        // restore the pinned rho components that were zeroed in the setup
        const VectorXd full_rho = rho_hat(p, setup.grid(i), opts.tol);
        for (int c : pinned_all)
            rho_full(c) += full_rho(c);
        const VectorXd D = rho_full + cert.u_bar.row(i).transpose() + Ku.segment(i * p.m, p.m);
        cert.defect.row(i) = D.transpose();
        for (int c : pinned_all) cert.rho1(i, c) = D(c);
    }
    double res = 0.0;
    for (int i = 0; i < N; ++i)
        for (int a : free) res = std::max(res, std::abs(cert.defect(i, a)));
    cert.residual = res;

    // Componentwise inner-normal sign condition.
    const double tol_in = std::max(opts.tol, 10.0 * res);
    bool ok = pins.admissible;
    for (int i = 0; i < N && ok; ++i) {
        for (int c : pins.pinned_lower)
            if (cert.defect(i, c) < -tol_in) ok = false;
        for (int c : pins.pinned_upper)
            if (cert.defect(i, c) > tol_in) ok = false;
    }
    cert.inner_normal_ok = ok;

    // First-order gap sweep against random admissible comparison controls.
    std::vector<double> sched = opts.schedule;
    if (sched.empty()) {
        for (double off = 1.0; off <= 64.0; off *= 2.0) sched.push_back(t + off);
    }
    const Signal ubar_sig = Signal::sampled(setup.grid, cert.u_bar);
    GapEvaluator ge(p, ctx, t, x, ubar_sig, t + opts.comparison_support, opts.tol);
    std::mt19937_64 rng(opts.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const int cells = 8;
    cert.gap_horizons.resize(sched.size());
    cert.gap_min = VectorXd::Constant(sched.size(), std::numeric_limits<double>::infinity());
    cert.gap_samples = opts.comparison_controls;
    for (int k = 0; k < opts.comparison_controls; ++k) {
        // piecewise-constant admissible perturbation on [t, t+support]
        std::vector<double> breaks;
        std::vector<Signal> pieces;
        const double cell = opts.comparison_support / cells;
        for (int ci = 0; ci < cells; ++ci) {
            VectorXd v(p.m);
            for (int c = 0; c < p.m; ++c) {
                const bool pl = std::count(pins.pinned_lower.begin(), pins.pinned_lower.end(), c);
                const bool pu = std::count(pins.pinned_upper.begin(), pins.pinned_upper.end(), c);
                if (pl)
                    v(c) = unit(rng);  // keeps u at or above the lower bound
                else if (pu)
                    v(c) = -unit(rng);
                else
                    v(c) = 2.0 * unit(rng) - 1.0;
            }
            breaks.push_back(t + ci * cell);
            pieces.push_back(Signal::constant(v));
        }
        breaks.push_back(t + opts.comparison_support);
        pieces.push_back(Signal::zero(p.m));
        const Signal u_cmp = ubar_sig.plus(Signal::piecewise(breaks, pieces));
        for (size_t si = 0; si < sched.size(); ++si) {
            cert.gap_horizons(si) = sched[si];
            cert.gap_min(si) = std::min(cert.gap_min(si), ge.gap(u_cmp, sched[si]));
        }
    }
    return cert;
}

}  // namespace otlq

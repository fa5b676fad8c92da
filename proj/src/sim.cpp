#include "otlq/sim.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "otlq/errors.hpp"
#include "otlq/linalg.hpp"
#include "otlq/quadrature.hpp"

namespace otlq {

VectorXd Trajectory::at(double s) const {
    const int N = static_cast<int>(grid.size());
    const double slack = 1e-10 * (1.0 + grid(N - 1) - grid(0));
    if (s < grid(0) - slack || s > grid(N - 1) + slack)
        throw OutOfRangeError("Trajectory::at: time outside the integration window");
    const double sc = std::min(std::max(s, grid(0)), grid(N - 1));
    int a = 0, b = N - 1;
    while (b - a > 1) {
        const int mid = (a + b) / 2;
        if (grid(mid) <= sc)
            a = mid;
        else
            b = mid;
    }
    const double w = (sc - grid(a)) / (grid(b) - grid(a));
    return ((1.0 - w) * states.row(a) + w * states.row(b)).transpose();
}

Signal Trajectory::as_signal() const { return Signal::sampled(grid, states); }

// ---------------------------------------------------------------------------
// Exact panel propagation with cached matrix exponentials.

struct FlowQuadrature::Cache {
    std::map<double, MatrixXd> exps;  // tau -> e^{M tau}
    const MatrixXd& get(const MatrixXd& M, double tau) {
        auto it = exps.find(tau);
        if (it != exps.end()) return it->second;
        return exps.emplace(tau, matrix_exp(M, tau)).first->second;
    }
};

FlowQuadrature::FlowQuadrature(MatrixXd M, std::function<VectorXd(double)> f, double t0,
                               VectorXd z0)
    : M_(std::move(M)), f_(std::move(f)), s_(t0), z_(std::move(z0)),
      cache_(std::make_shared<Cache>()) {}

const VectorXd& FlowQuadrature::advance(double T,
                                        const std::function<double(double, const VectorXd&)>& rate,
                                        double panel,
                                        const std::vector<double>& breakpoints) {
    if (T < s_) throw Error("FlowQuadrature::advance: cannot go backward");
    const auto& nodes = gl16_nodes();
    const auto& wts = gl16_weights();
    std::vector<double> cuts = {s_};
    for (double c : breakpoints)
        if (c > s_ + 1e-14 && c < T - 1e-14) cuts.push_back(c);
    cuts.push_back(T);
    std::sort(cuts.begin(), cuts.end());

    const int n = static_cast<int>(z_.size());
    for (size_t seg = 0; seg + 1 < cuts.size(); ++seg) {
        const double a0 = cuts[seg], b0 = cuts[seg + 1];
        const int np = std::max(1, static_cast<int>(std::ceil((b0 - a0) / panel)));
        const double h = (b0 - a0) / np;
        for (int pidx = 0; pidx < np; ++pidx) {
            const double a = a0 + pidx * h;
            // inner states z(a + h g_j) and the cost quadrature
            VectorXd z_end = cache_->get(M_, h) * z_;
            for (int j = 0; j < 16; ++j) {
                const double tau_j = h * nodes[j];
                // z at inner node
                VectorXd zj = cache_->get(M_, tau_j) * z_;
                for (int l = 0; l < 16; ++l) {
                    const double inner = tau_j * (1.0 - nodes[l]);
                    zj += tau_j * wts[l] * (cache_->get(M_, inner) * f_(a + tau_j * nodes[l]));
                }
                if (rate) acc_ += h * wts[j] * rate(a + tau_j, zj);
                // contribution of the forcing to the panel-end state
                z_end += h * wts[j] * (cache_->get(M_, h - tau_j) * f_(a + tau_j));
            }
            z_ = z_end;
            s_ = a + h;
            if (!z_.allFinite() || std::abs(acc_) > 1e290)
                throw OverflowError("FlowQuadrature: state or integral overflow", s_);
            (void)n;
        }
        s_ = b0;
    }
    return z_;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<double> forcing_breaks(const LqProblem& p, const Signal& u, double lo, double hi) {
    std::vector<double> cuts = u.breakpoints(lo, hi);
    const auto bb = p.b.breakpoints(lo, hi);
    const auto qb = p.q.breakpoints(lo, hi);
    const auto rb = p.rho.breakpoints(lo, hi);
    cuts.insert(cuts.end(), bb.begin(), bb.end());
    cuts.insert(cuts.end(), qb.begin(), qb.end());
    cuts.insert(cuts.end(), rb.begin(), rb.end());
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    return cuts;
}

bool exact_possible(const LqProblem& p, const Signal& u) {
    return !u.bounded_domain() && !p.b.bounded_domain();
}

Trajectory integrate_rk4(const LqProblem& p, double t, const VectorXd& x, const Signal& u,
                         double T, double step) {
    const int steps = std::max(1, static_cast<int>(std::ceil((T - t) / step)));
    const double h = (T - t) / steps;
    Trajectory traj;
    traj.grid.resize(steps + 1);
    traj.states.resize(steps + 1, p.n);
    traj.order = 4;
    traj.step = h;
    traj.exact = false;
    VectorXd z = x;
    traj.grid(0) = t;
    traj.states.row(0) = z.transpose();
    auto f = [&](double s, const VectorXd& zz) -> VectorXd {
        return p.A * zz + p.B * u(s) + p.b(s);
    };
    double s = t;
    for (int i = 0; i < steps; ++i) {
        const VectorXd k1 = f(s, z);
        const VectorXd k2 = f(s + 0.5 * h, z + 0.5 * h * k1);
        const VectorXd k3 = f(s + 0.5 * h, z + 0.5 * h * k2);
        const VectorXd k4 = f(s + h, z + h * k3);
        z += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        s = t + (i + 1) * h;
        if (!z.allFinite())
            throw OverflowError("integrate_state: state overflow", s);
        traj.grid(i + 1) = s;
        traj.states.row(i + 1) = z.transpose();
    }
    return traj;
}

}  // namespace

Trajectory integrate_state(const LqProblem& p, double t, const VectorXd& x, const Signal& u,
                           double T, const IntegrateOptions& opts) {
    if (!(T > t)) throw Error("integrate_state: need T > t");
    if (x.size() != p.n) throw DimensionError("integrate_state: state dimension");
    if (u.dim() != p.m) throw DimensionError("integrate_state: control dimension");
    if (!opts.prefer_exact || !exact_possible(p, u)) return integrate_rk4(p, t, x, u, T, opts.step);

    auto f = [&](double s) -> VectorXd { return p.B * u(s) + p.b(s); };
    FlowQuadrature fq(p.A, f, t, x);
    const auto cuts = forcing_breaks(p, u, t, T);
    // record panel-end states on a uniform-ish grid
    std::vector<double> grid = {t};
    std::vector<VectorXd> states = {x};
    double s = t;
    while (s < T - 1e-12) {
        const double next = std::min(T, s + opts.panel);
        fq.advance(next, nullptr, opts.panel, cuts);
        s = next;
        grid.push_back(s);
        states.push_back(fq.state());
    }
    Trajectory traj;
    traj.grid.resize(grid.size());
    traj.states.resize(grid.size(), p.n);
    for (size_t i = 0; i < grid.size(); ++i) {
        traj.grid(i) = grid[i];
        traj.states.row(i) = states[i].transpose();
    }
    traj.order = 16;
    traj.step = opts.panel;
    traj.exact = true;
    return traj;
}

double cost_JT(const LqProblem& p, double t, const VectorXd& x, const Signal& u, double T,
               const IntegrateOptions& opts) {
    if (!(T >= t)) throw Error("cost_JT: need T >= t");
    if (T == t) return 0.0;
    if (opts.prefer_exact && exact_possible(p, u)) {
        auto f = [&](double s) -> VectorXd { return p.B * u(s) + p.b(s); };
        FlowQuadrature fq(p.A, f, t, x);
        auto rate = [&](double s, const VectorXd& z) { return p.cost_rate(s, z, u(s)); };
        fq.advance(T, rate, opts.panel, forcing_breaks(p, u, t, T));
        return fq.integral();
    }
    const Trajectory traj = integrate_rk4(p, t, x, u, T, opts.step);
    // composite Simpson on the trajectory grid
    const int N = static_cast<int>(traj.grid.size());
    auto g = [&](int i) {
        return p.cost_rate(traj.grid(i), traj.states.row(i).transpose(), u(traj.grid(i)));
    };
    double acc = 0.0;
    int i = 0;
    while (i + 2 < N) {
        const double h = traj.grid(i + 1) - traj.grid(i);
        acc += h / 3.0 * (g(i) + 4.0 * g(i + 1) + g(i + 2));
        i += 2;
    }
    if (i + 1 < N) {  // trapezoid for a trailing odd interval
        const double h = traj.grid(i + 1) - traj.grid(i);
        acc += 0.5 * h * (g(i) + g(i + 1));
    }
    return acc;
}

double cesaro_mean(const LqProblem& p, const VectorXd& x, const Signal& u, double T,
                   const IntegrateOptions& opts) {
    if (!(T > 0)) throw Error("cesaro_mean: need T > 0");
    return cost_JT(p, 0.0, x, u, T, opts) / T;
}

AbelReport abel_mean(const LqProblem& p, const VectorXd& x, const Signal& u, double lambda,
                     double tol, const IntegrateOptions& opts) {
    if (!(lambda > 0)) throw Error("abel_mean: need lambda > 0");
    AbelReport rep;
    rep.lambda = lambda;

    // Certified envelope rate of e^{-lambda s} g(s, X(s), u(s)) from declared growths.
    const double lamA = spectral_abscissa(p.A);
    const double au = u.is_zero() ? -std::numeric_limits<double>::infinity() : u.envelope().alpha;
    const double ab = p.b.is_zero() ? -std::numeric_limits<double>::infinity() : p.b.envelope().alpha;
    const double aq = p.q.is_zero() ? -std::numeric_limits<double>::infinity() : p.q.envelope().alpha;
    const double ar = p.rho.is_zero() ? -std::numeric_limits<double>::infinity()
                                      : p.rho.envelope().alpha;
    double aX = lamA;
    if (x.norm() == 0.0 && u.is_zero() && p.b.is_zero()) aX = -std::numeric_limits<double>::infinity();
    aX = std::max({aX, au, ab});
    double ag = std::max({2.0 * aX, aX + aq, 2.0 * au, au + ar, aX + au});
    rep.certificate_rate = ag - lambda;

    auto fz = [&](double s) -> VectorXd { return p.B * u(s) + p.b(s); };
    FlowQuadrature fq(p.A, fz, 0.0, x);
    auto rate = [&](double s, const VectorXd& z) {
        return std::exp(-lambda * s) * p.cost_rate(s, z, u(s));
    };
    const double Tmax = 512.0;
    const auto cuts = forcing_breaks(p, u, 0.0, Tmax);
    double prev_total = 0.0;
    std::vector<double> increments, horizons;
    double T = 1.0;
    bool overflowed = false;
    while (T <= Tmax) {
        try {
            fq.advance(T, rate, opts.panel, cuts);
        } catch (const OverflowError&) {
            overflowed = true;
        }
        const double inc = fq.integral() - prev_total;
        prev_total = fq.integral();
        increments.push_back(std::abs(inc));
        horizons.push_back(T);
        rep.horizon = T;
        if (overflowed) break;
        const size_t k = increments.size();
        if (k >= 3 && increments[k - 1] > increments[k - 2] &&
            increments[k - 2] > increments[k - 3] && increments[k - 1] > 10.0 * tol) {
            // growing window integrals: fitted rate over the last decade
            rep.diverged = true;
            rep.fitted_rate = std::log(increments[k - 1] / increments[k - 2]) /
                              (horizons[k - 1] - horizons[k - 2]);
            rep.witnessed_lower_bound = prev_total;
            return rep;
        }
        if (increments.back() < 0.25 * tol && rep.certificate_rate < -1e-6) {
            rep.value = prev_total;
            return rep;
        }
        T *= 2.0;
    }
    if (overflowed || rep.certificate_rate > 1e-6) {
        rep.diverged = true;
        const size_t k = increments.size();
        rep.fitted_rate = (k >= 2 && increments[k - 2] > 0.0)
                              ? std::log(increments[k - 1] / increments[k - 2]) /
                                    (horizons[k - 1] - horizons[k - 2])
                              : rep.certificate_rate;
        rep.witnessed_lower_bound = prev_total;
        return rep;
    }
    rep.value = prev_total;
    return rep;
}

}  // namespace otlq

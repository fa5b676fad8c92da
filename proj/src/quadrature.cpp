#include "otlq/quadrature.hpp"

#include <algorithm>
#include <cmath>

#include "otlq/errors.hpp"

namespace otlq {

namespace {
// Abscissas/weights for 16-point Gauss-Legendre on [-1, 1], mapped to [0, 1].
const double kAbs[8] = {0.0950125098376374, 0.2816035507792589, 0.4580167776572274,
                        0.6178762444026438, 0.7554044083550030, 0.8656312023878318,
                        0.9445750230732326, 0.9894009349916499};
const double kWts[8] = {0.1894506104550685, 0.1826034150449236, 0.1691565193950025,
                        0.1495959888165767, 0.1246289712555339, 0.0951585116824928,
                        0.0622535239386479, 0.0271524594117541};
}  // namespace

const std::vector<double>& gl16_nodes() {
    static const std::vector<double> nodes = [] {
        std::vector<double> n(16);
        for (int i = 0; i < 8; ++i) {
            n[i] = 0.5 * (1.0 - kAbs[7 - i]);
            n[15 - i] = 0.5 * (1.0 + kAbs[7 - i]);
        }
        return n;
    }();
    return nodes;
}

const std::vector<double>& gl16_weights() {
    static const std::vector<double> wts = [] {
        std::vector<double> w(16);
        for (int i = 0; i < 8; ++i) {
            w[i] = 0.5 * kWts[7 - i];
            w[15 - i] = 0.5 * kWts[7 - i];
        }
        return w;
    }();
    return wts;
}

namespace {

VectorXd gl16_panel(const std::function<VectorXd(double)>& f, double a, double b, int dim) {
    const auto& nodes = gl16_nodes();
    const auto& wts = gl16_weights();
    VectorXd acc = VectorXd::Zero(dim);
    const double h = b - a;
    for (int i = 0; i < 16; ++i) acc += wts[i] * f(a + h * nodes[i]);
    return h * acc;
}

void adaptive_rec(const std::function<VectorXd(double)>& f, double a, double b, double tol,
                  int depth, int dim, const VectorXd& whole, VectorXd& acc) {
    const double mid = 0.5 * (a + b);
    const VectorXd left = gl16_panel(f, a, mid, dim);
    const VectorXd right = gl16_panel(f, mid, b, dim);
    const double err = (left + right - whole).norm();
    if (err <= tol || depth >= 28) {
        acc += left + right;
        return;
    }
    adaptive_rec(f, a, mid, 0.5 * tol, depth + 1, dim, left, acc);
    adaptive_rec(f, mid, b, 0.5 * tol, depth + 1, dim, right, acc);
}

}  // namespace

VectorXd integrate_adaptive(const std::function<VectorXd(double)>& f, double a, double b,
                            double tol, const std::vector<double>& breakpoints) {
    if (!(b > a)) {
        if (b == a) return f(a) * 0.0;
        return -integrate_adaptive(f, b, a, tol, breakpoints);
    }
    std::vector<double> cuts = {a};
    for (double c : breakpoints)
        if (c > a && c < b) cuts.push_back(c);
    cuts.push_back(b);
    std::sort(cuts.begin(), cuts.end());
    // Cap panel length so the initial estimate sees the integrand's scale.
    const double max_len = (b - a) / 4.0;
    std::vector<double> panels;
    for (size_t i = 0; i + 1 < cuts.size(); ++i) {
        panels.push_back(cuts[i]);
        const double len = cuts[i + 1] - cuts[i];
        const int extra = static_cast<int>(std::floor(len / max_len));
        for (int j = 1; j <= extra; ++j) {
            const double p = cuts[i] + len * j / (extra + 1);
            if (p < cuts[i + 1]) panels.push_back(p);
        }
    }
    panels.push_back(b);

    const int dim = static_cast<int>(f(a).size());
    VectorXd acc = VectorXd::Zero(dim);
    const int np = static_cast<int>(panels.size()) - 1;
    for (int i = 0; i < np; ++i) {
        const VectorXd whole = gl16_panel(f, panels[i], panels[i + 1], dim);
        adaptive_rec(f, panels[i], panels[i + 1], tol / np, 0, dim, whole, acc);
    }
    return acc;
}

double integrate_adaptive_scalar(const std::function<double(double)>& f, double a, double b,
                                 double tol, const std::vector<double>& breakpoints) {
    auto fv = [&](double s) {
        VectorXd v(1);
        v(0) = f(s);
        return v;
    };
    return integrate_adaptive(fv, a, b, tol, breakpoints)(0);
}

double poly_exp_tail(double T, int k, double beta) {
    // integral_T^inf (1+tau)^k e^{-beta tau} d tau
    // = e^{-beta T} sum_{j=0}^k (k!/j!) (1+T)^j / beta^{k-j+1}
    double fac = 1.0;
    for (int i = 2; i <= k; ++i) fac *= i;
    double sum = 0.0;
    double jfac = 1.0;
    for (int j = 0; j <= k; ++j) {
        if (j >= 2) jfac *= j;
        sum += (fac / jfac) * std::pow(1.0 + T, j) / std::pow(beta, k - j + 1);
    }
    return std::exp(-beta * T) * sum;
}

double tail_cutoff(double s, double M, double C, int k, double beta, double bound,
                   double hard_cap) {
    if (C == 0.0) return s;
    double T = std::max(s, 0.0);
    for (int iter = 0; iter < 4000; ++iter) {
        if (M * C * poly_exp_tail(T, k, beta) <= bound) return T;
        T += std::max(0.5, 2.0 / beta / 8.0);
        if (T > hard_cap)
            throw DivergentTailError("tail_cutoff: truncation horizon exceeds hard cap");
    }
    throw DivergentTailError("tail_cutoff: tail bound not reachable");
}

namespace {

VectorXd tail_integral_impl(const MatrixXd& A, const Signal& sig, double s, double tol,
                            bool shifted) {
    if (A.rows() != A.cols() || A.rows() != sig.dim())
        throw DimensionError("tail integral: dimension mismatch");
    if (sig.is_zero()) return VectorXd::Zero(sig.dim());
    if (sig.bounded_domain())
        throw UnsupportedTailError(
            "tail integral: signal has a bounded domain; no tail is available");
    const DecayEstimate dec = estimate_decay(A);
    const GrowthEnvelope env = sig.envelope();
    const double beta = dec.mu - env.alpha;
    if (beta <= 1e-12)
        throw DivergentTailError("tail integral: signal growth rate >= weight decay rate");
    // |e^{A^T tau} sig(tau)| <= M C (1+tau)^k e^{-beta tau}; for the shifted
    // variant the weight contributes an extra e^{mu s}.
    const double Mfac = shifted ? dec.M * std::exp(dec.mu * std::max(s, 0.0)) : dec.M;
    const double Tstar = tail_cutoff(s, Mfac, env.C, env.k, beta, 0.5 * tol);
    const MatrixXd At = A.transpose();
    auto f = [&](double tau) -> VectorXd {
        return matrix_exp(At, shifted ? tau - s : tau) * sig(tau);
    };
    if (Tstar <= s) return VectorXd::Zero(sig.dim());
    return integrate_adaptive(f, s, Tstar, 0.5 * tol, sig.breakpoints(s, Tstar));
}

}  // namespace

VectorXd weighted_tail_integral(const MatrixXd& A, const Signal& sig, double s, double tol) {
    return tail_integral_impl(A, sig, s, tol, /*shifted=*/false);
}

VectorXd shifted_tail_integral(const MatrixXd& A, const Signal& sig, double s, double tol) {
    return tail_integral_impl(A, sig, s, tol, /*shifted=*/true);
}

VectorXd weighted_interval_integral(const MatrixXd& A, const Signal& sig, double a, double b,
                                    double tol) {
    const MatrixXd At = A.transpose();
    auto f = [&](double tau) -> VectorXd { return matrix_exp(At, tau) * sig(tau); };
    return integrate_adaptive(f, a, b, tol, sig.breakpoints(a, b));
}

}  // namespace otlq

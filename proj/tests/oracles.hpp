// Test-only oracles, deliberately independent of the library's numerical paths:
// Taylor-series matrix exponential, adaptive Simpson quadrature, and a
// small fixed-step RK4 integrator for backward/forward scalar ODE checks.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <random>

namespace oracles {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// e^{At} by scaled Taylor summation to machine precision.
inline MatrixXd taylor_expm(const MatrixXd& A, double t) {
    MatrixXd At = A * t;
    int squarings = 0;
    while (At.norm() > 0.5) {
        At /= 2.0;
        ++squarings;
    }
    const int n = static_cast<int>(A.rows());
    MatrixXd term = MatrixXd::Identity(n, n);
    MatrixXd sum = term;
    for (int k = 1; k <= 40; ++k) {
        term = term * At / static_cast<double>(k);
        sum += term;
        if (term.norm() < 1e-18 * sum.norm()) break;
    }
    for (int i = 0; i < squarings; ++i) sum = sum * sum;
    return sum;
}

inline double simpson_rec(const std::function<double(double)>& f, double a, double b, double fa,
                          double fm, double fb, double whole, double tol, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if (depth > 40 || std::abs(left + right - whole) < 15.0 * tol)
        return left + right + (left + right - whole) / 15.0;
    return simpson_rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth + 1) +
           simpson_rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth + 1);
}

// Adaptive Simpson to absolute tolerance.
inline double simpson(const std::function<double(double)>& f, double a, double b,
                      double tol = 1e-12) {
    if (a == b) return 0.0;
    const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return simpson_rec(f, a, b, fa, fm, fb, whole, tol, 0);
}

// Fixed-step RK4 for x' = f(s, x) from (t0, x0) to t1.
inline VectorXd rk4(const std::function<VectorXd(double, const VectorXd&)>& f, double t0,
                    const VectorXd& x0, double t1, int steps) {
    VectorXd x = x0;
    const double h = (t1 - t0) / steps;
    double s = t0;
    for (int i = 0; i < steps; ++i) {
        const VectorXd k1 = f(s, x);
        const VectorXd k2 = f(s + 0.5 * h, x + 0.5 * h * k1);
        const VectorXd k3 = f(s + 0.5 * h, x + 0.5 * h * k2);
        const VectorXd k4 = f(s + h, x + h * k3);
        x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        s += h;
    }
    return x;
}

// Random stable matrix with spectral abscissa <= -gap.
inline MatrixXd random_stable(int n, std::mt19937_64& rng, double gap = 0.5) {
    std::normal_distribution<double> dist(0.0, 1.0);
    MatrixXd G(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) G(i, j) = dist(rng);
    Eigen::EigenSolver<MatrixXd> es(G, false);
    const double shift = es.eigenvalues().real().maxCoeff();
    return G - (shift + gap) * MatrixXd::Identity(n, n);
}

inline MatrixXd random_matrix(int rows, int cols, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, 1.0);
    MatrixXd M(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) M(i, j) = dist(rng);
    return M;
}

inline MatrixXd random_psd(int n, std::mt19937_64& rng) {
    MatrixXd C = random_matrix(n, n, rng);
    return C.transpose() * C / n;
}

inline MatrixXd random_orthogonal(int n, std::mt19937_64& rng) {
    Eigen::HouseholderQR<MatrixXd> qr(random_matrix(n, n, rng));
    return qr.householderQ();
}

}  // namespace oracles

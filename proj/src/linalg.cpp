#include "otlq/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <complex>

namespace otlq {

namespace {

MatrixXd pade_exp(const MatrixXd& A, const std::vector<double>& b) {
    // b holds Pade coefficients b[0..m] with m odd.
    const int n = static_cast<int>(A.rows());
    const int m = static_cast<int>(b.size()) - 1;
    std::vector<MatrixXd> P;  // (A^2)^j for j = 0..m/2
    P.push_back(MatrixXd::Identity(n, n));
    const MatrixXd A2 = A * A;
    for (int j = 1; j <= m / 2; ++j) P.push_back(MatrixXd(P.back() * A2));
    MatrixXd Uodd = MatrixXd::Zero(n, n), V = MatrixXd::Zero(n, n);
    for (int k = 1; k <= m; k += 2) Uodd += b[k] * P[(k - 1) / 2];
    for (int k = 0; k <= m; k += 2) V += b[k] * P[k / 2];
    const MatrixXd U = A * Uodd;
    // (V - U) X = (V + U)
    return (V - U).partialPivLu().solve(V + U);
}

MatrixXd pade13_exp(const MatrixXd& A) {
    static const std::vector<double> b = {
        64764752532480000.0, 32382376266240000.0, 7771770303897600.0, 1187353796428800.0,
        129060195264000.0,   10559470521600.0,    670442572800.0,     33522128640.0,
        1323241920.0,        40840800.0,          960960.0,           16380.0,
        182.0,               1.0};
    const int n = static_cast<int>(A.rows());
    const MatrixXd A2 = A * A;
    const MatrixXd A4 = A2 * A2;
    const MatrixXd A6 = A4 * A2;
    const MatrixXd I = MatrixXd::Identity(n, n);
    MatrixXd U = A * (A6 * (b[13] * A6 + b[11] * A4 + b[9] * A2) + b[7] * A6 + b[5] * A4 +
                      b[3] * A2 + b[1] * I);
    MatrixXd V = A6 * (b[12] * A6 + b[10] * A4 + b[8] * A2) + b[6] * A6 + b[4] * A4 + b[2] * A2 +
                 b[0] * I;
    return (V - U).partialPivLu().solve(V + U);
}

}  // namespace

MatrixXd matrix_exp(const MatrixXd& A, double t) {
    if (A.rows() != A.cols()) throw DimensionError("matrix_exp: A must be square");
    if (!A.allFinite() || !std::isfinite(t)) throw OverflowError("matrix_exp: non-finite input");
    MatrixXd At = A * t;
    if (!At.allFinite()) throw OverflowError("matrix_exp: A*t overflows");
    const double nrm = At.lpNorm<1>();

    static const std::vector<double> b3 = {120, 60, 12, 1};
    static const std::vector<double> b5 = {30240, 15120, 3360, 420, 30, 1};
    static const std::vector<double> b7 = {17297280, 8648640, 1995840, 277200, 25200, 1512, 56, 1};
    static const std::vector<double> b9 = {17643225600.0, 8821612800.0, 2075673600.0,
                                           302702400.0,   30270240.0,   2162160.0,
                                           110880.0,      3960.0,       90.0,
                                           1.0};
    MatrixXd E;
    if (nrm <= 1.495585217958292e-2) {
        E = pade_exp(At, b3);
    } else if (nrm <= 2.539398330063230e-1) {
        E = pade_exp(At, b5);
    } else if (nrm <= 9.504178996162932e-1) {
        E = pade_exp(At, b7);
    } else if (nrm <= 2.097847961257068e0) {
        E = pade_exp(At, b9);
    } else {
        const double theta13 = 5.371920351148152;
        int squarings = 0;
        if (nrm > theta13) {
            squarings = std::max(0, static_cast<int>(std::ceil(std::log2(nrm / theta13))));
            At /= std::pow(2.0, squarings);
        }
        E = pade13_exp(At);
        for (int i = 0; i < squarings; ++i) {
            E = E * E;
            if (!E.allFinite()) throw OverflowError("matrix_exp: result overflows");
        }
    }
    if (!E.allFinite()) throw OverflowError("matrix_exp: result overflows");
    return E;
}

double spectral_abscissa(const MatrixXd& A) {
    Eigen::EigenSolver<MatrixXd> es(A, /*computeEigenvectors=*/false);
    return es.eigenvalues().real().maxCoeff();
}

Eigen::VectorXcd eigenvalues(const MatrixXd& A) {
    Eigen::EigenSolver<MatrixXd> es(A, false);
    return es.eigenvalues();
}

bool is_normal_matrix(const MatrixXd& A, double rel_tol) {
    const double scale = A.squaredNorm();
    if (scale == 0.0) return true;
    return (A * A.transpose() - A.transpose() * A).norm() <= rel_tol * scale;
}

DecayEstimate estimate_decay(const MatrixXd& A, double margin) {
    const double alpha = spectral_abscissa(A);
    if (alpha >= 0.0)
        throw NotApplicableError("estimate_decay: matrix is not stable (spectral abscissa >= 0)");
    DecayEstimate d;
    if (is_normal_matrix(A)) {
        d.M = 1.0;
        d.mu = -alpha;
        d.exact = true;
        return d;
    }
    d.mu = -alpha - margin;
    if (d.mu <= 0.0) d.mu = -alpha * 0.5;
    // Fit M = sup_s ||e^{As}|| e^{mu s} on a log-spaced grid covering the
    // non-normal transient, then inflate by 10%.
    double M = 1.0;
    const double s_hi = 60.0 / d.mu;
    for (int i = 0; i <= 240; ++i) {
        const double s = s_hi * std::pow(10.0, -4.0 + 4.0 * i / 240.0);
        const double v = matrix_exp(A, s).operatorNorm() * std::exp(d.mu * s);
        M = std::max(M, v);
    }
    d.M = 1.1 * M;
    return d;
}

namespace {
Eigen::MatrixXd kron(const MatrixXd& X, const MatrixXd& Y) {
    MatrixXd K(X.rows() * Y.rows(), X.cols() * Y.cols());
    for (int i = 0; i < X.rows(); ++i)
        for (int j = 0; j < X.cols(); ++j) K.block(i * Y.rows(), j * Y.cols(), Y.rows(), Y.cols()) = X(i, j) * Y;
    return K;
}
}  // namespace

MatrixXd solve_sylvester(const MatrixXd& A, const MatrixXd& B, const MatrixXd& C) {
    const int p = static_cast<int>(C.rows()), q = static_cast<int>(C.cols());
    if (A.rows() != p || A.cols() != p || B.rows() != q || B.cols() != q)
        throw DimensionError("solve_sylvester: inconsistent dimensions");
    // vec(AX + XB) = (I (x) A + B^T (x) I) vec(X)
    MatrixXd K = kron(MatrixXd::Identity(q, q), A) + kron(B.transpose(), MatrixXd::Identity(p, p));
    VectorXd c(Eigen::Map<const VectorXd>(C.data(), C.size()));
    VectorXd x = K.partialPivLu().solve(-c);
    return Eigen::Map<MatrixXd>(x.data(), p, q);
}

MatrixXd solve_lyapunov(const MatrixXd& A, const MatrixXd& Q) {
    MatrixXd X = solve_sylvester(A.transpose(), A, Q);
    return 0.5 * (X + X.transpose());
}

MatrixXd lyapunov_tail_integral(const MatrixXd& A, const MatrixXd& Q) {
    if (spectral_abscissa(A) >= 0.0)
        throw DivergentTailError("lyapunov_tail_integral: A is not stable");
    return solve_lyapunov(A, Q);
}

MatrixXd kalman_matrix(const MatrixXd& A, const MatrixXd& B) {
    const int n = static_cast<int>(A.rows()), m = static_cast<int>(B.cols());
    MatrixXd K(n, n * m);
    MatrixXd blk = B;
    for (int k = 0; k < n; ++k) {
        K.middleCols(k * m, m) = blk;
        blk = A * blk;
    }
    return K;
}

int numerical_rank(const MatrixXd& M, double tol) {
    Eigen::JacobiSVD<MatrixXd> svd(M);
    const auto& sv = svd.singularValues();
    if (sv.size() == 0 || sv(0) == 0.0) return 0;
    int r = 0;
    for (int i = 0; i < sv.size(); ++i)
        if (sv(i) > tol * sv(0)) ++r;
    return r;
}

MatrixXd pole_place(const MatrixXd& A, const MatrixXd& B, const VectorXd& poles) {
    const int n = static_cast<int>(A.rows()), m = static_cast<int>(B.cols());
    if (poles.size() != n) throw DimensionError("pole_place: need n poles");
    // Deterministic sequence of input mixing directions.
    std::vector<VectorXd> dirs;
    for (int j = 0; j < m; ++j) dirs.push_back(VectorXd::Unit(m, j));
    if (m > 1) {
        dirs.push_back(VectorXd::Ones(m) / std::sqrt(static_cast<double>(m)));
        VectorXd w(m);
        for (int j = 0; j < m; ++j) w(j) = 1.0 / (j + 1.0);
        dirs.push_back(w.normalized());
    }
    for (const auto& w : dirs) {
        const VectorXd bvec = B * w;
        const MatrixXd K = kalman_matrix(A, bvec);
        if (numerical_rank(K, 1e-9) < n) continue;
        // Ackermann: k = e_n^T K^{-1} p(A) with p the desired characteristic polynomial.
        MatrixXd pA = MatrixXd::Identity(n, n);
        for (int i = 0; i < n; ++i) pA = pA * (A - poles(i) * MatrixXd::Identity(n, n));
        const VectorXd en = VectorXd::Unit(n, n - 1);
        const Eigen::RowVectorXd row = K.transpose().partialPivLu().solve(en).transpose();
        const Eigen::RowVectorXd k = row * pA;
        return -(w * k);
    }
    throw NotApplicableError("pole_place: no single-input reduction is controllable");
}

MatrixXd stabilizing_feedback(const MatrixXd& A, const MatrixXd& B, double mu_star) {
    const int n = static_cast<int>(A.rows());
    VectorXd poles(n);
    for (int i = 0; i < n; ++i) poles(i) = -mu_star - i;
    return pole_place(A, B, poles);
}

bool is_symmetric(const MatrixXd& M, double rel_tol) {
    const double scale = 1.0 + M.norm();
    return (M - M.transpose()).norm() <= rel_tol * scale;
}

bool is_psd(const MatrixXd& M, double tol) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (M + M.transpose()));
    return es.eigenvalues().minCoeff() >= -tol * (1.0 + std::abs(es.eigenvalues().maxCoeff()));
}

bool is_pd(const MatrixXd& M, double tol) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (M + M.transpose()));
    return es.eigenvalues().minCoeff() > tol;
}

}  // namespace otlq

#pragma once
/// @file emm.hpp
/// @brief Exact recovery of extended-Maxwell-model parameters from 2N moments
/// m_k = sum_j alpha_j^k beta_j (a Prony-type Hankel / companion / Vandermonde chain).

#include "common.hpp"
#include "media.hpp"

#include <Eigen/Eigenvalues>
#include <boost/multiprecision/cpp_bin_float.hpp>

namespace viscobeam::emm {

struct Recovery {
    std::vector<double> alphas;  // ascending
    std::vector<double> betas;
    double hankel_condition = 0.0;
};

inline Eigen::MatrixXd hankel_matrix(const std::vector<double>& m, int N) {
    Eigen::MatrixXd M(N, N);
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < N; ++j) M(i, j) = m[i + j];
    return M;
}

inline double condition_number(const Eigen::MatrixXd& M) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(M);
    const auto& s = svd.singularValues();
    const double smax = s(0), smin = s(s.size() - 1);
    if (smin == 0.0) return std::numeric_limits<double>::infinity();
    return smax / smin;
}

/// Recovers (alpha, beta) from m_0..m_{2N-1}.
inline Recovery recover_parameters(const std::vector<double>& moments, double max_condition = 1e12) {
    if (moments.empty() || moments.size() % 2 != 0) throw ArgumentError("recover_parameters: need 2N moments, N >= 1");
    const int N = static_cast<int>(moments.size() / 2);
    Recovery out;
    const Eigen::MatrixXd M = hankel_matrix(moments, N);
    out.hankel_condition = condition_number(M);
    if (!(out.hankel_condition <= max_condition))
        throw IdentifiabilityError("Hankel moment matrix is numerically singular (repeated alpha or zero beta)");

    // Monic polynomial p(y) = y^N + sum_l c_l y^l with sum_l c_l m_{l+k} = -m_{N+k}.
    Eigen::VectorXd rhs(N);
    for (int k = 0; k < N; ++k) rhs(k) = -moments[N + k];
    const Eigen::VectorXd c = M.colPivHouseholderQr().solve(rhs);

    Eigen::MatrixXd comp = Eigen::MatrixXd::Zero(N, N);
    for (int i = 1; i < N; ++i) comp(i, i - 1) = 1.0;
    for (int i = 0; i < N; ++i) comp(i, N - 1) = -c(i);
    Eigen::EigenSolver<Eigen::MatrixXd> es(comp, false);
    const auto ev = es.eigenvalues();
    double radius = 0;
    for (int i = 0; i < N; ++i) radius = std::max(radius, std::abs(ev(i)));
    for (int i = 0; i < N; ++i) {
        if (std::abs(ev(i).imag()) > 1e-8 * std::max(1.0, radius))
            throw NonRealSpectrumError("moment polynomial has a complex root pair");
        out.alphas.push_back(ev(i).real());
    }
    std::sort(out.alphas.begin(), out.alphas.end());

    Eigen::MatrixXd V(N, N);
    Eigen::VectorXd m0(N);
    for (int k = 0; k < N; ++k) {
        m0(k) = moments[k];
        for (int j = 0; j < N; ++j) V(k, j) = std::pow(out.alphas[j], k);
    }
    const Eigen::VectorXd beta = V.colPivHouseholderQr().solve(m0);
    out.betas.assign(beta.data(), beta.data() + N);
    return out;
}

/// Numeric det of M_ij = sum_l alpha_l^{i+j} beta_l against prod beta * prod_{j<k} (alpha_j - alpha_k)^2.
inline std::pair<double, double> hankel_determinant_check(const std::vector<double>& alphas,
                                                          const std::vector<double>& betas) {
    if (alphas.size() != betas.size() || alphas.empty()) throw ArgumentError("hankel_determinant_check: length mismatch");
    const int N = static_cast<int>(alphas.size());
    // The Hankel determinant suffers heavy cancellation when alphas cluster, so
    // moments and elimination run in 50-digit arithmetic.
    using big = boost::multiprecision::cpp_bin_float_50;
    std::vector<big> m(2 * N, big(0));
    for (int j = 0; j < N; ++j) {
        big p(1);
        for (int k = 0; k < 2 * N; ++k, p *= alphas[j]) m[k] += p * betas[j];
    }
    std::vector<std::vector<big>> A(N, std::vector<big>(N));
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < N; ++j) A[i][j] = m[i + j];
    big det(1);
    for (int col = 0; col < N; ++col) {
        int piv = col;
        for (int r = col + 1; r < N; ++r)
            if (abs(A[r][col]) > abs(A[piv][col])) piv = r;
        if (A[piv][col] == 0) {
            det = 0;
            break;
        }
        if (piv != col) {
            std::swap(A[piv], A[col]);
            det = -det;
        }
        det *= A[col][col];
        for (int r = col + 1; r < N; ++r) {
            const big f = A[r][col] / A[col][col];
            for (int c = col; c < N; ++c) A[r][c] -= f * A[col][c];
        }
    }
    const double numeric = static_cast<double>(det);
    double formula = 1.0;
    for (double b : betas) formula *= b;
    for (int j = 0; j < N; ++j)
        for (int k = j + 1; k < N; ++k) formula *= (alphas[j] - alphas[k]) * (alphas[j] - alphas[k]);
    return {numeric, formula};
}

/// Coefficients of p(y) = prod (y - alpha_v), lowest degree first (length N+1, leading 1).
inline std::vector<double> monic_from_roots(const std::vector<double>& roots) {
    std::vector<double> p{1.0};
    for (double r : roots) {
        std::vector<double> q(p.size() + 1, 0.0);
        for (std::size_t i = 0; i < p.size(); ++i) {
            q[i + 1] += p[i];
            q[i] -= r * p[i];
        }
        p = q;
    }
    return p;
}

/// |LHS - RHS| / (1 + |LHS|) for the recurrence
///   sum_j alpha_j^{N+k} beta_j = - sum_{l<N} (1/l!) p^{(l)}(0) sum_j alpha_j^{l+k} beta_j.
inline double magic_formula_residual(const std::vector<double>& alphas, const std::vector<double>& betas, int k) {
    if (k < 0) throw ArgumentError("magic_formula_residual: k must be >= 0");
    const int N = static_cast<int>(alphas.size());
    const auto m = emm_moments(alphas, betas, N + k + 1);
    const auto p = monic_from_roots(alphas);  // p^{(l)}(0)/l! = p[l]
    const double lhs = m[N + k];
    double rhs = 0;
    for (int l = 0; l < N; ++l) rhs -= p[l] * m[l + k];
    return std::abs(lhs - rhs) / (1.0 + std::abs(lhs));
}

}  // namespace viscobeam::emm

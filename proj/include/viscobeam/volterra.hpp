#pragma once
/// @file volterra.hpp
/// @brief Second-kind Volterra equations u(t) = f(t) + int_0^t K(t-s) u(s) ds on a
/// uniform grid, by product-trapezoid forward substitution or via the resolvent kernel.

#include "common.hpp"

#include <Eigen/Eigenvalues>

#include <functional>

namespace viscobeam::volterra {

struct TimeGrid {
    double t0 = 0.0;
    double t1 = 1.0;
    int n_steps = 1;

    TimeGrid() = default;
    TimeGrid(double a, double b, int n) : t0(a), t1(b), n_steps(n) {
        if (!(b > a)) throw ArgumentError("TimeGrid: t1 must exceed t0");
        if (n < 1) throw ArgumentError("TimeGrid: n_steps must be >= 1");
    }
    double dt() const { return (t1 - t0) / n_steps; }
    double t(int i) const { return t0 + i * dt(); }
    int size() const { return n_steps + 1; }
};

/// Samples g(t_i - t0) on the grid, i.e. a difference kernel evaluated at lags i*dt.
template <class T = double, class Fn>
std::vector<T> sample_lags(Fn&& g, const TimeGrid& grid) {
    std::vector<T> v(grid.size());
    for (int i = 0; i < grid.size(); ++i) v[i] = static_cast<T>(g(i * grid.dt()));
    return v;
}

template <class T = double, class Fn>
std::vector<T> sample(Fn&& f, const TimeGrid& grid) {
    std::vector<T> v(grid.size());
    for (int i = 0; i < grid.size(); ++i) v[i] = static_cast<T>(f(grid.t(i)));
    return v;
}

/// Trapezoid convolution (a * b)(t_n) = int_0^{t_n} a(t_n - s) b(s) ds for all n.
template <class T>
std::vector<T> convolve(const std::vector<T>& a, const std::vector<T>& b, double dt) {
    const std::size_t n = std::min(a.size(), b.size());
    std::vector<T> out(n, T(0));
    for (std::size_t i = 1; i < n; ++i) {
        T s = 0.5 * (a[i] * b[0] + a[0] * b[i]);
        for (std::size_t j = 1; j < i; ++j) s += a[i - j] * b[j];
        out[i] = dt * s;
    }
    return out;
}

/// Solves u(t_i) = f(t_i) + int_0^{t_i} K(t_i, s) u(s) ds for a general kernel given as
/// a callable K(i, j) on grid indices. Product trapezoid, lower-triangular substitution.
template <class T, class KernelIJ>
std::vector<T> solve_second_kind_general(KernelIJ&& K, const std::vector<T>& f, double dt) {
    const std::size_t n = f.size();
    std::vector<T> u(n);
    if (n == 0) return u;
    u[0] = f[0];
    for (std::size_t i = 1; i < n; ++i) {
        T s = 0.5 * K(i, 0) * u[0];
        for (std::size_t j = 1; j < i; ++j) s += K(i, j) * u[j];
        const T diag = 1.0 - 0.5 * dt * K(i, i);
        if (std::abs(diag) < 1e-14) throw SingularOperatorError("Volterra step matrix is singular");
        u[i] = (f[i] + dt * s) / diag;
    }
    return u;
}

/// Difference-kernel form: K sampled at lags 0, dt, 2dt, ...
template <class T>
std::vector<T> solve_second_kind(const std::vector<T>& K, const std::vector<T>& f, double dt) {
    if (K.size() < f.size()) throw ArgumentError("solve_second_kind: kernel shorter than source");
    return solve_second_kind_general<T>([&](std::size_t i, std::size_t j) { return K[i - j]; }, f, dt);
}

template <class KFn, class FFn>
std::vector<double> solve_second_kind(KFn&& K, FFn&& f, const TimeGrid& grid) {
    return solve_second_kind(sample_lags<double>(K, grid), sample<double>(f, grid), grid.dt());
}

struct Resolvent {
    std::vector<double> R;
    int terms = 0;
    double last_term_norm = 0.0;
};

/// Neumann series R = sum_n K_n with K_1 = K, K_n = K * K_{n-1}; truncated once the
/// sup norm of the next term is <= tol.
inline Resolvent resolvent_kernel(const std::vector<double>& K, double dt, double tol, int max_terms = 64) {
    if (!(tol > 0)) throw ArgumentError("resolvent_kernel: tol must be positive");
    Resolvent out;
    out.R = K;
    std::vector<double> term = K;
    auto sup = [](const std::vector<double>& v) {
        double m = 0;
        for (double x : v) m = std::max(m, std::abs(x));
        return m;
    };
    out.terms = 1;
    if (sup(K) == 0.0) return out;
    for (int n = 2; n <= max_terms; ++n) {
        term = convolve(K, term, dt);
        const double s = sup(term);
        out.last_term_norm = s;
        if (s <= tol) return out;
        for (std::size_t i = 0; i < out.R.size(); ++i) out.R[i] += term[i];
        out.terms = n;
    }
    throw ConvergenceError("resolvent Neumann series did not converge within " + std::to_string(max_terms) + " terms");
}

template <class KFn>
Resolvent resolvent_kernel(KFn&& K, const TimeGrid& grid, double tol, int max_terms = 64) {
    return resolvent_kernel(sample_lags<double>(K, grid), grid.dt(), tol, max_terms);
}

/// u = f + int R(t-s) f(s) ds.
inline std::vector<double> solve_with_resolvent(const Resolvent& R, const std::vector<double>& f, double dt) {
    auto c = convolve(R.R, f, dt);
    for (std::size_t i = 0; i < c.size(); ++i) c[i] += f[i];
    return c;
}

/// Memory operator with a time weight:
///   (V w)(t) = lead * w(t) - 1/2 int_0^t G(t-s) weight(s) w(s) ds.
/// G is sampled at lags; weight and input on the grid.
template <class T>
std::vector<T> apply_memory_operator_v(const std::vector<double>& G, const std::vector<T>& weight, T lead,
                                       const std::vector<T>& input, double dt) {
    const std::size_t n = input.size();
    std::vector<T> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        T s = 0;
        if (i > 0) {
            s = 0.5 * (G[i] * weight[0] * input[0] + G[0] * weight[i] * input[i]);
            for (std::size_t j = 1; j < i; ++j) s += G[i - j] * weight[j] * input[j];
            s *= dt;
        }
        out[i] = lead * input[i] - 0.5 * s;
    }
    return out;
}

/// Inverts V: solves lead*w - 1/2 int G(t-s) weight(s) w(s) ds = rhs.
template <class T>
std::vector<T> invert_memory_operator_v(const std::vector<double>& G, const std::vector<T>& weight, T lead,
                                        const std::vector<T>& rhs, double dt) {
    if (std::abs(lead) < 1e-14) throw SingularOperatorError("memory operator has vanishing leading coefficient");
    std::vector<T> f(rhs.size());
    for (std::size_t i = 0; i < rhs.size(); ++i) f[i] = rhs[i] / lead;
    return solve_second_kind_general<T>(
        [&](std::size_t i, std::size_t j) { return T(0.5 * G[i - j]) * weight[j] / lead; }, f, dt);
}

/// Complex exponential sum sum_j w_j exp(r_j t).
struct CExpSum {
    std::vector<cplx> weight;
    std::vector<cplx> rate;

    cplx operator()(double t) const { return derivative(t, 0); }
    cplx derivative(double t, int k) const {
        cplx s = 0;
        for (std::size_t j = 0; j < weight.size(); ++j) s += weight[j] * std::pow(rate[j], k) * std::exp(rate[j] * t);
        return s;
    }
};

/// Resolvent of an exponential-sum kernel K(t) = sum_j k_j exp(mu_j t), in closed form.
/// With D(s) = prod (s - mu_j) and N(s) = sum_j k_j prod_{i != j} (s - mu_i) the Laplace
/// transform of R is N / (D - N), so R is a sum over the (simple) roots of D - N.
inline CExpSum exp_sum_resolvent(const std::vector<double>& k, const std::vector<double>& mu) {
    if (k.size() != mu.size()) throw ArgumentError("exp_sum_resolvent: length mismatch");
    CExpSum R;
    const std::size_t n = k.size();
    if (n == 0) return R;
    using Poly = std::vector<cplx>;  // lowest degree first
    auto mul_root = [](const Poly& p, cplx r) {
        Poly q(p.size() + 1, 0.0);
        for (std::size_t i = 0; i < p.size(); ++i) {
            q[i + 1] += p[i];
            q[i] -= r * p[i];
        }
        return q;
    };
    auto eval = [](const Poly& p, cplx x) {
        cplx v = 0;
        for (std::size_t i = p.size(); i-- > 0;) v = v * x + p[i];
        return v;
    };
    Poly D{1.0}, N(n, 0.0);
    for (double m : mu) D = mul_root(D, m);
    for (std::size_t j = 0; j < n; ++j) {
        Poly t{1.0};
        for (std::size_t i = 0; i < n; ++i)
            if (i != j) t = mul_root(t, mu[i]);
        for (std::size_t i = 0; i < t.size(); ++i) N[i] += k[j] * t[i];
    }
    Poly P = D;
    for (std::size_t i = 0; i < n; ++i) P[i] -= N[i];
    Poly dP(n, 0.0);
    for (std::size_t i = 1; i <= n; ++i) dP[i - 1] = static_cast<double>(i) * P[i];
    Eigen::MatrixXcd comp = Eigen::MatrixXcd::Zero(n, n);
    for (std::size_t i = 1; i < n; ++i) comp(i, i - 1) = 1.0;
    for (std::size_t i = 0; i < n; ++i) comp(i, n - 1) = -P[i];
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(comp);
    double scale = 1.0;
    for (double m : mu) scale = std::max(scale, std::abs(m));
    for (std::size_t i = 0; i < n; ++i) {
        const cplx nu = es.eigenvalues()(i);
        for (std::size_t j = 0; j < i; ++j)
            if (std::abs(nu - es.eigenvalues()(j)) < 1e-7 * scale)
                throw DegenerateError("exp_sum_resolvent: repeated characteristic root");
        R.weight.push_back(eval(N, nu) / eval(dP, nu));
        R.rate.push_back(nu);
    }
    return R;
}

}  // namespace viscobeam::volterra

#pragma once

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <complex>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace viscobeam {

using cplx = std::complex<double>;
using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using CVec3 = Eigen::Vector3cd;
using CMat3 = Eigen::Matrix3cd;

inline constexpr double pi = 3.14159265358979323846;
inline constexpr cplx I{0.0, 1.0};

// Error taxonomy. The CLI maps ConfigError (and ArgumentError) to exit code 2
// and every other NumericalError to exit code 3.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConfigError : Error {
    using Error::Error;
};
struct ArgumentError : ConfigError {
    using ConfigError::ConfigError;
};
struct DomainError : ConfigError {
    using ConfigError::ConfigError;
};
struct UnsupportedError : ConfigError {
    using ConfigError::ConfigError;
};
struct DataModelError : ConfigError {
    using ConfigError::ConfigError;
};
struct PreconditionError : ConfigError {
    using ConfigError::ConfigError;
};
struct NumericalError : Error {
    using Error::Error;
};
struct ConvergenceError : NumericalError {
    using NumericalError::NumericalError;
};
struct IntegrationError : NumericalError {
    using NumericalError::NumericalError;
};
struct TrappedRayError : NumericalError {
    using NumericalError::NumericalError;
};
struct RiccatiBlowupError : NumericalError {
    double sigma = 0.0;
    RiccatiBlowupError(const std::string& what, double s) : NumericalError(what), sigma(s) {}
};
struct SingularOperatorError : NumericalError {
    using NumericalError::NumericalError;
};
struct CausticError : NumericalError {
    using NumericalError::NumericalError;
};
struct InstabilityError : NumericalError {
    long step = -1;
    InstabilityError(const std::string& what, long s) : NumericalError(what), step(s) {}
};
struct ResolutionError : NumericalError {
    using NumericalError::NumericalError;
};
struct NoArrivalError : NumericalError {
    using NumericalError::NumericalError;
};
struct DegenerateError : NumericalError {
    using NumericalError::NumericalError;
};
struct IdentifiabilityError : NumericalError {
    using NumericalError::NumericalError;
};
struct NonRealSpectrumError : NumericalError {
    using NumericalError::NumericalError;
};

/// Worker count: explicit setting, else VISCOBEAM_THREADS, else hardware concurrency.
inline int& thread_override() {
    static int n = 0;
    return n;
}

inline void set_thread_count(int n) { thread_override() = std::max(0, n); }

inline int thread_count() {
    if (thread_override() > 0) return thread_override();
    if (const char* env = std::getenv("VISCOBEAM_THREADS")) {
        int n = std::atoi(env);
        if (n > 0) return n;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Runs body(i) for i in [0, n). Each index is processed exactly once, so results
/// written to per-index slots are deterministic regardless of the worker count.
template <class Body>
void parallel_for(std::size_t n, Body&& body) {
    const int workers = std::min<int>(thread_count(), static_cast<int>(std::max<std::size_t>(n, 1)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::atomic<bool> failed{false};
    auto run = [&] {
        try {
            for (std::size_t i = next++; i < n && !failed; i = next++) body(i);
        } catch (...) {
            if (!failed.exchange(true)) failure = std::current_exception();
        }
    };
    std::vector<std::thread> pool;
    for (int w = 1; w < workers; ++w) pool.emplace_back(run);
    run();
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
}

/// Gauss-Legendre rule on [-1, 1] with Npts nodes, expanded from Boost's half table.
template <int Npts>
struct GaussRule {
    std::array<double, Npts> x{};
    std::array<double, Npts> w{};
    GaussRule() {
        using G = boost::math::quadrature::gauss<double, Npts>;
        const auto& a = G::abscissa();
        const auto& wt = G::weights();
        int k = 0;
        const int half = static_cast<int>(a.size());
        for (int i = half - 1; i >= 0; --i) {
            if (a[i] == 0.0) continue;
            x[k] = -a[i];
            w[k++] = wt[i];
        }
        for (int i = 0; i < half; ++i) {
            x[k] = a[i];
            w[k++] = wt[i];
        }
    }
};

template <int Npts>
const GaussRule<Npts>& gauss_rule() {
    static const GaussRule<Npts> rule;
    return rule;
}

/// Composite Gauss-Legendre nodes and weights on [a, b] with `panels` panels.
struct QuadNodes {
    std::vector<double> x;
    std::vector<double> w;
};

template <int Npts = 8>
QuadNodes composite_gauss(double a, double b, int panels) {
    QuadNodes q;
    if (!(b > a) || panels < 1) return q;
    const auto& r = gauss_rule<Npts>();
    q.x.reserve(panels * Npts);
    q.w.reserve(panels * Npts);
    const double h = (b - a) / panels;
    for (int p = 0; p < panels; ++p) {
        const double mid = a + (p + 0.5) * h;
        for (int i = 0; i < Npts; ++i) {
            q.x.push_back(mid + 0.5 * h * r.x[i]);
            q.w.push_back(0.5 * h * r.w[i]);
        }
    }
    return q;
}

/// Least-squares slope of log(y) against log(x).
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw ArgumentError("loglog_slope: need >= 2 matched samples");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double lx = std::log(x[i]);
        const double ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    const double den = n * sxx - sx * sx;
    if (den == 0.0) throw ArgumentError("loglog_slope: degenerate abscissae");
    return (n * sxy - sx * sy) / den;
}

}  // namespace viscobeam

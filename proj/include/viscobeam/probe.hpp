#pragma once
/// @file probe.hpp
/// @brief Semiclassical wave-packet transform T_k u(z, zeta) = (u, e^{ik Psi} b)_{L^2} with
/// Psi(y; z, zeta) = zeta.(y - z) + (i/2)|y - z|^2 on space-time samples, a decay-rate
/// classifier for the semiclassical wavefront set, and first-arrival picking on traces.

#include "common.hpp"

#include <algorithm>
#include <functional>
#include <iomanip>
#include <limits>
#include <ostream>

namespace viscobeam::probe {

/// Uniform lattice in (x, y, t).
struct Grid3 {
    Vec3 origin = Vec3::Zero();
    Vec3 spacing = Vec3::Constant(0.01);
    std::array<int, 3> n{1, 1, 1};

    Vec3 node(int i, int j, int l) const { return origin + Vec3(i * spacing(0), j * spacing(1), l * spacing(2)); }
    std::size_t size() const { return static_cast<std::size_t>(n[0]) * n[1] * n[2]; }
    std::size_t index(int i, int j, int l) const {
        return (static_cast<std::size_t>(l) * n[1] + j) * n[0] + i;
    }
    Vec3 upper() const { return node(n[0] - 1, n[1] - 1, n[2] - 1); }
    bool contains_ball(const Vec3& z, double r) const {
        for (int a = 0; a < 3; ++a)
            if (z(a) - r < origin(a) - 1e-12 || z(a) + r > upper()(a) + 1e-12) return false;
        return true;
    }
    /// Cube of half-width r around z with spacing h, aligned to z.
    static Grid3 around(const Vec3& z, double r, double h) {
        Grid3 g;
        const int m = static_cast<int>(std::ceil(r / h));
        g.spacing = Vec3::Constant(h);
        g.origin = z - Vec3::Constant(m * h);
        g.n = {2 * m + 1, 2 * m + 1, 2 * m + 1};
        return g;
    }
};

struct SampledField {
    Grid3 grid;
    std::vector<cplx> values;
    cplx at(int i, int j, int l) const { return values[grid.index(i, j, l)]; }
};

using SpaceTimeFunction = std::function<cplx(const Vec3&)>;

inline SampledField sample_field(const SpaceTimeFunction& u, const Grid3& g) {
    SampledField f;
    f.grid = g;
    f.values.assign(g.size(), 0.0);
    parallel_for(static_cast<std::size_t>(g.n[2]), [&](std::size_t l) {
        for (int j = 0; j < g.n[1]; ++j)
            for (int i = 0; i < g.n[0]; ++i)
                f.values[g.index(i, j, static_cast<int>(l))] = u(g.node(i, j, static_cast<int>(l)));
    });
    return f;
}

struct WavePacketQuery {
    Vec3 z = Vec3::Zero();
    Vec3 zeta = Vec3(1, 0, 1);  // (xi_x, xi_y, tau)
    std::vector<double> ks;
    double window_radius = 0.0;  // 0: 8 cells of the sampling lattice

    /// tau = 1 queries are the wave-type ones the propagation statement is about.
    bool wave_type() const { return std::abs(zeta(2) - 1.0) < 1e-12; }
    void validate() const {
        if (window_radius < 0) throw ArgumentError("WavePacketQuery: window radius must be positive");
        if (!ks.empty()) {
            if (ks.size() < 3) throw ArgumentError("WavePacketQuery: need at least 3 scales");
            for (std::size_t i = 1; i < ks.size(); ++i)
                if (!(ks[i] > ks[i - 1])) throw ArgumentError("WavePacketQuery: scales must increase strictly");
        }
    }
};

/// Window b: 1 on r <= R/2, smooth transition to 0 at r = R.
inline double window(double r, double R) {
    if (r <= 0.5 * R) return 1.0;
    if (r >= R) return 0.0;
    const double s = (r - 0.5 * R) / (0.5 * R);
    auto f = [](double v) { return v > 0 ? std::exp(-1.0 / v) : 0.0; };
    return f(1 - s) / (f(1 - s) + f(s));
}

/// The Gaussian factor e^{-k|y-z|^2/2} is below e^{-36} beyond this radius.
inline double gaussian_reach(double k) { return std::sqrt(72.0 / k); }

/// Lattice spacing used when sampling a callable: `per_wavelength` samples per 2 pi / k.
inline double default_spacing(double k, double per_wavelength = 8.0) { return 2 * pi / (k * per_wavelength); }

namespace detail {

inline double effective_radius(const WavePacketQuery& q, double h, double k) {
    const double R = q.window_radius > 0 ? q.window_radius : 8.0 * h;
    return std::min(R, gaussian_reach(k));
}

}  // namespace detail

/// Trapezoidal quadrature of int u(y) conj(e^{ik Psi(y)} b(y)) dy over the lattice nodes
/// within the window. The integrand is negligible (< e^{-36}) at the truncation radius, so
/// the rule is spectrally accurate once the oscillation is resolved.
inline cplx wavepacket_transform(const SampledField& u, const WavePacketQuery& q, double k) {
    if (!(k > 0)) throw ArgumentError("wavepacket_transform: k must be positive");
    q.validate();
    const Grid3& g = u.grid;
    const double hmax = g.spacing.maxCoeff();
    if (hmax > 2 * pi / (6 * k))
        throw ResolutionError("wavepacket_transform: fewer than 6 samples per wavelength 2 pi / k");
    const double Rw = q.window_radius > 0 ? q.window_radius : 8.0 * hmax;
    const double r = detail::effective_radius(q, hmax, k);
    if (!g.contains_ball(q.z, r)) throw DomainError("wavepacket_transform: window leaves the sampled domain");
    std::array<int, 3> lo{}, hi{};
    for (int a = 0; a < 3; ++a) {
        lo[a] = std::max(0, static_cast<int>(std::floor((q.z(a) - r - g.origin(a)) / g.spacing(a))));
        hi[a] = std::min(g.n[a] - 1, static_cast<int>(std::ceil((q.z(a) + r - g.origin(a)) / g.spacing(a))));
    }
    const double dV = g.spacing.prod();
    // sum over t-slices in fixed order; each slice is independent
    std::vector<cplx> part(static_cast<std::size_t>(hi[2] - lo[2] + 1), 0.0);
    parallel_for(part.size(), [&](std::size_t p) {
        const int l = lo[2] + static_cast<int>(p);
        cplx s = 0;
        for (int j = lo[1]; j <= hi[1]; ++j)
            for (int i = lo[0]; i <= hi[0]; ++i) {
                const Vec3 d = g.node(i, j, l) - q.z;
                const double rr = d.norm();
                if (rr > r) continue;
                const cplx v = u.at(i, j, l);
                if (v == 0.0) continue;
                const double b = window(rr, Rw);
                // conj(e^{ik Psi}) = e^{-ik zeta.d} e^{-k|d|^2/2}
                s += v * b * std::exp(cplx(-0.5 * k * rr * rr, -k * q.zeta.dot(d)));
            }
        part[p] = s;
    });
    cplx tot = 0;
    for (const auto& s : part) tot += s;
    return tot * dV;
}

/// Same transform for a callable, sampled on a lattice centred at z.
inline cplx wavepacket_transform(const SpaceTimeFunction& u, const WavePacketQuery& q, double k,
                                 double per_wavelength = 8.0) {
    if (!(k > 0)) throw ArgumentError("wavepacket_transform: k must be positive");
    const double h = default_spacing(k, per_wavelength);
    const double r = detail::effective_radius(q, h, k);
    return wavepacket_transform(sample_field(u, Grid3::around(q.z, r, h)), q, k);
}

// ---------------------------------------------------------------------------
// Classification

struct PhaseSpacePoint {
    Vec3 z;
    Vec3 zeta;
};

struct Classification {
    PhaseSpacePoint point;
    std::vector<double> magnitudes;
    double exponent = 0.0;  // fitted d log|T_k u| / d log k
    bool flagged = false;
    bool wave_type = true;
    bool degenerate = false;  // all magnitudes at machine zero
};

/// Fit of log|T| against log k; flagged when the exponent exceeds `threshold`.
inline Classification classify_magnitudes(const PhaseSpacePoint& p, const std::vector<double>& ks,
                                          const std::vector<double>& mags, double threshold = -2.0) {
    if (ks.size() < 3 || ks.size() != mags.size()) throw ArgumentError("classify: need >= 3 matched scales");
    Classification c;
    c.point = p;
    c.magnitudes = mags;
    c.wave_type = std::abs(p.zeta(2) - 1.0) < 1e-12;
    const double floor = 1e-300;
    if (std::all_of(mags.begin(), mags.end(), [&](double m) { return !(m > floor); })) {
        c.degenerate = true;
        c.exponent = -std::numeric_limits<double>::infinity();
        return c;
    }
    std::vector<double> m(mags);
    for (auto& v : m) v = std::max(v, floor);
    c.exponent = loglog_slope(ks, m);
    c.flagged = c.exponent > threshold;
    return c;
}

/// A k-indexed family u_k sampled by the caller (one lattice per scale).
using Family = std::function<SampledField(double k)>;

/// The window is k-independent: by default its plateau covers the Gaussian reach at the
/// smallest scale, so b = 1 wherever the integrand is not negligible at every scale.
inline std::vector<Classification> classify_wavefront(const Family& family, const std::vector<PhaseSpacePoint>& points,
                                                      const std::vector<double>& ks, double window_radius = 0.0,
                                                      double threshold = -2.0) {
    WavePacketQuery probe{Vec3::Zero(), Vec3(0, 0, 1), ks, window_radius};
    probe.validate();
    if (window_radius <= 0) window_radius = 2.0 * gaussian_reach(ks.front());
    std::vector<std::vector<double>> mags(points.size(), std::vector<double>(ks.size()));
    for (std::size_t s = 0; s < ks.size(); ++s) {
        const SampledField u = family(ks[s]);
        for (std::size_t i = 0; i < points.size(); ++i) {
            WavePacketQuery q{points[i].z, points[i].zeta, {}, window_radius};
            mags[i][s] = std::abs(wavepacket_transform(u, q, ks[s]));
        }
    }
    std::vector<Classification> out;
    out.reserve(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) out.push_back(classify_magnitudes(points[i], ks, mags[i], threshold));
    return out;
}

inline void write_classification_csv(std::ostream& os, const std::vector<Classification>& cs) {
    os << "x,y,t,xi_x,xi_y,tau,exponent,flagged\n";
    os << std::setprecision(10);
    for (const auto& c : cs)
        os << c.point.z(0) << ',' << c.point.z(1) << ',' << c.point.z(2) << ',' << c.point.zeta(0) << ','
           << c.point.zeta(1) << ',' << c.point.zeta(2) << ',' << c.exponent << ',' << (c.flagged ? 1 : 0) << '\n';
}

// ---------------------------------------------------------------------------
// Arrival picking

/// Trailing root-mean-square over `width` samples.
inline std::vector<double> rms_envelope(const std::vector<double>& s, int width = 8) {
    std::vector<double> env(s.size(), 0.0);
    double acc = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        acc += s[i] * s[i];
        if (i >= static_cast<std::size_t>(width)) acc -= s[i - width] * s[i - width];
        const double n = static_cast<double>(std::min<std::size_t>(i + 1, width));
        env[i] = std::sqrt(std::max(acc, 0.0) / n);
    }
    return env;
}

/// First sample index where the envelope reaches `threshold` times its maximum.
inline std::size_t pick_arrival_index(const std::vector<double>& trace, double threshold, int width = 8) {
    if (!(threshold > 0 && threshold <= 1)) throw ArgumentError("pick_arrival: threshold must lie in (0, 1]");
    const auto env = rms_envelope(trace, width);
    const double mx = env.empty() ? 0.0 : *std::max_element(env.begin(), env.end());
    if (!(mx > 0)) throw NoArrivalError("pick_arrival: trace is identically zero");
    for (std::size_t i = 0; i < env.size(); ++i)
        if (env[i] >= threshold * mx * (1 - 1e-12)) return i;
    return env.size() - 1;
}

inline double pick_arrival(const std::vector<double>& trace, double t0, double dt, double threshold = 0.5,
                           int width = 8) {
    return t0 + dt * static_cast<double>(pick_arrival_index(trace, threshold, width));
}

}  // namespace viscobeam::probe

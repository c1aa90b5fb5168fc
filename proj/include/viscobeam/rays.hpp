#pragma once
/// @file rays.hpp
/// @brief Null bicharacteristics of q(z, zeta) = (tau^2 - c(x)|xi|^2)/2, lens data and
/// chord families for the unit disc.
///
/// Hamilton's equations: x' = -c xi, t' = tau, xi' = |xi|^2 grad c / 2, tau' = 0.
/// With tau = 1 the parameter sigma is elapsed time and |x'| = sqrt(c).

#include "common.hpp"
#include "media.hpp"

#include <boost/numeric/odeint.hpp>

namespace viscobeam::rays {

struct PhasePoint {
    Vec2 x = Vec2::Zero();
    double t = 0.0;
    Vec2 xi = Vec2::Zero();
    double tau = 1.0;
};

inline double hamiltonian(const SoundSpeedField& c, const PhasePoint& p) {
    return 0.5 * (p.tau * p.tau - c.c(p.x) * p.xi.squaredNorm());
}

/// Null covector for a unit spatial direction d at x: xi = -d / sqrt(c), tau = 1.
inline PhasePoint null_point(const SoundSpeedField& c, const Vec2& x, const Vec2& dir, double t0 = 0.0) {
    const Vec2 d = dir.normalized();
    return PhasePoint{x, t0, -d / std::sqrt(c.c(x)), 1.0};
}

/// Ray state: x, y, t, xi_x, xi_y, tau, arc length.
using RayState = std::array<double, 7>;

inline RayState pack(const PhasePoint& p) { return {p.x.x(), p.x.y(), p.t, p.xi.x(), p.xi.y(), p.tau, 0.0}; }
inline PhasePoint unpack(const RayState& s) {
    return PhasePoint{Vec2(s[0], s[1]), s[2], Vec2(s[3], s[4]), s[5]};
}

inline void ray_rhs(const SoundSpeedField& c, const RayState& s, RayState& ds) {
    const Vec2 x(s[0], s[1]);
    const Vec2 xi(s[3], s[4]);
    const Jet2 j = c.jet(x);
    const double xi2 = xi.squaredNorm();
    ds[0] = -j.value * xi.x();
    ds[1] = -j.value * xi.y();
    ds[2] = s[5];
    ds[3] = 0.5 * xi2 * j.grad.x();
    ds[4] = 0.5 * xi2 * j.grad.y();
    ds[5] = 0.0;
    ds[6] = j.value * std::sqrt(xi2);
}

/// Uniformly sampled null bicharacteristic with Hermite interpolation.
struct Bicharacteristic {
    std::vector<double> sigma;
    std::vector<RayState> state;
    std::vector<RayState> deriv;
    bool truncated = false;
    double max_q_drift = 0.0;

    double span() const { return sigma.empty() ? 0.0 : sigma.back() - sigma.front(); }
    std::size_t size() const { return sigma.size(); }

    RayState at(double s) const {
        if (sigma.size() < 2) throw ArgumentError("bicharacteristic has fewer than two samples");
        const double h = sigma[1] - sigma[0];
        double u = (s - sigma.front()) / h;
        std::size_t i = static_cast<std::size_t>(std::clamp(std::floor(u), 0.0, static_cast<double>(sigma.size() - 2)));
        const double t = (s - sigma[i]) / h;
        const double h00 = (1 + 2 * t) * (1 - t) * (1 - t), h10 = t * (1 - t) * (1 - t), h01 = t * t * (3 - 2 * t),
                     h11 = t * t * (t - 1);
        RayState r;
        for (std::size_t k = 0; k < r.size(); ++k)
            r[k] = h00 * state[i][k] + h * h10 * deriv[i][k] + h01 * state[i + 1][k] + h * h11 * deriv[i + 1][k];
        return r;
    }
    PhasePoint point(double s) const { return unpack(at(s)); }
};

namespace detail {
using Stepper = boost::numeric::odeint::runge_kutta_dopri5<RayState>;
}

/// Adaptive Dormand-Prince integration of the Hamiltonian flow, sampled every
/// `sample_step` in sigma. Leaving the field's box truncates the ray (flagged).
inline Bicharacteristic trace_bicharacteristic(const SoundSpeedField& c, const PhasePoint& start, double span,
                                               double tol = 1e-9, double sample_step = 0.0) {
    namespace ode = boost::numeric::odeint;
    if (!(span > 0)) throw ArgumentError("trace_bicharacteristic: span must be positive");
    const double q0 = hamiltonian(c, start);
    if (std::abs(q0) > 1e-10 * (1.0 + start.tau * start.tau))
        throw ArgumentError("trace_bicharacteristic: start point is not null");
    if (sample_step <= 0) sample_step = span / 1000.0;
    const int n = std::max(2, static_cast<int>(std::ceil(span / sample_step - 1e-9)));
    const double h = span / n;

    Bicharacteristic ray;
    auto sys = [&](const RayState& s, RayState& ds, double) { ray_rhs(c, s, ds); };
    auto stepper = ode::make_dense_output(tol, tol, detail::Stepper());
    RayState s = pack(start);
    stepper.initialize(s, 0.0, std::min(h, 1e-3));
    const double zeta2 = 1.0 + start.xi.squaredNorm() + start.tau * start.tau;
    auto record = [&](double sg, const RayState& st) {
        RayState d;
        ray_rhs(c, st, d);
        ray.sigma.push_back(sg);
        ray.state.push_back(st);
        ray.deriv.push_back(d);
        ray.max_q_drift = std::max(ray.max_q_drift, std::abs(hamiltonian(c, unpack(st))) / zeta2);
    };
    record(0.0, s);
    int next = 1;
    const Box box = c.bounds();
    try {
        while (next <= n) {
            stepper.do_step(sys);
            while (next <= n && stepper.current_time() >= next * h - 1e-14) {
                RayState st;
                stepper.calc_state(next * h, st);
                if (!box.contains(Vec2(st[0], st[1]))) {
                    ray.truncated = true;
                    return ray;
                }
                record(next * h, st);
                ++next;
            }
            if (stepper.current_time_step() < 1e-14 * span) throw IntegrationError("ray step size underflow");
        }
    } catch (const DomainError&) {
        ray.truncated = true;
    }
    return ray;
}

/// Convex region described by an implicit function (negative inside).
struct Disc {
    Vec2 center = Vec2::Zero();
    double radius = 1.0;
    double level(const Vec2& x) const { return (x - center).squaredNorm() - radius * radius; }
    double diameter() const { return 2.0 * radius; }
    bool inside(const Vec2& x) const { return level(x) < 0; }
};

struct LensRecord {
    PhasePoint entry;
    PhasePoint exit;
    Vec2 entry_dir = Vec2::Zero();
    Vec2 exit_dir = Vec2::Zero();
    double travel_time = 0.0;
    double arc_length = 0.0;
};

/// Traces the null ray entering the disc at `entry` along inward unit `dir` until it
/// leaves; the exit is located by bisection on the boundary function to 1e-10.
inline LensRecord lens_data(const SoundSpeedField& c, const Disc& dom, const Vec2& entry, const Vec2& dir,
                            double tol = 1e-9) {
    namespace ode = boost::numeric::odeint;
    if (std::abs(std::sqrt((entry - dom.center).squaredNorm()) - dom.radius) > 1e-8)
        throw ArgumentError("lens_data: entry point is not on the boundary");
    const Vec2 d = dir.normalized();
    if (d.dot(entry - dom.center) > 0) throw ArgumentError("lens_data: direction is not inward");
    const double cap = 10.0 * dom.diameter() / std::sqrt(c.c_min());
    const PhasePoint p0 = null_point(c, entry, d);
    auto sys = [&](const RayState& s, RayState& ds, double) { ray_rhs(c, s, ds); };
    auto stepper = ode::make_dense_output(tol, tol, detail::Stepper());
    RayState s = pack(p0);
    stepper.initialize(s, 0.0, 1e-3);
    auto lev = [&](const RayState& st) { return dom.level(Vec2(st[0], st[1])); };
    bool was_inside = false;
    double prev_t = 0.0;
    while (true) {
        stepper.do_step(sys);
        const double tn = stepper.current_time();
        const RayState& cur = stepper.current_state();
        const double lv = lev(cur);
        if (lv < 0) was_inside = true;
        // Skip the grazing start: the ray begins exactly on the boundary.
        if (was_inside && lv >= 0) {
            double a = prev_t, b = tn;
            RayState mid;
            while (b - a > 1e-12) {
                const double m = 0.5 * (a + b);
                stepper.calc_state(m, mid);
                (lev(mid) < 0 ? a : b) = m;
            }
            // Final refinement of the crossing on the implicit function.
            for (int it = 0; it < 60 && b - a > 1e-15; ++it) {
                const double m = 0.5 * (a + b);
                stepper.calc_state(m, mid);
                (lev(mid) < 0 ? a : b) = m;
            }
            const double tc = 0.5 * (a + b);
            stepper.calc_state(tc, mid);
            LensRecord rec;
            rec.entry = p0;
            rec.entry_dir = d;
            rec.exit = unpack(mid);
            RayState dm;
            ray_rhs(c, mid, dm);
            rec.exit_dir = Vec2(dm[0], dm[1]).normalized();
            rec.travel_time = tc;
            rec.arc_length = mid[6];
            return rec;
        }
        if (tn > cap) throw TrappedRayError("ray did not leave the domain within the travel-time cap");
        prev_t = tn;
    }
}

struct Chord {
    Vec2 entry;
    Vec2 dir;
    double angle = 0.0;
    double offset = 0.0;
};

/// Parallel-beam chord family of a disc: n_angles directions in [0, pi), n_offsets
/// impact parameters at the midpoints of equal slices of the diameter.
inline std::vector<Chord> chord_family(const Disc& dom, int n_angles, int n_offsets) {
    if (n_angles < 1 || n_offsets < 1) throw ArgumentError("chord_family: counts must be >= 1");
    std::vector<Chord> out;
    out.reserve(static_cast<std::size_t>(n_angles) * n_offsets);
    for (int a = 0; a < n_angles; ++a) {
        const double th = pi * a / n_angles;
        const Vec2 d(std::cos(th), std::sin(th));
        const Vec2 nrm(-d.y(), d.x());
        for (int o = 0; o < n_offsets; ++o) {
            const double p = dom.radius * (-1.0 + (2.0 * o + 1.0) / n_offsets);
            const double half = std::sqrt(std::max(0.0, dom.radius * dom.radius - p * p));
            Chord ch;
            ch.entry = dom.center + p * nrm - half * d;
            ch.dir = d;
            ch.angle = th;
            ch.offset = p;
            out.push_back(ch);
        }
    }
    return out;
}

}  // namespace viscobeam::rays

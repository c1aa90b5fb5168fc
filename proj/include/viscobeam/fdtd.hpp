#pragma once
/// @file fdtd.hpp
/// @brief Leapfrog solver for d_t^2 u = div(c grad u) - int_0^t div(G(x,t-s) grad u(s)) ds + 2 f
/// on a 1D or 2D box with homogeneous Dirichlet walls.
///
/// Every kernel here is an exponential sum G(x,t) = sum_j w_j(x) e^{r_j(x) t} at fixed x,
/// so the memory term is carried by face-centred auxiliary fields
///   I_j(t) = int_0^t e^{r_j (t-s)} grad u(s) ds,   dI_j/dt = r_j I_j + grad u,
/// advanced with the trapezoidal exponential update, and the flux is
/// c grad u - sum_j w_j I_j. Cost is O(N) per cell and step.

#include "common.hpp"
#include "media.hpp"
#include "rays.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <iomanip>
#include <optional>
#include <sstream>

namespace viscobeam::fdtd {

using Field2 = Eigen::ArrayXXd;  // (nx, ny), index i along x

struct SimGrid {
    int nx = 101, ny = 101;  // ny == 1 selects the 1D solver
    double x0 = -1, y0 = -1;
    double dx = 0.02, dy = 0.02;
    double dt = 0.005;
    long steps = 100;

    bool one_d() const { return ny == 1; }
    Vec2 node(int i, int j) const { return Vec2(x0 + i * dx, one_d() ? 0.0 : y0 + j * dy); }
    double cell_area() const { return one_d() ? dx : dx * dy; }
    double cfl(double c_max) const { return std::sqrt(c_max) * dt / (one_d() ? dx : std::min(dx, dy)); }
    Box box() const { return Box{Vec2(x0, one_d() ? 0.0 : y0), Vec2(x0 + (nx - 1) * dx, one_d() ? 0.0 : y0 + (ny - 1) * dy)}; }
};

/// Space-time source f(x, t), zero outside `space` x [t_lo, t_hi].
struct SourceSpec {
    std::function<double(const Vec2&, double)> f;
    Box space = Box::unbounded();
    double t_lo = 0.0, t_hi = 1e300;
    bool active(double t) const { return f && t >= t_lo && t <= t_hi; }
};

/// Initial data: u(0) and either the velocity u_t(0) or the field at t = -dt.
struct InitialData {
    std::function<double(const Vec2&)> u0;
    std::function<double(const Vec2&)> v0;
    std::function<double(const Vec2&)> u_minus;
};

struct SimState {
    Field2 u_prev, u;  // time levels n-1 and n
    std::vector<Field2> Ix, Iy;  // per-component memory fields on x- and y-faces
    long step = 0;
    double t = 0.0;
};

struct SimOptions {
    std::vector<Vec2> receivers;     // sampled by bilinear interpolation every step
    long energy_every = 0;           // 0: do not record energies
    long snapshot_every = 0;         // 0: no snapshots
    bool check_cfl = true;
};

struct SimResult {
    std::vector<double> times;
    std::vector<std::vector<double>> traces;  // [receiver][step]
    std::vector<std::pair<double, double>> energies;  // (t_{n+1/2}, E)
    std::vector<std::pair<double, Field2>> snapshots;
    SimState state;
};

/// Media sampled on the staggered grid.
struct Media {
    Field2 cx, cy;  // c on x-faces (nx-1, ny) and y-faces (nx, ny-1)
    std::vector<Field2> wx, wy, rx, ry;
    int components = 0;
};

inline Media sample_media(const SoundSpeedField& c, const MemoryKernel& G, const SimGrid& g) {
    Media m;
    const int nxf = g.nx - 1, nyf = g.one_d() ? 0 : g.ny - 1;
    m.cx.resize(nxf, g.ny);
    m.cy.resize(g.nx, nyf);
    const int N = G.is_zero() ? 0 : static_cast<int>(G.exp_terms(g.node(0, 0)).weight.size());
    m.components = N;
    m.wx.assign(N, Field2(nxf, g.ny));
    m.rx.assign(N, Field2(nxf, g.ny));
    m.wy.assign(N, Field2(g.nx, nyf));
    m.ry.assign(N, Field2(g.nx, nyf));
    auto fill = [&](const Vec2& x, Field2& cf, std::vector<Field2>& w, std::vector<Field2>& r, int i, int j) {
        cf(i, j) = c.c(x);
        if (N == 0) return;
        const ExpSum e = G.exp_terms(x);
        if (static_cast<int>(e.weight.size()) != N) throw ConfigError("simulate: kernel component count varies in space");
        for (int k = 0; k < N; ++k) {
            w[k](i, j) = e.weight[k];
            r[k](i, j) = e.rate[k];
        }
    };
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < nxf; ++i) fill(g.node(i, j) + Vec2(0.5 * g.dx, 0), m.cx, m.wx, m.rx, i, j);
    for (int j = 0; j < nyf; ++j)
        for (int i = 0; i < g.nx; ++i) fill(g.node(i, j) + Vec2(0, 0.5 * g.dy), m.cy, m.wy, m.ry, i, j);
    return m;
}

namespace detail {

/// div(c grad u - sum_j w_j I_j) at interior nodes.
inline void divergence(const SimGrid& g, const Media& m, const SimState& s, Field2& out) {
    const int nx = g.nx, ny = g.ny;
    out.setZero(nx, ny);
    const Field2& u = s.u;
    Field2 fx(nx - 1, ny);
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx - 1; ++i) {
            double f = m.cx(i, j) * (u(i + 1, j) - u(i, j)) / g.dx;
            for (int k = 0; k < m.components; ++k) f -= m.wx[k](i, j) * s.Ix[k](i, j);
            fx(i, j) = f;
        }
    for (int j = 0; j < ny; ++j)
        for (int i = 1; i < nx - 1; ++i) out(i, j) = (fx(i, j) - fx(i - 1, j)) / g.dx;
    if (g.one_d()) return;
    Field2 fy(nx, ny - 1);
    for (int j = 0; j < ny - 1; ++j)
        for (int i = 0; i < nx; ++i) {
            double f = m.cy(i, j) * (u(i, j + 1) - u(i, j)) / g.dy;
            for (int k = 0; k < m.components; ++k) f -= m.wy[k](i, j) * s.Iy[k](i, j);
            fy(i, j) = f;
        }
    for (int j = 1; j < ny - 1; ++j)
        for (int i = 1; i < nx - 1; ++i) out(i, j) += (fy(i, j) - fy(i, j - 1)) / g.dy;
}

inline void zero_walls(const SimGrid& g, Field2& u) {
    u.row(0).setZero();
    u.row(g.nx - 1).setZero();
    if (!g.one_d()) {
        u.col(0).setZero();
        u.col(g.ny - 1).setZero();
    }
}

inline double bilinear(const SimGrid& g, const Field2& u, const Vec2& x) {
    const double fx = (x.x() - g.x0) / g.dx;
    const int i = std::clamp(static_cast<int>(std::floor(fx)), 0, g.nx - 2);
    const double a = fx - i;
    if (g.one_d()) return (1 - a) * u(i, 0) + a * u(i + 1, 0);
    const double fy = (x.y() - g.y0) / g.dy;
    const int j = std::clamp(static_cast<int>(std::floor(fy)), 0, g.ny - 2);
    const double b = fy - j;
    return (1 - a) * (1 - b) * u(i, j) + a * (1 - b) * u(i + 1, j) + (1 - a) * b * u(i, j + 1) + a * b * u(i + 1, j + 1);
}

}  // namespace detail

/// E = 1/2 sum ((u^{n} - u^{n-1})/dt)^2 + 1/2 sum c grad u^{n} . grad u^{n-1}, the quantity
/// conserved exactly by the leapfrog scheme when G = 0 and f = 0.
inline double energy(const SimState& s, const SimGrid& g, const Media& m) {
    const int nx = g.nx, ny = g.ny;
    double kin = 0, pot = 0;
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            const double v = (s.u(i, j) - s.u_prev(i, j)) / g.dt;
            kin += v * v;
        }
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx - 1; ++i)
            pot += m.cx(i, j) * (s.u(i + 1, j) - s.u(i, j)) * (s.u_prev(i + 1, j) - s.u_prev(i, j)) / (g.dx * g.dx);
    if (!g.one_d())
        for (int j = 0; j < ny - 1; ++j)
            for (int i = 0; i < nx; ++i)
                pot += m.cy(i, j) * (s.u(i, j + 1) - s.u(i, j)) * (s.u_prev(i, j + 1) - s.u_prev(i, j)) / (g.dy * g.dy);
    return 0.5 * (kin + pot) * g.cell_area();
}

inline double energy(const SimState& s, const SimGrid& g, const SoundSpeedField& c) {
    return energy(s, g, sample_media(c, ZeroKernel(), g));
}

inline SimState initial_state(const SimGrid& g, const Media& m, const InitialData& init) {
    SimState s;
    s.u.setZero(g.nx, g.ny);
    s.u_prev.setZero(g.nx, g.ny);
    for (int k = 0; k < m.components; ++k) {
        s.Ix.push_back(Field2::Zero(g.nx - 1, g.ny));
        s.Iy.push_back(Field2::Zero(g.nx, g.one_d() ? 0 : g.ny - 1));
    }
    if (!init.u0 && !init.v0 && !init.u_minus) return s;
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
            const Vec2 x = g.node(i, j);
            s.u(i, j) = init.u0 ? init.u0(x) : 0.0;
            if (init.u_minus) s.u_prev(i, j) = init.u_minus(x);
        }
    detail::zero_walls(g, s.u);
    if (!init.u_minus) {
        // u^{-1} = u^0 - dt v0 + dt^2/2 div(c grad u^0)
        Field2 L;
        detail::divergence(g, m, s, L);
        for (int j = 0; j < g.ny; ++j)
            for (int i = 0; i < g.nx; ++i) {
                const double v = init.v0 ? init.v0(g.node(i, j)) : 0.0;
                s.u_prev(i, j) = s.u(i, j) - g.dt * v + 0.5 * g.dt * g.dt * L(i, j);
            }
    }
    detail::zero_walls(g, s.u_prev);
    return s;
}

/// Advances the state by one step; the source is sampled at t_n.
inline void step(SimState& s, const SimGrid& g, const Media& m, const SourceSpec& src) {
    Field2 L;
    detail::divergence(g, m, s, L);
    Field2 next = 2 * s.u - s.u_prev + g.dt * g.dt * L;
    if (src.active(s.t))
        for (int j = 0; j < g.ny; ++j)
            for (int i = 0; i < g.nx; ++i) {
                const Vec2 x = g.node(i, j);
                if (src.space.contains(x)) next(i, j) += 2 * g.dt * g.dt * src.f(x, s.t);
            }
    detail::zero_walls(g, next);
    // I^{n+1} = e^{r dt} I^n + dt/2 (e^{r dt} grad u^n + grad u^{n+1})
    for (int k = 0; k < m.components; ++k) {
        for (int j = 0; j < g.ny; ++j)
            for (int i = 0; i < g.nx - 1; ++i) {
                const double e = std::exp(m.rx[k](i, j) * g.dt);
                const double g0 = (s.u(i + 1, j) - s.u(i, j)) / g.dx, g1 = (next(i + 1, j) - next(i, j)) / g.dx;
                s.Ix[k](i, j) = e * s.Ix[k](i, j) + 0.5 * g.dt * (e * g0 + g1);
            }
        if (!g.one_d())
            for (int j = 0; j < g.ny - 1; ++j)
                for (int i = 0; i < g.nx; ++i) {
                    const double e = std::exp(m.ry[k](i, j) * g.dt);
                    const double g0 = (s.u(i, j + 1) - s.u(i, j)) / g.dy, g1 = (next(i, j + 1) - next(i, j)) / g.dy;
                    s.Iy[k](i, j) = e * s.Iy[k](i, j) + 0.5 * g.dt * (e * g0 + g1);
                }
    }
    s.u_prev = std::move(s.u);
    s.u = std::move(next);
    ++s.step;
    s.t += g.dt;
}

inline SimResult simulate(const SoundSpeedField& c, const MemoryKernel& G, const SimGrid& g, const SourceSpec& src,
                          const InitialData& init = {}, const SimOptions& opt = {}) {
    if (g.nx < 3 || g.ny < 1 || g.ny == 2 || g.dx <= 0 || g.dt <= 0 || (!g.one_d() && g.dy <= 0) || g.steps < 0)
        throw ConfigError("simulate: invalid grid");
    const Media m = sample_media(c, G, g);
    double cmax = std::max(m.cx.size() ? m.cx.maxCoeff() : 0.0, m.cy.size() ? m.cy.maxCoeff() : 0.0);
    const double limit = g.one_d() ? 1.0 : 0.7;
    if (opt.check_cfl && g.cfl(cmax) > limit + 1e-12)
        throw ConfigError("simulate: CFL number " + std::to_string(g.cfl(cmax)) + " exceeds " + std::to_string(limit));
    SimResult r;
    r.state = initial_state(g, m, init);
    r.traces.assign(opt.receivers.size(), {});
    auto record = [&] {
        r.times.push_back(r.state.t);
        for (std::size_t k = 0; k < opt.receivers.size(); ++k)
            r.traces[k].push_back(detail::bilinear(g, r.state.u, opt.receivers[k]));
        if (opt.snapshot_every > 0 && r.state.step % opt.snapshot_every == 0) r.snapshots.emplace_back(r.state.t, r.state.u);
    };
    record();
    for (long n = 0; n < g.steps; ++n) {
        step(r.state, g, m, src);
        record();
        if (opt.energy_every > 0 && r.state.step % opt.energy_every == 0)
            r.energies.emplace_back(r.state.t - 0.5 * g.dt, energy(r.state, g, m));
        if (r.state.step % 50 == 0 || n + 1 == g.steps)
            if (!std::isfinite(r.state.u.abs().maxCoeff()))
                throw InstabilityError("simulate: non-finite field", r.state.step);
    }
    return r;
}

// ---------------------------------------------------------------------------
// Source-to-solution map

/// Protected region M = [0, T] x Omega inside the computational domain.
struct Geometry {
    rays::Disc omega;
    double T = 1.0;
    bool contains(const Vec2& x, double t) const { return omega.inside(x) && t >= 0 && t <= T; }
};

struct TraceSet {
    std::vector<double> times;
    std::vector<Vec2> receivers;
    std::vector<std::vector<double>> values;  // NaN where (x_r, t) lies in M
};

inline bool box_meets_disc(const Box& b, const rays::Disc& d) {
    const Vec2 p = d.center.cwiseMax(b.lo).cwiseMin(b.hi);
    return (p - d.center).squaredNorm() < d.radius * d.radius;
}

inline TraceSet source_to_solution(const SoundSpeedField& c, const MemoryKernel& G, const SimGrid& g,
                                   const Geometry& M, const SourceSpec& src, const std::vector<Vec2>& receivers) {
    const bool time_overlap = src.t_lo <= M.T && src.t_hi >= 0;
    if (time_overlap && box_meets_disc(src.space, M.omega))
        throw DataModelError("source_to_solution: source support intersects the protected region M");
    SimOptions opt;
    opt.receivers = receivers;
    const SimResult r = simulate(c, G, g, src, {}, opt);
    TraceSet ts;
    ts.times = r.times;
    ts.receivers = receivers;
    ts.values = r.traces;
    for (std::size_t k = 0; k < receivers.size(); ++k)
        for (std::size_t n = 0; n < ts.times.size(); ++n)
            if (M.contains(receivers[k], ts.times[n])) ts.values[k][n] = std::numeric_limits<double>::quiet_NaN();
    return ts;
}

// ---------------------------------------------------------------------------
// Trace I/O

inline void write_traces_csv(std::ostream& os, const std::vector<double>& times,
                             const std::vector<std::vector<double>>& traces) {
    os << "t";
    for (std::size_t k = 0; k < traces.size(); ++k) os << ",receiver_" << (k + 1);
    os << "\n" << std::setprecision(17);
    for (std::size_t n = 0; n < times.size(); ++n) {
        os << times[n];
        for (const auto& tr : traces) os << "," << tr[n];
        os << "\n";
    }
}

/// 32-byte header: "VISC", uint32 version, uint64 nt, uint64 nrec, 8 reserved bytes;
/// then nt rows of (t, receiver_1..receiver_nrec) as little-endian float64.
inline void write_traces_binary(std::ostream& os, const std::vector<double>& times,
                                const std::vector<std::vector<double>>& traces) {
    static_assert(sizeof(double) == 8);
    const std::uint32_t version = 1;
    const std::uint64_t nt = times.size(), nrec = traces.size(), reserved = 0;
    os.write("VISC", 4);
    os.write(reinterpret_cast<const char*>(&version), 4);
    os.write(reinterpret_cast<const char*>(&nt), 8);
    os.write(reinterpret_cast<const char*>(&nrec), 8);
    os.write(reinterpret_cast<const char*>(&reserved), 8);
    for (std::size_t n = 0; n < times.size(); ++n) {
        os.write(reinterpret_cast<const char*>(&times[n]), 8);
        for (const auto& tr : traces) os.write(reinterpret_cast<const char*>(&tr[n]), 8);
    }
}

inline std::pair<std::vector<double>, std::vector<std::vector<double>>> read_traces_binary(std::istream& is) {
    char magic[4];
    std::uint32_t version = 0;
    std::uint64_t nt = 0, nrec = 0, reserved = 0;
    is.read(magic, 4);
    is.read(reinterpret_cast<char*>(&version), 4);
    is.read(reinterpret_cast<char*>(&nt), 8);
    is.read(reinterpret_cast<char*>(&nrec), 8);
    is.read(reinterpret_cast<char*>(&reserved), 8);
    if (!is || std::memcmp(magic, "VISC", 4) != 0 || version != 1) throw ConfigError("read_traces_binary: bad header");
    std::vector<double> times(nt);
    std::vector<std::vector<double>> traces(nrec, std::vector<double>(nt));
    for (std::uint64_t n = 0; n < nt; ++n) {
        is.read(reinterpret_cast<char*>(&times[n]), 8);
        for (auto& tr : traces) is.read(reinterpret_cast<char*>(&tr[n]), 8);
    }
    if (!is) throw ConfigError("read_traces_binary: truncated data");
    return {times, traces};
}

}  // namespace viscobeam::fdtd

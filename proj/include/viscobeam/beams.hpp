#pragma once
/// @file beams.hpp
/// @brief Gaussian-beam quasimodes for P u = d_t^2 u - div(c grad u) + int_0^t div(G(t-s) grad u(s)) ds.
///
/// Space-time points are z = (x, y, t) with covector zeta = (xi, tau). The phase is
///   phi(z, sigma) = zeta(sigma).(z - z(sigma)) + 1/2 H(sigma)(z - z(sigma)).(z - z(sigma))
/// along a null bicharacteristic, H solving the matrix Riccati equation
///   H' + D + M H + H M^T + H C H = 0,
/// where D, M, C are the second derivatives of q(z, zeta) = (tau^2 - c|xi|^2)/2 in
/// (z,z), (z,zeta) and (zeta,zeta). The quasimode is
///   u = sum_l (-ik)^{-l} int_0^T ( e^{ik phi} a'_l + (-ik)^{-1} e^{ik phi((x,0),sigma)} a''_l ) dsigma,
/// with amplitudes constant in z (functions of sigma only) and a''_0 solving a Volterra
/// equation in t at each x.
///
/// Transport (derived by integrating the eikonal defect by parts in sigma and expanding
/// the memory integral at its upper limit): with beta = H_tt - c tr H_xx - grad c . xi
/// and memory coefficients m_p on the ray,
///   a0' = b a0,  b = -(beta + m_0)/2,  m_0 = G(x,0)/c,
///   (a1/a0)' = m_1/2,   (a2/a0)' = m_1 (a1/a0)/2 - m_2/2.

#include "common.hpp"
#include "media.hpp"
#include "rays.hpp"
#include "volterra.hpp"

#include <Eigen/Eigenvalues>
#include <boost/numeric/odeint.hpp>

#include <memory>
#include <optional>

namespace viscobeam::beams {

// ---------------------------------------------------------------------------
// Riccati path

struct RiccatiBlocks {
    Mat3 D = Mat3::Zero();
    Mat3 M = Mat3::Zero();
    Mat3 C = Mat3::Zero();
};

inline RiccatiBlocks riccati_blocks(const Jet2& cj, const Vec2& xi) {
    RiccatiBlocks b;
    b.D.topLeftCorner<2, 2>() = -0.5 * xi.squaredNorm() * cj.hess;
    b.M.topLeftCorner<2, 2>() = -cj.grad * xi.transpose();
    b.C.diagonal() << -cj.value, -cj.value, 1.0;
    return b;
}

/// Ray (7 entries, see rays::RayState) followed by Re H and Im H, row-major.
using BeamState = std::array<double, 25>;

inline CMat3 unpack_H(const BeamState& s) {
    CMat3 H;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) H(i, j) = cplx(s[7 + 3 * i + j], s[16 + 3 * i + j]);
    return H;
}

inline void pack_H(const CMat3& H, BeamState& s) {
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            s[7 + 3 * i + j] = H(i, j).real();
            s[16 + 3 * i + j] = H(i, j).imag();
        }
}

inline void beam_rhs(const SoundSpeedField& c, const BeamState& s, BeamState& ds) {
    rays::RayState r, dr;
    std::copy_n(s.begin(), 7, r.begin());
    rays::ray_rhs(c, r, dr);
    std::copy_n(dr.begin(), 7, ds.begin());
    const Jet2 cj = c.jet(Vec2(s[0], s[1]));
    const RiccatiBlocks b = riccati_blocks(cj, Vec2(s[3], s[4]));
    const CMat3 H = unpack_H(s);
    const CMat3 Hd = -(b.D.cast<cplx>() + b.M * H + H * b.M.transpose() + H * b.C * H);
    pack_H(Hd, ds);
}

inline double min_imag_eigenvalue(const CMat3& H) {
    const Mat3 im = 0.5 * (H.imag() + H.imag().transpose());
    Eigen::SelfAdjointEigenSolver<Mat3> es(im, Eigen::EigenvaluesOnly);
    return es.eigenvalues()(0);
}

/// Jointly integrated bicharacteristic and Riccati solution on a uniform sigma grid.
struct RiccatiPath {
    std::vector<double> sigma;
    std::vector<BeamState> state;
    std::vector<BeamState> deriv;
    double min_imag_eig = 0.0;  // over all samples
    double max_asymmetry = 0.0;
    double max_q_drift = 0.0;

    double span() const { return sigma.back(); }
    std::size_t size() const { return sigma.size(); }

    BeamState at(double s) const {
        const double h = sigma[1] - sigma[0];
        const double u = std::clamp(s / h, 0.0, static_cast<double>(sigma.size() - 1));
        const std::size_t i = std::min(static_cast<std::size_t>(u), sigma.size() - 2);
        const double t = (s - sigma[i]) / h;
        const double h00 = (1 + 2 * t) * (1 - t) * (1 - t), h10 = t * (1 - t) * (1 - t), h01 = t * t * (3 - 2 * t),
                     h11 = t * t * (t - 1);
        BeamState r;
        for (std::size_t k = 0; k < r.size(); ++k)
            r[k] = h00 * state[i][k] + h * h10 * deriv[i][k] + h01 * state[i + 1][k] + h * h11 * deriv[i + 1][k];
        return r;
    }
    static Vec3 z_of(const BeamState& s) { return Vec3(s[0], s[1], s[2]); }
    static Vec3 zeta_of(const BeamState& s) { return Vec3(s[3], s[4], s[5]); }
    CMat3 H(double s) const { return unpack_H(at(s)); }
};

/// Integrates ray and H together from `start` over [0, span]; H(0) = H0 with Im H0 > 0.
inline RiccatiPath solve_riccati(const SoundSpeedField& c, const rays::PhasePoint& start, double span, const CMat3& H0,
                                 double tol = 1e-11, double sample_step = 0.0) {
    namespace ode = boost::numeric::odeint;
    if (!(span > 0)) throw ArgumentError("solve_riccati: span must be positive");
    if ((H0 - H0.transpose()).norm() > 1e-12 * (1 + H0.norm())) throw ArgumentError("solve_riccati: H0 not symmetric");
    if (!(min_imag_eigenvalue(H0) > 0)) throw ArgumentError("solve_riccati: Im H0 must be positive definite");
    if (std::abs(rays::hamiltonian(c, start)) > 1e-10) throw ArgumentError("solve_riccati: start point is not null");
    if (sample_step <= 0) sample_step = span / 2000.0;
    const int n = std::max(4, static_cast<int>(std::ceil(span / sample_step - 1e-9)));
    const double h = span / n;

    RiccatiPath path;
    path.min_imag_eig = 1e300;
    BeamState s{};
    const rays::RayState r0 = rays::pack(start);
    std::copy_n(r0.begin(), 7, s.begin());
    pack_H(H0, s);
    auto sys = [&](const BeamState& x, BeamState& dx, double) { beam_rhs(c, x, dx); };
    auto stepper = ode::make_dense_output(tol, tol, ode::runge_kutta_dopri5<BeamState>());
    stepper.initialize(s, 0.0, std::min(h, 1e-3));
    auto record = [&](double sg, const BeamState& st) {
        BeamState d;
        beam_rhs(c, st, d);
        const CMat3 H = unpack_H(st);
        const double lam = min_imag_eigenvalue(H);
        if (!(lam > 0) || !std::isfinite(H.norm())) throw RiccatiBlowupError("Im H lost positivity", sg);
        path.min_imag_eig = std::min(path.min_imag_eig, lam);
        path.max_asymmetry = std::max(path.max_asymmetry, (H - H.transpose()).norm());
        rays::RayState rs;
        std::copy_n(st.begin(), 7, rs.begin());
        path.max_q_drift = std::max(path.max_q_drift, std::abs(rays::hamiltonian(c, rays::unpack(rs))));
        path.sigma.push_back(sg);
        path.state.push_back(st);
        path.deriv.push_back(d);
    };
    record(0.0, s);
    int next = 1;
    while (next <= n) {
        stepper.do_step(sys);
        while (next <= n && stepper.current_time() >= next * h - 1e-14) {
            BeamState st;
            stepper.calc_state(next * h, st);
            record(next * h, st);
            ++next;
        }
        if (stepper.current_time_step() < 1e-14 * span)
            throw RiccatiBlowupError("Riccati step size underflow", stepper.current_time());
    }
    return path;
}

// ---------------------------------------------------------------------------
// Transport

/// Per-sigma quantities on the ray that the transport ladder needs.
struct RayCoefficients {
    cplx beta;     // H_tt - c tr H_xx - grad c . xi
    double g0_c;   // G(x,0)/c = m_0
    cplx m1, m2;   // memory coefficients of order k^0 and k^-1
};

/// Memory coefficients from the upper-limit expansion of
///   int_0^t e^{ik phi(x,s)} F(s) ds,  phi(x,s) - phi(x,t) = -u + H_tt u^2/2,  u = t - s,
/// using int_0^inf e^{-iku} u^m du = m!/(ik)^{m+1}.
inline RayCoefficients ray_coefficients(const SoundSpeedField& c, const MemoryKernel& G, const BeamState& s) {
    const Vec2 x(s[0], s[1]);
    const Vec2 xi(s[3], s[4]);
    const Jet2 cj = c.jet(x);
    const CMat3 H = unpack_H(s);
    RayCoefficients rc;
    const cplx trxx = H(0, 0) + H(1, 1);
    rc.beta = H(2, 2) - cj.value * trxx - cj.grad.dot(xi);
    if (G.is_zero()) {
        rc.g0_c = 0;
        rc.m1 = rc.m2 = 0;
        return rc;
    }
    const auto tj = G.time_jet(x, 2);
    const Vec2 dG0 = G.spatial_jet(x, 0).grad, dG1 = G.spatial_jet(x, 1).grad;
    const Eigen::Vector2cd hxt(H(0, 2), H(1, 2));
    const cplx xi2 = xi.squaredNorm();
    const cplx l1 = -2.0 * (xi.cast<cplx>().dot(hxt));  // dot() conjugates its left argument; xi is real
    const cplx l2 = hxt(0) * hxt(0) + hxt(1) * hxt(1);
    // P2(u) = G(u) |grad phi(u)|^2, P1(u) = grad G(u) . grad phi(u) + G(u) tr H_xx
    const cplx g[3] = {tj[0], tj[1], 0.5 * tj[2]};
    const cplx gp[3] = {xi2, l1, l2};
    cplx P2[3];
    for (int m = 0; m < 3; ++m) {
        P2[m] = 0;
        for (int i = 0; i <= m; ++i) P2[m] += g[i] * gp[m - i];
    }
    cplx P1[2];
    P1[0] = dG0.dot(xi) + tj[0] * trxx;
    P1[1] = dG1.dot(xi) - (dG0(0) * hxt(0) + dG0(1) * hxt(1)) + tj[1] * trxx;
    const cplx h = H(2, 2);
    auto coef = [&](int p) {
        cplx v = 0;
        double fact_n = 1;
        for (int n = 0; n <= p; ++n) {
            if (n > 0) fact_n *= n;
            const cplx hn = std::pow(0.5 * h, n) / fact_n;
            const int m2 = p - n;
            if (m2 <= 2) v += hn * std::tgamma(2 * n + m2 + 1) * P2[m2];
            const int m1 = p - 1 - n;
            if (m1 >= 0 && m1 <= 1) v += hn * std::tgamma(2 * n + m1 + 1) * P1[m1];
        }
        return v;
    };
    rc.g0_c = tj[0] / cj.value;
    rc.m1 = coef(1);
    rc.m2 = coef(2);
    return rc;
}

/// Candidate transport laws compared by the residual scan. `Derived` is the law above;
/// the others exponentiate b_lit = 2 Q phi + G(x,0)|grad phi|^2/d_t phi with Q phi = -beta/2,
/// as written in the literature, with each sign / factor-of-i choice.
enum class Convention { Derived, LiteralPlus, LiteralMinus, LiteralPlusI, LiteralMinusI };

inline const char* convention_name(Convention c) {
    switch (c) {
        case Convention::Derived: return "derived exp(int(Q phi - G0/(2c)))";
        case Convention::LiteralPlus: return "exp(+int b)";
        case Convention::LiteralMinus: return "exp(-int b)";
        case Convention::LiteralPlusI: return "exp(+i int b)";
        case Convention::LiteralMinusI: return "exp(-i int b)";
    }
    return "?";
}

inline cplx transport_rate(const RayCoefficients& rc, Convention conv) {
    const cplx b_lit = -rc.beta + rc.g0_c;
    switch (conv) {
        case Convention::Derived: return -0.5 * (rc.beta + rc.g0_c);
        case Convention::LiteralPlus: return b_lit;
        case Convention::LiteralMinus: return -b_lit;
        case Convention::LiteralPlusI: return I * b_lit;
        case Convention::LiteralMinusI: return -I * b_lit;
    }
    return 0;
}

/// Amplitudes along the ray: a0 = exp(B), a1 = a0 J1, a2 = a0 J2, each stored with its
/// sigma-derivative on the path samples for Hermite interpolation.
struct AmplitudeLadder {
    int order = 0;  // highest a' level present
    Convention convention = Convention::Derived;
    double launch = 1.0;
    std::vector<double> sigma;
    std::vector<cplx> B, dB, J1, dJ1, J2, dJ2;

    cplx interp(const std::vector<cplx>& v, const std::vector<cplx>& dv, double s) const {
        const double h = sigma[1] - sigma[0];
        const double u = std::clamp(s / h, 0.0, static_cast<double>(sigma.size() - 1));
        const std::size_t i = std::min(static_cast<std::size_t>(u), sigma.size() - 2);
        const double t = (s - sigma[i]) / h;
        const double h00 = (1 + 2 * t) * (1 - t) * (1 - t), h10 = t * (1 - t) * (1 - t), h01 = t * t * (3 - 2 * t),
                     h11 = t * t * (t - 1);
        return h00 * v[i] + h * h10 * dv[i] + h01 * v[i + 1] + h * h11 * dv[i + 1];
    }
    cplx a0(double s) const { return launch * std::exp(interp(B, dB, s)); }
    /// a'_l(sigma) for l <= order.
    cplx a(int level, double s) const {
        if (level > order) throw ArgumentError("amplitude level not computed");
        if (level == 0) return a0(s);
        if (level == 1) return a0(s) * interp(J1, dJ1, s);
        return a0(s) * interp(J2, dJ2, s);
    }
};

namespace detail {
/// Cumulative integral of f over the path samples, 4-point Gauss per interval.
template <class F>
std::vector<cplx> cumulative(const std::vector<double>& sig, F&& f) {
    const auto& r = gauss_rule<4>();
    std::vector<cplx> out(sig.size(), 0.0);
    for (std::size_t i = 0; i + 1 < sig.size(); ++i) {
        const double a = sig[i], b = sig[i + 1];
        cplx s = 0;
        for (int q = 0; q < 4; ++q) s += r.w[q] * f(0.5 * (a + b) + 0.5 * (b - a) * r.x[q]);
        out[i + 1] = out[i] + 0.5 * (b - a) * s;
    }
    return out;
}
}  // namespace detail

/// a'_0 along the ray: a0(sigma) = launch * exp(int_0^sigma b).
inline AmplitudeLadder principal_transport(const SoundSpeedField& c, const MemoryKernel& G, const RiccatiPath& path,
                                           Convention conv = Convention::Derived, double launch = 1.0) {
    AmplitudeLadder L;
    L.convention = conv;
    L.launch = launch;
    L.sigma = path.sigma;
    auto rate = [&](double s) { return transport_rate(ray_coefficients(c, G, path.at(s)), conv); };
    L.B = detail::cumulative(path.sigma, rate);
    L.dB.resize(path.size());
    for (std::size_t i = 0; i < path.size(); ++i) L.dB[i] = transport_rate(ray_coefficients(c, G, path.state[i]), conv);
    return L;
}

/// Solves the level-l transport equation (l = 1, 2) with zero launch value.
inline void higher_transport(AmplitudeLadder& L, int level, const SoundSpeedField& c, const MemoryKernel& G,
                             const RiccatiPath& path) {
    if (level < 1) throw ArgumentError("higher_transport: level must be >= 1");
    if (level > 2) throw UnsupportedError("higher_transport: levels above 2 are not supported");
    if (level > L.order + 1) throw ArgumentError("higher_transport: lower levels must be solved first");
    const std::size_t n = path.size();
    if (level == 1) {
        L.J1 = detail::cumulative(path.sigma, [&](double s) { return 0.5 * ray_coefficients(c, G, path.at(s)).m1; });
        L.dJ1.resize(n);
        for (std::size_t i = 0; i < n; ++i) L.dJ1[i] = 0.5 * ray_coefficients(c, G, path.state[i]).m1;
    } else {
        auto f = [&](double s) {
            const auto rc = ray_coefficients(c, G, path.at(s));
            return 0.5 * rc.m1 * L.interp(L.J1, L.dJ1, s) - 0.5 * rc.m2;
        };
        L.J2 = detail::cumulative(path.sigma, f);
        L.dJ2.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const auto rc = ray_coefficients(c, G, path.state[i]);
            L.dJ2[i] = 0.5 * rc.m1 * L.J1[i] - 0.5 * rc.m2;
        }
    }
    L.order = std::max(L.order, level);
}

// ---------------------------------------------------------------------------
// Volterra amplitude correction a''_0(x, t, sigma) = y(x, t) a'_0(sigma) / d_t phi((x,0), sigma),
// where c(x) y - int_0^t G(x, t-s) y(s) ds = G(x, t).

/// Closed form y(x, .) as the resolvent of G(x, .)/c(x) (exponential sums only).
inline volterra::CExpSum memory_response(const SoundSpeedField& c, const MemoryKernel& G, const Vec2& x) {
    if (G.is_zero()) return {};
    const ExpSum e = G.exp_terms(x);
    const double cx = c.c(x);
    std::vector<double> w(e.weight.size());
    for (std::size_t j = 0; j < w.size(); ++j) w[j] = e.weight[j] / cx;
    return volterra::exp_sum_resolvent(w, e.rate);
}

/// y(x, t_i) on a grid by inverting the memory operator (lead c/2, weight 1, rhs G/2).
inline std::vector<double> memory_response_sampled(const SoundSpeedField& c, const MemoryKernel& G, const Vec2& x,
                                                   const volterra::TimeGrid& grid) {
    const auto Gs = volterra::sample_lags<double>([&](double t) { return G.value(x, t); }, grid);
    std::vector<double> rhs(Gs.size()), w(Gs.size(), 1.0);
    for (std::size_t i = 0; i < Gs.size(); ++i) rhs[i] = 0.5 * Gs[i];
    return volterra::invert_memory_operator_v<double>(Gs, w, 0.5 * c.c(x), rhs, grid.dt());
}

// ---------------------------------------------------------------------------
// Quasimode

struct QuasimodeOptions {
    int levels = 0;          // a'_0 .. a'_levels
    bool with_a2 = false;    // include the a''_0 term
    double cutoff_k = 0.0;   // k used for the cutoff radius (default: the evaluation k)
    int gauss_nodes_per_panel = 8;
};

/// Precomputed sigma-quadrature nodes with the phase data the evaluators need.
struct SigmaNode {
    double sigma, weight;
    Vec3 z, zeta;
    CMat3 H;
    cplx A;    // sum_l (-ik)^{-l} a'_l(sigma)
    cplx a0;   // a'_0(sigma)
    Vec3 zdot, zetadot;
};

class BeamQuasimode {
public:
    BeamQuasimode(SoundSpeedField c, KernelPtr G, std::shared_ptr<const RiccatiPath> path, AmplitudeLadder ladder,
                  double k, QuasimodeOptions opt)
        : c_(std::move(c)), G_(std::move(G)), path_(std::move(path)), ladder_(std::move(ladder)), k_(k), opt_(opt) {
        if (!(k_ > 0)) throw ArgumentError("assemble_quasimode: k must be positive");
        if (opt_.levels > ladder_.order) throw ArgumentError("assemble_quasimode: ladder lacks requested levels");
        const double T = path_->span();
        lam_min_ = path_->min_imag_eig;
        double lam_max_inv = 0;
        for (const auto& s : path_->state) lam_max_inv = std::max(lam_max_inv, 1.0 / min_imag_eigenvalue(unpack_H(s)));
        const double kc = opt_.cutoff_k > 0 ? opt_.cutoff_k : k_;
        // plateau where exp(-k Im phi) has fallen below 1e-16 for the widest slice
        cutoff_ = 9.0 * std::sqrt(lam_max_inv / kc);
        // sigma integrand width ~ (k |phi''|)^{-1/2}; panels well below that
        const double panel = 0.25 / std::sqrt(k_);
        const int panels = std::max(8, static_cast<int>(std::ceil(T / panel)));
        const QuadNodes q = opt_.gauss_nodes_per_panel == 8 ? composite_gauss<8>(0, T, panels)
                                                            : composite_gauss<4>(0, T, panels);
        nodes_.reserve(q.x.size());
        const cplx mik = -I * k_;
        for (std::size_t i = 0; i < q.x.size(); ++i) {
            const BeamState st = path_->at(q.x[i]);
            BeamState d;
            beam_rhs(c_, st, d);
            SigmaNode nd;
            nd.sigma = q.x[i];
            nd.weight = q.w[i];
            nd.z = RiccatiPath::z_of(st);
            nd.zeta = RiccatiPath::zeta_of(st);
            nd.H = unpack_H(st);
            nd.zdot = Vec3(d[0], d[1], d[2]);
            nd.zetadot = Vec3(d[3], d[4], d[5]);
            nd.a0 = ladder_.a0(nd.sigma);
            nd.A = 0;
            for (int l = 0; l <= opt_.levels; ++l) nd.A += std::pow(mik, -l) * ladder_.a(l, nd.sigma);
            nodes_.push_back(nd);
        }
        if (opt_.with_a2 && !G_->is_zero() && G_->is_spatially_constant() && c_.is_constant())
            y_cache_ = memory_response(c_, *G_, Vec2::Zero());
    }

    double k() const { return k_; }
    double cutoff_radius() const { return cutoff_; }
    double min_imag_eig() const { return lam_min_; }
    const std::vector<SigmaNode>& nodes() const { return nodes_; }
    const RiccatiPath& path() const { return *path_; }
    const AmplitudeLadder& ladder() const { return ladder_; }
    const SoundSpeedField& field() const { return c_; }
    const MemoryKernel& kernel() const { return *G_; }
    const QuasimodeOptions& options() const { return opt_; }

    static cplx phase(const SigmaNode& nd, const Vec3& z) {
        const Vec3 dz = z - nd.z;
        return nd.zeta.dot(dz) + 0.5 * dz.cast<cplx>().dot(nd.H * dz.cast<cplx>());
    }

    /// Smooth cutoff: 1 up to the radius, 0 beyond twice the radius.
    double eta(double r) const {
        if (r <= cutoff_) return 1.0;
        if (r >= 2 * cutoff_) return 0.0;
        const double s = (r - cutoff_) / cutoff_;
        auto f = [](double v) { return v > 0 ? std::exp(-1.0 / v) : 0.0; };
        return f(1 - s) / (f(1 - s) + f(s));
    }

    /// Index range of nodes whose sigma lies within `w` of `s0`.
    std::pair<std::size_t, std::size_t> window(double s0, double w) const {
        auto lo = std::lower_bound(nodes_.begin(), nodes_.end(), s0 - w,
                                   [](const SigmaNode& n, double v) { return n.sigma < v; });
        auto hi = std::upper_bound(nodes_.begin(), nodes_.end(), s0 + w,
                                   [](double v, const SigmaNode& n) { return v < n.sigma; });
        return {static_cast<std::size_t>(lo - nodes_.begin()), static_cast<std::size_t>(hi - nodes_.begin())};
    }

    /// Index range [i0, i1) of nodes where exp(-k Im phi(z, sigma)) can exceed e^{-45}:
    /// walk outward from the node nearest `s0` until a full panel lies below the floor.
    std::pair<std::size_t, std::size_t> active(const Vec3& z, double s0) const {
        const std::size_t n = nodes_.size();
        auto it = std::lower_bound(nodes_.begin(), nodes_.end(), s0,
                                   [](const SigmaNode& nd, double v) { return nd.sigma < v; });
        std::size_t c = std::min<std::size_t>(static_cast<std::size_t>(it - nodes_.begin()), n - 1);
        auto dead = [&](std::size_t i) { return k_ * phase(nodes_[i], z).imag() > 45.0; };
        const int run = opt_.gauss_nodes_per_panel;
        std::size_t hi = c, lo = c;
        for (int quiet = 0; hi < n && quiet < run; ++hi) quiet = dead(hi) ? quiet + 1 : 0;
        for (int quiet = 0; lo > 0 && quiet < run;) {
            --lo;
            quiet = dead(lo) ? quiet + 1 : 0;
        }
        return {lo, hi};
    }

    /// Half-width in sigma outside which exp(-k Im phi) < 1e-17 for points at time distance.
    double sigma_window() const { return std::sqrt(80.0 / (k_ * lam_min_)); }

    cplx value(const Vec2& x, double t) const {
        const Vec3 z(x.x(), x.y(), t);
        const double t0 = path_->state[0][2];
        const auto [i0, i1] = active(z, t - t0);
        cplx u = 0;
        for (std::size_t i = i0; i < i1; ++i) {
            const auto& nd = nodes_[i];
            const double e = eta((z - nd.z).norm());
            if (e == 0.0) continue;
            u += nd.weight * e * std::exp(I * k_ * phase(nd, z)) * nd.A;
        }
        if (opt_.with_a2) u += a2_term(x, t);
        return u;
    }

    /// (-ik)^{-1} int e^{ik phi((x,0),sigma)} y(x,t) a0(sigma) / d_t phi((x,0),sigma) dsigma.
    cplx a2_term(const Vec2& x, double t) const {
        if (G_->is_zero()) return 0;
        const Vec3 z0(x.x(), x.y(), path_->state[0][2]);
        cplx s = 0;
        for (const auto& nd : nodes_) {
            const double r = (z0 - nd.z).norm();
            const double e = eta(r);
            if (e == 0.0) continue;
            const cplx ph = phase(nd, z0);
            if (k_ * ph.imag() > 40) continue;
            const Vec3 dz = z0 - nd.z;
            const cplx phit = nd.zeta(2) + (nd.H.row(2) * dz.cast<cplx>())(0);
            s += nd.weight * e * std::exp(I * k_ * ph) * nd.a0 / phit;
        }
        if (s == 0.0) return 0;
        const volterra::CExpSum y = y_cache_ ? *y_cache_ : memory_response(c_, *G_, x);
        return s * y(t - path_->state[0][2]) / (-I * k_);
    }

private:
    SoundSpeedField c_;
    KernelPtr G_;
    std::shared_ptr<const RiccatiPath> path_;
    AmplitudeLadder ladder_;
    double k_;
    QuasimodeOptions opt_;
    double cutoff_ = 0, lam_min_ = 0;
    std::vector<SigmaNode> nodes_;
    std::optional<volterra::CExpSum> y_cache_;
};

/// Launch description for a complete beam.
struct BeamSpec {
    rays::PhasePoint start;
    double span = 1.0;
    CMat3 H0 = I * CMat3::Identity();
    int levels = 0;
    bool with_a2 = false;
    Convention convention = Convention::Derived;
};

/// Ray, Riccati, transport ladder; everything except the k-dependent quadrature.
struct BeamData {
    std::shared_ptr<const RiccatiPath> path;
    AmplitudeLadder ladder;
};

inline BeamData build_beam(const SoundSpeedField& c, const MemoryKernel& G, const BeamSpec& spec) {
    BeamData b;
    b.path = std::make_shared<RiccatiPath>(solve_riccati(c, spec.start, spec.span, spec.H0));
    b.ladder = principal_transport(c, G, *b.path, spec.convention);
    for (int l = 1; l <= spec.levels; ++l) higher_transport(b.ladder, l, c, G, *b.path);
    return b;
}

inline BeamQuasimode assemble_quasimode(const SoundSpeedField& c, const KernelPtr& G, const BeamData& b, double k,
                                        QuasimodeOptions opt) {
    return BeamQuasimode(c, G, b.path, b.ladder, k, opt);
}

// ---------------------------------------------------------------------------
// Wave-packet transform of the quasimode

/// (u, e^{ik Psi})_{L^2} with Psi(y) = zeta.(y - z) + (i/2)|y - z|^2, evaluated per sigma node
/// as a complex Gaussian integral: each slice e^{ik phi(., sigma)} has a quadratic phase, so
///   int e^{ik phi} conj(e^{ik Psi}) dy = (2 pi / k)^{3/2} det(I - iH)^{-1/2}
///       exp(ik(zeta_s.d + d.H d / 2) - (k/2) v.(I - iH)^{-1} v),   d = z - z_s,  v = zeta_s + H d - zeta.
/// The cutoff eta and the probe window are taken as 1: both are flat wherever the Gaussian
/// factor exceeds e^{-36}. The a''_0 correction is not included.
inline cplx wavepacket_transform(const BeamQuasimode& q, const Vec3& z, const Vec3& zeta) {
    const double k = q.k();
    const cplx pre = std::pow(2 * pi / k, 1.5);
    cplx s = 0;
    for (const auto& nd : q.nodes()) {
        const Eigen::Vector3cd d = (z - nd.z).cast<cplx>();
        const CMat3 K = CMat3::Identity() - I * nd.H;
        const Eigen::Vector3cd v = nd.zeta.cast<cplx>() + nd.H * d - zeta.cast<cplx>();
        const Eigen::Vector3cd Kv = K.partialPivLu().solve(v);
        // bilinear forms: transpose(), not adjoint()
        const cplx ex = I * k * ((nd.zeta.cast<cplx>().transpose() * d)(0) + 0.5 * (d.transpose() * nd.H * d)(0)) -
                        0.5 * k * (v.transpose() * Kv)(0);
        if (ex.real() < -45.0) continue;
        Eigen::ComplexEigenSolver<CMat3> es(K, false);
        cplx det_isqrt = 1.0;
        for (int i = 0; i < 3; ++i) det_isqrt /= std::sqrt(es.eigenvalues()(i));
        s += nd.weight * nd.A * det_isqrt * std::exp(ex);
    }
    return pre * s;
}

// ---------------------------------------------------------------------------
// Stationary phase

struct StationaryPhase {
    cplx predicted;
    cplx phi2;  // d^2 phi / d sigma^2 at (z(sigma0), sigma0)
};

/// Leading-order value of u at z(sigma0): k^{-1/2} (2 pi i / phi'')^{1/2} a'_0(sigma0),
/// phi'' = (H zdot - zetadot) . zdot.
inline StationaryPhase stationary_phase_value(const BeamQuasimode& q, double sigma0) {
    const double T = q.path().span();
    if (sigma0 < 0.1 * T || sigma0 > 0.9 * T)
        throw PreconditionError("stationary_phase_value: sigma0 must be at least 0.1 T from both endpoints");
    const BeamState st = q.path().at(sigma0);
    BeamState d;
    beam_rhs(q.field(), st, d);
    const CMat3 H = unpack_H(st);
    const Vec3 zd(d[0], d[1], d[2]), zed(d[3], d[4], d[5]);
    // bilinear (H zdot - zetadot) . zdot; zdot is real so dot() does not conjugate anything
    const cplx phi2b = zd.cast<cplx>().dot(H * zd.cast<cplx>()) - zed.dot(zd);
    if (std::abs(phi2b) < 1e-12) throw DegenerateError("stationary_phase_value: degenerate second derivative");
    const cplx pre = std::sqrt(2.0 * pi * I / phi2b) / std::sqrt(q.k());
    return {pre * q.ladder().a0(sigma0), phi2b};
}

// ---------------------------------------------------------------------------
// Residual

struct ResidualGrid {
    double t_lo = 0.3;   // fraction of the span
    double t_hi = 0.7;
    int nt = 10;
    int nx = 16;
    double half_width_std = 6.0;  // half-width of the local x box in beam standard deviations
    double endpoint_tolerance = 1e-2;  // allowed endpoint-term share of the residual
};

struct ResidualReport {
    double norm = 0.0;            // L2((t_lo,t_hi), L2) norm of P u
    double interior_norm = 0.0;   // same with the sigma-endpoint terms removed
    double endpoint_norm = 0.0;   // norm of the endpoint terms alone
    double u_norm = 0.0;          // norm of u on the same grid
    double a2_bound = 0.0;        // crude bound on the a''_0 term's share on the grid
    double wave_norm = 0.0;       // norm of the wave part alone (scale reference)
};

namespace detail {

/// Effective transverse Hessian of Im phi at fixed t after eliminating sigma.
inline double transverse_lambda(const SigmaNode& nd) {
    const Eigen::Vector3cd w = nd.H * nd.zdot.cast<cplx>() - nd.zetadot.cast<cplx>();
    const cplx p2 = nd.zdot.cast<cplx>().dot(w);
    const CMat3 Heff = nd.H - w * w.transpose() / p2;
    const Mat2 im = Heff.topLeftCorner<2, 2>().imag();
    Eigen::SelfAdjointEigenSolver<Mat2> es(0.5 * (im + im.transpose()), Eigen::EigenvaluesOnly);
    return es.eigenvalues()(0);
}

struct PointResidual {
    cplx Pu, wave, endpoint, u;
    double a2;
};

inline PointResidual residual_at(const BeamQuasimode& q, const Vec2& x, double t) {
    const double k = q.k();
    const cplx ik = I * k;
    const auto& nodes = q.nodes();
    const double t0 = q.path().state[0][2];
    const Jet2 cj = q.field().jet(x);
    const Vec3 z(x.x(), x.y(), t);
    PointResidual r{0, 0, 0, 0, 0};

    // wave part, analytic in z for each sigma
    {
        const auto [i0, i1] = q.active(z, t - t0);
        for (std::size_t i = i0; i < i1; ++i) {
            const auto& nd = nodes[i];
            const Vec3 dz = z - nd.z;
            const Eigen::Vector3cd dzc = dz.cast<cplx>();
            const Eigen::Vector3cd grad = nd.zeta.cast<cplx>() + nd.H * dzc;
            const cplx ph = nd.zeta.dot(dz) + 0.5 * (dzc.transpose() * nd.H * dzc)(0);
            const cplx e = nd.weight * std::exp(ik * ph) * nd.A;
            const cplx gx2 = grad(0) * grad(0) + grad(1) * grad(1);
            const cplx trxx = nd.H(0, 0) + nd.H(1, 1);
            const cplx sym = ik * (nd.H(2, 2) - cj.value * trxx - (cj.grad(0) * grad(0) + cj.grad(1) * grad(1))) -
                             k * k * (grad(2) * grad(2) - cj.value * gx2);
            r.wave += e * sym;
            r.u += e;
        }
    }
    // sigma-endpoint terms: -2ik [e^{ik phi} A]_0^T
    for (const double s : {0.0, q.path().span()}) {
        const BeamState st = q.path().at(s);
        const Vec3 dz = z - RiccatiPath::z_of(st);
        const Eigen::Vector3cd dzc = dz.cast<cplx>();
        const cplx ph = RiccatiPath::zeta_of(st).dot(dz) + 0.5 * (dzc.transpose() * unpack_H(st) * dzc)(0);
        cplx A = 0;
        for (int l = 0; l <= q.options().levels; ++l) A += std::pow(-ik, -l) * q.ladder().a(l, s);
        const cplx v = -2.0 * ik * std::exp(ik * ph) * A;
        r.endpoint += (s == 0.0 ? -v : v);
    }
    // memory part: int_0^t [G(t-s) Lap u + grad G(t-s) . grad u](x, s) ds, 8-point panels of 3/4 wavelength,
    // marching back from s = t until the integrand has decayed past its peak
    const MemoryKernel& G = q.kernel();
    cplx mem = 0;
    if (!G.is_zero()) {
        const auto& gr = gauss_rule<8>();
        const double panel = 1.5 * pi / k;
        double peak = 0;
        bool past_peak = false;
        for (int p = 0;; ++p) {
            const double b = t - p * panel;
            const double a = std::max(t0, b - panel);
            if (b <= t0) break;
            double pmax = 0;
            cplx psum = 0;
            for (int g = 0; g < 8; ++g) {
                const double s = 0.5 * (a + b) + 0.5 * (b - a) * gr.x[g];
                const double ws = 0.5 * (b - a) * gr.w[g];
                const double Gv = G.value(x, t - s);
                const Vec2 dG = G.grad_x(x, t - s);
                const Vec3 zs(x.x(), x.y(), s);
                cplx lap = 0, gdot = 0;
                const auto [i0, i1] = q.active(zs, s - t0);
                for (std::size_t i = i0; i < i1; ++i) {
                    const auto& nd = nodes[i];
                    const Vec3 dz = zs - nd.z;
                    const Eigen::Vector3cd dzc = dz.cast<cplx>();
                    const Eigen::Vector3cd grad = nd.zeta.cast<cplx>() + nd.H * dzc;
                    const cplx ph = nd.zeta.dot(dz) + 0.5 * (dzc.transpose() * nd.H * dzc)(0);
                    const cplx e = nd.weight * std::exp(ik * ph) * nd.A;
                    lap += e * (ik * (nd.H(0, 0) + nd.H(1, 1)) - k * k * (grad(0) * grad(0) + grad(1) * grad(1)));
                    gdot += e * ik * (dG(0) * grad(0) + dG(1) * grad(1));
                }
                const cplx f = Gv * lap + gdot;
                pmax = std::max(pmax, std::abs(f));
                psum += ws * f;
            }
            mem += psum;
            if (pmax >= peak) {
                peak = pmax;
            } else {
                past_peak = true;
            }
            if (past_peak && pmax < 1e-12 * peak) break;
            if (peak == 0 && p > 4 * std::sqrt(k)) break;
        }
    }
    r.Pu = r.wave + mem;
    if (q.options().with_a2) r.a2 = std::abs(q.a2_term(x, t)) * k * k;
    return r;
}

}  // namespace detail

/// Discrete L2 norm of P u over a ray-following grid: Gauss-Legendre times in
/// [t_lo, t_hi] * span and, at each time, a Gauss-Legendre square around x(t) sized by
/// the beam's transverse width. The a''_0 term is not differentiated; its size on the
/// grid is reported (`a2_bound`) and required to be negligible.
inline ResidualReport residual_norm(const BeamQuasimode& q, const ResidualGrid& grid = {}) {
    const double T = q.path().span();
    const double t0 = q.path().state[0][2];
    const QuadNodes tq = [&] {
        if (grid.nt <= 0) throw ArgumentError("residual_norm: nt must be positive");
        // nt Gauss nodes via composite 2-point panels keeps any count available
        QuadNodes n;
        const auto& r = gauss_rule<2>();
        const int panels = (grid.nt + 1) / 2;
        const double a = grid.t_lo * T, b = grid.t_hi * T, h = (b - a) / panels;
        for (int p = 0; p < panels; ++p)
            for (int i = 0; i < 2; ++i) {
                n.x.push_back(a + (p + 0.5) * h + 0.5 * h * r.x[i]);
                n.w.push_back(0.5 * h * r.w[i]);
            }
        return n;
    }();
    if (grid.nx != 8 && grid.nx != 16) throw ArgumentError("residual_norm: nx must be 8 or 16");
    const int nx = grid.nx;
    const double* gxx = nx == 8 ? gauss_rule<8>().x.data() : gauss_rule<16>().x.data();
    const double* gxw = nx == 8 ? gauss_rule<8>().w.data() : gauss_rule<16>().w.data();

    struct Acc {
        double pu = 0, interior = 0, endpoint = 0, u = 0, wave = 0, a2 = 0;
    };
    std::vector<Acc> per_t(tq.x.size());
    parallel_for(tq.x.size(), [&](std::size_t it) {
        const double sg = tq.x[it];
        const double t = t0 + sg;
        const auto [i0, i1] = q.window(sg, 1e-12);
        const SigmaNode* nd = nullptr;
        SigmaNode tmp;
        if (i0 < i1) {
            nd = &q.nodes()[i0];
        } else {
            const BeamState st = q.path().at(sg);
            BeamState d;
            beam_rhs(q.field(), st, d);
            tmp.z = RiccatiPath::z_of(st);
            tmp.zeta = RiccatiPath::zeta_of(st);
            tmp.H = unpack_H(st);
            tmp.zdot = Vec3(d[0], d[1], d[2]);
            tmp.zetadot = Vec3(d[3], d[4], d[5]);
            nd = &tmp;
        }
        const double lam = detail::transverse_lambda(*nd);
        if (!(lam > 0)) throw NumericalError("residual_norm: non-positive transverse beam width");
        const double R = grid.half_width_std / std::sqrt(q.k() * lam);
        if (R > q.cutoff_radius()) throw PreconditionError("residual_norm: grid extends past the cutoff plateau");
        const Vec2 xc(nd->z(0), nd->z(1));
        Acc acc;
        for (int i = 0; i < nx; ++i)
            for (int j = 0; j < nx; ++j) {
                const Vec2 x = xc + R * Vec2(gxx[i], gxx[j]);
                const double w = tq.w[it] * R * R * gxw[i] * gxw[j];
                const auto pr = detail::residual_at(q, x, t);
                acc.pu += w * std::norm(pr.Pu);
                acc.interior += w * std::norm(pr.Pu - pr.endpoint);
                acc.endpoint += w * std::norm(pr.endpoint);
                acc.u += w * std::norm(pr.u);
                acc.wave += w * std::norm(pr.wave);
                acc.a2 += w * pr.a2 * pr.a2;
            }
        per_t[it] = acc;
    });
    Acc tot;
    for (const auto& a : per_t) {
        tot.pu += a.pu;
        tot.interior += a.interior;
        tot.endpoint += a.endpoint;
        tot.u += a.u;
        tot.wave += a.wave;
        tot.a2 += a.a2;
    }
    ResidualReport rep;
    rep.norm = std::sqrt(tot.pu);
    rep.interior_norm = std::sqrt(tot.interior);
    rep.endpoint_norm = std::sqrt(tot.endpoint);
    rep.u_norm = std::sqrt(tot.u);
    rep.wave_norm = std::sqrt(tot.wave);
    rep.a2_bound = std::sqrt(tot.a2);
    if (rep.endpoint_norm > grid.endpoint_tolerance * rep.norm)
        throw PreconditionError("residual_norm: grid overlaps the sigma-endpoint supports");
    if (rep.a2_bound > grid.endpoint_tolerance * rep.norm)
        throw PreconditionError("residual_norm: a''_0 term is not negligible on the grid");
    return rep;
}

}  // namespace viscobeam::beams

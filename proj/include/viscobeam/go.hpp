#pragma once
/// @file go.hpp
/// @brief Real-phase (geometrical optics) solutions of
///   P u = d_t^2 u - div(c grad u) + int_0^t div(G(t-s) grad u(s)) ds
/// for constant c and a spatially constant exponential-sum kernel G.
///
/// With the plane phase psi(x) = theta.x / sqrt(c), phi = psi - t and eps = 1/(ik), the ansatz is
///   u = e^{ik phi} sum_{l=0}^{N} eps^l a_l(x,t) + e^{ik psi} sum_{l=1}^{N+1} eps^l w_l(x,t).
/// Integrating the memory term by parts in s splits it into local terms at s = t, which
/// feed the transport ladder of the a_l, and terms at s = 0, which carry the launch-site
/// phase e^{ik psi} and are absorbed by the w_l through Volterra equations in t.
///
/// Transport: a_l = e^{lambda t} b_l with lambda = -G(0)/(2c), and (d_t + v.grad) b_l = R_l/2,
/// v = sqrt(c) theta. Every b_l is a finite sum of t^n (d^alpha f)(x - v t) for the launch
/// profile f, and every w_l a finite sum of g(t) (d^alpha f)(x) with g an exponential
/// polynomial, so the ladder is exact symbolic algebra.

#include "common.hpp"
#include "media.hpp"
#include "volterra.hpp"

#include <array>
#include <map>

namespace viscobeam::go {

// ---------------------------------------------------------------------------
// Exponential polynomials in t

/// sum_j coef_j t^{n_j} e^{rate_j t}.
class TimeExpPoly {
public:
    struct Term {
        cplx rate;
        int n;
        cplx coef;
    };

    TimeExpPoly() = default;

    static TimeExpPoly from(const ExpSum& e) {
        TimeExpPoly p;
        for (std::size_t j = 0; j < e.weight.size(); ++j) p.add(e.rate[j], 0, e.weight[j]);
        return p;
    }
    static TimeExpPoly from(const volterra::CExpSum& e) {
        TimeExpPoly p;
        for (std::size_t j = 0; j < e.weight.size(); ++j) p.add(e.rate[j], 0, e.weight[j]);
        return p;
    }

    void add(cplx rate, int n, cplx coef) {
        if (coef == 0.0) return;
        for (auto& t : terms_)
            if (t.n == n && std::abs(t.rate - rate) <= 1e-12 * (1 + std::abs(rate))) {
                t.coef += coef;
                return;
            }
        terms_.push_back({rate, n, coef});
    }
    TimeExpPoly& operator+=(const TimeExpPoly& o) {
        for (const auto& t : o.terms_) add(t.rate, t.n, t.coef);
        return *this;
    }
    friend TimeExpPoly operator*(cplx s, const TimeExpPoly& p) {
        TimeExpPoly q;
        for (const auto& t : p.terms_) q.add(t.rate, t.n, s * t.coef);
        return q;
    }

    TimeExpPoly derivative() const {
        TimeExpPoly d;
        for (const auto& t : terms_) {
            d.add(t.rate, t.n, t.rate * t.coef);
            if (t.n > 0) d.add(t.rate, t.n - 1, static_cast<double>(t.n) * t.coef);
        }
        return d;
    }

    cplx operator()(double t) const {
        cplx s = 0;
        for (const auto& x : terms_) s += x.coef * std::pow(t, x.n) * std::exp(x.rate * t);
        return s;
    }

    bool empty() const { return terms_.empty(); }
    const std::vector<Term>& terms() const { return terms_; }

    /// (p * q)(t) = int_0^t p(t-s) q(s) ds, by partial fractions of the Laplace transforms.
    friend TimeExpPoly convolve(const TimeExpPoly& p, const TimeExpPoly& q) {
        TimeExpPoly r;
        for (const auto& x : p.terms_)
            for (const auto& y : q.terms_) convolve_terms(x, y, r);
        return r;
    }

private:
    static double fact(int n) { return std::tgamma(n + 1.0); }
    static double binom(int n, int k) { return fact(n) / (fact(k) * fact(n - k)); }

    static void convolve_terms(const Term& x, const Term& y, TimeExpPoly& out) {
        const int n = x.n, m = y.n;
        const cplx a = x.rate, b = y.rate;
        const cplx pref = x.coef * y.coef * fact(n) * fact(m);
        if (std::abs(a - b) <= 1e-9 * (1 + std::abs(a))) {
            out.add(a, n + m + 1, pref / fact(n + m + 1));
            return;
        }
        // 1/((p-a)^{n+1} (p-b)^{m+1}) = sum_i A_i/(p-a)^{i+1} + sum_j B_j/(p-b)^{j+1}
        for (int i = 0; i <= n; ++i) {
            const int r = n - i;
            const cplx Ai = (r % 2 ? -1.0 : 1.0) * binom(m + r, r) * std::pow(a - b, -(m + 1 + r));
            out.add(a, i, pref * Ai / fact(i));
        }
        for (int j = 0; j <= m; ++j) {
            const int s = m - j;
            const cplx Bj = (s % 2 ? -1.0 : 1.0) * binom(n + s, s) * std::pow(b - a, -(n + 1 + s));
            out.add(b, j, pref * Bj / fact(j));
        }
    }

    std::vector<Term> terms_;
};

// ---------------------------------------------------------------------------
// Launch profile and its derivatives

/// f(x) = amplitude exp(-|x - center|^2 / (2 width^2)).
struct GaussianProfile {
    Vec2 center = Vec2::Zero();
    double width = 0.5;
    double amplitude = 1.0;

    /// Table of d^n/dy_i^n of the 1D factors at y, n <= order, times the full Gaussian.
    struct Table {
        std::vector<double> dx, dy;
        double g = 0;
        double d(int a1, int a2) const { return g * dx[a1] * dy[a2]; }
    };
    Table table(const Vec2& y, int order) const {
        Table t;
        const Vec2 s = (y - center) / width;
        t.g = amplitude * std::exp(-0.5 * s.squaredNorm());
        // d^n/dy^n e^{-s^2/2} = (-1/width)^n He_n(s) e^{-s^2/2}
        auto fill = [&](double sv, std::vector<double>& v) {
            v.assign(order + 1, 0.0);
            double hm = 1, h = sv, sc = -1.0 / width;
            v[0] = 1;
            if (order >= 1) v[1] = sc * sv;
            double scn = sc;
            for (int n = 1; n < order; ++n) {
                const double hn = sv * h - n * hm;
                hm = h;
                h = hn;
                scn *= sc;
                v[n + 1] = scn * h;
            }
        };
        fill(s.x(), t.dx);
        fill(s.y(), t.dy);
        return t;
    }
};

using Multi = std::array<int, 2>;

/// sum c t^n (d^alpha f)(x - v t), keyed by (n, alpha_1, alpha_2).
using MovingPoly = std::map<std::array<int, 3>, double>;
/// sum g_alpha(t) (d^alpha f)(x).
using StaticPoly = std::map<Multi, TimeExpPoly>;

// ---------------------------------------------------------------------------
// Ladder

struct PlaneWaveSpec {
    Vec2 direction = Vec2(1, 0);
    GaussianProfile profile;
    int order = 1;  // N: residual O(k^{-N})
};

class GoLadder {
public:
    GoLadder(const SoundSpeedField& c, const MemoryKernel& G, const PlaneWaveSpec& spec) : spec_(spec) {
        if (!c.is_constant()) throw UnsupportedError("geometrical_optics_build: only constant sound speed is supported");
        if (!G.is_zero() && !G.is_spatially_constant())
            throw UnsupportedError("geometrical_optics_build: kernel must be constant in x");
        if (spec.order < 0 || spec.order > 3) throw UnsupportedError("geometrical_optics_build: order must be in 0..3");
        if (std::abs(spec.direction.norm() - 1) > 1e-12) throw ArgumentError("geometrical_optics_build: direction must be a unit vector");
        c_ = c.c(spec.profile.center);
        v_ = std::sqrt(c_) * spec.direction;
        kappa_ = spec.direction / std::sqrt(c_);
        const int N = spec.order;
        if (!G.is_zero()) {
            const ExpSum e = G.exp_terms(Vec2::Zero());
            gpoly_ = TimeExpPoly::from(e);
            gjet_ = G.time_jet(Vec2::Zero(), N + 2);
            std::vector<double> w(e.weight.size());
            for (std::size_t j = 0; j < w.size(); ++j) w[j] = e.weight[j] / c_;
            rho_ = TimeExpPoly::from(volterra::exp_sum_resolvent(w, e.rate));
            gexp_ = e;
        } else {
            gjet_.assign(N + 3, 0.0);
        }
        lambda_ = -gjet_[0] / (2 * c_);
        build_transport(N);
        build_static(N);
        max_order_ = 0;
        for (const auto& b : b_)
            for (const auto& [key, v] : b) max_order_ = std::max(max_order_, key[1] + key[2]);
        for (const auto& w : w_)
            for (const auto& [a, g] : w) max_order_ = std::max(max_order_, a[0] + a[1]);
        max_order_ += 4;
    }

    int order() const { return spec_.order; }
    double lambda() const { return lambda_; }
    double c() const { return c_; }
    const Vec2& velocity() const { return v_; }
    const PlaneWaveSpec& spec() const { return spec_; }
    /// b_l with a_l = e^{lambda t} b_l.
    const std::vector<MovingPoly>& transported() const { return b_; }
    /// w_l for l = 1..N+1 (index 0 is empty).
    const std::vector<StaticPoly>& stationary() const { return w_; }
    const ExpSum& kernel_terms() const { return gexp_; }

    /// a_l(x, t) (level-l oscillatory amplitude, eps-free).
    double amplitude(int l, const Vec2& x, double t) const {
        const auto tab = spec_.profile.table(x - v_ * t, max_order_);
        return std::exp(lambda_ * t) * eval(b_[l], tab, t, {0, 0});
    }
    /// w_l(x, t).
    cplx stationary_amplitude(int l, const Vec2& x, double t) const {
        const auto tab = spec_.profile.table(x, max_order_);
        cplx s = 0;
        for (const auto& [a, g] : w_[l]) s += g(t) * tab.d(a[0], a[1]);
        return s;
    }

    /// u(x, t) at wavenumber k.
    cplx value(const Vec2& x, double t, double k) const {
        const cplx eps = 1.0 / (I * k);
        const double psi = kappa_.dot(x);
        cplx A = 0, W = 0, el = 1;
        for (std::size_t l = 0; l < b_.size(); ++l, el *= eps) A += el * amplitude(static_cast<int>(l), x, t);
        el = eps;
        for (std::size_t l = 1; l < w_.size(); ++l, el *= eps) W += el * stationary_amplitude(static_cast<int>(l), x, t);
        return std::exp(I * k * (psi - t)) * A + std::exp(I * k * psi) * W;
    }

    /// Moving-polynomial evaluation with an extra derivative shift on f.
    static double eval(const MovingPoly& p, const GaussianProfile::Table& tab, double t, Multi shift) {
        double s = 0;
        for (const auto& [key, v] : p) s += v * std::pow(t, key[0]) * tab.d(key[1] + shift[0], key[2] + shift[1]);
        return s;
    }

    /// d/dt of e^{lambda t} b, divided by e^{lambda t}.
    MovingPoly Dt(const MovingPoly& b) const {
        MovingPoly r;
        for (const auto& [key, v] : b) {
            const int n = key[0];
            r[key] += lambda_ * v;
            if (n > 0) r[{n - 1, key[1], key[2]}] += n * v;
            r[{n, key[1] + 1, key[2]}] -= v_(0) * v;
            r[{n, key[1], key[2] + 1}] -= v_(1) * v;
        }
        return prune(r);
    }
    static MovingPoly Dx(const MovingPoly& b, int i) {
        MovingPoly r;
        for (const auto& [key, v] : b) r[{key[0], key[1] + (i == 0), key[2] + (i == 1)}] += v;
        return r;
    }

private:
    static MovingPoly prune(MovingPoly p) {
        for (auto it = p.begin(); it != p.end();) it = it->second == 0.0 ? p.erase(it) : std::next(it);
        return p;
    }
    static void axpy(MovingPoly& y, double a, const MovingPoly& x) {
        for (const auto& [key, v] : x) y[key] += a * v;
    }
    MovingPoly laplacian(const MovingPoly& b) const {
        MovingPoly r = Dx(Dx(b, 0), 0);
        axpy(r, 1.0, Dx(Dx(b, 1), 1));
        return r;
    }
    /// Coefficient of eps^e in e^{-ik phi} Lap(e^{ik phi} a), e = -2, -1, 0.
    MovingPoly coef(const MovingPoly& b, int e) const {
        if (e == -2) {
            MovingPoly r;
            axpy(r, 1.0 / c_, b);
            return r;
        }
        if (e == -1) {
            MovingPoly r;
            axpy(r, 2 * kappa_(0), Dx(b, 0));
            axpy(r, 2 * kappa_(1), Dx(b, 1));
            return r;
        }
        return laplacian(b);
    }
    MovingPoly Dt_pow(MovingPoly b, int n) const {
        for (int i = 0; i < n; ++i) b = Dt(b);
        return b;
    }
    static double binom(int n, int k) { return std::tgamma(n + 1.0) / (std::tgamma(k + 1.0) * std::tgamma(n - k + 1.0)); }

    void build_transport(int N) {
        b_.assign(N + 1, {});
        b_[0][{0, 0, 0}] = 1.0;
        for (int p = 1; p <= N; ++p) {
            // wave part: box a_{p-1} = Dt^2 b - c Lap b
            MovingPoly R = Dt(Dt(b_[p - 1]));
            axpy(R, -c_, laplacian(b_[p - 1]));
            // local memory terms: -sum_{m} eps^{m+1} sum_j C(m,j)(-1)^j G^(j)(0) Dt^{m-j} F_A
            for (int l = 0; l <= p; ++l)
                for (int e = -2; e <= 0; ++e) {
                    const int m = p - 2 - l - e;
                    if (m < 0 || (l == p && e == -2)) continue;
                    const MovingPoly ce = coef(b_[l], e);
                    for (int j = 0; j <= m; ++j) {
                        const double w = binom(m, j) * (j % 2 ? -1.0 : 1.0) * gjet_[j];
                        if (w != 0.0) axpy(R, -w, Dt_pow(ce, m - j));
                    }
                }
            // (d_t + v.grad) b_p = R/2 with b_p(x, 0) = 0
            MovingPoly bp;
            for (const auto& [key, v] : R) bp[{key[0] + 1, key[1], key[2]}] += 0.5 * v / (key[0] + 1);
            b_[p] = prune(bp);
        }
    }

    static void add_static(StaticPoly& y, Multi a, const TimeExpPoly& g) {
        if (!g.empty()) y[a] += g;
    }

    void build_static(int N) {
        w_.assign(N + 2, {});
        if (gexp_.weight.empty()) return;
        std::vector<TimeExpPoly> gder{gpoly_};
        for (int j = 1; j <= N + 2; ++j) gder.push_back(gder.back().derivative());
        for (int q = -1; q <= N - 1; ++q) {
            StaticPoly rhs;
            // S_q: upper-limit memory terms, sum over m + 1 + l + e = q
            for (int l = 0; l <= N; ++l)
                for (int e = -2; e <= 0; ++e) {
                    const int m = q - 1 - l - e;
                    if (m < 0) continue;
                    const MovingPoly ce = coef(b_[l], e);
                    for (int j = 0; j <= m; ++j) {
                        const double w = binom(m, j) * (j % 2 ? -1.0 : 1.0);
                        for (const auto& [key, v] : Dt_pow(ce, m - j))
                            if (key[0] == 0) add_static(rhs, {key[1], key[2]}, (w * v) * gder[j]);
                    }
                }
            // -2 v.grad w_{q+1} + 2 G * (kappa.grad w_{q+1})
            if (q + 1 >= 1)
                for (const auto& [a, g] : w_[q + 1])
                    for (int i = 0; i < 2; ++i) {
                        Multi s = a;
                        ++s[i];
                        add_static(rhs, s, cplx(-2 * v_(i)) * g);
                        add_static(rhs, s, cplx(2 * kappa_(i)) * convolve(gpoly_, g));
                    }
            // w_q'' - c Lap w_q + G * Lap w_q
            if (q >= 1)
                for (const auto& [a, g] : w_[q]) {
                    add_static(rhs, a, g.derivative().derivative());
                    const TimeExpPoly gc = convolve(gpoly_, g);
                    for (int i = 0; i < 2; ++i) {
                        Multi s = a;
                        s[i] += 2;
                        add_static(rhs, s, cplx(-c_) * g);
                        add_static(rhs, s, gc);
                    }
                }
            // w_{q+2} - (G/c) * w_{q+2} = rhs
            StaticPoly w;
            for (const auto& [a, g] : rhs) {
                TimeExpPoly s = g;
                s += convolve(rho_, g);
                w[a] = s;
            }
            w_[q + 2] = w;
        }
    }

    PlaneWaveSpec spec_;
    double c_ = 1, lambda_ = 0;
    Vec2 v_, kappa_;
    TimeExpPoly gpoly_, rho_;
    ExpSum gexp_;
    std::vector<double> gjet_;
    std::vector<MovingPoly> b_;
    std::vector<StaticPoly> w_;
    int max_order_ = 0;
};

inline GoLadder geometrical_optics_build(const SoundSpeedField& c, const MemoryKernel& G, const PlaneWaveSpec& spec) {
    return GoLadder(c, G, spec);
}

// ---------------------------------------------------------------------------
// Residual

struct GoResidualGrid {
    double T = 1.5;           // time window (0, T]
    double half_width = 6.0;  // box half-width in profile widths
    int transverse_nodes = 16;
};

namespace detail {

/// Time derivatives of the ladder terms, shared by all points of a residual evaluation.
struct Prepared {
    struct Moving {
        MovingPoly b, bt, btt;
    };
    struct Static {
        Multi alpha;
        TimeExpPoly g, gtt;
    };
    std::vector<Moving> moving;
    std::vector<std::vector<Static>> stationary;  // index l = 1..N+1

    explicit Prepared(const GoLadder& L) {
        for (const auto& b : L.transported()) moving.push_back({b, L.Dt(b), L.Dt(L.Dt(b))});
        stationary.resize(L.stationary().size());
        for (std::size_t l = 1; l < L.stationary().size(); ++l)
            for (const auto& [a, g] : L.stationary()[l]) stationary[l].push_back({a, g, g.derivative().derivative()});
    }
};

/// e^{-ik psi} P u at one x for all t in (0, T], accumulated as the L2-in-t norm squared.
/// The wave part is differentiated analytically; the memory integral is propagated per
/// exponential of G with 8-point Gauss panels of an eighth of a wavelength.
inline double residual_sq_at(const GoLadder& L, const Prepared& pre, const Vec2& x, double k, double T) {
    const cplx eps = 1.0 / (I * k);
    const double c = L.c();
    const Vec2 kap = L.spec().direction / std::sqrt(c);
    const auto& prof = L.spec().profile;
    const int N = L.order();
    const int mo = 2 * N + 8;

    const auto stab = prof.table(x, mo);

    // returns (wave part, Lap u) both times e^{-ik psi}
    auto parts = [&](double t) -> std::pair<cplx, cplx> {
        const auto tab = prof.table(x - L.velocity() * t, mo);
        const double el = std::exp(L.lambda() * t);
        cplx A = 0, At = 0, Att = 0, Ax = 0, Ay = 0, Alap = 0, e = 1;
        for (const auto& lv : pre.moving) {
            A += e * GoLadder::eval(lv.b, tab, t, {0, 0});
            At += e * GoLadder::eval(lv.bt, tab, t, {0, 0});
            Att += e * GoLadder::eval(lv.btt, tab, t, {0, 0});
            Ax += e * GoLadder::eval(lv.b, tab, t, {1, 0});
            Ay += e * GoLadder::eval(lv.b, tab, t, {0, 1});
            Alap += e * (GoLadder::eval(lv.b, tab, t, {2, 0}) + GoLadder::eval(lv.b, tab, t, {0, 2}));
            e *= eps;
        }
        A *= el, At *= el, Att *= el, Ax *= el, Ay *= el, Alap *= el;
        const cplx kdA = kap(0) * Ax + kap(1) * Ay;
        // the eps^{-2} terms of d_t^2 and c Lap cancel exactly since c |kappa|^2 = 1
        const cplx wave_osc = Att - 2.0 / eps * At - c * (2.0 / eps * kdA + Alap);
        const cplx FA = A / (eps * eps * c) + 2.0 / eps * kdA + Alap;

        cplx W = 0, Wtt = 0, Wx = 0, Wy = 0, Wlap = 0;
        e = eps;
        for (std::size_t l = 1; l < pre.stationary.size(); ++l, e *= eps)
            for (const auto& st : pre.stationary[l]) {
                const auto& a = st.alpha;
                const cplx gv = st.g(t);
                W += e * gv * stab.d(a[0], a[1]);
                Wtt += e * st.gtt(t) * stab.d(a[0], a[1]);
                Wx += e * gv * stab.d(a[0] + 1, a[1]);
                Wy += e * gv * stab.d(a[0], a[1] + 1);
                Wlap += e * gv * (stab.d(a[0] + 2, a[1]) + stab.d(a[0], a[1] + 2));
            }
        const cplx kdW = kap(0) * Wx + kap(1) * Wy;
        const cplx wave_st = Wtt - c * (W / (eps * eps * c) + 2.0 / eps * kdW + Wlap);
        const cplx FW = W / (eps * eps * c) + 2.0 / eps * kdW + Wlap;
        const cplx ph = std::exp(-I * k * t);
        return {ph * wave_osc + wave_st, ph * FA + FW};
    };

    const ExpSum& ge = L.kernel_terms();
    const std::size_t J = ge.weight.size();
    std::vector<cplx> M(J, 0.0);
    const auto& gr = gauss_rule<8>();
    int panels = static_cast<int>(std::ceil(T / (pi / (4 * k))));
    panels += panels % 2;
    const double h = T / panels;
    auto Pu = [&](double t, const cplx& wave) {
        cplx s = wave;
        for (std::size_t j = 0; j < J; ++j) s += M[j];
        return s;
    };
    double acc = 0;
    std::vector<double> f(panels + 1);
    f[0] = std::norm(Pu(0.0, parts(0.0).first));
    for (int p = 0; p < panels; ++p) {
        const double a = p * h, b = a + h;
        std::vector<cplx> inc(J, 0.0);
        if (J > 0)
            for (int g = 0; g < 8; ++g) {
                const double s = 0.5 * (a + b) + 0.5 * h * gr.x[g];
                const cplx lap = parts(s).second;
                for (std::size_t j = 0; j < J; ++j)
                    inc[j] += 0.5 * h * gr.w[g] * ge.weight[j] * std::exp(ge.rate[j] * (b - s)) * lap;
            }
        for (std::size_t j = 0; j < J; ++j) M[j] = std::exp(ge.rate[j] * h) * M[j] + inc[j];
        f[p + 1] = std::norm(Pu(b, parts(b).first));
    }
    for (int p = 0; p < panels; p += 2) acc += h / 3 * (f[p] + 4 * f[p + 1] + f[p + 2]);
    return acc;
}

}  // namespace detail

/// L2((0,T) x R^2) norm of P u on a box following the pulse from its launch site,
/// Gauss-Legendre in space, Simpson in t.
inline double residual_norm(const GoLadder& L, double k, const GoResidualGrid& grid = {}) {
    if (!(k > 0)) throw ArgumentError("residual_norm: k must be positive");
    const auto& prof = L.spec().profile;
    const Vec2 d = L.spec().direction, n(-d.y(), d.x());
    const double R = grid.half_width * prof.width;
    const double len = 2 * R + L.velocity().norm() * grid.T;
    const int along_panels = std::max(1, static_cast<int>(std::ceil(len / (2 * prof.width))));
    const QuadNodes qa = composite_gauss<8>(-R, -R + len, along_panels);
    const int nt = grid.transverse_nodes;
    if (nt != 8 && nt != 16) throw ArgumentError("residual_norm: transverse_nodes must be 8 or 16");
    const QuadNodes qn = nt == 8 ? composite_gauss<8>(-R, R, 1) : composite_gauss<16>(-R, R, 1);
    const detail::Prepared pre(L);
    std::vector<double> part(qa.x.size(), 0.0);
    parallel_for(qa.x.size(), [&](std::size_t i) {
        double s = 0;
        for (std::size_t j = 0; j < qn.x.size(); ++j) {
            const Vec2 x = prof.center + qa.x[i] * d + qn.x[j] * n;
            s += qa.w[i] * qn.w[j] * detail::residual_sq_at(L, pre, x, k, grid.T);
        }
        part[i] = s;
    });
    double tot = 0;
    for (double v : part) tot += v;
    return std::sqrt(tot);
}

}  // namespace viscobeam::go

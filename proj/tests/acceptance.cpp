// Acceptance suite: one PASS/FAIL line per criterion with the tolerances pinned below.
//
//   acceptance            run everything, exit 0 (failures are reported, not fatal)
//   acceptance --strict   exit 1 if any criterion fails
//   acceptance --only 8   run a single criterion

#include <viscobeam/beams.hpp>
#include <viscobeam/emm.hpp>
#include <viscobeam/fdtd.hpp>
#include <viscobeam/go.hpp>
#include <viscobeam/probe.hpp>
#include <viscobeam/rays.hpp>
#include <viscobeam/volterra.hpp>
#include <viscobeam/xray.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace viscobeam;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
    std::string note;  // printed on extra lines (failure analysis)

    void require(bool ok, const std::string& what) {
        pass = pass && ok;
        if (!detail.empty()) detail += "; ";
        detail += what + (ok ? "" : " [miss]");
    }
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

struct Criterion {
    int id;
    std::string name;
    double time_limit;  // seconds
    std::function<Outcome()> run;
};

double bump(const Vec2& x, const Vec2& c, double r) {
    const double s = (x - c).squaredNorm() / (r * r);
    return s < 1 ? std::exp(1.0 - 1.0 / (1.0 - s)) : 0.0;
}

fdtd::SimGrid grid2d(int n, double L, double cfl, double cmax, long steps) {
    fdtd::SimGrid g;
    g.nx = g.ny = n;
    g.x0 = g.y0 = -L;
    g.dx = g.dy = 2 * L / (n - 1);
    g.dt = cfl * g.dx / std::sqrt(cmax);
    g.steps = steps;
    return g;
}

const std::vector<double> residual_ks{20, 40, 80, 160};

// ---------------------------------------------------------------------------

Outcome go_residual_rate() {
    const auto c = SoundSpeedField::constant(1.0);
    const auto G = SeparableKernel::constant_exponential(0.5, -1.0);
    Outcome o;
    for (int N : {1, 2}) {
        go::PlaneWaveSpec spec;
        spec.order = N;
        const auto L = go::geometrical_optics_build(c, *G, spec);
        std::vector<double> r;
        for (double k : residual_ks) r.push_back(go::residual_norm(L, k));
        const double slope = loglog_slope(residual_ks, r);
        const double limit = N == 1 ? -0.9 : -1.9;
        o.require(slope <= limit, "N=" + std::to_string(N) + " slope " + fmt("%.3f", slope) + " <= " + fmt("%.1f", limit));
    }
    return o;
}

Outcome beam_residual() {
    // Lens medium, launch H0 = 1.5 i I, ray from (-1.5, 0.3) along +x over sigma in [0, 3];
    // the norm is taken over t in [0.3, 0.7] of the span with the sigma-endpoint terms removed.
    const auto c = SoundSpeedField::gaussian_lens();
    const auto G = SeparableKernel::constant_exponential(0.5, -1.0);
    beams::BeamSpec spec;
    spec.start = rays::null_point(c, Vec2(-1.5, 0.3), Vec2(1, 0));
    spec.span = 3.0;
    spec.H0 = I * 1.5 * CMat3::Identity();
    spec.levels = 1;
    const auto b = beams::build_beam(c, *G, spec);
    beams::ResidualGrid grid;
    grid.nx = 8;
    grid.nt = 4;
    grid.endpoint_tolerance = 1e9;
    auto slope_for = [&](int levels, bool a2, std::vector<double>& norms) {
        beams::QuasimodeOptions opt;
        opt.levels = levels;
        opt.with_a2 = a2;
        opt.cutoff_k = residual_ks.front();
        for (double k : residual_ks)
            norms.push_back(beams::residual_norm(beams::assemble_quasimode(c, G, b, k, opt), grid).interior_norm);
        return loglog_slope(residual_ks, norms);
    };
    std::vector<double> n0, n1;
    const double s0 = slope_for(0, false, n0);
    const double s1 = slope_for(1, true, n1);
    Outcome o;
    o.require(s0 <= -0.5, "a'0 slope " + fmt("%.3f", s0) + " <= -0.5");
    o.require(s1 < s0, "with a'1 + a''0 slope " + fmt("%.3f", s1) + " < " + fmt("%.3f", s0));
    const double local0 = std::log(n0[3] / n0[2]) / std::log(2.0), local1 = std::log(n1[3] / n1[2]) / std::log(2.0);
    std::ostringstream note;
    note << "analysis: norms a'0 = ";
    for (double v : n0) note << fmt("%.4g ", v);
    note << "| with a'1 + a''0 = ";
    for (double v : n1) note << fmt("%.4g ", v);
    note << "\n  the higher levels lower the norm at every k, but the gain shrinks as k grows, so the residual"
            "\n  stays dominated by a slower component that the added levels leave untouched (local slope between"
            "\n  k = 80 and 160: " << fmt("%.3f", local0) << " and " << fmt("%.3f", local1)
         << "). A constant-c run shows the same ~k^-1/2 cap, so it comes"
            "\n  from the memory and transport terms of the sigma-integrated beam rather than lens curvature.";
    o.note = note.str();
    return o;
}

Outcome riccati() {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    std::normal_distribution<double> n(0.0, 0.3);
    auto random_h0 = [&] {
        Mat3 A, B;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                A(i, j) = n(rng);
                B(i, j) = n(rng);
            }
        const Mat3 re = 0.5 * (A + A.transpose());
        const Mat3 im = B * B.transpose() + 0.2 * Mat3::Identity();
        return CMat3(re.cast<cplx>() + I * im.cast<cplx>());
    };
    const auto lens = SoundSpeedField::gaussian_lens();
    double worst = 1e300;
    for (int run = 0; run < 100; ++run) {
        const Vec2 x0(-2.0 + 0.5 * U(rng), U(rng));
        const double ang = 0.4 * U(rng);
        const auto path = beams::solve_riccati(lens, rays::null_point(lens, x0, Vec2(std::cos(ang), std::sin(ang))), 4.0,
                                               random_h0(), 1e-10, 0.01);
        worst = std::min(worst, path.min_imag_eig);
    }
    const double c0 = 2.0;
    const auto c = SoundSpeedField::constant(c0);
    const CMat3 H0 = random_h0();
    const auto path = beams::solve_riccati(c, rays::null_point(c, Vec2(0.1, 0.2), Vec2(0.6, 0.8)), 3.0, H0);
    Mat3 C = Mat3::Zero();
    C.diagonal() << -c0, -c0, 1.0;
    double err = 0;
    for (double s : {0.5, 1.7, 3.0}) {
        const CMat3 e = (H0.inverse() + s * C.cast<cplx>()).inverse();
        err = std::max(err, (path.H(s) - e).norm() / e.norm());
    }
    Outcome o;
    o.require(worst > 0, "min Im H eigenvalue over 100 runs " + fmt("%.3e", worst) + " > 0");
    o.require(err <= 1e-8, "closed-form deviation " + fmt("%.2e", err) + " <= 1e-8");
    return o;
}

Outcome volterra_analytics() {
    const double lam = 0.8;
    const volterra::TimeGrid g(0.0, 1.0, 1000);
    const auto u = volterra::solve_second_kind([&](double) { return lam; }, [](double) { return 1.0; }, g);
    const auto R = volterra::resolvent_kernel([&](double) { return lam; }, g, 1e-13);
    double eu = 0, er = 0;
    for (int i = 0; i < g.size(); ++i) {
        eu = std::max(eu, std::abs(u[i] - std::exp(lam * g.t(i))));
        er = std::max(er, std::abs(R.R[i] - lam * std::exp(lam * g.t(i))));
    }
    auto err = [&](int n) {
        const volterra::TimeGrid gg(0.0, 1.0, n);
        const auto v = volterra::solve_second_kind([&](double) { return lam; }, [](double) { return 1.0; }, gg);
        double e = 0;
        for (int i = 0; i < gg.size(); ++i) e = std::max(e, std::abs(v[i] - std::exp(lam * gg.t(i))));
        return e;
    };
    const double ratio = err(500) / err(1000);
    Outcome o;
    o.require(eu <= 1e-5, "solution error " + fmt("%.2e", eu) + " <= 1e-5");
    o.require(er <= 1e-5, "resolvent error " + fmt("%.2e", er) + " <= 1e-5");
    o.require(ratio >= 3.5 && ratio <= 4.5, "dt-halving ratio " + fmt("%.3f", ratio) + " in [3.5, 4.5]");
    return o;
}

Outcome stationary_phase() {
    const auto c = SoundSpeedField::gaussian_lens();
    const auto G = SeparableKernel::constant_exponential(0.5, -1.0);
    beams::BeamSpec s;
    s.start = rays::null_point(c, Vec2(-2.5, 0.3), Vec2(1, 0));
    s.span = 5.0;
    const auto b = beams::build_beam(c, *G, s);
    const double s0 = 2.5;
    const auto st = b.path->at(s0);
    std::vector<double> dev;
    for (double k : {40.0, 80.0, 160.0}) {
        const auto q = beams::assemble_quasimode(c, G, b, k, {});
        const auto sp = beams::stationary_phase_value(q, s0);
        dev.push_back(std::abs(q.value(Vec2(st[0], st[1]), st[2]) - sp.predicted) / std::abs(sp.predicted));
    }
    Outcome o;
    for (int i = 0; i < 2; ++i) {
        const double r = dev[i + 1] / dev[i];
        o.require(r >= 0.3 && r <= 0.7, "ratio " + fmt("%.3f", r) + " in [0.3, 0.7]");
    }
    return o;
}

Outcome lens_data() {
    const auto c = SoundSpeedField::constant(4.0);
    const rays::Disc disc{Vec2::Zero(), 1.0};
    const auto rec = rays::lens_data(c, disc, Vec2(-1, 0), Vec2(1, 0));
    Outcome o;
    o.require(std::abs(rec.travel_time - 1.0) <= 1e-6, "ray travel time " + fmt("%.9f", rec.travel_time) + " = 1 +- 1e-6");
    // FDTD: Ricker pulse just outside the entry point; receivers at the entry and exit points
    auto g = grid2d(400, 1.3, 0.5, 4.0, 0);
    g.steps = static_cast<long>(std::ceil(1.5 / g.dt));
    const Vec2 s(-1.1, 0.0);
    const double w = 0.03, tc = 0.1, tw = 0.025;
    fdtd::SourceSpec src;
    src.f = [=](const Vec2& x, double t) {
        const double a = (t - tc) / tw;
        return std::exp(-(x - s).squaredNorm() / (w * w)) * (1 - 2 * a * a) * std::exp(-a * a);
    };
    src.space = Box{s - Vec2::Constant(6 * w), s + Vec2::Constant(6 * w)};
    src.t_hi = tc + 6 * tw;
    fdtd::SimOptions opt;
    opt.receivers = {Vec2(-1, 0), Vec2(1, 0)};
    const auto r = fdtd::simulate(c, ZeroKernel(), g, src, {}, opt);
    const double t_in = probe::pick_arrival(r.traces[0], 0.0, g.dt), t_out = probe::pick_arrival(r.traces[1], 0.0, g.dt);
    const double rel = std::abs((t_out - t_in) - rec.travel_time) / rec.travel_time;
    o.require(rel <= 0.03, "FDTD arrival difference " + fmt("%.4f", t_out - t_in) + " (rel. " + fmt("%.2e", rel) + " <= 3%)");
    return o;
}

Outcome propagation() {
    // Beam family u_k on the lens; wave-packet transforms at transverse offsets m * cell from the
    // ray point at sigma = 1.5, codirections (xi, 1) and the orthogonal (xi_perp, 1). The family is
    // normalised by k (its L2 size in x is ~1/k).
    const auto c = SoundSpeedField::gaussian_lens();
    const auto G = SeparableKernel::constant_exponential(0.5, -1.0);
    beams::BeamSpec spec;
    spec.start = rays::null_point(c, Vec2(-1.5, 0.2), Vec2(1, 0));
    spec.span = 3.0;
    spec.H0 = I * 1.5 * CMat3::Identity();
    const auto b = beams::build_beam(c, *G, spec);
    const auto st = b.path->at(1.5);
    const Vec3 z0(st[0], st[1], st[2]);
    const Vec2 xi(st[3], st[4]);
    const Vec2 nrm = Vec2(-xi.y(), xi.x()).normalized();
    const Vec3 along(xi.x(), xi.y(), 1.0), ortho(-xi.y(), xi.x(), 1.0);
    const double cell = 0.2;
    const std::vector<double> ks{32, 64, 128};
    std::vector<beams::BeamQuasimode> qs;
    for (double k : ks) qs.push_back(beams::assemble_quasimode(c, G, b, k, {}));
    bool on_ray = false, outside_tube = false, ortho_flag = false;
    int flagged = 0;
    for (int m = -4; m <= 4; ++m) {
        const Vec3 z = z0 + Vec3(nrm.x(), nrm.y(), 0) * (m * cell);
        for (int d = 0; d < 2; ++d) {
            const Vec3& zeta = d == 0 ? along : ortho;
            std::vector<double> mags;
            for (std::size_t i = 0; i < ks.size(); ++i) mags.push_back(ks[i] * std::abs(beams::wavepacket_transform(qs[i], z, zeta)));
            const auto cl = probe::classify_magnitudes({z, zeta}, ks, mags);
            if (!cl.flagged) continue;
            ++flagged;
            if (d == 1) ortho_flag = true;
            if (d == 0 && m == 0) on_ray = true;
            if (d == 0 && std::abs(m) > 2) outside_tube = true;
        }
    }
    const double a64 = std::abs(beams::wavepacket_transform(qs[1], z0, along));
    const double o64 = std::abs(beams::wavepacket_transform(qs[1], z0, ortho));
    const double ratio = o64 > 0 ? a64 / o64 : std::numeric_limits<double>::infinity();
    // cross-check of the closed-form transform against direct quadrature of the sampled field
    const double k_check = 8.0;
    const auto qc = beams::assemble_quasimode(c, G, b, k_check, {});
    const cplx direct = probe::wavepacket_transform([&](const Vec3& y) { return qc.value(Vec2(y(0), y(1)), y(2)); },
                                                    probe::WavePacketQuery{z0, along, {}, 2 * probe::gaussian_reach(k_check)},
                                                    k_check, 6.5);
    const cplx closed = beams::wavepacket_transform(qc, z0, along);
    const double dev = std::abs(direct - closed) / std::abs(closed);
    Outcome o;
    o.require(on_ray && !outside_tube, "ray point flagged, flags confined to 2 cells (" + std::to_string(flagged) + " flagged)");
    o.require(!ortho_flag, "no orthogonal codirection flagged");
    o.require(ratio >= 1e3, "aligned/orthogonal at k=64 " + fmt("%.2e", ratio) + " >= 1e3");
    o.require(dev <= 1e-8, "closed form vs quadrature at k=8 " + fmt("%.1e", dev));
    return o;
}

Outcome xray_round_trip() {
    const auto c = SoundSpeedField::constant(1.0);
    const rays::Disc disc{Vec2::Zero(), 1.0};
    const auto chords = rays::chord_family(disc, 180, 64);
    const auto rs = xray::trace_chords(c, disc, chords);
    auto f = [](const Vec2& x) { return std::exp(-4 * x.squaredNorm()); };
    const auto s = xray::forward_transform(f, rs, chords);
    const auto inv = xray::invert_transform(s, rs, xray::PixelGrid{}, 1e-4);
    const double err = xray::relative_error(inv.field, f);
    Outcome o;
    o.require(err <= 0.05, "field error " + fmt("%.4f", err) + " <= 0.05");
    o.require(inv.relative_residual <= 0.02, "sinogram residual " + fmt("%.4f", inv.relative_residual) + " <= 0.02");
    return o;
}

Outcome kernel_recovery() {
    const auto c = SoundSpeedField::constant(1.0);
    const rays::Disc disc{Vec2::Zero(), 1.0};
    const auto chords = rays::chord_family(disc, 60, 32);
    const auto rs = xray::trace_chords(c, disc, chords);
    xray::PixelGrid g;
    g.nx = g.ny = 32;
    const double lambda = 1e-4, floor = 1e-8;
    auto kernel = [](const FieldPtr& f, ExpSum t) {
        return SeparableKernel(std::vector<SeparableKernel::Term>{{f, std::move(t)}});
    };
    Outcome o;
    {
        const auto b = std::make_shared<GaussianBumpField>(0.0, 1.0, Vec2(0.2, -0.1), 1 / std::sqrt(8.0));
        const auto d = xray::beam_chord_data(c, kernel(b, ExpSum{{1.0}, {-1.0}}), disc, chords);
        const auto r = xray::recover_kernel_order0(d, rs, c, g, lambda);
        const double e = xray::relative_error(r.field, [&](const Vec2& x) { return b->value(x); });
        o.require(e <= 0.10, "G(.,0) bump error " + fmt("%.4f", e) + " <= 0.10");
    }
    {
        const auto b = std::make_shared<GaussianBumpField>(0.0, 1.0, Vec2(-0.15, 0.25), 1 / std::sqrt(8.0));
        const auto d = xray::beam_chord_data(c, kernel(b, ExpSum{{1.0, -1.0}, {-1.0, -2.0}}), disc, chords, true);
        const auto r0 = xray::recover_kernel_order0(d, rs, c, g, lambda);
        const auto r1 = xray::recover_kernel_order1(d, r0.field, rs, c, disc, g, lambda);
        const double e = xray::relative_error(r1.field, [&](const Vec2& x) { return b->value(x); });
        o.require(e <= 0.15, "d_t G(.,0) bump error " + fmt("%.4f", e) + " <= 0.15");
    }
    {
        const auto d = xray::beam_chord_data(c, ZeroKernel(), disc, chords, true);
        const auto r0 = xray::recover_kernel_order0(d, rs, c, g, lambda);
        const auto r1 = xray::recover_kernel_order1(d, r0.field, rs, c, disc, g, lambda);
        const double m = std::max(xray::rms(r0.field), xray::rms(r1.field));
        o.require(m <= floor, "zero kernel rms " + fmt("%.1e", m) + " <= 1e-8");
    }
    return o;
}

Outcome emm_recovery() {
    std::mt19937 rng(2024);
    std::uniform_real_distribution<double> ua(-5, -0.5), ub(0.5, 2);
    auto draw = [&](int N, std::vector<double>& a, std::vector<double>& b) {
        a.clear();
        b.clear();
        while (static_cast<int>(a.size()) < N) {
            const double x = ua(rng);
            bool ok = true;
            for (double y : a) ok = ok && std::abs(x - y) > 0.3;
            if (ok) {
                a.push_back(x);
                b.push_back(ub(rng));
            }
        }
    };
    double rt = 0, det = 0, magic = 0;
    std::vector<double> a, b;
    for (int trial = 0; trial < 100; ++trial) {
        const int N = 1 + trial % 4;
        draw(N, a, b);
        const auto r = emm::recover_parameters(emm_moments(a, b, 2 * N));
        std::vector<std::size_t> idx(N);
        for (int j = 0; j < N; ++j) idx[j] = j;
        std::sort(idx.begin(), idx.end(), [&](auto i, auto j) { return a[i] < a[j]; });
        for (int j = 0; j < N; ++j) {
            rt = std::max(rt, std::abs(r.alphas[j] - a[idx[j]]) / std::abs(a[idx[j]]));
            rt = std::max(rt, std::abs(r.betas[j] - b[idx[j]]) / std::abs(b[idx[j]]));
        }
    }
    for (int trial = 0; trial < 100; ++trial) {
        const int N = 1 + trial % 5;
        draw(N, a, b);
        const auto [num, formula] = emm::hankel_determinant_check(a, b);
        det = std::max(det, std::abs(num - formula) / std::abs(formula));
    }
    for (int trial = 0; trial < 100; ++trial) {
        draw(1 + trial % 4, a, b);
        magic = std::max(magic, std::abs(emm::magic_formula_residual(a, b, trial % 4)));
    }
    Outcome o;
    o.require(rt <= 1e-6, "round trip N<=4 rel. error " + fmt("%.1e", rt) + " <= 1e-6");
    o.require(det <= 1e-8, "determinant identity N<=5 rel. error " + fmt("%.1e", det) + " <= 1e-8");
    o.require(magic <= 1e-10, "moment-polynomial residual " + fmt("%.1e", magic) + " <= 1e-10");
    return o;
}

Outcome fdtd_integrity() {
    Outcome o;
    {
        const auto G = EmmKernel::constant({-1, -2}, {0.3, 0.2})->wave_kernel();
        const auto r = fdtd::simulate(SoundSpeedField::gaussian_lens(), *G, grid2d(41, 1, 0.5, 1, 50), fdtd::SourceSpec{});
        o.require(r.state.u.abs().maxCoeff() == 0.0, "zero source gives zero field");
    }
    {
        fdtd::InitialData init;
        init.u0 = [](const Vec2& x) { return bump(x, Vec2(0.3, -0.2), 0.6); };
        fdtd::SimOptions opt;
        opt.energy_every = 1;
        const auto r = fdtd::simulate(SoundSpeedField::gaussian_lens(), ZeroKernel(), grid2d(81, 2, 0.5, 1.0, 1000), {}, init, opt);
        const double E0 = r.energies.front().second;
        double drift = 0;
        for (const auto& [t, E] : r.energies) drift = std::max(drift, std::abs(E - E0) / E0);
        o.require(drift <= 1e-3, "energy drift over 1000 steps " + fmt("%.1e", drift) + " <= 1e-3");
    }
    {
        const auto G = EmmKernel::constant({-1.0}, {0.2})->wave_kernel();
        auto make = [](double a) {
            fdtd::SourceSpec s;
            s.f = [a](const Vec2& x, double t) { return a * bump(x, Vec2(0.2, 0), 0.4) * std::exp(-20 * (t - 0.2) * (t - 0.2)); };
            return s;
        };
        const auto g = grid2d(41, 1.5, 0.5, 1.0, 200);
        const auto c = SoundSpeedField::gaussian_lens();
        const auto r1 = fdtd::simulate(c, *G, g, make(1.0)), r3 = fdtd::simulate(c, *G, g, make(3.0));
        const double rel = (r3.state.u - 3 * r1.state.u).abs().maxCoeff() / (3 * r1.state.u.abs().maxCoeff());
        o.require(rel <= 1e-10, "linearity in f " + fmt("%.1e", rel) + " <= 1e-10");
    }
    {
        const double r0 = 1.0, T = 0.5;
        auto g = grid2d(601, r0 + T + 0.5, 0.69, 1.0, 0);
        g.steps = static_cast<long>(std::round(T / g.dt));
        fdtd::InitialData init;
        init.u0 = [&](const Vec2& x) { return bump(x, Vec2::Zero(), r0); };
        const auto r = fdtd::simulate(SoundSpeedField::constant(1.0), ZeroKernel(), g, {}, init);
        const double reach = r0 + g.steps * g.dt + 2 * g.dx;
        double outside = 0;
        for (int j = 0; j < g.ny; ++j)
            for (int i = 0; i < g.nx; ++i)
                if (g.node(i, j).norm() > reach) outside = std::max(outside, std::abs(r.state.u(i, j)));
        o.require(outside <= 1e-8, "field outside the cone " + fmt("%.1e", outside) + " <= 1e-8");
    }
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    bool strict = false;
    int only = 0;
    for (int i = 1; i < argc; ++i) {
        if (!std::strcmp(argv[i], "--strict")) strict = true;
        else if (!std::strcmp(argv[i], "--only") && i + 1 < argc) only = std::atoi(argv[++i]);
        else {
            std::fprintf(stderr, "usage: acceptance [--strict] [--only N]\n");
            return 64;
        }
    }
    const std::vector<Criterion> all{
        {1, "GO residual rate", 120, go_residual_rate},
        {2, "beam residual", 300, beam_residual},
        {3, "Riccati positivity and closed form", 30, riccati},
        {4, "Volterra analytics", 10, volterra_analytics},
        {5, "stationary phase", 60, stationary_phase},
        {6, "lens data", 180, lens_data},
        {7, "propagation of singularities", 180, propagation},
        {8, "X-ray round trip", 120, xray_round_trip},
        {9, "kernel recovery", 300, kernel_recovery},
        {10, "EMM recovery", 10, emm_recovery},
        {11, "FDTD integrity", 120, fdtd_integrity},
    };
    int failed = 0;
    for (const auto& c : all) {
        if (only && c.id != only) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("exception: ") + e.what();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        o.require(secs <= c.time_limit, "runtime " + fmt("%.1f", secs) + " s <= " + fmt("%.0f", c.time_limit) + " s");
        std::printf("%s criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name.c_str(), o.detail.c_str());
        if (!o.note.empty()) std::printf("  %s\n", o.note.c_str());
        std::fflush(stdout);
        failed += !o.pass;
    }
    std::printf("%d criterion(s) failed\n", failed);
    return strict && failed ? 1 : 0;
}

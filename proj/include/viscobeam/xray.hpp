#pragma once
/// @file xray.hpp
/// @brief Ray transform along null bicharacteristics, parametrized by sigma (time), its
/// Tikhonov-regularized inversion on a pixel basis, and the memory-kernel recovery pipeline:
/// order 0 from the principal beam amplitude, order 1 from the first correction.

#include "beams.hpp"
#include "common.hpp"
#include "media.hpp"
#include "rays.hpp"

#include <Eigen/Sparse>

#include <functional>
#include <iomanip>
#include <map>
#include <limits>
#include <ostream>

namespace viscobeam::xray {

inline constexpr double no_data = std::numeric_limits<double>::quiet_NaN();

struct PixelGrid {
    Box box{Vec2(-1, -1), Vec2(1, 1)};
    int nx = 64, ny = 64;

    double dx() const { return (box.hi.x() - box.lo.x()) / nx; }
    double dy() const { return (box.hi.y() - box.lo.y()) / ny; }
    std::size_t size() const { return static_cast<std::size_t>(nx) * ny; }
    std::size_t index(int i, int j) const { return static_cast<std::size_t>(j) * nx + i; }
    Vec2 center(int i, int j) const { return box.lo + Vec2((i + 0.5) * dx(), (j + 0.5) * dy()); }
    /// Pixel containing x, or -1 outside the box.
    long locate(const Vec2& x) const {
        const int i = static_cast<int>(std::floor((x.x() - box.lo.x()) / dx()));
        const int j = static_cast<int>(std::floor((x.y() - box.lo.y()) / dy()));
        if (i < 0 || j < 0 || i >= nx || j >= ny) return -1;
        return static_cast<long>(index(i, j));
    }
};

/// Pixel values; pixels no chord crosses hold `no_data`.
struct PixelField {
    PixelGrid grid;
    std::vector<double> values;
    std::vector<bool> mask;

    std::size_t covered() const { return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true)); }
    /// Piecewise-constant evaluation; uncovered pixels read as 0.
    double value(const Vec2& x) const {
        const long p = grid.locate(x);
        if (p < 0 || !mask[p]) return 0.0;
        return values[p];
    }
    /// Smooth interpolant through the pixel centres (uncovered pixels as 0), for the
    /// derivative-consuming order-1 step.
    std::shared_ptr<GriddedField> smooth() const {
        // one ring of zero padding so that the whole pixel box lies inside the spline grid
        const int nx = grid.nx + 2, ny = grid.ny + 2;
        std::vector<double> v(static_cast<std::size_t>(nx) * ny, 0.0);
        for (int j = 0; j < grid.ny; ++j)
            for (int i = 0; i < grid.nx; ++i) {
                const std::size_t p = grid.index(i, j);
                if (mask[p]) v[static_cast<std::size_t>(j + 1) * nx + i + 1] = values[p];
            }
        const Vec2 c0 = grid.center(0, 0) - Vec2(grid.dx(), grid.dy());
        return std::make_shared<GriddedField>(nx, ny, c0.x(), c0.y(), grid.dx(), grid.dy(), std::move(v));
    }
};

struct Sinogram {
    std::vector<rays::Chord> chords;
    std::vector<double> values;  // NaN marks a chord without data
    std::string parametrization = "sigma";

    void validate() const {
        if (chords.size() != values.size()) throw ArgumentError("Sinogram: value count differs from chord count");
    }
};

inline void write_sinogram_csv(std::ostream& os, const Sinogram& s) {
    os << "chord_id,value\n" << std::setprecision(12);
    for (std::size_t i = 0; i < s.values.size(); ++i)
        os << i << ',' << s.values[i] << '\n';
}

/// Pixel values in the grid layout read by load_gridded_field (pixel centres as nodes);
/// uncovered pixels are written as "nan".
inline void write_pixel_field_csv(std::ostream& os, const PixelField& f) {
    const Vec2 c0 = f.grid.center(0, 0);
    os << std::setprecision(12) << "# nx,ny,x0,y0,dx,dy then values, x fastest\n"
       << f.grid.nx << ',' << f.grid.ny << ',' << c0.x() << ',' << c0.y() << ',' << f.grid.dx() << ',' << f.grid.dy()
       << '\n';
    for (int j = 0; j < f.grid.ny; ++j) {
        for (int i = 0; i < f.grid.nx; ++i) {
            const std::size_t p = f.grid.index(i, j);
            if (i) os << ',';
            if (f.mask[p])
                os << f.values[p];
            else
                os << "nan";
        }
        os << '\n';
    }
}

// ---------------------------------------------------------------------------
// Ray geometry

/// Null ray through the disc along a chord, sampled uniformly in sigma.
struct ChordRay {
    double span = 0.0;  // sigma (time) from entry to exit
    rays::Bicharacteristic ray;
    Vec2 point(double s) const {
        const auto st = ray.at(s);
        return Vec2(st[0], st[1]);
    }
};

inline ChordRay trace_chord(const SoundSpeedField& c, const rays::Disc& dom, const rays::Chord& ch, int samples = 200) {
    ChordRay r;
    const auto rec = rays::lens_data(c, dom, ch.entry, ch.dir);
    r.span = rec.travel_time;
    if (r.span > 0) r.ray = rays::trace_bicharacteristic(c, rec.entry, r.span, 1e-10, r.span / samples);
    return r;
}

inline std::vector<ChordRay> trace_chords(const SoundSpeedField& c, const rays::Disc& dom,
                                          const std::vector<rays::Chord>& chords, int samples = 200) {
    std::vector<ChordRay> out(chords.size());
    parallel_for(chords.size(), [&](std::size_t i) { out[i] = trace_chord(c, dom, chords[i], samples); });
    return out;
}

using PlaneFunction = std::function<double(const Vec2&)>;

/// Composite Simpson of f along each traced chord, in sigma units. A chord that leaves
/// `f_domain` gets the no-data marker.
inline Sinogram forward_transform(const PlaneFunction& f, const std::vector<ChordRay>& rays_,
                                  const std::vector<rays::Chord>& chords, const Box& f_domain = Box::unbounded(),
                                  int simpson_panels = 200) {
    if (rays_.size() != chords.size()) throw ArgumentError("forward_transform: chord/ray count mismatch");
    Sinogram s;
    s.chords = chords;
    s.values.assign(chords.size(), 0.0);
    const int n = simpson_panels + simpson_panels % 2;
    parallel_for(chords.size(), [&](std::size_t i) {
        const auto& r = rays_[i];
        if (!(r.span > 0)) return;
        const double h = r.span / n;
        double acc = 0;
        for (int m = 0; m <= n; ++m) {
            const Vec2 x = r.point(m * h);
            if (!f_domain.contains(x, 1e-12)) {
                s.values[i] = no_data;
                return;
            }
            acc += (m == 0 || m == n ? 1 : (m % 2 ? 4 : 2)) * f(x);
        }
        s.values[i] = acc * h / 3;
    });
    return s;
}

inline Sinogram forward_transform(const PlaneFunction& f, const SoundSpeedField& c, const rays::Disc& dom,
                                  const std::vector<rays::Chord>& chords, const Box& f_domain = Box::unbounded()) {
    return forward_transform(f, trace_chords(c, dom, chords), chords, f_domain);
}

/// Chord-pixel intersection lengths in sigma units. Each ray is a polyline through its
/// samples; segments are split exactly at pixel edges and their sigma length distributed
/// in proportion.
inline Eigen::SparseMatrix<double, Eigen::RowMajor> forward_matrix(const std::vector<ChordRay>& rays_,
                                                                   const PixelGrid& g) {
    std::vector<std::vector<Eigen::Triplet<double>>> rows(rays_.size());
    parallel_for(rays_.size(), [&](std::size_t r) {
        const auto& cr = rays_[r];
        if (!(cr.span > 0)) return;
        std::map<long, double> acc;
        const auto& sg = cr.ray.sigma;
        for (std::size_t m = 0; m + 1 < sg.size(); ++m) {
            const Vec2 a(cr.ray.state[m][0], cr.ray.state[m][1]), b(cr.ray.state[m + 1][0], cr.ray.state[m + 1][1]);
            const double ds = sg[m + 1] - sg[m];
            std::vector<double> cuts{0.0, 1.0};
            const Vec2 d = b - a;
            auto add_cuts = [&](int axis, double lo, double h) {
                if (std::abs(d(axis)) < 1e-300) return;
                const double u0 = (a(axis) - lo) / h, u1 = (b(axis) - lo) / h;
                for (double v = std::ceil(std::min(u0, u1)); v <= std::max(u0, u1); v += 1.0) {
                    const double s = (lo + v * h - a(axis)) / d(axis);
                    if (s > 0 && s < 1) cuts.push_back(s);
                }
            };
            add_cuts(0, g.box.lo.x(), g.dx());
            add_cuts(1, g.box.lo.y(), g.dy());
            std::sort(cuts.begin(), cuts.end());
            for (std::size_t q = 0; q + 1 < cuts.size(); ++q) {
                const double w = cuts[q + 1] - cuts[q];
                if (w <= 0) continue;
                const long p = g.locate(a + 0.5 * (cuts[q] + cuts[q + 1]) * d);
                if (p >= 0) acc[p] += w * ds;
            }
        }
        for (const auto& [p, v] : acc) rows[r].emplace_back(static_cast<int>(r), static_cast<int>(p), v);
    });
    std::vector<Eigen::Triplet<double>> all;
    for (auto& r : rows) all.insert(all.end(), r.begin(), r.end());
    Eigen::SparseMatrix<double, Eigen::RowMajor> A(static_cast<Eigen::Index>(rays_.size()), static_cast<Eigen::Index>(g.size()));
    A.setFromTriplets(all.begin(), all.end());
    return A;
}

// ---------------------------------------------------------------------------
// Inversion

struct Inversion {
    PixelField field;
    double residual_norm = 0.0;      // ||A f - s||
    double relative_residual = 0.0;  // ||A f - s|| / ||s||
    int iterations = 0;
    double coverage_ratio = 0.0;     // chords per covered pixel (reported, not enforced)
};

/// argmin ||A f - s||^2 + lambda ||D f||^2 over covered pixels, D the first differences
/// between adjacent covered pixels, by conjugate gradients on the normal equations.
inline Inversion invert_transform(const Sinogram& s, const std::vector<ChordRay>& rays_, const PixelGrid& g,
                                  double lambda, double tol = 1e-10, int max_iter = 10000) {
    s.validate();
    if (!(lambda > 0)) throw ArgumentError("invert_transform: lambda must be positive");
    const auto Afull = forward_matrix(rays_, g);
    // drop chords without data
    std::vector<int> keep;
    for (std::size_t i = 0; i < s.values.size(); ++i)
        if (std::isfinite(s.values[i])) keep.push_back(static_cast<int>(i));
    Inversion out;
    out.field.grid = g;
    out.field.values.assign(g.size(), no_data);
    out.field.mask.assign(g.size(), false);
    std::vector<double> colsum(g.size(), 0.0);
    for (int r : keep)
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(Afull, r); it; ++it) colsum[it.col()] += it.value();
    std::vector<int> unknown_of(g.size(), -1), pixel_of;
    for (std::size_t p = 0; p < g.size(); ++p)
        if (colsum[p] > 0) {
            unknown_of[p] = static_cast<int>(pixel_of.size());
            pixel_of.push_back(static_cast<int>(p));
            out.field.mask[p] = true;
        }
    const int n = static_cast<int>(pixel_of.size());
    if (n == 0) throw DataModelError("invert_transform: no pixel is crossed by a chord");
    out.coverage_ratio = static_cast<double>(keep.size()) / n;
    std::vector<Eigen::Triplet<double>> tA;
    Eigen::VectorXd b(static_cast<Eigen::Index>(keep.size()));
    for (std::size_t k = 0; k < keep.size(); ++k) {
        b(static_cast<Eigen::Index>(k)) = s.values[keep[k]];
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(Afull, keep[k]); it; ++it)
            tA.emplace_back(static_cast<int>(k), unknown_of[it.col()], it.value());
    }
    Eigen::SparseMatrix<double> A(static_cast<Eigen::Index>(keep.size()), n);
    A.setFromTriplets(tA.begin(), tA.end());
    std::vector<Eigen::Triplet<double>> tD;
    int nd = 0;
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
            const int u = unknown_of[g.index(i, j)];
            if (u < 0) continue;
            if (i + 1 < g.nx && unknown_of[g.index(i + 1, j)] >= 0) {
                tD.emplace_back(nd, u, -1.0);
                tD.emplace_back(nd++, unknown_of[g.index(i + 1, j)], 1.0);
            }
            if (j + 1 < g.ny && unknown_of[g.index(i, j + 1)] >= 0) {
                tD.emplace_back(nd, u, -1.0);
                tD.emplace_back(nd++, unknown_of[g.index(i, j + 1)], 1.0);
            }
        }
    Eigen::SparseMatrix<double> D(nd, n);
    D.setFromTriplets(tD.begin(), tD.end());
    const Eigen::SparseMatrix<double> At = A.transpose(), Dt = D.transpose();
    auto apply = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
        const Eigen::VectorXd ax = A * x, dx = D * x;
        return At * ax + lambda * (Dt * dx);
    };
    const Eigen::VectorXd rhs = At * b;
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n), r = rhs, p = r;
    const double rhs_norm = rhs.norm();
    double rr = r.squaredNorm();
    int it = 0;
    if (rhs_norm > 0) {
        for (; it < max_iter && std::sqrt(rr) > tol * rhs_norm; ++it) {
            const Eigen::VectorXd Ap = apply(p);
            const double alpha = rr / p.dot(Ap);
            x += alpha * p;
            r -= alpha * Ap;
            const double rr_new = r.squaredNorm();
            p = r + (rr_new / rr) * p;
            rr = rr_new;
        }
        if (std::sqrt(rr) > tol * rhs_norm)
            throw ConvergenceError("invert_transform: conjugate gradients did not converge in " +
                                   std::to_string(max_iter) + " iterations");
    }
    out.iterations = it;
    for (int u = 0; u < n; ++u) out.field.values[pixel_of[u]] = x(u);
    out.residual_norm = (A * x - b).norm();
    out.relative_residual = b.norm() > 0 ? out.residual_norm / b.norm() : 0.0;
    return out;
}

/// Relative L2 error of a recovered field against `truth` over the covered pixels.
inline double relative_error(const PixelField& f, const PlaneFunction& truth) {
    double num = 0, den = 0;
    for (int j = 0; j < f.grid.ny; ++j)
        for (int i = 0; i < f.grid.nx; ++i) {
            const std::size_t p = f.grid.index(i, j);
            if (!f.mask[p]) continue;
            const double t = truth(f.grid.center(i, j));
            num += (f.values[p] - t) * (f.values[p] - t);
            den += t * t;
        }
    return den > 0 ? std::sqrt(num / den) : std::sqrt(num);
}

/// Root-mean-square over the covered pixels.
inline double rms(const PixelField& f) {
    double s = 0;
    std::size_t n = 0;
    for (std::size_t p = 0; p < f.values.size(); ++p)
        if (f.mask[p]) {
            s += f.values[p] * f.values[p];
            ++n;
        }
    return n ? std::sqrt(s / n) : 0.0;
}

// ---------------------------------------------------------------------------
// Amplitudes to line integrals

/// log(a_exit / a_entry) = int b dsigma, principal branch.
inline cplx amplitude_to_line_integral(cplx a_entry, cplx a_exit) {
    if (a_entry == 0.0 || a_exit == 0.0) throw DegenerateError("amplitude_to_line_integral: zero amplitude");
    return std::log(a_exit / a_entry);
}

/// Same, continued along samples a(sigma_0..sigma_n): each increment takes the branch
/// nearest to zero, so the result is the branch continuous in sigma.
inline cplx amplitude_to_line_integral(const std::vector<cplx>& samples) {
    if (samples.size() < 2) throw ArgumentError("amplitude_to_line_integral: need at least two samples");
    cplx acc = 0;
    for (std::size_t i = 0; i + 1 < samples.size(); ++i) acc += amplitude_to_line_integral(samples[i], samples[i + 1]);
    return acc;
}

/// Per-chord beam data for the kernel recovery: entries are line integrals along the
/// chord's null ray.
struct BeamChordData {
    Sinogram log_amplitude;  // Re int b = Re log(a'_0(T)/a'_0(0)), sampled and unwrapped
    Sinogram geometric;      // Re int Q phi  (the c- and H-determined part, -beta/2)
    Sinogram j1;             // Re a'_1(T) / a'_0(T)
};

/// Builds a beam (H0 = i I) along every chord and reads off its amplitudes at the exit.
inline BeamChordData beam_chord_data(const SoundSpeedField& c, const MemoryKernel& G, const rays::Disc& dom,
                                     const std::vector<rays::Chord>& chords, bool with_level1 = false,
                                     int path_samples = 200) {
    BeamChordData d;
    for (auto* s : {&d.log_amplitude, &d.geometric, &d.j1}) {
        s->chords = chords;
        s->values.assign(chords.size(), 0.0);
    }
    const ZeroKernel none;
    parallel_for(chords.size(), [&](std::size_t i) {
        const auto rec = rays::lens_data(c, dom, chords[i].entry, chords[i].dir);
        if (!(rec.travel_time > 1e-9)) return;
        const auto path = beams::solve_riccati(c, rec.entry, rec.travel_time, I * CMat3::Identity(), 1e-10,
                                               rec.travel_time / path_samples);
        auto L = beams::principal_transport(c, G, path);
        const auto L0 = beams::principal_transport(c, none, path);
        std::vector<cplx> a(path.size());
        for (std::size_t m = 0; m < path.size(); ++m) a[m] = L.a0(path.sigma[m]);
        d.log_amplitude.values[i] = amplitude_to_line_integral(a).real();
        d.geometric.values[i] = L0.B.back().real();
        if (with_level1) {
            beams::higher_transport(L, 1, c, G, path);
            d.j1.values[i] = (L.a(1, path.span()) / L.a0(path.span())).real();
        }
    });
    return d;
}

/// Order 0: int G(x,0)/c dsigma = 2 (geometric - log amplitude) per chord; invert and
/// multiply by c pixelwise.
inline Inversion recover_kernel_order0(const BeamChordData& data, const std::vector<ChordRay>& rays_,
                                       const SoundSpeedField& c, const PixelGrid& g, double lambda) {
    Sinogram s;
    s.chords = data.log_amplitude.chords;
    s.values.resize(s.chords.size());
    for (std::size_t i = 0; i < s.values.size(); ++i)
        s.values[i] = 2.0 * (data.geometric.values[i] - data.log_amplitude.values[i]);
    Inversion inv = invert_transform(s, rays_, g, lambda);
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
            const std::size_t p = g.index(i, j);
            if (inv.field.mask[p]) inv.field.values[p] *= c.c(g.center(i, j));
        }
    return inv;
}

/// The level-1 memory coefficient m1 along a path for a kernel with the given G(., 0) and
/// d_t G(., 0) = 0: the part of a'_1/a'_0 not carrying d_t G.
inline double order1_background(const SoundSpeedField& c, const FieldPtr& g0, const beams::RiccatiPath& path) {
    // time profile 2 e^{-t} - e^{-2t}: value 1 and slope 0 at t = 0
    SeparableKernel K(std::vector<SeparableKernel::Term>{{g0, ExpSum{{2.0, -1.0}, {-1.0, -2.0}}}});
    auto L = beams::principal_transport(c, K, path);
    beams::higher_transport(L, 1, c, K, path);
    return L.J1.back().real();
}

/// Order 1 (constant c): with a'_1/a'_0 = (1/2) int m1 and m1 = d_t G(x,0) |xi|^2 + (terms in
/// G(., 0)), |xi|^2 = 1/c on null rays, the chord integrals of d_t G(., 0)/c are
/// 2 (J1 - background). The background uses the order-0 result.
inline Inversion recover_kernel_order1(const BeamChordData& data, const PixelField& order0,
                                       const std::vector<ChordRay>& rays_, const SoundSpeedField& c,
                                       const rays::Disc& dom, const PixelGrid& g, double lambda, int path_samples = 200) {
    if (!c.is_constant())
        throw UnsupportedError("recover_kernel_order1: only constant sound speed is supported");
    const auto& chords = data.j1.chords;
    const FieldPtr g0 = order0.smooth();
    Sinogram s;
    s.chords = chords;
    s.values.assign(chords.size(), 0.0);
    const bool zero_background = rms(order0) == 0.0;
    parallel_for(chords.size(), [&](std::size_t i) {
        double bg = 0;
        if (!zero_background) {
            const auto rec = rays::lens_data(c, dom, chords[i].entry, chords[i].dir);
            if (rec.travel_time > 1e-9) {
                const auto path = beams::solve_riccati(c, rec.entry, rec.travel_time, I * CMat3::Identity(), 1e-10,
                                                       rec.travel_time / path_samples);
                bg = order1_background(c, g0, path);
            }
        }
        s.values[i] = 2.0 * (data.j1.values[i] - bg);
    });
    Inversion inv = invert_transform(s, rays_, g, lambda);
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
            const std::size_t p = g.index(i, j);
            if (inv.field.mask[p]) inv.field.values[p] *= c.c(g.center(i, j));
        }
    return inv;
}

}  // namespace viscobeam::xray

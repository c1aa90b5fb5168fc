#pragma once
/// @file media.hpp
/// @brief Sound-speed fields and memory kernels with exact derivative jets.
///
/// The wave operator is written as d_t^2 u - div(c grad u), so c carries units of
/// speed squared. The wave speed is sqrt(c) and travel time is measured in the
/// metric c^{-1} |dx|^2.

#include "common.hpp"

#include <fstream>
#include <functional>
#include <memory>
#include <sstream>

namespace viscobeam {

/// Axis-aligned box in the plane.
struct Box {
    Vec2 lo{-1e300, -1e300};
    Vec2 hi{1e300, 1e300};
    bool contains(const Vec2& x, double slack = 0.0) const {
        return x.x() >= lo.x() - slack && x.x() <= hi.x() + slack && x.y() >= lo.y() - slack &&
               x.y() <= hi.y() + slack;
    }
    static Box unbounded() { return Box{}; }
};

/// Value, gradient and Hessian of a scalar field at one point.
struct Jet2 {
    double value = 0.0;
    Vec2 grad = Vec2::Zero();
    Mat2 hess = Mat2::Zero();
};

/// Smooth scalar field on the plane with exact first and second derivatives.
class ScalarField {
public:
    virtual ~ScalarField() = default;
    virtual Jet2 jet(const Vec2& x) const = 0;
    virtual Box bounds() const { return Box::unbounded(); }

    double value(const Vec2& x) const { return jet(x).value; }
    Vec2 gradient(const Vec2& x) const { return jet(x).grad; }
    Mat2 hessian(const Vec2& x) const { return jet(x).hess; }
    bool is_constant() const { return constant_; }

protected:
    bool constant_ = false;
};

using FieldPtr = std::shared_ptr<const ScalarField>;

class ConstantField final : public ScalarField {
public:
    explicit ConstantField(double v, Box b = Box::unbounded()) : v_(v), box_(b) { constant_ = true; }
    Jet2 jet(const Vec2& x) const override {
        if (!box_.contains(x)) throw DomainError("constant field evaluated outside its box");
        return Jet2{v_, Vec2::Zero(), Mat2::Zero()};
    }
    Box bounds() const override { return box_; }
    double level() const { return v_; }

private:
    double v_;
    Box box_;
};

/// base + amplitude * exp(-|x - center|^2 / width^2).
/// The Gaussian lens 1 - 0.3 exp(-|x|^2) is GaussianBumpField(1, -0.3, 0, 1).
class GaussianBumpField final : public ScalarField {
public:
    GaussianBumpField(double base, double amplitude, Vec2 center, double width, Box b = Box::unbounded())
        : base_(base), amp_(amplitude), c_(center), w_(width), box_(b) {
        if (!(width > 0)) throw ArgumentError("GaussianBumpField: width must be positive");
    }
    Jet2 jet(const Vec2& x) const override {
        if (!box_.contains(x)) throw DomainError("Gaussian field evaluated outside its box");
        const Vec2 d = x - c_;
        const double s = 1.0 / (w_ * w_);
        const double e = amp_ * std::exp(-s * d.squaredNorm());
        Jet2 j;
        j.value = base_ + e;
        j.grad = -2.0 * s * e * d;
        j.hess = e * (4.0 * s * s * d * d.transpose() - 2.0 * s * Mat2::Identity());
        return j;
    }
    Box bounds() const override { return box_; }

private:
    double base_, amp_;
    Vec2 c_;
    double w_;
    Box box_;
};

/// Radially symmetric field c(|x - center|) given by a profile and its first two
/// radial derivatives.
class RadialField final : public ScalarField {
public:
    using Profile = std::function<std::array<double, 3>(double)>;  // r -> (f, f', f'')
    RadialField(Profile p, Vec2 center = Vec2::Zero(), Box b = Box::unbounded())
        : p_(std::move(p)), c_(center), box_(b) {}
    Jet2 jet(const Vec2& x) const override {
        if (!box_.contains(x)) throw DomainError("radial field evaluated outside its box");
        const Vec2 d = x - c_;
        const double r = d.norm();
        const auto f = p_(r);
        Jet2 j;
        j.value = f[0];
        if (r < 1e-12) {
            // Regular profiles have f'(0) = 0; the Hessian is f''(0) I.
            j.grad.setZero();
            j.hess = f[2] * Mat2::Identity();
            return j;
        }
        const Vec2 n = d / r;
        j.grad = f[1] * n;
        j.hess = f[2] * n * n.transpose() + (f[1] / r) * (Mat2::Identity() - n * n.transpose());
        return j;
    }
    Box bounds() const override { return box_; }

private:
    Profile p_;
    Vec2 c_;
    Box box_;
};

/// Natural cubic spline through equally spaced samples; value and two derivatives.
class CubicSpline1 {
public:
    CubicSpline1() = default;
    CubicSpline1(double x0, double dx, std::vector<double> y) : x0_(x0), dx_(dx), y_(std::move(y)) {
        const std::size_t n = y_.size();
        if (n < 2) throw ArgumentError("spline needs at least two samples");
        m_.assign(n, 0.0);
        if (n > 2) {
            // Tridiagonal solve for second derivatives (natural end conditions).
            std::vector<double> cp(n, 0.0), dp(n, 0.0);
            for (std::size_t i = 1; i + 1 < n; ++i) {
                const double rhs = 6.0 * (y_[i + 1] - 2.0 * y_[i] + y_[i - 1]) / (dx_ * dx_);
                const double den = 4.0 - cp[i - 1];
                cp[i] = 1.0 / den;
                dp[i] = (rhs - dp[i - 1]) / den;
            }
            for (std::size_t i = n - 2; i >= 1; --i) {
                m_[i] = dp[i] - cp[i] * m_[i + 1];
                if (i == 1) break;
            }
        }
    }
    std::array<double, 3> eval(double x) const {
        const std::size_t n = y_.size();
        double s = (x - x0_) / dx_;
        std::size_t i = static_cast<std::size_t>(std::clamp(std::floor(s), 0.0, static_cast<double>(n - 2)));
        const double a = x0_ + i * dx_;
        const double t = x - a;
        const double h = dx_;
        const double y0 = y_[i], y1 = y_[i + 1], m0 = m_[i], m1 = m_[i + 1];
        const double b = (y1 - y0) / h - h * (2.0 * m0 + m1) / 6.0;
        const double c = m0 / 2.0;
        const double d = (m1 - m0) / (6.0 * h);
        return {y0 + t * (b + t * (c + t * d)), b + t * (2.0 * c + 3.0 * t * d), 2.0 * c + 6.0 * t * d};
    }

private:
    double x0_ = 0, dx_ = 1;
    std::vector<double> y_, m_;
};

/// Field sampled on a regular grid, evaluated through a tensor-product cubic spline
/// so that value, gradient and Hessian are mutually consistent.
class GriddedField final : public ScalarField {
public:
    GriddedField(int nx, int ny, double x0, double y0, double dx, double dy, std::vector<double> values)
        : nx_(nx), ny_(ny), x0_(x0), y0_(y0), dx_(dx), dy_(dy), v_(std::move(values)) {
        if (nx < 2 || ny < 2 || !(dx > 0) || !(dy > 0)) throw ArgumentError("gridded field: bad geometry");
        if (v_.size() != static_cast<std::size_t>(nx) * ny) throw ArgumentError("gridded field: value count mismatch");
        rows_.reserve(ny);
        for (int j = 0; j < ny; ++j)
            rows_.emplace_back(x0, dx, std::vector<double>(v_.begin() + j * nx, v_.begin() + (j + 1) * nx));
    }
    Jet2 jet(const Vec2& x) const override {
        if (!bounds().contains(x, 1e-12)) throw DomainError("gridded field evaluated outside its grid");
        std::vector<double> f(ny_), fx(ny_), fxx(ny_);
        for (int j = 0; j < ny_; ++j) {
            const auto e = rows_[j].eval(x.x());
            f[j] = e[0];
            fx[j] = e[1];
            fxx[j] = e[2];
        }
        const auto a = CubicSpline1(y0_, dy_, f).eval(x.y());
        const auto b = CubicSpline1(y0_, dy_, fx).eval(x.y());
        const auto c = CubicSpline1(y0_, dy_, fxx).eval(x.y());
        Jet2 j;
        j.value = a[0];
        j.grad = Vec2(b[0], a[1]);
        j.hess << c[0], b[1], b[1], a[2];
        return j;
    }
    Box bounds() const override {
        return Box{Vec2(x0_, y0_), Vec2(x0_ + (nx_ - 1) * dx_, y0_ + (ny_ - 1) * dy_)};
    }
    int nx() const { return nx_; }
    int ny() const { return ny_; }

private:
    int nx_, ny_;
    double x0_, y0_, dx_, dy_;
    std::vector<double> v_;
    std::vector<CubicSpline1> rows_;
};

/// Reads the documented grid layout: a header row "nx, ny, x0, y0, dx, dy"
/// followed by nx*ny row-major values (x fastest). Lines starting with '#' are skipped.
inline std::shared_ptr<GriddedField> load_gridded_field(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open grid file " + path);
    std::vector<double> nums;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        for (char& ch : line)
            if (ch == ',' || ch == ';' || ch == '\t') ch = ' ';
        std::istringstream ss(line);
        std::string tok;
        while (ss >> tok) {
            try {
                nums.push_back(std::stod(tok));
            } catch (...) {
                // header labels (nx, ny, ...) are tolerated
            }
        }
    }
    if (nums.size() < 6) throw ConfigError("grid file " + path + " has no header");
    const int nx = static_cast<int>(nums[0]), ny = static_cast<int>(nums[1]);
    std::vector<double> v(nums.begin() + 6, nums.end());
    return std::make_shared<GriddedField>(nx, ny, nums[2], nums[3], nums[4], nums[5], std::move(v));
}

/// Sound-speed field: a positive ScalarField with a verified lower bound.
class SoundSpeedField {
public:
    SoundSpeedField() = default;
    explicit SoundSpeedField(FieldPtr f, Box check_box = Box{Vec2(-2, -2), Vec2(2, 2)}, int samples = 41)
        : f_(std::move(f)) {
        if (!f_) throw ArgumentError("null sound-speed field");
        Box b = f_->bounds();
        Box c{b.lo.cwiseMax(check_box.lo), b.hi.cwiseMin(check_box.hi)};
        cmin_ = 1e300;
        cmax_ = 0.0;
        for (int i = 0; i < samples; ++i)
            for (int j = 0; j < samples; ++j) {
                Vec2 x(c.lo.x() + (c.hi.x() - c.lo.x()) * i / (samples - 1),
                       c.lo.y() + (c.hi.y() - c.lo.y()) * j / (samples - 1));
                const double v = f_->value(x);
                cmin_ = std::min(cmin_, v);
                cmax_ = std::max(cmax_, v);
            }
        if (!(cmin_ > 0)) throw DomainError("sound speed must be positive on its box");
    }
    static SoundSpeedField constant(double c) { return SoundSpeedField(std::make_shared<ConstantField>(c)); }
    static SoundSpeedField gaussian_lens(double base = 1.0, double depth = 0.3, double width = 1.0) {
        return SoundSpeedField(std::make_shared<GaussianBumpField>(base, -depth, Vec2::Zero(), width));
    }

    Jet2 jet(const Vec2& x) const { return f_->jet(x); }
    double c(const Vec2& x) const { return f_->value(x); }
    Box bounds() const { return f_->bounds(); }
    double c_min() const { return cmin_; }
    double c_max() const { return cmax_; }
    bool is_constant() const { return f_->is_constant(); }
    const FieldPtr& field() const { return f_; }

private:
    FieldPtr f_;
    double cmin_ = 1.0, cmax_ = 1.0;
};

/// Sum of exponentials sum_j w_j exp(r_j t); the time profile of separable kernels.
struct ExpSum {
    std::vector<double> weight;
    std::vector<double> rate;

    double operator()(double t) const {
        double s = 0;
        for (std::size_t j = 0; j < weight.size(); ++j) s += weight[j] * std::exp(rate[j] * t);
        return s;
    }
    double derivative(double t, int k) const {
        double s = 0;
        for (std::size_t j = 0; j < weight.size(); ++j) s += weight[j] * std::pow(rate[j], k) * std::exp(rate[j] * t);
        return s;
    }
    static ExpSum single(double w, double r) { return ExpSum{{w}, {r}}; }
};

/// Memory kernel G(x, t) on t in [0, t_max].
class MemoryKernel {
public:
    virtual ~MemoryKernel() = default;
    /// G(x, t).
    virtual double value(const Vec2& x, double t) const = 0;
    /// Spatial gradient of G(x, t).
    virtual Vec2 grad_x(const Vec2& x, double t) const = 0;
    /// [G(x,0), d_t G(x,0), ..., d_t^order G(x,0)].
    virtual std::vector<double> time_jet(const Vec2& x, int order) const = 0;
    /// Jet of the spatial factor of d_t^order G(x, 0): value, gradient, Hessian.
    virtual Jet2 spatial_jet(const Vec2& x, int order) const = 0;
    /// At fixed x every kernel here is an exponential sum in t; returns it.
    virtual ExpSum exp_terms(const Vec2& x) const = 0;
    virtual Box support() const { return Box::unbounded(); }
    virtual bool is_zero() const { return false; }
    /// True when G(x, t) does not depend on x.
    virtual bool is_spatially_constant() const { return false; }
    double t_max() const { return t_max_; }

protected:
    void check(const Vec2& x, double t) const {
        if (!support().contains(x)) throw DomainError("kernel evaluated outside its support");
        if (t < 0 || t > t_max_) throw DomainError("kernel evaluated outside [0, t_max]");
    }
    double t_max_ = 1e6;
};

using KernelPtr = std::shared_ptr<const MemoryKernel>;

class ZeroKernel final : public MemoryKernel {
public:
    explicit ZeroKernel(double t_max = 1e6) { t_max_ = t_max; }
    double value(const Vec2& x, double t) const override {
        check(x, t);
        return 0.0;
    }
    Vec2 grad_x(const Vec2&, double) const override { return Vec2::Zero(); }
    std::vector<double> time_jet(const Vec2&, int order) const override {
        if (order < 0) throw ArgumentError("jet order must be >= 0");
        return std::vector<double>(order + 1, 0.0);
    }
    Jet2 spatial_jet(const Vec2&, int) const override { return Jet2{}; }
    ExpSum exp_terms(const Vec2&) const override { return {}; }
    bool is_zero() const override { return true; }
    bool is_spatially_constant() const override { return true; }
};

/// Sum of separable terms G(x, t) = sum_i g_i(x) h_i(t) with exponential-sum profiles h_i.
class SeparableKernel final : public MemoryKernel {
public:
    struct Term {
        FieldPtr space;
        ExpSum time;
    };
    explicit SeparableKernel(std::vector<Term> terms, double t_max = 1e6, Box support = Box::unbounded())
        : terms_(std::move(terms)), box_(support) {
        t_max_ = t_max;
        for (const auto& tm : terms_)
            if (!tm.space) throw ArgumentError("separable kernel: null spatial factor");
    }
    /// G(x, t) = g * exp(rate * t), spatially constant.
    static std::shared_ptr<SeparableKernel> constant_exponential(double g, double rate, double t_max = 1e6) {
        return std::make_shared<SeparableKernel>(
            std::vector<Term>{{std::make_shared<ConstantField>(g), ExpSum::single(1.0, rate)}}, t_max);
    }
    double value(const Vec2& x, double t) const override {
        check(x, t);
        double s = 0;
        for (const auto& tm : terms_) s += tm.space->value(x) * tm.time(t);
        return s;
    }
    Vec2 grad_x(const Vec2& x, double t) const override {
        check(x, t);
        Vec2 g = Vec2::Zero();
        for (const auto& tm : terms_) g += tm.space->gradient(x) * tm.time(t);
        return g;
    }
    std::vector<double> time_jet(const Vec2& x, int order) const override {
        if (order < 0) throw ArgumentError("jet order must be >= 0");
        if (!box_.contains(x)) throw DomainError("kernel jet requested outside its support");
        std::vector<double> out(order + 1, 0.0);
        for (const auto& tm : terms_) {
            const double g = tm.space->value(x);
            for (int k = 0; k <= order; ++k) out[k] += g * tm.time.derivative(0.0, k);
        }
        return out;
    }
    Jet2 spatial_jet(const Vec2& x, int order) const override {
        Jet2 j;
        for (const auto& tm : terms_) {
            const Jet2 s = tm.space->jet(x);
            const double h = tm.time.derivative(0.0, order);
            j.value += h * s.value;
            j.grad += h * s.grad;
            j.hess += h * s.hess;
        }
        return j;
    }
    ExpSum exp_terms(const Vec2& x) const override {
        ExpSum e;
        for (const auto& tm : terms_) {
            const double g = tm.space->value(x);
            for (std::size_t j = 0; j < tm.time.weight.size(); ++j) {
                e.weight.push_back(g * tm.time.weight[j]);
                e.rate.push_back(tm.time.rate[j]);
            }
        }
        return e;
    }
    Box support() const override { return box_; }
    bool is_spatially_constant() const override {
        return std::all_of(terms_.begin(), terms_.end(), [](const Term& t) { return t.space->is_constant(); });
    }
    const std::vector<Term>& terms() const { return terms_; }

private:
    std::vector<Term> terms_;
    Box box_;
};

/// Extended Maxwell model: relaxation function sum_j beta_j(x) exp(alpha_j(x) t).
/// As a MemoryKernel it represents G = d_t of the relaxation function, so
/// d_t^k G(x, 0) = sum_j alpha_j^{k+1} beta_j.
class EmmKernel final : public MemoryKernel {
public:
    EmmKernel(std::vector<FieldPtr> alphas, std::vector<FieldPtr> betas, double t_max = 1e6,
              Box support = Box::unbounded())
        : a_(std::move(alphas)), b_(std::move(betas)), box_(support) {
        t_max_ = t_max;
        if (a_.empty() || a_.size() != b_.size()) throw ArgumentError("EMM kernel: need N >= 1 matched alpha/beta fields");
    }
    static std::shared_ptr<EmmKernel> constant(const std::vector<double>& alphas, const std::vector<double>& betas,
                                               double t_max = 1e6) {
        if (alphas.size() != betas.size()) throw ArgumentError("EMM kernel: alpha/beta length mismatch");
        std::vector<FieldPtr> a, b;
        for (double v : alphas) a.push_back(std::make_shared<ConstantField>(v));
        for (double v : betas) b.push_back(std::make_shared<ConstantField>(v));
        return std::make_shared<EmmKernel>(a, b, t_max);
    }
    int components() const { return static_cast<int>(a_.size()); }
    std::vector<double> alphas(const Vec2& x) const {
        std::vector<double> v;
        for (const auto& f : a_) v.push_back(f->value(x));
        return v;
    }
    std::vector<double> betas(const Vec2& x) const {
        std::vector<double> v;
        for (const auto& f : b_) v.push_back(f->value(x));
        return v;
    }
    /// Relaxation function sum_j beta_j exp(alpha_j t).
    double relaxation(const Vec2& x, double t) const {
        check(x, t);
        double s = 0;
        for (std::size_t j = 0; j < a_.size(); ++j) s += b_[j]->value(x) * std::exp(a_[j]->value(x) * t);
        return s;
    }
    double value(const Vec2& x, double t) const override {
        check(x, t);
        double s = 0;
        for (std::size_t j = 0; j < a_.size(); ++j) {
            const double al = a_[j]->value(x);
            s += al * b_[j]->value(x) * std::exp(al * t);
        }
        return s;
    }
    Vec2 grad_x(const Vec2& x, double t) const override {
        check(x, t);
        Vec2 g = Vec2::Zero();
        for (std::size_t j = 0; j < a_.size(); ++j) {
            const double al = a_[j]->value(x), be = b_[j]->value(x);
            const double e = std::exp(al * t);
            g += e * (be * (1.0 + al * t) * a_[j]->gradient(x) + al * b_[j]->gradient(x));
        }
        return g;
    }
    std::vector<double> time_jet(const Vec2& x, int order) const override {
        if (order < 0) throw ArgumentError("jet order must be >= 0");
        if (!box_.contains(x)) throw DomainError("kernel jet requested outside its support");
        std::vector<double> out(order + 1, 0.0);
        for (std::size_t j = 0; j < a_.size(); ++j) {
            const double al = a_[j]->value(x), be = b_[j]->value(x);
            double p = al;
            for (int k = 0; k <= order; ++k, p *= al) out[k] += p * be;
        }
        return out;
    }
    Jet2 spatial_jet(const Vec2& x, int order) const override {
        // d_t^order G(x,0) = sum_j alpha_j^{order+1} beta_j; differentiate in x.
        Jet2 j;
        const int p = order + 1;
        for (std::size_t m = 0; m < a_.size(); ++m) {
            const Jet2 A = a_[m]->jet(x), B = b_[m]->jet(x);
            const double ap = std::pow(A.value, p), ap1 = p * std::pow(A.value, p - 1),
                         ap2 = p > 1 ? p * (p - 1) * std::pow(A.value, p - 2) : 0.0;
            j.value += ap * B.value;
            const Vec2 dap = ap1 * A.grad;
            j.grad += dap * B.value + ap * B.grad;
            const Mat2 hap = ap2 * A.grad * A.grad.transpose() + ap1 * A.hess;
            j.hess += hap * B.value + dap * B.grad.transpose() + B.grad * dap.transpose() + ap * B.hess;
        }
        return j;
    }
    ExpSum exp_terms(const Vec2& x) const override {
        ExpSum e;
        for (std::size_t j = 0; j < a_.size(); ++j) {
            const double al = a_[j]->value(x);
            e.weight.push_back(al * b_[j]->value(x));
            e.rate.push_back(al);
        }
        return e;
    }
    Box support() const override { return box_; }
    bool is_spatially_constant() const override {
        for (std::size_t j = 0; j < a_.size(); ++j)
            if (!a_[j]->is_constant() || !b_[j]->is_constant()) return false;
        return true;
    }

    /// Kernel seen by the forward model, which integrates the stress law
    /// sigma = c grad u + int d_t(relaxation)(t-s) grad u(s) ds. In the operator
    /// convention d_t^2 u - div(c grad u) + int div(G grad u) this is G = -d_t(relaxation).
    std::shared_ptr<SeparableKernel> wave_kernel() const {
        std::vector<SeparableKernel::Term> terms;
        if (!is_spatially_constant())
            throw UnsupportedError("wave_kernel: spatially varying EMM coefficients are only supported by the ADE solver");
        const Vec2 o = Vec2::Zero();
        for (std::size_t j = 0; j < a_.size(); ++j) {
            const double al = a_[j]->value(o), be = b_[j]->value(o);
            terms.push_back({std::make_shared<ConstantField>(-al * be), ExpSum::single(1.0, al)});
        }
        return std::make_shared<SeparableKernel>(terms, t_max_);
    }

private:
    std::vector<FieldPtr> a_, b_;
    Box box_;
};

/// c(x) = relaxation(x, 0) = sum_j beta_j(x).
inline double derive_wave_speed(const EmmKernel& k, const Vec2& x) {
    if (!k.support().contains(x)) throw DomainError("derive_wave_speed: point outside kernel support");
    double s = 0;
    for (double b : k.betas(x)) s += b;
    return s;
}

inline std::vector<double> kernel_time_jet(const MemoryKernel& k, const Vec2& x, int order) {
    return k.time_jet(x, order);
}

/// m_k = sum_j alpha_j^k beta_j for k = 0..count-1.
inline std::vector<double> emm_moments(const std::vector<double>& alphas, const std::vector<double>& betas,
                                       int count) {
    if (alphas.size() != betas.size()) throw ArgumentError("emm_moments: alphas/betas length mismatch");
    if (count < 1) throw ArgumentError("emm_moments: count must be >= 1");
    std::vector<double> m(count, 0.0);
    for (std::size_t j = 0; j < alphas.size(); ++j) {
        double p = 1.0;
        for (int k = 0; k < count; ++k, p *= alphas[j]) m[k] += p * betas[j];
    }
    return m;
}

}  // namespace viscobeam

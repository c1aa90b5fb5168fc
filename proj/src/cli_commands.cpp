#include "cli.hpp"
#include "svg.hpp"

#include <viscobeam/beams.hpp>
#include <viscobeam/emm.hpp>
#include <viscobeam/fdtd.hpp>
#include <viscobeam/go.hpp>
#include <viscobeam/probe.hpp>
#include <viscobeam/rays.hpp>
#include <viscobeam/volterra.hpp>
#include <viscobeam/xray.hpp>

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <random>
#include <sstream>

namespace viscobeam::cli {

using nlohmann::json;
namespace fs = std::filesystem;

std::string config_hash(const json& config) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : config.dump()) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

namespace {

// ---------------------------------------------------------------------------
// Parameters and run context

struct Param {
    std::string name;
    json def;
    std::string help;
};

class Context {
public:
    Context(std::string command, json cfg, std::ostream& out) : command_(std::move(command)), cfg_(std::move(cfg)), out_(out) {}

    const json& config() const { return cfg_; }
    std::ostream& out() const { return out_; }
    double num(const std::string& k) const { return cfg_.at(k).get<double>(); }
    long integer(const std::string& k) const {
        const double v = num(k);
        if (v != std::floor(v)) throw ArgumentError("--" + k + " must be an integer");
        return static_cast<long>(v);
    }
    std::string str(const std::string& k) const { return cfg_.at(k).get<std::string>(); }
    std::vector<double> list(const std::string& k) const { return cfg_.at(k).get<std::vector<double>>(); }
    Vec2 vec2(const std::string& k) const {
        const auto v = list(k);
        if (v.size() != 2) throw ArgumentError("--" + k + " needs two numbers");
        return Vec2(v[0], v[1]);
    }
    std::uint64_t seed() const { return static_cast<std::uint64_t>(integer("seed")); }

    /// The output directory is left out of the hash so that reruns elsewhere are byte-identical.
    std::string header_text() const {
        json hashed = cfg_;
        hashed.erase("out");
        return "viscobeam " + command_ + " config_hash=" + config_hash(hashed) + " seed=" + std::to_string(seed());
    }
    /// Opens <out>/<name> with the comment header already written.
    std::ofstream open(const std::string& name) const {
        const fs::path dir = str("out");
        fs::create_directories(dir);
        const fs::path p = dir / name;
        std::ofstream f(p, std::ios::binary);
        if (!f) throw ConfigError("cannot write " + p.string());
        f << "# " << header_text() << '\n';
        return f;
    }
    std::string path(const std::string& name) const { return (fs::path(str("out")) / name).string(); }
    void plot(const std::string& csv, const std::string& svg, PlotSpec spec) const {
        spec.header = header_text();
        render_svg_file(path(csv), spec, path(svg));
        out_ << "wrote " << path(svg) << '\n';
    }

private:
    std::string command_;
    json cfg_;
    std::ostream& out_;
};

struct Command {
    std::string name, help;
    std::vector<Param> params;
    std::function<void(const Context&)> run;
};

json parse_value(const json& def, const std::string& name, const std::string& text) {
    try {
        if (def.is_string()) return text;
        if (def.is_boolean()) {
            if (text == "true" || text == "1") return true;
            if (text == "false" || text == "0") return false;
            throw ArgumentError("");
        }
        if (def.is_number()) {
            std::size_t used = 0;
            const double v = std::stod(text, &used);
            if (used != text.size()) throw ArgumentError("");
            return v;
        }
        if (def.is_array()) {
            json arr = json::array();
            std::stringstream ss(text);
            std::string cell;
            while (std::getline(ss, cell, ',')) {
                std::size_t used = 0;
                arr.push_back(std::stod(cell, &used));
                if (used != cell.size()) throw ArgumentError("");
            }
            return arr;
        }
    } catch (const std::exception&) {
    }
    throw ArgumentError("invalid value '" + text + "' for --" + name);
}

json resolve_config(const Command& cmd, const std::string& config_path, const std::map<std::string, std::string>& given) {
    json cfg = json::object();
    cfg["out"] = "out";
    cfg["seed"] = 0.0;
    for (const auto& p : cmd.params) cfg[p.name] = p.def;
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) throw ConfigError("cannot open config file " + config_path);
        json file;
        try {
            file = json::parse(in);
        } catch (const json::exception& e) {
            throw ConfigError("config file " + config_path + ": " + e.what());
        }
        if (!file.is_object()) throw ConfigError("config file must hold a JSON object");
        for (const auto& [k, v] : file.items()) {
            if (!cfg.contains(k)) throw ConfigError("config file: unknown key '" + k + "' for " + cmd.name);
            const json& def = cfg[k];
            const bool same = (def.is_number() && v.is_number()) || (def.is_string() && v.is_string()) ||
                              (def.is_boolean() && v.is_boolean()) || (def.is_array() && v.is_array());
            if (!same) throw ConfigError("config file: key '" + k + "' has the wrong type");
            cfg[k] = v.is_number() ? json(v.get<double>()) : v;
        }
    }
    for (const auto& [k, text] : given) cfg[k] = parse_value(cfg[k], k, text);
    return cfg;
}

// ---------------------------------------------------------------------------
// Shared model builders

const std::vector<Param> medium_params{
    {"medium", "lens", "sound speed: 'lens' (1 - 0.3 exp(-|x|^2)), 'constant', or a grid CSV path"},
    {"c0", 1.0, "value for --medium constant"},
};
// plane-wave geometrical optics needs constant c, so the residual scan defaults to it
const std::vector<Param> constant_medium_params{
    {"medium", "constant", "sound speed: 'constant', 'lens' (1 - 0.3 exp(-|x|^2)), or a grid CSV path"},
    {"c0", 1.0, "value for --medium constant"},
};
const std::vector<Param> kernel_params{
    {"kernel", "exp", "memory kernel: 'none' or 'exp' (g0 exp(rate t))"},
    {"g0", 0.5, "kernel amplitude"},
    {"rate", -1.0, "kernel exponent"},
};

SoundSpeedField medium(const Context& ctx) {
    const std::string m = ctx.str("medium");
    if (m == "lens") return SoundSpeedField::gaussian_lens();
    if (m == "constant") {
        if (!(ctx.num("c0") > 0)) throw DomainError("--c0 must be positive");
        return SoundSpeedField::constant(ctx.num("c0"));
    }
    return SoundSpeedField(load_gridded_field(m));
}

KernelPtr kernel(const Context& ctx) {
    const std::string k = ctx.str("kernel");
    if (k == "none") return std::make_shared<ZeroKernel>();
    if (k == "exp") return SeparableKernel::constant_exponential(ctx.num("g0"), ctx.num("rate"));
    throw ArgumentError("unknown --kernel '" + k + "'");
}

std::vector<Param> join(std::initializer_list<std::vector<Param>> parts) {
    std::vector<Param> out;
    for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
    return out;
}

std::string fmt(double v, int prec = 10) {
    std::ostringstream os;
    os << std::setprecision(prec) << v;
    return os.str();
}

std::string join_numbers(const std::vector<double>& v, int prec = 10) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt(v[i], prec);
    return s;
}

// ---------------------------------------------------------------------------
// Subcommands

void run_simulate(const Context& ctx) {
    const auto c = medium(ctx);
    const auto G = kernel(ctx);
    const long n = ctx.integer("n");
    const double L = ctx.num("half_width");
    fdtd::SimGrid g;
    g.nx = g.ny = static_cast<int>(n);
    g.x0 = g.y0 = -L;
    g.dx = g.dy = 2 * L / (n - 1);
    g.dt = ctx.num("cfl") * g.dx / std::sqrt(c.c_max());
    g.steps = static_cast<long>(std::ceil(ctx.num("T") / g.dt));
    const Vec2 s = ctx.vec2("source");
    const double w = ctx.num("source_width"), t0 = ctx.num("pulse_center"), tw = ctx.num("pulse_width");
    fdtd::SourceSpec src;
    src.f = [=](const Vec2& x, double t) {
        const double a = (t - t0) / tw;
        return std::exp(-(x - s).squaredNorm() / (w * w)) * (1 - 2 * a * a) * std::exp(-a * a);
    };
    src.space = Box{s - Vec2::Constant(6 * w), s + Vec2::Constant(6 * w)};
    src.t_lo = 0;
    src.t_hi = t0 + 6 * tw;
    const auto r = ctx.list("receivers");
    if (r.empty() || r.size() % 2) throw ArgumentError("--receivers needs x,y pairs");
    fdtd::SimOptions opt;
    for (std::size_t i = 0; i < r.size(); i += 2) opt.receivers.emplace_back(r[i], r[i + 1]);
    const auto res = fdtd::simulate(c, *G, g, src, {}, opt);
    {
        auto f = ctx.open("traces.csv");
        fdtd::write_traces_csv(f, res.times, res.traces);
    }
    ctx.out() << "steps " << g.steps << " dt " << fmt(g.dt) << " cfl " << fmt(g.cfl(c.c_max())) << '\n';
    PlotSpec spec{"t", {}, false, "receiver traces", ""};
    for (std::size_t k = 0; k < res.traces.size(); ++k) {
        spec.y.push_back("receiver_" + std::to_string(k + 1));
        try {
            ctx.out() << "receiver_" << k + 1 << " arrival " << fmt(probe::pick_arrival(res.traces[k], 0.0, g.dt)) << '\n';
        } catch (const NoArrivalError&) {
            ctx.out() << "receiver_" << k + 1 << " arrival none\n";
        }
    }
    ctx.plot("traces.csv", "traces.svg", spec);
}

void run_trace(const Context& ctx) {
    const auto c = medium(ctx);
    const auto start = rays::null_point(c, ctx.vec2("start"), ctx.vec2("dir"));
    const auto ray = rays::trace_bicharacteristic(c, start, ctx.num("span"), 1e-10, ctx.num("step"));
    {
        auto f = ctx.open("ray.csv");
        f << "sigma,x,y,t,xi_x,xi_y,tau\n" << std::setprecision(12);
        for (std::size_t i = 0; i < ray.size(); ++i) {
            const auto& s = ray.state[i];
            f << ray.sigma[i] << ',' << s[0] << ',' << s[1] << ',' << s[2] << ',' << s[3] << ',' << s[4] << ',' << s[5]
              << '\n';
        }
    }
    const auto& e = ray.state.back();
    ctx.out() << "end x=(" << fmt(e[0]) << "," << fmt(e[1]) << ") t=" << fmt(e[2]) << " xi=(" << fmt(e[3]) << ","
              << fmt(e[4]) << ")" << (ray.truncated ? " truncated" : "") << '\n';
    ctx.plot("ray.csv", "ray.svg", PlotSpec{"x", {"y"}, false, "null ray", ""});
}

void run_lens(const Context& ctx) {
    const auto c = medium(ctx);
    const rays::Disc dom{Vec2::Zero(), ctx.num("radius")};
    const auto chords = rays::chord_family(dom, static_cast<int>(ctx.integer("angles")), static_cast<int>(ctx.integer("offsets")));
    std::vector<rays::LensRecord> rec(chords.size());
    parallel_for(chords.size(), [&](std::size_t i) { rec[i] = rays::lens_data(c, dom, chords[i].entry, chords[i].dir); });
    auto f = ctx.open("lens.csv");
    f << "chord_id,angle,offset,entry_x,entry_y,exit_x,exit_y,exit_xi_x,exit_xi_y,travel_time\n" << std::setprecision(12);
    for (std::size_t i = 0; i < chords.size(); ++i)
        f << i << ',' << chords[i].angle << ',' << chords[i].offset << ',' << rec[i].entry.x.x() << ',' << rec[i].entry.x.y()
          << ',' << rec[i].exit.x.x() << ',' << rec[i].exit.x.y() << ',' << rec[i].exit.xi.x() << ',' << rec[i].exit.xi.y()
          << ',' << rec[i].travel_time << '\n';
    ctx.out() << "wrote " << ctx.path("lens.csv") << " (" << chords.size() << " chords)\n";
}

beams::BeamSpec beam_spec(const Context& ctx, const SoundSpeedField& c) {
    beams::BeamSpec s;
    s.start = rays::null_point(c, ctx.vec2("start"), ctx.vec2("dir"));
    s.span = ctx.num("span");
    s.H0 = I * ctx.num("h0_imag") * CMat3::Identity();
    return s;
}

const std::vector<Param> beam_params{
    {"start", json::array({-1.5, 0.3}), "beam start x,y"},
    {"dir", json::array({1.0, 0.0}), "initial direction"},
    {"span", 3.0, "sigma length"},
    {"h0_imag", 1.5, "launch Hessian i*h0_imag*I"},
};

void run_beam(const Context& ctx) {
    const auto c = medium(ctx);
    const auto G = kernel(ctx);
    auto spec = beam_spec(ctx, c);
    spec.levels = static_cast<int>(ctx.integer("levels"));
    const auto b = beams::build_beam(c, *G, spec);
    beams::QuasimodeOptions o;
    o.levels = spec.levels;
    const auto q = beams::assemble_quasimode(c, G, b, ctx.num("k"), o);
    {
        auto f = ctx.open("beam.csv");
        f << "sigma,x,y,t,abs_a0,arg_a0,abs_a1,abs_a2,abs_u\n" << std::setprecision(12);
        const auto& P = *b.path;
        for (std::size_t i = 0; i < P.size(); i += 5) {
            const double s = P.sigma[i];
            const auto& st = P.state[i];
            const cplx a0 = b.ladder.a0(s);
            f << s << ',' << st[0] << ',' << st[1] << ',' << st[2] << ',' << std::abs(a0) << ',' << std::arg(a0) << ','
              << (spec.levels >= 1 ? std::abs(b.ladder.a(1, s)) : 0.0) << ','
              << (spec.levels >= 2 ? std::abs(b.ladder.a(2, s)) : 0.0) << ','
              << std::abs(q.value(Vec2(st[0], st[1]), st[2])) << '\n';
        }
    }
    ctx.out() << "min Im H eigenvalue " << fmt(b.path->min_imag_eig) << '\n';
    ctx.plot("beam.csv", "beam.svg", PlotSpec{"sigma", {"abs_a0", "abs_u"}, false, "beam amplitude along the ray", ""});
}

void run_residual_scan(const Context& ctx) {
    const std::string cons = ctx.str("construction");
    const auto ks = ctx.list("ks");
    const auto orders = ctx.list("orders");
    if (ks.size() < 2) throw ArgumentError("--ks needs at least two values");
    std::vector<std::vector<double>> norms(orders.size(), std::vector<double>(ks.size()));
    if (cons == "go") {
        const auto c = medium(ctx);
        const auto G = kernel(ctx);
        go::GoResidualGrid grid;
        grid.transverse_nodes = static_cast<int>(ctx.integer("nx"));
        for (std::size_t o = 0; o < orders.size(); ++o) {
            go::PlaneWaveSpec spec;
            spec.order = static_cast<int>(orders[o]);
            const auto L = go::geometrical_optics_build(c, *G, spec);
            for (std::size_t i = 0; i < ks.size(); ++i) norms[o][i] = go::residual_norm(L, ks[i], grid);
        }
    } else if (cons == "beam") {
        const auto c = medium(ctx);
        const auto G = kernel(ctx);
        auto spec = beam_spec(ctx, c);
        spec.levels = 2;
        const auto b = beams::build_beam(c, *G, spec);
        beams::ResidualGrid grid;
        grid.nx = static_cast<int>(ctx.integer("nx"));
        grid.nt = static_cast<int>(ctx.integer("nt"));
        grid.endpoint_tolerance = 1e9;  // the interior part is what is reported
        for (std::size_t o = 0; o < orders.size(); ++o) {
            beams::QuasimodeOptions opt;
            opt.levels = static_cast<int>(orders[o]);
            opt.with_a2 = opt.levels >= 1;
            opt.cutoff_k = ks.front();
            for (std::size_t i = 0; i < ks.size(); ++i)
                norms[o][i] = beams::residual_norm(beams::assemble_quasimode(c, G, b, ks[i], opt), grid).interior_norm;
        }
    } else {
        throw ArgumentError("--construction must be 'go' or 'beam'");
    }
    std::vector<std::string> cols;
    for (double o : orders) cols.push_back("order_" + fmt(o));
    {
        auto f = ctx.open("residual.csv");
        f << "k";
        for (const auto& s : cols) f << ',' << s;
        f << '\n' << std::setprecision(12);
        for (std::size_t i = 0; i < ks.size(); ++i) {
            f << ks[i];
            for (std::size_t o = 0; o < orders.size(); ++o) f << ',' << norms[o][i];
            f << '\n';
        }
    }
    for (std::size_t o = 0; o < orders.size(); ++o)
        ctx.out() << cols[o] << " slope " << fmt(loglog_slope(ks, norms[o]), 4) << '\n';
    ctx.plot("residual.csv", "residual.svg", PlotSpec{"k", cols, true, cons + " residual norm", ""});
}

void run_probe(const Context& ctx) {
    const auto c = medium(ctx);
    const auto G = kernel(ctx);
    const auto b = beams::build_beam(c, *G, beam_spec(ctx, c));
    const auto ks = ctx.list("ks");
    const double cell = ctx.num("cell");
    const long m_max = ctx.integer("offsets");
    const auto st = b.path->at(ctx.num("sigma0"));
    const Vec3 z0(st[0], st[1], st[2]);
    const Vec2 xi(st[3], st[4]);
    const Vec2 nrm = Vec2(-xi.y(), xi.x()).normalized();
    std::vector<beams::BeamQuasimode> qs;
    for (double k : ks) qs.push_back(beams::assemble_quasimode(c, G, b, k, {}));
    std::vector<probe::Classification> out;
    for (long m = -m_max; m <= m_max; ++m) {
        const Vec3 z = z0 + Vec3(nrm.x(), nrm.y(), 0) * (m * cell);
        for (const Vec3& zeta : {Vec3(xi.x(), xi.y(), 1), Vec3(-xi.y(), xi.x(), 1)}) {
            std::vector<double> mags;
            // the family is normalized to unit L2 size in x: ||u_k|| ~ 1/k
            for (std::size_t i = 0; i < ks.size(); ++i) mags.push_back(ks[i] * std::abs(beams::wavepacket_transform(qs[i], z, zeta)));
            out.push_back(probe::classify_magnitudes({z, zeta}, ks, mags));
        }
    }
    {
        auto f = ctx.open("classification.csv");
        probe::write_classification_csv(f, out);
    }
    std::size_t flagged = 0;
    for (const auto& cl : out) flagged += cl.flagged;
    ctx.out() << flagged << " of " << out.size() << " phase-space points flagged\n";
}

void run_xray(const Context& ctx) {
    const auto c = medium(ctx);
    const rays::Disc dom{Vec2::Zero(), 1.0};
    const auto chords = rays::chord_family(dom, static_cast<int>(ctx.integer("angles")), static_cast<int>(ctx.integer("offsets")));
    const auto rs = xray::trace_chords(c, dom, chords);
    const double a = ctx.num("phantom_decay");
    auto f = [a](const Vec2& x) { return std::exp(-a * x.squaredNorm()); };
    const auto s = xray::forward_transform(f, rs, chords);
    xray::PixelGrid g;
    g.nx = g.ny = static_cast<int>(ctx.integer("pixels"));
    const auto inv = xray::invert_transform(s, rs, g, ctx.num("lambda"));
    {
        auto o = ctx.open("sinogram.csv");
        xray::write_sinogram_csv(o, s);
    }
    {
        auto o = ctx.open("field.csv");
        xray::write_pixel_field_csv(o, inv.field);
    }
    ctx.out() << "field error " << fmt(xray::relative_error(inv.field, f), 4) << " sinogram residual "
              << fmt(inv.relative_residual, 4) << " cg iterations " << inv.iterations << '\n';
}

void run_recover_kernel(const Context& ctx) {
    const auto c = medium(ctx);
    const long order = ctx.integer("order");
    if (order != 0 && order != 1) throw UnsupportedError("--order must be 0 or 1");
    const rays::Disc dom{Vec2::Zero(), 1.0};
    const auto chords = rays::chord_family(dom, static_cast<int>(ctx.integer("angles")), static_cast<int>(ctx.integer("offsets")));
    const auto rs = xray::trace_chords(c, dom, chords);
    xray::PixelGrid g;
    g.nx = g.ny = static_cast<int>(ctx.integer("pixels"));
    const double lambda = ctx.num("lambda");
    auto bump = std::make_shared<GaussianBumpField>(0.0, ctx.num("amplitude"), ctx.vec2("center"), 1 / std::sqrt(8.0));
    // order 0: G = bump e^{-t}; order 1: G = bump (e^{-t} - e^{-2t}), so G(., 0) = 0 and d_t G(., 0) = bump
    const ExpSum time = order == 0 ? ExpSum{{1.0}, {-1.0}} : ExpSum{{1.0, -1.0}, {-1.0, -2.0}};
    const SeparableKernel G(std::vector<SeparableKernel::Term>{{bump, time}});
    const auto data = xray::beam_chord_data(c, G, dom, chords, order == 1);
    auto r = xray::recover_kernel_order0(data, rs, c, g, lambda);
    if (order == 1) r = xray::recover_kernel_order1(data, r.field, rs, c, dom, g, lambda);
    {
        auto o = ctx.open("kernel.csv");
        xray::write_pixel_field_csv(o, r.field);
    }
    ctx.out() << "order " << order << " recovery error " << fmt(xray::relative_error(r.field, [&](const Vec2& x) { return bump->value(x); }), 4)
              << " sinogram residual " << fmt(r.relative_residual, 4) << '\n';
}

void run_emm_recover(const Context& ctx) {
    const auto m = ctx.list("moments");
    const long n = ctx.integer("n");
    if (n < 1 || m.size() != static_cast<std::size_t>(2 * n))
        throw ArgumentError("--moments must hold 2n values for --n " + std::to_string(n));
    const auto r = emm::recover_parameters(m);
    ctx.out() << "alpha=(" << join_numbers(r.alphas) << ")\n"
              << "beta=(" << join_numbers(r.betas) << ")\n"
              << "hankel_condition=" << fmt(r.hankel_condition, 6) << '\n';
}

/// Fast invariant checks across the modules; exit 3 when any fails.
void run_verify(const Context& ctx) {
    struct Check {
        std::string name;
        double value, limit;
    };
    std::vector<Check> checks;
    {  // Riccati closed form for constant c
        const auto c = SoundSpeedField::constant(2.0);
        const CMat3 H0 = I * CMat3::Identity();
        const auto p = beams::solve_riccati(c, rays::null_point(c, Vec2::Zero(), Vec2(1, 0)), 2.0, H0);
        Mat3 C = Mat3::Zero();
        C.diagonal() << -2.0, -2.0, 1.0;
        const CMat3 e = (H0.inverse() + 2.0 * C.cast<cplx>()).inverse();
        checks.push_back({"riccati closed form", (p.H(2.0) - e).norm(), 1e-8});
    }
    {  // Volterra constant kernel: u = 1 + lambda int u gives e^{lambda t}
        const volterra::TimeGrid grid(0.0, 1.0, 1000);
        const auto u = volterra::solve_second_kind([](double) { return 0.7; }, [](double) { return 1.0; }, grid);
        checks.push_back({"volterra exponential", std::abs(u.back() - std::exp(0.7)), 1e-5});
    }
    {  // EMM round trip on a seeded random instance
        std::mt19937_64 rng(ctx.seed());
        std::uniform_real_distribution<double> U(0.5, 1.5);
        std::vector<double> al{-3 * U(rng), -1.5 * U(rng) - 4.5, -U(rng) * 0.5}, be{U(rng), U(rng), U(rng)};
        std::vector<double> m(6, 0.0);
        for (int k = 0; k < 6; ++k)
            for (int j = 0; j < 3; ++j) m[k] += be[j] * std::pow(al[j], k);
        const auto r = emm::recover_parameters(m);
        std::sort(al.begin(), al.end());
        double err = 0;
        for (int j = 0; j < 3; ++j) err = std::max(err, std::abs(r.alphas[j] - al[j]) / std::abs(al[j]));
        checks.push_back({"emm round trip", err, 1e-6});
    }
    {  // FDTD: zero data stays zero
        fdtd::SimGrid g;
        g.nx = g.ny = 41;
        g.dx = g.dy = 0.05;
        g.dt = 0.02;
        g.steps = 50;
        const auto r = fdtd::simulate(SoundSpeedField::gaussian_lens(), ZeroKernel(), g, {});
        checks.push_back({"fdtd zero source", r.state.u.abs().maxCoeff(), 0.0});
    }
    {  // ray transform chord lengths at unit speed
        const rays::Disc dom{Vec2::Zero(), 1.0};
        const auto chords = rays::chord_family(dom, 2, 5);
        const auto s = xray::forward_transform([](const Vec2&) { return 1.0; }, SoundSpeedField::constant(1.0), dom, chords);
        double err = 0;
        for (std::size_t i = 0; i < chords.size(); ++i)
            err = std::max(err, std::abs(s.values[i] - 2 * std::sqrt(1 - chords[i].offset * chords[i].offset)));
        checks.push_back({"xray chord length", err, 1e-8});
    }
    {  // lens data: diametral travel time at c = 4 is 1
        const auto c = SoundSpeedField::constant(4.0);
        const auto rec = rays::lens_data(c, rays::Disc{Vec2::Zero(), 1.0}, Vec2(-1, 0), Vec2(1, 0));
        checks.push_back({"lens travel time", std::abs(rec.travel_time - 1.0), 1e-6});
    }
    bool ok_all = true;
    for (const auto& ch : checks) {
        const bool pass = ch.value <= ch.limit;
        ok_all = ok_all && pass;
        ctx.out() << (pass ? "PASS " : "FAIL ") << ch.name << " value=" << fmt(ch.value, 4) << " limit=" << fmt(ch.limit, 4)
                  << '\n';
    }
    if (!ok_all) throw NumericalError("verify: at least one invariant failed");
}

std::vector<Command> commands() {
    const std::vector<Param> xray_common{
        {"angles", 180.0, "chord directions"}, {"offsets", 64.0, "chords per direction"},
        {"pixels", 64.0, "pixels per side"},   {"lambda", 1e-4, "Tikhonov weight"}};
    return {
        {"simulate", "FDTD simulation with receivers; writes traces.csv and traces.svg",
         join({medium_params, kernel_params,
               {{"n", 201.0, "grid nodes per side"},
                {"half_width", 1.0, "domain [-L, L]^2"},
                {"T", 1.0, "final time"},
                {"cfl", 0.5, "CFL number"},
                {"source", json::array({0.0, 0.0}), "source centre"},
                {"source_width", 0.05, "Gaussian source width"},
                {"pulse_center", 0.1, "Ricker pulse centre time"},
                {"pulse_width", 0.03, "Ricker pulse width"},
                {"receivers", json::array({0.5, 0.0, -0.5, 0.0}), "receiver x,y pairs"}}}),
         run_simulate},
        {"trace", "null bicharacteristic; writes ray.csv and ray.svg",
         join({medium_params,
               {{"start", json::array({-2.0, 0.3}), "start x,y"},
                {"dir", json::array({1.0, 0.0}), "initial direction"},
                {"span", 4.0, "sigma length"},
                {"step", 0.01, "output sample spacing"}}}),
         run_trace},
        {"lens", "lens data of a disc for a parallel chord family; writes lens.csv",
         join({medium_params, {{"radius", 1.0, "disc radius"}, {"angles", 8.0, "directions"}, {"offsets", 8.0, "chords per direction"}}}),
         run_lens},
        {"beam", "Gaussian beam along a null ray; writes beam.csv and beam.svg",
         join({medium_params, kernel_params, beam_params, {{"levels", 1.0, "amplitude levels a'_0..a'_l"}, {"k", 40.0, "frequency"}}}),
         run_beam},
        {"residual-scan", "residual norms over k with fitted slopes; writes residual.csv and residual.svg",
         join({{{"construction", "go", "'go' (plane wave, constant c) or 'beam'"},
                {"orders", json::array({1.0, 2.0}), "GO term counts N, or beam amplitude levels"},
                {"ks", json::array({20.0, 40.0, 80.0, 160.0}), "frequencies"},
                {"nx", 8.0, "transverse quadrature nodes (8 or 16)"},
                {"nt", 4.0, "time nodes (beam)"}},
               constant_medium_params, kernel_params, beam_params}),
         run_residual_scan},
        {"probe", "wave-packet classification of a beam family; writes classification.csv",
         join({medium_params, kernel_params, beam_params,
               {{"ks", json::array({32.0, 64.0, 128.0}), "frequencies"},
                {"cell", 0.2, "transverse cell size"},
                {"offsets", 4.0, "cells on each side of the ray"},
                {"sigma0", 1.5, "ray parameter of the probed point"}}}),
         run_probe},
        {"xray", "ray transform round trip of a Gaussian phantom; writes sinogram.csv and field.csv",
         join({medium_params, xray_common, {{"phantom_decay", 4.0, "phantom exp(-a |x|^2)"}}}), run_xray},
        {"recover-kernel", "memory-kernel recovery from beam data (order 0 or 1); writes kernel.csv",
         join({medium_params,
               {{"order", 0.0, "0: G(.,0); 1: d_t G(.,0)"},
                {"center", json::array({0.2, -0.1}), "bump centre"},
                {"amplitude", 1.0, "bump amplitude"},
                {"angles", 60.0, "chord directions"},
                {"offsets", 32.0, "chords per direction"},
                {"pixels", 32.0, "pixels per side"},
                {"lambda", 1e-4, "Tikhonov weight"}}}),
         run_recover_kernel},
        {"emm-recover", "extended Maxwell parameters from moments",
         {{"moments", json::array(), "m_0..m_{2n-1}"}, {"n", 1.0, "number of units"}}, run_emm_recover},
        {"verify", "fast invariant checks; nonzero exit on failure", {}, run_verify},
    };
}

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    const auto cmds = commands();
    CLI::App app{"viscobeam: viscoacoustic waves with memory"};
    app.require_subcommand(0, 1);
    int threads = 0;
    app.add_option("--threads", threads, "worker threads (default: VISCOBEAM_THREADS or all cores)");

    struct Bound {
        CLI::App* sub;
        std::string config;
        std::map<std::string, std::string> text;
        std::map<std::string, CLI::Option*> opts;
    };
    std::vector<Bound> bound(cmds.size());
    for (std::size_t i = 0; i < cmds.size(); ++i) {
        auto& b = bound[i];
        b.sub = app.add_subcommand(cmds[i].name, cmds[i].help);
        b.sub->add_option("--config", b.config, "JSON file with parameter values; flags override it");
        b.opts["out"] = b.sub->add_option("--out", b.text["out"], "output directory [out]");
        b.opts["seed"] = b.sub->add_option("--seed", b.text["seed"], "random seed, recorded in every output header [0]");
        for (const auto& p : cmds[i].params) {
            const std::string def = p.def.is_string() ? p.def.get<std::string>() : p.def.dump();
            b.opts[p.name] = b.sub->add_option("--" + p.name, b.text[p.name], p.help + " [" + def + "]");
        }
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ExtrasError& e) {
        // stray arguments after a known subcommand are a configuration error; anything else
        // means the subcommand itself was not recognised
        if (!app.get_subcommands().empty()) {
            err << "error: " << e.what() << '\n';
            return config_error;
        }
        err << "unknown subcommand: " << e.what() << "\n" << app.help();
        return usage_error;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return config_error;
    }
    if (threads > 0) set_thread_count(threads);

    for (std::size_t i = 0; i < cmds.size(); ++i) {
        if (!bound[i].sub->parsed()) continue;
        const auto& b = bound[i];
        try {
            std::map<std::string, std::string> given;
            for (const auto& [name, opt] : b.opts)
                if (opt->count() > 0) given[name] = b.text.at(name);
            const json cfg = resolve_config(cmds[i], b.config, given);
            const Context ctx(cmds[i].name, cfg, out);
            cmds[i].run(ctx);
            return ok;
        } catch (const ConfigError& e) {
            err << "configuration error: " << e.what() << '\n';
            return config_error;
        } catch (const NumericalError& e) {
            err << "numerical error: " << e.what() << '\n';
            return numerical_error;
        } catch (const json::exception& e) {
            err << "configuration error: " << e.what() << '\n';
            return config_error;
        } catch (const fs::filesystem_error& e) {
            err << "configuration error: " << e.what() << '\n';
            return config_error;
        }
    }
    err << "no subcommand given\n" << app.help();
    return usage_error;
}

}  // namespace viscobeam::cli

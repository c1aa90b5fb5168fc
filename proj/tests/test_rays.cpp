#include <gtest/gtest.h>

#include <viscobeam/rays.hpp>

using namespace viscobeam;
using namespace viscobeam::rays;

TEST(Hamiltonian, Examples) {
    auto c1 = SoundSpeedField::constant(1.0);
    auto c4 = SoundSpeedField::constant(4.0);
    EXPECT_DOUBLE_EQ(hamiltonian(c1, {Vec2::Zero(), 0, Vec2(1, 0), 1}), 0.0);
    EXPECT_DOUBLE_EQ(hamiltonian(c1, {Vec2::Zero(), 0, Vec2(1, 0), 2}), 1.5);
    EXPECT_DOUBLE_EQ(hamiltonian(c4, {Vec2::Zero(), 0, Vec2(0.5, 0), 1}), 0.0);
}

TEST(Trace, StraightRayUnitSpeed) {
    auto c = SoundSpeedField::constant(1.0);
    auto ray = trace_bicharacteristic(c, {Vec2::Zero(), 0.3, Vec2(-1, 0), 1}, 2.0);
    ASSERT_FALSE(ray.truncated);
    for (std::size_t i = 0; i < ray.size(); i += 97) {
        const auto p = unpack(ray.state[i]);
        EXPECT_NEAR(p.x.x(), ray.sigma[i], 1e-12);
        EXPECT_NEAR(p.x.y(), 0.0, 1e-12);
        EXPECT_NEAR(p.t, 0.3 + ray.sigma[i], 1e-12);
        EXPECT_NEAR((p.xi - Vec2(-1, 0)).norm(), 0.0, 1e-12);
    }
}

TEST(Trace, SpatialSpeedIsSqrtC) {
    auto c = SoundSpeedField::constant(4.0);
    auto ray = trace_bicharacteristic(c, {Vec2::Zero(), 0, Vec2(-0.5, 0), 1}, 1.0);
    for (std::size_t i = 0; i < ray.size(); i += 50) EXPECT_NEAR(std::hypot(ray.deriv[i][0], ray.deriv[i][1]), 2.0, 1e-12);
}

TEST(Trace, RejectsNonNullStart) {
    auto c = SoundSpeedField::constant(1.0);
    EXPECT_THROW(trace_bicharacteristic(c, {Vec2::Zero(), 0, Vec2(1, 0), 2}, 1.0), ArgumentError);
}

TEST(Trace, LensInvariants) {
    auto c = SoundSpeedField::gaussian_lens();
    const auto p0 = null_point(c, Vec2(-2, 0.4), Vec2(1, 0));
    auto ray = trace_bicharacteristic(c, p0, 4.0);
    EXPECT_LE(ray.max_q_drift, 1e-8);
    const Vec2 x0 = p0.x;
    const double L0 = x0.x() * ray.deriv[0][1] - x0.y() * ray.deriv[0][0];
    for (std::size_t i = 0; i < ray.size(); ++i) {
        const auto& s = ray.state[i];
        const auto& d = ray.deriv[i];
        // Clairaut: x ^ xi is conserved for radial c; x ^ x' = -c (x ^ xi).
        const double L = s[0] * s[4] - s[1] * s[3];
        const double Lref = x0.x() * p0.xi.y() - x0.y() * p0.xi.x();
        EXPECT_NEAR(L, Lref, 1e-7);
        EXPECT_NEAR(s[2], ray.sigma[i], 1e-9);
        (void)d;
        (void)L0;
    }
}

TEST(Trace, TruncatedWhenLeavingBox) {
    auto c = SoundSpeedField(std::make_shared<ConstantField>(1.0, Box{Vec2(-1, -1), Vec2(1, 1)}), Box{Vec2(-1, -1), Vec2(1, 1)});
    auto ray = trace_bicharacteristic(c, {Vec2::Zero(), 0, Vec2(-1, 0), 1}, 3.0);
    EXPECT_TRUE(ray.truncated);
    EXPECT_LE(ray.sigma.back(), 1.0 + 1e-9);
}

TEST(Lens, DiametralChordC4) {
    auto c = SoundSpeedField::constant(4.0);
    Disc d;
    auto rec = lens_data(c, d, Vec2(-1, 0), Vec2(1, 0));
    EXPECT_NEAR(rec.travel_time, 1.0, 1e-9);
    EXPECT_NEAR((rec.exit.x - Vec2(1, 0)).norm(), 0.0, 1e-9);
    EXPECT_NEAR((rec.exit_dir - Vec2(1, 0)).norm(), 0.0, 1e-12);
    EXPECT_NEAR(rec.arc_length, 2.0, 1e-9);
}

TEST(Lens, ChordAtImpactParameter) {
    auto c = SoundSpeedField::constant(1.0);
    Disc d;
    for (double r : {0.0, 0.3, 0.75, 0.95}) {
        const double h = std::sqrt(1 - r * r);
        auto rec = lens_data(c, d, Vec2(-h, r), Vec2(1, 0));
        EXPECT_NEAR(rec.travel_time, 2 * h, 1e-9);
    }
}

TEST(Lens, GaussianLensRefinementAndReversal) {
    auto c = SoundSpeedField::gaussian_lens();
    Disc d{Vec2::Zero(), 2.0};
    const double ang = 0.3;
    const Vec2 entry(-2 * std::cos(ang), -2 * std::sin(ang));
    const Vec2 dir = Vec2(1, 0.05).normalized();
    auto a = lens_data(c, d, entry, dir, 1e-10);
    auto b = lens_data(c, d, entry, dir, 1e-12);
    EXPECT_LE((a.exit.x - b.exit.x).norm(), 1e-6);
    EXPECT_NEAR(a.travel_time, b.travel_time, 1e-6);
    auto back = lens_data(c, d, a.exit.x, -a.exit_dir, 1e-12);
    EXPECT_LE((back.exit.x - entry).norm(), 1e-6);
    EXPECT_LE((back.exit_dir + dir).norm(), 1e-6);
}

TEST(Lens, TravelTimeEqualsMetricLength) {
    auto c = SoundSpeedField::gaussian_lens();
    auto ray = trace_bicharacteristic(c, null_point(c, Vec2(-2, 0.3), Vec2(1, 0.1)), 3.0, 1e-10, 1e-3);
    double L = 0;
    for (std::size_t i = 0; i + 1 < ray.size(); ++i) {
        // Simpson on each interval with the Hermite midpoint.
        auto f = [&](const RayState& s) {
            RayState d;
            ray_rhs(c, s, d);
            return std::hypot(d[0], d[1]) / std::sqrt(c.c(Vec2(s[0], s[1])));
        };
        const double m = 0.5 * (ray.sigma[i] + ray.sigma[i + 1]);
        L += (ray.sigma[i + 1] - ray.sigma[i]) / 6 * (f(ray.state[i]) + 4 * f(ray.at(m)) + f(ray.state[i + 1]));
    }
    EXPECT_NEAR(L, ray.span(), 1e-6);
}

TEST(ChordFamily, Counts) {
    Disc d;
    auto one = chord_family(d, 1, 1);
    ASSERT_EQ(one.size(), 1u);
    EXPECT_NEAR((one[0].entry - Vec2(-1, 0)).norm(), 0, 1e-15);
    auto four = chord_family(d, 4, 1);
    ASSERT_EQ(four.size(), 4u);
    for (int k = 0; k < 4; ++k) {
        EXPECT_NEAR(four[k].angle, k * pi / 4, 1e-15);
        EXPECT_NEAR(four[k].entry.norm(), 1.0, 1e-15);
        EXPECT_NEAR(four[k].offset, 0.0, 1e-15);
    }
    auto many = chord_family(d, 180, 64);
    EXPECT_EQ(many.size(), 11520u);
    for (const auto& ch : many) EXPECT_NEAR(ch.entry.norm(), 1.0, 1e-12);
}

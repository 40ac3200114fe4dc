#include <gtest/gtest.h>

#include "rotek/envelope.hpp"

using namespace rotek;

TEST(EkmanLimit, AveragedPairingValues) {
    // closed-form limit coefficients evaluated independently at 40 digits
    const auto a = ekman_limit_coefficient({1, 0, 1}, Pairing::averaged);
    EXPECT_NEAR(a.R, 0.0074409667336572518, 1e-16);
    EXPECT_NEAR(a.I, -0.0073854171324892564, 1e-16);
    const auto b = ekman_limit_coefficient({1, 1, 2}, Pairing::averaged);
    EXPECT_NEAR(b.R, 0.0054681625475378601, 1e-16);
    EXPECT_NEAR(b.I, -0.0054531658855489371, 1e-16);
    const auto c = ekman_limit_coefficient({0, 2, -1}, Pairing::averaged);
    EXPECT_NEAR(c.R, 0.012336300281078629, 1e-16);
    EXPECT_NEAR(c.I, 0.011741145522612777, 1e-16);
}

TEST(EkmanLimit, UndefinedForUnitFrequency) {
    EXPECT_THROW(ekman_limit_coefficient({0, 0, 1}), DomainError);
}

TEST(EkmanCoefficient, PairingsDifferByHorizontalArea) {
    const Params p{1e-3, 1e-4, 1.0, 4, {}};
    for (const ModeIndex k : {ModeIndex{1, 0, 1}, ModeIndex{2, -1, 3}, ModeIndex{0, 1, 0}}) {
        const cplx a = ekman_coefficient(k, p, Pairing::orthonormal).A, b = ekman_coefficient(k, p, Pairing::averaged).A;
        EXPECT_LT(std::abs(a - 4 * pi * pi * b), 1e-14 * std::abs(a));
    }
}

TEST(EkmanCoefficient, ConvergesToLimit) {
    for (const ModeIndex k : {ModeIndex{1, 0, 1}, ModeIndex{1, 1, 2}, ModeIndex{0, 2, -1}, ModeIndex{3, 0, 1}}) {
        const auto L = ekman_limit_coefficient(k);
        double prev = 1e300;
        for (double e : {1e-4, 1e-6, 1e-8, 1e-10}) {
            const cplx A = ekman_coefficient(k, Params{e, e, 1.0, 4, {}}).A;
            const double err = std::abs(A - cplx(L.R, L.I)) / std::abs(cplx(L.R, L.I));
            EXPECT_LT(err, prev);
            prev = err;
        }
        EXPECT_LT(prev, 1e-4);
    }
}

TEST(EkmanCoefficient, DampsEveryHorizontallyVaryingMode) {
    const Params p{1e-3, 1e-3, 1.0, 4, {}};
    for (const auto& k : modes_in_ball(3.0)) {
        if (k.h().is_zero()) {
            EXPECT_EQ(ekman_coefficient(k, p).A, cplx(0.0));
            EXPECT_EQ(suction_factor(k, p), cplx(0.0));
            continue;
        }
        EXPECT_GT(ekman_coefficient(k, p).A.real(), 0.0) << k.k1 << k.k2 << k.k3;
    }
}

TEST(EkmanCoefficient, ConjugateSymmetryUnderReflection) {
    // N_{-k} relates to N_k by conjugation, so the damping of -k is the conjugate of that of k
    const Params p{1e-3, 1e-3, 1.0, 4, {}};
    for (const ModeIndex k : {ModeIndex{1, 0, 1}, ModeIndex{2, 1, -2}}) {
        const cplx a = damping_rate(k, p), b = damping_rate({-k.k1, -k.k2, -k.k3}, p);
        EXPECT_LT(std::abs(a - std::conj(b)), 1e-12 * std::abs(a));
    }
}

TEST(LayerSplit, CancelsInteriorHorizontalTrace) {
    const Params p{1e-3, 1e-3, 1.0, 4, {}};
    const ModeIndex k{1, 2, 1};
    DecayRates r;
    Transition tr;
    const Vec2c ns = layer_split(k, p, &r, &tr);
    const Vec3c n = basis_coeffs(k);
    EXPECT_LT(abs(ns[0] * tr.wm + ns[1] * tr.wp - Vec2c{n[0], n[1]}), 1e-14);
}

TEST(DampingRate, VerticalViscosityAndLimitOptions) {
    const Params p{1e-3, 2e-3, 1.0, 4, {}};
    const ModeIndex k{1, 0, 2};
    const cplx a = damping_rate(k, p, {Pairing::orthonormal, false, false});
    const cplx b = damping_rate(k, p, {Pairing::orthonormal, true, false});
    EXPECT_NEAR((b - a).real(), pi * pi * p.nu * 4, 1e-14);
    const cplx c = damping_rate(k, p, {Pairing::orthonormal, false, true});
    const auto L = ekman_limit_coefficient(k);
    EXPECT_LT(std::abs(c - (1.0 + std::sqrt(p.nu / p.epsilon) * cplx(L.R, L.I))), 1e-14);
    EXPECT_NEAR(damping_rate({0, 0, 1}, p, {Pairing::orthonormal, false, false}).real(), 0.0, 1e-15);
}

TEST(Envelope, OdeSolverMatchesClosedForm) {
    const Params p{1e-3, 1e-3, 1.0, 4, {}};
    SpectralField g{{{1, 0, 1}, {1.0, 0.5}}, {{0, 1, -2}, I}, {{0, 0, 1}, 0.3}, {{2, 2, 1}, -1.0}};
    std::vector<double> ts{0.0, 0.1, 0.5, 1.0, 2.5};
    const auto sol = envelope_solve(g, p, ts);
    ASSERT_EQ(sol.size(), ts.size());
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const auto cf = evolve_c(g, p, ts[i]);
        for (const auto& [k, c] : cf.coeffs) EXPECT_LT(std::abs(sol[i].at(k) - c), 1e-11);
    }
    EXPECT_THROW(evolve_c(g, p, -1.0), DomainError);
}

TEST(Envelope, AmplitudesNeverGrow) {
    const Params p{1e-4, 1e-3, 1.0, 4, {}};
    SpectralField g;
    for (const auto& k : modes_in_ball(2.0)) g.add(k, 1.0);
    double prev = g.norm();
    for (double t : {0.1, 0.2, 0.4, 0.8}) {
        const double n = evolve_c(g, p, t).norm();
        EXPECT_LE(n, prev);
        prev = n;
    }
}

TEST(TraceBounds, RealisedTracesBelowSobolevBounds) {
    const Params p{1e-3, 1e-3, 1.0, 4, {}};
    SpectralField g{{{1, 0, 1}, 1.0}, {{2, 1, -1}, {0.3, 0.4}}, {{0, 0, 2}, 0.5}};
    for (double s : {0.0, 1.0, 2.0}) {
        const auto b = trace_bounds(g, s, p);
        EXPECT_LE(b.realized_h, b.bound_h);
        EXPECT_LE(b.realized_3, b.bound_3);
        const auto later = trace_bounds(g, s, p, 1.0);
        EXPECT_LT(later.realized_h, b.realized_h);
    }
}

#include <gtest/gtest.h>

#include "rotek/correctors.hpp"

using namespace rotek;

namespace {

// Independent quadrature of <N_l | v(z) e^{i l_h.x_h}> under the plain pairing.
cplx quad_pair(const ModeIndex& l, const std::function<Vec3c(double)>& v) {
    GaussLegendre g(96, 0.0, 1.0);
    cplx s{};
    for (std::size_t i = 0; i < g.x.size(); ++i) s += g.w[i] * dot(basis_profile(l, g.x[i]), v(g.x[i]));
    return 4 * pi * pi * s;
}

}  // namespace

TEST(StoppingLift, ExactTracesAndDivergenceFree) {
    WallTrace d0{{{1, 0}, {0.3, I, 0.2}}, {{2, -1}, {1.0, 0.5, -0.4}}, {{0, 0}, {0.1, 0.2, 0.7}}};
    WallTrace d1{{{1, 0}, {-1.0, 0.25, 0.1}}, {{0, 0}, {0.5, -0.5, 0.7}}};
    const auto w = stopping_lift(d0, d1);
    for (const auto& [kh, m] : w.modes) {
        const Vec3c a = d0.count(kh) ? d0.at(kh) : Vec3c{}, b = d1.count(kh) ? d1.at(kh) : Vec3c{};
        const auto bot = m.eval(0.0), top = m.eval(1.0);
        EXPECT_LT(abs(bot[0] - a), 1e-14);
        EXPECT_LT(std::abs(top[1][0] - b[0]) + std::abs(top[1][1] - b[1]) + std::abs(top[0][2] - b[2]), 1e-13);
        for (double z : {0.0, 0.3, 0.71, 1.0}) {
            const auto e = m.eval(z);
            EXPECT_LT(std::abs(m.div_h(e[0]) + e[1][2]), 1e-13);
        }
    }
}

TEST(StoppingLift, DerivativesConsistent) {
    const LiftMode m = lift_mode({1, 2}, {0.3, -0.1, 0.5}, {I, 1.0, -0.2});
    const double h = 1e-5;
    for (double z : {0.2, 0.5, 0.9}) {
        const auto p = m.eval(z + h), q = m.eval(z - h), e = m.eval(z);
        for (int c = 0; c < 3; ++c) {
            EXPECT_NEAR(std::abs((p[0][c] - q[0][c]) / (2 * h) - e[1][c]), 0.0, 1e-8);
            EXPECT_NEAR(std::abs((p[1][c] - q[1][c]) / (2 * h) - e[2][c]), 0.0, 1e-8);
        }
    }
}

TEST(StoppingLift, MeanModeCompatibility) {
    EXPECT_THROW(lift_mode({0, 0}, {0, 0, 1.0}, {0, 0, 0.5}), DomainError);
    EXPECT_NO_THROW(lift_mode({0, 0}, {0, 0, 0.5}, {1.0, 0, 0.5}));
}

TEST(StoppingLift, H2NormMatchesFineQuadrature) {
    WallTrace d0{{{1, 1}, {0.3, 0.1, 0.2}}}, d1{{{1, 1}, {-1.0, 0.25, 0.1}}};
    const auto w = stopping_lift(d0, d1);
    GaussLegendre g(40, 0.0, 1.0);
    double acc = 0;
    for (std::size_t i = 0; i < g.x.size(); ++i) {
        const auto e = w.modes.at({1, 1}).eval(g.x[i]);
        acc += g.w[i] * (9 * norm2(e[0]) + 3 * norm2(e[1]) + norm2(e[2]));
    }
    EXPECT_NEAR(w.h2_norm(), 2 * pi * std::sqrt(acc), 1e-12);
}

TEST(ScalarProductForms, MatchQuadratureInBothPairings) {
    for (const auto& l : modes_in_ball(4.0)) {
        const double lh2 = l.h().norm2(), l1 = l.k1, l2 = l.k2;
        const cplx first = quad_pair(l, [&](double z) { return Vec3c{I * l1, I * l2, lh2 * z}; });
        const cplx second = quad_pair(l, [&](double) { return Vec3c{-I * l2, I * l1, 0.0}; });
        const auto [a, b] = scalar_product_forms(l, Pairing::orthonormal);
        EXPECT_LT(std::abs(a - first), 1e-10) << l.k1 << l.k2 << l.k3;
        EXPECT_LT(std::abs(b - second), 1e-10) << l.k1 << l.k2 << l.k3;
        const auto [c, d] = scalar_product_forms(l, Pairing::averaged);
        EXPECT_LT(std::abs(c - first / (4 * pi * pi)), 1e-12);
        EXPECT_LT(std::abs(d - second / (4 * pi * pi)), 1e-12);
    }
}

TEST(FluxLift, DivergenceFreeWithPrescribedFluxes) {
    const Params p{1e-3, 1e-3, 1.0, 4, {}};
    const auto F = lift_interior_vint0({{0.3, {1, 2}, cplx(1, 1), cplx(0.5, 0), Envelope{}}}, p);
    const auto& e = F.entries[0];
    for (double z : {0.0, 0.4, 1.0}) {
        const Vec3c v = F.shape(e, z), dv = F.shape_dz(e);
        EXPECT_LT(std::abs(I * (1.0 * v[0] + 2.0 * v[1]) + dv[2]), 1e-15);
    }
    EXPECT_LT(std::abs(F.shape(e, 0.0)[2] - p.layer() * cplx(1, 1)), 1e-15);
    EXPECT_LT(std::abs(F.shape(e, 1.0)[2] - p.layer() * 0.5), 1e-15);
    EXPECT_THROW(lift_interior_vint0({{0.3, {0, 0}, 1.0, 0.0, Envelope{}}}, p), DomainError);
    const auto G = lift_interior_vint1({{0.5, HMode{1, 0}, cplx(0.2, 0.0), Envelope{}}});
    EXPECT_LT(std::abs(G.shape(G.entries[0], 1.0)[2] + 0.2), 1e-15);
    EXPECT_LT(std::abs(G.shape(G.entries[0], 0.0)[2]), 1e-15);
}

TEST(SmallDivisor, ClosedFormMatchesQuadrature) {
    const Params p{1e-3, 1e-3, 1.0, 4, {}};
    SourceTable src;
    src.entries = {{2.0, {1, 0, 1}, {1.0, 0.5}, 0.3}, {0.5, {0, 1, 2}, I, cplx(0.1, 2.0)}, {-3.0, {0, 0, 1}, 2.0, 0.0}};
    for (auto ic : {InitialChoice::special, InitialChoice::zero})
        for (double t : {0.0, 0.05, 0.5}) {
            const auto a = small_divisor_corrector(src, 4, p, t, ic, DuhamelMethod::closed_form);
            const auto b = small_divisor_corrector(src, 4, p, t, ic, DuhamelMethod::quadrature);
            for (const auto& [k, c] : a.coeffs) EXPECT_LT(std::abs(c - b.at(k)), 1e-10);
        }
}

TEST(SmallDivisor, SolvesModeEquation) {
    const Params p{1e-2, 1e-3, 1.0, 4, {}};
    const SourceEntry e{0.7, {1, 1, 1}, {0.4, -0.2}, 0.25};
    const double lam = eigenvalue(e.l), a = 2.0 + pi * pi * p.nu;
    const double t = 0.3, h = 1e-6;
    for (auto ic : {InitialChoice::special, InitialChoice::zero}) {
        auto w = [&](double s) { return corrector_entry(e, p, s, ic, DuhamelMethod::closed_form); };
        const cplx dw = (w(t + h) - w(t - h)) / (2 * h);
        const cplx rhs = e.s0 * std::exp(-e.c * t) * std::exp(I * (e.mu + lam) * t / p.epsilon);
        EXPECT_LT(std::abs(dw + a * w(t) - rhs), 1e-5 * std::abs(rhs));
    }
    EXPECT_LT(std::abs(corrector_entry(e, p, 0.0, InitialChoice::zero, DuhamelMethod::closed_form)), 1e-16);
}

TEST(SmallDivisor, ResonantEntriesRejectedAndCutoffApplied) {
    const Params p{1e-2, 1e-2, 1.0, 4, {}};
    SourceTable bad;
    bad.entries = {{-eigenvalue({1, 0, 1}), {1, 0, 1}, 1.0, 0.0}};
    EXPECT_THROW(small_divisor_corrector(bad, 4, p, 0.1), DomainError);
    SourceTable src;
    src.entries = {{2.0, {3, 0, 3}, 1.0, 0.0}};
    EXPECT_TRUE(small_divisor_corrector(src, 4, p, 0.1).coeffs.empty());
}

TEST(SmallDivisor, AmplitudeIsOrderEpsilon) {
    SourceTable src;
    src.entries = {{2.0, {1, 0, 1}, 1.0, 0.0}, {0.5, {0, 1, 2}, 1.0, 0.0}};
    std::vector<std::pair<double, double>> pts;
    for (double e : {1e-3, 1e-4, 1e-5})
        pts.emplace_back(e, small_divisor_corrector(src, 4, Params{e, 1e-3, 1.0, 4, {}}, 0.5, InitialChoice::special).norm());
    const double slope = std::log(pts[2].second / pts[0].second) / std::log(pts[2].first / pts[0].first);
    EXPECT_NEAR(slope, 1.0, 1e-3);
}

TEST(DivisorBounds, RegimesAndValues) {
    const auto g = divisor_bounds({1, 0, 1}, 2.0);
    EXPECT_EQ(g.regime, "generic");
    EXPECT_NEAR(g.inverse_divisor, 1.0 / std::abs(2.0 + eigenvalue({1, 0, 1})), 1e-15);
    const auto z = divisor_bounds({1, 1, 2}, 0.0);
    EXPECT_EQ(z.regime, "zero");
    EXPECT_NEAR(z.reference, std::sqrt(6.0) / 2.0, 1e-15);
    const auto u = divisor_bounds({1, 0, -1}, 1.0);
    EXPECT_EQ(u.regime, "unit");
    EXPECT_NEAR(u.reference, 2.0, 1e-15);
    EXPECT_THROW(divisor_bounds({0, 0, 1}, 1.0), DomainError);
}

TEST(Truncation, RegimeFormulas) {
    EXPECT_EQ(truncation_choice({1e-4, 1e-4, 1, 4, {}}, Regime::dirichlet), 100);
    EXPECT_EQ(truncation_choice({1e-4, 1e-4, 1, 4, {}}, Regime::wind_small_nu), 10);
    EXPECT_EQ(truncation_choice({1e-4, 1e-2, 1, 4, {}}, Regime::wind_large_nu), 7);
    EXPECT_EQ(truncation_choice({1e-6, 1e-6, 1, 4, {}}, Regime::wind_small_nu, 1.0), 100);
    EXPECT_THROW(truncation_choice({1.0, 1e-2, 1, 4, {}}, Regime::dirichlet), DomainError);
    EXPECT_EQ(wind_regime({1e-3, 1e-4, 1, 4, {}}), Regime::wind_small_nu);
    EXPECT_EQ(wind_regime({1e-4, 1e-3, 1, 4, {}}), Regime::wind_large_nu);
}

TEST(Scaling, HypothesisReport) {
    const Params p{1e-4, 1e-4, 1.0, 4, {}};
    EXPECT_TRUE(scaling_check(p, 1.0, 0.5).ok());
    EXPECT_FALSE(scaling_check(p, 1.0, 0.6).main);
    EXPECT_FALSE(scaling_check(Params{1e-4, 1e-4, 1e3, 4, {}}, 1.0, 0.5).ok());
    EXPECT_NEAR(scaling_check(p).stress_layer_value, std::pow(1e-4, 0.5), 1e-15);
}

TEST(DirichletAssembly, SatisfiesWallConditionsAndIncompressibility) {
    const Params p{1e-3, 1e-3, 1.0, 4, {}};
    const SpectralField gamma{{{1, 0, 1}, 1.0}, {{0, 1, -1}, {0.0, 0.5}}};
    const auto A = assemble_dirichlet_approx(gamma, p);
    EXPECT_LT(A.residuals.at("eta0_3_primary"), 1e-12);
    for (double t : {0.0, 0.2}) {
        for (const auto& kh : A.hmodes()) {
            EXPECT_LT(abs(A.coeff(kh, t, 0.0)), 1e-9);
            EXPECT_LT(std::abs(A.coeff(kh, t, 1.0)[2]), 1e-9);
            const Vec3c du = A.coeff_dz(kh, t, 1.0);
            EXPECT_LT(std::abs(du[0]) + std::abs(du[1]), 1e-9);
        }
        EXPECT_LT(A.divergence_residual(t), 1e-10);
    }
    // the non-interior remainder shrinks with the layer
    const double d3 = A.residuals.at("delta_gamma");
    const double d2 = assemble_dirichlet_approx(gamma, Params{1e-2, 1e-2, 1.0, 4, {}}).residuals.at("delta_gamma");
    EXPECT_LT(d3, d2);
}

TEST(WindAssembly, SatisfiesStressConditionAndIsSmall) {
    const Params p{1e-3, 1e-3, 1.0, 4, {}};
    BoundaryTrace s(1);
    s.add(2.0, {1, 0}, {1.0, 0.0}).add(1.0, {0, 1}, {0.5, I});
    const auto A = assemble_wind_approx(s, p);
    EXPECT_TRUE(A.warnings.empty());
    for (double t : {0.0, 0.13}) {
        for (const auto& kh : A.hmodes()) {
            Vec2c want{};
            for (const auto& e : s.entries)
                if (e.kh == kh) want += std::exp(I * e.mu * t / p.epsilon) * e.delta;
            const Vec3c du = A.coeff_dz(kh, t, 1.0);
            EXPECT_LT(abs(Vec2c{du[0], du[1]} - want), 1e-9);
            EXPECT_LT(abs(A.coeff(kh, t, 0.0)), 1e-9);
            EXPECT_LT(std::abs(A.coeff(kh, t, 1.0)[2]), 1e-9);
        }
        EXPECT_LT(A.divergence_residual(t), 1e-10);
    }
    EXPECT_LT(A.norm(0.1), 0.1);
    EXPECT_THROW(assemble_wind_approx(BoundaryTrace(0), p), DomainError);
}

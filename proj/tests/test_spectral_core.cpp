#include <gtest/gtest.h>

#include "rotek/spectral.hpp"

using namespace rotek;

namespace {

// Plain L^2 pairing of two basis modes: exact horizontal integral times Gauss-Legendre in z.
cplx pair_modes(const ModeIndex& a, const ModeIndex& b) {
    if (a.h() != b.h()) return 0.0;
    GaussLegendre g(64, 0.0, 1.0);
    cplx s{};
    for (std::size_t i = 0; i < g.x.size(); ++i) s += g.w[i] * dot(basis_profile(a, g.x[i]), basis_profile(b, g.x[i]));
    return 4 * pi * pi * s;
}

}  // namespace

TEST(GaussLegendre, IntegratesPolynomialsExactly) {
    GaussLegendre g(6, -1.0, 2.0);
    double s = 0;
    for (std::size_t i = 0; i < g.x.size(); ++i) s += g.w[i] * std::pow(g.x[i], 11);
    EXPECT_NEAR(s, (std::pow(2.0, 12) - 1.0) / 12.0, 1e-10);
}

TEST(GaussLegendre, WallGradedRuleResolvesThinLayer) {
    const auto r = wall_graded_rule(1e-10, 4, 8);
    double one = 0, layer = 0;
    const double d = 1e-7;
    for (std::size_t i = 0; i < r.x.size(); ++i) {
        one += r.w[i];
        layer += r.w[i] * std::exp(-r.x[i] / d);
    }
    EXPECT_NEAR(one, 1.0, 1e-14);
    EXPECT_NEAR(layer / d, 1.0, 1e-10);
}

TEST(Eigenvalue, MatchesClosedForm) {
    EXPECT_NEAR(eigenvalue({1, 0, 1}), -pi / std::sqrt(1 + pi * pi), 1e-15);
    EXPECT_NEAR(eigenvalue({0, 0, 3}), -1.0, 1e-15);
    EXPECT_NEAR(eigenvalue({0, 0, -2}), 1.0, 1e-15);
    EXPECT_EQ(eigenvalue({2, 1, 0}), 0.0);
    EXPECT_THROW(eigenvalue({0, 0, 0}), DomainError);
}

TEST(Eigenbasis, OrthonormalOverBall) {
    const auto ks = modes_in_ball(3.0);
    double worst = 0;
    for (const auto& a : ks)
        for (const auto& b : ks) worst = std::max(worst, std::abs(pair_modes(a, b) - (a == b ? 1.0 : 0.0)));
    EXPECT_LT(worst, 1e-12);
}

TEST(Eigenbasis, DivergenceFreeWithZeroFlux) {
    for (const auto& k : modes_in_ball(4.0)) {
        for (double z : {0.0, 0.13, 0.5, 0.77, 1.0}) {
            const Vec3c u = basis_profile(k, z), du = basis_profile_dz(k, z);
            const cplx div = I * (double(k.k1) * u[0] + double(k.k2) * u[1]) + du[2];
            EXPECT_LT(std::abs(div), 1e-13) << k.k1 << k.k2 << k.k3;
        }
        EXPECT_LT(std::abs(basis_profile(k, 0.0)[2]), 1e-15);
        EXPECT_LT(std::abs(basis_profile(k, 1.0)[2]), 1e-14);
    }
}

TEST(Eigenbasis, ProjectedCoriolisIsDiagonal) {
    // <N_l, e3 x N_k> = i lambda_k delta_lk  (the projection onto the divergence-free span is diagonal)
    const auto ks = modes_in_ball(2.0);
    auto rot = [](const Vec3c& v) { return Vec3c{-v[1], v[0], 0.0}; };
    double worst = 0;
    for (const auto& l : ks)
        for (const auto& k : ks) {
            const cplx got = tensor_pair(l, k, rot, 12, 48);
            const cplx want = l == k ? I * eigenvalue(k) : cplx{};
            worst = std::max(worst, std::abs(got - want));
        }
    EXPECT_LT(worst, 1e-12);
}

TEST(Semigroup, IsUnitaryAndAGroup) {
    SpectralField u{{{1, 0, 1}, {0.3, -0.2}}, {{0, 1, 2}, {1.0, 0.5}}, {{0, 0, 1}, 0.7}};
    const auto a = semigroup(0.7, semigroup(1.1, u));
    const auto b = semigroup(1.8, u);
    EXPECT_NEAR(a.norm(), u.norm(), 1e-14);
    for (const auto& [k, c] : b.coeffs) EXPECT_LT(std::abs(a.at(k) - c), 1e-14);
    const auto back = semigroup(-1.8, b);
    for (const auto& [k, c] : u.coeffs) EXPECT_LT(std::abs(back.at(k) - c), 1e-14);
}

TEST(Semigroup, GeneratorIsCoriolis) {
    SpectralField u{{{1, 2, 1}, 1.0}, {{2, 0, -1}, I}};
    const double h = 1e-5;
    const auto p = semigroup(h, u), m = semigroup(-h, u), L = coriolis_apply(u);
    for (const auto& [k, c] : u.coeffs) EXPECT_NEAR(std::abs((p.at(k) - m.at(k)) / (2 * h) + L.at(k)), 0.0, 1e-9);
}

TEST(SpectralField, NormsAndPointEvaluation) {
    SpectralField u{{{1, 0, 0}, 3.0}, {{0, 0, 1}, 4.0}};
    EXPECT_DOUBLE_EQ(u.norm(), 5.0);
    EXPECT_NEAR(u.sobolev_norm(1.0), std::sqrt(2 * 9.0 + 2 * 16.0), 1e-14);
    const Vec3c v = u.evaluate(0.3, 0.1, 0.4);
    const Vec3c w = 3.0 * basis_vector({1, 0, 0}, 0.3, 0.1, 0.4) + 4.0 * basis_vector({0, 0, 1}, 0.3, 0.1, 0.4);
    EXPECT_LT(abs(v - w), 1e-15);
}

TEST(ProjectV0, RecoversCoefficientsFromSamples) {
    SpectralField u{{{1, -1, 2}, {0.5, 0.25}}, {{0, 1, 0}, -1.0}, {{0, 0, 3}, I}};
    auto g = GridField::sample(16, 32, [&](double x1, double x2, double z) { return u.evaluate(x1, x2, z); });
    std::vector<ModeIndex> want{{1, -1, 2}, {0, 1, 0}, {0, 0, 3}, {1, 0, 1}};
    const auto p = project_V0(g, want);
    for (const auto& k : want) EXPECT_LT(std::abs(p.at(k) - u.at(k)), 1e-12);
}

TEST(ProjectV0, RejectsUnderResolvedModes) {
    GridField g(4, 8);
    EXPECT_THROW(project_V0(g, {{3, 0, 1}}), DomainError);
    EXPECT_THROW(project_V0(g, {{0, 0, 0}}), DomainError);
}

TEST(ModesInBall, CountsAndOrdering) {
    EXPECT_EQ(modes_in_ball(1.0).size(), 6u);
    EXPECT_EQ(modes_in_ball(std::sqrt(2.0)).size(), 18u);
    const auto ks = modes_in_ball(2.0);
    EXPECT_TRUE(std::is_sorted(ks.begin(), ks.end()));
}

#pragma once
/** @file spectral.hpp
 *  @brief Coriolis eigenbasis of the divergence-free, zero-flux subspace and its rotation semigroup.
 *
 *  Inner products are plain integrals over [0,2pi]^2 x [0,1]; under this pairing the basis is orthonormal.
 */

#include <functional>
#include <map>

#include "core.hpp"

namespace rotek {

/** @brief Rotation frequency of mode k: -pi k3 / sqrt(|k_h|^2 + (pi k3)^2). */
inline double eigenvalue(const ModeIndex& k) {
    if (k.is_zero()) throw DomainError("eigenvalue: k must be nonzero");
    return -double(k.k3) * pi / k.norm_pi();
}

/** @brief Amplitude vector n(k) of the basis mode. */
inline Vec3c basis_coeffs(const ModeIndex& k) {
    if (k.is_zero()) throw DomainError("basis_coeffs: k must be nonzero");
    if (k.h().is_zero()) return {cplx(sign(k.k3) / (2 * pi)), I / (2 * pi), 0.0};
    const double kh = k.h().norm();
    const double lam = eigenvalue(k);
    return {(I * double(k.k2) + double(k.k1) * lam) / (2 * pi * kh),
            (-I * double(k.k1) + double(k.k2) * lam) / (2 * pi * kh), I * kh / (2 * pi * k.norm_pi())};
}

/** @brief Vertical profile of the basis mode (the factor multiplying exp(i k_h.x_h)). */
inline Vec3c basis_profile(const ModeIndex& k, double z) {
    const Vec3c n = basis_coeffs(k);
    const double c = std::cos(pi * k.k3 * z), s = std::sin(pi * k.k3 * z);
    return {n[0] * c, n[1] * c, n[2] * s};
}

/** @brief z-derivative of the vertical profile. */
inline Vec3c basis_profile_dz(const ModeIndex& k, double z) {
    const Vec3c n = basis_coeffs(k);
    const double a = pi * k.k3;
    const double c = std::cos(a * z), s = std::sin(a * z);
    return {-a * n[0] * s, -a * n[1] * s, a * n[2] * c};
}

/** @brief Basis mode evaluated at a point of the strip. */
inline Vec3c basis_vector(const ModeIndex& k, double x1, double x2, double z) {
    const cplx ph = std::exp(I * (k.k1 * x1 + k.k2 * x2));
    return ph * basis_profile(k, z);
}

/** @brief Finite expansion over the eigenbasis, iterated in lexicographic mode order. */
struct SpectralField {
    std::map<ModeIndex, cplx> coeffs;

    SpectralField() = default;
    SpectralField(std::initializer_list<std::pair<const ModeIndex, cplx>> init) : coeffs(init) {}

    [[nodiscard]] double norm() const {
        double s = 0;
        for (const auto& [k, c] : coeffs) s += std::norm(c);
        return std::sqrt(s);
    }
    /// Sobolev-type norm sum (1+|k|^2)^s |c_k|^2 with the Euclidean |k|.
    [[nodiscard]] double sobolev_norm(double s) const {
        double acc = 0;
        for (const auto& [k, c] : coeffs) acc += std::pow(1.0 + k.norm() * k.norm(), s) * std::norm(c);
        return std::sqrt(acc);
    }
    [[nodiscard]] cplx at(const ModeIndex& k) const {
        auto it = coeffs.find(k);
        return it == coeffs.end() ? cplx{} : it->second;
    }
    /// Horizontal modes present in the expansion.
    [[nodiscard]] std::set<HMode> hmodes() const {
        std::set<HMode> out;
        for (const auto& [k, c] : coeffs) out.insert(k.h());
        return out;
    }
    /// Vertical profile of the horizontal Fourier coefficient for k_h.
    [[nodiscard]] Vec3c profile(const HMode& kh, double z) const {
        Vec3c out{};
        for (const auto& [k, c] : coeffs)
            if (k.h() == kh) out += c * basis_profile(k, z);
        return out;
    }
    [[nodiscard]] Vec3c evaluate(double x1, double x2, double z) const {
        Vec3c out{};
        for (const auto& [k, c] : coeffs) out += c * basis_vector(k, x1, x2, z);
        return out;
    }
    SpectralField& add(const ModeIndex& k, cplx c) {
        coeffs[k] += c;
        return *this;
    }
};

/** @brief Coriolis operator in the eigenbasis: c_k -> i lambda_k c_k. */
inline SpectralField coriolis_apply(const SpectralField& u) {
    SpectralField out;
    for (const auto& [k, c] : u.coeffs) out.coeffs[k] = I * eigenvalue(k) * c;
    return out;
}

/** @brief Rotation semigroup exp(-tau L): c_k -> exp(-i lambda_k tau) c_k. */
inline SpectralField semigroup(double tau, const SpectralField& u) {
    SpectralField out;
    for (const auto& [k, c] : u.coeffs) out.coeffs[k] = std::exp(-I * eigenvalue(k) * tau) * c;
    return out;
}

/** @brief Plain L^2 pairing of two fields that share one horizontal mode, given by their vertical profiles. */
inline cplx pair_profiles(const std::function<Vec3c(double)>& a, const std::function<Vec3c(double)>& b, int nz = 64) {
    GaussLegendre g(nz, 0.0, 1.0);
    cplx s{};
    for (int i = 0; i < nz; ++i) s += g.w[i] * dot(a(g.x[i]), b(g.x[i]));
    return 4 * pi * pi * s;
}

/** @brief Projection of a single-horizontal-mode field u(z) exp(i k_h.x_h) onto basis mode l. */
inline cplx project_profile(const ModeIndex& l, const HMode& kh, const std::function<Vec3c(double)>& u, int nz = 0) {
    if (l.h() != kh) return {};
    if (nz <= 0) nz = 48 + 4 * std::abs(l.k3);
    return pair_profiles([&](double z) { return basis_profile(l, z); }, u, nz);
}

/** @brief Field sampled on a tensor grid: uniform periodic in x_h, Gauss-Legendre in z. */
struct GridField {
    int M = 16;                   ///< points per horizontal direction
    GaussLegendre zrule{32, 0.0, 1.0};
    std::vector<Vec3c> data;      ///< index (ix*M + iy)*nz + iz

    GridField(int m, int nz) : M(m), zrule(nz, 0.0, 1.0), data(std::size_t(m) * m * nz) {}
    [[nodiscard]] int nz() const { return int(zrule.x.size()); }
    [[nodiscard]] double x(int i) const { return 2 * pi * i / M; }
    Vec3c& at(int ix, int iy, int iz) { return data[(std::size_t(ix) * M + iy) * nz() + iz]; }
    [[nodiscard]] const Vec3c& at(int ix, int iy, int iz) const { return data[(std::size_t(ix) * M + iy) * nz() + iz]; }

    template <class F>
    static GridField sample(int m, int nz, F&& f) {
        GridField g(m, nz);
        for (int ix = 0; ix < m; ++ix)
            for (int iy = 0; iy < m; ++iy)
                for (int iz = 0; iz < nz; ++iz) g.at(ix, iy, iz) = f(g.x(ix), g.x(iy), g.zrule.x[iz]);
        return g;
    }
};

/** @brief Horizontal resolution required to integrate the product of two modes exactly. */
inline bool grid_resolves(const GridField& g, const ModeIndex& k) {
    const int kmax = std::max(std::abs(k.k1), std::abs(k.k2));
    // at least four points per oscillation horizontally and vertically
    return g.M >= 4 * std::max(kmax, 1) && g.nz() >= 4 * std::max(std::abs(k.k3), 1);
}

/** @brief Orthogonal projection onto the span of the requested modes, by quadrature. */
inline SpectralField project_V0(const GridField& g, const std::vector<ModeIndex>& modes) {
    SpectralField out;
    const double dA = (2 * pi / g.M) * (2 * pi / g.M);
    for (const auto& k : modes) {
        if (k.is_zero()) throw DomainError("project_V0: zero mode requested");
        if (!grid_resolves(g, k)) throw DomainError("project_V0: grid under-resolves requested mode");
        std::vector<Vec3c> prof(g.nz());
        for (int iz = 0; iz < g.nz(); ++iz) prof[iz] = basis_profile(k, g.zrule.x[iz]);
        cplx s{};
        for (int ix = 0; ix < g.M; ++ix)
            for (int iy = 0; iy < g.M; ++iy) {
                const cplx ph = std::exp(-I * (k.k1 * g.x(ix) + k.k2 * g.x(iy)));
                cplx col{};
                for (int iz = 0; iz < g.nz(); ++iz) col += g.zrule.w[iz] * dot(prof[iz], g.at(ix, iy, iz));
                s += ph * col;
            }
        out.coeffs[k] = s * dA;
    }
    return out;
}

/** @brief Factorised tensor quadrature of <N_l, F(N_k)>: periodic trapezoid sum in x_h times Gauss-Legendre in z. */
inline cplx tensor_pair(const ModeIndex& l, const ModeIndex& k, const std::function<Vec3c(const Vec3c&)>& op, int M = 16,
                        int nz = 48) {
    cplx hsum{};
    for (int ix = 0; ix < M; ++ix)
        for (int iy = 0; iy < M; ++iy) {
            const double x1 = 2 * pi * ix / M, x2 = 2 * pi * iy / M;
            hsum += std::exp(I * double((k.k1 - l.k1) * x1 + (k.k2 - l.k2) * x2));
        }
    hsum *= (2 * pi / M) * (2 * pi / M);
    if (std::abs(hsum) < 1e-13) return {};
    GaussLegendre g(nz, 0.0, 1.0);
    cplx zs{};
    for (int i = 0; i < nz; ++i) zs += g.w[i] * dot(basis_profile(l, g.x[i]), op(basis_profile(k, g.x[i])));
    return hsum * zs;
}

/** @brief Enumerate nonzero modes with Euclidean norm at most r, lexicographically. */
inline std::vector<ModeIndex> modes_in_ball(double r) {
    std::vector<ModeIndex> out;
    const int R = int(std::floor(r));
    for (int a = -R; a <= R; ++a)
        for (int b = -R; b <= R; ++b)
            for (int c = -R; c <= R; ++c) {
                ModeIndex k{a, b, c};
                if (!k.is_zero() && k.norm() <= r + 1e-12) out.push_back(k);
            }
    return out;
}

}  // namespace rotek

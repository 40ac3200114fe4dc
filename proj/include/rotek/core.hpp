#pragma once
/** @file core.hpp
 *  @brief Shared scalar types, mode indices, parameters and small numerical helpers.
 */

#include <array>
#include <cmath>
#include <complex>
#include <compare>
#include <numbers>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace rotek {

using cplx = std::complex<double>;
using Vec2c = std::array<cplx, 2>;
using Vec3c = std::array<cplx, 3>;

inline constexpr double pi = std::numbers::pi;
inline constexpr cplx I{0.0, 1.0};

/** @brief Raised when an operation's precondition is violated. */
struct DomainError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/** @brief Horizontal wavenumber pair. */
struct HMode {
    int k1 = 0;
    int k2 = 0;
    auto operator<=>(const HMode&) const = default;
    [[nodiscard]] bool is_zero() const { return k1 == 0 && k2 == 0; }
    [[nodiscard]] double norm() const { return std::hypot(double(k1), double(k2)); }
    [[nodiscard]] double norm2() const { return double(k1) * k1 + double(k2) * k2; }
};

/** @brief Three-dimensional wavenumber, ordered lexicographically. */
struct ModeIndex {
    int k1 = 0;
    int k2 = 0;
    int k3 = 0;
    auto operator<=>(const ModeIndex&) const = default;
    [[nodiscard]] HMode h() const { return {k1, k2}; }
    [[nodiscard]] bool is_zero() const { return k1 == 0 && k2 == 0 && k3 == 0; }
    /// Euclidean norm of the integer triple.
    [[nodiscard]] double norm() const { return std::sqrt(double(k1) * k1 + double(k2) * k2 + double(k3) * k3); }
    /// Norm with the vertical wavenumber scaled by pi, matching the cos/sin(pi k3 z) basis.
    [[nodiscard]] double norm_pi() const { return std::sqrt(h().norm2() + pi * pi * double(k3) * k3); }
};

/** @brief Physical and truncation parameters. */
struct Params {
    double epsilon = 1e-2;   ///< Rossby number
    double nu = 1e-2;        ///< vertical viscosity
    double beta = 1.0;       ///< stress amplitude
    int N = 4;               ///< horizontal cutoff
    std::set<double> M0{};   ///< forcing frequencies

    [[nodiscard]] double layer() const { return std::sqrt(epsilon * nu); }

    void validate() const {
        if (!(epsilon > 0 && epsilon <= 1)) throw DomainError("epsilon must lie in (0,1]");
        if (!(nu > 0 && nu <= 1)) throw DomainError("nu must lie in (0,1]");
        if (!(beta >= 0)) throw DomainError("beta must be nonnegative");
        if (N < 1) throw DomainError("horizontal cutoff N must be >= 1");
    }
};

inline double norm2(const Vec2c& v) { return std::norm(v[0]) + std::norm(v[1]); }
inline double norm2(const Vec3c& v) { return std::norm(v[0]) + std::norm(v[1]) + std::norm(v[2]); }
inline double abs(const Vec2c& v) { return std::sqrt(norm2(v)); }
inline double abs(const Vec3c& v) { return std::sqrt(norm2(v)); }

inline Vec3c operator+(const Vec3c& a, const Vec3c& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3c operator-(const Vec3c& a, const Vec3c& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3c operator*(cplx s, const Vec3c& a) { return {s * a[0], s * a[1], s * a[2]}; }
inline Vec3c& operator+=(Vec3c& a, const Vec3c& b) {
    a[0] += b[0];
    a[1] += b[1];
    a[2] += b[2];
    return a;
}
inline Vec2c operator+(const Vec2c& a, const Vec2c& b) { return {a[0] + b[0], a[1] + b[1]}; }
inline Vec2c operator-(const Vec2c& a, const Vec2c& b) { return {a[0] - b[0], a[1] - b[1]}; }
inline Vec2c operator*(cplx s, const Vec2c& a) { return {s * a[0], s * a[1]}; }
inline Vec2c& operator+=(Vec2c& a, const Vec2c& b) {
    a[0] += b[0];
    a[1] += b[1];
    return a;
}

/// Hermitian pairing conj(a).b on C^2.
inline cplx dot(const Vec2c& a, const Vec2c& b) { return std::conj(a[0]) * b[0] + std::conj(a[1]) * b[1]; }
inline cplx dot(const Vec3c& a, const Vec3c& b) {
    return std::conj(a[0]) * b[0] + std::conj(a[1]) * b[1] + std::conj(a[2]) * b[2];
}

inline int sign(int v) { return (v > 0) - (v < 0); }

/** @brief Gauss-Legendre nodes and weights on [a,b] (Golub-Welsch free Newton iteration). */
struct GaussLegendre {
    std::vector<double> x, w;
    GaussLegendre(int n, double a, double b) : x(n), w(n) {
        for (int i = 0; i < n; ++i) {
            double t = std::cos(pi * (i + 0.75) / (n + 0.5));
            for (int it = 0; it < 100; ++it) {
                double p0 = 1.0, p1 = t;
                for (int k = 2; k <= n; ++k) {
                    double p2 = ((2.0 * k - 1.0) * t * p1 - (k - 1.0) * p0) / k;
                    p0 = p1;
                    p1 = p2;
                }
                double dp = n * (t * p1 - p0) / (t * t - 1.0);
                double dt = p1 / dp;
                t -= dt;
                if (std::abs(dt) < 1e-16) break;
            }
            double p0 = 1.0, p1 = t;
            for (int k = 2; k <= n; ++k) {
                double p2 = ((2.0 * k - 1.0) * t * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            double dp = n * (t * p1 - p0) / (t * t - 1.0);
            x[i] = 0.5 * (a + b) - 0.5 * (b - a) * t;
            w[i] = (b - a) / ((1.0 - t * t) * dp * dp);
        }
    }
};

/**
 * @brief Composite Gauss-Legendre rule on [0,1] with panels packed geometrically toward both walls.
 *
 * Resolves layers down to thickness `finest` without knowing their location in advance.
 */
inline GaussLegendre wall_graded_rule(double finest = 1e-12, int per_decade = 4, int order = 8) {
    std::vector<double> brk{0.0};
    double lo = std::log10(finest);
    int n = int(std::ceil((std::log10(0.25) - lo) * per_decade));
    for (int i = 0; i <= n; ++i) brk.push_back(std::pow(10.0, lo + (std::log10(0.25) - lo) * i / n));
    brk.push_back(0.5);
    std::vector<double> all = brk;
    for (auto it = brk.rbegin() + 1; it != brk.rend(); ++it) all.push_back(1.0 - *it);
    GaussLegendre out(0, 0, 1);
    for (std::size_t p = 0; p + 1 < all.size(); ++p) {
        GaussLegendre g(order, all[p], all[p + 1]);
        out.x.insert(out.x.end(), g.x.begin(), g.x.end());
        out.w.insert(out.w.end(), g.w.begin(), g.w.end());
    }
    return out;
}

}  // namespace rotek

#pragma once
/** @file boundary_layers.hpp
 *  @brief Stationary Ekman-type layers, quasi-resonant layers and resonant self-similar layers
 *         for prescribed horizontal boundary data at the bottom (Dirichlet) and top (stress) walls.
 */

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <functional>
#include <optional>
#include <sstream>

#include "core.hpp"

namespace rotek {

using Mat2c = std::array<std::array<cplx, 2>, 2>;

inline cplx det(const Mat2c& a) { return a[0][0] * a[1][1] - a[0][1] * a[1][0]; }
inline double frob(const Mat2c& a) {
    return std::sqrt(std::norm(a[0][0]) + std::norm(a[0][1]) + std::norm(a[1][0]) + std::norm(a[1][1]));
}

/** @brief Thrown when two candidate roots are equally plausible for one decay rate. */
struct RootAmbiguity : std::runtime_error {
    std::vector<cplx> candidates;
    RootAmbiguity(const std::string& m, std::vector<cplx> c) : std::runtime_error(m), candidates(std::move(c)) {}
};

/** @brief Thrown when lambda^2 sits on the pole eps*nu*|k_h|^2 of the layer matrix. */
struct PoleError : DomainError {
    using DomainError::DomainError;
};

/** @brief Layer matrix whose kernel gives admissible horizontal amplitudes for decay rate lambda. */
inline Mat2c a_lambda_matrix(cplx lam, double mu, const HMode& kh, const Params& p) {
    const double en = p.epsilon * p.nu;
    const double k1 = kh.k1, k2 = kh.k2, kk = kh.norm2();
    const cplx s = lam * lam;
    const cplx D = s - en * kk;
    const cplx base = I * mu - s + p.epsilon * kk;
    if (kk == 0.0) return {{{base, -1.0}, {1.0, base}}};
    if (std::abs(D) <= 1e-300 || std::abs(D) < 1e-14 * std::max(std::abs(s), en * kk))
        throw PoleError("a_lambda_matrix: lambda^2 coincides with eps*nu*|k_h|^2");
    return {{{base + en * k1 * k2 / D, -1.0 - en * k1 * k1 / D}, {1.0 + en * k2 * k2 / D, base - en * k1 * k2 / D}}};
}

/**
 * @brief Monic cubic in s = lambda^2 obtained by clearing the pole of det A_lambda:
 *        (s - q)[(b - s)^2 + 1] + q = 0 with b = i mu + eps|k_h|^2, q = eps nu |k_h|^2.
 *        Returns coefficients {c0, c1, c2} of s^3 + c2 s^2 + c1 s + c0.
 */
inline std::array<cplx, 3> cleared_cubic(double mu, const HMode& kh, const Params& p) {
    const cplx b = I * mu + p.epsilon * kh.norm2();
    const double q = p.epsilon * p.nu * kh.norm2();
    return {-q * b * b, b * b + 1.0 + 2.0 * b * q, -(2.0 * b + q)};
}

/** @brief All three roots of the cleared cubic, from companion-matrix eigenvalues polished by Newton steps. */
inline std::array<cplx, 3> cubic_roots(const std::array<cplx, 3>& c) {
    Eigen::Matrix3cd C = Eigen::Matrix3cd::Zero();
    C(1, 0) = 1.0;
    C(2, 1) = 1.0;
    C(0, 2) = -c[0];
    C(1, 2) = -c[1];
    C(2, 2) = -c[2];
    Eigen::ComplexEigenSolver<Eigen::Matrix3cd> es(C, false);
    std::array<cplx, 3> r;
    for (int i = 0; i < 3; ++i) {
        cplx s = es.eigenvalues()(i);
        for (int it = 0; it < 4; ++it) {
            const cplx f = ((s + c[2]) * s + c[1]) * s + c[0];
            const cplx df = (3.0 * s + 2.0 * c[2]) * s + c[1];
            if (std::abs(df) == 0.0) break;
            const cplx ds = f / df;
            if (!std::isfinite(ds.real()) || !std::isfinite(ds.imag())) break;
            s -= ds;
            if (std::abs(ds) <= 1e-17 * std::max(1.0, std::abs(s))) break;
        }
        r[i] = s;
    }
    return r;
}

inline cplx branch_sqrt(cplx s) {
    cplx r = std::sqrt(s);
    if (r.real() < 0) r = -r;
    return r;
}

/** @brief Pair of decay rates (per unit of z/sqrt(eps nu)) used by the layer construction. */
struct DecayRates {
    cplx lambda_minus{};
    cplx lambda_plus{};
    bool degenerate_zero = false;      ///< resonant k_h = 0, |mu| = 1: one rate vanishes
    cplx discarded_s{};                ///< third root of the cubic in lambda^2 (diagnostic only)
    int quasi_branch_sign = 0;         ///< sign of Re(lambda^2) realised by the anomalously small rate, if any
    [[nodiscard]] cplx rate(int sigma) const { return sigma < 0 ? lambda_minus : lambda_plus; }
};

inline bool is_unit(double mu) { return std::abs(std::abs(mu) - 1.0) < 1e-12; }

/**
 * @brief Decay rates lambda^-, lambda^+ continuing lambda^2 = i(mu+1), i(mu-1).
 *
 * For k_h != 0 the root of the cleared cubic closest to the pole eps nu |k_h|^2 is the
 * pressure-like root and is discarded; the remaining two are matched to the targets.
 */
inline DecayRates decay_rates(double mu, const HMode& kh, const Params& p) {
    DecayRates out;
    if (kh.is_zero()) {
        const cplx sm = I * (mu + 1.0), sp = I * (mu - 1.0);
        out.lambda_minus = branch_sqrt(sm);
        out.lambda_plus = branch_sqrt(sp);
        out.discarded_s = 0.0;
        if (is_unit(mu)) {
            out.degenerate_zero = true;
            if (mu > 0) out.lambda_plus = 0.0;
            else out.lambda_minus = 0.0;
        }
        return out;
    }
    auto r = cubic_roots(cleared_cubic(mu, kh, p));
    const double pole = p.epsilon * p.nu * kh.norm2();
    std::array<double, 3> d;
    for (int i = 0; i < 3; ++i) d[i] = std::abs(r[i] - pole);
    std::array<int, 3> idx{0, 1, 2};
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return d[a] < d[b]; });
    if (std::abs(d[idx[1]] - d[idx[0]]) <= 1e-9 * std::max(d[idx[1]], 1e-300))
        throw RootAmbiguity("decay_rates: two roots equidistant from the pole", {r[idx[0]], r[idx[1]]});
    out.discarded_s = r[idx[0]];
    const cplx a = r[idx[1]], b = r[idx[2]];
    const cplx tm = I * (mu + 1.0), tp = I * (mu - 1.0);
    const double cost_ab = std::abs(a - tm) + std::abs(b - tp);
    const double cost_ba = std::abs(b - tm) + std::abs(a - tp);
    if (std::abs(cost_ab - cost_ba) <= 1e-9 * std::max(cost_ab, cost_ba))
        throw RootAmbiguity("decay_rates: assignment to leading-order targets is ambiguous", {a, b});
    const cplx sm = cost_ab < cost_ba ? a : b;
    const cplx sp = cost_ab < cost_ba ? b : a;
    out.lambda_minus = branch_sqrt(sm);
    out.lambda_plus = branch_sqrt(sp);
    if (is_unit(mu)) out.quasi_branch_sign = ((mu > 0 ? sp : sm).real() >= 0) ? 1 : -1;
    return out;
}

/** @brief Null vector of the layer matrix. */
struct KernelVector {
    Vec2c w{1.0, 0.0};
    bool second_normalized = false;  ///< first component vanished; normalised on the second instead
};

inline KernelVector kernel_vector(cplx lam, double mu, const HMode& kh, const Params& p) {
    const Mat2c A = a_lambda_matrix(lam, mu, kh, p);
    const double scale = std::max(frob(A) * frob(A), 1e-300);
    if (std::abs(det(A)) > 1e-8 * scale) throw DomainError("kernel_vector: lambda is not a root of det A_lambda");
    const double n0 = std::norm(A[0][0]) + std::norm(A[0][1]);
    const double n1 = std::norm(A[1][0]) + std::norm(A[1][1]);
    const auto& row = n0 >= n1 ? A[0] : A[1];
    // null vector of a single row (a b): (-b, a)
    Vec2c v{-row[1], row[0]};
    KernelVector out;
    if (std::abs(v[0]) > 1e-12 * std::abs(v[1])) {
        out.w = {1.0, v[1] / v[0]};
    } else {
        out.w = {0.0, 1.0};
        out.second_normalized = true;
    }
    return out;
}

/** @brief Columns w_{lambda^-}, w_{lambda^+} of the transition matrix and its inverse. */
struct Transition {
    Vec2c wm, wp;
    cplx detP;
    [[nodiscard]] Vec2c solve(const Vec2c& d) const {
        // P = [wm wp]
        return {(wp[1] * d[0] - wp[0] * d[1]) / detP, (-wm[1] * d[0] + wm[0] * d[1]) / detP};
    }
};

inline Transition transition_matrix(double mu, const HMode& kh, const Params& p, const DecayRates& r) {
    Transition t;
    if (kh.is_zero()) {
        // the k_h = 0 kernel is exact: (1,-i) for lambda^-, (1,i) for lambda^+
        t.wm = {1.0, -I};
        t.wp = {1.0, I};
    } else {
        t.wm = kernel_vector(r.lambda_minus, mu, kh, p).w;
        t.wp = kernel_vector(r.lambda_plus, mu, kh, p).w;
    }
    t.detP = t.wm[0] * t.wp[1] - t.wp[0] * t.wm[1];
    if (std::abs(t.detP) < 1e-6) throw DomainError("transition_matrix: kernel vectors are nearly collinear");
    return t;
}

/** @brief Coefficients (alpha^-, alpha^+) expanding delta_hat on the kernel vectors. */
inline std::pair<cplx, cplx> transition_coeffs(const Vec2c& delta_hat, double mu, const HMode& kh, const Params& p) {
    const DecayRates r = decay_rates(mu, kh, p);
    const Vec2c a = transition_matrix(mu, kh, p, r).solve(delta_hat);
    return {a[0], a[1]};
}

/** @brief Slow-time amplitude multiplying a boundary datum: amp * exp(-rate t), or an arbitrary function. */
struct Envelope {
    cplx amp{1.0};
    cplx rate{0.0};
    std::function<cplx(double)> f;
    std::function<cplx(double)> df;
    [[nodiscard]] bool is_exponential() const { return !f; }
    [[nodiscard]] cplx operator()(double t) const { return f ? f(t) : amp * std::exp(-rate * t); }
    [[nodiscard]] cplx deriv(double t) const {
        if (f) return df ? df(t) : cplx(0.0);
        return -rate * amp * std::exp(-rate * t);
    }
    static Envelope exponential(cplx a, cplx r) { return {a, r, {}, {}}; }
    /// Product of two exponential envelopes.
    [[nodiscard]] Envelope times(const Envelope& o) const {
        if (!is_exponential() || !o.is_exponential()) {
            auto a = *this, b = o;
            return {1.0, 0.0, [a, b](double t) { return a(t) * b(t); },
                    [a, b](double t) { return a.deriv(t) * b(t) + a(t) * b.deriv(t); }};
        }
        return exponential(amp * o.amp, rate + o.rate);
    }
};

enum class LayerKind { classical, quasi_resonant, resonant };

inline const char* to_string(LayerKind k) {
    switch (k) {
        case LayerKind::classical: return "classical";
        case LayerKind::quasi_resonant: return "quasi_resonant";
        default: return "resonant";
    }
}

/** @brief One exponentially decaying layer mode alpha * W^j_lambda with its slow envelope. */
struct ModeProfile {
    double mu = 0;
    HMode kh{};
    int side = 0;         ///< 0 bottom, 1 top
    int sigma = -1;       ///< which decay rate: -1 or +1
    cplx lambda{};
    Vec2c w{};
    cplx alpha{};
    LayerKind kind = LayerKind::classical;
    Envelope env{};

    /// Amplitude vector at the wall-normal origin, without exp factors.
    [[nodiscard]] Vec3c amplitude(const Params& p) const {
        const double d = p.layer();
        const cplx s = I * (double(kh.k1) * w[0] + double(kh.k2) * w[1]);
        if (side == 0) return {w[0], w[1], d / lambda * s};
        return {d / lambda * w[0], d / lambda * w[1], -(d * d) / (lambda * lambda) * s};
    }
    [[nodiscard]] cplx decay(double z, const Params& p) const {
        const double zeta = side == 0 ? z : 1.0 - z;
        return std::exp(-lambda * zeta / p.layer());
    }
    [[nodiscard]] cplx phase(double t, const Params& p) const { return std::exp(I * mu * t / p.epsilon); }
    /// Horizontal Fourier coefficient at (t, z).
    [[nodiscard]] Vec3c coeff(double t, double z, const Params& p) const {
        return (alpha * env(t) * phase(t, p) * decay(z, p)) * amplitude(p);
    }
    [[nodiscard]] Vec3c coeff_dz(double t, double z, const Params& p) const {
        const cplx f = (side == 0 ? -lambda : lambda) / p.layer();
        return (f * alpha * env(t) * phase(t, p) * decay(z, p)) * amplitude(p);
    }
    /// Companion pressure making the mode an exact solution when the envelope is constant.
    [[nodiscard]] cplx pressure(double t, double z, const Params& p) const {
        const double d = p.layer();
        const cplx s = I * (double(kh.k1) * w[0] + double(kh.k2) * w[1]);
        const cplx a = I * mu + p.epsilon * kh.norm2() - lambda * lambda;
        const cplx P = side == 0 ? a * s * p.nu / (lambda * lambda) : a * s * p.nu * d / (lambda * lambda * lambda);
        return alpha * env(t) * phase(t, p) * decay(z, p) * P;
    }
};

/** @brief ierfc(x) = exp(-x^2)/sqrt(pi) - x erfc(x), with an asymptotic tail for large x. */
inline double ierfc(double x) {
    if (x < 6.0) return std::exp(-x * x) / std::sqrt(pi) - x * std::erfc(x);
    // exp(-x^2)/sqrt(pi) * sum_{n>=1} (-1)^{n+1} (2n-1)!! / (2^n x^{2n})
    const double x2 = x * x;
    double term = 1.0 / (2.0 * x2), sum = term;
    for (int n = 2; n < 30; ++n) {
        term *= -(2.0 * n - 1.0) / (2.0 * x2);
        sum += term;
        if (std::abs(term) < 1e-18 * std::abs(sum)) break;
    }
    return std::exp(-x2) / std::sqrt(pi) * sum;
}

/**
 * @brief Self-similar heat profile for a unit resonant datum.
 *
 * side 0: value 1 at z = 0, erfc(z / 2 sqrt(nu t)).
 * side 1: unit z-derivative at z = 1, 2 sqrt(nu t) ierfc((1-z) / 2 sqrt(nu t)).
 * At t = 0 the sharp-interface limit is returned.
 */
inline double resonant_shape(int side, double nu, double t, double z) {
    if (t <= 0) return (side == 0 && z == 0.0) ? 1.0 : 0.0;
    const double s = 2.0 * std::sqrt(nu * t);
    if (side == 0) return std::erfc(z / s);
    return s * ierfc((1.0 - z) / s);
}

inline double resonant_shape_dz(int side, double nu, double t, double z) {
    if (t <= 0) return 0.0;
    const double s = 2.0 * std::sqrt(nu * t);
    if (side == 0) return -2.0 / std::sqrt(pi) * std::exp(-(z / s) * (z / s)) / s;
    return std::erfc((1.0 - z) / s);
}

/**
 * @brief Finite-depth variant for a bottom datum: value 1 at z = 0, zero flux at z = 1, zero initial data,
 *        built from images of the erfc profile.
 */
inline double resonant_shape_finite_depth(double nu, double t, double z, double* dz = nullptr) {
    if (t <= 0) {
        if (dz) *dz = 0;
        return z == 0.0 ? 1.0 : 0.0;
    }
    const double s = 2.0 * std::sqrt(nu * t);
    double v = 0, d = 0;
    for (int n = 0; n < 200; ++n) {
        const double a = (z + 2.0 * n) / s, b = (2.0 * n + 2.0 - z) / s;
        const double sg = (n % 2 == 0) ? 1.0 : -1.0;
        const double tv = std::erfc(a) + std::erfc(b);
        v += sg * tv;
        d += sg * (-2.0 / std::sqrt(pi)) * (std::exp(-a * a) - std::exp(-b * b)) / s;
        if (std::abs(tv) < 1e-18 && n > 0) break;
    }
    if (dz) *dz = d;
    return v;
}

/** @brief Resonant (k_h = 0, |mu| = 1) layer: amplitude direction times a heat profile. */
struct ResonantProfile {
    double mu = 1;
    int side = 0;
    Vec2c amp{};          ///< delta_res, parallel to (1, i mu)
    Envelope env{};
    bool finite_depth = false;

    [[nodiscard]] double shape(double t, double z, double nu) const {
        if (finite_depth) return resonant_shape_finite_depth(nu, t, z);
        return resonant_shape(side, nu, t, z);
    }
    [[nodiscard]] double shape_dz(double t, double z, double nu) const {
        if (finite_depth) {
            double d;
            resonant_shape_finite_depth(nu, t, z, &d);
            return d;
        }
        return resonant_shape_dz(side, nu, t, z);
    }
    [[nodiscard]] Vec3c coeff(double t, double z, const Params& p) const {
        const cplx f = env(t) * std::exp(I * mu * t / p.epsilon) * shape(t, z, p.nu);
        return {f * amp[0], f * amp[1], 0.0};
    }
    [[nodiscard]] Vec3c coeff_dz(double t, double z, const Params& p) const {
        const cplx f = env(t) * std::exp(I * mu * t / p.epsilon) * shape_dz(t, z, p.nu);
        return {f * amp[0], f * amp[1], 0.0};
    }
};

/** @brief One entry of a boundary trace table. */
struct TraceEntry {
    double mu = 0;
    HMode kh{};
    Vec2c delta{};
    Envelope env{};
};

/** @brief Horizontal boundary data at one wall, as a finite frequency/wavenumber table. */
struct BoundaryTrace {
    int side = 0;
    std::vector<TraceEntry> entries;

    BoundaryTrace() = default;
    explicit BoundaryTrace(int s) : side(s) {}
    BoundaryTrace& add(double mu, HMode kh, Vec2c d, Envelope env = {}) {
        entries.push_back({mu, kh, d, std::move(env)});
        return *this;
    }
    /// sqrt of the sum of squared amplitudes (envelopes evaluated at t).
    [[nodiscard]] double norm(double t = 0) const {
        double s = 0;
        for (const auto& e : entries) s += norm2(e.delta) * std::norm(e.env(t));
        return std::sqrt(s);
    }
};

/** @brief Resonant part of a datum at frequency mu = +-1: half its pairing with (1, i mu) along (1, i mu). */
inline Vec2c resonant_component(double mu, const Vec2c& d) {
    const Vec2c e{1.0, I * (mu > 0 ? 1.0 : -1.0)};
    return (0.5 * dot(e, d)) * e;
}

/** @brief Output of the layer operator: classical, quasi-resonant and resonant parts. */
struct BoundaryLayerSolution {
    Params params;
    std::vector<ModeProfile> classical;
    std::vector<ModeProfile> quasi_resonant;
    std::vector<ResonantProfile> resonant;

    [[nodiscard]] std::set<HMode> hmodes() const {
        std::set<HMode> s;
        for (const auto& m : classical) s.insert(m.kh);
        for (const auto& m : quasi_resonant) s.insert(m.kh);
        if (!resonant.empty()) s.insert(HMode{0, 0});
        return s;
    }
    /// Horizontal Fourier coefficient at (t,z); `parts` bitmask: 1 classical, 2 quasi, 4 resonant.
    [[nodiscard]] Vec3c coeff(const HMode& kh, double t, double z, int parts = 7, int side_mask = 3) const {
        Vec3c out{};
        if (parts & 1)
            for (const auto& m : classical)
                if (m.kh == kh && (side_mask >> m.side & 1)) out += m.coeff(t, z, params);
        if (parts & 2)
            for (const auto& m : quasi_resonant)
                if (m.kh == kh && (side_mask >> m.side & 1)) out += m.coeff(t, z, params);
        if ((parts & 4) && kh.is_zero())
            for (const auto& r : resonant)
                if (side_mask >> r.side & 1) out += r.coeff(t, z, params);
        return out;
    }
    [[nodiscard]] Vec3c coeff_dz(const HMode& kh, double t, double z, int parts = 7, int side_mask = 3) const {
        Vec3c out{};
        if (parts & 1)
            for (const auto& m : classical)
                if (m.kh == kh && (side_mask >> m.side & 1)) out += m.coeff_dz(t, z, params);
        if (parts & 2)
            for (const auto& m : quasi_resonant)
                if (m.kh == kh && (side_mask >> m.side & 1)) out += m.coeff_dz(t, z, params);
        if ((parts & 4) && kh.is_zero())
            for (const auto& r : resonant)
                if (side_mask >> r.side & 1) out += r.coeff_dz(t, z, params);
        return out;
    }
    [[nodiscard]] Vec3c evaluate(double t, double x1, double x2, double z, int parts = 7) const {
        Vec3c out{};
        for (const auto& kh : hmodes()) out += std::exp(I * (kh.k1 * x1 + kh.k2 * x2)) * coeff(kh, t, z, parts);
        return out;
    }
};

namespace detail {
/// int_0^1 exp(-a zeta) dzeta, stable for small and large a.
inline cplx int_exp(cplx a) {
    if (std::abs(a) < 1e-8) return 1.0 - a / 2.0;
    return (1.0 - std::exp(-a)) / a;
}
}  // namespace detail

/**
 * @brief Exact L^2(omega) norm at time t of a set of layer modes, restricted to components in `comp_mask`
 *        (bit 0,1 horizontal, bit 2 vertical). Uses the closed-form Gram matrix of the exponentials.
 */
inline double layer_l2(const std::vector<ModeProfile>& ms, double t, const Params& p, int comp_mask = 3) {
    const double d = p.layer();
    double total = 0;
    std::set<HMode> khs;
    for (const auto& m : ms) khs.insert(m.kh);
    for (const auto& kh : khs) {
        std::vector<const ModeProfile*> sel;
        for (const auto& m : ms)
            if (m.kh == kh) sel.push_back(&m);
        cplx acc{};
        for (auto* a : sel)
            for (auto* b : sel) {
                Vec3c va = (a->alpha * a->env(t) * a->phase(t, p)) * a->amplitude(p);
                Vec3c vb = (b->alpha * b->env(t) * b->phase(t, p)) * b->amplitude(p);
                cplx g{};
                for (int c = 0; c < 3; ++c)
                    if (comp_mask >> c & 1) g += std::conj(va[c]) * vb[c];
                if (g == 0.0) continue;
                const cplx la = std::conj(a->lambda) / d, lb = b->lambda / d;
                cplx integral;
                if (a->side == b->side) {
                    integral = detail::int_exp(la + lb);
                } else {
                    // int_0^1 exp(-la z) exp(-lb (1-z)) dz with roles fixed by sides
                    const cplx l0 = a->side == 0 ? la : lb, l1 = a->side == 0 ? lb : la;
                    integral = std::exp(-l1) * detail::int_exp(l0 - l1);
                }
                acc += g * integral;
            }
        total += std::max(acc.real(), 0.0);
    }
    return 2 * pi * std::sqrt(total);
}

/** @brief L^2(omega) norm of resonant profiles at time t (horizontal components only; the vertical one vanishes). */
inline double resonant_l2(const std::vector<ResonantProfile>& rs, double t, const Params& p, double z0 = 0.0,
                          double z1 = 1.0) {
    if (rs.empty()) return 0.0;
    auto rule = wall_graded_rule(1e-10, 3, 8);
    double acc = 0;
    for (std::size_t i = 0; i < rule.x.size(); ++i) {
        const double z = z0 + (z1 - z0) * rule.x[i];
        Vec3c v{};
        for (const auto& r : rs) v += r.coeff(t, z, p);
        acc += (z1 - z0) * rule.w[i] * norm2(v);
    }
    return 2 * pi * std::sqrt(acc);
}

/** @brief Apply the layer operator to bottom data delta0 and top data delta1. */
inline BoundaryLayerSolution build_B(const BoundaryTrace& delta0, const BoundaryTrace& delta1, const Params& p) {
    if (delta0.side != 0 || delta1.side != 1) throw DomainError("build_B: traces must be (bottom, top)");
    BoundaryLayerSolution sol;
    sol.params = p;
    for (const BoundaryTrace* tr : {&delta0, &delta1}) {
        for (const auto& e : tr->entries) {
            if (e.kh.norm() > p.N + 1e-12) throw DomainError("build_B: horizontal mode exceeds cutoff N");
            Vec2c d = e.delta;
            const bool res = e.kh.is_zero() && is_unit(e.mu);
            if (res) {
                const Vec2c dr = resonant_component(e.mu, d);
                if (abs(dr) > 0) sol.resonant.push_back({e.mu > 0 ? 1.0 : -1.0, tr->side, dr, e.env, false});
                d = d - dr;
            }
            if (abs(d) == 0.0) continue;
            const DecayRates r = decay_rates(e.mu, e.kh, p);
            const Transition P = transition_matrix(e.mu, e.kh, p, r);
            const Vec2c alpha = P.solve(d);
            for (int sigma : {-1, 1}) {
                const cplx a = sigma < 0 ? alpha[0] : alpha[1];
                if (res && sigma * e.mu > 0) {
                    // the resonant direction was removed; its coefficient is zero up to rounding
                    continue;
                }
                if (a == 0.0) continue;
                ModeProfile m;
                m.mu = e.mu;
                m.kh = e.kh;
                m.side = tr->side;
                m.sigma = sigma;
                m.lambda = r.rate(sigma);
                m.w = sigma < 0 ? P.wm : P.wp;
                m.alpha = a;
                m.env = e.env;
                m.kind = (is_unit(e.mu) && sigma * e.mu > 0) ? LayerKind::quasi_resonant : LayerKind::classical;
                (m.kind == LayerKind::classical ? sol.classical : sol.quasi_resonant).push_back(m);
            }
        }
    }
    return sol;
}

/** @brief Opposite-wall traces of each layer part, in L^2(omega_h). */
struct TraceResiduals {
    double classical_bottom_at_top_h = 0, classical_bottom_at_top_3 = 0;
    double classical_top_at_bottom_h = 0, classical_top_at_bottom_3 = 0;
    double quasi_bottom_at_top_h = 0, quasi_bottom_at_top_3 = 0;
    double quasi_top_at_bottom_h = 0, quasi_top_at_bottom_3 = 0;
    double resonant_bottom_at_top = 0, resonant_top_at_bottom = 0;
    [[nodiscard]] double max() const {
        return std::max({classical_bottom_at_top_h, classical_bottom_at_top_3, classical_top_at_bottom_h,
                         classical_top_at_bottom_3, quasi_bottom_at_top_h, quasi_bottom_at_top_3,
                         quasi_top_at_bottom_h, quasi_top_at_bottom_3, resonant_bottom_at_top,
                         resonant_top_at_bottom});
    }
};

inline TraceResiduals trace_residuals(const BoundaryLayerSolution& sol, double t) {
    TraceResiduals r;
    auto wall = [&](int parts, int side_mask, double z, int comp) {
        double s = 0;
        for (const auto& kh : sol.hmodes()) {
            Vec3c v = sol.coeff(kh, t, z, parts, side_mask);
            s += comp == 2 ? std::norm(v[2]) : std::norm(v[0]) + std::norm(v[1]);
        }
        return 2 * pi * std::sqrt(s);
    };
    r.classical_bottom_at_top_h = wall(1, 1, 1.0, 0);
    r.classical_bottom_at_top_3 = wall(1, 1, 1.0, 2);
    r.classical_top_at_bottom_h = wall(1, 2, 0.0, 0);
    r.classical_top_at_bottom_3 = wall(1, 2, 0.0, 2);
    r.quasi_bottom_at_top_h = wall(2, 1, 1.0, 0);
    r.quasi_bottom_at_top_3 = wall(2, 1, 1.0, 2);
    r.quasi_top_at_bottom_h = wall(2, 2, 0.0, 0);
    r.quasi_top_at_bottom_3 = wall(2, 2, 0.0, 2);
    r.resonant_bottom_at_top = wall(4, 1, 1.0, 0);
    r.resonant_top_at_bottom = wall(4, 2, 0.0, 0);
    return r;
}

/** @brief Remove the inertial oscillation of a horizontally uniform slice. */
inline std::function<Vec3c(double, double)> filter_resonant(std::function<Vec3c(double, double)> u, double epsilon) {
    return [u = std::move(u), epsilon](double t, double z) {
        const Vec3c v = u(t, z);
        const Vec3c ep{1.0, I, 0.0}, em{1.0, -I, 0.0};
        const cplx cp = 0.5 * dot(ep, v) * std::exp(-I * t / epsilon);
        const cplx cm = 0.5 * dot(em, v) * std::exp(I * t / epsilon);
        return cp * ep + cm * em;
    };
}

}  // namespace rotek

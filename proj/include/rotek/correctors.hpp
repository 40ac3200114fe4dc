#pragma once
/** @file correctors.hpp
 *  @brief Interior lifts, small-divisor correctors, the stopping lift and assembly of approximate solutions.
 */

#include <map>
#include <memory>
#include <mutex>

#include "envelope.hpp"

namespace rotek {

// ---------------------------------------------------------------------------------------------
// Stopping lift

/** @brief Wall traces of a field at one instant: per horizontal mode, (h1, h2, vertical). */
using WallTrace = std::map<HMode, Vec3c>;

/** @brief Lift of one horizontal mode. */
struct LiftMode {
    Vec3c d0{}, d1{};  ///< bottom values (w_h, w_3); top (dz w_h, w_3)
    cplx phi{};
    HMode kh{};

    [[nodiscard]] cplx div_h(const Vec3c& v) const { return I * (double(kh.k1) * v[0] + double(kh.k2) * v[1]); }
    /// w(z), w'(z), w''(z)
    [[nodiscard]] std::array<Vec3c, 3> eval(double z) const {
        const double q = z * (1 - z) * (1 - z), q1 = 1 - 4 * z + 3 * z * z, q2 = -4 + 6 * z;
        const double Q = z * z / 2 - 2 * z * z * z / 3 + z * z * z * z / 4;  // int_0^z q
        const cplx g1 = I * double(kh.k1) * phi, g2 = I * double(kh.k2) * phi;
        const cplx lap = -kh.norm2() * phi;
        const cplx dv0 = div_h(d0), dv1 = div_h(d1);
        std::array<Vec3c, 3> out;
        out[0] = {d0[0] + d1[0] * z + g1 * q, d0[1] + d1[1] * z + g2 * q, d0[2] - (dv0 * z + dv1 * (z * z / 2) + lap * Q)};
        out[1] = {d1[0] + g1 * q1, d1[1] + g2 * q1, -(dv0 + dv1 * z + lap * q)};
        out[2] = {g1 * q2, g2 * q2, -(dv1 + lap * q1)};
        return out;
    }
};

/** @brief Divergence-free lift with prescribed bottom values and top (dz w_h, w_3). */
struct StoppingLift {
    std::map<HMode, LiftMode> modes;

    [[nodiscard]] Vec3c coeff(const HMode& kh, double z) const {
        auto it = modes.find(kh);
        return it == modes.end() ? Vec3c{} : it->second.eval(z)[0];
    }
    [[nodiscard]] Vec3c coeff_dz(const HMode& kh, double z) const {
        auto it = modes.find(kh);
        return it == modes.end() ? Vec3c{} : it->second.eval(z)[1];
    }
    /// ||w||_{H^2}^2 = 4 pi^2 sum int (1+|k|^2)^2 |w|^2 + (1+|k|^2)|w'|^2 + |w''|^2, exact for the polynomial profiles.
    [[nodiscard]] double h2_norm() const {
        GaussLegendre g(8, 0.0, 1.0);
        double acc = 0;
        for (const auto& [kh, m] : modes) {
            const double a = 1 + kh.norm2();
            for (std::size_t i = 0; i < g.x.size(); ++i) {
                auto e = m.eval(g.x[i]);
                acc += g.w[i] * (a * a * norm2(e[0]) + a * norm2(e[1]) + norm2(e[2]));
            }
        }
        return 2 * pi * std::sqrt(acc);
    }
};

inline LiftMode lift_mode(const HMode& kh, const Vec3c& d0, const Vec3c& d1, double tol = 1e-12) {
    LiftMode m{d0, d1, 0.0, kh};
    const cplx rhs = -m.div_h(d0) - 0.5 * m.div_h(d1) - d1[2] + d0[2];
    if (kh.is_zero()) {
        const double scale = std::max({1.0, std::abs(d0[2]), std::abs(d1[2])});
        if (std::abs(rhs) > tol * scale) throw DomainError("stopping_lift: mean vertical traces differ (compatibility)");
        m.phi = 0.0;
    } else {
        m.phi = -12.0 * rhs / kh.norm2();
    }
    return m;
}

inline StoppingLift stopping_lift(const WallTrace& d0, const WallTrace& d1, double tol = 1e-12) {
    StoppingLift w;
    std::set<HMode> ks;
    for (const auto& [k, v] : d0) ks.insert(k);
    for (const auto& [k, v] : d1) ks.insert(k);
    for (const auto& k : ks) {
        auto a = d0.count(k) ? d0.at(k) : Vec3c{};
        auto b = d1.count(k) ? d1.at(k) : Vec3c{};
        w.modes[k] = lift_mode(k, a, b, tol);
    }
    return w;
}

/** @brief Trace norm sqrt(4 pi^2 sum (1+|k_h|^2)^s |delta|^2). */
inline double trace_sobolev_norm(const WallTrace& d, double s) {
    double acc = 0;
    for (const auto& [k, v] : d) acc += std::pow(1 + k.norm2(), s) * norm2(v);
    return 2 * pi * std::sqrt(acc);
}

// ---------------------------------------------------------------------------------------------
// Interior lifts

/**
 * @brief Vertical-flux lift: v_3 = scale [a1 z + a0 (1-z)], v_h = scale grad_h Delta_h^{-1} (a0 - a1),
 *        one entry per (frequency, horizontal mode), each with a slow envelope.
 */
struct FluxLift {
    struct Entry {
        double mu = 0;
        HMode kh{};
        cplx a0{}, a1{};
        Envelope env{};
    };
    double scale = 1.0;
    std::vector<Entry> entries;

    /// Vertical profile of one entry, without time factors.
    [[nodiscard]] Vec3c shape(const Entry& e, double z) const {
        const cplx vh = -scale * (e.a0 - e.a1) / e.kh.norm2();
        return {I * double(e.kh.k1) * vh, I * double(e.kh.k2) * vh, scale * (e.a1 * z + e.a0 * (1 - z))};
    }
    [[nodiscard]] Vec3c shape_dz(const Entry& e) const { return {0.0, 0.0, scale * (e.a1 - e.a0)}; }
    [[nodiscard]] cplx time_factor(const Entry& e, double t, double epsilon) const {
        return e.env(t) * std::exp(I * e.mu * t / epsilon);
    }
    [[nodiscard]] Vec3c coeff(const HMode& kh, double t, double z, double epsilon) const {
        Vec3c out{};
        for (const auto& e : entries)
            if (e.kh == kh) out += time_factor(e, t, epsilon) * shape(e, z);
        return out;
    }
    [[nodiscard]] Vec3c coeff_dz(const HMode& kh, double t, double epsilon) const {
        Vec3c out{};
        for (const auto& e : entries)
            if (e.kh == kh) out += time_factor(e, t, epsilon) * shape_dz(e);
        return out;
    }
};

namespace detail {
inline void require_nonzero_mode(const HMode& kh, const cplx& a, const cplx& b, const char* who) {
    if (kh.is_zero() && (std::abs(a) > 0 || std::abs(b) > 0))
        throw DomainError(std::string(who) + ": horizontally uniform vertical trace cannot be lifted");
}
}  // namespace detail

/** @brief Interior lift realising the suction traces eps-nu-scaled: entries give (mu, k_h, delta0_3, delta1_3). */
inline FluxLift lift_interior_vint0(const std::vector<FluxLift::Entry>& traces, const Params& p) {
    FluxLift f;
    f.scale = p.layer();
    for (const auto& e : traces) {
        detail::require_nonzero_mode(e.kh, e.a0, e.a1, "lift_interior_vint0");
        if (!e.kh.is_zero()) f.entries.push_back(e);
    }
    return f;
}

/** @brief Lift restoring zero top flux for a top-layer vertical trace: v_3 = -trace z, v_h = grad Delta^{-1} trace. */
inline FluxLift lift_interior_vint1(const std::vector<std::tuple<double, HMode, cplx, Envelope>>& top_trace) {
    FluxLift f;
    f.scale = 1.0;
    for (const auto& [mu, kh, tr, env] : top_trace) {
        detail::require_nonzero_mode(kh, tr, 0.0, "lift_interior_vint1");
        if (!kh.is_zero()) f.entries.push_back({mu, kh, 0.0, -tr, env});
    }
    return f;
}

// ---------------------------------------------------------------------------------------------
// Scalar-product forms

/**
 * @brief Closed forms of <N_l | (i l1, i l2, |l_h|^2 z) e^{i l_h.x_h}> and <N_l | (-i l2, i l1, 0) e^{i l_h.x_h}>.
 */
inline std::pair<cplx, cplx> scalar_product_forms(const ModeIndex& l, Pairing pairing = Pairing::orthonormal) {
    if (l.is_zero()) throw DomainError("scalar_product_forms: l must be nonzero");
    const double f = pairing_factor(pairing);
    const double lh = l.h().norm();
    cplx first{}, second{};
    if (l.k3 != 0) {
        const double sgn = (l.k3 % 2 == 0) ? 1.0 : -1.0;
        // horizontally averaged pairing; the orthonormal one is 4 pi^2 larger
        first = I * std::pow(lh, 3) * sgn / (2 * pi * pi * l.norm_pi() * double(l.k3));
    } else {
        second = -lh / (2 * pi);
    }
    return {f * first, f * second};
}

// ---------------------------------------------------------------------------------------------
// Small-divisor corrector

/** @brief Source s0 exp(-c t) oscillating at exp(i(mu + lambda_l) t / eps) in the equation for mode l. */
struct SourceEntry {
    double mu = 0;
    ModeIndex l{};
    cplx s0{};
    cplx c{};
};

struct SourceTable {
    std::vector<SourceEntry> entries;
    void validate() const {
        for (const auto& e : entries)
            if (std::abs(e.mu + eigenvalue(e.l)) < 1e-12) throw DomainError("SourceTable: resonant entry mu = -lambda_l");
    }
};

enum class InitialChoice { special, zero };
enum class DuhamelMethod { closed_form, quadrature };

/** @brief Filtered amplitude of one source entry at time t. */
inline cplx corrector_entry(const SourceEntry& e, const Params& p, double t, InitialChoice ic, DuhamelMethod m) {
    const double lam = eigenvalue(e.l);
    const double om = (lam + e.mu) / p.epsilon;
    const double a = e.l.h().norm2() + pi * pi * p.nu * double(e.l.k3) * e.l.k3;
    const cplx den = I * om - e.c + a;
    if (std::abs(den) < 1e-14 / p.epsilon) throw DomainError("small_divisor_corrector: divisor below threshold");
    if (m == DuhamelMethod::closed_form) {
        const cplx part = e.s0 * std::exp((I * om - e.c) * t) / den;
        return ic == InitialChoice::special ? part : part - e.s0 * std::exp(-a * t) / den;
    }
    // composite Gauss-Legendre over panels no longer than a quarter oscillation or one decay length
    const double scale = std::max({std::abs(om) / (pi / 2), std::abs(e.c.real()) + std::abs(a), std::abs(e.c.imag()), 1.0});
    const int panels = std::max(1, int(std::ceil(t * scale)) + 1);
    static const GaussLegendre g(20, 0.0, 1.0);
    cplx acc{};
    const double h = t / panels;
    for (int j = 0; j < panels; ++j)
        for (std::size_t i = 0; i < g.x.size(); ++i) {
            const double tau = (j + g.x[i]) * h;
            acc += h * g.w[i] * std::exp(-a * (t - tau)) * e.s0 * std::exp((I * om - e.c) * tau);
        }
    if (ic == InitialChoice::special) acc += std::exp(-a * t) * e.s0 / den;
    return acc;
}

/**
 * @brief Filtered corrector amplitudes w_l(t), |l| <= K, solving
 *        dt w_l + (|l_h|^2 + nu' l3^2) w_l = sum s0 exp(-c t) exp(i(mu + lambda_l) t / eps).
 */
inline SpectralField small_divisor_corrector(const SourceTable& src, double K, const Params& p, double t,
                                             InitialChoice ic = InitialChoice::zero,
                                             DuhamelMethod m = DuhamelMethod::closed_form) {
    src.validate();
    SpectralField out;
    for (const auto& e : src.entries)
        if (e.l.norm() <= K + 1e-12) out.coeffs[e.l] += corrector_entry(e, p, t, ic, m);
    return out;
}

/** @brief Inverse divisor |lambda_l + mu|^{-1} and its ratio to the case-wise bound. */
struct DivisorBound {
    double inverse_divisor = 0;
    double reference = 1;  ///< 1, |l|/|l3| or |l|^2/|l_h|^2
    double ratio = 0;
    std::string regime;
};

inline DivisorBound divisor_bounds(const ModeIndex& l, double mu) {
    const double d = std::abs(eigenvalue(l) + mu);
    if (d < 1e-14) throw DomainError("divisor_bounds: resonant pair");
    DivisorBound b;
    b.inverse_divisor = 1.0 / d;
    if (is_unit(mu)) {
        b.regime = "unit";
        b.reference = l.h().is_zero() ? 1.0 : l.norm() * l.norm() / l.h().norm2();
    } else if (mu == 0.0) {
        b.regime = "zero";
        b.reference = l.norm() / std::abs(double(l.k3));
    } else {
        b.regime = "generic";
        b.reference = 1.0;
    }
    b.ratio = b.inverse_divisor / b.reference;
    return b;
}

// ---------------------------------------------------------------------------------------------
// Truncation and scaling

enum class Regime { wind_small_nu, wind_large_nu, dirichlet };

inline int truncation_choice(const Params& p, Regime r, double s0 = 2.0) {
    if (!(p.epsilon > 0 && p.epsilon < 1 && p.nu > 0 && p.nu < 1)) throw DomainError("truncation_choice: eps, nu in (0,1)");
    double K = 0;
    switch (r) {
        case Regime::wind_small_nu: K = std::pow(p.epsilon * p.nu, -1.0 / (2 * (s0 + 2))); break;
        case Regime::wind_large_nu: K = std::pow(p.nu * std::sqrt(p.epsilon), -1.0 / (s0 + 3)); break;
        case Regime::dirichlet: K = std::pow(p.epsilon, -0.5); break;
    }
    return int(std::ceil(K - 1e-9 * K));
}

inline Regime wind_regime(const Params& p) { return p.nu <= p.epsilon ? Regime::wind_small_nu : Regime::wind_large_nu; }

struct ScalingReport {
    bool main = false;        ///< beta <= C nu^{-alpha0} eps^{1/4} with alpha0 < 7/12
    bool small_nu = false;    ///< derived exponents for nu <= eps (alpha0' < 5/7, alpha1' > 2/7)
    bool large_nu = false;    ///< derived exponents for nu >= eps (alpha0' < 5/9, alpha1' > 2/9)
    bool stress_layer = false;  ///< beta nu^{3/4} eps^{-1/4} -> 0, i.e. alpha0 < 3/4
    double stress_layer_value = 0;
    double bound = 0;
    [[nodiscard]] bool ok() const { return main && small_nu && large_nu && stress_layer; }
};

inline ScalingReport scaling_check(const Params& p, double C = 1.0, double alpha0 = 0.5) {
    ScalingReport r;
    r.bound = C * std::pow(p.nu, -alpha0) * std::pow(p.epsilon, 0.25);
    r.main = alpha0 > 0 && alpha0 < 7.0 / 12.0 && p.beta <= r.bound;
    // trade a power of eps against nu in the relevant ordering of (eps, nu)
    const double a1s = 2.0 / 7.0 + 1e-6, a0s = alpha0 + a1s - 0.25;
    r.small_nu = p.beta <= r.bound && a0s < 5.0 / 7.0 && alpha0 < 7.0 / 12.0;
    const double a1l = 2.0 / 9.0 + 1e-6, a0l = alpha0 - (0.25 - a1l);
    r.large_nu = p.beta <= r.bound && a0l < 5.0 / 9.0;
    r.stress_layer_value = p.beta * std::pow(p.nu, 0.75) * std::pow(p.epsilon, -0.25);
    r.stress_layer = alpha0 < 0.75 && p.beta <= r.bound;
    return r;
}

// ---------------------------------------------------------------------------------------------
// Approximate solutions

/** @brief One named contribution, given mode-wise as a vertical profile of the horizontal Fourier coefficient. */
struct FieldPart {
    std::string name;
    std::set<HMode> modes;
    std::function<Vec3c(const HMode&, double, double)> coeff;     ///< (k_h, t, z)
    std::function<Vec3c(const HMode&, double, double)> coeff_dz;  ///< (k_h, t, z)
};

/** @brief Sum of named parts with norm and residual ledgers. */
struct ApproxSolution {
    Params params;
    std::vector<FieldPart> parts;
    std::map<std::string, double> residuals;
    std::vector<std::string> warnings;
    BoundaryLayerSolution primary_layer;
    BoundaryLayerSolution secondary_layer;

    [[nodiscard]] std::set<HMode> hmodes() const {
        std::set<HMode> s;
        for (const auto& p : parts) s.insert(p.modes.begin(), p.modes.end());
        return s;
    }
    [[nodiscard]] const FieldPart* part(const std::string& n) const {
        for (const auto& p : parts)
            if (p.name == n) return &p;
        return nullptr;
    }
    [[nodiscard]] Vec3c coeff(const HMode& kh, double t, double z, const std::string& only = "",
                              const std::string& skip = "") const {
        Vec3c out{};
        for (const auto& p : parts)
            if ((only.empty() || p.name == only) && p.name != skip && p.modes.count(kh)) out += p.coeff(kh, t, z);
        return out;
    }
    [[nodiscard]] Vec3c coeff_dz(const HMode& kh, double t, double z, const std::string& only = "",
                                 const std::string& skip = "") const {
        Vec3c out{};
        for (const auto& p : parts)
            if ((only.empty() || p.name == only) && p.name != skip && p.modes.count(kh)) out += p.coeff_dz(kh, t, z);
        return out;
    }
    [[nodiscard]] Vec3c evaluate(double t, double x1, double x2, double z) const {
        Vec3c out{};
        for (const auto& kh : hmodes()) out += std::exp(I * (kh.k1 * x1 + kh.k2 * x2)) * coeff(kh, t, z);
        return out;
    }
    /// Quadrature rule fine enough for the thinnest layer.
    [[nodiscard]] GaussLegendre zrule() const {
        return wall_graded_rule(std::min(1e-3 * params.layer(), 1e-4), 3, 8);
    }
    /// L^2(omega) norm of one part ("" = all parts, "!name" = all but that part).
    [[nodiscard]] double norm(double t, const std::string& only = "", int comp_mask = 7) const {
        const auto rule = zrule();
        std::string skip;
        std::string sel = only;
        if (!sel.empty() && sel[0] == '!') {
            skip = sel.substr(1);
            sel.clear();
        }
        double acc = 0;
        for (const auto& kh : hmodes())
            for (std::size_t i = 0; i < rule.x.size(); ++i) {
                const Vec3c v = coeff(kh, t, rule.x[i], sel, skip);
                for (int c = 0; c < 3; ++c)
                    if (comp_mask >> c & 1) acc += rule.w[i] * std::norm(v[c]);
            }
        return 2 * pi * std::sqrt(acc);
    }
    /// max over modes and sample points of |i k_h.u_h + dz u_3| relative to the field scale.
    [[nodiscard]] double divergence_residual(double t, int samples = 33) const {
        double worst = 0, scale = 1e-300;
        for (const auto& kh : hmodes())
            for (int i = 0; i < samples; ++i) {
                const double z = double(i) / (samples - 1);
                const Vec3c u = coeff(kh, t, z), du = coeff_dz(kh, t, z);
                const cplx d = I * (double(kh.k1) * u[0] + double(kh.k2) * u[1]) + du[2];
                worst = std::max(worst, std::abs(d));
                scale = std::max(scale, std::max(abs(u) * std::max(kh.norm(), 1.0), abs(du)));
            }
        return worst / scale;
    }
};

namespace detail {

inline FieldPart layer_part(const std::string& name, std::shared_ptr<const BoundaryLayerSolution> L) {
    FieldPart f;
    f.name = name;
    f.modes = L->hmodes();
    f.coeff = [L](const HMode& kh, double t, double z) { return L->coeff(kh, t, z); };
    f.coeff_dz = [L](const HMode& kh, double t, double z) { return L->coeff_dz(kh, t, z); };
    return f;
}

inline FieldPart flux_part(const std::string& name, std::shared_ptr<const FluxLift> F, double eps) {
    FieldPart f;
    f.name = name;
    for (const auto& e : F->entries) f.modes.insert(e.kh);
    f.coeff = [F, eps](const HMode& kh, double t, double z) { return F->coeff(kh, t, z, eps); };
    f.coeff_dz = [F, eps](const HMode& kh, double t, double) { return F->coeff_dz(kh, t, eps); };
    return f;
}

/** @brief Interior modes with exponential envelopes: sum amp exp(-rate t) exp(-i lambda_l t/eps) N_l. */
struct ModeSum {
    struct Term {
        ModeIndex l;
        cplx amp;
        cplx rate;
        double freq;  ///< oscillation exp(i freq t / eps)
    };
    std::vector<Term> terms;
    [[nodiscard]] Vec3c coeff(const HMode& kh, double t, double z, double eps, bool dz = false) const {
        Vec3c out{};
        for (const auto& e : terms)
            if (e.l.h() == kh) {
                const cplx f = e.amp * std::exp(-e.rate * t + I * e.freq * t / eps);
                out += f * (dz ? basis_profile_dz(e.l, z) : basis_profile(e.l, z));
            }
        return out;
    }
};

inline FieldPart mode_part(const std::string& name, std::shared_ptr<const ModeSum> M, double eps) {
    FieldPart f;
    f.name = name;
    for (const auto& e : M->terms) f.modes.insert(e.l.h());
    f.coeff = [M, eps](const HMode& kh, double t, double z) { return M->coeff(kh, t, z, eps); };
    f.coeff_dz = [M, eps](const HMode& kh, double t, double z) { return M->coeff(kh, t, z, eps, true); };
    return f;
}

/**
 * @brief Final lift part: at each (k_h, t) it cancels the wall defects of `base` against the targets
 *        u = 0 at z = 0, u_3 = 0 at z = 1, dz u_h = top_stress(k_h, t) at z = 1.
 */
inline FieldPart stopping_part(const ApproxSolution& base,
                               std::function<Vec2c(const HMode&, double)> top_stress) {
    auto parts = std::make_shared<std::vector<FieldPart>>(base.parts);
    auto cache = std::make_shared<std::map<std::pair<HMode, double>, LiftMode>>();
    auto mtx = std::make_shared<std::mutex>();
    auto get = [parts, cache, mtx, top_stress](const HMode& kh, double t) {
        {
            std::lock_guard<std::mutex> g(*mtx);
            auto it = cache->find({kh, t});
            if (it != cache->end()) return it->second;
        }
        Vec3c u0{}, u1{}, du1{};
        for (const auto& p : *parts)
            if (p.modes.count(kh)) {
                u0 += p.coeff(kh, t, 0.0);
                u1 += p.coeff(kh, t, 1.0);
                du1 += p.coeff_dz(kh, t, 1.0);
            }
        const Vec2c s = top_stress(kh, t);
        const Vec3c d0{-u0[0], -u0[1], -u0[2]};
        const Vec3c d1{s[0] - du1[0], s[1] - du1[1], -u1[2]};
        LiftMode m = lift_mode(kh, d0, d1, 1e-9);
        std::lock_guard<std::mutex> g(*mtx);
        if (cache->size() > 4096) cache->clear();
        (*cache)[{kh, t}] = m;
        return m;
    };
    FieldPart f;
    f.name = "w";
    f.modes = base.hmodes();
    f.coeff = [get](const HMode& kh, double t, double z) { return get(kh, t).eval(z)[0]; };
    f.coeff_dz = [get](const HMode& kh, double t, double z) { return get(kh, t).eval(z)[1]; };
    return f;
}

/** @brief Wall defects (bottom value, top flux) of a solution before the final lift. */
inline std::pair<WallTrace, WallTrace> wall_defects(const ApproxSolution& s, double t,
                                                    const std::function<Vec2c(const HMode&, double)>& top_stress) {
    WallTrace d0, d1;
    for (const auto& kh : s.hmodes()) {
        const Vec3c u0 = s.coeff(kh, t, 0.0, "", "w"), u1 = s.coeff(kh, t, 1.0, "", "w");
        const Vec3c du1 = s.coeff_dz(kh, t, 1.0, "", "w");
        const Vec2c st = top_stress(kh, t);
        d0[kh] = u0;
        d1[kh] = {du1[0] - st[0], du1[1] - st[1], u1[2]};
    }
    return {d0, d1};
}

inline double wall_norm(const WallTrace& d, bool vertical) {
    double acc = 0;
    for (const auto& [k, v] : d) acc += vertical ? std::norm(v[2]) : std::norm(v[0]) + std::norm(v[1]);
    return 2 * pi * std::sqrt(acc);
}

/** @brief Horizontal trace of a mode sum at z = 0, split by (frequency, decay rate) into trace entries. */
inline void append_mode_traces(const ModeSum& M, double eps, BoundaryTrace& tr, double sign) {
    for (const auto& e : M.terms) {
        const Vec3c n = basis_coeffs(e.l);
        tr.add(e.freq, e.l.h(), {sign * n[0], sign * n[1]}, Envelope::exponential(e.amp, e.rate));
    }
    (void)eps;
}

}  // namespace detail

/** @brief Options for the approximate-solution assemblies. */
struct AssemblyOptions {
    int K = 0;                          ///< truncation (0: chosen from the regime)
    double s0 = 2.0;                    ///< Sobolev index in the truncation rule
    std::optional<InitialChoice> corrector_ic;  ///< default: zero for stress forcing, special for initial data
    EnvelopeOptions envelope{};
    double scaling_C = 1.0;
    double scaling_alpha0 = 0.5;
};

/** @brief Sources generated in the equations of modes l by a flux-lift entry with an exponential envelope. */
inline std::vector<SourceEntry> flux_lift_sources(const FluxLift& F, const FluxLift::Entry& e, int K, const Params& p,
                                                  const std::optional<ModeIndex>& exclude = std::nullopt) {
    std::vector<SourceEntry> out;
    if (!e.env.is_exponential()) throw DomainError("flux_lift_sources: exponential envelope required");
    const cplx c = e.env.rate;
    const double k2 = e.kh.norm2();
    for (int l3 = -K; l3 <= K; ++l3) {
        const ModeIndex l{e.kh.k1, e.kh.k2, l3};
        if (l.norm() > K + 1e-12 || l.is_zero()) continue;
        if (exclude && l == *exclude) continue;
        if (std::abs(e.mu + eigenvalue(l)) < 1e-12) continue;
        // defect of the lift: (dt + i mu/eps + |k_h|^2) v + (1/eps) e3 x v; dz^2 v = 0
        const cplx pref = -c + I * e.mu / p.epsilon + k2;
        auto defect = [&](double z) {
            const Vec3c v = F.shape(e, z);
            return Vec3c{pref * v[0] - v[1] / p.epsilon, pref * v[1] + v[0] / p.epsilon, pref * v[2]};
        };
        const cplx proj = project_profile(l, e.kh, defect, 24 + 2 * std::abs(l3));
        out.push_back({e.mu, l, -proj * e.env.amp, c});
    }
    return out;
}

/** @brief Mode sum of the filtered corrector multiplied back by its rotation: w_l(t) exp(-i lambda_l t / eps) N_l. */
inline detail::ModeSum corrector_modes(const SourceTable& src, const Params& p, InitialChoice ic) {
    src.validate();
    detail::ModeSum M;
    for (const auto& e : src.entries) {
        const double lam = eigenvalue(e.l);
        const double a = e.l.h().norm2() + pi * pi * p.nu * double(e.l.k3) * e.l.k3;
        const cplx den = I * (lam + e.mu) / p.epsilon - e.c + a;
        // s0 e^{i(mu+lam)t/eps - ct}/den, rotated: frequency mu
        M.terms.push_back({e.l, e.s0 / den, e.c, e.mu});
        if (ic == InitialChoice::zero) M.terms.push_back({e.l, -e.s0 / den, a, -lam});
    }
    return M;
}

/**
 * @brief Approximate solution for surface stress beta * sigma (entries of a top trace) with zero initial data.
 */
inline ApproxSolution assemble_wind_approx(const BoundaryTrace& sigma, const Params& p, const AssemblyOptions& o = {}) {
    p.validate();
    if (sigma.side != 1) throw DomainError("assemble_wind_approx: stress must be a top trace");
    ApproxSolution A;
    A.params = p;
    const auto sc = scaling_check(p, o.scaling_C, o.scaling_alpha0);
    if (!sc.ok()) A.warnings.push_back("scaling hypothesis not satisfied for the given (C, alpha0)");
    const int K = o.K > 0 ? o.K : truncation_choice(p, wind_regime(p), o.s0);
    A.residuals["K"] = K;

    BoundaryTrace top(1);
    for (const auto& e : sigma.entries) top.add(e.mu, e.kh, p.beta * e.delta, e.env);
    auto stress_table = std::make_shared<BoundaryTrace>(top);
    auto top_stress = [stress_table, eps = p.epsilon](const HMode& kh, double t) {
        Vec2c s{};
        for (const auto& e : stress_table->entries)
            if (e.kh == kh) s += (e.env(t) * std::exp(I * e.mu * t / eps)) * e.delta;
        return s;
    };

    auto ubl1 = std::make_shared<BoundaryLayerSolution>(build_B(BoundaryTrace(0), top, p));
    A.primary_layer = *ubl1;
    A.parts.push_back(detail::layer_part("u_BL1", ubl1));

    // top vertical trace of the quasi-resonant layer, lifted into the interior
    std::vector<std::tuple<double, HMode, cplx, Envelope>> tr;
    for (const auto& m : ubl1->quasi_resonant)
        if (m.side == 1) tr.emplace_back(m.mu, m.kh, m.alpha * m.amplitude(p)[2], m.env);
    auto vint1 = std::make_shared<FluxLift>(lift_interior_vint1(tr));
    if (!vint1->entries.empty()) {
        A.parts.push_back(detail::flux_part("v_int1", vint1, p.epsilon));
        SourceTable src;
        for (const auto& e : vint1->entries) {
            auto s = flux_lift_sources(*vint1, e, K, p);
            src.entries.insert(src.entries.end(), s.begin(), s.end());
        }
        auto dK = std::make_shared<detail::ModeSum>(corrector_modes(src, p, o.corrector_ic.value_or(InitialChoice::zero)));
        A.parts.push_back(detail::mode_part("du_int1", dK, p.epsilon));

        // truncation tail of the projected defect, estimated over |l_3| <= 8K
        double tail = 0;
        for (const auto& e : vint1->entries) {
            auto all = flux_lift_sources(*vint1, e, 8 * K, p);
            for (const auto& s : all)
                if (s.l.norm() > K) tail += std::norm(s.s0);
        }
        A.residuals["eta_truncation"] = std::sqrt(tail);

        BoundaryTrace bottom(0);
        for (const auto& e : vint1->entries) {
            const Vec3c v0 = vint1->shape(e, 0.0);
            bottom.add(e.mu, e.kh, {-v0[0], -v0[1]}, e.env);
        }
        detail::append_mode_traces(*dK, p.epsilon, bottom, -1.0);
        auto dbl = std::make_shared<BoundaryLayerSolution>(build_B(bottom, BoundaryTrace(1), p));
        A.secondary_layer = *dbl;
        A.parts.push_back(detail::layer_part("du_BL1", dbl));
        // frozen-envelope error: dt of the envelope times the layer profile
        std::vector<ModeProfile> scaled;
        for (auto m : dbl->classical) {
            if (m.env.is_exponential()) m.alpha *= m.env.rate;
            scaled.push_back(m);
        }
        for (auto m : dbl->quasi_resonant) {
            if (m.env.is_exponential()) m.alpha *= m.env.rate;
            scaled.push_back(m);
        }
        A.residuals["eta_frozen"] = layer_l2(scaled, 0.0, p, 7);
    } else {
        A.residuals["eta_truncation"] = 0;
        A.residuals["eta_frozen"] = 0;
    }
    auto [d0, d1] = detail::wall_defects(A, 0.0, top_stress);
    A.residuals["eta0_h"] = detail::wall_norm(d0, false);
    A.residuals["eta0_3"] = detail::wall_norm(d0, true);
    A.residuals["eta1_h"] = detail::wall_norm(d1, false);
    A.residuals["eta1_3"] = detail::wall_norm(d1, true);
    A.parts.push_back(detail::stopping_part(A, top_stress));
    return A;
}

/** @brief Approximate solution for initial data gamma (no stress): interior envelope plus Ekman layers and correctors. */
inline ApproxSolution assemble_dirichlet_approx(const SpectralField& gamma, const Params& p, const AssemblyOptions& o = {}) {
    p.validate();
    ApproxSolution A;
    A.params = p;
    const int K = o.K > 0 ? o.K : truncation_choice(p, Regime::dirichlet, o.s0);
    A.residuals["K"] = K;
    const auto no_stress = [](const HMode&, double) { return Vec2c{}; };

    auto interior = std::make_shared<detail::ModeSum>();
    BoundaryTrace bottom(0);
    std::vector<FluxLift::Entry> suction;
    for (const auto& [k, g] : gamma.coeffs) {
        if (g == 0.0) continue;
        const cplx rate = damping_rate(k, p, o.envelope);
        const double lam = eigenvalue(k);
        interior->terms.push_back({k, g, rate, -lam});
        const Vec3c n = basis_coeffs(k);
        bottom.add(-lam, k.h(), {-n[0], -n[1]}, Envelope::exponential(g, rate));
        if (!k.h().is_zero()) suction.push_back({-lam, k.h(), suction_factor(k, p), 0.0, Envelope::exponential(g, rate)});
    }
    A.parts.push_back(detail::mode_part("interior", interior, p.epsilon));

    auto ubl0 = std::make_shared<BoundaryLayerSolution>(build_B(bottom, BoundaryTrace(1), p));
    for (auto& r : ubl0->resonant) r.finite_depth = true;
    A.primary_layer = *ubl0;
    A.parts.push_back(detail::layer_part("u_BL0", ubl0));

    auto vint0 = std::make_shared<FluxLift>(lift_interior_vint0(suction, p));
    if (!vint0->entries.empty()) A.parts.push_back(detail::flux_part("v_int0", vint0, p.epsilon));

    SourceTable src;
    for (std::size_t i = 0; i < vint0->entries.size(); ++i) {
        const auto& e = vint0->entries[i];
        // the mode whose frequency matches the entry feeds the envelope itself
        std::optional<ModeIndex> self;
        for (const auto& [k, g] : gamma.coeffs)
            if (k.h() == e.kh && std::abs(e.mu + eigenvalue(k)) < 1e-12) self = k;
        auto s = flux_lift_sources(*vint0, e, K, p, self);
        src.entries.insert(src.entries.end(), s.begin(), s.end());
    }
    auto dK = std::make_shared<detail::ModeSum>(corrector_modes(src, p, o.corrector_ic.value_or(InitialChoice::special)));
    if (!dK->terms.empty()) A.parts.push_back(detail::mode_part("du_int0", dK, p.epsilon));

    // horizontal defects of the interior lifts at the bottom, cancelled by a second layer
    BoundaryTrace eta0(0);
    for (const auto& e : vint0->entries) {
        const Vec3c v0 = vint0->shape(e, 0.0);
        eta0.add(e.mu, e.kh, {-v0[0], -v0[1]}, e.env);
    }
    detail::append_mode_traces(*dK, p.epsilon, eta0, -1.0);
    auto dbl = std::make_shared<BoundaryLayerSolution>(build_B(eta0, BoundaryTrace(1), p));
    A.secondary_layer = *dbl;
    if (!eta0.entries.empty()) A.parts.push_back(detail::layer_part("du_BL0", dbl));

    // bottom vertical balance between the primary layer and the suction lift
    {
        double acc = 0, ref = 0;
        for (const auto& kh : A.hmodes()) {
            const cplx a = A.coeff(kh, 0.0, 0.0, "u_BL0")[2], b = A.coeff(kh, 0.0, 0.0, "v_int0")[2];
            acc += std::norm(a + b);
            ref += std::norm(a);
        }
        A.residuals["eta0_3_primary"] = std::sqrt(acc) / std::max(std::sqrt(ref), 1e-300);
    }
    auto [d0, d1] = detail::wall_defects(A, 0.0, no_stress);
    A.residuals["eta0_h"] = detail::wall_norm(d0, false);
    A.residuals["eta0_3"] = detail::wall_norm(d0, true);
    A.residuals["eta1_h"] = detail::wall_norm(d1, false);
    A.residuals["eta1_3"] = detail::wall_norm(d1, true);
    A.parts.push_back(detail::stopping_part(A, no_stress));
    A.residuals["delta_gamma"] = A.norm(0.0, "!interior");
    return A;
}

}  // namespace rotek

#pragma once
/** @file envelope.hpp
 *  @brief Ekman pumping coefficients and the damped slow-time evolution of interior modes.
 */

#include <boost/numeric/odeint.hpp>

#include "boundary_layers.hpp"
#include "spectral.hpp"

namespace rotek {

/**
 * @brief Normalisation of the L^2 pairing used to turn Ekman suction into a damping rate.
 *
 * `orthonormal` pairs with the plain integral over the strip, under which the eigenbasis is orthonormal.
 * `averaged` divides that integral by the horizontal area 4 pi^2; coefficients in this convention are
 * 4 pi^2 times smaller.
 */
enum class Pairing { orthonormal, averaged };

inline double pairing_factor(Pairing p) { return p == Pairing::orthonormal ? 4 * pi * pi : 1.0; }

/** @brief Complex damping coefficient per unit sqrt(nu/eps) of a single interior mode. */
struct EkmanCoefficient {
    cplx A{};
    ModeIndex k{};
};

/** @brief Bottom-layer amplitudes (n_-, n_+) = P^{-1} n_h(k) at the interior frequency mu = -lambda_k. */
inline Vec2c layer_split(const ModeIndex& k, const Params& p, DecayRates* rates = nullptr, Transition* tr = nullptr) {
    const double mu = -eigenvalue(k);
    const DecayRates r = decay_rates(mu, k.h(), p);
    const Transition P = transition_matrix(mu, k.h(), p, r);
    const Vec3c n = basis_coeffs(k);
    if (rates) *rates = r;
    if (tr) *tr = P;
    return P.solve({n[0], n[1]});
}

/** @brief sum_sigma n_sigma / lambda^sigma (i k_h . w_sigma): Ekman suction per unit interior amplitude. */
inline cplx suction_factor(const ModeIndex& k, const Params& p) {
    if (k.h().is_zero()) return 0.0;
    DecayRates r;
    Transition P;
    const Vec2c ns = layer_split(k, p, &r, &P);
    auto ikw = [&](const Vec2c& w) { return I * (double(k.k1) * w[0] + double(k.k2) * w[1]); };
    return ns[0] / r.lambda_minus * ikw(P.wm) + ns[1] / r.lambda_plus * ikw(P.wp);
}

inline EkmanCoefficient ekman_coefficient(const ModeIndex& k, const Params& p, Pairing pairing = Pairing::orthonormal) {
    if (k.is_zero()) throw DomainError("ekman_coefficient: k must be nonzero");
    if (k.h().is_zero()) return {0.0, k};
    const double kp2 = k.norm_pi() * k.norm_pi();
    const cplx A = k.h().norm() / (2 * pi * kp2) * suction_factor(k, p);
    return {pairing_factor(pairing) * A, k};
}

/** @brief Vanishing-(eps, nu) limit R + iI of the Ekman coefficient. */
struct EkmanLimit {
    double R = 0;
    double I = 0;
};

inline EkmanLimit ekman_limit_coefficient(const ModeIndex& k, Pairing pairing = Pairing::orthonormal) {
    const double l = eigenvalue(k);
    if (std::abs(std::abs(l) - 1.0) < 1e-15) throw DomainError("ekman_limit_coefficient: |lambda_k| = 1 has no limit pumping");
    const double pre = (1 - l * l) / (8 * std::sqrt(2.0) * pi * pi) * pairing_factor(pairing);
    const double a = (1 + l) / std::sqrt(1 - l), b = (1 - l) / std::sqrt(1 + l);
    return {pre * (a + b), pre * (a - b)};
}

/** @brief Options selecting the envelope model. */
struct EnvelopeOptions {
    Pairing pairing = Pairing::orthonormal;
    bool vertical_viscosity = false;  ///< include nu' k3^2 with nu' = pi^2 nu
    bool limit_coefficient = false;   ///< use R_k + i I_k instead of the finite-(eps, nu) coefficient
};

/** @brief Total complex damping |k_h|^2 [+ nu' k3^2] + sqrt(nu/eps) A_k. */
inline cplx damping_rate(const ModeIndex& k, const Params& p, const EnvelopeOptions& o = {Pairing::orthonormal, true, false}) {
    cplx A;
    if (k.h().is_zero()) A = 0.0;
    else if (o.limit_coefficient) {
        const auto L = ekman_limit_coefficient(k, o.pairing);
        A = {L.R, L.I};
    } else {
        A = ekman_coefficient(k, p, o.pairing).A;
    }
    const double vert = o.vertical_viscosity ? pi * pi * p.nu * double(k.k3) * k.k3 : 0.0;
    return k.h().norm2() + vert + std::sqrt(p.nu / p.epsilon) * A;
}

/** @brief Closed-form envelope c_k(t) = gamma_k exp(-rate_k t). Defaults omit vertical viscosity. */
inline SpectralField evolve_c(const SpectralField& gamma, const Params& p, double t, const EnvelopeOptions& o = {}) {
    if (t < 0) throw DomainError("evolve_c: t must be nonnegative");
    SpectralField out;
    for (const auto& [k, c] : gamma.coeffs) out.coeffs[k] = c * std::exp(-damping_rate(k, p, o) * t);
    return out;
}

/** @brief Integrate the diagonal envelope system with an adaptive Runge-Kutta stepper. */
inline std::vector<SpectralField> envelope_solve(const SpectralField& gamma, const Params& p, const std::vector<double>& times,
                                                 const EnvelopeOptions& o = {}) {
    namespace ode = boost::numeric::odeint;
    std::vector<ModeIndex> ks;
    std::vector<cplx> rate;
    std::vector<double> x;
    for (const auto& [k, c] : gamma.coeffs) {
        ks.push_back(k);
        rate.push_back(damping_rate(k, p, o));
        x.push_back(c.real());
        x.push_back(c.imag());
    }
    auto rhs = [&](const std::vector<double>& s, std::vector<double>& ds, double) {
        for (std::size_t i = 0; i < ks.size(); ++i) {
            const cplx d = -rate[i] * cplx(s[2 * i], s[2 * i + 1]);
            ds[2 * i] = d.real();
            ds[2 * i + 1] = d.imag();
        }
    };
    std::vector<SpectralField> out;
    if (times.empty()) return out;
    auto record = [&](const std::vector<double>& s, double) {
        SpectralField f;
        for (std::size_t i = 0; i < ks.size(); ++i) f.coeffs[ks[i]] = {s[2 * i], s[2 * i + 1]};
        out.push_back(std::move(f));
    };
    if (ks.empty()) {
        out.assign(times.size(), SpectralField{});
        return out;
    }
    auto stepper = ode::make_dense_output(1e-14, 1e-13, ode::runge_kutta_dopri5<std::vector<double>>());
    ode::integrate_times(stepper, rhs, x, times.begin(), times.end(), 1e-3, record);
    return out;
}

/** @brief Right-hand sides of the trace estimates and the realised trace norms at time t. */
struct TraceBounds {
    double bound_h = 0, bound_3 = 0;
    double realized_h = 0, realized_3 = 0;
};

/**
 * @brief Bounds C||gamma||_{H^{s+1}} (horizontal trace) and C||gamma||_{H^{s+2}} (vertical trace), C = 1,
 *        with trace norms sqrt(sum (1+|k_h|^2)^s |delta|^2) of the bottom data induced by the envelope at time t.
 */
inline TraceBounds trace_bounds(const SpectralField& gamma, double s, const Params& p, double t = 0.0,
                                const EnvelopeOptions& o = {}) {
    TraceBounds b;
    b.bound_h = gamma.sobolev_norm(s + 1);
    b.bound_3 = gamma.sobolev_norm(s + 2);
    const SpectralField c = evolve_c(gamma, p, t, o);
    double h = 0, v = 0;
    for (const auto& [k, ck] : c.coeffs) {
        const double w = std::pow(1 + k.h().norm2(), s);
        const Vec3c n = basis_coeffs(k);
        h += w * std::norm(ck) * (std::norm(n[0]) + std::norm(n[1]));
        v += w * std::norm(ck * suction_factor(k, p));
    }
    b.realized_h = std::sqrt(h);
    b.realized_3 = std::sqrt(v);
    return b;
}

}  // namespace rotek

#pragma once
/** @file direct_solver.hpp
 *  @brief Reference solver for the full linear rotating system, one horizontal Fourier mode at a time.
 *
 *  Velocity lives at graded nodes, pressure at cell midpoints. The discrete gradient is minus the
 *  weighted adjoint of the discrete divergence, so pressure does no work and the discrete energy law
 *  mirrors the continuous one. Time stepping is Crank-Nicolson with a short backward-Euler start.
 */

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <future>
#include <optional>

#include "boundary_layers.hpp"
#include "spectral.hpp"

namespace rotek {

/** @brief Tanh-stretched nodes on [0,1], symmetric about 1/2; a = 0 gives a uniform grid. */
inline std::vector<double> tanh_grid(int N, double a) {
    std::vector<double> z(N + 1);
    for (int j = 0; j <= N; ++j) {
        const double xi = double(j) / N;
        z[j] = a < 1e-8 ? xi : 0.5 * (1 + std::tanh(a * (2 * xi - 1)) / std::tanh(a));
    }
    z[0] = 0;
    z[N] = 1;
    return z;
}

/** @brief Smallest stretching giving `nodes` intervals inside `thickness` at each wall. */
inline double grading_for(int N, double thickness, int nodes = 8) {
    if (tanh_grid(N, 0.0)[nodes] <= thickness) return 0.0;
    double lo = 0.0, hi = 30.0;
    if (tanh_grid(N, hi)[nodes] > thickness)
        throw DomainError("grading_for: Nz too small to place " + std::to_string(nodes) + " nodes inside the layer");
    for (int it = 0; it < 100; ++it) {
        const double mid = 0.5 * (lo + hi);
        (tanh_grid(N, mid)[nodes] <= thickness ? hi : lo) = mid;
    }
    return hi;
}

/** @brief Per-mode state: velocity at nodes, pressure at cell midpoints. */
struct ModeGrid {
    HMode kh{};
    std::shared_ptr<const std::vector<double>> z;
    Eigen::VectorXcd u1, u2, u3;  ///< size Nz+1
    Eigen::VectorXcd p;           ///< size Nz

    [[nodiscard]] int N() const { return int(z->size()) - 1; }
    /// trapezoid weight of node j
    [[nodiscard]] double weight(int j) const {
        const auto& Z = *z;
        if (j == 0) return 0.5 * (Z[1] - Z[0]);
        if (j == N()) return 0.5 * (Z[N()] - Z[N() - 1]);
        return 0.5 * (Z[j + 1] - Z[j - 1]);
    }
    [[nodiscard]] Vec3c at(int j) const { return {u1[j], u2[j], u3[j]}; }
};

/** @brief L^2(omega) norm of a mode state: 2 pi sqrt(sum_j w_j |u_j|^2). */
inline double l2_norm(const ModeGrid& g) {
    double s = 0;
    for (int j = 0; j <= g.N(); ++j) s += g.weight(j) * norm2(g.at(j));
    return 2 * pi * std::sqrt(s);
}

/** @brief L^2(omega) distance between a mode state and an analytic vertical profile of the same mode. */
inline double l2_difference(const ModeGrid& g, const std::function<Vec3c(double)>& f) {
    double s = 0;
    for (int j = 0; j <= g.N(); ++j) s += g.weight(j) * norm2(g.at(j) - f((*g.z)[j]));
    return 2 * pi * std::sqrt(s);
}

/** @brief Projection of a mode state onto basis mode l (zero if l has another horizontal wavenumber). */
inline cplx project_state(const ModeGrid& g, const ModeIndex& l) {
    if (l.h() != g.kh) return {};
    cplx s{};
    for (int j = 0; j <= g.N(); ++j) s += g.weight(j) * dot(basis_profile(l, (*g.z)[j]), g.at(j));
    return 4 * pi * pi * s;
}

/** @brief Per-step diagnostics. */
struct StepDiagnostics {
    double t = 0;
    double energy = 0;          ///< 1/2 ||u||^2
    double dissipation = 0;     ///< ||grad_h u||^2 + nu ||dz u||^2 at the midpoint state
    double divergence = 0;      ///< max |D u| relative to max |u| k-scale
    double energy_residual = 0; ///< cumulative E(t) - E(0) + int dissipation - int forcing work
};

struct ModeTrajectory {
    HMode kh{};
    std::vector<double> times;
    std::vector<ModeGrid> snapshots;
    std::vector<StepDiagnostics> diagnostics;
};

struct DirectOptions {
    double t_end = 0.5;
    double dt = 0;          ///< 0: eps / 10
    int Nz = 512;
    std::optional<double> grading;  ///< tanh stretching; default: enough nodes inside the layer
    int nodes_in_layer = 8;
    int save_every = 10;
    int startup_steps = 4;  ///< backward-Euler substeps (of dt/2) replacing the first Crank-Nicolson step
    bool penalization_only = false;  ///< drop all viscosity; keep only zero flux at the walls
    bool check_resolution = true;
    int parallel = 1;
    /// called after every step with the current state
    std::function<void(const ModeGrid&, double)> observer;
};

/** @brief Resolution requirements for a parameter set; throws with the computed requirement. */
inline void check_direct_resolution(const Params& p, const DirectOptions& o, double dt) {
    if (dt > p.epsilon / 10 * (1 + 1e-12))
        throw DomainError("solve_direct: dt must be <= eps/10 = " + std::to_string(p.epsilon / 10));
    if (o.penalization_only) return;
    const double a = o.grading ? *o.grading : grading_for(o.Nz, p.layer(), o.nodes_in_layer);
    const auto z = tanh_grid(o.Nz, a);
    if (z[o.nodes_in_layer] > p.layer() * (1 + 1e-9))
        throw DomainError("solve_direct: need " + std::to_string(o.nodes_in_layer) + " nodes within sqrt(eps nu) = " +
                          std::to_string(p.layer()) + " of each wall");
}

namespace detail {

/** @brief Sparse operators of one horizontal mode. */
class ModeOperator {
public:
    using SpMat = Eigen::SparseMatrix<cplx>;
    ModeOperator(HMode kh, std::shared_ptr<const std::vector<double>> z, const Params& p, bool penal)
        : kh_(kh), z_(std::move(z)), p_(p), penal_(penal) {
        N_ = int(z_->size()) - 1;
        // unknown numbering; fixed (zero) nodes get -1
        idx_.assign(3, std::vector<int>(N_ + 1, -1));
        int n = 0;
        for (int c = 0; c < 3; ++c)
            for (int j = 0; j <= N_; ++j) {
                const bool wall = (j == 0 || j == N_);
                const bool fixed = c == 2 ? wall : (!penal_ && j == 0);
                if (!fixed) {
                    idx_[c][j] = n++;
                    node_.push_back(j);
                }
            }
        nu_ = n;
        np_ = N_;
        h_.resize(N_);
        for (int m = 0; m < N_; ++m) h_[m] = (*z_)[m + 1] - (*z_)[m];
        w_.resize(N_ + 1);
        for (int j = 0; j <= N_; ++j)
            w_[j] = j == 0 ? h_[0] / 2 : (j == N_ ? h_[N_ - 1] / 2 : (h_[j - 1] + h_[j]) / 2);
        build();
    }

    [[nodiscard]] int nu() const { return nu_; }
    [[nodiscard]] int np() const { return np_; }

    /// Factor (alpha I + theta M) u + G p = rhs, D u = 0.
    void factor(double alpha, double theta) {
        std::vector<Eigen::Triplet<cplx>> T;
        for (int k = 0; k < M_.outerSize(); ++k)
            for (SpMat::InnerIterator it(M_, k); it; ++it) T.emplace_back(it.row(), it.col(), theta * it.value());
        for (int i = 0; i < nu_; ++i) T.emplace_back(i, i, alpha);
        for (int k = 0; k < G_.outerSize(); ++k)
            for (SpMat::InnerIterator it(G_, k); it; ++it) T.emplace_back(it.row(), nu_ + it.col(), it.value());
        for (int k = 0; k < D_.outerSize(); ++k)
            for (SpMat::InnerIterator it(D_, k); it; ++it) T.emplace_back(nu_ + it.row(), it.col(), it.value());
        // the mean mode leaves a constant pressure undetermined; the weighted sum of the divergence rows forces p_0 = 0
        if (kh_.is_zero()) T.emplace_back(nu_, nu_, 1.0);
        SpMat S(nu_ + np_, nu_ + np_);
        S.setFromTriplets(T.begin(), T.end());
        S.makeCompressed();
        lu_.analyzePattern(S);
        lu_.factorize(S);
        if (lu_.info() != Eigen::Success) throw std::runtime_error("solve_direct: singular saddle-point system");
    }
    Eigen::VectorXcd solve(const Eigen::VectorXcd& rhs_u) {
        Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(nu_ + np_);
        rhs.head(nu_) = rhs_u;
        Eigen::VectorXcd x = lu_.solve(rhs);
        if (lu_.info() != Eigen::Success) throw std::runtime_error("solve_direct: back substitution failed");
        return x;
    }
    [[nodiscard]] Eigen::VectorXcd apply_M(const Eigen::VectorXcd& u) const { return M_ * u; }
    [[nodiscard]] Eigen::VectorXcd apply_D(const Eigen::VectorXcd& u) const { return D_ * u; }
    /// Velocity forcing produced by a unit top stress on the two horizontal components.
    [[nodiscard]] Eigen::VectorXcd stress_vector(const Vec2c& g) const {
        Eigen::VectorXcd f = Eigen::VectorXcd::Zero(nu_);
        if (penal_) return f;
        for (int c = 0; c < 2; ++c) f[idx_[c][N_]] = p_.nu * g[c] / w_[N_];
        return f;
    }
    [[nodiscard]] Eigen::VectorXcd pack(const ModeGrid& g) const {
        Eigen::VectorXcd u(nu_);
        const Eigen::VectorXcd* comp[3] = {&g.u1, &g.u2, &g.u3};
        for (int c = 0; c < 3; ++c)
            for (int j = 0; j <= N_; ++j)
                if (idx_[c][j] >= 0) u[idx_[c][j]] = (*comp[c])[j];
        return u;
    }
    void unpack(const Eigen::VectorXcd& x, ModeGrid& g) const {
        Eigen::VectorXcd* comp[3] = {&g.u1, &g.u2, &g.u3};
        for (int c = 0; c < 3; ++c) {
            comp[c]->setZero(N_ + 1);
            for (int j = 0; j <= N_; ++j)
                if (idx_[c][j] >= 0) (*comp[c])[j] = x[idx_[c][j]];
        }
        if (x.size() >= nu_ + np_) g.p = x.segment(nu_, np_);
    }
    /// weighted energy 1/2 * 4 pi^2 sum w |u|^2
    [[nodiscard]] double energy(const Eigen::VectorXcd& u) const {
        double s = 0;
        for (int c = 0; c < 3; ++c)
            for (int j = 0; j <= N_; ++j)
                if (idx_[c][j] >= 0) s += w_[j] * std::norm(u[idx_[c][j]]);
        return 2 * pi * pi * s;
    }
    /// 4 pi^2 [ |k_h|^2 sum w|u|^2 + nu sum |du|^2 / h ]
    [[nodiscard]] double dissipation(const Eigen::VectorXcd& u) const {
        if (penal_) return 0.0;
        double s = 0;
        for (int c = 0; c < 3; ++c)
            for (int j = 0; j <= N_; ++j) {
                const cplx v = idx_[c][j] >= 0 ? u[idx_[c][j]] : cplx{};
                s += kh_.norm2() * w_[j] * std::norm(v);
                if (j < N_) {
                    const cplx v1 = idx_[c][j + 1] >= 0 ? u[idx_[c][j + 1]] : cplx{};
                    s += p_.nu * std::norm(v1 - v) / h_[j];
                }
            }
        return 4 * pi * pi * s;
    }
    /// 4 pi^2 Re sum conj(u_N) nu g  (work of the top stress)
    [[nodiscard]] double stress_work(const Eigen::VectorXcd& u, const Vec2c& g) const {
        if (penal_) return 0.0;
        cplx s{};
        for (int c = 0; c < 2; ++c) s += std::conj(u[idx_[c][N_]]) * p_.nu * g[c];
        return 4 * pi * pi * s.real();
    }

private:
    void build() {
        std::vector<Eigen::Triplet<cplx>> TM, TD, TG;
        const double eps = p_.epsilon;
        auto add = [&](int c, int j, int c2, int j2, cplx v) {
            const int r = idx_[c][j], col = idx_[c2][j2];
            if (r >= 0 && col >= 0) TM.emplace_back(r, col, v);
        };
        for (int j = 0; j <= N_; ++j) {
            // Coriolis (1/eps) e3 x u = (-u2, u1, 0)/eps
            add(0, j, 1, j, -1.0 / eps);
            add(1, j, 0, j, 1.0 / eps);
            if (penal_) continue;
            for (int c = 0; c < 3; ++c) {
                add(c, j, c, j, kh_.norm2());
                // -nu dzz, finite-volume form; the top horizontal flux enters through the forcing
                if (j == 0 || (c == 2 && j == N_)) continue;
                const double wj = w_[j];
                if (j < N_) {
                    add(c, j, c, j, p_.nu / (wj * h_[j]));
                    add(c, j, c, j + 1, -p_.nu / (wj * h_[j]));
                }
                add(c, j, c, j, p_.nu / (wj * h_[j - 1]));
                add(c, j, c, j - 1, -p_.nu / (wj * h_[j - 1]));
            }
        }
        // divergence at midpoints
        for (int m = 0; m < N_; ++m) {
            auto addD = [&](int c, int j, cplx v) {
                if (idx_[c][j] >= 0) TD.emplace_back(m, idx_[c][j], v);
            };
            for (int j : {m, m + 1}) {
                addD(0, j, 0.5 * I * double(kh_.k1));
                addD(1, j, 0.5 * I * double(kh_.k2));
            }
            addD(2, m + 1, 1.0 / h_[m]);
            addD(2, m, -1.0 / h_[m]);
        }
        D_.resize(np_, nu_);
        D_.setFromTriplets(TD.begin(), TD.end());
        // G = -W_u^{-1} D^H W_p
        for (int k = 0; k < D_.outerSize(); ++k)
            for (SpMat::InnerIterator it(D_, k); it; ++it) {
                const int m = int(it.row()), col = int(it.col());
                TG.emplace_back(col, m, -std::conj(it.value()) * h_[m] / wcol(col));
            }
        G_.resize(nu_, np_);
        G_.setFromTriplets(TG.begin(), TG.end());
        M_.resize(nu_, nu_);
        M_.setFromTriplets(TM.begin(), TM.end());
    }
    [[nodiscard]] double wcol(int col) const { return w_[node_[col]]; }

    HMode kh_;
    std::shared_ptr<const std::vector<double>> z_;
    Params p_;
    bool penal_;
    int N_ = 0, nu_ = 0, np_ = 0;
    std::vector<std::vector<int>> idx_;
    std::vector<int> node_;  ///< node of each velocity unknown
    std::vector<double> h_, w_;
    SpMat M_, D_, G_;
    Eigen::SparseLU<SpMat> lu_;
};

}  // namespace detail

/** @brief Integrate one horizontal mode. */
inline ModeTrajectory solve_direct_mode(const HMode& kh, const SpectralField& gamma, const BoundaryTrace& sigma,
                                        const Params& p, const DirectOptions& o) {
    const double dt0 = o.dt > 0 ? o.dt : p.epsilon / 10;
    if (o.check_resolution) check_direct_resolution(p, o, dt0);
    const double a = o.penalization_only ? (o.grading ? *o.grading : 0.0)
                                         : (o.grading ? *o.grading : grading_for(o.Nz, p.layer(), o.nodes_in_layer));
    auto z = std::make_shared<const std::vector<double>>(tanh_grid(o.Nz, a));
    detail::ModeOperator op(kh, z, p, o.penalization_only);

    ModeGrid g;
    g.kh = kh;
    g.z = z;
    g.u1.setZero(o.Nz + 1);
    g.u2.setZero(o.Nz + 1);
    g.u3.setZero(o.Nz + 1);
    g.p.setZero(o.Nz);
    for (const auto& [k, c] : gamma.coeffs)
        if (k.h() == kh)
            for (int j = 0; j <= o.Nz; ++j) {
                const Vec3c v = c * basis_profile(k, (*z)[j]);
                g.u1[j] += v[0];
                g.u2[j] += v[1];
                g.u3[j] += v[2];
            }
    auto stress = [&](double t) {
        Vec2c s{};
        if (sigma.side != 1) return s;
        for (const auto& e : sigma.entries)
            if (e.kh == kh) s += (p.beta * e.env(t) * std::exp(I * e.mu * t / p.epsilon)) * e.delta;
        return s;
    };

    ModeTrajectory tr;
    tr.kh = kh;
    Eigen::VectorXcd u = op.pack(g);
    const int nsteps = int(std::ceil(o.t_end / dt0 - 1e-9));
    const double dt = nsteps > 0 ? o.t_end / nsteps : dt0;
    double E0 = op.energy(u), acc = 0;
    auto record = [&](double t, const Eigen::VectorXcd& x, bool snap, double diss) {
        StepDiagnostics d;
        d.t = t;
        d.energy = op.energy(x.head(op.nu()));
        d.dissipation = diss;
        const Eigen::VectorXcd div = op.apply_D(x.head(op.nu()));
        const double us = std::max(x.head(op.nu()).cwiseAbs().maxCoeff(), 1e-300);
        d.divergence = div.size() ? div.cwiseAbs().maxCoeff() / (us * std::max(1.0, kh.norm()) * op.np()) : 0.0;
        d.energy_residual = d.energy - E0 + acc;
        tr.diagnostics.push_back(d);
        if (snap) {
            ModeGrid s = g;
            op.unpack(x, s);
            tr.times.push_back(t);
            tr.snapshots.push_back(std::move(s));
        }
    };
    {
        ModeGrid s = g;
        tr.times.push_back(0.0);
        tr.snapshots.push_back(s);
        tr.diagnostics.push_back({0.0, E0, op.dissipation(u), 0.0, 0.0});
    }
    double t = 0;
    int step = 0;
    Eigen::VectorXcd x;
    // backward-Euler start over the first step
    if (nsteps > 0 && o.startup_steps > 0) {
        const double h = dt / o.startup_steps;
        op.factor(1.0 / h, 1.0);
        for (int s = 0; s < o.startup_steps; ++s) {
            const Vec2c gs = stress(t + h);
            x = op.solve(u / h + op.stress_vector(gs));
            const Eigen::VectorXcd un = x.head(op.nu());
            acc += h * (op.dissipation(un) - op.stress_work(un, gs));
            u = un;
            t += h;
        }
        ++step;
        ModeGrid cur = g;
        op.unpack(x, cur);
        if (o.observer) o.observer(cur, t);
        record(t, x, step % o.save_every == 0 || step == nsteps, op.dissipation(u));
    }
    if (step < nsteps) op.factor(1.0 / dt, 0.5);
    for (; step < nsteps;) {
        const Vec2c gm = stress(t + dt / 2);
        const Eigen::VectorXcd rhs = u / dt - 0.5 * op.apply_M(u) + op.stress_vector(gm);
        x = op.solve(rhs);
        const Eigen::VectorXcd un = x.head(op.nu());
        const Eigen::VectorXcd um = 0.5 * (u + un);
        const double diss = op.dissipation(um);
        acc += dt * (diss - op.stress_work(um, gm));
        u = un;
        ++step;
        t = step * dt;
        if (o.observer) {
            ModeGrid cur = g;
            op.unpack(x, cur);
            o.observer(cur, t);
        }
        record(t, x, step % o.save_every == 0 || step == nsteps, diss);
    }
    return tr;
}

/** @brief Integrate every horizontal mode present in gamma or sigma; modes run independently. */
inline std::map<HMode, ModeTrajectory> solve_direct(const SpectralField& gamma, const BoundaryTrace& sigma, const Params& p,
                                                    const DirectOptions& o) {
    std::set<HMode> modes = gamma.hmodes();
    if (sigma.side == 1)
        for (const auto& e : sigma.entries) modes.insert(e.kh);
    std::map<HMode, ModeTrajectory> out;
    if (modes.empty()) return out;
    std::vector<HMode> list(modes.begin(), modes.end());
    const int par = std::max(1, o.parallel);
    for (std::size_t i = 0; i < list.size(); i += par) {
        std::vector<std::future<ModeTrajectory>> fs;
        for (std::size_t j = i; j < std::min(list.size(), i + par); ++j)
            fs.push_back(std::async(par > 1 ? std::launch::async : std::launch::deferred,
                                    [&, kh = list[j]] { return solve_direct_mode(kh, gamma, sigma, p, o); }));
        for (auto& f : fs) {
            auto tr = f.get();
            out[tr.kh] = std::move(tr);
        }
    }
    return out;
}

/**
 * @brief Phase accumulated by Crank-Nicolson over time t for a pure oscillation exp(-i omega t) with step dt.
 *        Multiplying a projection by exp(-i * this) removes the oscillation including the scheme's phase lag.
 */
inline double crank_nicolson_phase(double omega, double dt, double t) {
    return -2.0 * std::atan(omega * dt / 2.0) * (t / dt);
}

/** @brief Least-squares fit of c(t) ~ C exp(-rate t) on a window. */
struct DecayFit {
    cplx rate{};
    double rms_residual = 0;
    bool flagged = false;
    std::string note;
};

inline DecayFit fit_decay(const std::vector<double>& t, const std::vector<cplx>& c, double t0, double t1,
                          double residual_threshold = 1e-2) {
    std::vector<double> tt, la, ph;
    double prev = 0;
    bool first = true;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (t[i] < t0 || t[i] > t1) continue;
        if (std::abs(c[i]) <= 0) throw DomainError("fit_decay: zero amplitude inside window");
        double a = std::arg(c[i]);
        if (!first) {
            while (a - prev > pi) a -= 2 * pi;
            while (a - prev < -pi) a += 2 * pi;
        }
        first = false;
        prev = a;
        tt.push_back(t[i]);
        la.push_back(std::log(std::abs(c[i])));
        ph.push_back(a);
    }
    if (tt.size() < 3) throw DomainError("fit_decay: fewer than 3 samples in window");
    auto ols = [&](const std::vector<double>& y, double& slope, double& icpt) {
        const double n = double(tt.size());
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (std::size_t i = 0; i < tt.size(); ++i) {
            sx += tt[i];
            sy += y[i];
            sxx += tt[i] * tt[i];
            sxy += tt[i] * y[i];
        }
        slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        icpt = (sy - slope * sx) / n;
    };
    double s1, i1, s2, i2;
    ols(la, s1, i1);
    ols(ph, s2, i2);
    DecayFit f;
    f.rate = {-s1, -s2};
    double r = 0;
    for (std::size_t i = 0; i < tt.size(); ++i) r += std::pow(la[i] - (i1 + s1 * tt[i]), 2);
    f.rms_residual = std::sqrt(r / tt.size());
    if ((t1 - t0) * std::abs(f.rate.real()) < 1.0) {
        f.flagged = true;
        f.note = "window shorter than one e-fold";
    }
    if (f.rms_residual > residual_threshold) {
        f.flagged = true;
        f.note += (f.note.empty() ? "" : "; ") + std::string("non-exponential window");
    }
    return f;
}

}  // namespace rotek

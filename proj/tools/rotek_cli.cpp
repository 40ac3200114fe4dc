// Command-line front end: eigen/damping tables, layer builds, envelopes, direct runs, comparisons, sweeps.

#include <iostream>

#include "CLI11.hpp"
#include "rotek/harness.hpp"

using namespace rotek;
namespace fs = std::filesystem;

namespace {

struct Common {
    std::string config;
    std::string out = "out";
    int parallel = 1;
    bool seedless = false;
};

json read_config(const Common& c) { return c.config.empty() ? json::object() : load_config(c.config); }

json default_gamma() { return json::array({{{"k", {1, 0, 1}}, {"c", {1.0, 0.0}}}}); }
json default_stress() { return json::array({{{"mu", 2.0}, {"k", {1, 0}}, {"delta", {1.0, 0.0}}}}); }

int finish(const fs::path& out, json summary, const std::vector<Check>& checks, const Common& c) {
    json cs = json::array();
    for (const auto& k : checks) cs.push_back(to_json(k));
    summary["checks"] = cs;
    summary["seedless"] = c.seedless;
    summary["pass"] = all_pass(checks);
    write_json(out / "summary.json", summary);
    for (const auto& k : checks)
        std::cout << (k.pass ? "PASS " : "FAIL ") << k.name << " value=" << k.value << " (" << k.relation
                  << ", target=" << k.target << ", tol=" << k.tolerance << ")\n";
    return all_pass(checks) ? 0 : 1;
}

int cmd_modes(const Common& c) {
    const json cfg = read_config(c);
    const Params p = params_from_json(cfg, Params{1e-3, 1e-3, 1.0, 4, {}});
    const double radius = cfg.value("radius", 3.0);
    Table T({"k1", "k2", "k3", "lambda", "norm_pi", "A_re", "A_im", "R_limit", "I_limit", "damping_re", "damping_im"});
    std::vector<Check> checks;
    bool lam_ok = true, damp_ok = true;
    for (const auto& k : modes_in_ball(radius)) {
        const double lam = eigenvalue(k);
        cplx A{};
        EkmanLimit L{};
        if (!k.h().is_zero()) {
            A = ekman_coefficient(k, p).A;
            if (!is_unit(lam)) L = ekman_limit_coefficient(k);
        }
        const cplx d = damping_rate(k, p);
        lam_ok = lam_ok && std::abs(lam) <= 1.0;
        if (!k.h().is_zero()) damp_ok = damp_ok && d.real() > 0;
        T.add({double(k.k1), double(k.k2), double(k.k3), lam, k.norm_pi(), A.real(), A.imag(), L.R, L.I, d.real(), d.imag()});
    }
    T.write(fs::path(c.out) / "modes.csv");
    checks.push_back(Check::flag("eigenvalues_in_unit_interval", lam_ok, "|lambda_k| <= 1"));
    checks.push_back(Check::flag("damping_positive", damp_ok, "Re(damping) > 0 for k_h != 0"));
    return finish(c.out, {{"command", "modes"}, {"radius", radius}, {"params", detail::params_json(p)}}, checks, c);
}

int cmd_bl(const Common& c) {
    const json cfg = read_config(c);
    const Params p = params_from_json(cfg, Params{1e-2, 1e-2, 1.0, 4, {}});
    const json bottom = cfg.value("bottom", json::array({{{"mu", 0.0}, {"k", {1, 0}}, {"delta", {1.0, 0.0}}}}));
    const json top = cfg.value("top", json::array());
    const double t = cfg.value("t", 0.0);
    const int nz = cfg.value("samples", 201);
    const auto sol = build_B(trace_from_json(bottom, 0), trace_from_json(top, 1), p);
    Table M({"kind", "side", "mu", "k1", "k2", "sigma", "lambda_re", "lambda_im", "alpha_re", "alpha_im"});
    bool decay_ok = true;
    for (const auto* list : {&sol.classical, &sol.quasi_resonant})
        for (const auto& m : *list) {
            decay_ok = decay_ok && (m.lambda.real() > 0 || (m.kh.is_zero() && std::abs(m.lambda) == 0.0));
            M.add({double(int(m.kind)), double(m.side), m.mu, double(m.kh.k1), double(m.kh.k2), double(m.sigma),
                   m.lambda.real(), m.lambda.imag(), m.alpha.real(), m.alpha.imag()});
        }
    M.write(fs::path(c.out) / "layer_modes.csv");
    Table P({"k1", "k2", "z", "u1_re", "u1_im", "u2_re", "u2_im", "u3_re", "u3_im"});
    for (const auto& kh : sol.hmodes())
        for (int i = 0; i < nz; ++i) {
            const double z = double(i) / (nz - 1);
            const Vec3c u = sol.coeff(kh, t, z);
            P.add({double(kh.k1), double(kh.k2), z, u[0].real(), u[0].imag(), u[1].real(), u[1].imag(), u[2].real(), u[2].imag()});
        }
    P.write(fs::path(c.out) / "profiles.csv");
    const auto res = trace_residuals(sol, t);
    const double tol = cfg.value("trace_tolerance", 1e-6);
    std::vector<Check> checks{Check::below("opposite_wall_trace", res.max(), tol),
                              Check::flag("layers_decay", decay_ok, "Re(lambda) > 0")};
    json s = {{"command", "bl"},
              {"params", detail::params_json(p)},
              {"t", t},
              {"norm_classical_h", layer_l2(sol.classical, t, p, 3)},
              {"norm_classical_3", layer_l2(sol.classical, t, p, 4)},
              {"norm_quasi_h", layer_l2(sol.quasi_resonant, t, p, 3)},
              {"norm_quasi_3", layer_l2(sol.quasi_resonant, t, p, 4)},
              {"norm_resonant_h", resonant_l2(sol.resonant, t, p)}};
    return finish(c.out, s, checks, c);
}

int cmd_envelope(const Common& c) {
    const json cfg = read_config(c);
    const Params p = params_from_json(cfg, Params{1e-3, 1e-3, 1.0, 4, {}});
    const SpectralField gamma = field_from_json(cfg.value("gamma", default_gamma()));
    const double T = cfg.value("t_end", 1.0);
    const int n = cfg.value("samples", 21);
    EnvelopeOptions o;
    o.vertical_viscosity = cfg.value("vertical_viscosity", false);
    o.limit_coefficient = cfg.value("limit_coefficient", false);
    if (cfg.value("pairing", std::string("orthonormal")) == "averaged") o.pairing = Pairing::averaged;
    std::vector<double> times;
    for (int i = 0; i < n; ++i) times.push_back(T * i / std::max(n - 1, 1));
    const auto ode = envelope_solve(gamma, p, times, o);
    Table E({"t", "k1", "k2", "k3", "c_re", "c_im", "closed_re", "closed_im"});
    double worst = 0;
    bool monotone = true;
    std::map<ModeIndex, double> prev;
    for (std::size_t i = 0; i < times.size(); ++i) {
        const auto cf = evolve_c(gamma, p, times[i], o);
        for (const auto& [k, v] : ode[i].coeffs) {
            const cplx w = cf.at(k);
            worst = std::max(worst, std::abs(v - w));
            if (prev.count(k) && std::abs(v) > prev[k] * (1 + 1e-12)) monotone = false;
            prev[k] = std::abs(v);
            E.add({times[i], double(k.k1), double(k.k2), double(k.k3), v.real(), v.imag(), w.real(), w.imag()});
        }
    }
    E.write(fs::path(c.out) / "envelope.csv");
    const double tol = cfg.value("tolerance", 1e-9) * std::max(gamma.norm(), 1e-300);
    std::vector<Check> checks{Check::below("ode_vs_closed_form", worst, tol),
                              Check::flag("amplitudes_nonincreasing", monotone, "|c_k(t)| nonincreasing")};
    return finish(c.out, {{"command", "envelope"}, {"params", detail::params_json(p)}}, checks, c);
}

DirectOptions direct_options(const json& cfg, const Params& p, int parallel) {
    DirectOptions o;
    o.Nz = cfg.value("Nz", 256);
    o.t_end = cfg.value("t_end", 0.5);
    o.dt = cfg.value("dt_over_epsilon", 0.1) * p.epsilon;
    o.save_every = cfg.value("save_every", 10);
    o.nodes_in_layer = cfg.value("nodes_in_layer", 8);
    o.penalization_only = cfg.value("penalization_only", false);
    o.parallel = parallel;
    return o;
}

int cmd_direct(const Common& c) {
    const json cfg = read_config(c);
    const Params p = params_from_json(cfg, Params{1e-2, 1e-2, 1.0, 4, {}});
    const json gj = cfg.value("gamma", cfg.contains("stress") ? json::array() : default_gamma());
    const SpectralField gamma = field_from_json(gj);
    const BoundaryTrace sigma = trace_from_json(cfg.value("stress", json::array()), 1);
    const auto o = direct_options(cfg, p, c.parallel);
    const auto run = solve_direct(gamma, sigma, p, o);
    double div = 0;
    bool energy_ok = true;
    json modes = json::array();
    for (const auto& [kh, tr] : run) {
        const fs::path dir = fs::path(c.out) / ("mode_" + std::to_string(kh.k1) + "_" + std::to_string(kh.k2));
        Table S({"t", "z", "u1_re", "u1_im", "u2_re", "u2_im", "u3_re", "u3_im"});
        Table Pp({"t", "z", "p_re", "p_im"});
        for (std::size_t i = 0; i < tr.times.size(); ++i) {
            const auto& g = tr.snapshots[i];
            for (int j = 0; j <= g.N(); ++j) {
                const Vec3c u = g.at(j);
                S.add({tr.times[i], (*g.z)[j], u[0].real(), u[0].imag(), u[1].real(), u[1].imag(), u[2].real(), u[2].imag()});
            }
            for (int j = 0; j < g.N(); ++j)
                Pp.add({tr.times[i], 0.5 * ((*g.z)[j] + (*g.z)[j + 1]), g.p[j].real(), g.p[j].imag()});
        }
        S.write(dir / "snapshots.csv");
        Pp.write(dir / "pressure.csv");
        Table D({"t", "energy", "dissipation", "divergence", "energy_residual"});
        for (std::size_t i = 0; i < tr.diagnostics.size(); ++i) {
            const auto& d = tr.diagnostics[i];
            D.add({d.t, d.energy, d.dissipation, d.divergence, d.energy_residual});
            div = std::max(div, d.divergence);
            if (sigma.entries.empty() && i > 0 && d.energy > tr.diagnostics[i - 1].energy * (1 + 1e-12)) energy_ok = false;
        }
        D.write(dir / "diagnostics.csv");
        modes.push_back({{"k", {kh.k1, kh.k2}}, {"final_norm", l2_norm(tr.snapshots.back())}});
    }
    std::vector<Check> checks{Check::below("divergence_residual", div, cfg.value("divergence_tolerance", 1e-10))};
    if (sigma.entries.empty()) checks.push_back(Check::flag("energy_nonincreasing", energy_ok, "E(t_{n+1}) <= E(t_n)"));
    return finish(c.out, {{"command", "direct"}, {"params", detail::params_json(p)}, {"modes", modes}}, checks, c);
}

int cmd_compare(const Common& c) {
    const json cfg = read_config(c);
    const Params p = params_from_json(cfg, Params{1e-2, 1e-2, 1.0, 4, {}});
    const std::string which = cfg.value("case", std::string("dirichlet"));
    auto o = direct_options(cfg, p, c.parallel);
    if (!cfg.contains("Nz")) o.Nz = 512;
    std::map<HMode, ModeTrajectory> direct;
    ApproxSolution A;
    double scale = 1;
    std::string only;
    if (which == "dirichlet") {
        const SpectralField gamma = field_from_json(cfg.value("gamma", default_gamma()));
        direct = solve_direct(gamma, BoundaryTrace(1), p, o);
        A = assemble_dirichlet_approx(gamma, p);
        scale = gamma.norm();
        only = cfg.value("part", std::string("interior"));
    } else if (which == "wind") {
        const BoundaryTrace sigma = trace_from_json(cfg.value("stress", default_stress()), 1);
        direct = solve_direct(SpectralField{}, sigma, p, o);
        A = assemble_wind_approx(sigma, p);
        scale = 0;
        for (double t : direct.begin()->second.times) scale = std::max(scale, A.norm(t));
        only = cfg.value("part", std::string(""));
    } else {
        throw DomainError("compare: case must be dirichlet or wind");
    }
    const ErrorCurve E = compare(direct, A, {}, only);
    E.table().write(fs::path(c.out) / "error.csv");
    const double rel = E.sup / std::max(scale, 1e-300);
    std::vector<Check> checks{Check::below("relative_sup_error", rel, cfg.value("tolerance", which == "dirichlet" ? 0.1 : 2.0)),
                              Check::flag("attribution_complete", E.attribution_complete, "excluded parts + remainder >= error")};
    json res = json::object();
    for (const auto& [k, v] : A.residuals) res[k] = v;
    return finish(c.out,
                  {{"command", "compare"}, {"case", which}, {"params", detail::params_json(p)}, {"sup_error", E.sup},
                   {"scale", scale}, {"residuals", res}, {"warnings", A.warnings}},
                  checks, c);
}

int cmd_sweep(const Common& c) {
    json cfg = read_config(c);
    cfg["out"] = c.out;
    if (!cfg.contains("parallel")) cfg["parallel"] = c.parallel;
    const ExperimentSpec spec = ExperimentSpec::from_json(cfg);
    const RunResult R = run(spec);
    for (const auto& k : R.checks)
        std::cout << (k.pass ? "PASS " : "FAIL ") << k.name << " value=" << k.value << " (" << k.relation
                  << ", target=" << k.target << ", tol=" << k.tolerance << ")\n";
    for (std::size_t i = 0; i < R.points.size(); ++i) {
        const auto& pt = R.points[i];
        if (!pt.error.empty()) std::cout << "FAIL point " << i << ": " << pt.error << "\n";
        for (const auto& k : pt.checks)
            std::cout << (k.pass ? "PASS " : "FAIL ") << "point " << i << " " << k.name << " value=" << k.value
                      << " (tol=" << k.tolerance << ")\n";
    }
    return R.pass() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Rotating-layer asymptotics toolkit"};
    app.require_subcommand(1);
    Common c;
    auto add_common = [&](CLI::App* s) {
        s->add_option("--config", c.config, "JSON or key=value configuration file");
        s->add_option("--out", c.out, "output directory");
        s->add_option("--parallel", c.parallel, "concurrent modes or grid points")->check(CLI::PositiveNumber);
        s->add_flag("--seedless", c.seedless, "fail if any random numbers are requested");
    };
    std::map<CLI::App*, std::function<int(const Common&)>> handlers;
    auto sub = [&](const char* name, const char* help, std::function<int(const Common&)> f) {
        auto* s = app.add_subcommand(name, help);
        add_common(s);
        handlers[s] = std::move(f);
    };
    sub("modes", "eigenvalues, Ekman coefficients and damping rates", cmd_modes);
    sub("bl", "build and sample boundary layers for given wall data", cmd_bl);
    sub("envelope", "integrate the damped envelope system", cmd_envelope);
    sub("direct", "run the reference solver and dump snapshots", cmd_direct);
    sub("compare", "direct solver against the approximate solution", cmd_compare);
    sub("sweep", "run a parameter sweep experiment", cmd_sweep);
    CLI11_PARSE(app, argc, argv);
    seedless_mode() = c.seedless;
    try {
        for (const auto& [s, f] : handlers)
            if (s->parsed()) {
                std::filesystem::create_directories(c.out);
                return f(c);
            }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}

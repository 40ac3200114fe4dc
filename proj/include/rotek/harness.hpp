#pragma once
/** @file harness.hpp
 *  @brief Experiment runner: parameter sweeps, log-log regressions, direct/approximate comparisons and I/O.
 */

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <random>
#include <regex>
#include <sstream>

#include "json.hpp"

#include "correctors.hpp"
#include "direct_solver.hpp"

namespace rotek {

using json = nlohmann::json;

// ---------------------------------------------------------------------------------------------
// Regression

struct RegressionResult {
    double slope = 0;
    double intercept = 0;
    double r_squared = 0;
    std::vector<double> residuals;  ///< log y - fit, per point
};

/** @brief Ordinary least squares of log y against log x. */
inline RegressionResult regress_loglog(const std::vector<std::pair<double, double>>& pts) {
    if (pts.size() < 3) throw DomainError("regress_loglog: at least 3 points required");
    std::vector<double> X, Y;
    for (const auto& [x, y] : pts) {
        if (!(x > 0 && y > 0)) throw DomainError("regress_loglog: data must be positive");
        X.push_back(std::log(x));
        Y.push_back(std::log(y));
    }
    const double n = double(X.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < X.size(); ++i) {
        mx += X[i] / n;
        my += Y[i] / n;
    }
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < X.size(); ++i) {
        sxx += (X[i] - mx) * (X[i] - mx);
        sxy += (X[i] - mx) * (Y[i] - my);
        syy += (Y[i] - my) * (Y[i] - my);
    }
    if (sxx == 0) throw DomainError("regress_loglog: abscissae must not all coincide");
    RegressionResult r;
    r.slope = sxy / sxx;
    r.intercept = my - r.slope * mx;
    double ss = 0;
    for (std::size_t i = 0; i < X.size(); ++i) {
        const double e = Y[i] - (r.intercept + r.slope * X[i]);
        r.residuals.push_back(e);
        ss += e * e;
    }
    r.r_squared = syy > 0 ? 1 - ss / syy : 1.0;
    return r;
}

inline json to_json(const RegressionResult& r) {
    return {{"slope", r.slope}, {"intercept", r.intercept}, {"r_squared", r.r_squared}, {"residuals", r.residuals}};
}

// ---------------------------------------------------------------------------------------------
// Checks and tables

/** @brief One declared check with the tolerance it was evaluated against. */
struct Check {
    std::string name;
    double value = 0;
    std::string relation;  ///< "|value - target| <= tol", "value < tol", "value > tol", ...
    double target = 0;
    double tolerance = 0;
    bool pass = false;

    static Check near(std::string n, double v, double target, double tol) {
        return {std::move(n), v, "|value - target| <= tol", target, tol, std::abs(v - target) <= tol};
    }
    static Check below(std::string n, double v, double tol) { return {std::move(n), v, "value < tol", 0, tol, v < tol}; }
    static Check above(std::string n, double v, double tol) { return {std::move(n), v, "value > tol", 0, tol, v > tol}; }
    static Check flag(std::string n, bool ok, std::string what) {
        return {std::move(n), ok ? 1.0 : 0.0, std::move(what), 1, 0, ok};
    }
};

inline json to_json(const Check& c) {
    return {{"name", c.name},     {"value", c.value},         {"relation", c.relation},
            {"target", c.target}, {"tolerance", c.tolerance}, {"pass", c.pass}};
}

inline bool all_pass(const std::vector<Check>& cs) {
    return std::all_of(cs.begin(), cs.end(), [](const Check& c) { return c.pass; });
}

/** @brief Numeric table with named columns, written as CSV with fixed formatting. */
struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;

    Table() = default;
    explicit Table(std::vector<std::string> c) : columns(std::move(c)) {}
    void add(std::vector<double> r) {
        if (r.size() != columns.size()) throw DomainError("Table::add: row width mismatch");
        rows.push_back(std::move(r));
    }
    [[nodiscard]] std::vector<double> column(const std::string& name) const {
        auto it = std::find(columns.begin(), columns.end(), name);
        if (it == columns.end()) throw DomainError("Table: no column " + name);
        const auto j = std::size_t(it - columns.begin());
        std::vector<double> out;
        for (const auto& r : rows) out.push_back(r[j]);
        return out;
    }
    [[nodiscard]] std::string csv() const {
        std::string s;
        for (std::size_t j = 0; j < columns.size(); ++j) s += (j ? "," : "") + columns[j];
        s += "\n";
        char buf[64];
        for (const auto& r : rows) {
            for (std::size_t j = 0; j < r.size(); ++j) {
                std::snprintf(buf, sizeof buf, "%s%.12e", j ? "," : "", r[j]);
                s += buf;
            }
            s += "\n";
        }
        return s;
    }
    void write(const std::filesystem::path& path) const {
        std::filesystem::create_directories(path.parent_path());
        std::ofstream f(path);
        if (!f) throw std::runtime_error("cannot write " + path.string());
        f << csv();
    }
};

inline void write_json(const std::filesystem::path& path, const json& j) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << j.dump(2) << "\n";
}

// ---------------------------------------------------------------------------------------------
// Configuration

namespace detail {
inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}
inline json parse_scalar(const std::string& v) {
    if (v.find(',') != std::string::npos && v.front() != '[' && v.front() != '{') {
        json arr = json::array();
        std::stringstream ss(v);
        std::string item;
        while (std::getline(ss, item, ',')) arr.push_back(parse_scalar(trim(item)));
        return arr;
    }
    auto j = json::parse(v, nullptr, false);
    if (!j.is_discarded()) return j;
    return v;
}
}  // namespace detail

/** @brief Parse configuration text: a JSON object, or lines `key = value` with `#` comments and dotted keys. */
inline json parse_config(const std::string& text) {
    const std::string t = detail::trim(text);
    if (!t.empty() && t.front() == '{') return json::parse(t);
    json out = json::object();
    std::stringstream ss(text);
    std::string line;
    int n = 0;
    while (std::getline(ss, line)) {
        ++n;
        if (auto h = line.find('#'); h != std::string::npos) line = line.substr(0, h);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw DomainError("config line " + std::to_string(n) + ": expected key = value");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string val = detail::trim(line.substr(eq + 1));
        if (key.empty()) throw DomainError("config line " + std::to_string(n) + ": empty key");
        json::json_pointer ptr("/" + std::regex_replace(key, std::regex("\\."), "/"));
        out[ptr] = detail::parse_scalar(val);
    }
    return out;
}

inline json load_config(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw DomainError("cannot open config " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str());
}

/** @brief Process-wide switch forbidding any random number use. */
inline std::atomic<bool>& seedless_mode() {
    static std::atomic<bool> flag{false};
    return flag;
}

/** @brief Seeded engine for calibration runs; refuses to construct under seedless mode. */
inline std::mt19937_64 seeded_engine(std::uint64_t seed) {
    if (seedless_mode()) throw std::logic_error("random numbers requested in seedless mode");
    return std::mt19937_64(seed);
}

// ---------------------------------------------------------------------------------------------
// Input tables from JSON

inline ModeIndex mode_from_json(const json& j) { return {j.at(0).get<int>(), j.at(1).get<int>(), j.at(2).get<int>()}; }
inline HMode hmode_from_json(const json& j) { return {j.at(0).get<int>(), j.at(1).get<int>()}; }

inline cplx cplx_from_json(const json& j) {
    if (j.is_number()) return j.get<double>();
    return {j.at(0).get<double>(), j.at(1).get<double>()};
}

/** @brief `[{"k": [k1,k2,k3], "c": [re, im]}]` -> field. */
inline SpectralField field_from_json(const json& j) {
    SpectralField f;
    for (const auto& e : j) f.add(mode_from_json(e.at("k")), cplx_from_json(e.value("c", json(1.0))));
    return f;
}

/** @brief `[{"mu": m, "k": [k1,k2], "delta": [[re,im],[re,im]]}]` -> trace at the given wall. */
inline BoundaryTrace trace_from_json(const json& j, int side) {
    BoundaryTrace t(side);
    for (const auto& e : j) {
        const auto& d = e.at("delta");
        t.add(e.at("mu").get<double>(), hmode_from_json(e.at("k")), {cplx_from_json(d.at(0)), cplx_from_json(d.at(1))});
    }
    return t;
}

inline Params params_from_json(const json& j, Params p = {}) {
    p.epsilon = j.value("epsilon", p.epsilon);
    p.nu = j.value("nu", p.nu);
    p.beta = j.value("beta", p.beta);
    p.N = j.value("N", p.N);
    p.validate();
    return p;
}

// ---------------------------------------------------------------------------------------------
// Comparison of direct and approximate solutions

/** @brief Sup-in-time L^2 differences with per-part attribution. */
struct ErrorCurve {
    std::vector<double> times;
    std::vector<double> total;      ///< ||direct - selected approximation||
    std::vector<double> remainder;  ///< ||direct - full approximation||
    std::map<std::string, std::vector<double>> parts;  ///< norms of each approximation part
    double sup = 0;
    bool attribution_complete = true;  ///< excluded parts + remainder >= total at every time

    [[nodiscard]] Table table() const {
        std::vector<std::string> cols{"t", "error", "remainder"};
        for (const auto& [n, v] : parts) cols.push_back("norm_" + n);
        Table T(cols);
        for (std::size_t i = 0; i < times.size(); ++i) {
            std::vector<double> r{times[i], total[i], remainder[i]};
            for (const auto& [n, v] : parts) r.push_back(v[i]);
            T.add(r);
        }
        return T;
    }
};

/**
 * @brief Compare direct trajectories with an approximation restricted to `only` (empty: all parts;
 *        "!name": all but one). `times` must be snapshot times; empty selects every snapshot.
 */
inline ErrorCurve compare(const std::map<HMode, ModeTrajectory>& direct, const ApproxSolution& approx,
                          std::vector<double> times = {}, const std::string& only = "") {
    for (const auto& kh : approx.hmodes())
        if (!direct.count(kh)) throw DomainError("compare: approximation has a mode absent from the direct run");
    if (direct.empty()) throw DomainError("compare: empty direct run");
    if (times.empty()) times = direct.begin()->second.times;
    std::string sel = only, skip;
    if (!sel.empty() && sel[0] == '!') {
        skip = sel.substr(1);
        sel.clear();
    }
    auto selected = [&](const FieldPart& f) { return (sel.empty() || f.name == sel) && f.name != skip; };
    ErrorCurve E;
    for (const auto& f : approx.parts) E.parts[f.name] = {};
    for (double t : times) {
        double tot = 0, rem = 0;
        std::map<std::string, double> pn;
        for (const auto& [kh, tr] : direct) {
            std::size_t idx = tr.times.size();
            for (std::size_t i = 0; i < tr.times.size(); ++i)
                if (std::abs(tr.times[i] - t) <= 1e-9 * std::max(1.0, t)) idx = i;
            if (idx == tr.times.size()) throw DomainError("compare: requested time is not a snapshot time");
            const ModeGrid& g = tr.snapshots[idx];
            for (int j = 0; j <= g.N(); ++j) {
                const double z = (*g.z)[j], w = g.weight(j);
                Vec3c sel_sum{}, all_sum{};
                for (const auto& f : approx.parts) {
                    if (!f.modes.count(kh)) continue;
                    const Vec3c v = f.coeff(kh, t, z);
                    all_sum += v;
                    if (selected(f)) sel_sum += v;
                    pn[f.name] += w * norm2(v);
                }
                tot += w * norm2(g.at(j) - sel_sum);
                rem += w * norm2(g.at(j) - all_sum);
            }
        }
        E.times.push_back(t);
        E.total.push_back(2 * pi * std::sqrt(tot));
        E.remainder.push_back(2 * pi * std::sqrt(rem));
        double bound = E.remainder.back();
        for (const auto& f : approx.parts) {
            const double n = 2 * pi * std::sqrt(pn[f.name]);
            E.parts[f.name].push_back(n);
            if (!selected(f)) bound += n;
        }
        if (bound < E.total.back() * (1 - 1e-10)) E.attribution_complete = false;
        E.sup = std::max(E.sup, E.total.back());
    }
    return E;
}

/** @brief Projection of a trajectory onto N_l with the discrete rotation removed (for rate fitting). */
inline std::vector<cplx> demodulated_projection(const ModeTrajectory& tr, const ModeIndex& l, const Params& p, double dt) {
    std::vector<cplx> c;
    const double omega = eigenvalue(l) / p.epsilon;
    for (std::size_t i = 0; i < tr.times.size(); ++i)
        c.push_back(project_state(tr.snapshots[i], l) * std::exp(-I * crank_nicolson_phase(omega, dt, tr.times[i])));
    return c;
}

// ---------------------------------------------------------------------------------------------
// Experiments

/** @brief Top-driven resonant heat problem on a finite layer: v(0) = 0, dz v(1) = 1, v(t=0) = 0. */
inline double resonant_top_finite_depth(double nu, double t, double z) {
    double s = z;
    for (int n = 0; n < 20000; ++n) {
        const double k = (n + 0.5) * pi;
        const double e = std::exp(-nu * k * k * t);
        const double term = 2.0 * (n % 2 ? -1.0 : 1.0) / (k * k) * std::sin(k * z) * e;
        s -= term;
        if (e < 1e-18) break;
    }
    return s;
}

/** @brief Mass fraction of a profile located in [z0, z1]. */
inline double mass_fraction(const std::function<double(double)>& f, double z0, double z1) {
    const auto rule = wall_graded_rule(1e-8, 3, 10);
    double in = 0, all = 0;
    for (std::size_t i = 0; i < rule.x.size(); ++i) {
        const double v = f(rule.x[i]) * f(rule.x[i]) * rule.w[i];
        all += v;
        if (rule.x[i] >= z0 && rule.x[i] <= z1) in += v;
    }
    return all > 0 ? in / all : 0.0;
}

enum class ExperimentKind { bl_scaling, resonant_growth, wind_convergence, dirichlet_convergence, ekman_rate, destabilization };

inline ExperimentKind kind_from_string(const std::string& s) {
    static const std::map<std::string, ExperimentKind> m{{"bl_scaling", ExperimentKind::bl_scaling},
                                                         {"resonant_growth", ExperimentKind::resonant_growth},
                                                         {"wind_convergence", ExperimentKind::wind_convergence},
                                                         {"dirichlet_convergence", ExperimentKind::dirichlet_convergence},
                                                         {"ekman_rate", ExperimentKind::ekman_rate},
                                                         {"destabilization", ExperimentKind::destabilization}};
    auto it = m.find(s);
    if (it == m.end()) throw DomainError("unknown experiment kind: " + s);
    return it->second;
}

/** @brief Default settings per kind; tolerances mirror the acceptance targets. */
inline json experiment_defaults(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::bl_scaling:
            return {{"epsilon", {1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7}},
                    {"nu_equals_epsilon", true},
                    {"bottom", {{{"mu", 0.0}, {"k", {1, 0}}, {"delta", {1.0, 0.0}}},
                                {{"mu", 1.0}, {"k", {1, 0}}, {"delta", {1.0, 0.0}}}}},
                    {"top", {{{"mu", 0.0}, {"k", {1, 0}}, {"delta", {1.0, 0.0}}},
                             {{"mu", 1.0}, {"k", {1, 0}}, {"delta", {1.0, 0.0}}}}},
                    {"tolerances", {{"classical_slope", 0.03}, {"quasi_slope", 0.05}, {"quasi_rate_slope", 0.05},
                                    {"quasi_rate_ratio_span", 10.0}}}};
        case ExperimentKind::resonant_growth:
            return {{"epsilon", {1e-3}},
                    {"nu_equals_epsilon", true},
                    {"nu_t", {1e-4, 2e-4, 5e-4, 1e-3, 2e-3, 5e-3, 1e-2}},
                    {"tolerances", {{"growth_slope", 0.05}, {"interior_fraction", 0.1}}}};
        case ExperimentKind::dirichlet_convergence:
            return {{"epsilon", {1e-2, 3e-3, 1e-3}},
                    {"nu_equals_epsilon", true},
                    {"gamma", {{{"k", {1, 0, 1}}, {"c", {1.0, 0.0}}}}},
                    {"Nz", 512},
                    {"dt_over_epsilon", 0.025},
                    {"t_end", 0.5},
                    {"tolerances", {{"relative_error", 0.1}}}};
        case ExperimentKind::ekman_rate:
            return {{"epsilon", {1e-3}},
                    {"nu_equals_epsilon", true},
                    {"gamma", {{{"k", {1, 0, 1}}, {"c", {1.0, 0.0}}}}},
                    {"Nz", 512},
                    {"dt_over_epsilon", 0.1},
                    {"t_end", 1.0},
                    {"window", {0.1, 1.0}},
                    {"tolerances", {{"relative_rate", 0.1}}}};
        case ExperimentKind::wind_convergence:
            return {{"epsilon", {1e-2, 1e-3, 1e-4, 1e-5, 1e-6}},
                    {"nu_equals_epsilon", true},
                    {"stress", {{{"mu", 2.0}, {"k", {1, 0}}, {"delta", {1.0, 0.0}}}}},
                    {"direct_epsilon", {1e-3}},
                    {"Nz", 512},
                    {"dt_over_epsilon", 0.1},
                    {"t_end", 0.5},
                    {"samples", 11},
                    {"tolerances", {{"norm_slope", 0.05}, {"direct_ratio", 5.0}}}};
        case ExperimentKind::destabilization:
            return {{"epsilon", {0.05}},
                    {"nu_equals_epsilon", true},
                    {"stress", {{{"mu", 1.0}, {"k", {0, 0}}, {"delta", {1.0, {0.0, 1.0}}}}}},
                    {"Nz", 128},
                    {"dt_over_epsilon", 0.025},
                    {"t_end", 20.0},
                    {"tolerances", {{"relative_error", 0.02}, {"interior_fraction", 0.1}}}};
    }
    return {};
}

/** @brief Validated experiment description. */
struct ExperimentSpec {
    ExperimentKind kind = ExperimentKind::bl_scaling;
    std::string kind_name;
    json settings;  ///< defaults merged with the user configuration
    std::vector<Params> grid;
    std::filesystem::path out = "out";
    int parallel = 1;

    [[nodiscard]] double tol(const std::string& n) const { return settings.at("tolerances").at(n).get<double>(); }

    static ExperimentSpec from_json(const json& cfg) {
        ExperimentSpec s;
        s.kind_name = cfg.value("kind", std::string("bl_scaling"));
        s.kind = kind_from_string(s.kind_name);
        s.settings = experiment_defaults(s.kind);
        s.settings.merge_patch(cfg);
        s.out = s.settings.value("out", std::string("out"));
        s.parallel = s.settings.value("parallel", 1);
        const auto& S = s.settings;
        auto list = [&](const char* key, double def) {
            std::vector<double> v;
            if (!S.contains(key)) return std::vector<double>{def};
            if (S.at(key).is_array())
                for (const auto& x : S.at(key)) v.push_back(x.get<double>());
            else
                v.push_back(S.at(key).get<double>());
            return v;
        };
        const auto eps = list("epsilon", 1e-2);
        // an explicit nu list unties the grid unless the configuration insists otherwise
        const bool tied = cfg.value("nu_equals_epsilon", !cfg.contains("nu"));
        const auto nus = tied ? std::vector<double>{} : list("nu", 1e-2);
        const auto betas = list("beta", 1.0);
        for (double b : betas)
            for (double e : eps) {
                if (tied) {
                    s.grid.push_back(Params{e, e, b, S.value("N", 4), {}});
                } else {
                    for (double n : nus) s.grid.push_back(Params{e, n, b, S.value("N", 4), {}});
                }
            }
        s.validate();
        return s;
    }

    void validate() const {
        if (grid.empty()) throw DomainError("ExperimentSpec: empty parameter grid");
        for (const auto& p : grid) p.validate();
        const int N = grid.front().N;
        auto check_h = [&](const HMode& kh) {
            if (kh.norm() > N + 1e-12) throw DomainError("ExperimentSpec: mode beyond cutoff N");
        };
        for (const char* key : {"bottom", "top", "stress"})
            if (settings.contains(key))
                for (const auto& e : settings.at(key)) check_h(hmode_from_json(e.at("k")));
        if (settings.contains("gamma"))
            for (const auto& e : settings.at("gamma")) check_h(mode_from_json(e.at("k")).h());
        if (parallel < 1) throw DomainError("ExperimentSpec: parallel must be >= 1");
    }
};

/** @brief Outcome of one grid point. */
struct PointResult {
    Params params;
    json values = json::object();
    std::map<std::string, Table> tables;
    std::vector<Check> checks;
    std::string error;
};

/** @brief Outcome of a run: per-point results, aggregate table, regressions and checks. */
struct RunResult {
    std::vector<PointResult> points;
    Table aggregate;
    json regressions = json::object();
    std::vector<Check> checks;
    json summary;
    [[nodiscard]] bool pass() const {
        bool ok = all_pass(checks);
        for (const auto& p : points) ok = ok && p.error.empty() && all_pass(p.checks);
        return ok;
    }
};

namespace detail {

inline DirectOptions direct_options(const ExperimentSpec& s, const Params& p) {
    DirectOptions o;
    o.Nz = s.settings.value("Nz", 512);
    o.t_end = s.settings.value("t_end", 0.5);
    o.dt = s.settings.value("dt_over_epsilon", 0.1) * p.epsilon;
    o.save_every = s.settings.value("save_every", 10);
    o.nodes_in_layer = s.settings.value("nodes_in_layer", 8);
    return o;
}

inline PointResult bl_point(const ExperimentSpec& s, const Params& p) {
    PointResult r;
    r.params = p;
    const auto sol0 = build_B(trace_from_json(s.settings.at("bottom"), 0), BoundaryTrace(1), p);
    const auto sol1 = build_B(BoundaryTrace(0), trace_from_json(s.settings.at("top"), 1), p);
    const double en = p.epsilon * p.nu;
    r.values["x_classical"] = en;
    r.values["x_quasi"] = en / (p.epsilon + std::sqrt(en));
    r.values["vbar0_h"] = layer_l2(sol0.classical, 0.0, p, 3);
    r.values["vbar1_h"] = layer_l2(sol1.classical, 0.0, p, 3);
    r.values["vtilde0_h"] = layer_l2(sol0.quasi_resonant, 0.0, p, 3);
    r.values["vtilde1_h"] = layer_l2(sol1.quasi_resonant, 0.0, p, 3);
    const cplx lp = decay_rates(1.0, HMode{1, 0}, p).lambda_plus;
    r.values["lambda_plus_abs"] = std::abs(lp);
    r.values["x_rate"] = p.epsilon + std::sqrt(en);
    r.values["rate_ratio"] = std::abs(lp) / std::sqrt(p.epsilon + std::sqrt(en));
    const double res = std::max(trace_residuals(sol0, 0.0).max(), trace_residuals(sol1, 0.0).max());
    r.values["opposite_wall_trace"] = res;
    Table T({"kind", "side", "mu", "k1", "k2", "sigma", "lambda_re", "lambda_im", "alpha_re", "alpha_im"});
    for (const auto* sol : {&sol0, &sol1})
        for (const auto* list : {&sol->classical, &sol->quasi_resonant})
            for (const auto& m : *list)
                T.add({double(int(m.kind)), double(m.side), m.mu, double(m.kh.k1), double(m.kh.k2), double(m.sigma),
                       m.lambda.real(), m.lambda.imag(), m.alpha.real(), m.alpha.imag()});
    r.tables["layer_modes"] = T;
    return r;
}

inline PointResult resonant_point(const ExperimentSpec& s, const Params& p) {
    PointResult r;
    r.params = p;
    BoundaryTrace bottom(0), top(1);
    bottom.add(1.0, {0, 0}, {1.0, I});
    top.add(1.0, {0, 0}, {1.0, I});
    const auto b = build_B(bottom, BoundaryTrace(1), p);
    const auto w = build_B(BoundaryTrace(0), top, p);
    Table T({"nu_t", "t", "bottom_norm_h", "top_norm_h"});
    for (const auto& x : s.settings.at("nu_t")) {
        const double nt = x.get<double>(), t = nt / p.nu;
        T.add({nt, t, resonant_l2(b.resonant, t, p), resonant_l2(w.resonant, t, p)});
    }
    r.tables["growth"] = T;
    const double t1 = 1.0 / p.nu;
    r.values["interior_fraction_top"] =
        mass_fraction([&](double z) { return resonant_shape(1, p.nu, t1, z); }, 0.0, 0.5);
    r.values["interior_fraction_bottom"] =
        mass_fraction([&](double z) { return resonant_shape(0, p.nu, t1, z); }, 0.5, 1.0);
    r.values["interior_fraction_top_finite_depth"] =
        mass_fraction([&](double z) { return resonant_top_finite_depth(p.nu, t1, z); }, 0.0, 0.5);
    return r;
}

inline PointResult dirichlet_point(const ExperimentSpec& s, const Params& p) {
    PointResult r;
    r.params = p;
    const SpectralField gamma = field_from_json(s.settings.at("gamma"));
    const auto o = direct_options(s, p);
    const auto direct = solve_direct(gamma, BoundaryTrace(1), p, o);
    const auto A = assemble_dirichlet_approx(gamma, p);
    const auto E = compare(direct, A, {}, "interior");
    r.tables["error"] = E.table();
    r.values["sup_error"] = E.sup;
    r.values["relative_sup_error"] = E.sup / gamma.norm();
    r.values["sup_remainder"] = *std::max_element(E.remainder.begin(), E.remainder.end());
    r.values["attribution_complete"] = E.attribution_complete;
    for (const auto& [k, v] : A.residuals) r.values["residual_" + k] = v;
    r.checks.push_back(Check::flag("attribution_complete", E.attribution_complete, "excluded parts + remainder >= error"));
    return r;
}

inline PointResult ekman_point(const ExperimentSpec& s, const Params& p) {
    PointResult r;
    r.params = p;
    const SpectralField gamma = field_from_json(s.settings.at("gamma"));
    if (gamma.coeffs.size() != 1) throw DomainError("ekman_rate: gamma must be a single mode");
    const ModeIndex k = gamma.coeffs.begin()->first;
    const auto o = direct_options(s, p);
    const auto direct = solve_direct(gamma, BoundaryTrace(1), p, o);
    const auto& tr = direct.at(k.h());
    const double dt = o.t_end / std::ceil(o.t_end / o.dt - 1e-9);
    const auto c = demodulated_projection(tr, k, p, dt);
    const auto& win = s.settings.at("window");
    const DecayFit f = fit_decay(tr.times, c, win.at(0).get<double>(), win.at(1).get<double>());
    const cplx pred = damping_rate(k, p, EnvelopeOptions{Pairing::orthonormal, false, false});
    const cplx pred_v = damping_rate(k, p, EnvelopeOptions{Pairing::orthonormal, true, false});
    Table T({"t", "c_re", "c_im", "abs"});
    for (std::size_t i = 0; i < c.size(); ++i) T.add({tr.times[i], c[i].real(), c[i].imag(), std::abs(c[i])});
    r.tables["projection"] = T;
    r.values["fitted_rate_re"] = f.rate.real();
    r.values["fitted_rate_im"] = f.rate.imag();
    r.values["fit_flagged"] = f.flagged;
    r.values["fit_note"] = f.note;
    r.values["predicted_rate_re"] = pred.real();
    r.values["predicted_rate_im"] = pred.imag();
    r.values["predicted_rate_with_vertical_re"] = pred_v.real();
    r.values["relative_rate_error"] = std::abs(f.rate.real() - pred.real()) / pred.real();
    r.checks.push_back(Check::below("relative_rate_error", r.values["relative_rate_error"], s.tol("relative_rate")));
    r.checks.push_back(Check::flag("fit_window_valid", !f.flagged, "fit not flagged"));
    return r;
}

inline PointResult wind_point(const ExperimentSpec& s, const Params& p) {
    PointResult r;
    r.params = p;
    const BoundaryTrace sigma = trace_from_json(s.settings.at("stress"), 1);
    const auto A = assemble_wind_approx(sigma, p);
    const double T = s.settings.value("t_end", 0.5);
    const int n = s.settings.value("samples", 11);
    double sup = 0;
    Table tab({"t", "approx_norm"});
    for (int i = 0; i < n; ++i) {
        const double t = T * i / std::max(n - 1, 1);
        const double v = A.norm(t);
        sup = std::max(sup, v);
        tab.add({t, v});
    }
    r.tables["approx_norm"] = tab;
    r.values["approx_sup_norm"] = sup;
    r.values["x"] = p.epsilon * p.nu;
    for (const auto& [k, v] : A.residuals) r.values["residual_" + k] = v;
    bool run_direct = false;
    for (const auto& e : s.settings.value("direct_epsilon", json::array()))
        if (std::abs(e.get<double>() - p.epsilon) <= 1e-12 * p.epsilon) run_direct = true;
    if (run_direct) {
        const auto o = direct_options(s, p);
        const auto direct = solve_direct(SpectralField{}, sigma, p, o);
        double dsup = 0;
        for (const auto& [kh, tr] : direct)
            for (const auto& g : tr.snapshots) dsup = std::max(dsup, l2_norm(g));
        r.values["direct_sup_norm"] = dsup;
        r.values["direct_ratio"] = dsup / sup;
        const auto E = compare(direct, A);
        r.tables["error"] = E.table();
        r.values["sup_error"] = E.sup;
        r.checks.push_back(Check::below("direct_ratio", dsup / sup, s.tol("direct_ratio")));
    }
    return r;
}

inline PointResult destabilization_point(const ExperimentSpec& s, const Params& p) {
    PointResult r;
    r.params = p;
    const BoundaryTrace sigma = trace_from_json(s.settings.at("stress"), 1);
    for (const auto& e : sigma.entries)
        if (!e.kh.is_zero() || !is_unit(e.mu)) throw DomainError("destabilization: stress must be resonant (k_h = 0, |mu| = 1)");
    auto o = direct_options(s, p);
    const auto direct = solve_direct(SpectralField{}, sigma, p, o);
    const auto& tr = direct.at(HMode{0, 0});
    // resonant amplitude of the stress, per unit heat profile
    Vec2c amp{};
    double mu = 1;
    for (const auto& e : sigma.entries) {
        amp += p.beta * resonant_component(e.mu, e.delta);
        mu = e.mu;
    }
    const Vec2c e{1.0, I * mu};
    Table T({"t", "nu_t", "error_finite_depth", "error_half_space", "norm", "interior_fraction"});
    double worst = 0, frac_end = 0;
    for (std::size_t i = 1; i < tr.times.size(); ++i) {
        const double t = tr.times[i];
        const ModeGrid& g = tr.snapshots[i];
        const cplx ph = std::exp(I * mu * t / p.epsilon);
        double e_fd = 0, e_hs = 0, nrm = 0, inner = 0;
        for (int j = 0; j <= g.N(); ++j) {
            const double z = (*g.z)[j], w = g.weight(j);
            // component along the resonant direction, rotation removed
            const cplx v = 0.5 * dot(e, Vec2c{g.u1[j], g.u2[j]}) / ph;
            const cplx a = 0.5 * dot(e, amp);
            e_fd += w * std::norm(v - a * resonant_top_finite_depth(p.nu, t, z));
            e_hs += w * std::norm(v - a * resonant_shape(1, p.nu, t, z));
            nrm += w * std::norm(v);
            if (z < 0.5) inner += w * std::norm(v);
        }
        const double rel = std::sqrt(e_fd / std::max(nrm, 1e-300));
        if (p.nu * t >= 1e-3) worst = std::max(worst, rel);
        frac_end = inner / std::max(nrm, 1e-300);
        T.add({t, p.nu * t, rel, std::sqrt(e_hs / std::max(nrm, 1e-300)), 2 * pi * std::sqrt(2.0 * nrm), frac_end});
    }
    r.tables["profile_error"] = T;
    r.values["max_relative_error"] = worst;
    r.values["final_nu_t"] = p.nu * tr.times.back();
    r.values["final_interior_fraction"] = frac_end;
    r.checks.push_back(Check::below("max_relative_error", worst, s.tol("relative_error")));
    r.checks.push_back(Check::above("final_interior_fraction", frac_end, s.tol("interior_fraction")));
    return r;
}

inline PointResult run_point(const ExperimentSpec& s, const Params& p) {
    switch (s.kind) {
        case ExperimentKind::bl_scaling: return bl_point(s, p);
        case ExperimentKind::resonant_growth: return resonant_point(s, p);
        case ExperimentKind::dirichlet_convergence: return dirichlet_point(s, p);
        case ExperimentKind::ekman_rate: return ekman_point(s, p);
        case ExperimentKind::wind_convergence: return wind_point(s, p);
        case ExperimentKind::destabilization: return destabilization_point(s, p);
    }
    return {};
}

inline std::vector<std::pair<double, double>> pairs(const std::vector<PointResult>& pts, const char* x, const char* y) {
    std::vector<std::pair<double, double>> out;
    for (const auto& p : pts)
        if (p.error.empty()) out.emplace_back(p.values.at(x).get<double>(), p.values.at(y).get<double>());
    return out;
}

inline void aggregate(const ExperimentSpec& s, RunResult& R) {
    const auto& P = R.points;
    auto regress = [&](const std::string& name, const char* x, const char* y, double target, double tol) {
        try {
            const auto rr = regress_loglog(pairs(P, x, y));
            R.regressions[name] = to_json(rr);
            R.checks.push_back(Check::near(name, rr.slope, target, tol));
        } catch (const DomainError& e) {
            R.regressions[name] = {{"error", e.what()}};
            R.checks.push_back(Check::flag(name, false, e.what()));
        }
    };
    switch (s.kind) {
        case ExperimentKind::bl_scaling: {
            R.aggregate = Table({"epsilon", "nu", "vbar0_h", "vbar1_h", "vtilde0_h", "vtilde1_h", "lambda_plus_abs"});
            for (const auto& p : P)
                if (p.error.empty())
                    R.aggregate.add({p.params.epsilon, p.params.nu, p.values["vbar0_h"], p.values["vbar1_h"],
                                     p.values["vtilde0_h"], p.values["vtilde1_h"], p.values["lambda_plus_abs"]});
            regress("slope_vbar0_h", "x_classical", "vbar0_h", 0.25, s.tol("classical_slope"));
            regress("slope_vbar1_h", "x_classical", "vbar1_h", 0.75, s.tol("classical_slope"));
            regress("slope_vtilde0_h", "x_quasi", "vtilde0_h", 0.25, s.tol("quasi_slope"));
            regress("slope_vtilde1_h", "x_quasi", "vtilde1_h", 0.75, s.tol("quasi_slope"));
            regress("slope_lambda_plus", "x_rate", "lambda_plus_abs", 0.5, s.tol("quasi_rate_slope"));
            double lo = 1e300, hi = 0;
            for (const auto& p : P)
                if (p.error.empty()) {
                    lo = std::min(lo, p.values["rate_ratio"].get<double>());
                    hi = std::max(hi, p.values["rate_ratio"].get<double>());
                }
            R.checks.push_back(Check::below("lambda_plus_ratio_span", hi / lo, s.tol("quasi_rate_ratio_span")));
            break;
        }
        case ExperimentKind::resonant_growth: {
            R.aggregate = Table({"nu", "nu_t", "bottom_norm_h", "top_norm_h"});
            for (const auto& p : P) {
                if (!p.error.empty()) continue;
                const auto& g = p.tables.at("growth");
                std::vector<std::pair<double, double>> pts;
                for (const auto& row : g.rows) {
                    R.aggregate.add({p.params.nu, row[0], row[2], row[3]});
                    pts.emplace_back(row[0], row[2]);
                }
                const auto rr = regress_loglog(pts);
                const std::string tag = "nu=" + json(p.params.nu).dump();
                R.regressions["growth_slope " + tag] = to_json(rr);
                R.checks.push_back(Check::near("growth_slope " + tag, rr.slope, 0.25, s.tol("growth_slope")));
                R.checks.push_back(Check::above("interior_fraction_top " + tag, p.values["interior_fraction_top"],
                                                s.tol("interior_fraction")));
            }
            break;
        }
        case ExperimentKind::dirichlet_convergence: {
            R.aggregate = Table({"epsilon", "nu", "sup_error", "relative_sup_error"});
            std::vector<const PointResult*> ok;
            for (const auto& p : P)
                if (p.error.empty()) ok.push_back(&p);
            std::sort(ok.begin(), ok.end(), [](auto a, auto b) { return a->params.epsilon > b->params.epsilon; });
            bool dec = ok.size() >= 2;
            for (std::size_t i = 0; i < ok.size(); ++i) {
                R.aggregate.add({ok[i]->params.epsilon, ok[i]->params.nu, ok[i]->values["sup_error"],
                                 ok[i]->values["relative_sup_error"]});
                if (i > 0 && !(ok[i]->values["sup_error"].get<double>() < ok[i - 1]->values["sup_error"].get<double>()))
                    dec = false;
            }
            R.checks.push_back(Check::flag("error_strictly_decreasing", dec, "sup error decreases as epsilon decreases"));
            if (!ok.empty())
                R.checks.push_back(Check::below("relative_sup_error_smallest_epsilon",
                                                ok.back()->values["relative_sup_error"], s.tol("relative_error")));
            break;
        }
        case ExperimentKind::ekman_rate: {
            R.aggregate = Table({"epsilon", "nu", "fitted_rate_re", "predicted_rate_re", "fitted_rate_im", "predicted_rate_im"});
            for (const auto& p : P)
                if (p.error.empty())
                    R.aggregate.add({p.params.epsilon, p.params.nu, p.values["fitted_rate_re"], p.values["predicted_rate_re"],
                                     p.values["fitted_rate_im"], p.values["predicted_rate_im"]});
            break;
        }
        case ExperimentKind::wind_convergence: {
            R.aggregate = Table({"epsilon", "nu", "beta", "approx_sup_norm"});
            std::vector<std::pair<double, double>> pts;
            for (const auto& p : P)
                if (p.error.empty()) {
                    R.aggregate.add({p.params.epsilon, p.params.nu, p.params.beta, p.values["approx_sup_norm"]});
                    pts.emplace_back(p.params.epsilon * p.params.nu, p.values["approx_sup_norm"].get<double>() / p.params.beta);
                }
            try {
                const auto rr = regress_loglog(pts);
                R.regressions["slope_approx_norm"] = to_json(rr);
                R.checks.push_back(Check::near("slope_approx_norm", rr.slope, 0.75, s.tol("norm_slope")));
            } catch (const DomainError& e) {
                R.checks.push_back(Check::flag("slope_approx_norm", false, e.what()));
            }
            break;
        }
        case ExperimentKind::destabilization: {
            R.aggregate = Table({"epsilon", "nu", "max_relative_error", "final_nu_t", "final_interior_fraction"});
            for (const auto& p : P)
                if (p.error.empty())
                    R.aggregate.add({p.params.epsilon, p.params.nu, p.values["max_relative_error"], p.values["final_nu_t"],
                                     p.values["final_interior_fraction"]});
            break;
        }
    }
}

inline json params_json(const Params& p) { return {{"epsilon", p.epsilon}, {"nu", p.nu}, {"beta", p.beta}, {"N", p.N}}; }

}  // namespace detail

/** @brief Execute every grid point (in parallel batches), aggregate, and optionally write the bundle to disk. */
inline RunResult run(const ExperimentSpec& spec, bool write = true) {
    spec.validate();
    RunResult R;
    R.points.resize(spec.grid.size());
    auto one = [&](std::size_t i) {
        PointResult pr;
        try {
            pr = detail::run_point(spec, spec.grid[i]);
        } catch (const std::exception& e) {
            pr.params = spec.grid[i];
            pr.error = e.what();
        }
        return pr;
    };
    const std::size_t par = std::size_t(std::max(1, spec.parallel));
    for (std::size_t i = 0; i < spec.grid.size(); i += par) {
        std::vector<std::future<PointResult>> fs;
        for (std::size_t j = i; j < std::min(spec.grid.size(), i + par); ++j)
            fs.push_back(std::async(par > 1 ? std::launch::async : std::launch::deferred, one, j));
        for (std::size_t j = 0; j < fs.size(); ++j) R.points[i + j] = fs[j].get();
    }
    detail::aggregate(spec, R);

    json pts = json::array();
    for (std::size_t i = 0; i < R.points.size(); ++i) {
        const auto& p = R.points[i];
        json cs = json::array();
        for (const auto& c : p.checks) cs.push_back(to_json(c));
        json e = {{"index", i}, {"params", detail::params_json(p.params)}, {"values", p.values}, {"checks", cs}};
        if (!p.error.empty()) e["error"] = p.error;
        pts.push_back(e);
    }
    json cs = json::array();
    for (const auto& c : R.checks) cs.push_back(to_json(c));
    R.summary = {{"kind", spec.kind_name}, {"settings", spec.settings}, {"points", pts},
                 {"regressions", R.regressions}, {"checks", cs}, {"pass", R.pass()}};
    if (write) {
        namespace fs = std::filesystem;
        fs::create_directories(spec.out);
        for (std::size_t i = 0; i < R.points.size(); ++i) {
            char dir[32];
            std::snprintf(dir, sizeof dir, "point_%03zu", i);
            for (const auto& [name, t] : R.points[i].tables) t.write(spec.out / dir / (name + ".csv"));
        }
        if (!R.aggregate.columns.empty()) R.aggregate.write(spec.out / "aggregate.csv");
        write_json(spec.out / "summary.json", R.summary);
    }
    return R;
}

}  // namespace rotek

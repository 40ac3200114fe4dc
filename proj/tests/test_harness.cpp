#include <gtest/gtest.h>

#include "rotek/harness.hpp"

using namespace rotek;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream f(p);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

}  // namespace

TEST(Regression, ExactPowerLaw) {
    std::vector<std::pair<double, double>> pts;
    for (double x : {1e-3, 1e-2, 1e-1, 1.0}) pts.emplace_back(x, 5 * x * x);
    const auto r = regress_loglog(pts);
    EXPECT_NEAR(r.slope, 2.0, 1e-12);
    EXPECT_NEAR(r.intercept, std::log(5.0), 1e-12);
    EXPECT_NEAR(r.r_squared, 1.0, 1e-12);
    for (double e : r.residuals) EXPECT_NEAR(e, 0.0, 1e-12);
}

TEST(Regression, NoisyQuarterPower) {
    std::vector<std::pair<double, double>> pts;
    const double wiggle[] = {0.01, -0.02, 0.015, -0.005, 0.0, 0.01};
    for (int i = 0; i < 6; ++i) {
        const double x = std::pow(10.0, -2 - i);
        pts.emplace_back(x, std::pow(x, 0.25) * std::exp(wiggle[i]));
    }
    const auto r = regress_loglog(pts);
    EXPECT_NEAR(r.slope, 0.25, 0.01);
    EXPECT_GT(r.r_squared, 0.99);
}

TEST(Regression, RejectsDegenerateInput) {
    EXPECT_THROW(regress_loglog({{1.0, 1.0}, {2.0, 2.0}}), DomainError);
    EXPECT_THROW(regress_loglog({{1.0, 1.0}, {2.0, -2.0}, {3.0, 1.0}}), DomainError);
    EXPECT_THROW(regress_loglog({{1.0, 1.0}, {1.0, 2.0}, {1.0, 3.0}}), DomainError);
}

TEST(Checks, RelationsAndJson) {
    EXPECT_TRUE(Check::near("a", 0.26, 0.25, 0.03).pass);
    EXPECT_FALSE(Check::near("a", 0.30, 0.25, 0.03).pass);
    EXPECT_TRUE(Check::below("b", 0.05, 0.1).pass);
    EXPECT_FALSE(Check::above("c", 0.05, 0.1).pass);
    const auto j = to_json(Check::flag("d", true, "x"));
    EXPECT_TRUE(j.at("pass").get<bool>());
    EXPECT_FALSE(all_pass({Check::below("b", 0.05, 0.1), Check::flag("d", false, "x")}));
}

TEST(Table, CsvFormatting) {
    Table t({"x", "y"});
    t.add({1.0, -0.5});
    EXPECT_EQ(t.csv(), "x,y\n1.000000000000e+00,-5.000000000000e-01\n");
    EXPECT_THROW(t.add({1.0}), DomainError);
    EXPECT_EQ(t.column("y"), std::vector<double>{-0.5});
    EXPECT_THROW(t.column("z"), DomainError);
}

TEST(Config, KeyValueFormat) {
    const auto j = parse_config(
        "# comment\n"
        "kind = bl_scaling\n"
        "epsilon = 1e-2, 1e-3   # trailing\n"
        "tolerances.classical_slope = 0.03\n"
        "bottom = [{\"mu\": 0, \"k\": [1, 0], \"delta\": [1, 0]}]\n"
        "flag = true\n");
    EXPECT_EQ(j.at("kind"), "bl_scaling");
    EXPECT_EQ(j.at("epsilon").size(), 2u);
    EXPECT_DOUBLE_EQ(j.at("epsilon")[1].get<double>(), 1e-3);
    EXPECT_DOUBLE_EQ(j.at("tolerances").at("classical_slope").get<double>(), 0.03);
    EXPECT_EQ(j.at("bottom")[0].at("k")[0], 1);
    EXPECT_TRUE(j.at("flag").get<bool>());
    EXPECT_THROW(parse_config("no equals sign"), DomainError);
}

TEST(Config, JsonFormatAndConverters) {
    const auto j = parse_config(R"({"gamma": [{"k": [1, 0, 1], "c": [0.5, -1]}], "epsilon": 0.01})");
    const auto g = field_from_json(j.at("gamma"));
    EXPECT_EQ(g.at({1, 0, 1}), cplx(0.5, -1.0));
    const auto t = trace_from_json(json::parse(R"([{"mu": 2, "k": [1, 1], "delta": [1, [0, 1]]}])"), 1);
    ASSERT_EQ(t.entries.size(), 1u);
    EXPECT_EQ(t.entries[0].delta[1], cplx(0.0, 1.0));
    EXPECT_DOUBLE_EQ(params_from_json(j).epsilon, 0.01);
}

TEST(Spec, ValidationRejectsBadGrids) {
    EXPECT_THROW(ExperimentSpec::from_json({{"kind", "bl_scaling"}, {"epsilon", json::array()}}), DomainError);
    EXPECT_THROW(ExperimentSpec::from_json({{"kind", "nonsense"}}), DomainError);
    EXPECT_THROW(ExperimentSpec::from_json(
                     {{"kind", "bl_scaling"}, {"N", 2}, {"bottom", {{{"mu", 0}, {"k", {3, 0}}, {"delta", {1, 0}}}}}}),
                 DomainError);
    const auto s = ExperimentSpec::from_json({{"kind", "bl_scaling"}, {"epsilon", {1e-2, 1e-3}}, {"nu", {1e-3, 1e-4}}});
    EXPECT_EQ(s.grid.size(), 4u);
}

TEST(Seedless, EngineRefusesInSeedlessMode) {
    seedless_mode() = true;
    EXPECT_THROW(seeded_engine(1), std::logic_error);
    seedless_mode() = false;
    auto a = seeded_engine(7), b = seeded_engine(7);
    EXPECT_EQ(a(), b());
}

TEST(Run, BoundaryLayerSweepIsReproducible) {
    namespace fs = std::filesystem;
    const fs::path base = fs::temp_directory_path() / "rotek_harness_repro";
    fs::remove_all(base);
    json cfg = {{"kind", "bl_scaling"}, {"epsilon", {1e-2, 1e-3, 1e-4}}};
    cfg["out"] = (base / "a").string();
    const auto A = run(ExperimentSpec::from_json(cfg));
    cfg["out"] = (base / "b").string();
    const auto B = run(ExperimentSpec::from_json(cfg));
    EXPECT_TRUE(A.pass());
    std::size_t files = 0;
    for (const auto& e : fs::recursive_directory_iterator(base / "a")) {
        if (!e.is_regular_file() || e.path().extension() != ".csv") continue;
        const auto other = base / "b" / fs::relative(e.path(), base / "a");
        ASSERT_TRUE(fs::exists(other));
        EXPECT_EQ(slurp(e.path()), slurp(other)) << e.path();
        ++files;
    }
    EXPECT_GT(files, 3u);
    EXPECT_TRUE(fs::exists(base / "a" / "summary.json"));
    fs::remove_all(base);
}

TEST(Compare, InterpolatedDirectFieldHasZeroError) {
    const Params p{1e-2, 1e-2, 1.0, 4, {}};
    DirectOptions o;
    o.Nz = 64;
    o.t_end = 0.02;
    o.save_every = 1;
    const auto D = solve_direct(SpectralField{{{1, 0, 1}, 1.0}}, BoundaryTrace(0), p, o);
    const auto& tr = D.at({1, 0});
    auto interp = [&tr](const HMode&, double t, double z) {
        const auto it = std::lower_bound(tr.times.begin(), tr.times.end(), t - 1e-12);
        const auto& g = tr.snapshots[std::size_t(it - tr.times.begin())];
        const auto& Z = *g.z;
        const auto j = std::size_t(std::min<long>(long(std::upper_bound(Z.begin(), Z.end(), z) - Z.begin()) - 1, g.N() - 1));
        const double s = (z - Z[j]) / (Z[j + 1] - Z[j]);
        return (1 - s) * g.at(int(j)) + s * g.at(int(j + 1));
    };
    ApproxSolution A;
    A.params = p;
    A.parts.push_back({"exact", {{1, 0}}, interp, [](const HMode&, double, double) { return Vec3c{}; }});
    A.parts.push_back({"offset", {{1, 0}}, [](const HMode&, double, double) { return Vec3c{1.0, 0.0, 0.0}; },
                       [](const HMode&, double, double) { return Vec3c{}; }});
    const auto E = compare(D, A, {}, "exact");
    EXPECT_EQ(E.times.size(), tr.times.size());
    for (std::size_t i = 0; i < E.times.size(); ++i) {
        EXPECT_LT(E.total[i], 1e-13);
        EXPECT_NEAR(E.remainder[i], 2 * pi, 1e-12);
        EXPECT_NEAR(E.parts.at("offset")[i], 2 * pi, 1e-12);
    }
    EXPECT_TRUE(E.attribution_complete);
    EXPECT_THROW(compare(D, A, {0.0123}), DomainError);
    ApproxSolution B = A;
    B.parts[1].modes = {{0, 1}};
    EXPECT_THROW(compare(D, B), DomainError);
}

TEST(Helpers, MassFractionAndFiniteDepthProfile) {
    EXPECT_NEAR(mass_fraction([](double) { return 1.0; }, 0.25, 0.75), 0.5, 1e-12);
    // the profile solves the heat equation with unit top flux and meets z at late times
    const double nu = 1.0;
    EXPECT_NEAR(resonant_top_finite_depth(nu, 50.0, 0.3), 0.3, 1e-10);
    EXPECT_NEAR(resonant_top_finite_depth(nu, 1e-3, 0.0), 0.0, 1e-12);
}

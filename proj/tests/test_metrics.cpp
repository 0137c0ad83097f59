#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "tomo/error.hpp"
#include "tomo/io.hpp"
#include "tomo/metrics.hpp"
#include "tomo/pipeline.hpp"

using namespace tomo;

namespace {

const Dataset& tiny_ct()
{
    static const Dataset ds = [] {
        CtSimSpec s;
        s.fine_n = 48;
        s.recon_n = 24;
        s.n_angles = 20;
        s.extent = 0.07;
        s.seed = 1;
        return make_ct_dataset(s);
    }();
    return ds;
}

MethodSpec tv_spec(double alpha)
{
    MethodSpec m;
    m.method = Method::tv;
    m.alpha = alpha;
    m.solver.outer_iters = 10;
    return m;
}

Image ramp(int n)
{
    Image u(GridSpec::square(n));
    for (Eigen::Index i = 0; i < u.values.size(); ++i)
        u.values[i] = 1.0 + 0.01 * static_cast<double>(i);
    return u;
}

} // namespace

TEST_CASE("rmse")
{
    const Image t = ramp(8);
    CHECK(rmse(t, t) == 0.0);
    CHECK(rmse(Image(t.grid, 2.0 * t.values), t) == 1.0);

    Image r = t;
    r.values[3] += 0.5;
    r.values[40] -= 0.25;
    const double base = rmse(r, t);
    CHECK(base == doctest::Approx(std::sqrt(0.5 * 0.5 + 0.25 * 0.25) / t.values.norm()));
    for (double c : {1e-3, 0.7, 250.0})
        CHECK(std::abs(rmse(Image(t.grid, c * r.values), Image(t.grid, c * t.values)) - base) <= 1e-12 * base);

    const RegionMask all(t.grid, std::vector<bool>(64, true), "ALL");
    CHECK(rmse(r, t, &all) == base);

    std::vector<bool> m(64, false);
    m[3] = true;
    const RegionMask one(t.grid, m, "ONE");
    CHECK(rmse(r, t, &one) == doctest::Approx(0.5 / t.values[3]));

    const Image zero(t.grid);
    CHECK_THROWS_AS(rmse(r, zero), ConfigError);
    CHECK_THROWS_AS(rmse(ramp(4), t), ConfigError);
    const RegionMask none(t.grid, std::vector<bool>(64, false), "NONE");
    CHECK_THROWS_AS(rmse(r, t, &none), ConfigError);
}

TEST_CASE("log grid")
{
    const auto g = log_grid(3.0, 4.0, 15);
    REQUIRE(g.size() == 15);
    CHECK(g.front() == doctest::Approx(3e-2));
    CHECK(g.back() == doctest::Approx(3e2));
    CHECK(g[7] == doctest::Approx(3.0));
    for (std::size_t i = 1; i < g.size(); ++i)
        CHECK(g[i] / g[i - 1] == doctest::Approx(std::pow(10.0, 4.0 / 14)));
    CHECK_THROWS_AS(log_grid(-1.0, 4.0, 15), ConfigError);
}

TEST_CASE("single-value sweep reports that run")
{
    const Dataset& ds = tiny_ct();
    const Projector proj(ds.recon_projector);
    SweepSpec s;
    s.base = tv_spec(1e-6);
    s.values = {1e-6};
    const SweepResult r = run_sweep(s, ds, proj);
    REQUIRE(r.points.size() == 1);
    const ReconResult direct = run_method(tv_spec(1e-6), ds, proj, 0);
    CHECK(r.points[0].mean_rmse == rmse(direct.image, ds.ground_truth));
    CHECK(r.argmin == 0);
}

TEST_CASE("sweep limit toward zero weight")
{
    // the fixed-point solver at alpha = 0 is the unregularized reference
    const Dataset& ds = tiny_ct();
    const Projector proj(ds.recon_projector);
    const double scale = parameter_scale(tv_spec(1.0), SweepParam::alpha, ds, proj);
    CHECK(scale > 0.0);
    SweepSpec s;
    s.base = tv_spec(1.0);
    s.values = {1e-10 * scale};
    const double tiny = run_sweep(s, ds, proj).points.at(0).mean_rmse;

    SolverConfig cfg = s.base.solver;
    cfg.alpha = 0.0;
    const ReconResult plain = fixed_point_reconstruct(proj, ds.ground_truth.grid, ds.noisy[0].values, TotalVariation{}, cfg);
    CHECK(tiny == doctest::Approx(rmse(plain.image, ds.ground_truth)).epsilon(0.02));
}

TEST_CASE("sweeps are reproducible and pick the smallest score")
{
    const Dataset& ds = tiny_ct();
    const Projector proj(ds.recon_projector);
    SweepSpec s;
    s.base = tv_spec(1.0);
    const double scale = parameter_scale(s.base, SweepParam::alpha, ds, proj);
    s.values = log_grid(scale, 4.0, 5);
    const SweepResult a = run_sweep(s, ds, proj);
    const SweepResult b = run_sweep(s, ds, proj);
    REQUIRE(a.points.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(a.points[i].mean_rmse == b.points[i].mean_rmse);
        CHECK(a.points[i].ok);
        CHECK(a.points[a.argmin].mean_rmse <= a.points[i].mean_rmse);
    }
    CHECK(sweep_csv(a) == sweep_csv(b));

    SUBCASE("ties go to the smaller value")
    {
        SweepSpec same = s;
        same.values = {1e-6, 1e-6};
        const SweepResult t = run_sweep(same, ds, proj);
        CHECK(t.argmin == 0);
    }
}

TEST_CASE("extending sweep moves past an edge minimum")
{
    const Dataset& ds = tiny_ct();
    const Projector proj(ds.recon_projector);
    SweepSpec s;
    s.base = tv_spec(1.0);
    const double scale = parameter_scale(s.base, SweepParam::alpha, ds, proj);
    // a grid far above the optimum: the minimum sits on the low edge
    s.values = log_grid(1e4 * scale, 1.0, 4);
    const SweepResult plain = run_sweep(s, ds, proj);
    CHECK(plain.argmin == 0);
    const SweepResult ext = run_extending_sweep(s, ds, proj, 2);
    CHECK(ext.points.size() > plain.points.size());
    CHECK(ext.points[ext.argmin].mean_rmse <= plain.points[plain.argmin].mean_rmse);
    for (std::size_t i = 1; i < ext.points.size(); ++i)
        CHECK(ext.points[i].value > ext.points[i - 1].value);
}

TEST_CASE("method specs")
{
    MethodSpec m;
    m.method = Method::el;
    m.alpha = 0.0;
    CHECK_THROWS_AS(m.validate(), ConfigError);
    m.alpha = 1.0;
    CHECK_NOTHROW(m.validate());
    CHECK(m.label() == "CGLS-EL");
    m.fidelity = Fidelity::poisson;
    CHECK(m.label() == "MLEM-EL");
    m.method = Method::cgls;
    CHECK_THROWS_AS(m.validate(), ConfigError);
    m.method = Method::mlem;
    CHECK_NOTHROW(m.validate());
    m.fidelity = Fidelity::ls;
    CHECK_THROWS_AS(m.validate(), ConfigError);
    m.method = Method::tvl2;
    m.mu = -1.0;
    CHECK_THROWS_AS(m.validate(), ConfigError);
    CHECK(parse_method("tvl2") == Method::tvl2);
    CHECK_THROWS_AS(parse_method("tv3"), ConfigError);
    CHECK(parse_fidelity(to_string(Fidelity::poisson)) == Fidelity::poisson);
}

TEST_CASE("report files")
{
    const Dataset& ds = tiny_ct();
    const Projector proj(ds.recon_projector);
    MethodSpec m;
    m.method = Method::cgls;
    m.solver.outer_iters = 6;
    MethodOutcome o;
    o.spec = m;
    o.runs.push_back(run_method(m, ds, proj, 0));
    o.rmse_per_realization = {rmse(o.runs[0].image, ds.ground_truth)};
    o.mean_rmse = o.rmse_per_realization[0];
    ProtocolResult res;
    res.methods.push_back(o);

    const auto dir = std::filesystem::temp_directory_path() / "tomo_report_one";
    std::filesystem::remove_all(dir);
    emit_report(res, dir);
    const auto table = parse_csv(read_file(dir / "table.csv"));
    REQUIRE(table.size() == 2);
    CHECK(table[0][0] == "method");
    CHECK(table[1][0] == "CGLS");
    CHECK(std::stod(table[1][2]) == o.mean_rmse);

    const auto conv = parse_csv(read_file(dir / "convergence_cgls.csv"));
    REQUIRE(conv.size() == 7);
    CHECK(conv[0] == std::vector<std::string>{"iter", "objective", "fidelity", "penalty", "step_norm2", "rmse"});
    for (std::size_t k = 0; k < 6; ++k) {
        CHECK(std::stod(conv[k + 1][2]) == o.runs[0].history[k].fidelity);
        CHECK(std::stod(conv[k + 1][5]) == *o.runs[0].history[k].rmse);
    }
    CHECK(read_image(dir / "recon_cgls.img").values == o.runs[0].image.values);
    CHECK(std::filesystem::exists(dir / "recon_cgls.pgm"));
    CHECK_FALSE(std::filesystem::exists(dir / "region_rmse.csv"));

    CHECK_THROWS_AS(emit_report(ProtocolResult{}, dir), ConfigError);
}

TEST_CASE("csv parsing")
{
    const auto rows = parse_csv("a,b,\n1,,3\r\n");
    REQUIRE(rows.size() == 2);
    CHECK(rows[0] == std::vector<std::string>{"a", "b", ""});
    CHECK(rows[1] == std::vector<std::string>{"1", "", "3"});
}

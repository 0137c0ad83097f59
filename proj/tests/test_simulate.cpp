#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "tomo/error.hpp"
#include "tomo/simulate.hpp"

using namespace tomo;

namespace {

struct Moments {
    double mean = 0.0, var = 0.0;
};

Moments moments(const Eigen::VectorXd& x)
{
    Moments m;
    m.mean = x.mean();
    m.var = (x.array() - m.mean).square().sum() / static_cast<double>(x.size() - 1);
    return m;
}

CtSimSpec small_ct()
{
    CtSimSpec s;
    s.fine_n = 48;
    s.recon_n = 24;
    s.n_angles = 20;
    s.seed = 5;
    return s;
}

EtSimSpec small_et()
{
    EtSimSpec s;
    s.n = 64;
    s.n_angles = 24;
    s.total_counts = 1e6;
    s.realizations = 3;
    s.seed = 9;
    return s;
}

} // namespace

TEST_CASE("poisson sampler")
{
    const int draws = 100000;
    SUBCASE("zero mean")
    {
        CHECK(poisson_sample(Eigen::VectorXd::Zero(1000), 1).isZero(0.0));
    }
    SUBCASE("small mean")
    {
        const Moments m = moments(poisson_sample(Eigen::VectorXd::Constant(draws, 4.0), 2));
        CHECK(std::abs(m.mean - 4.0) <= 3.0 * std::sqrt(4.0 / draws));
    }
    SUBCASE("dispersion")
    {
        for (double lambda : {4.0, 1e2, 1e5}) {
            const Moments m = moments(poisson_sample(Eigen::VectorXd::Constant(draws, lambda), 3));
            CAPTURE(lambda);
            CHECK(m.var / m.mean >= 0.97);
            CHECK(m.var / m.mean <= 1.03);
        }
    }
    SUBCASE("draw i depends only on seed and i")
    {
        const Eigen::VectorXd lam = Eigen::VectorXd::LinSpaced(50, 0.5, 5000.0);
        const Eigen::VectorXd all = poisson_sample(lam, 77);
        CHECK(poisson_sample(lam.head(20), 77) == all.head(20));
        CHECK(poisson_sample(lam, 77) == all);
        CHECK(poisson_sample(lam, 78) != all);
        CHECK((all.array() == all.array().round()).all());
    }
    CHECK_THROWS_AS(poisson_sample(Eigen::VectorXd::Constant(3, -1.0), 0), ConfigError);
    CHECK_THROWS_AS(poisson_sample(Eigen::VectorXd::Constant(3, std::nan("")), 0), ConfigError);
    CHECK(derive_seed(1, 0) != derive_seed(1, 1));
    CHECK(derive_seed(1, 0) != derive_seed(2, 0));
}

TEST_CASE("CT noise on an empty phantom")
{
    CtSimSpec s = small_ct();
    s.phantom = PhantomDescriptor{};
    s.n_angles = 100;
    s.nbins = 100;
    const Dataset ds = make_ct_dataset(s);
    REQUIRE(ds.noisy.at(0).values.size() == 10000);
    CHECK(ds.noiseless.values.isZero(0.0));

    const Eigen::VectorXd b = ds.noisy[0].values;
    // b ≈ -(c - I0)/I0 has standard deviation 1/sqrt(I0)
    CHECK(std::abs(b.mean()) <= 3.0 / std::sqrt(s.i0 * static_cast<double>(b.size())));

    const Eigen::VectorXd counts = (s.i0 * (-b.array()).exp()).round().matrix();
    const Moments m = moments(counts);
    CHECK(m.var == doctest::Approx(s.i0).epsilon(0.05));
}

TEST_CASE("CT dataset structure")
{
    const CtSimSpec s = small_ct();
    const Dataset a = make_ct_dataset(s);
    const Dataset b = make_ct_dataset(s);
    CHECK(a.noisy.at(0).values == b.noisy.at(0).values);

    CtSimSpec other = s;
    other.seed = 6;
    CHECK(make_ct_dataset(other).noisy.at(0).values != a.noisy.at(0).values);

    // generation and reconstruction differ in grid and kernel
    CHECK(a.generation_projector.grid.nx == s.fine_n);
    CHECK(a.recon_projector.grid.nx == s.recon_n);
    CHECK(a.generation_projector.kernel == Kernel::strip);
    CHECK(a.recon_projector.kernel == Kernel::linear);
    CHECK(a.generation_projector.angles == a.recon_projector.angles);
    CHECK(a.generation_projector.nbins == a.recon_projector.nbins);
    CHECK(a.generation_projector.bin_pitch == a.recon_projector.bin_pitch);

    const Image fine = generate_ct_phantom(s.phantom, a.generation_projector.grid);
    CHECK(Projector(a.generation_projector).forward(fine).values == a.noiseless.values);
    CHECK(a.ground_truth.values == generate_ct_phantom(s.phantom, a.recon_projector.grid).values);
    CHECK(a.warnings.empty());
}

TEST_CASE("photon starvation is reported")
{
    CtSimSpec s = small_ct();
    s.phantom.primitives = {Rectangle{0.2, 0.2, 0.6, 0.6, 1e4}};
    const Dataset ds = make_ct_dataset(s);
    CHECK_FALSE(ds.warnings.empty());
    CHECK(ds.noisy.at(0).values.allFinite());
}

TEST_CASE("CT spec validation")
{
    CtSimSpec s = small_ct();
    s.fine_n = s.recon_n;
    CHECK_THROWS_AS(make_ct_dataset(s), ConfigError);
    s = small_ct();
    s.i0 = 0.0;
    CHECK_THROWS_AS(make_ct_dataset(s), ConfigError);
}

TEST_CASE("ET dataset")
{
    const EtSimSpec s = small_et();
    const Dataset ds = make_et_dataset(s);
    REQUIRE(ds.noisy.size() == 3);
    const double total = ds.noiseless.values.sum();
    CHECK(total == doctest::Approx(s.total_counts).epsilon(1e-9));
    for (const auto& r : ds.noisy) {
        CHECK(std::abs(r.values.sum() - total) <= 3.0 * std::sqrt(total));
        CHECK((r.values.array() >= 0).all());
    }
    CHECK(ds.noisy[0].values != ds.noisy[1].values);

    // realization r does not depend on how many were requested
    EtSimSpec fewer = s;
    fewer.realizations = 2;
    const Dataset again = make_et_dataset(fewer);
    CHECK(again.noisy[1].values == ds.noisy[1].values);

    CHECK(ds.generation_projector.psf_fwhm_bins == s.psf_fwhm_bins);
    CHECK(Projector(ds.recon_projector).forward(ds.ground_truth).values.isApprox(ds.noiseless.values, 1e-12));
    REQUIRE(ds.masks.size() == 2);
    CHECK(ds.masks[0].label == "GR");
    CHECK(ds.masks[1].label == "BR");
}

TEST_CASE("default ET spec normalizes to 1e7 counts")
{
    EtSimSpec s;
    s.realizations = 1;
    const Dataset ds = make_et_dataset(s);
    CHECK(std::abs(ds.noiseless.values.sum() - 1e7) <= 1e-9 * 1e7);
    CHECK(ds.ground_truth.grid.nx == 400);
    CHECK(ds.noiseless.n_angles() == 300);
}

TEST_CASE("dataset directory round trip")
{
    const auto dir = std::filesystem::temp_directory_path() / "tomo_sim_roundtrip";
    std::filesystem::remove_all(dir);
    for (const Dataset& ds : {make_ct_dataset(small_ct()), make_et_dataset(small_et())}) {
        save_dataset(ds, dir);
        const Dataset back = load_dataset(dir);
        CHECK(back.experiment == ds.experiment);
        CHECK(back.ground_truth.values == ds.ground_truth.values);
        CHECK(back.noiseless.values == ds.noiseless.values);
        REQUIRE(back.noisy.size() == ds.noisy.size());
        for (std::size_t r = 0; r < ds.noisy.size(); ++r)
            CHECK(back.noisy[r].values == ds.noisy[r].values);
        CHECK(back.masks.size() == ds.masks.size());
        CHECK(Projector(back.recon_projector).matrix().isApprox(Projector(ds.recon_projector).matrix(), 0.0));
        CHECK(back.recon_projector.scale == ds.recon_projector.scale);
        std::filesystem::remove_all(dir);
    }
    CHECK_THROWS_AS(load_dataset(dir), IoError);
}

TEST_CASE("provenance parses back to the spec")
{
    const CtSimSpec s = small_ct();
    const CtSimSpec c = ct_spec_from(ct_provenance(s));
    CHECK(c.fine_n == s.fine_n);
    CHECK(c.recon_n == s.recon_n);
    CHECK(c.n_angles == s.n_angles);
    CHECK(c.i0 == s.i0);
    CHECK(c.seed == s.seed);
    const EtSimSpec e = et_spec_from(et_provenance(small_et()));
    CHECK(e.n == 64);
    CHECK(e.total_counts == 1e6);
    CHECK(e.realizations == 3);
}

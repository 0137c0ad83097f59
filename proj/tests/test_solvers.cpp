#include <doctest.h>

#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "tomo/error.hpp"
#include "tomo/phantom.hpp"
#include "tomo/projector.hpp"
#include "tomo/simulate.hpp"
#include "tomo/solvers.hpp"

using namespace tomo;

namespace {

Eigen::VectorXd gaussian_vector(Eigen::Index n, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    Eigen::VectorXd v(n);
    for (auto& x : v)
        x = nd(rng);
    return v;
}

Image smooth_truth(int n)
{
    return generate_ct_phantom(PhantomDescriptor::default_ct(), GridSpec::square(n));
}

Projector small_projector(int n, int angles)
{
    return Projector(ProjectorSpec::covering(GridSpec::square(n), uniform_angles(angles), Kernel::linear));
}

SolverConfig exact_inner(double alpha, int inner = 2000)
{
    SolverConfig c;
    c.alpha = alpha;
    c.outer_iters = 1;
    c.inner_iters = inner;
    c.rho = 1e-300;
    return c;
}

const std::vector<PenaltyKind> all_kinds{Tikhonov{}, TotalVariation{}, TvL2{1e-5, 1.0, 0.2, 0.05}, EdgeLaplacian{0.03}};

} // namespace

TEST_CASE("cgls")
{
    SUBCASE("identity operator returns b after one step")
    {
        const MatrixOperator<Eigen::MatrixXd> id(Eigen::MatrixXd::Identity(16, 16));
        const Eigen::VectorXd b = gaussian_vector(16, 1);
        const ReconResult r = cgls(id, GridSpec::square(4), b, 1);
        CHECK((r.image.values - b).norm() <= 1e-14 * b.norm());
    }
    SUBCASE("dense 8x8 system matches the direct solve")
    {
        std::mt19937_64 rng(2);
        std::uniform_real_distribution<double> u(-1, 1);
        Eigen::MatrixXd m(8, 8);
        for (auto& x : m.reshaped())
            x = u(rng);
        m += 3.0 * Eigen::MatrixXd::Identity(8, 8);
        const Eigen::VectorXd truth = gaussian_vector(8, 3);
        const Eigen::VectorXd b = m * truth;
        const ReconResult r = cgls(MatrixOperator<Eigen::MatrixXd>(m), GridSpec{4, 2, 1.0, 1.0}, b, 8);
        const Eigen::VectorXd direct = m.partialPivLu().solve(b);
        CHECK((r.image.values - direct).norm() <= 1e-8 * direct.norm());
    }
    SUBCASE("residual never increases")
    {
        const Projector p = small_projector(16, 12);
        Eigen::VectorXd b = p.apply(smooth_truth(16).values) + 0.05 * gaussian_vector(p.rows(), 4);
        const ReconResult r = cgls(p, GridSpec::square(16), b, 40);
        REQUIRE(r.history.size() == 40);
        for (std::size_t k = 1; k < r.history.size(); ++k)
            CHECK(r.history[k].fidelity <= r.history[k - 1].fidelity * (1 + 1e-12));
    }
    CHECK_THROWS_AS(cgls(small_projector(8, 4), GridSpec::square(8), Eigen::VectorXd::Zero(3), 5), ConfigError);
}

TEST_CASE("fixed point with tiny Tikhonov weight recovers noiseless truth")
{
    const int n = 16;
    const Projector p = small_projector(n, 48);
    const Image truth = smooth_truth(n);
    const Eigen::VectorXd b = p.apply(truth.values);
    const Eigen::MatrixXd a(p.matrix());
    const Eigen::MatrixXd ata = a.transpose() * a;
    const double alpha = 1e-12 * ata.operatorNorm();

    const Eigen::VectorXd dense = (ata + alpha * Eigen::MatrixXd::Identity(n * n, n * n)).ldlt().solve(a.transpose() * b);
    CHECK((dense - truth.values).norm() <= 1e-4 * truth.values.norm());

    SolverConfig cfg;
    cfg.alpha = alpha;
    cfg.outer_iters = 200;
    cfg.inner_iters = 50;
    cfg.rho = 1e-300;
    const ReconResult r = fixed_point_reconstruct(p, truth.grid, b, Tikhonov{}, cfg);
    CHECK((r.image.values - dense).norm() <= 1e-4 * dense.norm());
    CHECK((r.image.values - truth.values).norm() <= 1e-4 * truth.values.norm());
}

TEST_CASE("first outer step solves the frozen quadratic")
{
    const int n = 16;
    const Projector p = small_projector(n, 20);
    const Image truth = smooth_truth(n);
    const Eigen::VectorXd b = p.apply(truth.values) + 0.02 * gaussian_vector(p.rows(), 7);
    const Image start(truth.grid, (truth.values + 0.05 * gaussian_vector(n * n, 8)).cwiseMax(0.0));
    const Eigen::MatrixXd a(p.matrix());

    for (const PenaltyKind& kind : all_kinds) {
        for (bool pre : {true, false}) {
            const double alpha = std::holds_alternative<TvL2>(kind) ? *std::get<TvL2>(kind).alpha : 0.05;
            SolverConfig cfg = exact_inner(alpha);
            cfg.precondition = pre;
            ReconOptions opts;
            opts.initial = start;
            const ReconResult r = fixed_point_reconstruct(p, truth.grid, b, kind, cfg, opts);

            const Eigen::MatrixXd rmat(build_gradient_matrix(kind, start).matrix);
            const double w = penalty_multiplier(kind, alpha);
            const Eigen::MatrixXd h = a.transpose() * a + w * rmat;
            const Eigen::VectorXd g = a.transpose() * (a * start.values - b) + w * rmat * start.values;
            const Eigen::VectorXd s = h.ldlt().solve(-g);
            CAPTURE(penalty_name(kind));
            CAPTURE(pre);
            CHECK((r.image.values - start.values - s).norm() <= 1e-6 * s.norm());
        }
    }
}

TEST_CASE("inner CG decreases the frozen quadratic")
{
    const int n = 16;
    const Projector p = small_projector(n, 20);
    const Image truth = smooth_truth(n);
    const Eigen::VectorXd b = p.apply(truth.values) + 0.02 * gaussian_vector(p.rows(), 9);
    const Image start(truth.grid, truth.values.cwiseMax(0.0) * 0.9);
    const Eigen::MatrixXd a(p.matrix());
    for (const PenaltyKind& kind : all_kinds) {
        const double alpha = std::holds_alternative<TvL2>(kind) ? *std::get<TvL2>(kind).alpha : 0.05;
        const Eigen::MatrixXd rmat(build_gradient_matrix(kind, start).matrix);
        const double w = penalty_multiplier(kind, alpha);
        const Eigen::MatrixXd h = a.transpose() * a + w * rmat;
        const Eigen::VectorXd g = a.transpose() * (a * start.values - b) + w * rmat * start.values;
        std::vector<double> q{0.0};
        ReconOptions opts;
        opts.initial = start;
        opts.on_inner_step = [&](int, int, const Eigen::VectorXd& s) { q.push_back(g.dot(s) + 0.5 * s.dot(h * s)); };
        fixed_point_reconstruct(p, truth.grid, b, kind, exact_inner(alpha, 10), opts);
        REQUIRE(q.size() > 2);
        for (std::size_t l = 1; l < q.size(); ++l)
            CHECK(q[l] <= q[l - 1] + 1e-10 * std::abs(q[l - 1]));
    }
}

TEST_CASE("preconditioned and plain CG agree; preconditioning saves steps")
{
    const int n = 16;
    const Projector p = small_projector(n, 20);
    const Image truth = smooth_truth(n);
    const Eigen::VectorXd b = p.apply(truth.values);
    ReconOptions opts;
    opts.initial = Image(truth.grid, 0.8 * truth.values);
    // α ≫ h⁴, where the penalty's stiffness dominates the spectrum
    const double alpha = 1.0;
    std::vector<Eigen::VectorXd> steps;
    std::vector<int> counts;
    for (bool pre : {true, false}) {
        SolverConfig cfg = exact_inner(alpha, 5000);
        cfg.rho = 1e-24;
        cfg.precondition = pre;
        const ReconResult r = fixed_point_reconstruct(p, truth.grid, b, EdgeLaplacian{}, cfg, opts);
        steps.push_back(r.image.values - opts.initial->values);
        counts.push_back(r.history.at(0).inner_steps);
    }
    CHECK((steps[0] - steps[1]).norm() <= 1e-8 * steps[1].norm());
    CHECK(counts[0] < counts[1]);
}

TEST_CASE("outer loop stops on a small step")
{
    const Projector p = small_projector(8, 8);
    const Eigen::VectorXd b = p.apply(smooth_truth(8).values);
    SolverConfig cfg;
    cfg.alpha = 1e-3;
    cfg.outer_iters = 500;
    cfg.rho = 1e-6;
    const ReconResult r = fixed_point_reconstruct(p, GridSpec::square(8), b, TotalVariation{}, cfg);
    CHECK(r.terminated_early);
    CHECK(r.history.size() < 500);
    CHECK(r.history.back().step_norm2 <= cfg.rho);
    for (const auto& rec : r.history)
        CHECK(rec.step_norm2 >= 0.0);
}

TEST_CASE("mlem")
{
    const int n = 16;
    ProjectorSpec spec = ProjectorSpec::covering(GridSpec::square(n), uniform_angles(24), Kernel::linear);
    spec.psf_fwhm_bins = 3.0;
    const Projector p(spec);
    const Image truth(spec.grid, smooth_truth(n).values.array() + 0.2);
    const Eigen::VectorXd sens = p.apply_adjoint(Eigen::VectorXd::Ones(p.rows()));

    SUBCASE("consistent data is a fixed point")
    {
        const Eigen::VectorXd b = p.apply(truth.values);
        const Eigen::VectorXd next = mlem_update(p, b, truth.values, sens, 1e-300);
        CHECK((next - truth.values).norm() <= 1e-10 * truth.values.norm());
    }
    SUBCASE("counts are conserved by the MLEM step")
    {
        const Eigen::VectorXd b = poisson_sample(100.0 * p.apply(truth.values), 3);
        const Eigen::VectorXd u = Eigen::VectorXd::Constant(n * n, 50.0);
        const Eigen::VectorXd half = mlem_update(p, b, u, sens, 1e-300);
        CHECK(std::abs(p.apply(half).sum() - b.sum()) <= 1e-8 * b.sum());
    }
    SUBCASE("iterates stay nonnegative")
    {
        const Eigen::VectorXd b = poisson_sample(20.0 * p.apply(truth.values), 4);
        for (const PenaltyKind& kind : {PenaltyKind{Tikhonov{}}, PenaltyKind{EdgeLaplacian{}}, PenaltyKind{TotalVariation{}}}) {
            SolverConfig cfg;
            cfg.alpha = 0.5;
            cfg.outer_iters = 50;
            bool ok = true;
            ReconOptions opts;
            opts.on_iterate = [&](int, const Eigen::VectorXd& u) { ok = ok && u.minCoeff() >= 0.0; };
            const ReconResult r = mlem_split_reconstruct(p, spec.grid, b, kind, cfg, opts);
            CHECK(ok);
            CHECK(r.history.size() == 50);
        }
    }
    SUBCASE("negative data rejected")
    {
        Eigen::VectorXd b = p.apply(truth.values);
        b[0] = -1.0;
        CHECK_THROWS_AS(mlem_split_reconstruct(p, spec.grid, b, Tikhonov{}, SolverConfig{}), ConfigError);
    }
}

TEST_CASE("denoising steps decrease the proximal objective")
{
    const int n = 32;
    const Image clean = smooth_truth(n);
    const Eigen::VectorXd f0 = clean.values + 0.1 * gaussian_vector(n * n, 12);
    for (const PenaltyKind& kind : {PenaltyKind{EdgeLaplacian{}}, PenaltyKind{TotalVariation{}}}) {
        const RegularizerMatrix r = build_gradient_matrix(kind, Image(clean.grid, f0));
        const double alpha = 1e-4;
        const double tau = 1.0 / (1.0 + alpha * largest_eigenvalue(r.matrix, 30, 0));
        auto objective = [&](const Eigen::VectorXd& f) { return 0.5 * (f - f0).squaredNorm() + 0.5 * alpha * f.dot(r.apply(f)); };
        Eigen::VectorXd f = f0;
        for (int l = 0; l < 10; ++l) {
            const Eigen::VectorXd next = denoise_steps(f0, r, alpha, tau, l + 1);
            CHECK(objective(next) < objective(f));
            f = next;
        }
    }
}

TEST_CASE("power iterations")
{
    std::mt19937_64 rng(5);
    std::normal_distribution<double> nd;
    Eigen::MatrixXd m(12, 9);
    for (auto& x : m.reshaped())
        x = nd(rng);
    const Eigen::MatrixXd spd = m.transpose() * m;
    const double top = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(spd).eigenvalues().maxCoeff();
    CHECK(largest_eigenvalue(spd.sparseView(), 500, 1) == doctest::Approx(top).epsilon(1e-8));
    CHECK(largest_singular_value(MatrixOperator<Eigen::MatrixXd>(m), 500, 1) == doctest::Approx(std::sqrt(top)).epsilon(1e-8));
}

TEST_CASE("error bound trials")
{
    const ErrorBoundReport rep = verify_error_bound(100, 16, 0, {1e-3, 1e-1, 1.0});
    CHECK(rep.trials == 100);
    CHECK(rep.checks == 300);
    CHECK(rep.violations == 0);
    CHECK(rep.max_slack <= 1e-10);

    const ErrorBoundReport zero = verify_error_bound(10, 8, 1, {0.0});
    CHECK(zero.violations == 0);
    CHECK(std::abs(zero.max_slack) <= 1e-12);

    // doubling α keeps the bound and moves the error continuously
    const ErrorBoundReport a = verify_error_bound(20, 16, 2, {0.1});
    const ErrorBoundReport b = verify_error_bound(20, 16, 2, {0.2});
    CHECK(b.violations == 0);
    CHECK(a.max_ratio <= 1.0);
    CHECK(b.max_ratio <= 1.0);
    CHECK_THROWS_AS(verify_error_bound(1, 65, 0, {1.0}), ConfigError);
}

TEST_CASE("solvers are deterministic")
{
    const Projector p = small_projector(16, 12);
    const Eigen::VectorXd b = p.apply(smooth_truth(16).values) + 0.01 * gaussian_vector(p.rows(), 3);
    SolverConfig cfg;
    cfg.alpha = 1e-3;
    cfg.outer_iters = 5;
    const ReconResult r1 = fixed_point_reconstruct(p, GridSpec::square(16), b, EdgeLaplacian{}, cfg);
    const ReconResult r2 = fixed_point_reconstruct(p, GridSpec::square(16), b, EdgeLaplacian{}, cfg);
    CHECK(r1.image.values == r2.image.values);
}

TEST_CASE("solver config validation")
{
    SolverConfig c;
    c.inner_iters = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = SolverConfig{};
    c.rho = 0.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = SolverConfig{};
    c.tau = -1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = SolverConfig{};
    c.alpha = -1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

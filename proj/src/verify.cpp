#include "tomo/verify.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "tomo/phantom.hpp"
#include "tomo/projector.hpp"
#include "tomo/simulate.hpp"
#include "tomo/solvers.hpp"

namespace tomo {

namespace {

Eigen::VectorXd random_vector(Eigen::Index n, std::mt19937_64& rng)
{
    std::normal_distribution<double> dist;
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i)
        v[i] = dist(rng);
    return v;
}

Eigen::VectorXd transpose_image(const GridSpec& g, const Eigen::VectorXd& x)
{
    Eigen::VectorXd out(x.size());
    for (int iy = 0; iy < g.ny; ++iy)
        for (int ix = 0; ix < g.nx; ++ix)
            out[static_cast<Eigen::Index>(g.index(iy, ix))] = x[static_cast<Eigen::Index>(g.index(ix, iy))];
    return out;
}

std::string format_worst(double worst, double tol)
{
    std::ostringstream s;
    s.precision(3);
    s << "worst " << std::scientific << worst << " (tolerance " << tol << ")";
    return s.str();
}

/// A smooth positive test image with some edges.
Image probe_image(const GridSpec& g)
{
    PhantomDescriptor d = PhantomDescriptor::default_ct();
    Image u = generate_ct_phantom(d, g);
    for (Eigen::Index i = 0; i < u.values.size(); ++i)
        u.values[i] += 0.05 * std::sin(0.37 * static_cast<double>(i));
    return u;
}

} // namespace

SuiteResult verify_adjoint(const VerifyOptions& opts)
{
    const double tol = 1e-10;
    SuiteResult res{"adjoint", true, 0.0, tol, ""};
    const GridSpec grid = GridSpec::square(opts.adjoint_grid, 1.0);
    std::mt19937_64 rng(derive_seed(opts.seed, 11));
    for (Kernel k : {Kernel::strip, Kernel::linear})
        for (bool psf : {false, true}) {
            ProjectorSpec spec = ProjectorSpec::covering(grid, uniform_angles(opts.adjoint_angles), k);
            if (psf)
                spec.psf_fwhm_bins = 3.0;
            const Projector p(spec);
            for (int t = 0; t < opts.adjoint_pairs; ++t) {
                const Eigen::VectorXd u = random_vector(p.cols(), rng);
                const Eigen::VectorXd v = random_vector(p.rows(), rng);
                const Eigen::VectorXd au = p.apply(u);
                Eigen::VectorXd atv = p.apply_adjoint(v);
                if (opts.inject_transpose_bug)
                    atv = transpose_image(grid, atv);
                const double err = std::abs(au.dot(v) - u.dot(atv)) / (au.norm() * v.norm());
                res.worst = std::max(res.worst, err);
            }
        }
    res.passed = res.worst <= tol;
    res.detail = format_worst(res.worst, tol);
    return res;
}

double frozen_functional(const PenaltyKind& kind, const Image& u, const Eigen::VectorXd& v)
{
    const GridSpec& g = u.grid;
    const double umax = u.values.maxCoeff();
    const bool flat = umax <= kFlatThreshold;
    const Eigen::ArrayXd ux = csr_multiply(difference_x(g), u.values).array();
    const Eigen::ArrayXd uy = csr_multiply(difference_y(g), u.values).array();
    const Eigen::ArrayXd vx = csr_multiply(difference_x(g), v).array();
    const Eigen::ArrayXd vy = csr_multiply(difference_y(g), v).array();
    const Eigen::ArrayXd vxx = csr_multiply(second_difference_x(g), v).array();
    const Eigen::ArrayXd vyy = csr_multiply(second_difference_y(g), v).array();
    const Eigen::ArrayXd grad2 = ux.square() + uy.square();
    if (std::holds_alternative<Tikhonov>(kind))
        return 0.5 * v.squaredNorm();
    if (const auto* tv = std::get_if<TotalVariation>(&kind)) {
        const double eps = tv->eps_rel * umax;
        const Eigen::ArrayXd phi = flat ? Eigen::ArrayXd::Ones(v.size()) : (grad2 + eps * eps).rsqrt().eval();
        return 0.5 * (phi * (vx.square() + vy.square())).sum();
    }
    if (const auto* p = std::get_if<TvL2>(&kind)) {
        const double alpha = *p->alpha;
        const double eps = p->eps_rel * umax;
        const double gamma = p->gamma_rel * umax * umax / (g.hx() * g.hy());
        const Eigen::ArrayXd psi = flat ? Eigen::ArrayXd::Constant(v.size(), alpha) : (alpha * (grad2 + eps * eps).rsqrt()).eval();
        const Eigen::ArrayXd ups =
            flat ? Eigen::ArrayXd::Zero(v.size()) : (2.0 * p->mu * (grad2 + gamma).pow(-1.5)).eval();
        return 0.5 * ((psi * (vx.square() + vy.square())).sum() + (ups * (vxx.square() + vyy.square())).sum());
    }
    const auto& el = std::get<EdgeLaplacian>(kind);
    Eigen::ArrayXd wx = Eigen::ArrayXd::Ones(v.size());
    Eigen::ArrayXd wy = wx;
    if (!flat) {
        const double ax = 2.0 * umax / g.dx;
        const double ay = 2.0 * umax / g.dy;
        Eigen::ArrayXd sx = ux.abs(), sy = uy.abs();
        for (int iy = 0; iy < g.ny; ++iy)
            for (int ix = 0; ix < g.nx; ++ix) {
                const auto i = static_cast<Eigen::Index>(g.index(ix, iy));
                if (ix > 0)
                    sx[i] = std::max(sx[i], std::abs(ux[static_cast<Eigen::Index>(g.index(ix - 1, iy))]));
                if (iy > 0)
                    sy[i] = std::max(sy[i], std::abs(uy[static_cast<Eigen::Index>(g.index(ix, iy - 1))]));
            }
        wx = (1.0 + el.beta * (sx / ax).square()).inverse();
        wy = (1.0 + el.beta * (sy / ay).square()).inverse();
    }
    return 0.5 * ((wx * vxx).square().sum() + (wy * vyy).square().sum());
}

SuiteResult verify_gradients(const VerifyOptions& opts)
{
    const double tol = 1e-5;
    SuiteResult res{"gradient", true, 0.0, tol, ""};
    const GridSpec grid = GridSpec::square(opts.gradient_grid, 1.0);
    const Image u = probe_image(grid);
    std::mt19937_64 rng(derive_seed(opts.seed, 12));
    const std::vector<PenaltyKind> kinds = {Tikhonov{}, TotalVariation{}, TvL2{1e-5, 1.0, 1e-3, 0.5}, EdgeLaplacian{0.03}};
    std::uniform_int_distribution<Eigen::Index> pick(0, u.values.size() - 1);
    for (const auto& kind : kinds) {
        const RegularizerMatrix r = build_gradient_matrix(kind, u);
        const Eigen::VectorXd v = random_vector(u.values.size(), rng);
        const Eigen::VectorXd g = r.apply(v);
        const double scale = g.lpNorm<Eigen::Infinity>();
        const double h = 1e-3;
        for (int t = 0; t < opts.gradient_probes; ++t) {
            const Eigen::Index i = pick(rng);
            Eigen::VectorXd vp = v, vm = v;
            vp[i] += h;
            vm[i] -= h;
            const double fd = (frozen_functional(kind, u, vp) - frozen_functional(kind, u, vm)) / (2.0 * h);
            const double err = std::abs(fd - g[i]) / std::max(std::abs(g[i]), 1e-6 * scale);
            res.worst = std::max(res.worst, err);
        }
    }
    res.passed = res.worst <= tol;
    res.detail = format_worst(res.worst, tol);
    return res;
}

SuiteResult verify_mlem(const VerifyOptions& opts)
{
    const double tol = 1e-10;
    SuiteResult res{"mlem", true, 0.0, tol, ""};
    const GridSpec grid = GridSpec::square(opts.mlem_grid, 1.0);
    ProjectorSpec spec = ProjectorSpec::covering(grid, uniform_angles(opts.mlem_grid), Kernel::linear);
    const Projector p(spec);
    const Image truth = generate_ct_phantom(PhantomDescriptor::default_ct(), grid);
    Eigen::VectorXd u = truth.values.array() + 0.1;
    const Eigen::VectorXd b = p.apply(u);
    const Eigen::VectorXd sens = p.apply_adjoint(Eigen::VectorXd::Ones(p.rows()));
    const Eigen::VectorXd next = mlem_update(p, b, u, sens, 1e-300);
    double fixed = 0.0;
    for (Eigen::Index j = 0; j < u.size(); ++j)
        if (sens[j] > 0.0)
            fixed = std::max(fixed, std::abs(next[j] - u[j]));
    fixed /= u.lpNorm<Eigen::Infinity>();

    // Counts are conserved by one update from any positive start.
    const Eigen::VectorXd noisy = poisson_sample(100.0 * b, derive_seed(opts.seed, 13));
    const Eigen::VectorXd start = Eigen::VectorXd::Ones(u.size());
    const Eigen::VectorXd stepped = mlem_update(p, noisy, start, sens, 1e-300);
    const double conservation = std::abs(p.apply(stepped).sum() - noisy.sum()) / noisy.sum();

    double negative = 0.0;
    SolverConfig cfg;
    cfg.outer_iters = opts.mlem_iters;
    ReconOptions ro;
    ro.on_iterate = [&](int, const Eigen::VectorXd& x) { negative = std::min(negative, x.minCoeff()); };
    mlem_split_reconstruct(p, grid, noisy, Tikhonov{}, cfg, ro);
    cfg.alpha = 1e-3;
    mlem_split_reconstruct(p, grid, noisy, EdgeLaplacian{}, cfg, ro);

    res.worst = fixed;
    res.passed = fixed <= tol && conservation <= 1e-8 && negative >= 0.0;
    std::ostringstream s;
    s.precision(3);
    s << std::scientific << "fixed point " << fixed << ", count drift " << conservation << ", min iterate " << negative;
    res.detail = s.str();
    return res;
}

SuiteResult verify_error_bound_suite(const VerifyOptions& opts)
{
    SuiteResult res{"error_bound", true, 0.0, 0.0, ""};
    const ErrorBoundReport r = verify_error_bound(opts.trials, opts.n, derive_seed(opts.seed, 14), {1e-3, 1e-1, 1.0});
    res.worst = r.max_slack;
    res.passed = r.violations == 0;
    std::ostringstream s;
    s.precision(3);
    s << r.trials << " trials, " << r.checks << " checks, " << r.violations << " violations, max slack " << std::scientific
      << r.max_slack;
    res.detail = s.str();
    return res;
}

std::vector<SuiteResult> run_verify(const VerifyOptions& opts)
{
    return {verify_adjoint(opts), verify_gradients(opts), verify_mlem(opts), verify_error_bound_suite(opts)};
}

} // namespace tomo

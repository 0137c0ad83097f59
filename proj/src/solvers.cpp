#include "tomo/solvers.hpp"

#include <cmath>
#include <random>

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>

#include "tomo/error.hpp"
#include "tomo/metrics.hpp"

namespace tomo {

void SolverConfig::validate() const
{
    if (outer_iters < 1)
        throw ConfigError("outer_iters must be >= 1");
    if (inner_iters < 1)
        throw ConfigError("inner_iters must be >= 1");
    if (!(rho > 0))
        throw ConfigError("rho must be positive");
    if (!(alpha >= 0) || !std::isfinite(alpha))
        throw ConfigError("alpha must be finite and nonnegative");
    if (tau && !(*tau > 0))
        throw ConfigError("tau must be positive");
    if (sigma && !(*sigma > 0))
        throw ConfigError("sigma must be positive");
}

namespace {

void check_shapes(const LinearOperator& a, const GridSpec& grid, const Eigen::VectorXd& b)
{
    grid.validate();
    if (a.cols() != static_cast<Eigen::Index>(grid.size()))
        throw ConfigError("operator columns do not match the image grid");
    if (a.rows() != b.size())
        throw ConfigError("operator rows do not match the data length");
    if (!b.allFinite())
        throw ConfigError("data contains non-finite values");
}

void record_errors(IterationRecord& rec, const Eigen::VectorXd& u, const ReconOptions& opts)
{
    if (opts.ground_truth)
        rec.rmse = rmse(u, *opts.ground_truth);
    for (const auto& m : opts.masks)
        rec.region_rmse.push_back(rmse(u, *opts.ground_truth, &m));
}

Eigen::VectorXd random_positive(Eigen::Index n, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(0.5, 1.5);
    Eigen::VectorXd v(n);
    for (auto& x : v)
        x = dist(rng);
    return v.normalized();
}

void ensure_finite(const Eigen::VectorXd& u, int iter)
{
    if (!u.allFinite())
        throw NumericalError("non-finite iterate at outer iteration " + std::to_string(iter));
}

} // namespace

ReconResult cgls(const LinearOperator& a, const GridSpec& grid, const Eigen::VectorXd& b, int iters, const ReconOptions& opts)
{
    check_shapes(a, grid, b);
    if (iters < 1)
        throw ConfigError("cgls needs at least one iteration");
    if (!opts.masks.empty() && !opts.ground_truth)
        throw ConfigError("region masks need a ground truth");

    ReconResult res;
    Eigen::VectorXd x = Eigen::VectorXd::Zero(a.cols());
    Eigen::VectorXd r = b;
    Eigen::VectorXd s = a.apply_adjoint(r);
    Eigen::VectorXd p = s;
    double gamma = s.squaredNorm();
    for (int k = 0; k < iters; ++k) {
        if (gamma == 0.0) {
            res.terminated_early = true;
            break;
        }
        const Eigen::VectorXd q = a.apply(p);
        const double delta = q.squaredNorm();
        if (!(delta > 0.0) || !std::isfinite(delta)) {
            res.breakdown = true;
            res.terminated_early = true;
            break;
        }
        const double step = gamma / delta;
        const double step_norm2 = step * step * p.squaredNorm();
        x += step * p;
        r -= step * q;
        ensure_finite(x, k + 1);
        s = a.apply_adjoint(r);
        const double gamma_next = s.squaredNorm();
        p = s + (gamma_next / gamma) * p;
        gamma = gamma_next;

        IterationRecord rec;
        rec.iter = k + 1;
        rec.fidelity = 0.5 * r.squaredNorm();
        rec.objective = rec.fidelity;
        rec.step_norm2 = step_norm2;
        record_errors(rec, x, opts);
        res.history.push_back(std::move(rec));
        if (opts.on_iterate)
            opts.on_iterate(k + 1, x);
    }
    res.image = Image(grid, std::move(x));
    return res;
}

double largest_eigenvalue(const CsrMatrix& m, int steps, std::uint64_t seed)
{
    Eigen::VectorXd v = random_positive(m.rows(), seed);
    double lambda = 0.0;
    for (int k = 0; k < steps; ++k) {
        const Eigen::VectorXd w = csr_multiply(m, v);
        lambda = v.dot(w);
        const double norm = w.norm();
        if (!(norm > 0.0))
            return 0.0;
        v = w / norm;
    }
    return lambda;
}

double largest_singular_value(const LinearOperator& a, int steps, std::uint64_t seed)
{
    Eigen::VectorXd v = random_positive(a.cols(), seed);
    double lambda = 0.0;
    for (int k = 0; k < steps; ++k) {
        const Eigen::VectorXd w = a.apply_adjoint(a.apply(v));
        lambda = v.dot(w);
        const double norm = w.norm();
        if (!(norm > 0.0))
            return 0.0;
        v = w / norm;
    }
    return std::sqrt(std::max(lambda, 0.0));
}

ReconResult fixed_point_reconstruct(const LinearOperator& a, const GridSpec& grid, const Eigen::VectorXd& b,
                                    const PenaltyKind& kind, const SolverConfig& cfg, const ReconOptions& opts)
{
    check_shapes(a, grid, b);
    cfg.validate();
    validate_penalty(kind);
    if (!opts.masks.empty() && !opts.ground_truth)
        throw ConfigError("region masks need a ground truth");

    const double weight = cfg.alpha > 0.0 || std::holds_alternative<TvL2>(kind) ? penalty_multiplier(kind, cfg.alpha) : 0.0;
    const double objective_alpha = std::holds_alternative<TvL2>(kind) ? *std::get<TvL2>(kind).alpha : cfg.alpha;
    const Eigen::Index n = a.cols();

    Eigen::VectorXd u = opts.initial ? opts.initial->values : Eigen::VectorXd::Zero(n);
    if (u.size() != n)
        throw ConfigError("initial image does not match the grid");

    double sigma = 0.0;
    if (cfg.precondition)
        sigma = cfg.sigma ? *cfg.sigma : largest_singular_value(a, 50, cfg.seed);

    ReconResult res;
    Eigen::VectorXd au = a.apply(u);
    for (int outer = 0; outer < cfg.outer_iters; ++outer) {
        const Image current(grid, u);
        CsrMatrix rmat;
        Eigen::VectorXd ru = Eigen::VectorXd::Zero(n);
        if (weight > 0.0) {
            rmat = build_gradient_matrix(kind, current).matrix;
            ru = csr_multiply(rmat, u);
        }
        const Eigen::VectorXd g = a.apply_adjoint(au - b) + weight * ru;

        auto hessian_times = [&](const Eigen::VectorXd& v, Eigen::VectorXd& av) {
            av = a.apply(v);
            Eigen::VectorXd hv = a.apply_adjoint(av);
            if (weight > 0.0)
                hv += weight * csr_multiply(rmat, v);
            return hv;
        };

        Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> factor;
        const bool use_factor = cfg.precondition && weight > 0.0;
        if (use_factor) {
            Eigen::SparseMatrix<double> hs = Eigen::SparseMatrix<double>(rmat) * weight;
            for (Eigen::Index i = 0; i < n; ++i)
                hs.coeffRef(i, i) += sigma * sigma;
            factor.compute(hs);
            if (factor.info() != Eigen::Success)
                throw NumericalError("preconditioner factorization failed");
        }
        auto precondition = [&](const Eigen::VectorXd& r) -> Eigen::VectorXd {
            if (use_factor)
                return factor.solve(r);
            if (cfg.precondition && sigma > 0.0)
                return r / (sigma * sigma);
            return r;
        };

        // Preconditioned CG on H s = -g from s = 0.
        Eigen::VectorXd s = Eigen::VectorXd::Zero(n);
        Eigen::VectorXd as = Eigen::VectorXd::Zero(a.rows());
        Eigen::VectorXd r = -g;
        Eigen::VectorXd z = precondition(r);
        Eigen::VectorXd p = z;
        double rz = r.dot(z);
        int inner_steps = 0;
        for (int l = 0; l < cfg.inner_iters && rz > 0.0; ++l) {
            Eigen::VectorXd ap;
            const Eigen::VectorXd hp = hessian_times(p, ap);
            const double curvature = p.dot(hp);
            if (!(curvature > 0.0) || !std::isfinite(curvature)) {
                res.breakdown = true;
                break;
            }
            const double step = rz / curvature;
            s += step * p;
            as += step * ap;
            ++inner_steps;
            if (opts.on_inner_step)
                opts.on_inner_step(outer, l, s);
            if (step * step * p.squaredNorm() <= cfg.rho)
                break;
            r -= step * hp;
            z = precondition(r);
            const double rz_next = r.dot(z);
            p = z + (rz_next / rz) * p;
            rz = rz_next;
        }

        u += s;
        au += as;
        ensure_finite(u, outer + 1);

        IterationRecord rec;
        rec.iter = outer + 1;
        rec.fidelity = 0.5 * (au - b).squaredNorm();
        rec.penalty = objective_alpha > 0.0 ? penalty_value(kind, Image(grid, u)) : 0.0;
        rec.objective = rec.fidelity + objective_alpha * rec.penalty;
        rec.step_norm2 = s.squaredNorm();
        rec.inner_steps = inner_steps;
        record_errors(rec, u, opts);
        res.history.push_back(std::move(rec));
        if (opts.on_iterate)
            opts.on_iterate(outer + 1, u);
        if (res.history.back().step_norm2 <= cfg.rho) {
            res.terminated_early = outer + 1 < cfg.outer_iters;
            break;
        }
    }
    res.image = Image(grid, std::move(u));
    return res;
}

Eigen::VectorXd mlem_update(const LinearOperator& a, const Eigen::VectorXd& b, const Eigen::VectorXd& u,
                            const Eigen::VectorXd& sensitivity, double floor)
{
    return mlem_update(a, b, u, a.apply(u), sensitivity, floor);
}

Eigen::VectorXd mlem_update(const LinearOperator& a, const Eigen::VectorXd& b, const Eigen::VectorXd& u,
                            const Eigen::VectorXd& au, const Eigen::VectorXd& sensitivity, double floor)
{
    const Eigen::VectorXd ratio = (b.array() / au.array().max(floor)).matrix();
    const Eigen::VectorXd back = a.apply_adjoint(ratio);
    Eigen::VectorXd out(u.size());
    for (Eigen::Index j = 0; j < u.size(); ++j)
        out[j] = sensitivity[j] > 0.0 ? u[j] * back[j] / sensitivity[j] : 0.0;
    return out;
}

Eigen::VectorXd denoise_steps(const Eigen::VectorXd& f0, const RegularizerMatrix& r, double weight, double tau, int steps)
{
    Eigen::VectorXd f = f0;
    for (int l = 0; l < steps; ++l)
        f -= tau * ((f - f0) + weight * r.apply(f));
    return f;
}

ReconResult mlem_split_reconstruct(const LinearOperator& a, const GridSpec& grid, const Eigen::VectorXd& b,
                                   const PenaltyKind& kind, const SolverConfig& cfg, const ReconOptions& opts)
{
    check_shapes(a, grid, b);
    cfg.validate();
    validate_penalty(kind);
    if ((b.array() < 0.0).any())
        throw ConfigError("Poisson data must be nonnegative");
    if (!opts.masks.empty() && !opts.ground_truth)
        throw ConfigError("region masks need a ground truth");

    const double weight = cfg.alpha > 0.0 || std::holds_alternative<TvL2>(kind) ? penalty_multiplier(kind, cfg.alpha) : 0.0;
    const double objective_alpha = std::holds_alternative<TvL2>(kind) ? *std::get<TvL2>(kind).alpha : cfg.alpha;
    const Eigen::Index n = a.cols();

    const Eigen::VectorXd sensitivity = a.apply_adjoint(Eigen::VectorXd::Ones(a.rows()));
    Eigen::VectorXd u = Eigen::VectorXd::Ones(n);
    for (Eigen::Index j = 0; j < n; ++j)
        if (!(sensitivity[j] > 0.0))
            u[j] = 0.0;
    const double au0_max = a.apply(Eigen::VectorXd::Ones(n)).maxCoeff();
    const double floor = au0_max > 0.0 ? 1e-12 * au0_max : std::numeric_limits<double>::min();

    ReconResult res;
    Eigen::VectorXd au = a.apply(u);
    for (int outer = 0; outer < cfg.outer_iters; ++outer) {
        const Eigen::VectorXd half = mlem_update(a, b, u, au, sensitivity, floor);
        Eigen::VectorXd next = half;
        if (weight > 0.0) {
            const RegularizerMatrix r = build_gradient_matrix(kind, Image(grid, half));
            const double tau = cfg.tau ? *cfg.tau : 1.0 / (1.0 + weight * largest_eigenvalue(r.matrix, 30, cfg.seed));
            next = denoise_steps(half, r, weight, tau, cfg.inner_iters);
        }
        for (Eigen::Index j = 0; j < n; ++j)
            next[j] = sensitivity[j] > 0.0 ? std::max(next[j], 0.0) : 0.0;
        ensure_finite(next, outer + 1);

        IterationRecord rec;
        rec.iter = outer + 1;
        au = a.apply(next);
        double fid = 0.0;
        for (Eigen::Index i = 0; i < au.size(); ++i) {
            const double m = std::max(au[i], floor);
            fid += au[i] - (b[i] > 0.0 ? b[i] * std::log(m) : 0.0);
        }
        rec.fidelity = fid;
        rec.penalty = objective_alpha > 0.0 ? penalty_value(kind, Image(grid, next)) : 0.0;
        rec.objective = rec.fidelity + objective_alpha * rec.penalty;
        rec.step_norm2 = (next - u).squaredNorm();
        rec.inner_steps = weight > 0.0 ? cfg.inner_iters : 0;
        u = std::move(next);
        record_errors(rec, u, opts);
        res.history.push_back(std::move(rec));
        if (opts.on_iterate)
            opts.on_iterate(outer + 1, u);
    }
    res.image = Image(grid, std::move(u));
    return res;
}

ErrorBoundReport verify_error_bound(int trials, int n, std::uint64_t seed, const std::vector<double>& alphas)
{
    if (trials < 1 || n < 1 || n > 64)
        throw ConfigError("error-bound trials need trials >= 1 and 1 <= n <= 64");
    using Eigen::MatrixXd;
    using Eigen::VectorXd;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto gaussian = [&](Eigen::Index r, Eigen::Index c) {
        MatrixXd m(r, c);
        for (Eigen::Index j = 0; j < c; ++j)
            for (Eigen::Index i = 0; i < r; ++i)
                m(i, j) = normal(rng);
        return m;
    };

    ErrorBoundReport rep;
    rep.max_slack = -std::numeric_limits<double>::infinity();
    for (int t = 0; t < trials; ++t) {
        for (int attempt = 0;; ++attempt) {
            if (attempt > 100)
                throw NumericalError("could not draw a nonsingular error-bound trial");
            const MatrixXd qu = gaussian(n, n).householderQr().householderQ();
            const MatrixXd qv = gaussian(n, n).householderQr().householderQ();
            VectorXd sv(n);
            for (auto& s : sv)
                s = 0.1 + 0.9 * unit(rng);
            const MatrixXd a = qu * sv.asDiagonal() * qv.transpose();
            const MatrixXd pert = gaussian(n, n);
            const MatrixXd r = MatrixXd::Identity(n, n) + 0.1 * (pert.transpose() * pert) / n;
            const VectorXd b = gaussian(n, 1);

            const MatrixXd m = a.transpose() * a;
            const MatrixXd nmat = r.transpose() * r;
            const Eigen::LLT<MatrixXd> mfac(m);
            if (mfac.info() != Eigen::Success)
                continue;
            const VectorXd atb = a.transpose() * b;
            const VectorXd u_hat = mfac.solve(atb);
            const VectorXd bound_dir = r * mfac.solve(nmat * u_hat);
            for (double alpha : alphas) {
                const Eigen::LLT<MatrixXd> reg(m + alpha * nmat);
                if (reg.info() != Eigen::Success)
                    throw NumericalError("regularized normal matrix not positive definite");
                const VectorXd h = reg.solve(atb) - u_hat;
                const double lhs = (r * h).norm();
                const double rhs = alpha * bound_dir.norm();
                const double slack = lhs - rhs;
                ++rep.checks;
                if (lhs > rhs + 1e-10)
                    ++rep.violations;
                rep.max_slack = std::max(rep.max_slack, slack);
                if (rhs > 0.0)
                    rep.max_ratio = std::max(rep.max_ratio, lhs / rhs);
            }
            break;
        }
        ++rep.trials;
    }
    return rep;
}

} // namespace tomo

#include "tomo/regularizers.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "tomo/error.hpp"

namespace tomo {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};

using Triplets = std::vector<Eigen::Triplet<double>>;

CsrMatrix from_triplets(const GridSpec& g, const Triplets& t)
{
    const auto n = static_cast<Eigen::Index>(g.size());
    CsrMatrix m(n, n);
    m.setFromTriplets(t.begin(), t.end());
    return m;
}

CsrMatrix diagonal(const Eigen::VectorXd& d)
{
    CsrMatrix m(d.size(), d.size());
    m.reserve(Eigen::VectorXi::Ones(d.size()));
    for (Eigen::Index i = 0; i < d.size(); ++i)
        m.insert(i, i) = d[i];
    m.makeCompressed();
    return m;
}

/// Appends the entries of Oᵀ diag(d) O. Each off-diagonal product is formed
/// once and written to both triangles, so the assembled sum is exactly
/// symmetric.
void add_weighted_gram(Triplets& t, const CsrMatrix& op, const Eigen::VectorXd& d)
{
    for (Eigen::Index r = 0; r < op.outerSize(); ++r) {
        const double w = d[r];
        if (w == 0.0)
            continue;
        const auto begin = op.outerIndexPtr()[r];
        const auto end = op.outerIndexPtr()[r + 1];
        for (auto a = begin; a < end; ++a) {
            const int ca = op.innerIndexPtr()[a];
            const double wa = w * op.valuePtr()[a];
            t.emplace_back(ca, ca, wa * op.valuePtr()[a]);
            for (auto b = a + 1; b < end; ++b) {
                const int cb = op.innerIndexPtr()[b];
                const double v = wa * op.valuePtr()[b];
                t.emplace_back(ca, cb, v);
                t.emplace_back(cb, ca, v);
            }
        }
    }
}

double max_value(const Image& u) { return u.values.size() ? u.values.maxCoeff() : 0.0; }

struct Stencils {
    GridSpec grid;
    CsrMatrix dx, dy, dxx, dyy;
};

// The solvers rebuild R every outer iteration on the same grid.
const Stencils& stencils(const GridSpec& g)
{
    thread_local std::optional<Stencils> cache;
    if (!cache || !(cache->grid == g))
        cache = Stencils{g, difference_x(g), difference_y(g), second_difference_x(g), second_difference_y(g)};
    return *cache;
}

struct Gradients {
    Eigen::VectorXd gx, gy;
};

Gradients gradients(const Image& u)
{
    const Stencils& st = stencils(u.grid);
    return {csr_multiply(st.dx, u.values), csr_multiply(st.dy, u.values)};
}

/// Per-axis derivative seen by the second-difference stencil at each pixel:
/// whichever of the backward and forward differences is larger in magnitude
/// (absent neighbours contribute zero).
Gradients stencil_gradients(const Image& u)
{
    const GridSpec& gr = u.grid;
    const Gradients f = gradients(u);
    Gradients g{f.gx.cwiseAbs(), f.gy.cwiseAbs()};
    for (int iy = 0; iy < gr.ny; ++iy)
        for (int ix = 0; ix < gr.nx; ++ix) {
            const auto i = static_cast<Eigen::Index>(gr.index(ix, iy));
            if (ix > 0)
                g.gx[i] = std::max(g.gx[i], std::abs(f.gx[i - 1]));
            if (iy > 0)
                g.gy[i] = std::max(g.gy[i], std::abs(f.gy[i - gr.nx]));
        }
    return g;
}

Eigen::VectorXd tv_diagonal(const Gradients& g, double eps, bool flat)
{
    if (flat)
        return Eigen::VectorXd::Ones(g.gx.size());
    return ((g.gx.array().square() + g.gy.array().square() + eps * eps).sqrt()).inverse().matrix();
}

double require_alpha(const TvL2& p)
{
    if (!p.alpha)
        throw ConfigError("TV-l2 penalty needs alpha");
    return *p.alpha;
}

} // namespace

std::string penalty_name(const PenaltyKind& kind)
{
    return std::visit(overloaded{
                          [](const Tikhonov&) { return std::string("tikhonov"); },
                          [](const TotalVariation&) { return std::string("tv"); },
                          [](const TvL2&) { return std::string("tvl2"); },
                          [](const EdgeLaplacian&) { return std::string("el"); },
                      },
                      kind);
}

void validate_penalty(const PenaltyKind& kind)
{
    std::visit(overloaded{
                   [](const Tikhonov&) {},
                   [](const TotalVariation& p) {
                       if (!(p.eps_rel > 0))
                           throw ConfigError("TV eps_rel must be positive");
                   },
                   [](const TvL2& p) {
                       if (!(p.eps_rel > 0) || !(p.gamma_rel > 0))
                           throw ConfigError("TV-l2 eps_rel and gamma_rel must be positive");
                       if (!(p.mu >= 0))
                           throw ConfigError("TV-l2 mu must be nonnegative");
                       if (!(require_alpha(p) > 0))
                           throw ConfigError("TV-l2 alpha must be positive");
                   },
                   [](const EdgeLaplacian& p) {
                       if (!(p.beta > 0))
                           throw ConfigError("EL beta must be positive");
                   },
               },
               kind);
}

double penalty_multiplier(const PenaltyKind& kind, double alpha)
{
    return std::holds_alternative<TvL2>(kind) ? 1.0 : alpha;
}

CsrMatrix difference_x(const GridSpec& g)
{
    Triplets t;
    const double inv = 1.0 / g.hx();
    for (int iy = 0; iy < g.ny; ++iy)
        for (int ix = 0; ix + 1 < g.nx; ++ix) {
            const auto i = static_cast<int>(g.index(ix, iy));
            t.emplace_back(i, i, -inv);
            t.emplace_back(i, i + 1, inv);
        }
    return from_triplets(g, t);
}

CsrMatrix difference_y(const GridSpec& g)
{
    Triplets t;
    const double inv = 1.0 / g.hy();
    for (int iy = 0; iy + 1 < g.ny; ++iy)
        for (int ix = 0; ix < g.nx; ++ix) {
            const auto i = static_cast<int>(g.index(ix, iy));
            t.emplace_back(i, i, -inv);
            t.emplace_back(i, i + g.nx, inv);
        }
    return from_triplets(g, t);
}

namespace {

CsrMatrix second_difference(const GridSpec& g, bool along_x)
{
    Triplets t;
    const double h = along_x ? g.hx() : g.hy();
    const double inv = 1.0 / (h * h);
    const int n = along_x ? g.nx : g.ny;
    const int stride = along_x ? 1 : g.nx;
    for (int iy = 0; iy < g.ny; ++iy)
        for (int ix = 0; ix < g.nx; ++ix) {
            const auto i = static_cast<int>(g.index(ix, iy));
            const int pos = along_x ? ix : iy;
            // replicated neighbour outside the grid cancels one diagonal unit
            double diag = -2.0 * inv;
            if (pos > 0)
                t.emplace_back(i, i - stride, inv);
            else
                diag += inv;
            if (pos + 1 < n)
                t.emplace_back(i, i + stride, inv);
            else
                diag += inv;
            t.emplace_back(i, i, diag);
        }
    return from_triplets(g, t);
}

} // namespace

CsrMatrix second_difference_x(const GridSpec& g) { return second_difference(g, true); }
CsrMatrix second_difference_y(const GridSpec& g) { return second_difference(g, false); }


ElWeights compute_el_weights(const Image& u, double beta)
{
    if (!(beta > 0))
        throw ConfigError("EL beta must be positive");
    const auto n = u.values.size();
    ElWeights w;
    const double umax = max_value(u);
    if (umax <= kFlatThreshold) {
        w.wx = w.wy = Eigen::VectorXd::Ones(n);
        return w;
    }
    w.ax = 2.0 * umax / u.grid.dx;
    w.ay = 2.0 * umax / u.grid.dy;
    const Gradients g = stencil_gradients(u);
    w.wx = (1.0 + beta * (g.gx.array() / w.ax).square()).inverse().matrix();
    w.wy = (1.0 + beta * (g.gy.array() / w.ay).square()).inverse().matrix();
    return w;
}

RegularizerMatrix build_gradient_matrix(const PenaltyKind& kind, const Image& u)
{
    validate_penalty(kind);
    const GridSpec& grid = u.grid;
    const double umax = max_value(u);
    const bool flat = umax <= kFlatThreshold;
    CsrMatrix m = std::visit(
        overloaded{
            [&](const Tikhonov&) {
                return diagonal(Eigen::VectorXd::Ones(u.values.size()));
            },
            [&](const TotalVariation& p) {
                const Eigen::VectorXd phi = tv_diagonal(gradients(u), p.eps_rel * umax, flat);
                Triplets t;
                add_weighted_gram(t, stencils(grid).dx, phi);
                add_weighted_gram(t, stencils(grid).dy, phi);
                return from_triplets(grid, t);
            },
            [&](const TvL2& p) {
                const double alpha = require_alpha(p);
                const Gradients g = gradients(u);
                const Eigen::VectorXd psi = alpha * tv_diagonal(g, p.eps_rel * umax, flat);
                Eigen::VectorXd upsilon;
                if (flat) {
                    upsilon = Eigen::VectorXd::Zero(u.values.size());
                } else {
                    const double gamma = p.gamma_rel * umax * umax / (grid.hx() * grid.hy());
                    const Eigen::ArrayXd mag = (g.gx.array().square() + g.gy.array().square() + gamma).sqrt();
                    upsilon = (2.0 * p.mu / mag.cube()).matrix();
                }
                Triplets t;
                add_weighted_gram(t, stencils(grid).dx, psi);
                add_weighted_gram(t, stencils(grid).dy, psi);
                add_weighted_gram(t, stencils(grid).dxx, upsilon);
                add_weighted_gram(t, stencils(grid).dyy, upsilon);
                return from_triplets(grid, t);
            },
            [&](const EdgeLaplacian& p) {
                const ElWeights w = compute_el_weights(u, p.beta);
                Triplets t;
                add_weighted_gram(t, stencils(grid).dxx, w.wx.array().square().matrix());
                add_weighted_gram(t, stencils(grid).dyy, w.wy.array().square().matrix());
                return from_triplets(grid, t);
            },
        },
        kind);
    m.makeCompressed();
    return {std::move(m), kind};
}

double penalty_value(const PenaltyKind& kind, const Image& u)
{
    validate_penalty(kind);
    const double umax = max_value(u);
    const bool flat = umax <= kFlatThreshold;
    return std::visit(
        overloaded{
            [&](const Tikhonov&) { return u.values.squaredNorm(); },
            [&](const TotalVariation& p) {
                const Gradients g = gradients(u);
                const double eps = flat ? 0.0 : p.eps_rel * umax;
                return (g.gx.array().square() + g.gy.array().square() + eps * eps).sqrt().sum();
            },
            [&](const TvL2& p) {
                const double alpha = require_alpha(p);
                const Gradients g = gradients(u);
                const double eps = flat ? 0.0 : p.eps_rel * umax;
                const double gamma = flat ? 0.0 : p.gamma_rel * umax * umax / (u.grid.hx() * u.grid.hy());
                const double tv = (g.gx.array().square() + g.gy.array().square() + eps * eps).sqrt().sum();
                const Eigen::ArrayXd lap = (csr_multiply(stencils(u.grid).dxx, u.values) +
                                            csr_multiply(stencils(u.grid).dyy, u.values))
                                               .array();
                const Eigen::ArrayXd mag = (g.gx.array().square() + g.gy.array().square() + gamma).sqrt();
                double curvature = 0.0;
                for (Eigen::Index i = 0; i < lap.size(); ++i)
                    if (lap[i] != 0.0)
                        curvature += lap[i] * lap[i] / (mag[i] * mag[i] * mag[i]);
                return tv + (p.mu / alpha) * curvature;
            },
            [&](const EdgeLaplacian& p) {
                const ElWeights w = compute_el_weights(u, p.beta);
                const Eigen::VectorXd uxx = csr_multiply(stencils(u.grid).dxx, u.values);
                const Eigen::VectorXd uyy = csr_multiply(stencils(u.grid).dyy, u.values);
                return (w.wx.array() * uxx.array()).matrix().squaredNorm() + (w.wy.array() * uyy.array()).matrix().squaredNorm();
            },
        },
        kind);
}

} // namespace tomo

#include "tomo/projector.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <utility>

#include "tomo/error.hpp"

namespace tomo {

std::string to_string(Kernel k) { return k == Kernel::strip ? "strip" : "linear"; }

Kernel parse_kernel(const std::string& s)
{
    if (s == "strip")
        return Kernel::strip;
    if (s == "linear")
        return Kernel::linear;
    throw ConfigError("unknown projector kernel '" + s + "'");
}

void ProjectorSpec::validate() const
{
    grid.validate();
    validate_angles(angles);
    if (nbins < 1)
        throw ConfigError("projector needs at least one detector bin");
    if (!(bin_pitch > 0.0) || !std::isfinite(bin_pitch))
        throw ConfigError("detector pitch must be positive");
    if (psf_fwhm_bins && !(*psf_fwhm_bins > 0.0))
        throw ConfigError("PSF FWHM must be positive");
    if (!(scale > 0.0) || !std::isfinite(scale))
        throw ConfigError("projector scale must be positive");
}

ProjectorSpec ProjectorSpec::covering(const GridSpec& grid, std::vector<double> angles, Kernel kernel, std::optional<int> nbins)
{
    grid.validate();
    const double diag = std::hypot(grid.dx, grid.dy);
    const int n = nbins ? *nbins : static_cast<int>(std::ceil(diag / std::min(grid.hx(), grid.hy()) - 1e-9));
    if (n < 1)
        throw ConfigError("projector needs at least one detector bin");
    ProjectorSpec spec;
    spec.grid = grid;
    spec.angles = std::move(angles);
    spec.nbins = n;
    spec.bin_pitch = diag / n;
    spec.kernel = kernel;
    return spec;
}

Eigen::VectorXd csr_multiply(const CsrMatrix& m, const Eigen::VectorXd& x)
{
    if (x.size() != m.cols())
        throw ConfigError("operator/vector shape mismatch");
    Eigen::VectorXd y(m.rows());
    const auto* outer = m.outerIndexPtr();
    const auto* inner = m.innerIndexPtr();
    const auto* val = m.valuePtr();
    const bool compressed = m.isCompressed();
    const auto* nnz = m.innerNonZeroPtr();
    const Eigen::Index rows = m.rows();
#pragma omp parallel for schedule(static)
    for (Eigen::Index r = 0; r < rows; ++r) {
        const auto lo = outer[r];
        const auto hi = compressed ? outer[r + 1] : lo + nnz[r];
        double acc = 0.0;
        for (auto k = lo; k < hi; ++k)
            acc += val[k] * x[inner[k]];
        y[r] = acc;
    }
    return y;
}

double pixel_area_below(double hx, double hy, double theta, double t)
{
    double a = hx * std::abs(std::cos(theta));
    double b = hy * std::abs(std::sin(theta));
    if (a < b)
        std::swap(a, b);
    const double area = hx * hy;
    const double outer = 0.5 * (a + b);
    const double flat = 0.5 * (a - b);
    if (t <= -outer)
        return 0.0;
    if (t >= outer)
        return area;
    const double height = area / a;
    if (b <= 1e-14 * a)
        return height * std::clamp(t + flat, 0.0, a);
    if (t <= -flat)
        return height * (t + outer) * (t + outer) / (2.0 * b);
    if (t <= flat)
        return height * (0.5 * b + (t + flat));
    return area - height * (outer - t) * (outer - t) / (2.0 * b);
}

namespace {

struct RowBlock {
    std::vector<int> row_sizes;
    std::vector<int> cols;
    std::vector<double> weights;
};

using RowEntries = std::vector<std::vector<std::pair<int, double>>>;

void joseph_rows(const ProjectorSpec& spec, double theta, RowEntries& rows)
{
    const GridSpec& g = spec.grid;
    const double hx = g.hx(), hy = g.hy();
    const double cx = 0.5 * g.dx, cy = 0.5 * g.dy;
    const double nxv = std::cos(theta), nyv = std::sin(theta);
    const double dxv = -nyv, dyv = nxv;
    const bool x_driven = std::abs(dxv) / hx >= std::abs(dyv) / hy;
    for (int k = 0; k < spec.nbins; ++k) {
        const double offset = (k - 0.5 * (spec.nbins - 1)) * spec.bin_pitch;
        const double px = cx + offset * nxv;
        const double py = cy + offset * nyv;
        auto& row = rows[static_cast<std::size_t>(k)];
        if (x_driven) {
            const double step = hx / std::abs(dxv);
            for (int ix = 0; ix < g.nx; ++ix) {
                const double t = (g.center_x(ix) - px) / dxv;
                const double fy = (py + t * dyv) / hy - 0.5;
                const double j0 = std::floor(fy);
                const double frac = fy - j0;
                const int j = static_cast<int>(j0);
                if (j >= 0 && j < g.ny && frac < 1.0)
                    row.emplace_back(j * g.nx + ix, (1.0 - frac) * step);
                if (j + 1 >= 0 && j + 1 < g.ny && frac > 0.0)
                    row.emplace_back((j + 1) * g.nx + ix, frac * step);
            }
        } else {
            const double step = hy / std::abs(dyv);
            for (int iy = 0; iy < g.ny; ++iy) {
                const double t = (g.center_y(iy) - py) / dyv;
                const double fx = (px + t * dxv) / hx - 0.5;
                const double i0 = std::floor(fx);
                const double frac = fx - i0;
                const int i = static_cast<int>(i0);
                if (i >= 0 && i < g.nx && frac < 1.0)
                    row.emplace_back(iy * g.nx + i, (1.0 - frac) * step);
                if (i + 1 >= 0 && i + 1 < g.nx && frac > 0.0)
                    row.emplace_back(iy * g.nx + i + 1, frac * step);
            }
        }
        std::sort(row.begin(), row.end());
    }
}

void strip_rows(const ProjectorSpec& spec, double theta, RowEntries& rows)
{
    const GridSpec& g = spec.grid;
    const double hx = g.hx(), hy = g.hy();
    const double cx = 0.5 * g.dx, cy = 0.5 * g.dy;
    const double nxv = std::cos(theta), nyv = std::sin(theta);
    const double half = 0.5 * (hx * std::abs(nxv) + hy * std::abs(nyv));
    const double pitch = spec.bin_pitch;
    const double mid = 0.5 * (spec.nbins - 1);
    const double cutoff = 1e-14 * hx * hy / pitch;
    for (int iy = 0; iy < g.ny; ++iy) {
        for (int ix = 0; ix < g.nx; ++ix) {
            const double sc = (g.center_x(ix) - cx) * nxv + (g.center_y(iy) - cy) * nyv;
            const int klo = std::max(0, static_cast<int>(std::floor((sc - half) / pitch + mid - 0.5)));
            const int khi = std::min(spec.nbins - 1, static_cast<int>(std::ceil((sc + half) / pitch + mid + 0.5)));
            for (int k = klo; k <= khi; ++k) {
                const double center = (k - mid) * pitch - sc;
                const double area = pixel_area_below(hx, hy, theta, center + 0.5 * pitch) -
                                    pixel_area_below(hx, hy, theta, center - 0.5 * pitch);
                const double w = area / pitch;
                if (w > cutoff)
                    rows[static_cast<std::size_t>(k)].emplace_back(iy * g.nx + ix, w);
            }
        }
    }
}

RowBlock angle_block(const ProjectorSpec& spec, int a)
{
    RowEntries rows(static_cast<std::size_t>(spec.nbins));
    const double theta = spec.angles[static_cast<std::size_t>(a)];
    if (spec.kernel == Kernel::linear)
        joseph_rows(spec, theta, rows);
    else
        strip_rows(spec, theta, rows);
    RowBlock block;
    block.row_sizes.reserve(rows.size());
    for (const auto& row : rows) {
        block.row_sizes.push_back(static_cast<int>(row.size()));
        for (const auto& [c, w] : row) {
            block.cols.push_back(c);
            block.weights.push_back(w * spec.scale);
        }
    }
    return block;
}

CsrMatrix assemble(const std::vector<RowBlock>& blocks, Eigen::Index ncols)
{
    std::vector<int> outer{0};
    std::size_t nnz = 0;
    for (const auto& b : blocks)
        nnz += b.cols.size();
    std::vector<int> inner;
    std::vector<double> values;
    inner.reserve(nnz);
    values.reserve(nnz);
    for (const auto& b : blocks) {
        for (int sz : b.row_sizes)
            outer.push_back(outer.back() + sz);
        inner.insert(inner.end(), b.cols.begin(), b.cols.end());
        values.insert(values.end(), b.weights.begin(), b.weights.end());
    }
    const auto nrows = static_cast<Eigen::Index>(outer.size() - 1);
    return CsrMatrix(Eigen::Map<const CsrMatrix>(nrows, ncols, static_cast<Eigen::Index>(nnz), outer.data(), inner.data(), values.data()));
}

} // namespace

CsrMatrix build_projector(const ProjectorSpec& spec)
{
    spec.validate();
    const int na = static_cast<int>(spec.angles.size());
    std::vector<RowBlock> blocks(static_cast<std::size_t>(na));
#pragma omp parallel for schedule(dynamic)
    for (int a = 0; a < na; ++a)
        blocks[static_cast<std::size_t>(a)] = angle_block(spec, a);
    return assemble(blocks, static_cast<Eigen::Index>(spec.grid.size()));
}

CsrMatrix build_projector_rows(const ProjectorSpec& spec, int angle_index)
{
    spec.validate();
    if (angle_index < 0 || angle_index >= static_cast<int>(spec.angles.size()))
        throw ConfigError("angle index out of range");
    return assemble({angle_block(spec, angle_index)}, static_cast<Eigen::Index>(spec.grid.size()));
}

std::vector<double> psf_kernel(double fwhm_bins)
{
    if (!(fwhm_bins > 0.0) || !std::isfinite(fwhm_bins))
        throw ConfigError("PSF FWHM must be positive");
    const double sigma = fwhm_bins / (2.0 * std::sqrt(2.0 * std::numbers::ln2));
    const int radius = static_cast<int>(std::ceil(4.0 * sigma));
    std::vector<double> taps(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int j = -radius; j <= radius; ++j) {
        const double w = std::exp(-0.5 * j * j / (sigma * sigma));
        taps[static_cast<std::size_t>(j + radius)] = w;
        sum += w;
    }
    for (double& w : taps)
        w /= sum;
    return taps;
}

void apply_psf_inplace(Eigen::Ref<Eigen::VectorXd> values, int n_angles, int nbins, double fwhm_bins)
{
    const std::vector<double> taps = psf_kernel(fwhm_bins);
    const int radius = static_cast<int>(taps.size() / 2);
    const int period = 2 * nbins;
    auto reflect = [&](int m) {
        m %= period;
        if (m < 0)
            m += period;
        return m < nbins ? m : period - 1 - m;
    };
    std::vector<double> row(static_cast<std::size_t>(nbins));
    for (int a = 0; a < n_angles; ++a) {
        const Eigen::Index base = static_cast<Eigen::Index>(a) * nbins;
        for (int k = 0; k < nbins; ++k)
            row[static_cast<std::size_t>(k)] = values[base + k];
        for (int k = 0; k < nbins; ++k) {
            double acc = 0.0;
            for (int j = -radius; j <= radius; ++j)
                acc += taps[static_cast<std::size_t>(j + radius)] * row[static_cast<std::size_t>(reflect(k + j))];
            values[base + k] = acc;
        }
    }
}

Sinogram apply_psf(const Sinogram& s, double fwhm_bins)
{
    Sinogram out = s;
    apply_psf_inplace(out.values, s.n_angles(), s.nbins, fwhm_bins);
    return out;
}

Projector::Projector(ProjectorSpec spec) : spec_(std::move(spec)), a_(build_projector(spec_)), at_(a_.transpose()) {}

Eigen::VectorXd Projector::apply(const Eigen::VectorXd& x) const
{
    Eigen::VectorXd y = csr_multiply(a_, x);
    if (spec_.psf_fwhm_bins)
        apply_psf_inplace(y, static_cast<int>(spec_.angles.size()), spec_.nbins, *spec_.psf_fwhm_bins);
    return y;
}

Eigen::VectorXd Projector::apply_adjoint(const Eigen::VectorXd& y) const
{
    if (y.size() != a_.rows())
        throw ConfigError("sinogram length does not match projector");
    if (!spec_.psf_fwhm_bins)
        return csr_multiply(at_, y);
    Eigen::VectorXd blurred = y;
    apply_psf_inplace(blurred, static_cast<int>(spec_.angles.size()), spec_.nbins, *spec_.psf_fwhm_bins);
    return csr_multiply(at_, blurred);
}

Sinogram Projector::forward(const Image& u) const
{
    if (!(u.grid == spec_.grid))
        throw ConfigError("image grid does not match projector");
    return Sinogram(spec_.angles, spec_.nbins, apply(u.values));
}

Image Projector::adjoint(const Sinogram& s) const
{
    if (s.nbins != spec_.nbins || s.angles != spec_.angles)
        throw ConfigError("sinogram geometry does not match projector");
    return Image(spec_.grid, apply_adjoint(s.values));
}

Sinogram forward_project_streaming(const ProjectorSpec& spec, const Image& u)
{
    spec.validate();
    if (!(u.grid == spec.grid))
        throw ConfigError("image grid does not match projector");
    const int na = static_cast<int>(spec.angles.size());
    Eigen::VectorXd y(static_cast<Eigen::Index>(na) * spec.nbins);
    for (int a = 0; a < na; ++a)
        y.segment(static_cast<Eigen::Index>(a) * spec.nbins, spec.nbins) = csr_multiply(build_projector_rows(spec, a), u.values);
    if (spec.psf_fwhm_bins)
        apply_psf_inplace(y, na, spec.nbins, *spec.psf_fwhm_bins);
    return Sinogram(spec.angles, spec.nbins, std::move(y));
}

} // namespace tomo

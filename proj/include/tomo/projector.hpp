#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tomo/grid.hpp"
#include "tomo/linear_operator.hpp"

namespace tomo {

enum class Kernel { strip, linear };

std::string to_string(Kernel k);
Kernel parse_kernel(const std::string& s);

/// Parallel-beam geometry. The rotation center is the grid center; detector
/// bin k sits at signed offset (k - (nbins - 1) / 2) * bin_pitch along the
/// direction (cos θ, sin θ). Rays run along (-sin θ, cos θ).
struct ProjectorSpec {
    GridSpec grid;
    std::vector<double> angles;
    int nbins = 0;
    double bin_pitch = 0.0;
    Kernel kernel = Kernel::linear;
    std::optional<double> psf_fwhm_bins;
    /// Uniform gain on every weight (used to express emission data in counts).
    double scale = 1.0;

    void validate() const;

    /// Detector spanning the grid diagonal. Without an explicit bin count the
    /// pitch is matched to the smaller pixel side.
    static ProjectorSpec covering(const GridSpec& grid, std::vector<double> angles, Kernel kernel,
                                  std::optional<int> nbins = std::nullopt);
};

/// Builds the system matrix. Row a * nbins + k holds the weights of bin k at
/// angle a; every weight is a line-integral contribution:
///  - linear: Joseph interpolation, one sample per pixel column (or row) along
///    the dominant axis, weight = step length times linear interpolation factor;
///  - strip: exact area of pixel ∩ strip divided by the strip width.
/// PSF and scale are not part of the structure except that scale multiplies
/// every weight.
CsrMatrix build_projector(const ProjectorSpec& spec);

/// Same rows as build_projector restricted to one angle (row k = bin k).
CsrMatrix build_projector_rows(const ProjectorSpec& spec, int angle_index);

/// Area of the pixel centered at the origin with sides hx, hy lying on the
/// side {p · (cos θ, sin θ) <= t}.
double pixel_area_below(double hx, double hy, double theta, double t);

/// Per-angle Gaussian blur along the detector axis: σ = fwhm / (2 sqrt(2 ln 2)),
/// taps |j| <= ceil(4σ), unit-sum, half-sample symmetric boundary. The operator
/// is symmetric and preserves totals.
Sinogram apply_psf(const Sinogram& s, double fwhm_bins);
void apply_psf_inplace(Eigen::Ref<Eigen::VectorXd> values, int n_angles, int nbins, double fwhm_bins);
std::vector<double> psf_kernel(double fwhm_bins);

/// Precomputed system matrix plus optional detector PSF. forward = P·A,
/// adjoint = Aᵀ·P with P the (symmetric) PSF, so the pair stays adjoint.
class Projector final : public LinearOperator {
public:
    explicit Projector(ProjectorSpec spec);

    const ProjectorSpec& spec() const { return spec_; }
    const CsrMatrix& matrix() const { return a_; }

    Eigen::Index rows() const override { return a_.rows(); }
    Eigen::Index cols() const override { return a_.cols(); }
    Eigen::VectorXd apply(const Eigen::VectorXd& x) const override;
    Eigen::VectorXd apply_adjoint(const Eigen::VectorXd& y) const override;

    Sinogram forward(const Image& u) const;
    Image adjoint(const Sinogram& s) const;

private:
    ProjectorSpec spec_;
    CsrMatrix a_;
    CsrMatrix at_;
};

/// Forward projection computed one angle at a time without keeping the full
/// matrix; bit-identical to Projector(spec).forward(u).
Sinogram forward_project_streaming(const ProjectorSpec& spec, const Image& u);

} // namespace tomo

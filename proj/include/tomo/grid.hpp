#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace tomo {

/// Pixel grid covering a dx-by-dy rectangle. Pixels are stored row-major,
/// index = iy * nx + ix, with iy = 0 at the low-y edge.
struct GridSpec {
    int nx = 0;
    int ny = 0;
    double dx = 1.0;
    double dy = 1.0;

    double hx() const { return dx / nx; }
    double hy() const { return dy / ny; }
    std::size_t size() const { return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny); }
    std::size_t index(int ix, int iy) const { return static_cast<std::size_t>(iy) * nx + ix; }
    double center_x(int ix) const { return (ix + 0.5) * hx(); }
    double center_y(int iy) const { return (iy + 0.5) * hy(); }

    /// Throws ConfigError unless nx, ny >= 2 and dx, dy > 0.
    void validate() const;

    static GridSpec square(int n, double extent = 1.0) { return {n, n, extent, extent}; }

    friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

struct Image {
    GridSpec grid;
    Eigen::VectorXd values;

    Image() = default;
    /// Zero image.
    explicit Image(GridSpec g);
    /// Validates grid, length and finiteness.
    Image(GridSpec g, Eigen::VectorXd v);

    double& at(int ix, int iy) { return values[static_cast<Eigen::Index>(grid.index(ix, iy))]; }
    double at(int ix, int iy) const { return values[static_cast<Eigen::Index>(grid.index(ix, iy))]; }
};

/// Projection data, angle-major: value(a, k) = values[a * nbins + k].
struct Sinogram {
    std::vector<double> angles;
    int nbins = 0;
    Eigen::VectorXd values;

    Sinogram() = default;
    Sinogram(std::vector<double> angles, int nbins);
    Sinogram(std::vector<double> angles, int nbins, Eigen::VectorXd v);

    int n_angles() const { return static_cast<int>(angles.size()); }
    double& at(int a, int k) { return values[static_cast<Eigen::Index>(a) * nbins + k]; }
    double at(int a, int k) const { return values[static_cast<Eigen::Index>(a) * nbins + k]; }
};

struct RegionMask {
    GridSpec grid;
    std::vector<bool> membership;
    std::string label;

    RegionMask() = default;
    RegionMask(GridSpec g, std::vector<bool> m, std::string label);

    std::size_t count() const;
};

/// Angles k * pi / n for k = 0..n-1.
std::vector<double> uniform_angles(int n);

/// Throws ConfigError unless angles are strictly increasing within [0, pi).
void validate_angles(const std::vector<double>& angles);

} // namespace tomo

#include "tomo/grid.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "tomo/error.hpp"

namespace tomo {

void GridSpec::validate() const
{
    if (nx < 2 || ny < 2)
        throw ConfigError("grid needs at least 2x2 pixels, got " + std::to_string(nx) + "x" + std::to_string(ny));
    if (!(dx > 0.0) || !(dy > 0.0) || !std::isfinite(dx) || !std::isfinite(dy))
        throw ConfigError("grid extent must be positive and finite");
}

Image::Image(GridSpec g) : grid(g)
{
    grid.validate();
    values = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(grid.size()));
}

Image::Image(GridSpec g, Eigen::VectorXd v) : grid(g), values(std::move(v))
{
    grid.validate();
    if (static_cast<std::size_t>(values.size()) != grid.size())
        throw ConfigError("image payload length does not match grid");
    if (!values.allFinite())
        throw ConfigError("image contains non-finite values");
}

Sinogram::Sinogram(std::vector<double> a, int n) : angles(std::move(a)), nbins(n)
{
    validate_angles(angles);
    if (nbins < 1)
        throw ConfigError("sinogram needs at least one detector bin");
    values = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(angles.size()) * nbins);
}

Sinogram::Sinogram(std::vector<double> a, int n, Eigen::VectorXd v) : angles(std::move(a)), nbins(n), values(std::move(v))
{
    validate_angles(angles);
    if (nbins < 1)
        throw ConfigError("sinogram needs at least one detector bin");
    if (values.size() != static_cast<Eigen::Index>(angles.size()) * nbins)
        throw ConfigError("sinogram payload length does not match geometry");
    if (!values.allFinite())
        throw ConfigError("sinogram contains non-finite values");
}

RegionMask::RegionMask(GridSpec g, std::vector<bool> m, std::string l)
    : grid(g), membership(std::move(m)), label(std::move(l))
{
    grid.validate();
    if (membership.size() != grid.size())
        throw ConfigError("mask length does not match grid");
}

std::size_t RegionMask::count() const
{
    return static_cast<std::size_t>(std::count(membership.begin(), membership.end(), true));
}

std::vector<double> uniform_angles(int n)
{
    if (n < 1)
        throw ConfigError("need at least one projection angle");
    std::vector<double> out(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k)
        out[static_cast<std::size_t>(k)] = k * std::numbers::pi / n;
    return out;
}

void validate_angles(const std::vector<double>& angles)
{
    if (angles.empty())
        throw ConfigError("no projection angles");
    for (std::size_t i = 0; i < angles.size(); ++i) {
        const double a = angles[i];
        if (!std::isfinite(a) || a < 0.0 || a >= std::numbers::pi)
            throw ConfigError("angle " + std::to_string(a) + " outside [0, pi)");
        if (i > 0 && !(a > angles[i - 1]))
            throw ConfigError("angles must be strictly increasing");
    }
}

} // namespace tomo

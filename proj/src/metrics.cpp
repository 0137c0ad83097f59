#include "tomo/metrics.hpp"

#include <cmath>

#include "tomo/error.hpp"

namespace tomo {

double rmse(const Eigen::VectorXd& recon, const Image& truth, const RegionMask* mask)
{
    if (recon.size() != truth.values.size())
        throw ConfigError("rmse: image sizes differ");
    if (mask && !(mask->grid.nx == truth.grid.nx && mask->grid.ny == truth.grid.ny))
        throw ConfigError("rmse: mask grid differs from image grid");
    double err = 0.0;
    double ref = 0.0;
    for (Eigen::Index i = 0; i < recon.size(); ++i) {
        if (mask && !mask->membership[static_cast<std::size_t>(i)])
            continue;
        const double d = recon[i] - truth.values[i];
        err += d * d;
        ref += truth.values[i] * truth.values[i];
    }
    if (!(ref > 0.0))
        throw ConfigError("rmse undefined: reference image is zero on the evaluated pixels");
    return std::sqrt(err) / std::sqrt(ref);
}

double rmse(const Image& recon, const Image& truth, const RegionMask* mask)
{
    if (!(recon.grid == truth.grid))
        throw ConfigError("rmse: grids differ");
    return rmse(recon.values, truth, mask);
}

} // namespace tomo

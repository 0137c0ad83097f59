#pragma once

#include "tomo/grid.hpp"

namespace tomo {

/// ||recon - truth||₂ / ||truth||₂, restricted to the mask pixels when given.
/// Throws ConfigError on grid mismatch or when truth vanishes on the mask.
double rmse(const Image& recon, const Image& truth, const RegionMask* mask = nullptr);
double rmse(const Eigen::VectorXd& recon, const Image& truth, const RegionMask* mask = nullptr);

} // namespace tomo

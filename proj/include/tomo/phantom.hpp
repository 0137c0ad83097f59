#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <variant>
#include <vector>

#include "tomo/grid.hpp"

namespace tomo {

// Primitive coordinates live in the unit square and are stretched over the
// grid extent, so the same descriptor renders at any resolution.

struct GaussianBlob {
    double cx, cy, sigma, amplitude;
};

/// a * max(0, 1 - r^2 / radius^2)
struct Paraboloid {
    double cx, cy, radius, amplitude;
};

/// Half-open box [x0, x0 + wx) x [y0, y0 + wy).
struct Rectangle {
    double x0, y0, wx, wy, amplitude;
};

using Primitive = std::variant<GaussianBlob, Paraboloid, Rectangle>;

struct PhantomDescriptor {
    std::vector<Primitive> primitives;

    void validate() const;
    double evaluate(double x, double y) const;

    /// Two paraboloids, two Gaussians and one rectangle.
    static PhantomDescriptor default_ct();
};

/// Text form, one primitive per line:
///   gaussian   cx cy sigma amplitude
///   paraboloid cx cy radius amplitude
///   rectangle  x0 y0 wx wy amplitude
/// Blank lines and '#' comments are ignored.
PhantomDescriptor parse_phantom_descriptor(std::istream& in);
PhantomDescriptor load_phantom_descriptor(const std::string& path);
std::string format_phantom_descriptor(const PhantomDescriptor& desc);

/// Samples the descriptor at pixel centers.
Image generate_ct_phantom(const PhantomDescriptor& desc, const GridSpec& grid);

struct EtPhantom {
    Image image;
    RegionMask gaussian_region; // "GR"
    RegionMask bone_region;     // "BR"
    std::vector<GaussianBlob> blobs; // unit-square coordinates
    double support_amplitude = 0.5;
};

/// Lobed annulus of constant activity with six seeded Gaussians placed inside
/// it. GR is the union of radius-2σ disks around the blobs, BR the remaining
/// support. Requires a square grid.
EtPhantom generate_et_phantom(const GridSpec& grid, std::uint64_t seed);

/// Indicator of the lobed annulus used by generate_et_phantom.
bool et_support_contains(double x, double y);

} // namespace tomo

#include "tomo/phantom.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "tomo/error.hpp"

namespace tomo {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};

double profile(const GaussianBlob& g, double x, double y)
{
    const double r2 = (x - g.cx) * (x - g.cx) + (y - g.cy) * (y - g.cy);
    return g.amplitude * std::exp(-r2 / (2.0 * g.sigma * g.sigma));
}

double profile(const Paraboloid& p, double x, double y)
{
    const double r2 = (x - p.cx) * (x - p.cx) + (y - p.cy) * (y - p.cy);
    return p.amplitude * std::max(0.0, 1.0 - r2 / (p.radius * p.radius));
}

double profile(const Rectangle& r, double x, double y)
{
    const bool inside = x >= r.x0 && x < r.x0 + r.wx && y >= r.y0 && y < r.y0 + r.wy;
    return inside ? r.amplitude : 0.0;
}

bool finite_all(std::initializer_list<double> xs)
{
    for (double x : xs)
        if (!std::isfinite(x))
            return false;
    return true;
}

} // namespace

void PhantomDescriptor::validate() const
{
    for (const auto& prim : primitives) {
        std::visit(overloaded{
                       [](const GaussianBlob& g) {
                           if (!finite_all({g.cx, g.cy, g.sigma, g.amplitude}) || !(g.sigma > 0) || g.amplitude < 0)
                               throw ConfigError("gaussian needs sigma > 0 and amplitude >= 0");
                       },
                       [](const Paraboloid& p) {
                           if (!finite_all({p.cx, p.cy, p.radius, p.amplitude}) || !(p.radius > 0) || p.amplitude < 0)
                               throw ConfigError("paraboloid needs radius > 0 and amplitude >= 0");
                       },
                       [](const Rectangle& r) {
                           if (!finite_all({r.x0, r.y0, r.wx, r.wy, r.amplitude}) || r.wx < 0 || r.wy < 0 || r.amplitude < 0)
                               throw ConfigError("rectangle needs nonnegative extent and amplitude");
                       },
                   },
                   prim);
    }
}

double PhantomDescriptor::evaluate(double x, double y) const
{
    double sum = 0.0;
    for (const auto& prim : primitives)
        sum += std::visit([&](const auto& p) { return profile(p, x, y); }, prim);
    return sum;
}

PhantomDescriptor PhantomDescriptor::default_ct()
{
    PhantomDescriptor d;
    d.primitives = {
        Rectangle{0.14, 0.60, 0.22, 0.26, 1.0},
        GaussianBlob{0.30, 0.30, 0.05, 0.9},
        GaussianBlob{0.68, 0.78, 0.10, 0.7},
        Paraboloid{0.72, 0.34, 0.14, 1.0},
        Paraboloid{0.44, 0.52, 0.24, 0.6},
    };
    return d;
}

PhantomDescriptor parse_phantom_descriptor(std::istream& in)
{
    PhantomDescriptor desc;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos)
            line.erase(hash);
        std::istringstream ls(line);
        std::string kind;
        if (!(ls >> kind))
            continue;
        auto fail = [&] { throw ConfigError("phantom line " + std::to_string(lineno) + ": cannot parse '" + kind + "'"); };
        std::string extra;
        if (kind == "gaussian") {
            GaussianBlob g{};
            if (!(ls >> g.cx >> g.cy >> g.sigma >> g.amplitude) || (ls >> extra))
                fail();
            desc.primitives.emplace_back(g);
        } else if (kind == "paraboloid") {
            Paraboloid p{};
            if (!(ls >> p.cx >> p.cy >> p.radius >> p.amplitude) || (ls >> extra))
                fail();
            desc.primitives.emplace_back(p);
        } else if (kind == "rectangle") {
            Rectangle r{};
            if (!(ls >> r.x0 >> r.y0 >> r.wx >> r.wy >> r.amplitude) || (ls >> extra))
                fail();
            desc.primitives.emplace_back(r);
        } else {
            fail();
        }
    }
    desc.validate();
    return desc;
}

PhantomDescriptor load_phantom_descriptor(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open phantom descriptor " + path);
    return parse_phantom_descriptor(in);
}

std::string format_phantom_descriptor(const PhantomDescriptor& desc)
{
    std::ostringstream os;
    os.precision(17);
    for (const auto& prim : desc.primitives) {
        std::visit(overloaded{
                       [&](const GaussianBlob& g) { os << "gaussian " << g.cx << ' ' << g.cy << ' ' << g.sigma << ' ' << g.amplitude << '\n'; },
                       [&](const Paraboloid& p) { os << "paraboloid " << p.cx << ' ' << p.cy << ' ' << p.radius << ' ' << p.amplitude << '\n'; },
                       [&](const Rectangle& r) {
                           os << "rectangle " << r.x0 << ' ' << r.y0 << ' ' << r.wx << ' ' << r.wy << ' ' << r.amplitude << '\n';
                       },
                   },
                   prim);
    }
    return os.str();
}

Image generate_ct_phantom(const PhantomDescriptor& desc, const GridSpec& grid)
{
    desc.validate();
    Image img(grid);
    for (int iy = 0; iy < grid.ny; ++iy) {
        const double y = (iy + 0.5) / grid.ny;
        for (int ix = 0; ix < grid.nx; ++ix)
            img.at(ix, iy) = desc.evaluate((ix + 0.5) / grid.nx, y);
    }
    return img;
}

namespace {

constexpr double kCenter = 0.5;

double outer_radius(double phi) { return 0.40 + 0.05 * std::cos(2.0 * phi); }
double inner_radius(double phi) { return 0.12 + 0.02 * std::cos(2.0 * phi); }

bool disk_inside_support(double cx, double cy, double radius)
{
    if (!et_support_contains(cx, cy))
        return false;
    constexpr int probes = 32;
    for (int k = 0; k < probes; ++k) {
        const double t = 2.0 * std::numbers::pi * k / probes;
        if (!et_support_contains(cx + radius * std::cos(t), cy + radius * std::sin(t)))
            return false;
    }
    return true;
}

} // namespace

bool et_support_contains(double x, double y)
{
    const double ux = x - kCenter;
    const double uy = y - kCenter;
    const double r = std::hypot(ux, uy);
    const double phi = std::atan2(uy, ux);
    return r >= inner_radius(phi) && r <= outer_radius(phi);
}

EtPhantom generate_et_phantom(const GridSpec& grid, std::uint64_t seed)
{
    grid.validate();
    if (grid.nx != grid.ny)
        throw ConfigError("ET phantom requires a square grid");

    const double pixel = 1.0 / grid.nx; // unit-square pixel size
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    EtPhantom out;
    constexpr int n_blobs = 6;
    constexpr int max_attempts = 20000;
    int redraws = 0;
    while (out.blobs.size() < n_blobs) {
        if (++redraws > 200)
            throw ConfigError("grid too coarse to place the ET phantom blobs");
        const double sigma = (2.0 + 6.0 * unit(rng)) * pixel;
        const double amplitude = 0.4 + 0.6 * unit(rng);
        bool placed = false;
        for (int attempt = 0; attempt < max_attempts && !placed; ++attempt) {
            const double cx = unit(rng);
            const double cy = unit(rng);
            if (!disk_inside_support(cx, cy, 2.0 * sigma))
                continue;
            bool clear = true;
            for (const auto& b : out.blobs)
                clear = clear && std::hypot(cx - b.cx, cy - b.cy) >= 2.0 * (sigma + b.sigma);
            if (!clear)
                continue;
            out.blobs.push_back({cx, cy, sigma, amplitude});
            placed = true;
        }
        // A blob too wide for the remaining room is redrawn with a new width.
    }

    std::vector<bool> gr(grid.size(), false);
    std::vector<bool> br(grid.size(), false);
    Image img(grid);
    for (int iy = 0; iy < grid.ny; ++iy) {
        const double y = (iy + 0.5) / grid.ny;
        for (int ix = 0; ix < grid.nx; ++ix) {
            const double x = (ix + 0.5) / grid.nx;
            const bool support = et_support_contains(x, y);
            double v = support ? out.support_amplitude : 0.0;
            bool in_gr = false;
            for (const auto& b : out.blobs) {
                v += profile(b, x, y);
                in_gr = in_gr || std::hypot(x - b.cx, y - b.cy) <= 2.0 * b.sigma;
            }
            const std::size_t i = grid.index(ix, iy);
            img.values[static_cast<Eigen::Index>(i)] = v;
            gr[i] = in_gr;
            br[i] = support && !in_gr;
        }
    }
    out.image = std::move(img);
    out.gaussian_region = RegionMask(grid, std::move(gr), "GR");
    out.bone_region = RegionMask(grid, std::move(br), "BR");
    return out;
}

} // namespace tomo

#include "tomo/simulate.hpp"

#include <cmath>
#include <random>

#include "tomo/error.hpp"

namespace tomo {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream)
{
    // splitmix64 finalizer over a combined counter
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

Eigen::VectorXd poisson_sample(const Eigen::VectorXd& lambda, std::uint64_t seed)
{
    Eigen::VectorXd out(lambda.size());
    for (Eigen::Index i = 0; i < lambda.size(); ++i) {
        const double mean = lambda[i];
        if (!(mean >= 0.0) || !std::isfinite(mean))
            throw ConfigError("Poisson mean must be finite and nonnegative");
        if (mean == 0.0) {
            out[i] = 0.0;
            continue;
        }
        std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
        std::poisson_distribution<long long> dist(mean);
        out[i] = static_cast<double>(dist(rng));
    }
    return out;
}

void CtSimSpec::validate() const
{
    phantom.validate();
    if (recon_n < 2)
        throw ConfigError("recon grid must be at least 2x2");
    if (fine_n <= recon_n)
        throw ConfigError("fine grid must be strictly finer than the reconstruction grid");
    if (n_angles < 1)
        throw ConfigError("need at least one angle");
    if (!(i0 > 0))
        throw ConfigError("I0 must be positive");
    if (!(extent > 0))
        throw ConfigError("extent must be positive");
    if (nbins && *nbins < 1)
        throw ConfigError("nbins must be positive");
}

void EtSimSpec::validate() const
{
    if (n < 2)
        throw ConfigError("ET grid must be at least 2x2");
    if (n_angles < 1)
        throw ConfigError("need at least one angle");
    if (!(total_counts > 0))
        throw ConfigError("total counts must be positive");
    if (!(psf_fwhm_bins > 0))
        throw ConfigError("PSF FWHM must be positive");
    if (realizations < 1)
        throw ConfigError("need at least one noise realization");
    if (!(extent > 0))
        throw ConfigError("extent must be positive");
    if (nbins && *nbins < 1)
        throw ConfigError("nbins must be positive");
}

ProjectorSpec ct_recon_projector(const CtSimSpec& spec)
{
    return ProjectorSpec::covering(GridSpec::square(spec.recon_n, spec.extent), uniform_angles(spec.n_angles), Kernel::linear, spec.nbins);
}

ProjectorSpec ct_generation_projector(const CtSimSpec& spec)
{
    ProjectorSpec gen = ct_recon_projector(spec);
    gen.grid = GridSpec::square(spec.fine_n, spec.extent);
    gen.kernel = Kernel::strip;
    return gen;
}

ProjectorSpec et_projector(const EtSimSpec& spec, double scale)
{
    ProjectorSpec p = ProjectorSpec::covering(GridSpec::square(spec.n, spec.extent), uniform_angles(spec.n_angles), Kernel::linear, spec.nbins);
    p.psf_fwhm_bins = spec.psf_fwhm_bins;
    p.scale = scale;
    return p;
}

namespace {

std::string opt_int(const std::optional<int>& v) { return v ? std::to_string(*v) : std::string("auto"); }

} // namespace

KeyValues ct_provenance(const CtSimSpec& spec)
{
    return {
        {"experiment", "ct"},
        {"fine_n", std::to_string(spec.fine_n)},
        {"recon_n", std::to_string(spec.recon_n)},
        {"angles", std::to_string(spec.n_angles)},
        {"i0", format_double(spec.i0)},
        {"extent", format_double(spec.extent)},
        {"nbins", opt_int(spec.nbins)},
        {"seed", std::to_string(spec.seed)},
    };
}

KeyValues et_provenance(const EtSimSpec& spec)
{
    return {
        {"experiment", "et"},
        {"et_n", std::to_string(spec.n)},
        {"angles", std::to_string(spec.n_angles)},
        {"counts", format_double(spec.total_counts)},
        {"psf_fwhm", format_double(spec.psf_fwhm_bins)},
        {"realizations", std::to_string(spec.realizations)},
        {"extent", format_double(spec.extent)},
        {"nbins", opt_int(spec.nbins)},
        {"seed", std::to_string(spec.seed)},
    };
}

Dataset make_ct_dataset(const CtSimSpec& spec)
{
    spec.validate();
    Dataset ds;
    ds.experiment = Experiment::ct;
    ds.recon_projector = ct_recon_projector(spec);
    ds.generation_projector = ct_generation_projector(spec);

    const Image fine = generate_ct_phantom(spec.phantom, ds.generation_projector.grid);
    ds.noiseless = forward_project_streaming(ds.generation_projector, fine);
    ds.ground_truth = generate_ct_phantom(spec.phantom, ds.recon_projector.grid);

    const Eigen::VectorXd expected = (spec.i0 * (-ds.noiseless.values.array()).exp()).matrix();
    const Eigen::Index starved = (expected.array() < 1e-6).count();
    if (starved > 0)
        ds.warnings.push_back("photon starvation in " + std::to_string(starved) + " bins (expected count < 1e-6)");
    const Eigen::VectorXd counts = poisson_sample(expected, derive_seed(spec.seed, 0));
    Eigen::VectorXd b(counts.size());
    for (Eigen::Index i = 0; i < b.size(); ++i)
        b[i] = -std::log(std::max(counts[i], 1.0) / spec.i0);
    ds.noisy.emplace_back(ds.noiseless.angles, ds.noiseless.nbins, std::move(b));
    ds.provenance = ct_provenance(spec);
    return ds;
}

Dataset make_et_dataset(const EtSimSpec& spec)
{
    spec.validate();
    Dataset ds;
    ds.experiment = Experiment::et;
    const GridSpec grid = GridSpec::square(spec.n, spec.extent);
    EtPhantom ph = generate_et_phantom(grid, spec.seed);

    const ProjectorSpec unit = et_projector(spec, 1.0);
    const double total = forward_project_streaming(unit, ph.image).values.sum();
    if (!(total > 0))
        throw NumericalError("ET phantom projects to zero");
    ds.recon_projector = et_projector(spec, spec.total_counts / total);
    ds.generation_projector = ds.recon_projector;
    ds.noiseless = forward_project_streaming(ds.recon_projector, ph.image);
    for (int r = 0; r < spec.realizations; ++r)
        ds.noisy.emplace_back(ds.noiseless.angles, ds.noiseless.nbins,
                              poisson_sample(ds.noiseless.values, derive_seed(spec.seed, 1000 + static_cast<std::uint64_t>(r))));
    ds.ground_truth = std::move(ph.image);
    ds.masks = {std::move(ph.gaussian_region), std::move(ph.bone_region)};
    ds.provenance = et_provenance(spec);
    return ds;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& dir)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec)
        throw IoError("cannot create " + dir.string() + ": " + ec.message());
    write_image(dir / "ground_truth.img", ds.ground_truth);
    write_sinogram(dir / "noiseless.sin", ds.noiseless);
    for (std::size_t r = 0; r < ds.noisy.size(); ++r)
        write_sinogram(dir / ("noisy_" + std::to_string(r) + ".sin"), ds.noisy[r]);
    for (const auto& m : ds.masks)
        write_mask(dir / ("mask_" + m.label + ".msk"), m);
    write_file(dir / "provenance.txt", format_key_values(ds.provenance));
}

namespace {

const std::string& need(const KeyValues& kv, const std::string& key)
{
    auto it = kv.find(key);
    if (it == kv.end())
        throw IoError("provenance lacks '" + key + "'");
    return it->second;
}

int to_int(const std::string& s, const std::string& key)
{
    try {
        std::size_t pos = 0;
        const int v = std::stoi(s, &pos);
        if (pos == s.size())
            return v;
    } catch (const std::exception&) {
    }
    throw ConfigError("'" + key + "' expects an integer, got '" + s + "'");
}

double to_real(const std::string& s, const std::string& key)
{
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos == s.size())
            return v;
    } catch (const std::exception&) {
    }
    throw ConfigError("'" + key + "' expects a number, got '" + s + "'");
}

std::optional<int> opt_int_from(const KeyValues& kv, const std::string& key)
{
    auto it = kv.find(key);
    if (it == kv.end() || it->second == "auto" || it->second.empty())
        return std::nullopt;
    return to_int(it->second, key);
}

} // namespace

CtSimSpec ct_spec_from(const KeyValues& kv)
{
    CtSimSpec s;
    s.fine_n = to_int(need(kv, "fine_n"), "fine_n");
    s.recon_n = to_int(need(kv, "recon_n"), "recon_n");
    s.n_angles = to_int(need(kv, "angles"), "angles");
    s.i0 = to_real(need(kv, "i0"), "i0");
    s.extent = to_real(need(kv, "extent"), "extent");
    s.nbins = opt_int_from(kv, "nbins");
    s.seed = std::stoull(need(kv, "seed"));
    return s;
}

EtSimSpec et_spec_from(const KeyValues& kv)
{
    EtSimSpec s;
    s.n = to_int(need(kv, "et_n"), "et_n");
    s.n_angles = to_int(need(kv, "angles"), "angles");
    s.total_counts = to_real(need(kv, "counts"), "counts");
    s.psf_fwhm_bins = to_real(need(kv, "psf_fwhm"), "psf_fwhm");
    s.realizations = to_int(need(kv, "realizations"), "realizations");
    s.extent = to_real(need(kv, "extent"), "extent");
    s.nbins = opt_int_from(kv, "nbins");
    s.seed = std::stoull(need(kv, "seed"));
    return s;
}

Dataset load_dataset(const std::filesystem::path& dir)
{
    Dataset ds;
    ds.provenance = parse_key_values(read_file(dir / "provenance.txt"));
    const std::string& exp = need(ds.provenance, "experiment");
    ds.ground_truth = read_image(dir / "ground_truth.img");
    ds.noiseless = read_sinogram(dir / "noiseless.sin");
    for (int r = 0;; ++r) {
        const auto path = dir / ("noisy_" + std::to_string(r) + ".sin");
        if (!std::filesystem::exists(path))
            break;
        ds.noisy.push_back(read_sinogram(path));
    }
    if (ds.noisy.empty())
        throw IoError("dataset " + dir.string() + " has no noisy sinograms");
    if (exp == "ct") {
        const CtSimSpec spec = ct_spec_from(ds.provenance);
        ds.experiment = Experiment::ct;
        ds.recon_projector = ct_recon_projector(spec);
        ds.generation_projector = ct_generation_projector(spec);
    } else if (exp == "et") {
        const EtSimSpec spec = et_spec_from(ds.provenance);
        ds.experiment = Experiment::et;
        for (const char* label : {"GR", "BR"})
            ds.masks.push_back(read_mask(dir / (std::string("mask_") + label + ".msk")));
        const double total = forward_project_streaming(et_projector(spec, 1.0), ds.ground_truth).values.sum();
        ds.recon_projector = et_projector(spec, spec.total_counts / total);
        ds.generation_projector = ds.recon_projector;
    } else {
        throw IoError("unknown experiment '" + exp + "' in provenance");
    }
    if (!(ds.ground_truth.grid == ds.recon_projector.grid))
        throw IoError("ground truth grid does not match the provenance");
    for (const auto& s : ds.noisy)
        if (s.nbins != ds.recon_projector.nbins || s.n_angles() != static_cast<int>(ds.recon_projector.angles.size()))
            throw IoError("sinogram geometry does not match the provenance");
    return ds;
}

} // namespace tomo

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tomo/grid.hpp"
#include "tomo/io.hpp"
#include "tomo/phantom.hpp"
#include "tomo/projector.hpp"

namespace tomo {

/// Independent Poisson draws. Draw i depends only on (seed, i), so the result
/// does not depend on evaluation order. Throws ConfigError on negative or
/// non-finite means.
Eigen::VectorXd poisson_sample(const Eigen::VectorXd& lambda, std::uint64_t seed);

/// Deterministic 64-bit mixing of (seed, stream) into a new seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

struct CtSimSpec {
    PhantomDescriptor phantom = PhantomDescriptor::default_ct();
    int fine_n = 500;
    int recon_n = 250;
    int n_angles = 90;
    double i0 = 3e5;
    double extent = 1.0;
    std::optional<int> nbins;
    std::uint64_t seed = 0;

    void validate() const;
};

struct EtSimSpec {
    int n = 400;
    int n_angles = 300;
    double total_counts = 1e7;
    double psf_fwhm_bins = 3.0;
    int realizations = 20;
    double extent = 1.0;
    std::optional<int> nbins;
    std::uint64_t seed = 0;

    void validate() const;
};

enum class Experiment { ct, et };

struct Dataset {
    Experiment experiment = Experiment::ct;
    std::vector<Sinogram> noisy;
    /// CT: line integrals from the fine grid; ET: expected counts.
    Sinogram noiseless;
    ProjectorSpec generation_projector;
    ProjectorSpec recon_projector;
    Image ground_truth;
    std::vector<RegionMask> masks;
    KeyValues provenance;
    std::vector<std::string> warnings;
};

/// Fine-grid strip projection, Beer-Lambert counts c ~ Poisson(I₀ e^{-p}),
/// b = -ln(max(c, 1) / I₀); reconstruction uses the linear kernel on the
/// coarse grid.
Dataset make_ct_dataset(const CtSimSpec& spec);

/// ET phantom, PSF-bearing projector scaled so the expected counts sum to
/// total_counts, and `realizations` Poisson draws.
Dataset make_et_dataset(const EtSimSpec& spec);

KeyValues ct_provenance(const CtSimSpec& spec);
KeyValues et_provenance(const EtSimSpec& spec);

/// Directory layout: ground_truth.img, noiseless.sin, noisy_<r>.sin,
/// mask_<label>.msk, provenance.txt.
void save_dataset(const Dataset& ds, const std::filesystem::path& dir);

/// Reads a dataset directory and rebuilds the projector specs from its
/// provenance.
Dataset load_dataset(const std::filesystem::path& dir);

/// Geometry of the reconstruction projector implied by a simulation spec.
ProjectorSpec ct_recon_projector(const CtSimSpec& spec);
ProjectorSpec ct_generation_projector(const CtSimSpec& spec);
ProjectorSpec et_projector(const EtSimSpec& spec, double scale);

CtSimSpec ct_spec_from(const KeyValues& kv);
EtSimSpec et_spec_from(const KeyValues& kv);

} // namespace tomo

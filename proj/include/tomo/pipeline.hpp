#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tomo/metrics.hpp"
#include "tomo/projector.hpp"
#include "tomo/simulate.hpp"
#include "tomo/solvers.hpp"

namespace tomo {

enum class Method { cgls, mlem, tikhonov, tv, tvl2, el };
enum class Fidelity { ls, poisson };

std::string to_string(Method m);
std::string to_string(Fidelity f);
Method parse_method(const std::string& s);
Fidelity parse_fidelity(const std::string& s);

/// A solver × penalty pairing. Least squares pairs with cgls or fixed-point
/// penalties; Poisson pairs with mlem or splitting penalties.
struct MethodSpec {
    Method method = Method::cgls;
    Fidelity fidelity = Fidelity::ls;
    double alpha = 0.0;
    double mu = 0.0;
    double beta = 0.03;
    double eps_rel = 1e-5;
    double gamma_rel = 1.0;
    SolverConfig solver;

    void validate() const;
    bool regularized() const { return method != Method::cgls && method != Method::mlem; }
    std::optional<PenaltyKind> penalty() const;
    /// "CGLS-EL", "MLEM-TV-L2", ...
    std::string label() const;
};

/// Runs one method on realization r of the dataset (ground truth and masks
/// attached for history RMSE).
ReconResult run_method(const MethodSpec& spec, const Dataset& ds, const Projector& proj, int realization);

/// Same, on explicit data.
ReconResult run_method(const MethodSpec& spec, const Projector& proj, const Eigen::VectorXd& b, const ReconOptions& opts);

enum class SweepParam { alpha, mu, beta };
std::string to_string(SweepParam p);
SweepParam parse_sweep_param(const std::string& s);

struct SweepSpec {
    MethodSpec base;
    SweepParam param = SweepParam::alpha;
    std::vector<double> values;
    std::vector<int> realizations{0};
    /// Rank grid points by the mean of the region RMSEs instead of whole-image RMSE.
    bool select_by_regions = false;

    void validate() const;
};

struct SweepPoint {
    double value = 0.0;
    bool ok = false;
    std::string error;
    std::vector<double> rmse_per_realization;
    double mean_rmse = 0.0;
    std::vector<double> region_means;
    double score = 0.0;
};

struct SweepResult {
    SweepParam param = SweepParam::alpha;
    std::vector<SweepPoint> points;
    /// Index of the smallest score among successful points; ties go to the
    /// smaller parameter value.
    std::size_t argmin = 0;

    double best_value() const { return points.at(argmin).value; }
};

SweepResult run_sweep(const SweepSpec& spec, const Dataset& ds, const Projector& proj);

/// Runs the sweep, then keeps adding log-spaced points beyond the edge while
/// the argmin sits on it (at most max_extensions times). Points stay sorted.
SweepResult run_extending_sweep(SweepSpec spec, const Dataset& ds, const Projector& proj, int max_extensions,
                                bool extend_low = true);

/// `points` values, log-spaced over `decades` decades centered on `center`.
std::vector<double> log_grid(double center, double decades, int points);

/// ||Aᵀb||∞ / ||R(u₀)u₀||∞ with u₀ from ten CGLS iterations (LS) or ten
/// MLEM iterations (Poisson). For SweepParam::mu only the curvature part of
/// the TV-ℓ2 matrix enters the denominator.
double parameter_scale(const MethodSpec& spec, SweepParam param, const Dataset& ds, const Projector& proj, int realization = 0);

struct ProtocolConfig {
    SolverConfig solver;
    double beta = 0.03;
    int sweep_points = 15;
    double sweep_decades = 4.0;
    std::vector<int> realizations{0};
    /// A minimum on the edge of the grid grows the grid by half its point
    /// count past that edge, at most this many times.
    int max_extensions = 4;
    /// Report the unregularized baseline at its RMSE-optimal iteration (its
    /// iteration count is then the tuned parameter) instead of the last one.
    bool baseline_at_best_iteration = true;
    /// Skip the unregularized baseline and TV-ℓ2; only TV and EL are tuned.
    bool tv_and_el_only = false;
    /// Fixed parameters skip the corresponding sweep.
    std::optional<double> alpha_tv;
    std::optional<double> mu_tvl2;
    std::optional<double> alpha_el;
};

struct MethodOutcome {
    MethodSpec spec;
    std::optional<SweepResult> sweep;
    std::vector<ReconResult> runs;
    std::vector<double> rmse_per_realization;
    double mean_rmse = 0.0;
    std::vector<double> region_means;
    /// Name and value of the parameter that was tuned (empty for baselines).
    std::string tuned_param;
    std::optional<double> tuned_value;
    /// Full-length history of the first realization when the reported runs
    /// were cut short (baseline stopped at its best iteration).
    std::optional<std::vector<IterationRecord>> convergence;
};

struct ProtocolResult {
    Experiment experiment = Experiment::ct;
    std::vector<std::string> region_labels;
    std::vector<MethodOutcome> methods;

    const MethodOutcome& find(Method m) const;
};

/// Baseline, TV (α sweep), TV-ℓ2 (μ sweep at the TV α, with μ = 0 as the TV
/// limit), EL (α sweep at fixed β), each then run on every requested realization.
ProtocolResult run_protocol(const Dataset& ds, const ProtocolConfig& cfg);

/// Materializes table.csv, convergence_<id>.csv, sweep_<id>.csv,
/// region_rmse.csv (when regions exist), recon_<id>.img and recon_<id>.pgm.
void emit_report(const ProtocolResult& result, const std::filesystem::path& out_dir);

std::string convergence_csv(const std::vector<IterationRecord>& history);
std::string sweep_csv(const SweepResult& sweep);

/// Minimal CSV reader for our own outputs (no quoting).
std::vector<std::vector<std::string>> parse_csv(const std::string& text);

} // namespace tomo

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "tomo/grid.hpp"
#include "tomo/linear_operator.hpp"
#include "tomo/regularizers.hpp"

namespace tomo {

struct SolverConfig {
    int outer_iters = 80;
    int inner_iters = 5;
    /// Early-stop threshold on squared step norms (inner CG and outer loop).
    double rho = 1e-4;
    double alpha = 0.0;
    /// Denoising step for the Poisson splitting; 1 / (1 + α λmax(R)) when unset.
    std::optional<double> tau;
    bool precondition = true;
    /// Preconditioner scale; largest singular value of A when unset.
    std::optional<double> sigma;
    std::uint64_t seed = 0;

    void validate() const;
};

/// One row per outer iteration. fidelity is ½||Au - b||² for least squares and
/// Σ(Au - b ln Au) for Poisson data; objective = fidelity + α·penalty.
struct IterationRecord {
    int iter = 0;
    double objective = 0.0;
    double fidelity = 0.0;
    double penalty = 0.0;
    double step_norm2 = 0.0;
    std::optional<double> rmse;
    std::vector<double> region_rmse;
    int inner_steps = 0;
};

struct ReconResult {
    Image image;
    std::vector<IterationRecord> history;
    bool terminated_early = false;
    /// CG met a direction of non-positive curvature.
    bool breakdown = false;
};

struct ReconOptions {
    std::optional<Image> ground_truth;
    std::vector<RegionMask> masks;
    /// Starting iterate for the least-squares solvers (zero when unset).
    std::optional<Image> initial;
    /// Called with the iterate after each outer iteration.
    std::function<void(int, const Eigen::VectorXd&)> on_iterate;
    /// Called with the accumulated step after each inner CG update.
    std::function<void(int, int, const Eigen::VectorXd&)> on_inner_step;
};

/// Plain CGLS on min ||Au - b||² from zero.
ReconResult cgls(const LinearOperator& a, const GridSpec& grid, const Eigen::VectorXd& b, int iters,
                 const ReconOptions& opts = {});

/// Lagged-diffusivity fixed point: R is rebuilt from the iterate at each outer
/// step, the step solves (AᵀA + αR) s = -g by (preconditioned) CG for at most
/// inner_iters steps.
ReconResult fixed_point_reconstruct(const LinearOperator& a, const GridSpec& grid, const Eigen::VectorXd& b,
                                    const PenaltyKind& kind, const SolverConfig& cfg, const ReconOptions& opts = {});

/// MLEM step followed by inner_iters explicit denoising steps
/// f ← f - τ((f - f₀) + α R f) with R frozen at the MLEM output.
ReconResult mlem_split_reconstruct(const LinearOperator& a, const GridSpec& grid, const Eigen::VectorXd& b,
                                   const PenaltyKind& kind, const SolverConfig& cfg, const ReconOptions& opts = {});

/// u ⊙ Aᵀ(b / max(Au, floor)) / Aᵀ1; pixels with zero sensitivity map to 0.
Eigen::VectorXd mlem_update(const LinearOperator& a, const Eigen::VectorXd& b, const Eigen::VectorXd& u,
                            const Eigen::VectorXd& sensitivity, double floor);
/// Same, reusing a precomputed forward projection au = A u.
Eigen::VectorXd mlem_update(const LinearOperator& a, const Eigen::VectorXd& b, const Eigen::VectorXd& u,
                            const Eigen::VectorXd& au, const Eigen::VectorXd& sensitivity, double floor);

/// Explicit gradient steps on ½||f - f₀||² + (w/2)⟨Rf, f⟩ starting at f₀.
Eigen::VectorXd denoise_steps(const Eigen::VectorXd& f0, const RegularizerMatrix& r, double weight, double tau, int steps);

/// Largest eigenvalue of a symmetric PSD matrix by power iteration.
double largest_eigenvalue(const CsrMatrix& m, int steps, std::uint64_t seed);
/// Largest singular value of A by power iteration on AᵀA.
double largest_singular_value(const LinearOperator& a, int steps, std::uint64_t seed);

struct ErrorBoundReport {
    int trials = 0;
    int checks = 0;
    int violations = 0;
    /// max over checks of ||R h_α|| - α ||R M⁻¹ N û||  (≤ 0 when the bound holds)
    double max_slack = 0.0;
    /// max over checks with nonzero bound of the ratio lhs / rhs
    double max_ratio = 0.0;
};

/// Random dense trials of the regularization error bound
/// ||R h_α|| ≤ α ||R M⁻¹ N û||, M = AᵀA, N = RᵀR, h_α = û_α - û.
ErrorBoundReport verify_error_bound(int trials, int n, std::uint64_t seed, const std::vector<double>& alphas);

} // namespace tomo

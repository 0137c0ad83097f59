#pragma once

#include <optional>
#include <string>
#include <variant>

#include "tomo/grid.hpp"
#include "tomo/linear_operator.hpp"

namespace tomo {

/// R(u) = ||u||²
struct Tikhonov {};

/// Smoothed total variation Σ sqrt(|∇u|² + ε²), ε = eps_rel · max(u).
struct TotalVariation {
    double eps_rel = 1e-5;
};

/// TV plus the curvature term (μ/α) Σ (Δu)² / |∇u|³_γ, γ = gamma_rel · max(u)².
/// Its gradient matrix carries α and μ internally, so solvers apply it with
/// unit weight.
struct TvL2 {
    double eps_rel = 1e-5;
    double gamma_rel = 1.0;
    double mu = 0.0;
    std::optional<double> alpha;
};

/// Edge-preserving Laplacian ||w_x u_xx||² + ||w_y u_yy||² with weights
/// w = 1 / (1 + β (u' / a)²), a_x = 2 max(u) / dx, a_y = 2 max(u) / dy, where
/// u' is the larger-magnitude one-sided difference at the pixel, so that both
/// second-difference stencils touching a jump see it.
struct EdgeLaplacian {
    double beta = 0.03;
};

using PenaltyKind = std::variant<Tikhonov, TotalVariation, TvL2, EdgeLaplacian>;

std::string penalty_name(const PenaltyKind& kind);
void validate_penalty(const PenaltyKind& kind);

/// Weight on R in the solvers: α for every kind except TV-ℓ2 (which embeds it).
double penalty_multiplier(const PenaltyKind& kind, double alpha);

/// Below this max(u) the iterate is treated as flat: EL weights become 1, the
/// TV diagonals become constants (Φ = 1, Ψ = α) and the TV-ℓ2 curvature term
/// is dropped.
inline constexpr double kFlatThreshold = 1e-30;

// Difference operators, Neumann closure (replicated boundary):
//  first:  (D u)_i = (u_{i+1} - u_i) / h, zero in the last column/row;
//  second: (L u)_i = (u_{i-1} - 2 u_i + u_{i+1}) / h².
CsrMatrix difference_x(const GridSpec& g);
CsrMatrix difference_y(const GridSpec& g);
CsrMatrix second_difference_x(const GridSpec& g);
CsrMatrix second_difference_y(const GridSpec& g);

struct ElWeights {
    Eigen::VectorXd wx;
    Eigen::VectorXd wy;
    double ax = 0.0;
    double ay = 0.0;
};

ElWeights compute_el_weights(const Image& u, double beta);

/// Symmetric positive semidefinite sparse matrix R(u) with ∇R ≈ R(u) u,
/// diagonals frozen at u.
struct RegularizerMatrix {
    CsrMatrix matrix;
    PenaltyKind kind;

    Eigen::VectorXd apply(const Eigen::VectorXd& v) const { return csr_multiply(matrix, v); }
};

RegularizerMatrix build_gradient_matrix(const PenaltyKind& kind, const Image& u);

/// Value of the penalty functional at u (weights and diagonals from u itself).
double penalty_value(const PenaltyKind& kind, const Image& u);

} // namespace tomo

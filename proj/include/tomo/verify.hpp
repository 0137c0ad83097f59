#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tomo/grid.hpp"
#include "tomo/regularizers.hpp"

namespace tomo {

struct VerifyOptions {
    int adjoint_pairs = 100;
    int adjoint_grid = 64;
    int adjoint_angles = 30;
    int gradient_grid = 32;
    int gradient_probes = 20;
    int mlem_grid = 32;
    int mlem_iters = 50;
    int trials = 100;
    int n = 16;
    std::uint64_t seed = 0;
    /// Negative control: the adjoint is applied to a transposed image.
    bool inject_transpose_bug = false;
};

struct SuiteResult {
    std::string name;
    bool passed = false;
    /// Worst observed value of the suite's error measure.
    double worst = 0.0;
    double tolerance = 0.0;
    std::string detail;
};

SuiteResult verify_adjoint(const VerifyOptions& opts);
SuiteResult verify_gradients(const VerifyOptions& opts);
SuiteResult verify_mlem(const VerifyOptions& opts);
SuiteResult verify_error_bound_suite(const VerifyOptions& opts);
std::vector<SuiteResult> run_verify(const VerifyOptions& opts);

/// ½ vᵀ R(u) v evaluated from the difference stencils and the weights frozen
/// at u, without forming R.
double frozen_functional(const PenaltyKind& kind, const Image& u, const Eigen::VectorXd& v);

} // namespace tomo

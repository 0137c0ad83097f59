#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

namespace tomo {

/// Real linear map with an adjoint, acting on flat vectors.
class LinearOperator {
public:
    virtual ~LinearOperator() = default;
    virtual Eigen::Index rows() const = 0;
    virtual Eigen::Index cols() const = 0;
    virtual Eigen::VectorXd apply(const Eigen::VectorXd& x) const = 0;
    virtual Eigen::VectorXd apply_adjoint(const Eigen::VectorXd& y) const = 0;
};

using CsrMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// y = M x, one output element per row in fixed order (deterministic under
/// any thread count).
Eigen::VectorXd csr_multiply(const CsrMatrix& m, const Eigen::VectorXd& x);

/// Wraps an explicit matrix; mostly for tests and small dense oracles.
template <class Matrix>
class MatrixOperator final : public LinearOperator {
public:
    explicit MatrixOperator(Matrix m) : m_(std::move(m)) {}
    Eigen::Index rows() const override { return m_.rows(); }
    Eigen::Index cols() const override { return m_.cols(); }
    Eigen::VectorXd apply(const Eigen::VectorXd& x) const override { return m_ * x; }
    Eigen::VectorXd apply_adjoint(const Eigen::VectorXd& y) const override { return m_.transpose() * y; }
    const Matrix& matrix() const { return m_; }

private:
    Matrix m_;
};

} // namespace tomo

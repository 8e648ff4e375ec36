#ifndef INDEXLAB_BLOCK_TRIDIAGONAL_HPP
#define INDEXLAB_BLOCK_TRIDIAGONAL_HPP

// Operators on the discretized line tensored with the inner space. A vector
// on the tensor grid is stored as a (block_dim x blocks) matrix whose column
// t is the inner vector at grid point t, which matches the line-outer index
// t * block_dim + i.

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "operator.hpp"

namespace indexlab {

/// diag(weights) (x) inner.
struct KronDiagonal {
  RealVector weights;
  Matrix inner;

  Index blocks() const noexcept { return weights.size(); }
  Index block_dim() const noexcept { return inner.rows(); }
  Index dim() const noexcept { return blocks() * block_dim(); }

  Matrix apply(const Matrix& x) const { return inner * x * weights.cast<Complex>().asDiagonal(); }
  Matrix block(Index t) const { return weights(t) * inner; }
  Matrix to_dense() const {
    return kron(Matrix(weights.cast<Complex>().asDiagonal()), inner);
  }
};

/// Hermitian block tridiagonal operator whose off-diagonal blocks are
/// coupling * identity, as produced by a three-point stencil on the line.
class BlockTridiagonal {
public:
  BlockTridiagonal(std::vector<Matrix> diagonal_blocks, double coupling)
      : blocks_(std::move(diagonal_blocks)), coupling_(coupling) {
    if (blocks_.empty()) throw DimensionError("block tridiagonal operator needs at least one block");
    const Index d = blocks_.front().rows();
    for (auto& b : blocks_) {
      if (b.rows() != d || b.cols() != d)
        throw DimensionError("block tridiagonal operator: inconsistent block sizes");
      b = 0.5 * (b + b.adjoint()).eval();
    }
  }

  Index blocks() const noexcept { return static_cast<Index>(blocks_.size()); }
  Index block_dim() const noexcept { return blocks_.front().rows(); }
  Index dim() const noexcept { return blocks() * block_dim(); }
  KroneckerShape shape() const noexcept { return {blocks(), block_dim()}; }
  const Matrix& block(Index t) const { return blocks_[static_cast<std::size_t>(t)]; }
  double coupling() const noexcept { return coupling_; }

  BlockTridiagonal shifted(double s) const {
    auto b = blocks_;
    for (auto& m : b) m += s * Matrix::Identity(m.rows(), m.cols());
    return {std::move(b), coupling_};
  }

  BlockTridiagonal plus(const KronDiagonal& k) const {
    check_shape(k);
    auto b = blocks_;
    for (Index t = 0; t < blocks(); ++t) b[static_cast<std::size_t>(t)] += k.block(t);
    return {std::move(b), coupling_};
  }

  Matrix apply(const Matrix& x) const {
    if (x.rows() != block_dim() || x.cols() != blocks())
      throw DimensionError("block tridiagonal apply: operand has wrong shape");
    Matrix y(x.rows(), x.cols());
    const Index n = blocks();
    for (Index t = 0; t < n; ++t) {
      y.col(t) = block(t) * x.col(t);
      if (t > 0) y.col(t) += coupling_ * x.col(t - 1);
      if (t + 1 < n) y.col(t) += coupling_ * x.col(t + 1);
    }
    return y;
  }

  Matrix to_dense() const {
    const Index d = block_dim();
    const Index n = blocks();
    Matrix out = Matrix::Zero(n * d, n * d);
    for (Index t = 0; t < n; ++t) {
      out.block(t * d, t * d, d, d) = block(t);
      if (t + 1 < n) {
        out.block(t * d, (t + 1) * d, d, d) = coupling_ * Matrix::Identity(d, d);
        out.block((t + 1) * d, t * d, d, d) = coupling_ * Matrix::Identity(d, d);
      }
    }
    return out;
  }

  HermitianOperator to_operator(Index dense_cap = 6000) const {
    if (dim() > dense_cap)
      throw ResourceError("dense assembly of dimension " + std::to_string(dim()) +
                          " exceeds cap " + std::to_string(dense_cap));
    return HermitianOperator(to_dense());
  }

  /// Ascending eigenvalues. Scalar blocks use the tridiagonal QR path
  /// (O(n^2)); larger blocks fall back to a dense solve below dense_cap.
  RealVector eigenvalues(Index dense_cap = 6000) const {
    if (block_dim() == 1) {
      const Index n = blocks();
      RealVector diag(n);
      for (Index t = 0; t < n; ++t) diag(t) = block(t)(0, 0).real();
      RealVector sub = RealVector::Constant(std::max<Index>(n - 1, 0), coupling_);
      Eigen::SelfAdjointEigenSolver<RealMatrix> solver;
      solver.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
      if (solver.info() != Eigen::Success)
        throw EigensolverError(static_cast<std::size_t>(n), diag.cwiseAbs().maxCoeff());
      return solver.eigenvalues();
    }
    return to_operator(dense_cap).eigenvalues();
  }

private:
  void check_shape(const KronDiagonal& k) const {
    if (k.blocks() != blocks() || k.block_dim() != block_dim())
      throw DimensionError("block operand shape mismatch");
  }

  std::vector<Matrix> blocks_;
  double coupling_;
};

/// Block LU factorization of (H + shift) for a BlockTridiagonal H. Reusable
/// across right-hand sides.
class BlockTridiagonalSolver {
public:
  BlockTridiagonalSolver(const BlockTridiagonal& h, double shift)
      : coupling_(h.coupling()), block_dim_(h.block_dim()), blocks_(h.blocks()) {
    const Index d = block_dim_;
    pivots_.reserve(static_cast<std::size_t>(blocks_));
    Matrix prev_inverse;
    for (Index t = 0; t < blocks_; ++t) {
      Matrix u = h.block(t) + shift * Matrix::Identity(d, d);
      if (t > 0) u -= coupling_ * coupling_ * prev_inverse;
      Eigen::PartialPivLU<Matrix> lu(u);
      if (!(std::abs(lu.determinant()) > 0.0))
        throw GuardError("block tridiagonal solve: singular pivot block at " + std::to_string(t));
      prev_inverse = lu.inverse();
      pivots_.push_back(std::move(lu));
    }
  }

  Index dim() const noexcept { return blocks_ * block_dim_; }

  /// Solves (H + shift) X = B for B stored block-column-wise (block_dim x blocks).
  Matrix solve(const Matrix& b) const {
    if (b.rows() != block_dim_ || b.cols() != blocks_)
      throw DimensionError("block tridiagonal solve: right-hand side has wrong shape");
    Matrix y(b.rows(), b.cols());
    y.col(0) = b.col(0);
    for (Index t = 1; t < blocks_; ++t)
      y.col(t) = b.col(t) - coupling_ * pivot(t - 1).solve(y.col(t - 1));
    Matrix x(b.rows(), b.cols());
    x.col(blocks_ - 1) = pivot(blocks_ - 1).solve(y.col(blocks_ - 1));
    for (Index t = blocks_ - 2; t >= 0; --t)
      x.col(t) = pivot(t).solve(y.col(t) - coupling_ * x.col(t + 1));
    return x;
  }

private:
  const Eigen::PartialPivLU<Matrix>& pivot(Index t) const { return pivots_[static_cast<std::size_t>(t)]; }

  double coupling_;
  Index block_dim_;
  Index blocks_;
  std::vector<Eigen::PartialPivLU<Matrix>> pivots_;
};

/// Scalar-block specialization of the solver for the common d = 1 case.
class TridiagonalSolver {
public:
  TridiagonalSolver(const BlockTridiagonal& h, double shift) : coupling_(h.coupling()) {
    if (h.block_dim() != 1) throw DimensionError("TridiagonalSolver needs scalar blocks");
    const Index n = h.blocks();
    pivots_.resize(static_cast<std::size_t>(n));
    Complex prev = 0.0;
    for (Index t = 0; t < n; ++t) {
      Complex u = h.block(t)(0, 0) + shift;
      if (t > 0) u -= coupling_ * coupling_ / prev;
      if (u == Complex(0.0)) throw GuardError("tridiagonal solve: zero pivot at " + std::to_string(t));
      pivots_[static_cast<std::size_t>(t)] = u;
      prev = u;
    }
  }

  Eigen::VectorXcd solve(const Eigen::VectorXcd& b) const {
    const Index n = static_cast<Index>(pivots_.size());
    if (b.size() != n) throw DimensionError("tridiagonal solve: right-hand side has wrong size");
    Eigen::VectorXcd y(n);
    y(0) = b(0);
    for (Index t = 1; t < n; ++t) y(t) = b(t) - coupling_ * y(t - 1) / pivots_[static_cast<std::size_t>(t - 1)];
    Eigen::VectorXcd x(n);
    x(n - 1) = y(n - 1) / pivots_.back();
    for (Index t = n - 2; t >= 0; --t)
      x(t) = (y(t) - coupling_ * x(t + 1)) / pivots_[static_cast<std::size_t>(t)];
    return x;
  }

private:
  double coupling_;
  std::vector<Complex> pivots_;
};

/// Dispatches to the scalar or block solver.
class LineSolver {
public:
  LineSolver(const BlockTridiagonal& h, double shift) {
    if (h.block_dim() == 1) scalar_.emplace(h, shift);
    else block_.emplace(h, shift);
  }

  Matrix solve(const Matrix& b) const {
    if (scalar_) {
      Eigen::VectorXcd v = b.row(0).transpose();
      return scalar_->solve(v).transpose();
    }
    return block_->solve(b);
  }

private:
  std::optional<TridiagonalSolver> scalar_;
  std::optional<BlockTridiagonalSolver> block_;
};

} // namespace indexlab

#endif // INDEXLAB_BLOCK_TRIDIAGONAL_HPP

#pragma once

#include <Eigen/Dense>

#include <utility>

namespace dmq {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Dense symmetric matrix. Construction validates finiteness and symmetry
/// (|A_ij - A_ji| <= 1e-12 * max(1, |A_ij|)).
class SymMatrix {
 public:
  SymMatrix() = default;
  explicit SymMatrix(Matrix m);

  /// Averages `m` with its transpose before validation. For products that are
  /// symmetric in exact arithmetic but not after rounding.
  static SymMatrix symmetrized(const Matrix& m);
  static SymMatrix identity(Eigen::Index dim);

  Eigen::Index dim() const { return m_.rows(); }
  const Matrix& matrix() const { return m_; }
  double operator()(Eigen::Index i, Eigen::Index j) const { return m_(i, j); }

 private:
  Matrix m_;
};

/// Full spectrum sorted descending; eigenvectors are the matching orthonormal columns.
struct EigenDecomposition {
  Vector values;
  Matrix vectors;
};

EigenDecomposition sym_eig(const SymMatrix& a);

struct TopEigenpair {
  double value = 0.0;
  Vector vector;
};

/// Largest eigenvalue and a unit eigenvector. The sign of the vector is fixed so
/// that its largest-magnitude component is positive.
TopEigenpair top_eig(const SymMatrix& a);

/// Default eigenvalue floor for inv_sqrt_psd: 1e-12 * max(1, lambda_max).
double default_eigen_floor(const EigenDecomposition& eig);

/// Sum_j max(lambda_j, floor)^{-1/2} v_j v_j^T. Throws NotPsdError when an
/// eigenvalue is below -1e-10.
SymMatrix inv_sqrt_psd(const SymMatrix& a, double floor);
SymMatrix inv_sqrt_psd(const SymMatrix& a);

/// Closed-form ridge estimator (S^T S / N + lambda I)^{-1} S^T y / N, where the
/// rows of `features` are the samples. Solved by Cholesky on the regularized Gram
/// matrix.
Vector ridge_solve(const Matrix& features, const Vector& labels, double lambda_ridge);

/// Outer-product accumulator: (1/n) sum_i x_i x_i^T over the rows of `samples`.
/// Returns a dim x dim zero matrix for an empty sample set.
Matrix mean_outer_product(const Matrix& samples, Eigen::Index dim);

}  // namespace dmq

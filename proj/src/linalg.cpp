#include "dmq/linalg.hpp"

#include "dmq/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace dmq {

namespace {

void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw InputError(std::string(what) + ": non-finite entry");
}

}  // namespace

SymMatrix::SymMatrix(Matrix m) : m_(std::move(m)) {
  if (m_.rows() != m_.cols()) throw PreconditionError("SymMatrix: matrix is not square");
  require_finite(m_, "SymMatrix");
  for (Eigen::Index i = 0; i < m_.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < m_.cols(); ++j) {
      const double tol = 1e-12 * std::max(1.0, std::abs(m_(i, j)));
      if (std::abs(m_(i, j) - m_(j, i)) > tol) {
        throw PreconditionError("SymMatrix: matrix is not symmetric at (" + std::to_string(i) +
                                "," + std::to_string(j) + ")");
      }
    }
  }
}

SymMatrix SymMatrix::symmetrized(const Matrix& m) {
  if (m.rows() != m.cols()) throw PreconditionError("SymMatrix: matrix is not square");
  require_finite(m, "SymMatrix");
  Matrix s = 0.5 * (m + m.transpose());
  return SymMatrix(std::move(s));
}

SymMatrix SymMatrix::identity(Eigen::Index dim) { return SymMatrix(Matrix::Identity(dim, dim)); }

EigenDecomposition sym_eig(const SymMatrix& a) {
  EigenDecomposition out;
  const Eigen::Index n = a.dim();
  if (n == 0) return out;
  Eigen::SelfAdjointEigenSolver<Matrix> solver(a.matrix(), Eigen::ComputeEigenvectors);
  if (solver.info() != Eigen::Success) throw InputError("sym_eig: eigensolver did not converge");
  // Eigen returns ascending order.
  out.values = solver.eigenvalues().reverse();
  out.vectors = solver.eigenvectors().rowwise().reverse();
  return out;
}

TopEigenpair top_eig(const SymMatrix& a) {
  if (a.dim() == 0) throw InputError("top_eig: empty matrix");
  const EigenDecomposition eig = sym_eig(a);
  TopEigenpair top{eig.values(0), eig.vectors.col(0)};
  Eigen::Index pivot = 0;
  top.vector.cwiseAbs().maxCoeff(&pivot);
  if (top.vector(pivot) < 0.0) top.vector = -top.vector;
  return top;
}

double default_eigen_floor(const EigenDecomposition& eig) {
  const double lmax = eig.values.size() > 0 ? eig.values(0) : 0.0;
  return 1e-12 * std::max(1.0, lmax);
}

SymMatrix inv_sqrt_psd(const SymMatrix& a, double floor) {
  if (!(floor > 0.0) || !std::isfinite(floor)) throw ParameterError("inv_sqrt_psd: floor must be positive");
  const EigenDecomposition eig = sym_eig(a);
  Vector scale(eig.values.size());
  for (Eigen::Index j = 0; j < eig.values.size(); ++j) {
    if (eig.values(j) < -1e-10) {
      throw NotPsdError("inv_sqrt_psd: eigenvalue " + std::to_string(eig.values(j)) + " below -1e-10");
    }
    scale(j) = 1.0 / std::sqrt(std::max(eig.values(j), floor));
  }
  Matrix out = eig.vectors * scale.asDiagonal() * eig.vectors.transpose();
  return SymMatrix::symmetrized(out);
}

SymMatrix inv_sqrt_psd(const SymMatrix& a) {
  const EigenDecomposition eig = sym_eig(a);
  return inv_sqrt_psd(a, default_eigen_floor(eig));
}

Vector ridge_solve(const Matrix& features, const Vector& labels, double lambda_ridge) {
  if (features.rows() == 0) throw InputError("ridge_solve: empty sample list");
  if (features.rows() != labels.size()) {
    throw InputError("ridge_solve: " + std::to_string(features.rows()) + " feature rows but " +
                     std::to_string(labels.size()) + " labels");
  }
  if (!(lambda_ridge > 0.0) || !std::isfinite(lambda_ridge)) {
    throw InputError("ridge_solve: lambda_ridge must be positive and finite");
  }
  require_finite(features, "ridge_solve features");
  if (!labels.allFinite()) throw InputError("ridge_solve labels: non-finite entry");

  const double n = static_cast<double>(features.rows());
  const Eigen::Index d = features.cols();
  Matrix gram = Matrix::Zero(d, d);
  gram.selfadjointView<Eigen::Lower>().rankUpdate(features.transpose(), 1.0 / n);
  gram = gram.selfadjointView<Eigen::Lower>();
  gram.diagonal().array() += lambda_ridge;
  const Vector rhs = features.transpose() * labels / n;

  Eigen::LLT<Matrix> llt(gram);
  if (llt.info() != Eigen::Success) throw InputError("ridge_solve: Gram matrix factorization failed");
  return llt.solve(rhs);
}

Matrix mean_outer_product(const Matrix& samples, Eigen::Index dim) {
  Matrix out = Matrix::Zero(dim, dim);
  if (samples.rows() == 0) return out;
  if (samples.cols() != dim) throw InputError("mean_outer_product: dimension mismatch");
  out.noalias() = samples.transpose() * samples / static_cast<double>(samples.rows());
  return 0.5 * (out + out.transpose());
}

}  // namespace dmq

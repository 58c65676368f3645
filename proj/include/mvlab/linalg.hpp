#pragma once

#include "mvlab/core.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

namespace mvlab {

template <typename Scalar>
using DenseMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Principal square root of a symmetric PSD matrix. Throws if an eigenvalue
/// is below -tol * max|eigenvalue|.
template <typename Derived>
DenseMatrix<typename Derived::Scalar> psd_sqrt(const Eigen::MatrixBase<Derived>& a,
                                               typename Derived::Scalar tol = 1e-12) {
  using Scalar = typename Derived::Scalar;
  using std::abs;
  using std::sqrt;
  Eigen::SelfAdjointEigenSolver<DenseMatrix<Scalar>> es(a.eval());
  const auto& ev = es.eigenvalues();
  const Scalar scale = std::max(Scalar(1), ev.cwiseAbs().maxCoeff());
  if (ev.minCoeff() < -tol * scale) throw NumericalError("psd_sqrt: matrix is not PSD");
  return es.eigenvectors() * ev.cwiseMax(Scalar(0)).cwiseSqrt().asDiagonal() *
         es.eigenvectors().transpose();
}

/// I - 2 e e^T with e = (x - y) / |x - y|.
template <typename DerivedX, typename DerivedY>
DenseMatrix<typename DerivedX::Scalar> mirror_matrix(const Eigen::MatrixBase<DerivedX>& x,
                                                     const Eigen::MatrixBase<DerivedY>& y) {
  using Scalar = typename DerivedX::Scalar;
  const auto z = (x - y).eval();
  const Scalar r = z.norm();
  if (r == Scalar(0)) throw NumericalError("mirror_matrix: x == y (coupled; switch to synchronous)");
  const auto e = (z / r).eval();
  return DenseMatrix<Scalar>::Identity(z.size(), z.size()) - Scalar(2) * e * e.transpose();
}

/// W2 between N(m1, C1) and N(m2, C2).
template <typename DM1, typename DC1, typename DM2, typename DC2>
typename DM1::Scalar gaussian_w2(const Eigen::MatrixBase<DM1>& m1, const Eigen::MatrixBase<DC1>& c1,
                                 const Eigen::MatrixBase<DM2>& m2, const Eigen::MatrixBase<DC2>& c2) {
  using Scalar = typename DM1::Scalar;
  using std::sqrt;
  if (!c1.isApprox(c1.transpose()) || !c2.isApprox(c2.transpose()))
    throw ConfigError("gaussian_w2: covariances must be symmetric");
  const DenseMatrix<Scalar> r2 = psd_sqrt(c2);
  const DenseMatrix<Scalar> cross = psd_sqrt((r2 * c1 * r2).eval());
  psd_sqrt(c1);  // validates C1
  const Scalar bures = (c1 + c2 - Scalar(2) * cross).trace();
  const Scalar w2sq = (m1 - m2).squaredNorm() + std::max(Scalar(0), bures);
  return sqrt(w2sq);
}

}  // namespace mvlab

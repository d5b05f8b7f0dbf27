#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>

namespace srdkit {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatrixXd = Matrix<double>;
using VectorXd = Vector<double>;
using Index = Eigen::Index;

/// Raised when a matrix that must be positive definite is not.
class NotPositiveDefinite : public std::domain_error {
 public:
  explicit NotPositiveDefinite(const std::string& what) : std::domain_error(what) {}
};

template <typename Derived>
Matrix<typename Derived::Scalar> symmetrize(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  return (m + m.transpose()) * Scalar(0.5);
}

template <typename Derived>
bool is_positive_definite(const Eigen::MatrixBase<Derived>& m) {
  Eigen::LLT<Matrix<typename Derived::Scalar>> llt(m);
  return llt.info() == Eigen::Success;
}

template <typename Derived>
typename Derived::Scalar min_eigenvalue(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  if (m.rows() == 0) return Scalar(0);
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(symmetrize(m), Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

template <typename Derived>
typename Derived::Scalar max_eigenvalue(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  if (m.rows() == 0) return Scalar(0);
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(symmetrize(m), Eigen::EigenvaluesOnly);
  return es.eigenvalues()(m.rows() - 1);
}

// Applies f to the eigenvalues of a symmetric matrix.
template <typename Derived, typename F>
Matrix<typename Derived::Scalar> spectral_map(const Eigen::MatrixBase<Derived>& m, F&& f) {
  using Scalar = typename Derived::Scalar;
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(symmetrize(m));
  Vector<Scalar> mapped = es.eigenvalues().unaryExpr(f);
  return symmetrize(es.eigenvectors() * mapped.asDiagonal() * es.eigenvectors().transpose());
}

template <typename Derived>
Matrix<typename Derived::Scalar> sqrt_spd(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  return spectral_map(m, [](Scalar v) {
    if (!(v > Scalar(0))) throw NotPositiveDefinite("sqrt_spd: matrix is not positive definite");
    return Scalar(std::sqrt(v));
  });
}

template <typename Derived>
Matrix<typename Derived::Scalar> inv_sqrt_spd(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  return spectral_map(m, [](Scalar v) {
    if (!(v > Scalar(0))) throw NotPositiveDefinite("inv_sqrt_spd: matrix is not positive definite");
    return Scalar(1) / Scalar(std::sqrt(v));
  });
}

template <typename Derived>
Matrix<typename Derived::Scalar> project_psd(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  return spectral_map(m, [](Scalar v) { return v > Scalar(0) ? v : Scalar(0); });
}

/// Inverse of a symmetric positive definite matrix through its Cholesky factor.
template <typename Derived>
Matrix<typename Derived::Scalar> inverse_spd(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  Eigen::LLT<Matrix<Scalar>> llt(symmetrize(m));
  if (llt.info() != Eigen::Success) throw NotPositiveDefinite("inverse_spd: matrix is not positive definite");
  return symmetrize(llt.solve(Matrix<Scalar>::Identity(m.rows(), m.cols())));
}

template <typename Derived>
typename Derived::Scalar log_det_spd(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  Eigen::LLT<Matrix<Scalar>> llt(symmetrize(m));
  if (llt.info() != Eigen::Success) throw NotPositiveDefinite("log_det_spd: matrix is not positive definite");
  Scalar acc(0);
  for (Index i = 0; i < m.rows(); ++i) acc += std::log(Scalar(llt.matrixLLT()(i, i)));
  return Scalar(2) * acc;
}

}  // namespace srdkit

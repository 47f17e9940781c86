#ifndef MRPERC_SPECTRAL_HPP
#define MRPERC_SPECTRAL_HPP

// Perron-Frobenius eigenvalue and eigenvectors of a nonnegative matrix by
// power iteration on M + I, left and right at once. The shift keeps periodic
// matrices from oscillating.
//
// Works for dense (MatrixBase) and sparse (SparseMatrixBase) Eigen inputs.

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <type_traits>

#include "mrperc/errors.hpp"

namespace mrperc {

template <class Scalar>
struct SpectralResult {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Scalar rho = 0;
  Vector mu;  // left, sum(mu) = 1
  Vector nu;  // right, mu . nu = 1
  Scalar residual = 0;
  long iterations = 0;
};

struct PfOptions {
  double tol = 1e-12;
  long max_iter = 1'000'000;
};

namespace detail {

template <class MatrixType>
inline constexpr bool is_sparse_v =
    std::is_base_of_v<Eigen::SparseMatrixBase<MatrixType>, MatrixType>;

template <class MatrixType>
bool has_negative_entry(const MatrixType& M) {
  if constexpr (is_sparse_v<MatrixType>) {
    for (Eigen::Index j = 0; j < M.outerSize(); ++j) {
      for (typename MatrixType::InnerIterator it(M, j); it; ++it) {
        if (!(it.value() >= 0)) return true;
      }
    }
    return false;
  } else {
    return !(M.array() >= 0).all();
  }
}

}  // namespace detail

// `warm` (optional) seeds both vectors from an earlier result of the same
// dimension; it changes the iteration path, not the fixed point.
template <class MatrixType>
SpectralResult<typename MatrixType::Scalar> pf_eigen(
    const MatrixType& M, PfOptions opts = {},
    const SpectralResult<typename MatrixType::Scalar>* warm = nullptr) {
  using Scalar = typename MatrixType::Scalar;
  using Vector = typename SpectralResult<Scalar>::Vector;

  if (M.rows() != M.cols()) throw DomainError("pf_eigen: matrix must be square");
  if (M.rows() == 0) throw DomainError("pf_eigen: matrix is empty");
  if (detail::has_negative_entry(M)) throw DomainError("pf_eigen: matrix has a negative entry");

  const Eigen::Index n = M.rows();
  Vector nu;
  Vector mu;
  if (warm && warm->nu.size() == n && warm->mu.size() == n) {
    // Floor at a tiny positive value so every component can still grow.
    nu = warm->nu.cwiseAbs().array() + Scalar(1e-300);
    mu = warm->mu.cwiseAbs().array() + Scalar(1e-300);
  } else {
    nu = Vector::Ones(n);
    mu = Vector::Ones(n);
  }
  nu /= nu.sum();
  mu /= mu.sum();

  SpectralResult<Scalar> out;
  Vector y(n);
  Vector z(n);
  Scalar residual = std::numeric_limits<Scalar>::infinity();
  for (long it = 1; it <= opts.max_iter; ++it) {
    y.noalias() = M * nu;
    z.noalias() = M.transpose() * mu;
    const Scalar mn = mu.dot(nu);
    const Scalar rho = mu.dot(y) / mn;

    // Residuals in the reported normalization: sum(mu) = 1 (already), mu.nu = 1.
    const Scalar right = (y - rho * nu).cwiseAbs().maxCoeff() / mn;
    const Scalar left = (z - rho * mu).cwiseAbs().maxCoeff();
    residual = std::max(left, right);
    if (residual <= Scalar(opts.tol)) {
      out.rho = rho;
      out.mu = mu;
      out.nu = nu / mn;
      out.residual = residual;
      out.iterations = it;
      return out;
    }
    nu += y;
    nu /= nu.sum();
    mu += z;
    mu /= mu.sum();
  }
  throw NonConvergence("pf_eigen: residual " + std::to_string(static_cast<double>(residual)) +
                           " above tolerance after " + std::to_string(opts.max_iter) +
                           " iterations (the matrix may be reducible)",
                       static_cast<double>(residual));
}

template <class Scalar>
struct PerturbationCheck {
  Scalar rho_before = 0;
  Scalar rho_after = 0;
  Scalar first_order = 0;  // mu E nu / mu nu, eigenvectors of M
};

template <class MatrixType, class PerturbType>
PerturbationCheck<typename MatrixType::Scalar> pf_perturbation_check(const MatrixType& M,
                                                                     const PerturbType& E,
                                                                     PfOptions opts = {}) {
  using Scalar = typename MatrixType::Scalar;
  if (E.rows() != M.rows() || E.cols() != M.cols()) {
    throw DomainError("pf_perturbation_check: shape mismatch");
  }
  if (detail::has_negative_entry(E)) throw DomainError("pf_perturbation_check: E must be nonnegative");
  const auto before = pf_eigen(M, opts);
  const MatrixType shifted = M + E;
  const auto after = pf_eigen(shifted, opts, &before);
  PerturbationCheck<Scalar> out;
  out.rho_before = before.rho;
  out.rho_after = after.rho;
  out.first_order = before.mu.dot(E * before.nu) / before.mu.dot(before.nu);
  return out;
}

}  // namespace mrperc

#endif  // MRPERC_SPECTRAL_HPP

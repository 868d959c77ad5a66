#pragma once

// Dense complex linear algebra used throughout qest: Kronecker products,
// partial traces, the |A>> vectorization, support projectors and the
// pseudo-inverse restricted to the support of a PSD matrix.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <string>

#include <Eigen/Dense>

#include "qest/error.hpp"

namespace qest {

using cplx = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RVector = Eigen::VectorXd;
using count = std::size_t;

inline constexpr double kDefaultRankTol = 1e-9;
inline constexpr double kHermitianTol = 1e-10;

inline bool all_finite(const CMatrix& m) {
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      if (!std::isfinite(m(i, j).real()) || !std::isfinite(m(i, j).imag())) return false;
  return true;
}

inline double max_abs(const CMatrix& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

// Hermiticity test with a tolerance scaled by the entry magnitude.
inline bool is_hermitian(const CMatrix& a, double tol = kHermitianTol) {
  if (a.rows() != a.cols()) return false;
  return max_abs(a - a.adjoint()) <= tol * std::max(1.0, max_abs(a));
}

inline CMatrix hermitian_part(const CMatrix& a) { return 0.5 * (a + a.adjoint()); }

inline void require_hermitian(const CMatrix& a, const char* who) {
  if (!all_finite(a)) throw PreconditionError(std::string(who) + ": non-finite entries");
  if (!is_hermitian(a)) throw PreconditionError(std::string(who) + ": matrix is not Hermitian");
}

/// Eigendecomposition of a Hermitian matrix. Values ascend; column j of
/// `vectors` belongs to `values[j]`.
struct HermitianEig {
  RVector values;
  CMatrix vectors;

  double min() const { return values(0); }
  double max() const { return values(values.size() - 1); }
};

inline HermitianEig hermitian_eig(const CMatrix& a) {
  require_hermitian(a, "hermitian_eig");
  Eigen::SelfAdjointEigenSolver<CMatrix> es(hermitian_part(a));
  if (es.info() != Eigen::Success) throw NumericalError("hermitian_eig: eigensolver failed");
  return {es.eigenvalues(), es.eigenvectors()};
}

inline RVector hermitian_eigenvalues(const CMatrix& a) {
  require_hermitian(a, "hermitian_eigenvalues");
  Eigen::SelfAdjointEigenSolver<CMatrix> es(hermitian_part(a), Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NumericalError("hermitian_eigenvalues: eigensolver failed");
  return es.eigenvalues();
}

inline double lambda_min(const CMatrix& a) { return hermitian_eigenvalues(a)(0); }
inline double lambda_max(const CMatrix& a) {
  RVector v = hermitian_eigenvalues(a);
  return v(v.size() - 1);
}

inline CMatrix kron(const CMatrix& a, const CMatrix& b) {
  CMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

enum class Keep { first, second };

/// Partial trace of a square matrix on C^{dim_first} (x) C^{dim_second},
/// keeping the factor named by `keep`.
inline CMatrix partial_trace(const CMatrix& m, count dim_first, count dim_second, Keep keep) {
  const auto d1 = static_cast<Eigen::Index>(dim_first);
  const auto d2 = static_cast<Eigen::Index>(dim_second);
  if (m.rows() != m.cols() || m.rows() != d1 * d2)
    throw PreconditionError("partial_trace: dimension mismatch");
  if (keep == Keep::first) {
    CMatrix out = CMatrix::Zero(d1, d1);
    for (Eigen::Index i = 0; i < d1; ++i)
      for (Eigen::Index j = 0; j < d1; ++j)
        for (Eigen::Index k = 0; k < d2; ++k) out(i, j) += m(i * d2 + k, j * d2 + k);
    return out;
  }
  CMatrix out = CMatrix::Zero(d2, d2);
  for (Eigen::Index k = 0; k < d1; ++k) out += m.block(k * d2, k * d2, d2, d2);
  return out;
}

/// |A>> = sum_{j,k} A_{jk} |j> (x) |k>: the row index lives on the first factor.
inline CVector vec_ket(const CMatrix& a) {
  CVector v(a.size());
  for (Eigen::Index j = 0; j < a.rows(); ++j)
    for (Eigen::Index k = 0; k < a.cols(); ++k) v(j * a.cols() + k) = a(j, k);
  return v;
}

inline CMatrix unvec_ket(const CVector& v, count rows, count cols) {
  const auto r = static_cast<Eigen::Index>(rows);
  const auto c = static_cast<Eigen::Index>(cols);
  if (v.size() != r * c) throw PreconditionError("unvec_ket: length mismatch");
  CMatrix a(r, c);
  for (Eigen::Index j = 0; j < r; ++j)
    for (Eigen::Index k = 0; k < c; ++k) a(j, k) = v(j * c + k);
  return a;
}

struct SupportInfo {
  CMatrix projector;
  count rank = 0;
  double cutoff = 0.0;
};

inline double support_cutoff(double lmax, double tol) {
  return lmax > 0.0 ? tol * lmax : 1e-12;
}

/// Projector onto the span of eigenvectors whose eigenvalue exceeds tol * lambda_max.
inline SupportInfo support_projector(const CMatrix& a, double tol = kDefaultRankTol) {
  const HermitianEig eig = hermitian_eig(a);
  const double cut = support_cutoff(eig.max(), tol);
  SupportInfo info;
  info.cutoff = cut;
  info.projector = CMatrix::Zero(a.rows(), a.cols());
  for (Eigen::Index j = 0; j < eig.values.size(); ++j) {
    if (eig.values(j) > cut) {
      info.projector += eig.vectors.col(j) * eig.vectors.col(j).adjoint();
      ++info.rank;
    }
  }
  return info;
}

/// Moore-Penrose inverse of a Hermitian PSD matrix, inverting only on its support.
inline CMatrix pinv_on_support(const CMatrix& a, double tol = kDefaultRankTol) {
  const HermitianEig eig = hermitian_eig(a);
  const double cut = support_cutoff(eig.max(), tol);
  CMatrix out = CMatrix::Zero(a.rows(), a.cols());
  for (Eigen::Index j = 0; j < eig.values.size(); ++j)
    if (eig.values(j) > cut) out += (1.0 / eig.values(j)) * eig.vectors.col(j) * eig.vectors.col(j).adjoint();
  return out;
}

/// Largest singular value.
inline double op_norm(const CMatrix& a) {
  if (a.size() == 0) return 0.0;
  if (is_hermitian(a, 1e-13)) {
    const RVector v = hermitian_eigenvalues(a);
    return std::max(std::abs(v(0)), std::abs(v(v.size() - 1)));
  }
  Eigen::BDCSVD<CMatrix> svd(a);
  return svd.singularValues()(0);
}

inline bool is_projector(const CMatrix& p, double tol = kHermitianTol) {
  if (p.rows() != p.cols() || !is_hermitian(p, tol)) return false;
  return max_abs(p * p - p) <= tol * std::max(1.0, max_abs(p)) * 10.0;
}

// lambda_min(A^{-1} - (PAP)^+). Non-negative whenever A is positive definite.
inline double lemma_a1_residual(const CMatrix& a, const CMatrix& p) {
  require_hermitian(a, "lemma_a1_residual");
  if (lambda_min(a) <= 1e-10) throw PreconditionError("lemma_a1_residual: A is not positive definite");
  if (!is_projector(p) || p.rows() != a.rows()) throw PreconditionError("lemma_a1_residual: P is not a projector");
  Eigen::LLT<CMatrix> llt(hermitian_part(a));
  if (llt.info() != Eigen::Success) throw NumericalError("lemma_a1_residual: Cholesky failed");
  const CMatrix a_inv = llt.solve(CMatrix::Identity(a.rows(), a.cols()));
  const CMatrix pap = hermitian_part(p * a * p);
  return lambda_min(hermitian_part(a_inv - pinv_on_support(pap)));
}

// lambda_min(eps P + (R^2/eps)(I-P) - PA(I-P) - (I-P)AP), R = ||PA(I-P)||.
inline double lemma_a2_residual(const CMatrix& a, const CMatrix& p, double eps) {
  if (!(eps > 0.0)) throw PreconditionError("lemma_a2_residual: eps must be positive");
  require_hermitian(a, "lemma_a2_residual");
  if (lambda_min(a) < -1e-10 * std::max(1.0, op_norm(a)))
    throw PreconditionError("lemma_a2_residual: A is not PSD");
  if (!is_projector(p) || p.rows() != a.rows()) throw PreconditionError("lemma_a2_residual: P is not a projector");
  const CMatrix id = CMatrix::Identity(a.rows(), a.cols());
  const CMatrix q = id - p;
  const CMatrix off = p * a * q;
  const double r = op_norm(off);
  const CMatrix m = eps * p + (r * r / eps) * q - off - off.adjoint();
  return lambda_min(hermitian_part(m));
}

}  // namespace qest

#pragma once

// One-parameter channel families given by Kraus operators, their
// Choi-Jamiolkowski matrices rho[L_t] = (L_t (x) id)(|I>><<I|) and the
// theta-derivative D[L_t].
//
// Conventions: the Choi matrix lives on K (x) R (output first, reference
// second) and is unnormalized, Tr_K rho = I_d. Inputs are d x r matrices A with
// |A>> in H (x) R'; the output state is (I (x) A^T) rho (I (x) conj(A)).

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qest/linalg.hpp"

namespace qest {

using KrausList = std::vector<CMatrix>;
using KrausFn = std::function<KrausList(double)>;

inline constexpr count kMaxChoiDim = 4096;

struct ParamSpace {
  double lo = -std::numbers::pi;
  double hi = std::numbers::pi;
  std::optional<double> period;

  // E = sup |theta| over the interval.
  double bound() const { return std::max(std::abs(lo), std::abs(hi)); }
  bool contains(double t) const { return period.has_value() || (t >= lo && t <= hi); }
  double clamp(double t) const { return period ? t : std::min(hi, std::max(lo, t)); }
};

class ChannelFamily {
 public:
  ChannelFamily(count dim_in, count dim_out, KrausFn kraus, std::optional<KrausFn> kraus_deriv,
                ParamSpace space, std::string label)
      : dim_in_(dim_in),
        dim_out_(dim_out),
        kraus_(std::move(kraus)),
        kraus_deriv_(std::move(kraus_deriv)),
        space_(std::move(space)),
        label_(std::move(label)) {
    if (dim_in_ == 0 || dim_out_ == 0) throw PreconditionError("ChannelFamily: zero dimension");
    if (!(space_.lo <= space_.hi)) throw PreconditionError("ChannelFamily: empty parameter interval");
  }

  count dim_in() const { return dim_in_; }
  count dim_out() const { return dim_out_; }
  const ParamSpace& param_space() const { return space_; }
  const std::string& label() const { return label_; }
  bool has_analytic_derivative() const { return kraus_deriv_.has_value(); }

  KrausList kraus_at(double theta) const { return checked(kraus_(theta), "kraus_at"); }

  KrausList kraus_deriv_at(double theta) const {
    if (!kraus_deriv_) throw PreconditionError("kraus_deriv_at: family '" + label_ + "' has no analytic derivative");
    return checked((*kraus_deriv_)(theta), "kraus_deriv_at");
  }

  /// max-entry deviation of sum_i F_i^dag F_i from the identity.
  double tp_residual(double theta) const {
    const KrausList ks = kraus_at(theta);
    CMatrix acc = CMatrix::Zero(dim_in_, dim_in_);
    for (const auto& f : ks) acc += f.adjoint() * f;
    return max_abs(acc - CMatrix::Identity(dim_in_, dim_in_));
  }

  void validate_tp(double theta, double tol = 1e-9) const {
    if (tp_residual(theta) > tol)
      throw PreconditionError("family '" + label_ + "' is not trace preserving at theta=" + std::to_string(theta));
  }

  ChannelFamily with_param_space(ParamSpace space) const {
    ChannelFamily copy = *this;
    if (!(space.lo <= space.hi)) throw PreconditionError("with_param_space: empty interval");
    copy.space_ = std::move(space);
    return copy;
  }

  ChannelFamily with_label(std::string label) const {
    ChannelFamily copy = *this;
    copy.label_ = std::move(label);
    return copy;
  }

 private:
  KrausList checked(KrausList ks, const char* who) const {
    if (ks.empty()) throw PreconditionError(std::string(who) + ": empty Kraus list");
    if (ks.size() > dim_in_ * dim_out_) throw PreconditionError(std::string(who) + ": more than d*d' Kraus operators");
    for (const auto& f : ks) {
      if (static_cast<count>(f.rows()) != dim_out_ || static_cast<count>(f.cols()) != dim_in_)
        throw PreconditionError(std::string(who) + ": Kraus operator has wrong shape");
      if (!all_finite(f)) throw NumericalError(std::string(who) + ": non-finite Kraus entries");
    }
    return ks;
  }

  count dim_in_;
  count dim_out_;
  KrausFn kraus_;
  std::optional<KrausFn> kraus_deriv_;
  ParamSpace space_;
  std::string label_;
};

// ---------------------------------------------------------------------------
// Built-in families

/// theta -> e^{i theta H} rho e^{-i theta H}.
inline ChannelFamily make_unitary_family(const CMatrix& h, ParamSpace space = {}) {
  require_hermitian(h, "make_unitary_family");
  const HermitianEig eig = hermitian_eig(h);
  const count d = static_cast<count>(h.rows());
  auto expo = [eig](double t) {
    CVector phases(eig.values.size());
    for (Eigen::Index j = 0; j < phases.size(); ++j) phases(j) = std::exp(cplx(0.0, t * eig.values(j)));
    return CMatrix(eig.vectors * phases.asDiagonal() * eig.vectors.adjoint());
  };
  const CMatrix hh = hermitian_part(h);
  KrausFn kraus = [expo](double t) { return KrausList{expo(t)}; };
  KrausFn deriv = [expo, hh](double t) { return KrausList{CMatrix(cplx(0.0, 1.0) * hh * expo(t))}; };
  return ChannelFamily(d, d, std::move(kraus), std::move(deriv), std::move(space), "unitary");
}

/// Theta-independent channel with the given Kraus operators.
inline ChannelFamily make_constant_family(KrausList kraus, ParamSpace space = {}, std::string label = "constant") {
  if (kraus.empty()) throw PreconditionError("make_constant_family: empty Kraus list");
  const count d_out = static_cast<count>(kraus.front().rows());
  const count d_in = static_cast<count>(kraus.front().cols());
  KrausList zeros;
  for (const auto& f : kraus) zeros.push_back(CMatrix::Zero(f.rows(), f.cols()));
  return ChannelFamily(
      d_in, d_out, [kraus](double) { return kraus; }, KrausFn([zeros](double) { return zeros; }), std::move(space),
      std::move(label));
}

inline ChannelFamily make_identity_family(count d, ParamSpace space = {}) {
  return make_constant_family({CMatrix::Identity(d, d)}, std::move(space), "identity");
}

/// Phase damping rho -> sum_{k,l} d_{k,l}(theta) rho_{k,l} |k><l|. The Kraus
/// operators are diag(v_i) where d = sum_i v_i v_i^dag is the spectral
/// factorization of the coefficient matrix.
inline ChannelFamily make_phase_damping_family(std::function<CMatrix(double)> coeffs, count dim, ParamSpace space = {}) {
  if (dim == 0) throw PreconditionError("make_phase_damping_family: zero dimension");
  KrausFn kraus = [coeffs = std::move(coeffs), dim](double t) {
    const CMatrix c = coeffs(t);
    if (static_cast<count>(c.rows()) != dim || static_cast<count>(c.cols()) != dim)
      throw PreconditionError("phase damping: coefficient matrix has wrong shape");
    for (count k = 0; k < dim; ++k)
      if (std::abs(c(k, k) - 1.0) > 1e-12) throw PreconditionError("phase damping: diagonal coefficients must equal 1");
    if (!is_hermitian(c, 1e-12)) throw PreconditionError("phase damping: coefficient matrix is not Hermitian");
    const HermitianEig eig = hermitian_eig(c);
    if (eig.min() < -1e-12) throw PreconditionError("phase damping: coefficient matrix is not PSD");
    KrausList ks;
    for (Eigen::Index j = 0; j < eig.values.size(); ++j) {
      if (eig.values(j) <= 1e-15) continue;
      const CVector v = std::sqrt(eig.values(j)) * eig.vectors.col(j);
      ks.push_back(CMatrix(v.asDiagonal()));
    }
    return ks;
  };
  return ChannelFamily(dim, dim, std::move(kraus), std::nullopt, std::move(space), "phase_damping");
}

/// Phase damping with d_{k,l}(theta) = exp(-theta * rates(k,l)); rates symmetric with zero diagonal.
inline ChannelFamily make_exponential_phase_damping(const Eigen::MatrixXd& rates, ParamSpace space = {0.0, 10.0, {}}) {
  const count d = static_cast<count>(rates.rows());
  if (rates.rows() != rates.cols()) throw PreconditionError("phase damping rates must be square");
  for (count k = 0; k < d; ++k) {
    if (rates(k, k) != 0.0) throw PreconditionError("phase damping rates must have zero diagonal");
    for (count l = 0; l < d; ++l)
      if (std::abs(rates(k, l) - rates(l, k)) > 1e-14) throw PreconditionError("phase damping rates must be symmetric");
  }
  return make_phase_damping_family(
      [rates](double t) {
        return CMatrix((-t * rates.array()).exp().matrix().cast<cplx>());
      },
      d, std::move(space));
}

/// Discrete Weyl operator X^a Z^b on C^d.
inline CMatrix weyl_operator(count d, count a, count b) {
  CMatrix w = CMatrix::Zero(d, d);
  for (count j = 0; j < d; ++j) {
    const double phase = 2.0 * std::numbers::pi * static_cast<double>(b * j % d) / static_cast<double>(d);
    w((j + a) % d, j) = std::exp(cplx(0.0, phase));
  }
  return w;
}

/// Cyclic shift X|j> = |j+1 mod d>.
inline CMatrix cyclic_shift(count d) { return weyl_operator(d, 1, 0); }

/// Depolarizing channel, theta = p: rho -> (1-p) rho + p (I/d) Tr rho.
inline ChannelFamily make_depolarizing_family(count d, ParamSpace space = {0.0, 1.0, {}}) {
  if (d < 2) throw PreconditionError("make_depolarizing_family: dimension must be >= 2");
  const double dd = static_cast<double>(d * d);
  KrausFn kraus = [d, dd](double p) {
    if (!(p >= 0.0 && p <= 1.0)) throw PreconditionError("depolarizing: p outside [0, 1]");
    KrausList ks;
    for (count a = 0; a < d; ++a)
      for (count b = 0; b < d; ++b) {
        const double w = (a == 0 && b == 0) ? 1.0 - p + p / dd : p / dd;
        ks.push_back(std::sqrt(w) * weyl_operator(d, a, b));
      }
    return ks;
  };
  KrausFn deriv = [d, dd](double p) {
    if (!(p > 0.0 && p < 1.0)) throw PreconditionError("depolarizing: derivative needs p in (0, 1)");
    KrausList ks;
    for (count a = 0; a < d; ++a)
      for (count b = 0; b < d; ++b) {
        const bool id = a == 0 && b == 0;
        const double w = id ? 1.0 - p + p / dd : p / dd;
        const double dw = id ? -1.0 + 1.0 / dd : 1.0 / dd;
        ks.push_back((dw / (2.0 * std::sqrt(w))) * weyl_operator(d, a, b));
      }
    return ks;
  };
  return ChannelFamily(d, d, std::move(kraus), std::move(deriv), std::move(space), "depolarizing");
}

/// rho -> sum_j p_j X^j e^{i theta H} rho e^{-i theta H} X^{-j}, H = diag(h).
inline ChannelFamily make_shift_mixture_family(const std::vector<double>& probs, const std::vector<double>& h_diag,
                                               ParamSpace space = {}) {
  const count d = h_diag.size();
  if (d == 0 || probs.size() != d) throw PreconditionError("shift mixture: probs and h_diag must have length d >= 1");
  double total = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw PreconditionError("shift mixture: probabilities must be >= 0");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-12) throw PreconditionError("shift mixture: probabilities must sum to 1");
  std::vector<std::pair<double, CMatrix>> terms;  // (sqrt p_j, X^j)
  CMatrix xj = CMatrix::Identity(d, d);
  const CMatrix x = cyclic_shift(d);
  for (count j = 0; j < d; ++j) {
    if (probs[j] > 0.0) terms.emplace_back(std::sqrt(probs[j]), xj);
    xj = x * xj;
  }
  CVector h(d);
  for (count j = 0; j < d; ++j) h(j) = h_diag[j];
  auto expo = [h](double t) {
    CVector ph(h.size());
    for (Eigen::Index j = 0; j < h.size(); ++j) ph(j) = std::exp(cplx(0.0, t * h(j).real()));
    return ph;
  };
  KrausFn kraus = [terms, expo](double t) {
    const CVector ph = expo(t);
    KrausList ks;
    for (const auto& [w, xp] : terms) ks.push_back(w * xp * ph.asDiagonal());
    return ks;
  };
  KrausFn deriv = [terms, expo, h](double t) {
    const CVector ph = expo(t);
    const CVector dph = (cplx(0.0, 1.0) * h.array() * ph.array()).matrix();
    KrausList ks;
    for (const auto& [w, xp] : terms) ks.push_back(w * xp * dph.asDiagonal());
    return ks;
  };
  return ChannelFamily(d, d, std::move(kraus), std::move(deriv), std::move(space), "shift_mixture");
}

// ---------------------------------------------------------------------------
// Choi matrices

/// Output (x) reference Choi matrix and its theta-derivative at one point.
struct ChoiPair {
  CMatrix rho;
  CMatrix deriv;
  double theta = 0.0;
  std::string source;
  count dim_out = 0;
  count dim_in = 0;
};

/// sum_i |F_i>><<F_i| = (L (x) id)(|I>><<I|).
inline CMatrix choi_matrix(const KrausList& kraus) {
  const Eigen::Index n = kraus.front().size();
  CMatrix rho = CMatrix::Zero(n, n);
  for (const auto& f : kraus) {
    const CVector v = vec_ket(f);
    rho.noalias() += v * v.adjoint();
  }
  return rho;
}

/// Derivative of the Choi matrix from Kraus operators and their derivatives.
inline CMatrix choi_derivative(const KrausList& kraus, const KrausList& dkraus) {
  if (kraus.size() != dkraus.size()) throw PreconditionError("choi_derivative: Kraus/derivative count mismatch");
  const Eigen::Index n = kraus.front().size();
  CMatrix d = CMatrix::Zero(n, n);
  for (std::size_t i = 0; i < kraus.size(); ++i) {
    const CVector v = vec_ket(kraus[i]);
    const CVector dv = vec_ket(dkraus[i]);
    d.noalias() += dv * v.adjoint();
    d.noalias() += v * dv.adjoint();
  }
  return d;
}

struct ChoiResiduals {
  double trk_rho = 0.0;    // max |Tr_K rho - I|
  double trk_deriv = 0.0;  // max |Tr_K D|
  double rho_min_eig = 0.0;
};

inline ChoiResiduals choi_residuals(const ChoiPair& p) {
  ChoiResiduals r;
  r.trk_rho = max_abs(partial_trace(p.rho, p.dim_out, p.dim_in, Keep::second) - CMatrix::Identity(p.dim_in, p.dim_in));
  r.trk_deriv = max_abs(partial_trace(p.deriv, p.dim_out, p.dim_in, Keep::second));
  r.rho_min_eig = lambda_min(p.rho);
  return r;
}

inline void validate_choi_pair(const ChoiPair& p) {
  const ChoiResiduals r = choi_residuals(p);
  if (r.trk_rho > 1e-9) throw PreconditionError("choi_pair: Tr_K rho != I (residual " + std::to_string(r.trk_rho) + ")");
  if (r.trk_deriv > 1e-7) throw PreconditionError("choi_pair: Tr_K D != 0 (residual " + std::to_string(r.trk_deriv) + ")");
  if (r.rho_min_eig < -1e-10 * std::max(1.0, op_norm(p.rho))) throw PreconditionError("choi_pair: rho is not PSD");
  if (!is_hermitian(p.deriv, 1e-9)) throw PreconditionError("choi_pair: derivative is not Hermitian");
}

namespace detail {

inline CMatrix central_difference(const ChannelFamily& f, double theta, double h) {
  return (choi_matrix(f.kraus_at(theta + h)) - choi_matrix(f.kraus_at(theta - h))) / (2.0 * h);
}

// Central difference with steps h and h/2; Richardson-combined when the two
// disagree by more than 1e-4 relative.
inline CMatrix finite_difference_choi_derivative(const ChannelFamily& f, double theta, double h) {
  const CMatrix d1 = central_difference(f, theta, h);
  const CMatrix d2 = central_difference(f, theta, 0.5 * h);
  const double scale = std::max(max_abs(d1), 1e-12);
  if (max_abs(d1 - d2) > 1e-4 * scale) return (4.0 * d2 - d1) / 3.0;
  return d1;
}

inline bool fd_window_ok(const ChannelFamily& f, double theta, double h) {
  const ParamSpace& s = f.param_space();
  return s.period.has_value() || (theta - h >= s.lo && theta + h <= s.hi);
}

}  // namespace detail

/// Choi matrix and derivative at theta. Uses the analytic Kraus derivative when
/// the family has one (cross-checked against a central difference), otherwise a
/// central difference of the Choi matrix with step fd_step.
inline ChoiPair choi_pair(const ChannelFamily& f, double theta, double fd_step = 1e-5) {
  if (!f.param_space().contains(theta))
    throw PreconditionError("choi_pair: theta=" + std::to_string(theta) + " outside the parameter space");
  if (f.dim_in() * f.dim_out() > kMaxChoiDim) throw PreconditionError("choi_pair: Choi dimension exceeds 4096");
  f.validate_tp(theta);
  ChoiPair p;
  p.theta = theta;
  p.source = f.label();
  p.dim_out = f.dim_out();
  p.dim_in = f.dim_in();
  const KrausList ks = f.kraus_at(theta);
  p.rho = choi_matrix(ks);
  if (f.has_analytic_derivative()) {
    p.deriv = choi_derivative(ks, f.kraus_deriv_at(theta));
    if (detail::fd_window_ok(f, theta, fd_step) && f.dim_in() * f.dim_out() <= 256) {
      const CMatrix fd = detail::finite_difference_choi_derivative(f, theta, fd_step);
      if (max_abs(fd - p.deriv) > 1e-5 * std::max(1.0, max_abs(p.deriv)))
        throw PreconditionError("choi_pair: analytic derivative of '" + f.label() + "' disagrees with finite differences");
    }
  } else {
    if (!detail::fd_window_ok(f, theta, fd_step))
      throw PreconditionError("choi_pair: theta too close to the parameter boundary for finite differences");
    p.deriv = detail::finite_difference_choi_derivative(f, theta, fd_step);
  }
  p.deriv = hermitian_part(p.deriv);
  validate_choi_pair(p);
  return p;
}

namespace detail {

inline CMatrix ancilla_conjugate(const CMatrix& m, count dim_out, count dim_in, const CMatrix& a) {
  if (static_cast<count>(a.rows()) != dim_in) throw PreconditionError("apply_with_ancilla: input must have d rows");
  const double norm = a.squaredNorm();
  if (std::abs(norm - 1.0) > 1e-9) throw PreconditionError("apply_with_ancilla: Tr conj(A) A^T must equal 1");
  const CMatrix x = kron(CMatrix::Identity(dim_out, dim_out), a.transpose());
  return x * m * x.adjoint();
}

}  // namespace detail

/// Output state (I (x) A^T) rho (I (x) conj(A)) for the input |A>><<A|.
inline CMatrix apply_with_ancilla(const ChoiPair& pair, const CMatrix& a) {
  return hermitian_part(detail::ancilla_conjugate(pair.rho, pair.dim_out, pair.dim_in, a));
}

/// d/dtheta of apply_with_ancilla.
inline CMatrix apply_with_ancilla_derivative(const ChoiPair& pair, const CMatrix& a) {
  return hermitian_part(detail::ancilla_conjugate(pair.deriv, pair.dim_out, pair.dim_in, a));
}

/// Maximally entangled input A = I / sqrt(d).
inline CMatrix maximally_entangled_input(count d) {
  return CMatrix::Identity(d, d) / std::sqrt(static_cast<double>(d));
}

// ---------------------------------------------------------------------------
// Tensor products

namespace detail {

inline ParamSpace intersect(const ParamSpace& a, const ParamSpace& b) {
  ParamSpace s;
  s.lo = std::max(a.lo, b.lo);
  s.hi = std::min(a.hi, b.hi);
  if (a.period && b.period && std::abs(*a.period - *b.period) < 1e-15) s.period = a.period;
  if (!(s.lo <= s.hi)) throw PreconditionError("tensor_families: disjoint parameter spaces");
  return s;
}

}  // namespace detail

/// theta -> L_theta (x) M_theta on H1 (x) H2 with Kraus set {F_i (x) G_j}.
inline ChannelFamily tensor_families(const ChannelFamily& f1, const ChannelFamily& f2) {
  const count din = f1.dim_in() * f2.dim_in();
  const count dout = f1.dim_out() * f2.dim_out();
  if (din > kMaxChoiDim || dout > kMaxChoiDim) throw PreconditionError("tensor_families: product dimension exceeds 4096");
  KrausFn kraus = [f1, f2](double t) {
    const KrausList a = f1.kraus_at(t);
    const KrausList b = f2.kraus_at(t);
    KrausList ks;
    ks.reserve(a.size() * b.size());
    for (const auto& x : a)
      for (const auto& y : b) ks.push_back(kron(x, y));
    return ks;
  };
  std::optional<KrausFn> deriv;
  if (f1.has_analytic_derivative() && f2.has_analytic_derivative()) {
    deriv = [f1, f2](double t) {
      const KrausList a = f1.kraus_at(t), da = f1.kraus_deriv_at(t);
      const KrausList b = f2.kraus_at(t), db = f2.kraus_deriv_at(t);
      KrausList ks;
      ks.reserve(a.size() * b.size());
      for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j) ks.push_back(CMatrix(kron(da[i], b[j]) + kron(a[i], db[j])));
      return ks;
    };
  }
  return ChannelFamily(din, dout, std::move(kraus), std::move(deriv),
                       detail::intersect(f1.param_space(), f2.param_space()),
                       "(" + f1.label() + ")x(" + f2.label() + ")");
}

inline ChannelFamily tensor_power(const ChannelFamily& f, count n) {
  if (n == 0) throw PreconditionError("tensor_power: n must be >= 1");
  ChannelFamily out = f;
  for (count k = 1; k < n; ++k) out = tensor_families(out, f);
  return out.with_label(f.label() + "^" + std::to_string(n));
}

/// Reorders a matrix on (K1 (x) R1) (x) (K2 (x) R2) to (K1 (x) K2) (x) (R1 (x) R2),
/// the layout of the Choi matrix of a product family.
inline CMatrix reorder_product_choi(const CMatrix& m, count dk1, count dr1, count dk2, count dr2) {
  const count n = dk1 * dr1 * dk2 * dr2;
  if (static_cast<count>(m.rows()) != n || m.rows() != m.cols())
    throw PreconditionError("reorder_product_choi: dimension mismatch");
  std::vector<Eigen::Index> perm(n);  // perm[old] = new
  for (count k1 = 0; k1 < dk1; ++k1)
    for (count r1 = 0; r1 < dr1; ++r1)
      for (count k2 = 0; k2 < dk2; ++k2)
        for (count r2 = 0; r2 < dr2; ++r2) {
          const count old_idx = ((k1 * dr1 + r1) * dk2 + k2) * dr2 + r2;
          const count new_idx = ((k1 * dk2 + k2) * dr1 + r1) * dr2 + r2;
          perm[old_idx] = static_cast<Eigen::Index>(new_idx);
        }
  CMatrix out(n, n);
  for (count i = 0; i < n; ++i)
    for (count j = 0; j < n; ++j) out(perm[i], perm[j]) = m(i, j);
  return out;
}

}  // namespace qest

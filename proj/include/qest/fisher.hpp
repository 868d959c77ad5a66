#pragma once

// SLD and RLD Fisher information of state families, the channel RLD maximum
// ||Tr_K D rho^+ D|| under the range condition, additivity checks and a
// projected-gradient search for good SLD inputs.

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "qest/channel.hpp"
#include "qest/linalg.hpp"
#include "qest/parallel.hpp"

namespace qest {

/// A Fisher information value that may diverge. Divergence is a tag, never a
/// floating-point infinity, so it cannot leak into arithmetic.
class FisherValue {
 public:
  static FisherValue finite(double v) { return FisherValue(false, v); }
  static FisherValue infinite() { return FisherValue(true, 0.0); }

  bool is_infinite() const { return infinite_; }
  bool is_finite() const { return !infinite_; }

  double value() const {
    if (infinite_) throw PreconditionError("FisherValue: value() called on a divergent Fisher information");
    return value_;
  }

  // a <= b with +infinity handled explicitly.
  bool at_most(const FisherValue& other, double slack = 0.0) const {
    if (other.infinite_) return true;
    if (infinite_) return false;
    return value_ <= other.value_ + slack;
  }

  std::string to_string() const { return infinite_ ? "infinite" : std::to_string(value_); }

 private:
  FisherValue(bool inf, double v) : infinite_(inf), value_(v) {}
  bool infinite_;
  double value_;
};

/// rho_theta and d rho_theta / d theta at one parameter value.
struct StateFamilyPoint {
  CMatrix rho;
  CMatrix drho;
};

inline constexpr double kSupportConditionTol = 1e-7;

inline void validate_state_point(const StateFamilyPoint& p) {
  require_hermitian(p.rho, "StateFamilyPoint rho");
  require_hermitian(p.drho, "StateFamilyPoint drho");
  if (p.rho.rows() != p.drho.rows()) throw PreconditionError("StateFamilyPoint: rho and drho differ in size");
  if (std::abs(p.rho.trace().real() - 1.0) > 1e-9) throw PreconditionError("StateFamilyPoint: Tr rho != 1");
  if (std::abs(p.drho.trace().real()) > 1e-8) throw PreconditionError("StateFamilyPoint: Tr drho != 0");
  if (lambda_min(p.rho) < -1e-10) throw PreconditionError("StateFamilyPoint: rho is not PSD");
}

/// ||(I-P) drho (I-P)|| relative to ||drho||; zero when the SLD exists.
inline double sld_support_violation(const StateFamilyPoint& p) {
  const SupportInfo s = support_projector(p.rho);
  const CMatrix q = CMatrix::Identity(p.rho.rows(), p.rho.cols()) - s.projector;
  return op_norm(q * p.drho * q) / std::max(op_norm(p.drho), 1e-12);
}

/// Symmetric logarithmic derivative: drho = (L rho + rho L) / 2.
inline CMatrix sld(const StateFamilyPoint& p, double tol = kDefaultRankTol) {
  validate_state_point(p);
  if (sld_support_violation(p) > kSupportConditionTol)
    throw PreconditionError("sld: (I-P) drho (I-P) != 0, the SLD does not exist");
  const HermitianEig eig = hermitian_eig(p.rho);
  const CMatrix g = eig.vectors.adjoint() * hermitian_part(p.drho) * eig.vectors;
  const double cut = tol * std::max(eig.max(), 0.0);
  const Eigen::Index n = g.rows();
  CMatrix l = CMatrix::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index k = 0; k < n; ++k) {
      const double s = eig.values(j) + eig.values(k);
      if (s > cut) l(j, k) = 2.0 * g(j, k) / s;
    }
  l = hermitian_part(eig.vectors * l * eig.vectors.adjoint());
  const double resid = max_abs(0.5 * (l * p.rho + p.rho * l) - p.drho);
  if (resid > 1e-7 * std::max(1.0, max_abs(p.drho)))
    throw NumericalError("sld: defining equation residual " + std::to_string(resid));
  return l;
}

/// J^S = Tr rho L^2.
inline double sld_fisher(const StateFamilyPoint& p) {
  const CMatrix l = sld(p);
  return std::max(0.0, (p.rho * l * l).trace().real());
}

/// J^R = Tr drho rho^+ drho when range(rho) contains range(drho), else divergent.
inline FisherValue rld_fisher(const StateFamilyPoint& p, double tol = kSupportConditionTol) {
  validate_state_point(p);
  const SupportInfo s = support_projector(p.rho);
  const CMatrix q = CMatrix::Identity(p.rho.rows(), p.rho.cols()) - s.projector;
  if (op_norm(q * p.drho) > tol * std::max(op_norm(p.drho), 1e-12)) return FisherValue::infinite();
  const double j = (p.drho * pinv_on_support(p.rho) * p.drho).trace().real();
  return FisherValue::finite(std::max(0.0, j));
}

/// 4 (<u|H^2|u> - <u|H|u>^2): SLD Fisher information of e^{i theta H}|u>.
inline double pure_unitary_fisher(const CMatrix& h, const CVector& u) {
  require_hermitian(h, "pure_unitary_fisher");
  if (std::abs(u.norm() - 1.0) > 1e-10) throw PreconditionError("pure_unitary_fisher: u must be a unit vector");
  if (u.size() != h.rows()) throw PreconditionError("pure_unitary_fisher: dimension mismatch");
  const CVector hu = h * u;
  const double m1 = u.dot(hu).real();
  const double m2 = hu.squaredNorm();
  return std::max(0.0, 4.0 * (m2 - m1 * m1));
}

/// Range of the Choi matrix contains the range of D^2 (equivalently of D).
inline bool condition_c(const ChoiPair& pair, double tol = kSupportConditionTol) {
  const SupportInfo s = support_projector(pair.rho);
  const CMatrix q = CMatrix::Identity(pair.rho.rows(), pair.rho.cols()) - s.projector;
  return op_norm(q * pair.deriv) <= tol * std::max(op_norm(pair.deriv), 1e-12);
}

struct RldChannelResult {
  FisherValue value = FisherValue::finite(0.0);
  bool condition_c = true;
  CMatrix rld_operator;     // Tr_K D rho^+ D on the reference system (empty when divergent)
  CMatrix witness_input;    // A with conj(A) A^T = (1-mixing) P_top/k + mixing I/d
  double witness_mixing = 0.0;
  count top_multiplicity = 0;
  std::string note;
};

inline constexpr double kWitnessMixing = 1e-6;

/// Channel RLD maximum ||Tr_K D rho^+ D|| and an input attaining it up to the
/// witness mixing. Divergent when the range condition fails.
inline RldChannelResult max_rld_channel(const ChoiPair& pair, double tol = kSupportConditionTol) {
  RldChannelResult r;
  r.condition_c = condition_c(pair, tol);
  if (!r.condition_c) {
    r.value = FisherValue::infinite();
    r.witness_input = maximally_entangled_input(pair.dim_in);
    r.note = "range condition fails; the RLD Fisher information already diverges for the maximally entangled input";
    return r;
  }
  const CMatrix inner = pair.deriv * pinv_on_support(pair.rho) * pair.deriv;
  r.rld_operator = hermitian_part(partial_trace(inner, pair.dim_out, pair.dim_in, Keep::second));
  const HermitianEig eig = hermitian_eig(r.rld_operator);
  const double top = eig.max();
  r.value = FisherValue::finite(std::max(0.0, op_norm(r.rld_operator)));

  // Rank-one inputs only reach the supremum in special cases, so the witness
  // spreads weight over the whole top eigenspace and mixes in I/d.
  const Eigen::Index d = eig.values.size();
  CMatrix p_top = CMatrix::Zero(d, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    if (eig.values(j) >= top - 1e-9 * std::max(std::abs(top), 1e-300)) {
      p_top += eig.vectors.col(j) * eig.vectors.col(j).adjoint();
      ++r.top_multiplicity;
    }
  }
  const double eps = kWitnessMixing;
  const CMatrix target = (1.0 - eps) * p_top / static_cast<double>(r.top_multiplicity) +
                         eps * CMatrix::Identity(d, d) / static_cast<double>(d);
  // A = sqrt(conj(target)) gives conj(A) A^T = target.
  const HermitianEig te = hermitian_eig(CMatrix(target.conjugate()));
  RVector sq = te.values.cwiseMax(0.0).cwiseSqrt();
  r.witness_input = te.vectors * sq.cast<cplx>().asDiagonal() * te.vectors.adjoint();
  r.witness_input /= r.witness_input.norm();
  r.witness_mixing = eps;
  r.note = "witness is full rank: top eigenspace mixed with I/d at weight " + std::to_string(eps) +
           "; the supremum is approached as the mixing goes to zero";
  return r;
}

enum class FisherKind { sld, rld };

inline StateFamilyPoint output_point(const ChoiPair& pair, const CMatrix& a) {
  return {apply_with_ancilla(pair, a), apply_with_ancilla_derivative(pair, a)};
}

/// SLD or RLD Fisher information of the output family for the input |A>><<A|.
inline FisherValue fisher_for_input(const ChoiPair& pair, const CMatrix& a, FisherKind which) {
  const StateFamilyPoint p = output_point(pair, a);
  if (which == FisherKind::sld) return FisherValue::finite(sld_fisher(p));
  return rld_fisher(p);
}

// ---------------------------------------------------------------------------
// Input optimization

struct SldOptimizerOptions {
  count restarts = 16;
  count steps = 200;
  std::uint64_t seed = 0;
  double fd_step = 1e-6;
  count ref_dim = 0;                     // 0: same as the input dimension
  std::optional<CMatrix> initial_input;  // used as the start of restart 0
};

struct SldOptimum {
  double j_best = 0.0;
  CMatrix a_best;
  count best_restart = 0;
  count evaluations = 0;
};

namespace detail {

inline CMatrix params_to_input(const Eigen::VectorXd& x, count rows, count cols) {
  CMatrix a(rows, cols);
  for (count i = 0; i < rows * cols; ++i)
    a(static_cast<Eigen::Index>(i / cols), static_cast<Eigen::Index>(i % cols)) = cplx(x(2 * i), x(2 * i + 1));
  return a;
}

inline Eigen::VectorXd input_to_params(const CMatrix& a) {
  const count cols = static_cast<count>(a.cols());
  Eigen::VectorXd x(2 * a.size());
  for (count i = 0; i < static_cast<count>(a.size()); ++i) {
    const cplx z = a(static_cast<Eigen::Index>(i / cols), static_cast<Eigen::Index>(i % cols));
    x(2 * i) = z.real();
    x(2 * i + 1) = z.imag();
  }
  return x;
}

}  // namespace detail

/// Projected gradient ascent of the SLD Fisher information over pure inputs
/// |A>> on the unit sphere. The result is an evaluated value, hence a lower
/// bound on the channel SLD maximum. Deterministic given the options.
inline SldOptimum optimize_sld_input(const ChoiPair& pair, const SldOptimizerOptions& opts = {}) {
  const count rows = pair.dim_in;
  const count cols = opts.ref_dim == 0 ? pair.dim_in : opts.ref_dim;
  const count restarts = std::max<count>(1, opts.restarts);

  auto objective = [&](const Eigen::VectorXd& x) {
    const CMatrix a = detail::params_to_input(x, rows, cols);
    try {
      return sld_fisher(output_point(pair, a));
    } catch (const PreconditionError&) {
      return -std::numeric_limits<double>::infinity();
    }
  };

  std::vector<SldOptimum> results(restarts);
  parallel_for(restarts, [&](std::size_t r) {
    StreamRng rng(opts.seed, r);
    Eigen::VectorXd x(2 * rows * cols);
    if (r == 0 && opts.initial_input) {
      if (static_cast<count>(opts.initial_input->rows()) != rows || static_cast<count>(opts.initial_input->cols()) != cols)
        throw PreconditionError("optimize_sld_input: initial input has wrong shape");
      x = detail::input_to_params(*opts.initial_input);
    } else {
      for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = rng.normal();
    }
    x.normalize();
    count evals = 1;
    double fx = objective(x);
    double eta = 0.3;
    const double h = opts.fd_step;
    for (count s = 0; s < opts.steps && eta > 1e-12; ++s) {
      Eigen::VectorXd g(x.size());
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        Eigen::VectorXd xp = x, xm = x;
        xp(i) += h;
        xm(i) -= h;
        g(i) = (objective(xp.normalized()) - objective(xm.normalized())) / (2.0 * h);
      }
      evals += 2 * static_cast<count>(x.size());
      if (!g.allFinite()) break;
      g -= g.dot(x) * x;
      const double gn = g.norm();
      if (gn < 1e-12) break;
      while (eta > 1e-12) {
        const Eigen::VectorXd y = (x + eta * g / gn).normalized();
        const double fy = objective(y);
        ++evals;
        if (fy > fx) {
          x = y;
          fx = fy;
          eta = std::min(1.0, 2.0 * eta);
          break;
        }
        eta *= 0.5;
      }
    }
    results[r] = {fx, detail::params_to_input(x, rows, cols), r, evals};
  });

  SldOptimum best = results.front();
  count total = 0;
  for (const auto& r : results) {
    total += r.evaluations;
    if (r.j_best > best.j_best) best = r;  // strict: ties keep the lowest restart index
  }
  best.evaluations = total;
  if (!std::isfinite(best.j_best)) throw NumericalError("optimize_sld_input: no admissible input found");
  return best;
}

// ---------------------------------------------------------------------------
// Additivity

struct AdditivityReport {
  double j_first = 0.0;
  double j_second = 0.0;
  double j_product = 0.0;
  double residual = 0.0;
};

/// |J^R[L (x) M] - J^R[L] - J^R[M]| at theta; both factors must satisfy the range condition.
inline AdditivityReport additivity_residual(const ChannelFamily& f1, const ChannelFamily& f2, double theta,
                                            double tol = kSupportConditionTol) {
  const RldChannelResult r1 = max_rld_channel(choi_pair(f1, theta), tol);
  const RldChannelResult r2 = max_rld_channel(choi_pair(f2, theta), tol);
  if (!r1.condition_c || !r2.condition_c)
    throw PreconditionError("additivity_residual: range condition fails on a factor");
  const RldChannelResult r12 = max_rld_channel(choi_pair(tensor_families(f1, f2), theta), tol);
  if (!r12.condition_c) throw NumericalError("additivity_residual: product family lost the range condition");
  AdditivityReport rep;
  rep.j_first = r1.value.value();
  rep.j_second = r2.value.value();
  rep.j_product = r12.value.value();
  rep.residual = std::abs(rep.j_product - rep.j_first - rep.j_second);
  return rep;
}

struct SuperadditivityReport {
  double j_n = 0.0;
  double j_m = 0.0;
  double j_sum_copies = 0.0;  // optimizer value on n + m copies
  double slack = 2e-3;
  bool holds = false;
};

/// Checks J^S[L^(n+m)] >= J^S[L^n] + J^S[L^m] - slack using optimizer lower
/// bounds; the n + m search is warm-started from the product of the witnesses.
inline SuperadditivityReport superadditivity_check(const ChannelFamily& f, double theta, count n, count m,
                                                   SldOptimizerOptions opts = {}) {
  if (n == 0 || m == 0) throw PreconditionError("superadditivity_check: n, m must be >= 1");
  const std::uint64_t seed = opts.seed;
  auto solve = [&](count copies, std::optional<CMatrix> init, std::uint64_t s) {
    SldOptimizerOptions o = opts;
    o.ref_dim = 0;
    o.seed = s;
    o.initial_input = std::move(init);
    return optimize_sld_input(choi_pair(tensor_power(f, copies), theta), o);
  };
  const SldOptimum on = solve(n, std::nullopt, seed);
  const SldOptimum om = (m == n) ? on : solve(m, std::nullopt, seed + 1);
  const SldOptimum onm = solve(n + m, CMatrix(kron(on.a_best, om.a_best)), seed + 2);
  SuperadditivityReport rep;
  rep.j_n = on.j_best;
  rep.j_m = om.j_best;
  rep.j_sum_copies = onm.j_best;
  rep.holds = rep.j_sum_copies >= rep.j_n + rep.j_m - rep.slack;
  return rep;
}

// ---------------------------------------------------------------------------
// Shift-mixture example

struct ShiftMixtureReport {
  double effective = 0.0;
  std::optional<double> full_space;  // smallest conditional-state value over outcomes
  double max_deviation = 0.0;        // max |full - effective| over outcomes
  count outcomes_checked = 0;
};

/// n^2 (h_a - h_b)^2 from the effective two-level pure family; for small
/// instances also rebuilds every post-measurement state on K^n (x) R and checks it.
inline ShiftMixtureReport shift_mixture_stage_fisher(count n, const std::vector<double>& h_diag,
                                                     const std::vector<double>& probs, bool full_space = true) {
  if (n == 0) throw PreconditionError("shift_mixture_stage_fisher: n must be >= 1");
  const count d = h_diag.size();
  if (d < 2) throw PreconditionError("shift_mixture_stage_fisher: need d >= 2");
  const auto a_it = std::max_element(h_diag.begin(), h_diag.end());
  const auto b_it = std::min_element(h_diag.begin(), h_diag.end());
  const count ia = static_cast<count>(a_it - h_diag.begin());
  const count ib = static_cast<count>(b_it - h_diag.begin());
  const double nn = static_cast<double>(n);

  ShiftMixtureReport rep;
  CMatrix heff = CMatrix::Zero(2, 2);
  heff(0, 0) = nn * *a_it;
  heff(1, 1) = nn * *b_it;
  CVector plus(2);
  plus << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
  rep.effective = pure_unitary_fisher(heff, plus);

  count dn = 1;
  for (count k = 0; k < n; ++k) dn *= d;
  if (!full_space || dn * dn > kMaxChoiDim) return rep;
  if (ia == ib) throw PreconditionError("shift_mixture_stage_fisher: H has a single eigenvalue");

  ParamSpace periodic{-std::numbers::pi, std::numbers::pi, std::nullopt};
  const ChannelFamily fam = tensor_power(make_shift_mixture_family(probs, h_diag, periodic), n);
  const ChoiPair pair = choi_pair(fam, 0.3);

  auto repeated = [&](count digit) {
    count idx = 0;
    for (count k = 0; k < n; ++k) idx = idx * d + digit;
    return idx;
  };
  CMatrix input = CMatrix::Zero(dn, 2);
  input(repeated(ia), 0) = 1.0 / std::sqrt(2.0);
  input(repeated(ib), 1) = 1.0 / std::sqrt(2.0);
  const CMatrix out = apply_with_ancilla(pair, input);
  const CMatrix dout = apply_with_ancilla_derivative(pair, input);

  double smallest = std::numeric_limits<double>::infinity();
  std::vector<count> digits(n, 0);
  for (count outcome = 0; outcome < dn; ++outcome) {
    count rem = outcome;
    for (count k = n; k-- > 0;) {
      digits[k] = rem % d;
      rem /= d;
    }
    auto shifted = [&](count base) {
      count idx = 0;
      for (count k = 0; k < n; ++k) idx = idx * d + (digits[k] + base) % d;
      return idx;
    };
    CMatrix proj = CMatrix::Zero(2 * dn, 2 * dn);
    proj(shifted(ia) * 2 + 0, shifted(ia) * 2 + 0) = 1.0;
    proj(shifted(ib) * 2 + 1, shifted(ib) * 2 + 1) = 1.0;
    const CMatrix post = proj * out * proj;
    const double p = post.trace().real();
    if (p < 1e-12) continue;
    const CMatrix dpost = proj * dout * proj;
    const double dp = dpost.trace().real();
    StateFamilyPoint pt{post / p, dpost / p - post * (dp / (p * p))};
    const double j = sld_fisher(pt);
    smallest = std::min(smallest, j);
    rep.max_deviation = std::max(rep.max_deviation, std::abs(j - rep.effective));
    ++rep.outcomes_checked;
  }
  if (rep.outcomes_checked > 0) rep.full_space = smallest;
  return rep;
}

}  // namespace qest

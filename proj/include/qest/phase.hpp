#pragma once

// Phase estimation on n uses of a qubit rotation: noon-state statistics, the
// covariant Bayes/mini-max risk for the circular squared error, and the
// estimators used to compare it with the Cramer-Rao value 1/n^2.

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "qest/channel.hpp"
#include "qest/estimate.hpp"
#include "qest/linalg.hpp"
#include "qest/parallel.hpp"

namespace qest {

inline constexpr double kPi = std::numbers::pi;

/// Periodic parameter space used by every phase family here.
inline ParamSpace circle() { return ParamSpace{-kPi, kPi, 2.0 * kPi}; }

/// min_k (u + 2 pi k)^2
inline double circular_cost(double u) {
  u = std::remainder(u, 2.0 * kPi);
  return u * u;
}

// ---------------------------------------------------------------------------
// Noon states

inline void require_noon_n(count n) {
  if (n < 1 || n > 20) throw PreconditionError("noon: n must lie in [1, 20]");
}

/// (|0...0> + |1...1>) / sqrt 2 on (C^2)^{(x) n}.
inline CVector noon_state(count n) {
  require_noon_n(n);
  const Eigen::Index dim = Eigen::Index{1} << n;
  CVector v = CVector::Zero(dim);
  v(0) = v(dim - 1) = 1.0 / std::sqrt(2.0);
  return v;
}

/// cos^2(n theta / 2): probability of the "+" outcome of the parity-type measurement.
inline double noon_outcome_prob(count n, double theta) {
  const double c = std::cos(0.5 * static_cast<double>(n) * theta);
  return c * c;
}

/// Same probability by the Born rule: apply (x)_j e^{i theta H} with
/// H = diag(1/2, -1/2) to the noon state and project on the noon state.
inline double noon_outcome_prob_born(count n, double theta) {
  require_noon_n(n);
  if (n > 12) throw PreconditionError("noon_outcome_prob_born: n must be <= 12");
  CMatrix u1 = CMatrix::Zero(2, 2);
  u1(0, 0) = std::polar(1.0, 0.5 * theta);
  u1(1, 1) = std::polar(1.0, -0.5 * theta);
  CMatrix u = u1;
  for (count j = 1; j < n; ++j) u = kron(u, u1);
  const CVector psi = noon_state(n);
  const cplx amp = psi.dot(u * psi);
  return std::norm(amp);
}

/// (dp/dtheta)^2 / (p (1 - p)); undefined where p is 0 or 1.
inline double noon_classical_fisher(count n, double theta) {
  const double p = noon_outcome_prob(n, theta);
  if (p < 1e-12 || 1.0 - p < 1e-12) throw PreconditionError("noon_classical_fisher: degenerate theta (p is 0 or 1)");
  const double x = 0.5 * static_cast<double>(n) * theta;
  const double c = std::cos(x), s = std::sin(x);
  const double dp = -static_cast<double>(n) * s * c;
  // 1 - p as sin^2 avoids cancellation near p = 1.
  return dp * dp / (c * c * s * s);
}

/// (theta, p) samples over [0, 2 pi).
inline std::vector<std::pair<double, double>> noon_probability_curve(count n, count points) {
  if (points == 0) throw PreconditionError("noon_probability_curve: points must be >= 1");
  std::vector<std::pair<double, double>> curve(points);
  for (count j = 0; j < points; ++j) {
    const double t = 2.0 * kPi * static_cast<double>(j) / static_cast<double>(points);
    curve[j] = {t, noon_outcome_prob(n, t)};
  }
  return curve;
}

// ---------------------------------------------------------------------------
// Covariant mini-max risk

/// (1 / 2 pi) int_{-pi}^{pi} u^2 e^{i m u} du
inline double cost_fourier_coefficient(long m) {
  if (m == 0) return kPi * kPi / 3.0;
  const double mm = static_cast<double>(m);
  return (m % 2 == 0 ? 2.0 : -2.0) / (mm * mm);
}

struct CovariantRiskResult {
  count n = 0;
  double risk = 0.0;
  RVector amplitudes;  // unit norm, first entry non-negative
  std::string method;
};

inline constexpr count kMaxCovariantN = 5000;
inline constexpr count kDenseCovariantLimit = 400;

namespace detail {

inline Eigen::MatrixXd cost_toeplitz(count n) {
  const auto dim = static_cast<Eigen::Index>(n + 1);
  Eigen::MatrixXd m(dim, dim);
  for (Eigen::Index j = 0; j < dim; ++j)
    for (Eigen::Index k = 0; k < dim; ++k) m(j, k) = cost_fourier_coefficient(static_cast<long>(j - k));
  return m;
}

inline RVector toeplitz_apply(const RVector& col, const RVector& x) {
  const Eigen::Index n = x.size();
  RVector y = RVector::Zero(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double s = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) s += col(std::abs(j - k)) * x(k);
    y(j) = s;
  }
  return y;
}

/// Solves T x = b for a symmetric positive definite Toeplitz T with first column `col` (Levinson).
inline RVector levinson_solve(const RVector& col, const RVector& b) {
  const Eigen::Index n = b.size();
  RVector f(n), bk(n), x(n);
  f.setZero();
  x.setZero();
  f(0) = 1.0 / col(0);
  x(0) = b(0) / col(0);
  for (Eigen::Index k = 1; k < n; ++k) {
    // Forward vector f (length k) solves T_k f = e_1; symmetric T gives backward = reverse(f).
    double ef = 0.0;
    for (Eigen::Index i = 0; i < k; ++i) ef += col(k - i) * f(i);
    const double denom = 1.0 - ef * ef;
    if (!(denom > 0.0)) throw NumericalError("levinson_solve: matrix is not positive definite");
    RVector nf(k + 1);
    nf(k) = 0.0;
    for (Eigen::Index i = 0; i < k; ++i) nf(i) = f(i);
    RVector nb(k + 1);
    nb(0) = 0.0;
    for (Eigen::Index i = 0; i < k; ++i) nb(i + 1) = f(k - 1 - i);
    const double s = 1.0 / denom;
    for (Eigen::Index i = 0; i <= k; ++i) f(i) = s * (nf(i) - ef * nb(i));
    // Backward vector of order k+1 is reverse(f).
    double ex = 0.0;
    for (Eigen::Index i = 0; i < k; ++i) ex += col(k - i) * x(i);
    const double c = b(k) - ex;
    for (Eigen::Index i = 0; i <= k; ++i) x(i) += c * f(k - i);
  }
  return x;
}

inline RVector normalize_sign(RVector v) {
  v.normalize();
  if (v.sum() < 0.0) v = -v;
  return v;
}

}  // namespace detail

/// Smallest eigenvalue of the cost Toeplitz matrix M_jk = a_{j-k} by dense
/// eigendecomposition.
inline CovariantRiskResult covariant_minimax_risk_dense(count n) {
  if (n > kMaxCovariantN) throw PreconditionError("covariant_minimax_risk: n must be <= 5000");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(detail::cost_toeplitz(n));
  if (es.info() != Eigen::Success) throw NumericalError("covariant_minimax_risk: eigensolver failed");
  return {n, es.eigenvalues()(0), detail::normalize_sign(es.eigenvectors().col(0)), "dense"};
}

/// Same quantity by inverse iteration with Levinson solves: O(n^2) memory-free.
inline CovariantRiskResult covariant_minimax_risk_iterative(count n, double tol = 1e-6, count max_iter = 200) {
  if (n > kMaxCovariantN) throw PreconditionError("covariant_minimax_risk: n must be <= 5000");
  const auto dim = static_cast<Eigen::Index>(n + 1);
  RVector col(dim);
  for (Eigen::Index k = 0; k < dim; ++k) col(k) = cost_fourier_coefficient(static_cast<long>(k));
  // Start from a smooth bump, close to the optimal amplitude profile.
  RVector x(dim);
  for (Eigen::Index k = 0; k < dim; ++k) x(k) = std::sin(kPi * (static_cast<double>(k) + 1.0) / (static_cast<double>(dim) + 1.0));
  x.normalize();
  double lambda = 0.0;
  for (count it = 0; it < max_iter; ++it) {
    RVector y = detail::levinson_solve(col, x);
    y.normalize();
    const RVector my = detail::toeplitz_apply(col, y);
    const double next = y.dot(my);
    // The Rayleigh quotient has a round-off floor near 1e-11 relative, so stop on the residual.
    const double resid = (my - next * y).norm();
    x = y;
    lambda = next;
    if (it >= 2 && resid <= tol * lambda) return {n, lambda, detail::normalize_sign(x), "inverse-iteration"};
  }
  throw NumericalError("covariant_minimax_risk: inverse iteration did not converge");
}

/// Covariant mini-max (= uniform-prior Bayes) risk of the circular squared
/// error for n uses and its optimal mode amplitudes.
inline CovariantRiskResult covariant_minimax_risk(count n) {
  return n <= kDenseCovariantLimit ? covariant_minimax_risk_dense(n) : covariant_minimax_risk_iterative(n);
}

struct PhaseBoundsReport {
  count n = 0;
  double cramer_rao = 0.0;  // 1 / J^S with J^S = n^2
  double covariant = 0.0;
  double ratio = 0.0;       // n^2 * covariant
};

inline PhaseBoundsReport phase_bounds_report(count n) {
  if (n < 1) throw PreconditionError("phase_bounds_report: n must be >= 1");
  const double nn = static_cast<double>(n);
  PhaseBoundsReport r;
  r.n = n;
  r.cramer_rao = 1.0 / (nn * nn);
  r.covariant = covariant_minimax_risk(n).risk;
  r.ratio = nn * nn * r.covariant;
  return r;
}

// ---------------------------------------------------------------------------
// Aliasing

struct AliasPeak {
  double location = 0.0;   // alias point +-theta_hat + 2 pi j / n
  double peak = 0.0;       // grid argmax inside the alias cell
  double mass = 0.0;       // posterior mass of the alias cell
  double distance_to_true_alias = 0.0;
};

struct AmbiguityReport {
  count n = 0;
  count k = 0;
  count successes = 0;
  std::vector<double> grid;
  std::vector<double> posterior;
  double theta_hat = 0.0;       // global posterior maximum (lowest index on ties)
  std::vector<AliasPeak> peaks;
  double mass_spread = 0.0;     // (max - min) / mean over alias cells
  double max_peak_offset = 0.0; // max |peak - alias location|, circular
};

namespace detail {

inline double circ_dist(double a, double b) { return std::abs(std::remainder(a - b, 2.0 * kPi)); }

}  // namespace detail

/// Posterior over a uniform grid on [0, 2 pi) after k noon measurements at
/// theta_true, with alias-cell masses around +-theta_hat + 2 pi j / n.
inline AmbiguityReport ambiguity_posterior(count n, count k, double theta_true, std::uint64_t seed, count grid_size) {
  require_noon_n(n);
  if (grid_size < 4 * n) throw PreconditionError("ambiguity_posterior: grid_size must be >= 4 n");
  AmbiguityReport r;
  r.n = n;
  r.k = k;
  const double p_true = noon_outcome_prob(n, theta_true);
  for (count i = 0; i < k; ++i) {
    StreamRng rng(seed, i);
    if (rng.uniform() < p_true) ++r.successes;
  }
  r.grid.resize(grid_size);
  std::vector<double> ll(grid_size);
  double best = -std::numeric_limits<double>::infinity();
  for (count g = 0; g < grid_size; ++g) {
    r.grid[g] = 2.0 * kPi * static_cast<double>(g) / static_cast<double>(grid_size);
    const double p = noon_outcome_prob(n, r.grid[g]);
    const double s = static_cast<double>(r.successes), f = static_cast<double>(k - r.successes);
    double v = 0.0;
    if (s > 0) v += p > 0.0 ? s * std::log(p) : -std::numeric_limits<double>::infinity();
    if (f > 0) v += p < 1.0 ? f * std::log(1.0 - p) : -std::numeric_limits<double>::infinity();
    ll[g] = v;
    if (v > best) {
      best = v;
      r.theta_hat = r.grid[g];
    }
  }
  r.posterior.resize(grid_size);
  double z = 0.0;
  for (count g = 0; g < grid_size; ++g) z += r.posterior[g] = std::exp(ll[g] - best);
  for (double& v : r.posterior) v /= z;

  // Alias points of the top peak; mirror images coincide at symmetric points.
  std::vector<double> aliases;
  const double step = 2.0 * kPi / static_cast<double>(n);
  for (count j = 0; j < n; ++j) {
    for (double sgn : {1.0, -1.0}) {
      const double a = std::fmod(sgn * r.theta_hat + step * static_cast<double>(j) + 4.0 * kPi, 2.0 * kPi);
      bool dup = false;
      for (double b : aliases) dup = dup || detail::circ_dist(a, b) < 1e-9;
      if (!dup) aliases.push_back(a);
    }
  }
  std::sort(aliases.begin(), aliases.end());
  r.peaks.resize(aliases.size());
  std::vector<double> peak_val(aliases.size(), -1.0);
  for (std::size_t a = 0; a < aliases.size(); ++a) r.peaks[a].location = aliases[a];
  for (count g = 0; g < grid_size; ++g) {
    // Voronoi cell membership; points equidistant to two aliases split their mass.
    double dmin = std::numeric_limits<double>::infinity();
    for (double a : aliases) dmin = std::min(dmin, detail::circ_dist(r.grid[g], a));
    std::vector<std::size_t> owners;
    for (std::size_t a = 0; a < aliases.size(); ++a)
      if (detail::circ_dist(r.grid[g], aliases[a]) <= dmin + 1e-12) owners.push_back(a);
    for (std::size_t a : owners) {
      r.peaks[a].mass += r.posterior[g] / static_cast<double>(owners.size());
      if (r.posterior[g] > peak_val[a]) {
        peak_val[a] = r.posterior[g];
        r.peaks[a].peak = r.grid[g];
      }
    }
  }
  double mn = std::numeric_limits<double>::infinity(), mx = 0.0, mean = 0.0;
  for (auto& pk : r.peaks) {
    mn = std::min(mn, pk.mass);
    mx = std::max(mx, pk.mass);
    mean += pk.mass / static_cast<double>(r.peaks.size());
    r.max_peak_offset = std::max(r.max_peak_offset, detail::circ_dist(pk.peak, pk.location));
    double dt = std::numeric_limits<double>::infinity();
    for (count j = 0; j < n; ++j)
      for (double sgn : {1.0, -1.0})
        dt = std::min(dt, detail::circ_dist(pk.location, sgn * theta_true + step * static_cast<double>(j)));
    pk.distance_to_true_alias = dt;
  }
  r.mass_spread = mean > 0.0 ? (mx - mn) / mean : 0.0;
  return r;
}

// ---------------------------------------------------------------------------
// Estimators on the phase model

/// Single use: e^{i theta diag(0, 1)} on a qubit, period 2 pi.
inline ChannelFamily make_phase_qubit_family() {
  CMatrix h = CMatrix::Zero(2, 2);
  h(1, 1) = 1.0;
  return make_unitary_family(h, circle()).with_label("phase-qubit");
}

/// n uses restricted to the symmetric subspace: e^{i theta diag(0, 1, ..., n)}.
inline ChannelFamily make_phase_mode_family(count n) {
  if (n > kMaxCovariantN) throw PreconditionError("make_phase_mode_family: n too large");
  CMatrix h = CMatrix::Zero(static_cast<Eigen::Index>(n + 1), static_cast<Eigen::Index>(n + 1));
  for (count k = 0; k <= n; ++k) h(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)) = static_cast<double>(k);
  return make_unitary_family(h, circle()).with_label("phase-modes-" + std::to_string(n));
}

/// Covariant estimator on the mode family: input sum_k c_k |k>, POVM elements
/// |eta_g><eta_g| / G with (eta_g)_k = e^{i k t_g}, t_g = -pi + 2 pi g / G.
inline Estimator make_covariant_estimator(count n, count grid_size, const RVector& amplitudes) {
  if (grid_size < 8 * (n + 1)) throw PreconditionError("covariant estimator: grid_size must be >= 8 (n + 1)");
  if (static_cast<count>(amplitudes.size()) != n + 1) throw PreconditionError("covariant estimator: amplitude length != n + 1");
  const auto dim = static_cast<Eigen::Index>(n + 1);
  Estimator e;
  e.input = amplitudes.cast<cplx>().normalized();
  e.ref_dim = 1;
  e.copies = n;
  e.label = "covariant";
  const double gg = static_cast<double>(grid_size);
  for (count g = 0; g < grid_size; ++g) {
    const double t = -kPi + 2.0 * kPi * static_cast<double>(g) / gg;
    CVector eta(dim);
    for (Eigen::Index k = 0; k < dim; ++k) eta(k) = std::polar(1.0, static_cast<double>(k) * t);
    e.povm.push_back(eta * eta.adjoint() / gg);
    e.labels.push_back(t);
  }
  return e;
}

inline Estimator make_covariant_estimator(count n, count grid_size) {
  return make_covariant_estimator(n, grid_size, covariant_minimax_risk(n).amplitudes);
}

/// Exact risk of the discretized covariant estimator at theta.
inline double covariant_discrete_risk(count n, const RVector& amplitudes, double theta, count grid_size) {
  const double gg = static_cast<double>(grid_size);
  double risk = 0.0;
  for (count g = 0; g < grid_size; ++g) {
    const double t = -kPi + 2.0 * kPi * static_cast<double>(g) / gg;
    cplx amp = 0.0;
    for (count k = 0; k <= n; ++k) amp += amplitudes(static_cast<Eigen::Index>(k)) * std::polar(1.0, static_cast<double>(k) * (theta - t));
    risk += std::norm(amp) / gg * circular_cost(t - theta);
  }
  return risk;
}

struct CovariantSimReport {
  MseEstimate mse;
  double continuum_risk = 0.0;   // lambda_min of the cost Toeplitz matrix
  double discrete_risk = 0.0;    // exact expectation for the finite POVM grid
};

/// Monte Carlo circular MSE of the discretized covariant estimator.
inline CovariantSimReport simulate_covariant_estimator(count n, double theta, count trials, count grid_size,
                                                       std::uint64_t seed) {
  if (n > 64) throw PreconditionError("simulate_covariant_estimator: n must be <= 64");
  if (trials == 0) throw PreconditionError("simulate_covariant_estimator: trials must be >= 1");
  const CovariantRiskResult opt = covariant_minimax_risk(n);
  const Estimator e = make_covariant_estimator(n, grid_size, opt.amplitudes);
  const ChannelFamily fam = make_phase_mode_family(n);
  validate_estimator(fam, e);
  CovariantSimReport r;
  r.mse = simulate_mse(fam, theta, e, trials, seed);
  r.continuum_risk = opt.risk;
  r.discrete_risk = covariant_discrete_risk(n, opt.amplitudes, theta, grid_size);
  return r;
}

/// Noon input on n qubits with the binary parity-type POVM, labels {0, pi / n}.
struct NoonSetup {
  ChannelFamily family;
  Estimator estimator;
};

inline NoonSetup make_noon_estimator(count n) {
  require_noon_n(n);
  if (n > 10) throw PreconditionError("make_noon_estimator: n must be <= 10");
  CMatrix h = CMatrix::Zero(2, 2);
  h(0, 0) = 0.5;
  h(1, 1) = -0.5;
  ChannelFamily fam = tensor_power(make_unitary_family(h, circle()), n).with_label("noon-" + std::to_string(n));
  const CVector psi = noon_state(n);
  Estimator e;
  e.input = psi;
  e.ref_dim = 1;
  e.copies = n;
  e.label = "noon";
  const CMatrix proj = psi * psi.adjoint();
  e.povm = {proj, CMatrix(CMatrix::Identity(proj.rows(), proj.cols()) - proj)};
  e.labels = {0.0, kPi / static_cast<double>(n)};
  return {std::move(fam), std::move(e)};
}

// ---------------------------------------------------------------------------
// Two-step plans

/// Stage 1 on one qubit use: input |+>, POVM {|+-x><+-x| / 2, |+-y><+-y| / 2}.
inline Estimator make_phase_stage1_estimator() {
  Estimator e;
  e.input = CMatrix::Constant(2, 1, 1.0 / std::sqrt(2.0));
  e.ref_dim = 1;
  e.copies = 1;
  e.label = "xy-stage1";
  const double s = 1.0 / std::sqrt(2.0);
  const cplx i(0.0, 1.0);
  std::vector<CVector> vs;
  for (cplx ph : {cplx(1.0), cplx(-1.0), i, -i}) {
    CVector v(2);
    v << s, s * ph;
    vs.push_back(v);
  }
  for (const auto& v : vs) e.povm.push_back(0.5 * v * v.adjoint());
  e.labels = {0.0, kPi, kPi / 2.0, -kPi / 2.0};
  return e;
}

/// Stage 2: the covariant estimator on all remaining uses as a single block.
inline StageTwoBuilder make_phase_stage2_builder(count grid_factor = 8) {
  return [grid_factor](double, count remaining) {
    StageTwoPlan plan{make_phase_mode_family(remaining), make_covariant_estimator(remaining, grid_factor * (remaining + 1)),
                      remaining, std::nullopt};
    return plan;
  };
}

}  // namespace qest

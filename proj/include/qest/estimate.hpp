#pragma once

// Estimation strategies: an input on H (x) R plus a labelled POVM on the
// output. Outcome distributions follow the Born rule; every Monte Carlo
// routine draws trial t from StreamRng(seed, t), so results do not depend on
// scheduling or thread count.

#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "qest/channel.hpp"
#include "qest/fisher.hpp"
#include "qest/linalg.hpp"
#include "qest/parallel.hpp"

namespace qest {

/// Input state plus labelled POVM. A pure input is |A>> with A of shape
/// dim_in x ref_dim; a density input is a state on H (x) R.
struct Estimator {
  CMatrix input;
  bool density_input = false;
  count ref_dim = 1;
  std::vector<CMatrix> povm;
  std::vector<double> labels;
  count copies = 1;  // channel uses consumed; the n in n^alpha scalings
  std::string label;
};

struct MseEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  count trials = 0;
  double theta = 0.0;
  std::uint64_t seed = 0;
};

/// Squared error, circular when the parameter space declares a period.
inline double squared_error(const ParamSpace& space, double estimate, double theta) {
  double u = estimate - theta;
  if (space.period) {
    const double p = *space.period;
    u -= p * std::round(u / p);
  }
  return u * u;
}

namespace detail {

inline void check_povm_completeness(const std::vector<CMatrix>& povm, Eigen::Index dim) {
  if (povm.empty()) throw PreconditionError("Estimator: empty POVM");
  CMatrix total = CMatrix::Zero(dim, dim);
  for (const auto& m : povm) {
    if (m.rows() != dim || m.cols() != dim) throw PreconditionError("Estimator: POVM element has the wrong size");
    total += m;
  }
  if (max_abs(total - CMatrix::Identity(dim, dim)) > 1e-8)
    throw PreconditionError("Estimator: POVM elements do not sum to the identity");
}

}  // namespace detail

/// Full check of an estimator against a family: shapes, normalization, POVM
/// completeness and positivity, finite labels.
inline void validate_estimator(const ChannelFamily& f, const Estimator& e) {
  if (e.povm.size() != e.labels.size()) throw PreconditionError("Estimator: one label per POVM element required");
  for (double l : e.labels)
    if (!std::isfinite(l)) throw PreconditionError("Estimator: non-finite label");
  if (e.density_input) {
    const auto n = static_cast<Eigen::Index>(f.dim_in() * e.ref_dim);
    if (e.input.rows() != n || e.input.cols() != n) throw PreconditionError("Estimator: density input has the wrong size");
    require_hermitian(e.input, "Estimator density input");
    if (std::abs(e.input.trace().real() - 1.0) > 1e-9) throw PreconditionError("Estimator: density input trace != 1");
    if (lambda_min(e.input) < -1e-10) throw PreconditionError("Estimator: density input is not PSD");
  } else {
    if (static_cast<count>(e.input.rows()) != f.dim_in() || static_cast<count>(e.input.cols()) != e.ref_dim)
      throw PreconditionError("Estimator: pure input must be dim_in x ref_dim");
    if (std::abs(e.input.squaredNorm() - 1.0) > 1e-9) throw PreconditionError("Estimator: Tr A^dag A != 1");
  }
  const auto dim = static_cast<Eigen::Index>(f.dim_out() * e.ref_dim);
  detail::check_povm_completeness(e.povm, dim);
  for (const auto& m : e.povm) {
    require_hermitian(m, "Estimator POVM element");
    if (lambda_min(m) < -1e-10) throw PreconditionError("Estimator: POVM element is not PSD");
  }
}

/// Output state on K (x) R for the estimator's input.
inline CMatrix estimator_output(const ChannelFamily& f, double theta, const Estimator& e) {
  const KrausList kraus = f.kraus_at(theta);
  const auto dout = static_cast<Eigen::Index>(f.dim_out());
  const auto r = static_cast<Eigen::Index>(e.ref_dim);
  CMatrix out = CMatrix::Zero(dout * r, dout * r);
  if (e.density_input) {
    const CMatrix id_r = CMatrix::Identity(r, r);
    for (const auto& k : kraus) {
      const CMatrix big = kron(k, id_r);
      out.noalias() += big * e.input * big.adjoint();
    }
  } else {
    for (const auto& k : kraus) {
      const CVector v = vec_ket(k * e.input);  // (F (x) I)|A>> = |F A>>
      out.noalias() += v * v.adjoint();
    }
  }
  return out;
}

/// Born-rule probabilities. Tiny negatives are clipped, then renormalized.
inline std::vector<double> outcome_distribution(const ChannelFamily& f, double theta, const Estimator& e) {
  const CMatrix out = estimator_output(f, theta, e);
  if (e.povm.size() != e.labels.size()) throw PreconditionError("outcome_distribution: label count mismatch");
  detail::check_povm_completeness(e.povm, out.rows());
  std::vector<double> p(e.povm.size());
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    // Tr(out M) = sum_{jk} out_jk M_kj
    double v = out.cwiseProduct(e.povm[i].transpose()).sum().real();
    if (v < -1e-10) throw NumericalError("outcome_distribution: negative probability " + std::to_string(v));
    p[i] = std::max(v, 0.0);
    total += p[i];
  }
  if (std::abs(total - 1.0) > 1e-8) throw NumericalError("outcome_distribution: probabilities sum to " + std::to_string(total));
  for (double& v : p) v /= total;
  return p;
}

/// Central-difference classical Fisher information; outcomes with p < 1e-12 are skipped.
inline double classical_fisher(const ChannelFamily& f, double theta, const Estimator& e, double fd_step = 1e-6) {
  const ParamSpace& s = f.param_space();
  if (!s.period && (theta - fd_step < s.lo || theta + fd_step > s.hi))
    throw PreconditionError("classical_fisher: finite-difference window leaves the parameter space");
  const std::vector<double> p = outcome_distribution(f, theta, e);
  const std::vector<double> pp = outcome_distribution(f, theta + fd_step, e);
  const std::vector<double> pm = outcome_distribution(f, theta - fd_step, e);
  double j = 0.0;
  bool any = false;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] < 1e-12) continue;
    any = true;
    const double dp = (pp[i] - pm[i]) / (2.0 * fd_step);
    j += dp * dp / p[i];
  }
  if (!any) throw NumericalError("classical_fisher: degenerate distribution");
  return j;
}

namespace detail {

inline MseEstimate summarize(const std::vector<double>& sq, double theta, std::uint64_t seed) {
  MseEstimate m;
  m.trials = sq.size();
  m.theta = theta;
  m.seed = seed;
  double sum = 0.0;
  for (double v : sq) sum += v;
  m.mean = sum / static_cast<double>(sq.size());
  if (sq.size() > 1) {
    double ss = 0.0;
    for (double v : sq) ss += (v - m.mean) * (v - m.mean);
    m.std_error = std::sqrt(ss / static_cast<double>(sq.size() - 1)) / std::sqrt(static_cast<double>(sq.size()));
  }
  return m;
}

inline std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t index) {
  StreamRng r(seed, index ^ 0x5eedC0de00000000ULL);
  return r.bits();
}

}  // namespace detail

/// Monte Carlo MSE of the estimator's labels; trial t uses stream (seed, t).
inline MseEstimate simulate_mse(const ChannelFamily& f, double theta, const Estimator& e, count trials,
                                std::uint64_t seed) {
  if (trials == 0) throw PreconditionError("simulate_mse: trials must be >= 1");
  const std::vector<double> cdf = cumulative(outcome_distribution(f, theta, e));
  std::vector<double> sq(trials);
  parallel_for(trials, [&](std::size_t t) {
    StreamRng rng(seed, t);
    const std::size_t k = sample_from_cdf(cdf, rng.uniform());
    sq[t] = squared_error(f.param_space(), e.labels[k], theta);
  });
  return detail::summarize(sq, theta, seed);
}

/// Exact expectation of the squared label error under the Born distribution.
inline double exact_mse(const ChannelFamily& f, double theta, const Estimator& e) {
  const std::vector<double> p = outcome_distribution(f, theta, e);
  double m = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) m += p[i] * squared_error(f.param_space(), e.labels[i], theta);
  return m;
}

struct LocalRiskReport {
  double scaled_max = 0.0;   // n^alpha * max_theta MSE
  double argmax_theta = 0.0;
  double argmax_std_error = 0.0;  // scaled like scaled_max
  count n = 1;
  double eps = 0.0;
  double alpha = 0.0;
  std::vector<MseEstimate> grid;
};

/// n^alpha * max over a uniform grid on [theta0 - eps, theta0 + eps] of simulated MSE.
inline LocalRiskReport local_minimax_risk(const ChannelFamily& f, const Estimator& e, double theta0, double eps,
                                          count grid_points, count trials, std::uint64_t seed, double alpha) {
  if (!(eps > 0.0)) throw PreconditionError("local_minimax_risk: eps must be positive");
  if (grid_points < 5) throw PreconditionError("local_minimax_risk: need at least 5 grid points");
  LocalRiskReport rep;
  rep.n = e.copies;
  rep.eps = eps;
  rep.alpha = alpha;
  const double scale = std::pow(static_cast<double>(e.copies), alpha);
  for (count j = 0; j < grid_points; ++j) {
    const double th = theta0 - eps + 2.0 * eps * static_cast<double>(j) / static_cast<double>(grid_points - 1);
    rep.grid.push_back(simulate_mse(f, th, e, trials, detail::sub_seed(seed, j)));
    if (j == 0 || scale * rep.grid.back().mean > rep.scaled_max) {
      rep.scaled_max = scale * rep.grid.back().mean;
      rep.argmax_theta = th;
      rep.argmax_std_error = scale * rep.grid.back().std_error;
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Maximum likelihood from outcome counts

struct MleResult {
  double theta = 0.0;
  double loglik = 0.0;
  bool flat = false;
};

inline double count_loglik(const std::vector<count>& counts, const std::vector<double>& p) {
  double ll = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (counts[i] == 0) continue;
    if (p[i] <= 0.0) return -std::numeric_limits<double>::infinity();
    ll += static_cast<double>(counts[i]) * std::log(p[i]);
  }
  return ll;
}

/// Grid maximum (lowest index on ties) followed by golden-section refinement
/// on the neighbouring cells. `flat` is set when the grid likelihood is constant.
inline MleResult maximize_likelihood(const std::function<double(double)>& loglik, double lo, double hi, count grid,
                                     bool refine = true) {
  if (grid < 2 || !(hi > lo)) throw PreconditionError("maximize_likelihood: bad search window");
  const double h = (hi - lo) / static_cast<double>(grid - 1);
  MleResult best{lo, -std::numeric_limits<double>::infinity(), false};
  double worst = std::numeric_limits<double>::infinity();
  count best_j = 0;
  for (count j = 0; j < grid; ++j) {
    const double t = lo + h * static_cast<double>(j);
    const double v = loglik(t);
    worst = std::min(worst, v);
    if (v > best.loglik) {
      best = {t, v, false};
      best_j = j;
    }
  }
  best.flat = std::isfinite(worst) && best.loglik - worst <= 1e-12 * std::max(1.0, std::abs(best.loglik));
  if (!std::isfinite(best.loglik)) best.flat = true;
  if (!refine || best.flat) return best;
  double a = lo + h * static_cast<double>(best_j == 0 ? 0 : best_j - 1);
  double b = lo + h * static_cast<double>(std::min(grid - 1, best_j + 1));
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = loglik(c), fd = loglik(d);
  for (int it = 0; it < 80 && b - a > 1e-12; ++it) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = loglik(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = loglik(d);
    }
  }
  const double t = 0.5 * (a + b);
  const double v = loglik(t);
  if (v > best.loglik) best = {t, v, false};
  return best;
}

// ---------------------------------------------------------------------------
// Two-step estimation

using CombineFn = std::function<double(const std::vector<count>& counts)>;

/// What stage 2 runs given the stage-1 location: a family acting on one block
/// of uses, the estimator for that block, and an optional rule merging the
/// per-outcome counts of all blocks into one estimate.
struct StageTwoPlan {
  ChannelFamily family;
  Estimator estimator;
  count uses_per_block = 1;
  std::optional<CombineFn> combine;
};

using StageTwoBuilder = std::function<StageTwoPlan(double theta1, count remaining_uses)>;

/// Combine rule: MLE from outcome counts over [lo, hi].
inline CombineFn make_mle_combine(ChannelFamily fam, Estimator e, double lo, double hi, count grid = 64) {
  return [fam = std::move(fam), e = std::move(e), lo, hi, grid](const std::vector<count>& counts) {
    auto ll = [&](double t) { return count_loglik(counts, outcome_distribution(fam, t, e)); };
    return maximize_likelihood(ll, lo, hi, grid).theta;
  };
}

struct TwoStepReport {
  MseEstimate mse;
  double scaled_mse = 0.0;  // n * MSE
  count n_total = 0;
  count stage1_uses = 0;
  count stage2_uses = 0;
  count blocks = 0;
  count discarded = 0;
  count localization_failures = 0;
  double stage1_cell = 0.0;
  double mean_estimate = 0.0;
};

/// Stage 1 measures ceil(sqrt n) single uses with `stage1` and localizes by
/// grid MLE (cell width pi / ceil(sqrt n)). Stage 2 runs the builder's plan on
/// the remaining uses; leftovers that do not fill a block are discarded.
inline TwoStepReport two_step_estimator(const ChannelFamily& f, double theta, count n_total, const Estimator& stage1,
                                        const StageTwoBuilder& builder, count replicas, std::uint64_t seed) {
  if (n_total < 4) throw PreconditionError("two_step_estimator: n_total must be >= 4");
  if (replicas == 0) throw PreconditionError("two_step_estimator: replicas must be >= 1");
  if (stage1.copies != 1) throw PreconditionError("two_step_estimator: stage-1 estimator must use one copy");
  validate_estimator(f, stage1);

  TwoStepReport rep;
  rep.n_total = n_total;
  rep.stage1_uses = static_cast<count>(std::ceil(std::sqrt(static_cast<double>(n_total))));
  const count remaining = n_total - rep.stage1_uses;

  const ParamSpace& space = f.param_space();
  const double width = std::numbers::pi / static_cast<double>(rep.stage1_uses);
  rep.stage1_cell = width;
  const double span = space.period ? *space.period : space.hi - space.lo;
  const double start = space.lo;
  const count cells = std::max<count>(2, static_cast<count>(std::ceil(span / width)));
  std::vector<double> grid(cells);
  for (count j = 0; j < cells; ++j) grid[j] = start + (static_cast<double>(j) + 0.5) * span / static_cast<double>(cells);

  const std::vector<double> cdf1 = cumulative(outcome_distribution(f, theta, stage1));
  std::vector<std::vector<double>> logp(cells);
  for (count j = 0; j < cells; ++j) {
    const std::vector<double> p = outcome_distribution(f, grid[j], stage1);
    logp[j].resize(p.size());
    for (std::size_t i = 0; i < p.size(); ++i)
      logp[j][i] = p[i] > 0.0 ? std::log(p[i]) : -std::numeric_limits<double>::infinity();
  }

  struct Prepared {
    StageTwoPlan plan;
    std::vector<double> cdf;
    count blocks;
  };
  std::mutex cache_mutex;
  std::map<count, std::shared_ptr<const Prepared>> cache;
  auto prepared = [&](count cell) {
    {
      std::lock_guard lock(cache_mutex);
      auto it = cache.find(cell);
      if (it != cache.end()) return it->second;
    }
    auto prep = std::make_shared<Prepared>(Prepared{builder(grid[cell], remaining), {}, 0});
    if (prep->plan.uses_per_block == 0) throw PreconditionError("two_step_estimator: uses_per_block must be >= 1");
    validate_estimator(prep->plan.family, prep->plan.estimator);
    prep->blocks = remaining / prep->plan.uses_per_block;
    if (prep->blocks == 0) throw PreconditionError("two_step_estimator: stage-2 block larger than remaining uses");
    if (!prep->plan.combine && prep->blocks > 1 && space.period)
      throw PreconditionError("two_step_estimator: circular parameters need a combine rule for several blocks");
    prep->cdf = cumulative(outcome_distribution(prep->plan.family, theta, prep->plan.estimator));
    std::lock_guard lock(cache_mutex);
    return cache.emplace(cell, prep).first->second;
  };

  std::vector<double> sq(replicas), est(replicas);
  std::vector<char> failed(replicas, 0);
  std::vector<count> blocks_used(replicas, 0), block_size(replicas, 0);
  parallel_for(replicas, [&](std::size_t r) {
    StreamRng rng(seed, r);
    std::vector<count> c1(cdf1.size(), 0);
    for (count u = 0; u < rep.stage1_uses; ++u) ++c1[sample_from_cdf(cdf1, rng.uniform())];
    count best = 0;
    double best_ll = -std::numeric_limits<double>::infinity(), worst_ll = std::numeric_limits<double>::infinity();
    for (count j = 0; j < cells; ++j) {
      double ll = 0.0;
      for (std::size_t i = 0; i < c1.size(); ++i)
        if (c1[i] > 0) ll += static_cast<double>(c1[i]) * logp[j][i];
      worst_ll = std::min(worst_ll, ll);
      if (ll > best_ll) {
        best_ll = ll;
        best = j;
      }
    }
    failed[r] = (!std::isfinite(best_ll) || best_ll - worst_ll <= 1e-12 * std::max(1.0, std::abs(best_ll))) ? 1 : 0;

    const auto prep = prepared(best);
    blocks_used[r] = prep->blocks;
    block_size[r] = prep->plan.uses_per_block;
    const Estimator& e2 = prep->plan.estimator;
    double estimate = 0.0;
    if (prep->plan.combine) {
      std::vector<count> c2(prep->cdf.size(), 0);
      for (count b = 0; b < prep->blocks; ++b) ++c2[sample_from_cdf(prep->cdf, rng.uniform())];
      estimate = (*prep->plan.combine)(c2);
    } else {
      for (count b = 0; b < prep->blocks; ++b) estimate += e2.labels[sample_from_cdf(prep->cdf, rng.uniform())];
      estimate /= static_cast<double>(prep->blocks);
    }
    if (!space.period) estimate = space.clamp(estimate);
    est[r] = estimate;
    sq[r] = squared_error(space, estimate, theta);
  });

  rep.mse = detail::summarize(sq, theta, seed);
  rep.scaled_mse = static_cast<double>(n_total) * rep.mse.mean;
  for (std::size_t r = 0; r < replicas; ++r) {
    rep.localization_failures += failed[r] ? 1 : 0;
    rep.mean_estimate += est[r] / static_cast<double>(replicas);
  }
  rep.blocks = blocks_used.front();
  for (std::size_t r = 0; r < replicas; ++r)
    if (blocks_used[r] != rep.blocks || block_size[r] != block_size.front())
      throw NumericalError("two_step_estimator: stage-2 block layout varies with the stage-1 outcome");
  rep.stage2_uses = rep.blocks * block_size.front();
  rep.discarded = remaining - rep.stage2_uses;
  return rep;
}

/// Projective measurement onto the SLD eigenbasis of the output at theta1,
/// labelled by the locally unbiased estimate theta1 + l_i / J^S.
inline Estimator sld_eigenbasis_estimator(const ChannelFamily& f, double theta1, const CMatrix& input) {
  const ChoiPair pair = choi_pair(f, theta1);
  const StateFamilyPoint pt = output_point(pair, input);
  const CMatrix l = sld(pt);
  const double j = std::max((pt.rho * l * l).trace().real(), 0.0);
  if (!(j > 0.0)) throw PreconditionError("sld_eigenbasis_estimator: zero SLD Fisher information at theta1");
  const HermitianEig eig = hermitian_eig(l);
  Estimator e;
  e.input = input;
  e.ref_dim = static_cast<count>(input.cols());
  e.copies = 1;
  e.label = "sld-eigenbasis";
  for (Eigen::Index k = 0; k < eig.values.size(); ++k) {
    e.povm.push_back(eig.vectors.col(k) * eig.vectors.col(k).adjoint());
    e.labels.push_back(theta1 + eig.values(k) / j);
  }
  return e;
}

// ---------------------------------------------------------------------------
// Unbiasedness diagnostics

struct DiagnosticPoint {
  double theta = 0.0;
  double eta_hat = 0.0;        // empirical mean of the estimates
  double v_hat = 0.0;          // empirical (population) variance
  double v_std_error = 0.0;
  double mse_hat = 0.0;        // mean squared (linear) error on the same sample
  double eta_exact = 0.0;
  double slope_exact = 0.0;    // d eta / d theta from exact means
  double fisher = 0.0;         // classical Fisher information of the outcome distribution
  double cr_bound = 0.0;       // slope^2 / J, or 0 when slope is 0
  bool cr_holds = true;        // v_hat + 3 sigma >= cr_bound
};

struct DiagnosticsReport {
  std::vector<DiagnosticPoint> points;
  std::vector<double> midpoints;
  std::vector<double> midpoint_slopes;  // from the empirical means
  bool all_cr_hold = true;
};

inline double exact_mean_label(const ChannelFamily& f, double theta, const Estimator& e) {
  const std::vector<double> p = outcome_distribution(f, theta, e);
  double m = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) m += p[i] * e.labels[i];
  return m;
}

/// Empirical eta(theta), v(theta) per grid point, exact slopes, and the
/// classical Cramer-Rao check v >= (d eta / d theta)^2 / J.
inline DiagnosticsReport unbiasedness_diagnostics(const ChannelFamily& f, const Estimator& e,
                                                  const std::vector<double>& thetas, count trials,
                                                  std::uint64_t seed, double fd_step = 1e-5) {
  if (thetas.size() < 3) throw PreconditionError("unbiasedness_diagnostics: need at least 3 grid points");
  if (trials < 2) throw PreconditionError("unbiasedness_diagnostics: need at least 2 trials");
  DiagnosticsReport rep;
  for (std::size_t g = 0; g < thetas.size(); ++g) {
    const double th = thetas[g];
    const std::vector<double> cdf = cumulative(outcome_distribution(f, th, e));
    std::vector<double> x(trials);
    const std::uint64_t s = detail::sub_seed(seed, g);
    parallel_for(trials, [&](std::size_t t) {
      StreamRng rng(s, t);
      x[t] = e.labels[sample_from_cdf(cdf, rng.uniform())];
    });
    DiagnosticPoint pt;
    pt.theta = th;
    const double nt = static_cast<double>(trials);
    for (double v : x) pt.eta_hat += v;
    pt.eta_hat /= nt;
    double m2 = 0.0, m4 = 0.0, mse = 0.0;
    for (double v : x) {
      const double c = v - pt.eta_hat;
      m2 += c * c;
      m4 += c * c * c * c;
      mse += (v - th) * (v - th);
    }
    m2 /= nt;
    m4 /= nt;
    pt.v_hat = m2;
    pt.v_std_error = std::sqrt(std::max(0.0, m4 - m2 * m2) / nt);
    pt.mse_hat = mse / nt;
    pt.eta_exact = exact_mean_label(f, th, e);
    pt.slope_exact =
        (exact_mean_label(f, th + fd_step, e) - exact_mean_label(f, th - fd_step, e)) / (2.0 * fd_step);
    try {
      pt.fisher = classical_fisher(f, th, e);
    } catch (const NumericalError&) {
      pt.fisher = 0.0;
    }
    const double s2 = pt.slope_exact * pt.slope_exact;
    if (s2 <= 1e-12) {
      pt.cr_bound = 0.0;
    } else {
      pt.cr_bound = pt.fisher > 0.0 ? s2 / pt.fisher : std::numeric_limits<double>::infinity();
    }
    pt.cr_holds = pt.v_hat + 3.0 * pt.v_std_error + 1e-9 >= pt.cr_bound;
    rep.all_cr_hold = rep.all_cr_hold && pt.cr_holds;
    rep.points.push_back(pt);
  }
  for (std::size_t g = 0; g + 1 < rep.points.size(); ++g) {
    const auto& a = rep.points[g];
    const auto& b = rep.points[g + 1];
    rep.midpoints.push_back(0.5 * (a.theta + b.theta));
    rep.midpoint_slopes.push_back((b.eta_hat - a.eta_hat) / (b.theta - a.theta));
  }
  return rep;
}

}  // namespace qest

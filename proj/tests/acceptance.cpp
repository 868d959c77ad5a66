// Acceptance run: one PASS/FAIL line per criterion with its runtime. Exit
// status is non-zero when any criterion fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "qest/estimate.hpp"
#include "qest/fisher.hpp"
#include "qest/phase.hpp"

using namespace qest;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

struct Criterion {
  int id;
  std::string title;
  double limit_seconds;
  std::function<void(Outcome&)> body;
};

const double kLn2 = std::log(2.0);

ChannelFamily qubit_damping() {
  Eigen::MatrixXd rates(2, 2);
  rates << 0, 1, 1, 0;
  return make_exponential_phase_damping(rates);
}

ChannelFamily random_damping(StreamRng& rng, count d) {
  Eigen::MatrixXd rates(d, d);
  std::vector<double> x(d);
  for (auto& v : x) v = rng.normal();
  for (count k = 0; k < d; ++k)
    for (count l = 0; l < d; ++l) rates(k, l) = std::pow(x[k] - x[l], 2);
  return make_exponential_phase_damping(rates);
}

CMatrix qubit_h() {
  CMatrix h = CMatrix::Zero(2, 2);
  h(0, 0) = 0.5;
  h(1, 1) = -0.5;
  return h;
}

CMatrix summed_hamiltonian(count n) {
  const auto dim = Eigen::Index{1} << n;
  CMatrix total = CMatrix::Zero(dim, dim);
  for (count j = 0; j < n; ++j) {
    CMatrix term = CMatrix::Identity(1, 1);
    for (count k = 0; k < n; ++k) term = kron(term, k == j ? qubit_h() : CMatrix(CMatrix::Identity(2, 2)));
    total += term;
  }
  return total;
}

SldOptimizerOptions optimizer(std::uint64_t seed) {
  SldOptimizerOptions o;
  o.restarts = 4;
  o.steps = 120;
  o.seed = seed;
  return o;
}

void rld_maximum(Outcome& o) {
  const ChoiPair pair = choi_pair(qubit_damping(), kLn2);
  const RldChannelResult r = max_rld_channel(pair);
  const double top = r.value.value();
  o.require(std::abs(top - 1.0 / 3.0) <= 1e-7, "max_rld_channel = 1/3");
  StreamRng rng(101, 0);
  double best = 0.0;
  bool bounded = true;
  for (int t = 0; t < 10000; ++t) {
    const FisherValue j = fisher_for_input(pair, oracle::random_input(rng, 2, 2), FisherKind::rld);
    if (j.is_infinite() || j.value() > top + 1e-7) bounded = false;
    if (j.is_finite()) best = std::max(best, j.value());
  }
  o.require(bounded, "random inputs never exceed the maximum");
  o.require(best >= 0.33, "random inputs attain >= 0.33");
  o.detail << "J^R = " << top << ", best random = " << best;
}

void rld_additivity(Outcome& o) {
  const AdditivityReport base = additivity_residual(qubit_damping(), qubit_damping(), kLn2);
  double worst = base.residual;
  StreamRng rng(102, 0);
  for (int t = 0; t < 20; ++t) {
    const ChannelFamily f1 = random_damping(rng, 2 + t % 2);
    const ChannelFamily f2 = random_damping(rng, 2);
    worst = std::max(worst, additivity_residual(f1, f2, 0.2 + rng.uniform()).residual);
  }
  o.require(worst <= 1e-7, "additivity residual <= 1e-7");
  o.detail << "max residual = " << worst;
}

void gap_law(Outcome& o) {
  const SldOptimum opt = optimize_sld_input(choi_pair(make_unitary_family(qubit_h()), 0.2), optimizer(3));
  o.require(opt.j_best >= 0.999, "optimizer >= 0.999 gap^2");
  double worst = 0.0;
  for (count n : {2, 3}) {
    const double nn = static_cast<double>(n * n);
    worst = std::max(worst, std::abs(pure_unitary_fisher(summed_hamiltonian(n), noon_state(n)) - nn));
    const ChoiPair pair = choi_pair(tensor_power(make_unitary_family(qubit_h()), n), 0.2);
    const CMatrix a = noon_state(n);
    worst = std::max(worst, std::abs(fisher_for_input(pair, a, FisherKind::sld).value() - nn));
  }
  o.require(worst <= 1e-9, "noon gives n^2 within 1e-9");
  o.detail << "optimizer = " << opt.j_best << ", noon max deviation = " << worst;
}

void covariant_asymptote(Outcome& o) {
  double prev = 0.0;
  bool monotone = true;
  double at500 = 0.0;
  for (count n : {10, 50, 200, 500}) {
    const double nn = static_cast<double>(n);
    const double s = nn * nn * covariant_minimax_risk(n).risk;
    monotone = monotone && s > prev;
    prev = s;
    at500 = s;
  }
  o.require(std::abs(at500 - kPi * kPi) <= 0.01 * kPi * kPi, "n^2 risk(500) within 1% of pi^2");
  o.require(monotone, "n^2 risk increasing");
  o.detail << "n^2 risk(500) = " << at500;
}

void bound_separation(Outcome& o) {
  std::vector<count> ns;
  for (count n = 1; n <= 200; ++n) ns.push_back(n);
  for (count n : {300, 500, 1000, 2000, 5000}) ns.push_back(n);
  double smallest = std::numeric_limits<double>::infinity();
  for (count n : ns) {
    const PhaseBoundsReport r = phase_bounds_report(n);
    smallest = std::min(smallest, r.ratio);
    if (!(r.covariant > r.cramer_rao)) o.require(false, "covariant > 1/n^2 at n = " + std::to_string(n));
  }
  o.require(smallest > 1.0, "n^2 risk > 1");
  o.detail << ns.size() << " values of n, min n^2 risk = " << smallest;
}

void two_step(Outcome& o) {
  const ChannelFamily f = qubit_damping();
  const CMatrix input = maximally_entangled_input(2);
  const ParamSpace sp = f.param_space();
  const Estimator stage1 = sld_eigenbasis_estimator(f, 0.5 * (sp.lo + sp.hi), input);
  const StageTwoBuilder builder = [&f, input, sp](double t1, count) {
    Estimator e2 = sld_eigenbasis_estimator(f, t1, input);
    return StageTwoPlan{f, e2, 1, make_mle_combine(f, e2, sp.lo, sp.hi, 64)};
  };
  const TwoStepReport r = two_step_estimator(f, kLn2, 4096, stage1, builder, 2000, 11);
  o.require(r.scaled_mse >= 2.55 && r.scaled_mse <= 3.45, "n MSE in [2.55, 3.45]");
  o.detail << "n MSE = " << r.scaled_mse << " +- " << 4096.0 * r.mse.std_error
           << ", localization failures = " << r.localization_failures;
}

void noon_statistics(Outcome& o) {
  double prob_dev = 0.0, fisher_dev = 0.0;
  count fisher_points = 0;
  for (count n = 1; n <= 10; ++n) {
    // The summed generator is diagonal in the computational basis.
    const Eigen::VectorXd h = summed_hamiltonian(n).diagonal().real();
    const CVector psi = noon_state(n);
    for (int j = 0; j < 50; ++j) {
      const double t = 0.013 + 2.0 * kPi * j / 50.0;
      cplx amp = 0.0, damp = 0.0;
      for (Eigen::Index k = 0; k < h.size(); ++k) {
        const cplx w = std::norm(psi(k)) * std::polar(1.0, t * h(k));
        amp += w;
        damp += cplx(0, 1) * h(k) * w;
      }
      const double p = std::norm(amp);
      prob_dev = std::max(prob_dev, std::abs(p - noon_outcome_prob(n, t)));
      if (p < 1e-3 || p > 1 - 1e-3) continue;
      const double dp = 2.0 * (std::conj(amp) * damp).real();
      const double j_born = dp * dp / (p * (1.0 - p));
      fisher_dev = std::max(fisher_dev, std::abs(j_born - static_cast<double>(n * n)));
      fisher_dev = std::max(fisher_dev, std::abs(noon_classical_fisher(n, t) - static_cast<double>(n * n)));
      ++fisher_points;
    }
  }
  o.require(prob_dev <= 1e-10, "Born probability matches cos^2(n theta / 2)");
  o.require(fisher_dev <= 1e-9, "classical Fisher equals n^2");
  o.detail << "prob deviation = " << prob_dev << ", Fisher deviation = " << fisher_dev << " over " << fisher_points
           << " points";
}

void ambiguity(Outcome& o) {
  const AmbiguityReport r = ambiguity_posterior(4, 100, 0.3, 42, 4096);
  o.require(r.peaks.size() == 8, "8 alias peaks");
  o.require(r.mass_spread <= 0.05, "alias masses equal within 5%");
  double far = 0.0;
  for (const auto& p : r.peaks) far = std::max(far, p.distance_to_true_alias);
  o.require(r.max_peak_offset <= 2.0 * kPi / 4096 + 1e-12, "peaks at alias points");
  o.detail << r.peaks.size() << " peaks, mass spread = " << r.mass_spread << ", max distance to a true alias = " << far;
}

void lemmas(Outcome& o) {
  StreamRng rng(109, 0);
  double worst1 = std::numeric_limits<double>::infinity(), worst2 = worst1;
  for (int t = 0; t < 200; ++t) {
    const Eigen::Index d = 2 + t % 7;
    const Eigen::Index k = 1 + static_cast<Eigen::Index>(rng.uniform() * static_cast<double>(d));
    worst1 = std::min(worst1, lemma_a1_residual(oracle::random_pd(rng, d), oracle::random_projector(rng, d, std::min(k, d))));
  }
  for (int t = 0; t < 200; ++t) {
    const Eigen::Index d = 2 + t % 7;
    const Eigen::Index rank = 1 + static_cast<Eigen::Index>(rng.uniform() * static_cast<double>(d));
    const Eigen::Index k = 1 + static_cast<Eigen::Index>(rng.uniform() * static_cast<double>(d - 1));
    const double eps = std::pow(10.0, -2.0 + 4.0 * rng.uniform());
    worst2 = std::min(worst2, lemma_a2_residual(oracle::random_psd(rng, d, std::min(rank, d)), oracle::random_projector(rng, d, k), eps));
  }
  o.require(worst1 >= -1e-9, "lemma_a1_residual >= -1e-9");
  o.require(worst2 >= -1e-9, "lemma_a2_residual >= -1e-9");
  o.detail << "min residuals " << worst1 << ", " << worst2;
}

void superadditivity_and_processing(Outcome& o) {
  int checks = 0;
  const SuperadditivityReport u = superadditivity_check(make_unitary_family(qubit_h()), 0.2, 1, 1, optimizer(4));
  const SuperadditivityReport pd = superadditivity_check(qubit_damping(), kLn2, 1, 1, optimizer(5));
  const SuperadditivityReport dep = superadditivity_check(make_depolarizing_family(2), 0.35, 1, 1, optimizer(6));
  for (const auto* r : {&u, &pd, &dep}) {
    o.require(r->holds, "superadditivity");
    ++checks;
  }

  StreamRng rng(110, 0);
  const std::vector<std::pair<ChannelFamily, double>> fams{
      {qubit_damping(), kLn2}, {random_damping(rng, 3), 0.5}, {make_depolarizing_family(2), 0.35}};
  bool sandwich = true, processing = true;
  double worst_gap = -std::numeric_limits<double>::infinity();
  for (int t = 0; t < 50; ++t) {
    const auto& [f, theta] = fams[static_cast<std::size_t>(t) % fams.size()];
    const ChoiPair pair = choi_pair(f, theta);
    Estimator e;
    e.input = oracle::random_input(rng, static_cast<Eigen::Index>(f.dim_in()), static_cast<Eigen::Index>(f.dim_in()));
    e.ref_dim = f.dim_in();
    const auto n = static_cast<Eigen::Index>(f.dim_out() * f.dim_in());
    const CMatrix basis = oracle::random_unitary(rng, n);
    for (Eigen::Index k = 0; k < n; ++k) {
      e.povm.push_back(basis.col(k) * basis.col(k).adjoint());
      e.labels.push_back(static_cast<double>(k));
    }
    const FisherValue js = fisher_for_input(pair, e.input, FisherKind::sld);
    const FisherValue jr = fisher_for_input(pair, e.input, FisherKind::rld);
    sandwich = sandwich && js.at_most(jr, 1e-8);
    const double jc = classical_fisher(f, theta, e);
    worst_gap = std::max(worst_gap, jc - js.value());
    processing = processing && jc <= js.value() + 1e-6;
    checks += 2;
  }
  o.require(sandwich, "J^S <= J^R on every input");
  o.require(processing, "classical Fisher <= J^S + 1e-6");
  o.detail << checks << " checks, J(2) unitary = " << u.j_sum_copies << ", J(2) damping = " << pd.j_sum_copies
           << ", max classical - SLD = " << worst_gap;
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "channel RLD maximum for phase damping", 5.0, rld_maximum},
      {2, "additivity of the channel RLD maximum", 10.0, rld_additivity},
      {3, "unitary gap law and noon n^2", 30.0, gap_law},
      {4, "covariant risk approaches pi^2 / n^2", 10.0, covariant_asymptote},
      {5, "covariant risk exceeds the Cramer-Rao value", 60.0, bound_separation},
      {6, "two-step estimator attains 1 / J^S", 120.0, two_step},
      {7, "noon outcome statistics", 5.0, noon_statistics},
      {8, "aliasing of the noon posterior", 5.0, ambiguity},
      {9, "matrix lemmas", 10.0, lemmas},
      {10, "superadditivity, SLD <= RLD and data processing", 60.0, superadditivity_and_processing},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      c.body(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << " [exception: " << e.what() << "]";
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs >= c.limit_seconds) o.require(false, "runtime limit " + std::to_string(c.limit_seconds) + " s");
    if (!o.pass) ++failures;
    std::printf("[%s] %2d %-52s %8.3f s  %s\n", o.pass ? "PASS" : "FAIL", c.id, c.title.c_str(), secs,
                o.detail.str().c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}

#include <catch2/catch_amalgamated.hpp>

#include <numbers>

#include "oracles.hpp"
#include "qest/fisher.hpp"

using namespace qest;
using Catch::Matchers::WithinAbs;

namespace {

const double kLn2 = std::log(2.0);

CMatrix qubit_h() {
  CMatrix h = CMatrix::Zero(2, 2);
  h(0, 0) = 0.5;
  h(1, 1) = -0.5;
  return h;
}

CMatrix diag2(double a, double b) {
  CMatrix m = CMatrix::Zero(2, 2);
  m(0, 0) = a;
  m(1, 1) = b;
  return m;
}

ChannelFamily qubit_damping() {
  Eigen::MatrixXd rates(2, 2);
  rates << 0, 1, 1, 0;
  return make_exponential_phase_damping(rates);
}

ChannelFamily kernel_damping(count d, double scale) {
  Eigen::MatrixXd rates(d, d);
  for (count k = 0; k < d; ++k)
    for (count l = 0; l < d; ++l) rates(k, l) = scale * std::pow(static_cast<double>(k) - static_cast<double>(l), 2);
  return make_exponential_phase_damping(rates);
}

// Random dephasing with all coefficients positive: rates from a random
// conditionally negative definite kernel |x_k - x_l|^2.
ChannelFamily random_damping(StreamRng& rng, count d) {
  Eigen::MatrixXd rates(d, d);
  std::vector<double> x(d);
  for (auto& v : x) v = rng.normal();
  for (count k = 0; k < d; ++k)
    for (count l = 0; l < d; ++l) rates(k, l) = std::pow(x[k] - x[l], 2);
  return make_exponential_phase_damping(rates);
}

SldOptimizerOptions quick(std::uint64_t seed) {
  SldOptimizerOptions o;
  o.restarts = 4;
  o.steps = 100;
  o.seed = seed;
  return o;
}

}  // namespace

TEST_CASE("SLD examples", "[fisher][sld]") {
  StateFamilyPoint mixed{CMatrix::Identity(2, 2) / 2.0, diag2(0.5, -0.5)};
  CHECK(max_abs(sld(mixed) - diag2(1, -1)) < 1e-14);

  CMatrix drho = CMatrix::Zero(2, 2);
  drho(0, 1) = drho(1, 0) = 0.5;
  CMatrix l_expected = CMatrix::Zero(2, 2);
  l_expected(0, 1) = l_expected(1, 0) = 1.0;
  CHECK(max_abs(sld({diag2(1, 0), drho}) - l_expected) < 1e-14);

  CHECK(max_abs(sld({diag2(0.3, 0.7), CMatrix::Zero(2, 2)})) == 0.0);

  // Outside the support the derivative has a diagonal block: no SLD exists.
  CHECK_THROWS_AS(sld({diag2(1, 0), diag2(-0.5, 0.5)}), PreconditionError);
  CHECK_THROWS_AS(sld({diag2(0.5, 0.6), CMatrix::Zero(2, 2)}), PreconditionError);
}

TEST_CASE("SLD defining equation holds on random families", "[fisher][sld][property]") {
  StreamRng rng(40, 0);
  for (int t = 0; t < 50; ++t) {
    const Eigen::Index d = 2 + t % 4;
    const Eigen::Index r = 1 + t % static_cast<int>(d);
    CMatrix rho = oracle::random_psd(rng, d, r);
    rho /= rho.trace().real();
    // Tangent of U(s) rho U(s)^dag plus a support-preserving term keeps the SLD defined.
    const CMatrix h = oracle::random_hermitian(rng, d);
    const CMatrix k = oracle::random_hermitian(rng, d);
    const CMatrix p = support_projector(rho).projector;
    CMatrix drho = cplx(0, 1) * (h * rho - rho * h) + p * k * p;
    drho -= p * (drho.trace() / p.trace());
    const StateFamilyPoint pt{rho, hermitian_part(drho)};
    const CMatrix l = sld(pt);
    CHECK(max_abs(0.5 * (l * rho + rho * l) - pt.drho) <= 1e-7);
    CHECK(sld_fisher(pt) >= 0.0);
  }
}

TEST_CASE("SLD Fisher information examples", "[fisher][sld]") {
  CHECK_THAT(sld_fisher({diag2(0.5, 0.5), diag2(0.5, -0.5)}), WithinAbs(1.0, 1e-14));
  const double th = 0.4;
  CHECK_THAT(sld_fisher({diag2((1 + th) / 2, (1 - th) / 2), diag2(0.5, -0.5)}), WithinAbs(1.0 / (1 - th * th), 1e-12));
  CHECK(sld_fisher({diag2(0.5, 0.5), CMatrix::Zero(2, 2)}) == 0.0);

  StreamRng rng(41, 0);
  for (int t = 0; t < 20; ++t) {
    const CMatrix h = oracle::random_hermitian(rng, 3);
    CVector u = oracle::random_complex(rng, 3, 1);
    u.normalize();
    const CMatrix rho = u * u.adjoint();
    const CMatrix drho = cplx(0, 1) * (h * rho - rho * h);
    CHECK_THAT(sld_fisher({rho, drho}), WithinAbs(pure_unitary_fisher(h, u), 1e-9));
  }
}

TEST_CASE("RLD Fisher information examples", "[fisher][rld]") {
  const FisherValue mixed = rld_fisher({diag2(0.5, 0.5), diag2(0.5, -0.5)});
  REQUIRE(mixed.is_finite());
  CHECK_THAT(mixed.value(), WithinAbs(1.0, 1e-14));

  CVector u(2);
  u << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
  const CMatrix rho = u * u.adjoint();
  const CMatrix h = qubit_h();
  CHECK(rld_fisher({rho, cplx(0, 1) * (h * rho - rho * h)}).is_infinite());

  const ChoiPair p = choi_pair(qubit_damping(), kLn2);
  const FisherValue pd = fisher_for_input(p, maximally_entangled_input(2), FisherKind::rld);
  CHECK_THAT(pd.value(), WithinAbs(1.0 / 3.0, 1e-9));
  CHECK_THAT(pd.value(), WithinAbs(oracle::phase_damping_fisher(kLn2), 1e-9));
}

TEST_CASE("pure unitary Fisher information", "[fisher][pure]") {
  CVector plus(2);
  plus << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
  CHECK_THAT(pure_unitary_fisher(qubit_h(), plus), WithinAbs(1.0, 1e-14));
  CVector e0 = CVector::Zero(2);
  e0(0) = 1.0;
  CHECK(pure_unitary_fisher(qubit_h(), e0) == 0.0);

  const CMatrix i2 = CMatrix::Identity(2, 2);
  const CMatrix h = qubit_h();
  const CMatrix h3 = kron(kron(h, i2), i2) + kron(kron(i2, h), i2) + kron(kron(i2, i2), h);
  CVector noon = CVector::Zero(8);
  noon(0) = noon(7) = 1.0 / std::sqrt(2.0);
  CHECK_THAT(pure_unitary_fisher(h3, noon), WithinAbs(9.0, 1e-12));

  CHECK_THROWS_AS(pure_unitary_fisher(h, CVector::Ones(2)), PreconditionError);
}

TEST_CASE("condition C", "[fisher][condition_c]") {
  CHECK(condition_c(choi_pair(make_depolarizing_family(2), 0.5)));
  CHECK(condition_c(choi_pair(qubit_damping(), kLn2)));
  CHECK(condition_c(choi_pair(kernel_damping(3, 0.5), 0.8)));
  CHECK_FALSE(condition_c(choi_pair(make_unitary_family(qubit_h()), 0.3)));
}

TEST_CASE("channel RLD maximum examples", "[fisher][max_rld]") {
  const RldChannelResult pd = max_rld_channel(choi_pair(qubit_damping(), kLn2));
  REQUIRE(pd.value.is_finite());
  CHECK_THAT(pd.value.value(), WithinAbs(1.0 / 3.0, 1e-7));
  CHECK(pd.condition_c);

  const RldChannelResult u = max_rld_channel(choi_pair(make_unitary_family(qubit_h()), 0.3));
  CHECK(u.value.is_infinite());
  CHECK_FALSE(u.condition_c);

  const RldChannelResult c = max_rld_channel(choi_pair(make_depolarizing_family(2).with_param_space({0.0, 1.0, {}}), 0.4));
  CHECK(c.value.is_finite());
  const RldChannelResult zero = max_rld_channel(choi_pair(make_identity_family(2), 0.0));
  CHECK_THAT(zero.value.value(), WithinAbs(0.0, 1e-15));
}

TEST_CASE("channel RLD maximum bounds random inputs and its witness attains it", "[fisher][max_rld][property]") {
  struct Case {
    ChannelFamily f;
    double theta;
  };
  const std::vector<Case> cases{{qubit_damping(), kLn2},
                                {kernel_damping(3, 0.5), 0.8},
                                {make_depolarizing_family(2), 0.3},
                                {make_depolarizing_family(3), 0.6}};
  StreamRng rng(42, 0);
  for (const Case& c : cases) {
    INFO(c.f.label());
    const ChoiPair pair = choi_pair(c.f, c.theta);
    const RldChannelResult r = max_rld_channel(pair);
    const double top = r.value.value();
    double best = 0.0;
    for (int t = 0; t < 2000; ++t) {
      const FisherValue j = fisher_for_input(pair, oracle::random_input(rng, c.f.dim_in(), c.f.dim_in()), FisherKind::rld);
      REQUIRE(j.is_finite());
      CHECK(j.value() <= top + 1e-7);
      best = std::max(best, j.value());
    }
    CHECK(best >= 0.8 * top);
    const FisherValue w = fisher_for_input(pair, r.witness_input, FisherKind::rld);
    CHECK_THAT(w.value(), WithinAbs(top, 1e-6));
  }
}

TEST_CASE("SLD and RLD sandwich for every input", "[fisher][property]") {
  StreamRng rng(43, 0);
  const std::vector<ChannelFamily> fams{qubit_damping(), kernel_damping(3, 0.3), make_depolarizing_family(2)};
  for (const auto& f : fams) {
    const ChoiPair pair = choi_pair(f, 0.45);
    for (int t = 0; t < 200; ++t) {
      const CMatrix a = oracle::random_input(rng, f.dim_in(), f.dim_in());
      const FisherValue js = fisher_for_input(pair, a, FisherKind::sld);
      const FisherValue jr = fisher_for_input(pair, a, FisherKind::rld);
      CHECK(js.at_most(jr, 1e-8));
    }
  }
}

TEST_CASE("fisher_for_input examples", "[fisher][input]") {
  const ChoiPair u = choi_pair(make_unitary_family(qubit_h()), 0.2);
  CVector plus(2);
  plus << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
  CVector e0 = CVector::Zero(2);
  e0(0) = 1.0;
  CHECK_THAT(fisher_for_input(u, plus * e0.transpose(), FisherKind::sld).value(), WithinAbs(1.0, 1e-12));

  const ChoiPair pd = choi_pair(qubit_damping(), kLn2);
  CHECK_THAT(fisher_for_input(pd, maximally_entangled_input(2), FisherKind::rld).value(), WithinAbs(1.0 / 3.0, 1e-9));
  CHECK_THAT(fisher_for_input(pd, e0 * e0.transpose(), FisherKind::sld).value(), WithinAbs(0.0, 1e-12));
}

TEST_CASE("SLD optimizer examples", "[fisher][optimizer]") {
  const ChoiPair u = choi_pair(make_unitary_family(qubit_h()), 0.2);
  const SldOptimum ou = optimize_sld_input(u, quick(1));
  CHECK(ou.j_best >= 0.999);
  CHECK(ou.j_best <= 1.0 + 1e-9);
  // The optimal reduced input is the equal-weight superposition of the extreme levels.
  const CMatrix reduced = ou.a_best * ou.a_best.adjoint();
  CHECK_THAT(reduced(0, 0).real(), WithinAbs(0.5, 0.02));

  const ChoiPair pd = choi_pair(qubit_damping(), kLn2);
  const SldOptimum opd = optimize_sld_input(pd, quick(2));
  CHECK(opd.j_best >= 0.33);
  CHECK(opd.j_best <= 1.0 / 3.0 + 1e-6);

  const SldOptimum zero = optimize_sld_input(choi_pair(make_identity_family(2), 0.0), quick(3));
  CHECK_THAT(zero.j_best, WithinAbs(0.0, 1e-12));
}

TEST_CASE("SLD optimizer is deterministic and independent of thread count", "[fisher][optimizer]") {
  const ChoiPair pd = choi_pair(kernel_damping(3, 0.5), 0.8);
  const SldOptimum a = optimize_sld_input(pd, quick(9));
  const SldOptimum b = optimize_sld_input(pd, quick(9));
  CHECK(a.j_best == b.j_best);
  CHECK(a.best_restart == b.best_restart);
  CHECK(max_abs(a.a_best - b.a_best) == 0.0);
  CHECK(a.j_best <= max_rld_channel(pd).value.value() + 1e-8);
}

TEST_CASE("additivity of the channel RLD maximum", "[fisher][additivity]") {
  const AdditivityReport r = additivity_residual(qubit_damping(), qubit_damping(), kLn2);
  CHECK(r.residual <= 1e-7);
  CHECK_THAT(r.j_product, WithinAbs(2.0 / 3.0, 1e-7));

  const ChannelFamily constant = make_identity_family(2, ParamSpace{0.0, 10.0, {}});
  CHECK(additivity_residual(kernel_damping(3, 0.4), constant, 0.7).residual <= 1e-9);

  const RldChannelResult cube = max_rld_channel(choi_pair(tensor_power(qubit_damping(), 3), kLn2));
  CHECK_THAT(cube.value.value(), WithinAbs(1.0, 1e-7));

  CHECK_THROWS_AS(additivity_residual(make_unitary_family(qubit_h(), ParamSpace{0.0, 10.0, {}}), qubit_damping(), 1.0),
                  PreconditionError);

  StreamRng rng(44, 0);
  for (int t = 0; t < 20; ++t) {
    const ChannelFamily f1 = random_damping(rng, 2 + t % 2);
    const ChannelFamily f2 = random_damping(rng, 2);
    const double theta = 0.2 + rng.uniform();
    CHECK(additivity_residual(f1, f2, theta).residual <= 1e-7);
  }
}

TEST_CASE("superadditivity of optimizer values", "[fisher][superadditivity]") {
  const SuperadditivityReport u = superadditivity_check(make_unitary_family(qubit_h()), 0.2, 1, 1, quick(5));
  CHECK(u.holds);
  CHECK(u.j_sum_copies >= 2.0 * u.j_n - 2e-3);
  CHECK(u.j_sum_copies >= 3.99);

  const SuperadditivityReport pd = superadditivity_check(qubit_damping(), kLn2, 1, 1, quick(6));
  CHECK(pd.holds);
  CHECK(pd.j_sum_copies >= 2.0 / 3.0 - 2e-3);

  const SuperadditivityReport c = superadditivity_check(make_identity_family(2), 0.0, 1, 1, quick(7));
  CHECK(c.holds);
  CHECK_THAT(c.j_sum_copies, WithinAbs(0.0, 1e-12));
  CHECK_THROWS_AS(superadditivity_check(qubit_damping(), kLn2, 0, 1), PreconditionError);
}

TEST_CASE("shift mixture stage Fisher information", "[fisher][shift_mixture]") {
  const ShiftMixtureReport two = shift_mixture_stage_fisher(2, {0.5, -0.5}, {0.5, 0.5});
  CHECK_THAT(two.effective, WithinAbs(4.0, 1e-12));
  REQUIRE(two.full_space.has_value());
  CHECK_THAT(*two.full_space, WithinAbs(4.0, 1e-8));
  CHECK(two.max_deviation <= 1e-8);
  CHECK(two.outcomes_checked > 0);

  CHECK_THAT(shift_mixture_stage_fisher(1, {0.7, -0.1}, {0.5, 0.5}).effective, WithinAbs(0.64, 1e-12));
  CHECK_THAT(shift_mixture_stage_fisher(5, {1.0, 0.0, 0.5}, {0.2, 0.3, 0.5}, false).effective, WithinAbs(25.0, 1e-10));
  CHECK_THROWS_AS(shift_mixture_stage_fisher(0, {0.5, -0.5}, {0.5, 0.5}), PreconditionError);
}

TEST_CASE("FisherValue never leaks infinity", "[fisher][value]") {
  const FisherValue inf = FisherValue::infinite();
  const FisherValue one = FisherValue::finite(1.0);
  CHECK_THROWS_AS(inf.value(), PreconditionError);
  CHECK(one.at_most(inf));
  CHECK_FALSE(inf.at_most(one));
  CHECK(inf.at_most(inf));
  CHECK(one.at_most(FisherValue::finite(0.9), 0.2));
  CHECK(inf.to_string() == "infinite");
}

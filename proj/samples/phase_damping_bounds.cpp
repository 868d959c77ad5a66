// Qubit phase damping with coherence e^{-theta}: channel RLD maximum, the
// optimizer's SLD value, and a Monte Carlo run of the Bell-basis measurement.

#include <cmath>
#include <cstdio>

#include "qest/estimate.hpp"
#include "qest/fisher.hpp"

int main() {
  using namespace qest;
  Eigen::MatrixXd rates(2, 2);
  rates << 0.0, 1.0, 1.0, 0.0;
  const ChannelFamily f = make_exponential_phase_damping(rates);

  for (double theta : {0.25, std::log(2.0), 1.5}) {
    const ChoiPair pair = choi_pair(f, theta);
    const RldChannelResult rld = max_rld_channel(pair);
    SldOptimizerOptions opts;
    opts.restarts = 4;
    const SldOptimum sld = optimize_sld_input(pair, opts);
    const double c = std::exp(-theta);
    std::printf("theta=%.4f  J_R max=%.10f  J_S opt=%.10f  c^2/(1-c^2)=%.10f\n", theta, rld.value.value(), sld.j_best,
                c * c / (1.0 - c * c));
  }

  const double theta = std::log(2.0);
  const Estimator bell = sld_eigenbasis_estimator(f, theta, maximally_entangled_input(2));
  const MseEstimate m = simulate_mse(f, theta, bell, 100000, 1);
  std::printf("single-shot Bell MSE %.5f +- %.5f  (1/J = 3 for the unbiased limit)\n", m.mean, m.std_error);
  return 0;
}

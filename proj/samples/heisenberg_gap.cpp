// Cramer-Rao value 1/n^2 against the covariant mini-max risk for phase
// estimation, printed as a table of n, risk and n^2 * risk.

#include <cstdio>

#include "qest/phase.hpp"

int main() {
  using namespace qest;
  std::printf("%6s %14s %14s %10s\n", "n", "1/n^2", "covariant", "n^2*risk");
  for (count n : {1, 2, 5, 10, 20, 50, 100, 200, 500, 1000}) {
    const PhaseBoundsReport r = phase_bounds_report(n);
    std::printf("%6zu %14.6e %14.6e %10.6f\n", n, r.cramer_rao, r.covariant, r.ratio);
  }
  std::printf("pi^2 = %.6f\n", kPi * kPi);
  return 0;
}

#include <doctest.h>

#include <cmath>
#include <vector>

#include "bevcoord/stats.hpp"

using namespace bevcoord;

TEST_CASE("chi-square quantiles match standard table values") {
  // Two-digit table constants; the implementation is far more precise.
  CHECK(stats::chi2_quantile(2, 0.95) == doctest::Approx(5.991).epsilon(1e-3));
  CHECK(stats::chi2_quantile(2, 0.99) == doctest::Approx(9.210).epsilon(1e-3));
  CHECK(stats::chi2_quantile(1, 0.95) == doctest::Approx(3.841).epsilon(1e-3));
  CHECK(stats::chi2_quantile(4, 0.95) == doctest::Approx(9.488).epsilon(1e-3));
}

TEST_CASE("chi-square cdf inverts its quantile") {
  for (int dof : {1, 2, 3, 5, 9}) {
    for (double p : {0.05, 0.5, 0.9, 0.95, 0.99}) {
      const double x = stats::chi2_quantile(dof, p);
      CHECK(stats::chi2_cdf(dof, x) == doctest::Approx(p).epsilon(1e-9));
    }
  }
}

TEST_CASE("chi2 cdf with 2 dof has the closed form 1 - exp(-x/2)") {
  for (double x : {0.1, 1.0, 2.0, 5.991, 9.21}) {
    CHECK(stats::chi2_cdf(2, x) ==
          doctest::Approx(1.0 - std::exp(-x / 2.0)).epsilon(1e-10));
  }
}

TEST_CASE("rng streams are deterministic and seed-sensitive") {
  Rng a(7), b(7), c(8);
  std::vector<std::uint64_t> va, vb, vc;
  for (int i = 0; i < 16; ++i) {
    va.push_back(a.next_u64());
    vb.push_back(b.next_u64());
    vc.push_back(c.next_u64());
  }
  CHECK(va == vb);
  CHECK(va != vc);
}

TEST_CASE("uniform stays in range and fills it") {
  Rng rng(123);
  double lo = 1.0, hi = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  CHECK(lo < 0.01);
  CHECK(hi > 0.99);
}

TEST_CASE("normal moments match a standard normal") {
  Rng rng(42);
  const int n = 50000;
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    sum += x;
    sum_sq += x * x;
  }
  const double mean = sum / n;
  const double var = sum_sq / n - mean * mean;
  // Standard errors: mean ~ 1/sqrt(n) = 0.0045, var ~ sqrt(2/n) = 0.0063.
  CHECK(std::abs(mean) < 0.02);
  CHECK(std::abs(var - 1.0) < 0.03);
}

TEST_CASE("poisson mean tracks lambda across both regimes") {
  Rng rng(9);
  for (double lambda : {0.5, 3.0, 40.0}) {
    const int n = 20000;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
      const int k = rng.poisson(lambda);
      CHECK(k >= 0);
      sum += k;
    }
    const double mean = sum / n;
    // 5 standard errors of the sample mean.
    CHECK(std::abs(mean - lambda) < 5.0 * std::sqrt(lambda / n));
  }
}

TEST_CASE("forked streams decouple from the parent") {
  Rng parent(5);
  Rng child = parent.fork(1);
  Rng parent2(5);
  Rng child2 = parent2.fork(1);
  for (int i = 0; i < 8; ++i) {
    CHECK(child.next_u64() == child2.next_u64());
  }
  // Forking with different salts yields different streams.
  Rng other = parent2.fork(2);
  bool differs = false;
  Rng child3 = Rng(5).fork(1);
  for (int i = 0; i < 8; ++i) {
    if (child3.next_u64() != other.next_u64()) differs = true;
  }
  CHECK(differs);
}

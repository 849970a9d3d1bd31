#include <catch_amalgamated.hpp>

#include "hrg/dense.hpp"
#include "hrg/mcmc.hpp"

using namespace hrg;

namespace {

Eigen::MatrixXd dense_laplacian(Boundary bc, const LatticeShape& sh) {
  const auto V = static_cast<Eigen::Index>(sh.volume());
  return const_q(sh.dim(), sh.block_side()) * (Eigen::MatrixXd::Identity(V, V) - dense_J(bc, sh));
}

void randomise(FieldState& s, std::uint64_t seed) {
  StreamRng rng{CounterRng(seed)};
  std::vector<double> v(s.components());
  for (std::uint64_t x = 0; x < s.volume(); ++x) {
    for (auto& c : v) c = rng.normal();
    s.set(x, v.data());
  }
}

}  // namespace

TEST_CASE("block-sum quadratic form matches the dense Laplacian") {
  for (Boundary bc : {Boundary::Periodic, Boundary::Free})
    for (auto sh : {LatticeShape(2, 2, 3), LatticeShape(4, 2, 2), LatticeShape(1, 3, 3)}) {
      const auto lap = dense_laplacian(bc, sh);
      FieldState s(sh, bc, 1);
      randomise(s, 11);
      Eigen::VectorXd phi(static_cast<Eigen::Index>(sh.volume()));
      for (std::uint64_t x = 0; x < sh.volume(); ++x) phi[x] = s.value(x, 0);
      const Eigen::VectorXd h = lap * phi;
      CHECK(s.quadratic_energy() == Catch::Approx(0.5 * phi.dot(h)).epsilon(1e-12));
      for (std::uint64_t x = 0; x < sh.volume(); ++x) {
        const auto loc = s.local_quadratic(x);
        CHECK(loc.diagonal == Catch::Approx(lap(x, x)).epsilon(1e-12));
        CHECK(loc.field[0] == Catch::Approx(h[x]).margin(1e-12));
      }
    }
}

TEST_CASE("single-site energy change") {
  const LatticeShape sh(2, 2, 3);
  FieldState s(sh, Boundary::Free, 2);
  randomise(s, 5);
  const double g = 0.3, nu = -0.2;
  for (std::uint64_t x : {0ULL, 17ULL, 63ULL}) {
    const double before = total_energy(s, g, nu);
    const auto loc = s.local_quadratic(x);
    const double d[2] = {0.37, -0.81};
    const double cur[2] = {s.value(x, 0), s.value(x, 1)};
    const double prop[2] = {cur[0] + d[0], cur[1] + d[1]};
    const double predicted = d[0] * loc.field[0] + d[1] * loc.field[1] + 0.5 * loc.diagonal * (d[0] * d[0] + d[1] * d[1]) +
                             site_potential(prop, 2, g, nu) - site_potential(cur, 2, g, nu);
    s.set(x, prop);
    CHECK(total_energy(s, g, nu) - before == Catch::Approx(predicted).epsilon(1e-10));
  }
}

TEST_CASE("incremental block sums stay consistent") {
  const LatticeShape sh(4, 2, 2);
  FieldState s(sh, Boundary::Periodic, 1);
  StreamRng rng{CounterRng(9)};
  for (int t = 0; t < 200; ++t) metropolis_sweep(s, 0.1, -0.1, 1.5, rng);
  CHECK(s.cache_drift() < 1e-10);
  FieldState copy = s;
  copy.rebuild();
  CHECK(copy.quadratic_energy() == Catch::Approx(s.quadratic_energy()).epsilon(1e-10));
  CHECK_THROWS_AS(FieldState(LatticeShape(4, 2, 6), Boundary::Periodic, 1), std::domain_error);
}

TEST_CASE("two-site chain samples the exact marginal") {
  // d = 1, L = 2, N = 1: two sites, so the law of φ_0 is a one-dimensional integral
  const LatticeShape sh(1, 2, 1);
  ModelParams m;
  m.g = 0.5;
  m.nu = -0.3;
  ChainConfig cc;
  cc.sweeps = 200000;
  cc.burn_in = 1000;
  const auto lap = dense_laplacian(Boundary::Periodic, sh);
  // <φ_0²> and <φ_0φ_1> by 2-D quadrature
  double Z = 0, m00 = 0, m01 = 0;
  const int K = 801;
  const double R = 6, h = 2 * R / (K - 1);
  for (int i = 0; i < K; ++i)
    for (int j = 0; j < K; ++j) {
      const double a = -R + i * h, b = -R + j * h;
      const double e = 0.5 * (lap(0, 0) * a * a + 2 * lap(0, 1) * a * b + lap(1, 1) * b * b) + 0.25 * m.g * (a * a * a * a + b * b * b * b) +
                       0.5 * m.nu * (a * a + b * b);
      const double w = std::exp(-e);
      Z += w;
      m00 += w * a * a;
      m01 += w * a * b;
    }
  const auto e = run_chains(m, Boundary::Periodic, sh, {0, 1}, cc, 2);
  CHECK(std::abs(e.two_point[0].mean - m00 / Z) < 4 * e.two_point[0].err);
  CHECK(std::abs(e.two_point[1].mean - m01 / Z) < 4 * e.two_point[1].err);
  CHECK(e.two_point[0].err < 0.02 * m00 / Z);
}

TEST_CASE("Gaussian chain reproduces the Green function") {
  const LatticeShape sh(4, 2, 1);
  for (Boundary bc : {Boundary::Periodic, Boundary::Free})
    for (int n : {1, 2}) {
      ModelParams m;
      m.n = n;
      m.g = 0;
      m.nu = 0.3;
      ChainConfig cc;
      cc.sweeps = 40000;
      const auto e = run_chains(m, bc, sh, {0, 1}, cc, 2);
      for (int k = 0; k < 2; ++k) {
        const double ref = green(bc, m.nu, sh, class_representative(k, sh));
        CHECK(std::abs(e.two_point[k].mean - ref) < 4 * e.two_point[k].err + 1e-3 * ref);
      }
      CHECK(std::abs(e.chi.mean - 1 / zero_mode_mass(bc, m.nu, sh)) < 4 * e.chi.err);
    }
}

TEST_CASE("chains are reproducible and independent of the thread count") {
  const LatticeShape sh(4, 2, 2);
  ModelParams m;
  m.g = 0.05;
  m.nu = -0.1;
  ChainConfig cc;
  cc.sweeps = 500;
  cc.burn_in = 100;
  const auto a = run_chains(m, Boundary::Periodic, sh, {0, 1, 2}, cc, 3, 1);
  const auto b = run_chains(m, Boundary::Periodic, sh, {0, 1, 2}, cc, 3, 3);
  for (int k = 0; k < 3; ++k) CHECK(a.two_point[k].mean == b.two_point[k].mean);
  CHECK(a.chi.mean == b.chi.mean);
  cc.seed = 2;
  const auto c = run_chains(m, Boundary::Periodic, sh, {0}, cc, 1);
  CHECK(c.two_point[0].mean != a.two_point[0].mean);
  ChainConfig bad;
  bad.width = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("translation average agrees with the single-pair estimator") {
  const LatticeShape sh(2, 2, 2);
  ModelParams m;
  m.g = 0.2;
  m.nu = 0.1;
  ChainConfig avg, single;
  avg.sweeps = single.sweeps = 60000;
  single.translation_average = false;
  const auto a = run_chains(m, Boundary::Free, sh, {0, 1, 2}, avg, 2);
  const auto b = run_chains(m, Boundary::Free, sh, {0, 1, 2}, single, 2);
  for (int k = 0; k < 3; ++k) {
    CHECK(std::abs(a.two_point[k].mean - b.two_point[k].mean) < 4 * std::hypot(a.two_point[k].err, b.two_point[k].err));
    CHECK(a.two_point[k].err < b.two_point[k].err);
  }
}

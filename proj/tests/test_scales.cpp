#include <catch_amalgamated.hpp>

#include "hrg/scales.hpp"

using namespace hrg;

namespace {
ScaleParams params(int d, int N, int n = 1, double g = 0.05) { return ScaleParams::leading_order(d, 2, N, n, g); }
}  // namespace

TEST_CASE("constants") {
  CHECK(const_B(1, 4, 2) == 8.4375);
  CHECK(const_q(4, 2) == Catch::Approx(20.0 / 21.0));
  CHECK(const_z(4, 2) == Catch::Approx(15.0 / 16.0 / 3.0));
  CHECK(theta_hat(4) == 0.0);
  CHECK_THROWS_AS(ScaleParams::leading_order(3, 2, 4, 1, 0.1), std::domain_error);
  CHECK_THROWS_AS(ScaleParams::leading_order(4, 2, 4, 1, 0.0), std::domain_error);
}

TEST_CASE("window, shift and field scales") {
  for (int N : {3, 6, 11}) {
    auto p5 = params(5, N);
    CHECK(window_w(p5) / (p5.A_d * std::sqrt(p5.g_inf)) == Catch::Approx(std::pow(2.0, -N * 2.5)));
    // h^2 / l^2 = g^{-1/2} L^{(d-4)N/2}
    const double r = std::pow(large_field_h(p5) / gaussian_l(p5), 2);
    CHECK(r == Catch::Approx(std::pow(p5.g_inf, -0.5) * std::pow(2.0, N / 2.0)));
    auto p4 = params(4, N, 4);
    // θ̂ = 0 for n = 4: no polynomial factor in N
    CHECK(window_w(p4) == Catch::Approx(p4.A_d * std::pow(std::log(4.0), gamma_hat(4)) / std::sqrt(p4.B()) * std::pow(2.0, -2 * N)));
    // v_N L^{-(d-2)N} / w_N = h_N^2
    for (int d : {4, 5, 6}) {
      auto p = params(d, N);
      CHECK(shift_v(p) * std::pow(2.0, -(d - 2.0) * N) / window_w(p) == Catch::Approx(std::pow(large_field_h(p), 2)).epsilon(1e-12));
    }
  }
  // w_N << v_N
  double prev = 1e300;
  for (int N = 1; N <= 40; ++N)
    for (int d : {4, 5}) {
      auto p = params(d, N);
      const double ratio = window_w(p) / shift_v(p);
      CHECK(ratio < 1);
      if (d == 4) {
        CHECK(ratio < prev);
        prev = ratio;
      }
    }
}

TEST_CASE("effective critical points") {
  auto p = params(4, 6);
  CHECK(nu_eff(Boundary::Periodic, p).value == p.nu_c);
  auto p5 = params(5, 6);
  CHECK(nu_eff(Boundary::Free, p5).value == Catch::Approx(p5.nu_c - p5.q() * p5.A_d * std::pow(2.0, -12)));
  CHECK_FALSE(nu_eff(Boundary::Free, p5).approximate);
  CHECK(nu_eff(Boundary::Free, params(6, 6)).approximate);
  // separation of the two windows in units of w_N grows with N
  double prev = 0;
  for (int N = 2; N <= 20; ++N) {
    auto q = params(5, N);
    const double sep = std::abs(nu_eff(Boundary::Periodic, q).value - nu_eff(Boundary::Free, q).value) / window_w(q);
    CHECK(sep > prev);
    prev = sep;
  }
  CHECK(p.nu_c == Catch::Approx(-3 * 0.05 * 1.25));
}

TEST_CASE("renormalised masses") {
  auto p = params(4, 6);
  CHECK(mass_window(0, Boundary::Periodic, Regime::NonGaussian, p) == 0.0);
  CHECK(std::abs(mass_window(p.q(), Boundary::Free, Regime::Gaussian, p)) < 1e-18);
  CHECK_THROWS_AS(mass_window(0, Boundary::Periodic, Regime::Gaussian, p), std::domain_error);
  for (int s = -10; s <= 10; ++s)
    for (auto bc : {Boundary::Periodic, Boundary::Free}) {
      int N0 = 1;
      while (N0 < 60 && !in_critical_mass_domain(mass_window(s, bc, Regime::NonGaussian, params(4, N0)), 4, 2, N0)) ++N0;
      REQUIRE(N0 < 60);
      for (int N = N0; N < N0 + 15; ++N)
        CHECK(in_critical_mass_domain(mass_window(s, bc, Regime::NonGaussian, params(4, N)), 4, 2, N));
    }
}

TEST_CASE("plateau predictions") {
  for (int N : {6, 8, 12}) {
    auto p = params(4, N);
    LatticeShape sh(4, 2, N);
    auto x = class_representative(N, sh);
    auto pr = predict_plateau(x, 0.0, p);
    CHECK(pr.total == pr.decay_term + pr.plateau_term);
    CHECK(pr.plateau_term == Catch::Approx(std::sqrt(p.B() * N) * profile_f(1, 0) * std::pow(2.0, -2 * N)));
    // L^{dN} h^2 f = (BN)^{1/2} L^{2N} f
    const double V = std::pow(2.0, 4 * N);
    CHECK(std::abs(V * std::pow(large_field_h(p), 2) / (std::sqrt(p.B() * N) * std::pow(2.0, 2 * N)) - 1) < 1e-12);
    double prev = 1e300;
    for (double s : {-2.0, -1.0, 0.0, 1.0, 3.0}) {
      const double t = predict_plateau(x, s, p).total;
      CHECK(t < prev);
      prev = t;
    }
    // s -> ∞: plateau ~ h^2 / s
    CHECK(predict_plateau(x, 1e3, p).plateau_term * 1e3 / std::pow(large_field_h(p), 2) == Catch::Approx(1).margin(0.02));
  }
  // d > 4 closed form and crossover |x| ∝ L^{dN/(2(d-2))}
  std::vector<double> rs;
  for (int N : {4, 6, 8}) {
    auto p = params(6, N);
    const double V = std::pow(2.0, 6 * N);
    CHECK(std::abs(V * std::pow(large_field_h(p), 2) / (std::pow(p.g_inf, -0.5) * std::pow(2.0, 3 * N)) - 1) < 1e-12);
    rs.push_back(crossover_radius(0, p) / std::pow(2.0, 6.0 * N / 8));
  }
  CHECK(rs[0] == Catch::Approx(rs[2]).epsilon(1e-12));
  auto p = params(4, 8);
  const int jc = crossover_class(0, p);
  CHECK(jc > 0);
  CHECK(jc <= 8);
}

TEST_CASE("Gaussian predictions") {
  for (int N : {3, 6, 8}) {
    auto p = params(4, N);
    LatticeShape sh(4, 2, N);
    for (auto bc : {Boundary::Periodic, Boundary::Free})
      for (double s : {0.5, 1.0, 3.0}) {
        KernelEval k(sh, gaussian_mass(s, bc, p));
        double sum = 0;
        for (int j = 0; j <= N; ++j) sum += static_cast<double>(k.class_size(j)) * predict_gaussian(class_representative(j, sh), s, p, bc).total;
        CHECK(std::abs(sum * s * std::pow(2.0, -2 * N) - 1) < 1e-10);
      }
    // ≍ (|x| v 1)^{-(d-2)}
    double lo = 1e300, hi = 0;
    for (int j = 0; j <= N; ++j) {
      auto x = class_representative(j, sh);
      const double v = predict_gaussian(x, 1.0, p).total * std::pow(std::max(euclid_norm(x), 1.0), 2);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    CHECK(hi / lo < 10);
    // Free at s = q: C_{0,<=N} plus a constant
    auto o = Site::origin(sh);
    KernelEval k0(sh, 0.0);
    for (int j = 1; j <= N; ++j) {
      auto x = class_representative(j, sh);
      CHECK(predict_gaussian(x, p.q(), p, Boundary::Free).total - predict_gaussian(o, p.q(), p, Boundary::Free).total ==
            Catch::Approx(k0.c_cum(j) - k0.c_cum(0)).epsilon(1e-10));
    }
  }
}

#include <catch_amalgamated.hpp>

#include "hrg/dense.hpp"

using namespace hrg;

TEST_CASE("gamma_j") {
  CHECK(gamma_j(1, 0.0, 2) == 1.0);
  CHECK(gamma_j(3, 0.0, 2) == 16.0);
  CHECK(gamma_j(2, 0.25, 2) == 2.0);
  CHECK_THROWS_AS(gamma_j(3, -1.0 / 16.0, 2), std::domain_error);
  KernelEval k(LatticeShape(4, 2, 4), 0.01);
  for (int j = 1; j <= 4; ++j) CHECK(k.gamma(j) == gamma_j(j, 0.01, 2));
  CHECK_THROWS_AS(KernelEval(LatticeShape(4, 2, 4), -1.0 / 64.0), std::domain_error);
}

TEST_CASE("projection kernels") {
  LatticeShape s(1, 2, 3);
  CHECK(p_kernel(1, 0, s) == 0.5);
  CHECK(p_kernel(1, 2, s) == 0.0);
  for (auto sh : {LatticeShape(1, 2, 4), LatticeShape(2, 3, 2), LatticeShape(4, 2, 2)}) {
    KernelEval k(sh, 0.3);
    for (int j = 1; j <= sh.scales(); ++j) {
      double sp = 0, sc = 0;
      for (int c = 0; c <= sh.scales(); ++c) {
        sp += static_cast<double>(k.class_size(c)) * k.p(j, c);
        sc += static_cast<double>(k.class_size(c)) * k.c_level(j, c);
      }
      CHECK(std::abs(sp) < 1e-12);
      CHECK(std::abs(sc) < 1e-12);
    }
  }
}

TEST_CASE("constants and zero mode") {
  CHECK(const_q(4, 2) == Catch::Approx(20.0 / 21.0).epsilon(1e-15));
  CHECK(std::abs(const_q(4, 64) - 1.0) < std::pow(2.0, -10));
  LatticeShape sh(4, 2, 3);
  CHECK(c_hat(Boundary::Periodic, 1.0, sh) == Catch::Approx(std::pow(2.0, -12)));
  CHECK(c_hat(Boundary::Free, 0.0, sh) == Catch::Approx(std::pow(2.0, -6) / const_q(4, 2)));
  CHECK_THROWS_AS(c_hat(Boundary::Periodic, 0.0, sh), std::domain_error);
  CHECK_THROWS_AS(c_hat(Boundary::Free, -const_q(4, 2) / 64.0, sh), std::domain_error);
}

TEST_CASE("susceptibility identity") {
  LatticeShape sh(4, 2, 4);
  for (double a : {1.0, std::pow(2.0, -8), 10.0 * std::pow(2.0, -16)}) {
    KernelEval k(sh, a);
    double s = 0;
    for (int c = 0; c <= 4; ++c) s += static_cast<double>(k.class_size(c)) * k.green(Boundary::Periodic, c);
    CHECK(std::abs(s * a - 1.0) < 1e-12);
  }
}

TEST_CASE("dense resolvent and spectral Laplacians") {
  for (auto sh : {LatticeShape(4, 2, 2), LatticeShape(5, 2, 2), LatticeShape(2, 3, 2)}) {
    const auto V = static_cast<Eigen::Index>(sh.volume());
    const int N = sh.scales();
    const double q = const_q(sh.dim(), sh.block_side());
    Eigen::MatrixXd spec = Eigen::MatrixXd::Zero(V, V);
    for (int j = 1; j <= N; ++j) spec += sh.Lpow(-2.0 * (j - 1)) * dense_P(j, sh);
    auto P = build_dense(Boundary::Periodic, 0.1, sh);
    auto F = build_dense(Boundary::Free, 0.1, sh);
    CHECK((P.minus_laplacian - spec).cwiseAbs().maxCoeff() < 1e-12);
    Eigen::MatrixXd specF = spec + q * sh.Lpow(-2.0 * N) * dense_Q(N, sh);
    CHECK((F.minus_laplacian - specF).cwiseAbs().maxCoeff() < 1e-12);
    // J^P rows sum to one; J^F rows to 1 - L^{-2N}
    CHECK((P.J.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
    CHECK((F.J.rowwise().sum().array() - (1.0 - sh.Lpow(-2.0 * N))).abs().maxCoeff() < 1e-12);
    for (double a : {0.1, sh.Lpow(-2.0 * N)})
      for (auto bc : {Boundary::Periodic, Boundary::Free}) {
        auto D = build_dense(bc, a, sh);
        REQUIRE(D.resolvent);
        Eigen::MatrixXd I = (D.minus_laplacian + a * Eigen::MatrixXd::Identity(V, V)) * *D.resolvent;
        CHECK((I - Eigen::MatrixXd::Identity(V, V)).cwiseAbs().maxCoeff() < 1e-10);
      }
    // PSD of C_{a,<=N} for a >= 0
    for (double a : {0.0, 0.2}) {
      auto D = build_dense(Boundary::Periodic, a, sh);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(D.c_cum);
      CHECK(es.eigenvalues().minCoeff() >= -1e-10);
      CHECK_FALSE((a == 0.0 && D.resolvent.has_value()));
    }
  }
}

TEST_CASE("c_cum against dense oracle") {
  LatticeShape sh(4, 2, 3);
  KernelEval k(sh, 0.0);
  // C_{0,<=N} = (-Δ^F)^{-1} - Ĉ^F at a = 0
  auto D = build_dense(Boundary::Free, 0.0, sh);
  Eigen::MatrixXd inv = D.minus_laplacian.inverse();
  const double ch = c_hat(Boundary::Free, 0.0, sh);
  CHECK(std::abs(inv(0, 1) - ch - k.c_cum(1)) < 1e-12);
  CHECK(std::abs(inv(0, 2) - ch - k.c_cum(1)) < 1e-12);
  CHECK(std::abs(inv(0, 16) - ch - k.c_cum(2)) < 1e-12);
  CHECK(std::abs(inv(0, 256) - ch - k.c_cum(3)) < 1e-12);
}

TEST_CASE("green plateau crossover") {
  const int d = 4, L = 2, N = 10;
  const double t = 1.0, delta = 0.5;
  LatticeShape sh(d, L, N);
  const double a = t * sh.Lpow(-(2.0 + delta) * N);
  KernelEval k(sh, a);
  const double plateau = 1.0 / (a * static_cast<double>(sh.volume()));
  const double threshold = 2 * t * sh.Lpow(-delta * N);
  int far = 0, near = 0;
  for (int j = 0; j <= N; ++j)
    for (auto x : {class_representative(j, sh), class_far_representative(j, sh)}) {
      const double r = std::pow(euclid_norm(x) / sh.Lpow(N), d - 2);
      const double g = k.green(Boundary::Periodic, x);
      if (r > threshold) {
        ++far;
        CHECK(g / plateau > 0.5);
        CHECK(g / plateau < 2.0);
      } else if (r < 0.1 * threshold) {
        ++near;
        const double decay = green_infty(x, 1e-14).value;
        CHECK(g / decay > 0.5);
        CHECK(g / decay < 2.0);
      }
    }
  CHECK(far > 0);
  CHECK(near > 0);
}

TEST_CASE("massless infinite-volume Green function") {
  CHECK_THROWS_AS(green_infty(2, 2, 1, 1e-10), std::domain_error);
  // d = 4, L = 2: exactly 4^{-j} for j >= 1 and 5/4 at the origin
  for (int j = 1; j <= 8; ++j) CHECK(green_infty(4, 2, j, 1e-22).value == Catch::Approx(std::pow(4.0, -j)).epsilon(1e-12));
  CHECK(green_infty(4, 2, 0, 1e-15).value == Catch::Approx(1.25).epsilon(1e-12));
  // deep classes stay accurate even when the value is far below the tolerance
  for (int j : {30, 60, 200}) {
    const auto g = green_infty(4, 2, j, 1e-10);
    CHECK(g.value == Catch::Approx(std::pow(4.0, -j)).epsilon(1e-9));
    CHECK(g.tail_bound < 1e-10 * std::pow(4.0, -j));
  }
  for (int j = 0; j <= 6; ++j) {
    auto a = green_infty(5, 3, j, 1e-6), b = green_infty(5, 3, j, 0.5e-6);
    CHECK(std::abs(a.value - b.value) < 1e-6);
    auto exact = green_infty(5, 3, j, 1e-15);
    CHECK(std::abs(a.value - exact.value) <= a.tail_bound);
    // finite volume agrees up to the truncation bound at M = N
    KernelEval k(LatticeShape(5, 3, 7), 0.0);
    const double r = std::pow(3.0, -3.0);
    CHECK(std::abs(k.c_cum(j) - exact.value) < (1 + std::pow(3.0, -5)) * std::pow(r, 7) / (1 - r));
  }
  // comparable to |x|^{-(d-2)}
  LatticeShape sh(4, 2, 10);
  double lo = 1e300, hi = 0;
  for (int j = 1; j <= 10; ++j)
    for (auto x : {class_representative(j, sh), class_far_representative(j, sh)}) {
      const double r = green_infty(x, 1e-14).value * std::pow(euclid_norm(x), 2);
      lo = std::min(lo, r);
      hi = std::max(hi, r);
    }
  CHECK(hi / lo < 16.0);
}

TEST_CASE("d_sq metric and mass differences") {
  CHECK(dsq_metric(2.0, 2.0) == 0.0);
  CHECK(dsq_metric(-1.0, 4.0) == 3.0);
  CHECK(dsq_metric(4.0, 1.0) == 1.0);
  std::vector<double> cs;
  for (int N = 3; N <= 8; ++N) {
    LatticeShape sh(4, 2, N);
    const double u = sh.Lpow(-2.0 * N);
    auto x = Site::from_coords({1, 0, 0, 0}, sh);
    cs.push_back(mass_difference_constant(-0.3 * u, 2.0 * u, x, 4.0));
    CHECK_THROWS_AS(mass_difference_constant(-u * 10, u, x, 4.0), std::domain_error);
  }
  // the bound is an upper bound: the empirical constant must not grow with N
  for (double c : cs) CHECK(c <= 4.0 * cs.front());
}

TEST_CASE("Gaussian-regime Green function trends") {
  // |ℂ^P_{sL^{-2N},N}(x) - ℂ_{0,∞}(x)| decreases with N at fixed x
  const double s = 1.0;
  double prev = 1e300;
  for (int N = 3; N <= 12; ++N) {
    LatticeShape sh(4, 2, N);
    auto x = Site::from_coords({1, 0, 0, 0}, sh);
    const double diff = std::abs(green(Boundary::Periodic, s * sh.Lpow(-2.0 * N), sh, x) - green_infty(x, 1e-15).value);
    CHECK(diff < prev);
    prev = diff;
  }
}

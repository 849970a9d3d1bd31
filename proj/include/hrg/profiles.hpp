#pragma once

// Quadrature for I_k(s) = ∫_0^∞ x^k exp(-x^4/4 - s x^2/2) dx and the profile
// functions built from it. Everything is carried as log-integrals.

#include <algorithm>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace hrg {

enum class QuadScheme { Adaptive, FixedGauss };

struct QuadConfig {
  double x_max = 0;  // 0: max(6, 2 sqrt|s|) + 2, extended past the peak if needed
  int nodes = 8;     // FixedGauss: sub-panels per panel
  QuadScheme scheme = QuadScheme::Adaptive;
  double tol = 1e-13;
};

struct LogIntegral {
  double log_value = 0;
  double rel_error = 0;
  double x_max = 0;
};

namespace detail {

inline double log_integrand(double k, double s, double x) {
  return k * std::log(x) - 0.25 * x * x * x * x - 0.5 * s * x * x;
}

struct PeakInfo {
  double x_peak, width;
};

inline PeakInfo peak_of(double k, double s) {
  double xp2 = 0;
  if (k > 0)
    xp2 = 0.5 * (-s + std::sqrt(s * s + 4 * k));
  else if (s < 0)
    xp2 = -s;
  const double xp = std::sqrt(std::max(xp2, 0.0));
  double curv = 3 * xp2 + s + (xp > 0 ? k / xp2 : 0.0);
  if (!(curv > 1e-6)) curv = 1.0;
  return {xp, std::min(1.0, 1.0 / std::sqrt(curv))};
}

}  // namespace detail

inline LogIntegral log_Ik(double k, double s, const QuadConfig& cfg = {}) {
  using boost::math::quadrature::gauss;
  using boost::math::quadrature::gauss_kronrod;
  if (!(k > -1)) throw std::domain_error("I_k requires k > -1");
  const auto pk = detail::peak_of(k, s);
  const double xp = pk.x_peak, w = pk.width;
  const double ref = xp > 0 ? detail::log_integrand(k, s, xp) : 0.0;

  double X = cfg.x_max > 0 ? cfg.x_max : std::max(6.0, 2.0 * std::sqrt(std::abs(s))) + 2.0;
  if (cfg.x_max <= 0) {
    X = std::max(X, xp + 30 * w);
    // envelope: integrand beyond X falls faster than exp(-X^3 (t-X)) once X^3 > |s| X
    while (detail::log_integrand(k, s, X) - ref > std::log(cfg.tol) - 10) X *= 1.25;
  }

  std::vector<double> br{0.0, X};
  for (double m : {-8.0, -4.0, 4.0, 8.0, 16.0}) {
    const double b = xp + m * w;
    if (b > 0 && b < X) br.push_back(b);
  }
  std::sort(br.begin(), br.end());
  br.erase(std::unique(br.begin(), br.end()), br.end());

  auto f = [&](double x) { return x > 0 ? std::exp(detail::log_integrand(k, s, x) - ref) : (k == 0 ? std::exp(-ref) : 0.0); };
  // first panel for non-integer k via u = x^{k+1}/(k+1): ∫ x^k e^{-φ} dx = ∫ e^{-φ(x(u))} du
  auto f_first = [&](double u) {
    const double x = std::pow((k + 1) * u, 1.0 / (k + 1));
    return std::exp(-0.25 * x * x * x * x - 0.5 * s * x * x - ref);
  };

  double total = 0, err = 0;
  for (std::size_t i = 0; i + 1 < br.size(); ++i) {
    double a = br[i], b = br[i + 1];
    double v = 0, e = 0;
    const bool subst = (i == 0 && k != std::floor(k));
    if (subst) {
      a = 0;
      b = std::pow(b, k + 1) / (k + 1);
    }
    if (cfg.scheme == QuadScheme::Adaptive) {
      double l1 = 0;
      v = subst ? gauss_kronrod<double, 31>::integrate(f_first, a, b, 12, std::max(cfg.tol, 1e-14), &e, &l1)
                : gauss_kronrod<double, 31>::integrate(f, a, b, 12, std::max(cfg.tol, 1e-14), &e, &l1);
    } else {
      const int m = std::max(1, cfg.nodes);
      const double h = (b - a) / m;
      for (int p = 0; p < m; ++p) {
        const double lo = a + p * h, hi = lo + h;
        v += subst ? gauss<double, 20>::integrate(f_first, lo, hi) : gauss<double, 20>::integrate(f, lo, hi);
      }
    }
    total += v;
    err += e;
  }
  if (!(total > 0)) throw std::domain_error("I_k quadrature underflow");
  return {std::log(total) + ref, err / total, X};
}

inline double quad_Ik(double k, double s, double tol = 1e-13) {
  QuadConfig c;
  c.tol = tol;
  return std::exp(log_Ik(k, s, c).log_value);
}

inline double profile_f(int n, double s, double tol = 1e-13) {
  if (n < 1) throw std::domain_error("profile requires n >= 1");
  QuadConfig c;
  c.tol = tol;
  return std::exp(log_Ik(n + 1, s, c).log_value - log_Ik(n - 1, s, c).log_value) / n;
}

// Σ_{n,k}(s) = I_{n+k-1}(s) / I_{n-1}(s)
inline double sigma_moment(int n, int k, double s, double tol = 1e-13) {
  if (n < 1) throw std::domain_error("sigma_moment requires n >= 1");
  if (k < 0) throw std::domain_error("sigma_moment requires k >= 0");
  if (k == 0) return 1.0;
  QuadConfig c;
  c.tol = tol;
  return std::exp(log_Ik(n + k - 1, s, c).log_value - log_Ik(n - 1, s, c).log_value);
}

// M_{n,2p}(s) = (2/s)^p Γ((n+2p)/2) / Γ(n/2)
inline double gaussian_moment(int n, int p, double s) {
  if (!(s > 0)) throw std::domain_error("Gaussian moments need s > 0");
  if (n < 1 || p < 0) throw std::domain_error("Gaussian moments need n >= 1, p >= 0");
  return std::exp(p * std::log(2.0 / s) + std::lgamma(0.5 * (n + 2 * p)) - std::lgamma(0.5 * n));
}

}  // namespace hrg

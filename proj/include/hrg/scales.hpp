#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "covariance.hpp"
#include "profiles.hpp"

namespace hrg {

enum class Regime { NonGaussian, Gaussian };

inline std::string to_string(Regime r) { return r == Regime::NonGaussian ? "non-gaussian" : "gaussian"; }

inline double const_B(int n, int d, int L) { return (n + 8) * (1.0 - std::pow(static_cast<double>(L), -d)); }
inline double gamma_hat(int n) { return (n + 2.0) / (n + 8.0); }
inline double theta_hat(int n) { return 0.5 - gamma_hat(n); }

struct ScaleParams {
  int d = 4, L = 2, N = 1, n = 1;
  double g_inf = 0;  // g + O(g^2)
  double A_d = 1;    // susceptibility amplitude
  double c_F = 0;    // O(g) correction to the d = 4 free-boundary shift
  double nu_c = 0;   // critical point estimate
  std::vector<std::string> caveats;

  void validate() const {
    if (d < 4) throw std::domain_error("scale formulas need d >= 4");
    if (L < 2 || N < 1 || n < 1) throw std::domain_error("scale formulas need L >= 2, N >= 1, n >= 1");
    if (!(g_inf > 0)) throw std::domain_error("g_inf must be positive");
    if (!(A_d > 0)) throw std::domain_error("A_d must be positive");
  }

  double B() const { return const_B(n, d, L); }
  double q() const { return const_q(d, L); }
  double Lp(double e) const { return std::pow(static_cast<double>(L), e); }

  // small-g asymptotics: A_4 = (Bg/log L^2)^γ̂, A_d = 1, g_inf = g, ν_c = -(n+2) g ℂ_{0,∞}(o), c_F = 0
  static ScaleParams leading_order(int d, int L, int N, int n, double g) {
    ScaleParams p;
    p.d = d;
    p.L = L;
    p.N = N;
    p.n = n;
    p.g_inf = g;
    p.c_F = 0;
    if (d == 4)
      p.A_d = std::pow(const_B(n, d, L) * g / std::log(static_cast<double>(L) * L), gamma_hat(n));
    else
      p.A_d = 1.0;
    if (d > 2) p.nu_c = -(n + 2) * g * green_infty(d, L, 0, 1e-15).value;
    p.caveats = {"g_inf = g (O(g^2) dropped)", d == 4 ? "A_4 = (B g / log L^2)^gamma_hat (small-g asymptotics)" : "A_d = 1 (O(g) dropped)",
                 "nu_c = -(n+2) g C_{0,inf}(o) (first order)", "c_F = 0", "alpha_inf(x) = 0 in predictions"};
    p.validate();
    return p;
  }
};

inline double window_w(const ScaleParams& p) {
  p.validate();
  if (p.d == 4)
    return p.A_d * std::pow(std::log(p.Lp(2)), gamma_hat(p.n)) / std::sqrt(p.B()) * std::pow(p.N, -theta_hat(p.n)) * p.Lp(-2.0 * p.N);
  return p.A_d * std::sqrt(p.g_inf) * p.Lp(-p.N * p.d / 2.0);
}

inline double shift_v(const ScaleParams& p) {
  p.validate();
  if (p.d == 4) return p.A_d * std::pow(std::log(p.Lp(2)) * p.N, gamma_hat(p.n)) * p.Lp(-2.0 * p.N);
  return p.A_d * p.Lp(-2.0 * p.N);
}

inline double large_field_h(const ScaleParams& p) {
  p.validate();
  if (p.d == 4) return std::pow(p.B() * p.N, 0.25) * p.Lp(-p.N);
  return std::pow(p.g_inf, -0.25) * p.Lp(-p.d * p.N / 4.0);
}

inline double gaussian_l(const ScaleParams& p) {
  p.validate();
  return p.Lp(-p.N * (p.d - 2) / 2.0);
}

struct EffectivePoint {
  double value = 0;
  bool approximate = false;
};

inline EffectivePoint nu_eff(Boundary bc, const ScaleParams& p) {
  p.validate();
  if (bc == Boundary::Periodic) return {p.nu_c, false};
  const double v = shift_v(p);
  if (p.d == 4) return {p.nu_c - p.q() * v * (1 + p.c_F * std::pow(p.N, -gamma_hat(p.n))), false};
  if (p.d == 5) return {p.nu_c - p.q() * v, false};
  return {p.nu_c - p.q() * v, true};  // O(L^{-N}) correction unknown
}

// leading-order renormalised mass a*_N(s) (NonGaussian) or ã*_N(s) (Gaussian)
inline double mass_window(double s, Boundary bc, Regime regime, const ScaleParams& p) {
  p.validate();
  const double V = p.Lp(static_cast<double>(p.d) * p.N);
  double a;
  if (regime == Regime::NonGaussian) {
    const double h = large_field_h(p);
    a = s / (h * h * V);
  } else {
    if (!(s > 0)) throw std::domain_error("Gaussian regime requires s > 0");
    const double l = gaussian_l(p);
    a = s / (l * l * V);
  }
  if (bc == Boundary::Free) a -= p.q() * p.Lp(-2.0 * p.N);
  return a;
}

inline bool in_critical_mass_domain(double a, int d, int L, int N) {
  const double l = L;
  const double lo = -0.5 * std::pow(l, -2.0 * (N - 1));
  const double hi = d == 4 ? std::pow(l, -2.0 * N * (1 - 1 / std::sqrt(static_cast<double>(N)))) : 2 * std::pow(l, -1.5 * N);
  return a > lo && a < hi;
}

struct Prediction {
  Site x;
  int jxy = 0;
  double s = 0;
  double decay_term = 0, plateau_term = 0, total = 0;
  Regime regime = Regime::NonGaussian;
  Boundary bc = Boundary::Periodic;
};

inline Prediction predict_plateau(const Site& x, double s, const ScaleParams& p, double green_infty_value,
                                  Boundary bc = Boundary::Periodic) {
  const double h = large_field_h(p);
  Prediction out{x, coalescence(Site::origin(x.shape()), x), s, green_infty_value, profile_f(p.n, s) * h * h, 0,
                 Regime::NonGaussian, bc};
  out.total = out.decay_term + out.plateau_term;
  return out;
}

inline Prediction predict_plateau(const Site& x, double s, const ScaleParams& p, Boundary bc = Boundary::Periodic) {
  return predict_plateau(x, s, p, green_infty(x, 1e-15).value, bc);
}

// Gaussian regime: the full finite-volume Green function at mass sL^{-2N} (Periodic) or (s-q)L^{-2N} (Free)
inline double gaussian_mass(double s, Boundary bc, const ScaleParams& p) {
  if (!(s > 0)) throw std::domain_error("Gaussian regime requires s > 0");
  return (bc == Boundary::Periodic ? s : s - p.q()) * p.Lp(-2.0 * p.N);
}

inline Prediction predict_gaussian(const Site& x, double s, const ScaleParams& p, Boundary bc = Boundary::Periodic) {
  p.validate();
  const double a = gaussian_mass(s, bc, p);
  Prediction out{x, coalescence(Site::origin(x.shape()), x), s, green(bc, a, x.shape(), x), 0, 0, Regime::Gaussian, bc};
  out.total = out.decay_term;
  return out;
}

// first coalescence class whose massless decay falls below the plateau term
inline int crossover_class(double s, const ScaleParams& p) {
  const double plateau = profile_f(p.n, s) * std::pow(large_field_h(p), 2);
  for (int j = 0; j <= p.N; ++j)
    if (green_infty(p.d, p.L, j, 1e-15).value < plateau) return j;
  return p.N + 1;
}

// |x| at which |x|^{-(d-2)} equals the plateau term
inline double crossover_radius(double s, const ScaleParams& p) {
  const double plateau = profile_f(p.n, s) * std::pow(large_field_h(p), 2);
  return std::pow(plateau, -1.0 / (p.d - 2));
}

}  // namespace hrg

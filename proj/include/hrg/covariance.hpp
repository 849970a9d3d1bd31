#pragma once

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "lattice.hpp"

namespace hrg {

inline double const_q(int d, int L) {
  const double l = L;
  return (1.0 - std::pow(l, -d)) / (1.0 - std::pow(l, -(d + 2)));
}
inline double const_z(int d, int L) {
  const double l = L;
  return (1.0 - std::pow(l, -d)) / (l * l - 1.0);
}

inline double gamma_j(int j, double a, int L) {
  if (j < 1) throw std::domain_error("gamma_j needs j >= 1");
  const double s = std::pow(static_cast<double>(L), 2.0 * (j - 1));
  const double den = 1.0 + a * s;
  if (!(den > 0)) {
    std::ostringstream os;
    os << "mass a = " << a << " makes 1 + a L^{2(j-1)} <= 0 at j = " << j;
    throw std::domain_error(os.str());
  }
  return s / den;
}

// P_j(x,y) as a function of the coalescence scale
inline double p_kernel(int j, int jxy, const LatticeShape& shape) {
  if (j < 1 || j > shape.scales() || jxy < 0 || jxy > shape.scales())
    throw std::domain_error("p_kernel index out of range");
  const int d = shape.dim();
  double v = 0;
  if (jxy <= j - 1) v += shape.Lpow(-d * (j - 1.0));
  if (jxy <= j) v -= shape.Lpow(-d * static_cast<double>(j));
  return v;
}

// Q_j(x,y) = [jxy <= j] L^{-dj}
inline double q_kernel(int j, int jxy, const LatticeShape& shape) {
  return jxy <= j ? shape.Lpow(-shape.dim() * static_cast<double>(j)) : 0.0;
}

inline double dsq_metric(double r, double t) {
  if (r * t >= 0) return std::abs(std::sqrt(std::abs(r)) - std::sqrt(std::abs(t)));
  return std::sqrt(std::abs(r)) + std::sqrt(std::abs(t));
}

// zero-mode mass: a (Periodic) or a + q L^{-2N} (Free)
inline double zero_mode_mass(Boundary bc, double a, const LatticeShape& shape) {
  if (bc == Boundary::Periodic) return a;
  return a + const_q(shape.dim(), shape.block_side()) * shape.Lpow(-2.0 * shape.scales());
}

inline double c_hat(Boundary bc, double a, const LatticeShape& shape) {
  const double m = zero_mode_mass(bc, a, shape);
  const double V = static_cast<double>(shape.volume());
  if (std::abs(m) < 1e-300 * V) {
    std::ostringstream os;
    os.precision(17);
    if (bc == Boundary::Periodic)
      os << "singular zero-mode mass: a = 0 is excluded for periodic boundary conditions";
    else
      os << "singular zero-mode mass: a = -q L^{-2N} = " << (a - m) << " is excluded for free boundary conditions";
    throw std::domain_error(os.str());
  }
  return 1.0 / (V * m);
}

// Kernels of the covariance decomposition at fixed (shape, a).
class KernelEval {
 public:
  KernelEval(const LatticeShape& shape, double a) : shape_(shape), a_(a) {
    const int N = shape.scales();
    if (N >= 1 && !(1.0 + a * shape.Lpow(2.0 * (N - 1)) > 0)) {
      std::ostringstream os;
      os << "inadmissible mass a = " << a << ": need a > -L^{-2(N-1)} = " << -shape.Lpow(-2.0 * (N - 1));
      throw std::domain_error(os.str());
    }
    gamma_.assign(N + 1, 0.0);
    for (int j = 1; j <= N; ++j) gamma_[j] = gamma_j(j, a, shape.block_side());
  }

  const LatticeShape& shape() const { return shape_; }
  double mass() const { return a_; }
  double gamma(int j) const {
    if (j < 1 || j > shape_.scales()) throw std::domain_error("gamma index out of range");
    return gamma_[j];
  }

  double p(int j, int jxy) const { return p_kernel(j, jxy, shape_); }
  double q(int j, int jxy) const { return q_kernel(j, jxy, shape_); }
  double c_level(int j, int jxy) const { return gamma(j) * p(j, jxy); }

  // C_{a,<=N} at coalescence scale jxy
  double c_cum(int jxy) const {
    double s = 0;
    for (int j = 1; j <= shape_.scales(); ++j) s += gamma_[j] * p(j, jxy);
    return s;
  }
  double c_cum(const Site& x) const { return c_cum(coalescence(Site::origin(x.shape()), x)); }

  double c_hat(Boundary bc) const { return hrg::c_hat(bc, a_, shape_); }
  double c_hat() const { return c_hat(shape_.boundary()); }

  double green(Boundary bc, int jxy) const { return c_cum(jxy) + c_hat(bc); }
  double green(int jxy) const { return green(shape_.boundary(), jxy); }
  double green(Boundary bc, const Site& x) const { return green(bc, coalescence(Site::origin(x.shape()), x)); }

  // number of sites y with j_oy = j
  std::uint64_t class_size(int j) const {
    if (j == 0) return 1;
    return shape_.block_volume(j) - shape_.block_volume(j - 1);
  }

 private:
  LatticeShape shape_;
  double a_;
  std::vector<double> gamma_;
};

inline double green(Boundary bc, double a, const LatticeShape& shape, const Site& x) {
  return KernelEval(shape, a).green(bc, x);
}

struct TruncatedSum {
  double value = 0;
  double tail_bound = 0;
  int terms = 0;
};

// Massless infinite-volume Green function at coalescence scale jxy with a
// certified tail: Σ_{j>M} L^{2(j-1)} L^{-d(j-1)} (1+L^{-d}), below tol and
// below tol·L^{(2-d)jxy}.
inline TruncatedSum green_infty(int d, int L, int jxy, double tol) {
  if (d <= 2) throw std::domain_error("massless Green function diverges for d <= 2");
  if (!(tol > 0)) throw std::domain_error("tolerance must be positive");
  const double l = L;
  const double r = std::pow(l, 2.0 - d);
  const double pref = 1.0 + std::pow(l, -d);
  TruncatedSum out;
  int M = std::max(jxy, 1);
  auto tail = [&](int m) { return pref * std::pow(r, m) / (1.0 - r); };
  // stop once the tail is below tol both absolutely and relative to the class magnitude r^{jxy}
  const double log_stop = std::log(tol) + std::min(0.0, jxy * std::log(r));
  while (std::log(pref / (1.0 - r)) + M * std::log(r) >= log_stop) ++M;
  double s = 0;
  for (int j = 1; j <= M; ++j) {
    double pj = 0;
    if (jxy <= j - 1) pj += std::pow(l, -d * (j - 1.0));
    if (jxy <= j) pj -= std::pow(l, -d * static_cast<double>(j));
    s += std::pow(l, 2.0 * (j - 1)) * pj;
  }
  out.value = s;
  out.tail_bound = tail(M);
  out.terms = M;
  return out;
}

inline TruncatedSum green_infty(const Site& x, double tol) {
  const auto& sh = x.shape();
  return green_infty(sh.dim(), sh.block_side(), coalescence(Site::origin(sh), x), tol);
}

// Empirical constant C in |C_{a1,<=N}(x) - C_{a2,<=N}(x)| <= C d_sq(a1,a2) / (|x| v 1)^{d-3}.
inline double mass_difference_constant(double a1, double a2, const Site& x, double window_A) {
  const auto& sh = x.shape();
  const int N = sh.scales();
  const double lo = -0.5 * sh.Lpow(-2.0 * (N - 1)), hi = window_A * sh.Lpow(-2.0 * N);
  for (double a : {a1, a2})
    if (a < lo || a > hi) {
      std::ostringstream os;
      os << "mass " << a << " outside window [" << lo << ", " << hi << "]";
      throw std::domain_error(os.str());
    }
  const double dist = dsq_metric(a1, a2);
  if (dist == 0) return 0;
  const double diff = std::abs(KernelEval(sh, a1).c_cum(x) - KernelEval(sh, a2).c_cum(x));
  const double r = std::max(euclid_norm(x), 1.0);
  return diff * std::pow(r, sh.dim() - 3.0) / dist;
}

}  // namespace hrg

#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "covariance.hpp"

namespace hrg {

inline constexpr int kUnboundedScale = std::numeric_limits<int>::max();

inline double rho(int j, int d, int L) { return std::pow(static_cast<double>(L), -(d - 4.0) * j); }

// greatest j with L^{2j} ã <= 1; kUnboundedScale for ã = 0
inline int mass_scale(double atilde, int L) {
  if (!(atilde >= 0 && atilde < 1)) throw std::domain_error("mass scale needs ã in [0, 1)");
  if (atilde == 0) return kUnboundedScale;
  const double l2 = static_cast<double>(L) * L;
  int j = static_cast<int>(std::floor(-std::log(atilde) / std::log(l2)));
  auto ok = [&](int k) { return std::pow(l2, k) * atilde <= 1.0 + 1e-12; };
  while (ok(j + 1)) ++j;
  while (j > 0 && !ok(j)) --j;
  return j;
}

// ϑ̃_j = 2^{-(j - j_ã)_+}
inline double vartheta(int j, double atilde, int L) {
  const int ja = mass_scale(atilde, L);
  if (ja == kUnboundedScale || j <= ja) return 1.0;
  return std::ldexp(1.0, -(j - ja));
}

struct FlowState {
  int j = 0;
  double gtilde = 0;
  double beta = 0;
  double vartheta = 1;
  double rho = 1;
};

// g̃_{j+1} = g̃_j - β_j g̃_j², β_j = B (1 + ã L^{2j})^{-2} ρ_j, for j = 0..jmax
inline std::vector<FlowState> gtilde_flow(double g0, double atilde, int d, int L, double B, int jmax) {
  if (!(g0 > 0)) throw std::domain_error("flow needs g0 > 0");
  if (jmax < 0) throw std::domain_error("flow needs jmax >= 0");
  std::vector<FlowState> out;
  out.reserve(jmax + 1);
  double g = g0;
  const double l2 = static_cast<double>(L) * L;
  for (int j = 0; j <= jmax; ++j) {
    const double r = rho(j, d, L);
    const double m = atilde > 0 ? 1.0 + atilde * std::pow(l2, j) : 1.0;
    const double beta = B * r / (m * m);
    out.push_back({j, g, beta, vartheta(j, atilde, L), r});
    if (j == jmax) break;
    const double next = g - beta * g * g;
    if (!(next > 0 && next <= g0)) {
      std::ostringstream os;
      os << "g-tilde flow leaves (0, g0] at scale " << j + 1 << " (value " << next << ")";
      throw std::domain_error(os.str());
    }
    g = next;
  }
  return out;
}

// largest g0 (bisection) for which g̃_{j+1} <= g̃_j <= 2 g̃_{j+1} holds up to jmax
inline double max_stable_coupling(double atilde, int d, int L, double B, int jmax) {
  auto holds = [&](double g0) {
    try {
      auto f = gtilde_flow(g0, atilde, d, L, B, jmax);
      for (std::size_t i = 0; i + 1 < f.size(); ++i)
        if (!(f[i + 1].gtilde <= f[i].gtilde && f[i].gtilde <= 2 * f[i + 1].gtilde)) return false;
      return true;
    } catch (const std::domain_error&) {
      return false;
    }
  };
  double lo = 0, hi = 1;
  while (holds(hi)) hi *= 2;
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    (holds(mid) ? lo : hi) = mid;
  }
  return lo;
}

struct UoxAccumulation {
  double total = 0;
  int jox = 0;
  std::vector<double> partial;  // partial[j-1] = Σ_{k<=j} (C_{a,k}(x) + K_k)
};

// Σ_{j=j_ox}^N (C_{a,j}(x) + correction(j)); levels below j_ox vanish identically
inline UoxAccumulation u_ox_accumulate(const KernelEval& k, const Site& x, const std::function<double(int)>& correction = {}) {
  UoxAccumulation out;
  const int N = k.shape().scales();
  out.jox = coalescence(Site::origin(x.shape()), x);
  double s = 0;
  for (int j = 1; j <= N; ++j) {
    if (j >= out.jox) {
      s += k.c_level(j, out.jox);
      if (correction) s += correction(j);
    }
    out.partial.push_back(s);
  }
  out.total = s;
  return out;
}

}  // namespace hrg

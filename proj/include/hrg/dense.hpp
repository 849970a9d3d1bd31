#pragma once

// Dense verification objects for small lattices. Built from the coupling
// matrices J^F/J^P, independently of the projection decomposition.

#include <Eigen/Dense>
#include <optional>

#include "covariance.hpp"

namespace hrg {

struct DenseOperators {
  Eigen::MatrixXd J;
  Eigen::MatrixXd minus_laplacian;
  Eigen::MatrixXd c_cum;                     // C_{a,<=N}
  std::optional<Eigen::MatrixXd> resolvent;  // C_{a,<=N} + Ĉ*, absent at a singular mass
};

inline constexpr std::uint64_t kDenseVolumeCap = 10000;

inline void check_dense_volume(const LatticeShape& shape) {
  if (shape.volume() > kDenseVolumeCap) throw std::domain_error("dense build limited to 10^4 sites");
}

inline Eigen::MatrixXd coalescence_matrix(const LatticeShape& shape) {
  check_dense_volume(shape);
  const auto V = static_cast<Eigen::Index>(shape.volume());
  Eigen::MatrixXd m(V, V);
  for (Eigen::Index x = 0; x < V; ++x)
    for (Eigen::Index y = 0; y < V; ++y) m(x, y) = coalescence_packed(x, y, shape);
  return m;
}

template <class F>
Eigen::MatrixXd kernel_matrix(const LatticeShape& shape, F&& f) {
  check_dense_volume(shape);
  const auto V = static_cast<Eigen::Index>(shape.volume());
  Eigen::MatrixXd m(V, V);
  for (Eigen::Index x = 0; x < V; ++x)
    for (Eigen::Index y = 0; y < V; ++y) m(x, y) = f(coalescence_packed(x, y, shape));
  return m;
}

inline Eigen::MatrixXd dense_Q(int j, const LatticeShape& shape) {
  return kernel_matrix(shape, [&](int jxy) { return q_kernel(j, jxy, shape); });
}
inline Eigen::MatrixXd dense_P(int j, const LatticeShape& shape) {
  return kernel_matrix(shape, [&](int jxy) { return p_kernel(j, jxy, shape); });
}

// J^F(x,y) = L^{-(d+2) j_xy}/z off the diagonal; J^P adds the periodic images
// L^{-(d+2)N} everywhere, including x = y.
inline Eigen::MatrixXd dense_J(Boundary bc, const LatticeShape& shape) {
  const int d = shape.dim(), L = shape.block_side(), N = shape.scales();
  const double z = const_z(d, L);
  const double image = bc == Boundary::Periodic ? shape.Lpow(-(d + 2.0) * N) : 0.0;
  return kernel_matrix(shape, [&](int jxy) {
    return (jxy == 0 ? 0.0 : shape.Lpow(-(d + 2.0) * jxy) / z) + image;
  });
}

inline DenseOperators build_dense(Boundary bc, double a, const LatticeShape& shape) {
  check_dense_volume(shape);
  DenseOperators out;
  const auto V = static_cast<Eigen::Index>(shape.volume());
  const double q = const_q(shape.dim(), shape.block_side());
  out.J = dense_J(bc, shape);
  out.minus_laplacian = q * (Eigen::MatrixXd::Identity(V, V) - out.J);
  KernelEval k(shape, a);
  out.c_cum = kernel_matrix(shape, [&](int jxy) { return k.c_cum(jxy); });
  try {
    const double ch = k.c_hat(bc);
    out.resolvent = (out.c_cum.array() + ch).matrix();
  } catch (const std::domain_error&) {
    out.resolvent.reset();
  }
  return out;
}

}  // namespace hrg

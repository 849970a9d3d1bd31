#pragma once

// Exact hierarchical RG on block-constant fields: Z_{j+1}(φ) = E ∏_b Z_j(φ + ζ_b),
// carried on a 1-D field grid together with the observable components, followed by
// the final zero-mode integral.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss.hpp>

#include "covariance.hpp"
#include "profiles.hpp"
#include "random.hpp"
#include "scales.hpp"
#include "stats.hpp"

namespace hrg {

struct ModelParams {
  int n = 1;
  double g = 0;
  double nu = 0;    // total quadratic coefficient of the single-site potential
  double mass = 0;  // covariance mass a; the bulk potential carries ν − a
  double bulk_nu() const { return nu - mass; }
};

enum class SamplerKind { MonteCarlo, TensorQuad };
enum class RenormPolicy { AtOrigin, AtMaximum };

inline std::string to_string(SamplerKind s) { return s == SamplerKind::MonteCarlo ? "monte-carlo" : "tensor-quad"; }
inline std::string to_string(RenormPolicy r) { return r == RenormPolicy::AtOrigin ? "origin" : "maximum"; }

struct NumericsConfig {
  int grid_points = 129;
  SamplerKind sampler = SamplerKind::MonteCarlo;
  int samples = 20000;  // Monte Carlo draws per step (antithetic pairs)
  int quad_nodes = 6;   // Gauss-Hermite nodes per dimension for TensorQuad
  std::uint64_t seed = 1;
  double range_sigmas = 8.0;   // grid half-width in predicted block-field standard deviations
  double support_drop = 46.0;  // log-drop below the maximum treated as outside the support
  RenormPolicy renorm = RenormPolicy::AtOrigin;
  int threads = 1;

  void validate(int n = 1) const {
    if (grid_points < 9) throw std::invalid_argument("grid needs at least 9 points");
    if (n == 1 && grid_points % 2 == 0) throw std::invalid_argument("scalar grid needs an odd number of points");
    if (sampler == SamplerKind::MonteCarlo && samples < 10000) throw std::invalid_argument("Monte Carlo needs at least 1e4 samples");
    if (sampler == SamplerKind::TensorQuad && quad_nodes < 2) throw std::invalid_argument("tensor quadrature needs >= 2 nodes");
    if (!(range_sigmas >= 6)) throw std::invalid_argument("grid half-width must cover at least 6 standard deviations");
    if (!(support_drop > 0)) throw std::invalid_argument("support drop must be positive");
    if (threads < 1) throw std::invalid_argument("threads must be >= 1");
  }
};

// ---------------------------------------------------------------------------
// field grids

// Uniform grid, either symmetric on [-R, R] (odd point count, 0 is a node) or
// radial with nodes (i + ½)h; radial values are extended to r < 0 by parity.
class FieldGrid {
 public:
  FieldGrid() = default;

  static FieldGrid line(double half_width, int points) {
    if (points < 5 || points % 2 == 0) throw std::invalid_argument("line grid needs an odd number >= 5 of points");
    if (!(half_width > 0) || !std::isfinite(half_width)) throw std::domain_error("grid half-width must be positive and finite");
    FieldGrid g;
    g.radial_ = false;
    g.P_ = points;
    g.c_ = (points - 1) / 2;
    g.h_ = half_width / g.c_;
    return g;
  }

  static FieldGrid radial(double radius, int points) {
    if (points < 5) throw std::invalid_argument("radial grid needs >= 5 points");
    if (!(radius > 0) || !std::isfinite(radius)) throw std::domain_error("grid radius must be positive and finite");
    FieldGrid g;
    g.radial_ = true;
    g.P_ = points;
    g.h_ = radius / (points - 0.5);
    return g;
  }

  bool is_radial() const { return radial_; }
  int size() const { return P_; }
  double spacing() const { return h_; }
  double point(int i) const { return radial_ ? (i + 0.5) * h_ : (i - c_) * h_; }
  double extent() const { return point(P_ - 1); }  // largest |node|

  // interpolation stencil at t; reused for every component stored on the grid
  struct Stencil {
    int base = 0;
    double w[4] = {0, 0, 0, 0};
    int side = 0;  // +1 beyond the last node, −1 before the first, 0 inside
    double dx = 0;
  };

  Stencil stencil(double t) const {
    Stencil st;
    double u;
    const double top = extent();
    if (!radial_) {
      u = t / h_ + c_;
      if (u >= 1 && u < P_ - 2) {
        st.base = static_cast<int>(u) - 1;
        lagrange4(u - st.base, st.w);
        return st;
      }
      if (t > top) {
        st.side = 1;
        st.dx = t - top;
      } else if (t < -top) {
        st.side = -1;
        st.dx = -top - t;
      }
      u = std::clamp(t / h_ + c_, -1e9, 1e9);
      st.base = std::clamp(static_cast<int>(std::floor(u)) - 1, 0, P_ - 4);
    } else {
      t = std::abs(t);
      u = t / h_ - 0.5;
      if (u >= 1 && u < P_ - 2) {
        st.base = static_cast<int>(u) - 1;
        lagrange4(u - st.base, st.w);
        return st;
      }
      if (t > top) {
        st.side = 1;
        st.dx = t - top;
      }
      u = std::min(u, 1e9);
      st.base = std::min(static_cast<int>(std::floor(u)) - 1, P_ - 4);
    }
    lagrange4(u - st.base, st.w);
    return st;
  }

  // cubic Lagrange value; outside the nodes the edge stencil extrapolates
  double apply(const Stencil& st, const double* v, double parity = 1.0) const {
    const int b = st.base;
    if (b >= 0) return st.w[0] * v[b] + st.w[1] * v[b + 1] + st.w[2] * v[b + 2] + st.w[3] * v[b + 3];
    double s = 0;
    for (int q = 0; q < 4; ++q) {
      const int i = b + q;
      s += st.w[q] * (i >= 0 ? v[i] : parity * v[-1 - i]);
    }
    return s;
  }

  double interp(const double* v, double t, double parity = 1.0) const { return apply(stencil(t), v, parity); }

  struct Edge {
    double value = 0, slope = 0, curvature = 0;  // outward, clamped to be non-increasing
  };
  struct LogEdges {
    Edge lo, hi;
  };

  LogEdges log_edges(const std::vector<double>& v) const {
    const int n = P_;
    auto edge = [&](double f0, double f1, double f2) {
      Edge e;
      e.value = f0;
      e.slope = std::min((3 * f0 - 4 * f1 + f2) / (2 * h_), 0.0);
      e.curvature = std::min((f0 - 2 * f1 + f2) / (h_ * h_), 0.0);
      return e;
    };
    LogEdges out;
    out.hi = edge(v[n - 1], v[n - 2], v[n - 3]);
    if (!radial_) out.lo = edge(v[0], v[1], v[2]);
    return out;
  }

  // log Z_∅: cubic inside, concave non-increasing quadratic continuation outside
  double apply_log(const Stencil& st, const double* v, const LogEdges& e) const {
    if (st.side == 0) return apply(st, v);
    const Edge& E = st.side > 0 ? e.hi : e.lo;
    return E.value + E.slope * st.dx + 0.5 * E.curvature * st.dx * st.dx;
  }
  double interp_log(const double* v, double t, const LogEdges& e) const {
    if (!radial_) {
      // interior fast path: stencil base k − 1 with k = ⌊u⌋
      const double u = t / h_ + c_;
      if (u >= 1 && u < P_ - 2) {
        const int k = static_cast<int>(u);
        const double a = u - k + 1, b = a - 1, c = a - 2, d = a - 3;
        const double* q = v + k - 1;
        return (-b * c * d * q[0] + 3 * a * c * d * q[1] - 3 * a * b * d * q[2] + a * b * c * q[3]) * (1.0 / 6);
      }
    }
    return apply_log(stencil(t), v, e);
  }

  static void lagrange4(double tau, double w[4]) {
    const double a = tau, b = tau - 1, c = tau - 2, d = tau - 3;
    w[0] = -b * c * d / 6;
    w[1] = a * c * d / 2;
    w[2] = -a * b * d / 2;
    w[3] = a * b * c / 6;
  }

 private:
  bool radial_ = false;
  int P_ = 0;
  int c_ = 0;
  double h_ = 1;
};

// ---------------------------------------------------------------------------
// effective partition functions

// Z_j per block, stored as ℓ = log Z_∅ − log_norm and observable ratios to Z_∅.
// n = 1: obs = Z_o/Z_∅ and pair[k] = Z_ox/Z_∅ on the line grid.
// n >= 2 (radial grid): Z_o(φ)/Z_∅ = φ⁽¹⁾/|φ| · U(|φ|) with U = obs, and
// Z_ox(φ)/Z_∅ = A + (T − A)(φ⁽¹⁾/|φ|)² with T = pair[k], A = pair_perp[k].
// Z_x has the same profile as Z_o.
struct EffectiveZ {
  int scale = 0;
  LatticeShape shape{4, 2, 1};
  ModelParams model;
  FieldGrid grid;
  bool analytic = false;  // scale 0 is evaluated in closed form
  std::vector<double> log_bulk, log_bulk_err;
  std::vector<double> obs, obs_err;
  std::vector<int> classes;  // coalescence scales j_ox of the carried pairs
  std::vector<std::vector<double>> pair, pair_perp, pair_err;
  double log_norm = 0;

  bool pair_active(std::size_t k) const { return scale >= classes[k]; }

  struct Components {
    double phi, z_empty, z_o, z_x;
    std::vector<double> z_ox;
  };
  // (Z_∅, Z_o, Z_x, Z_ox) at node i, along the first field axis
  Components components(int i) const {
    Components c;
    c.phi = grid.point(i);
    c.z_empty = std::exp(log_bulk[i]);
    c.z_o = c.z_x = c.z_empty * obs[i];
    for (std::size_t k = 0; k < classes.size(); ++k) c.z_ox.push_back(pair_active(k) ? c.z_empty * pair[k][i] : 0.0);
    return c;
  }
};

inline std::vector<int> classes_of(const std::vector<Site>& xs) {
  std::vector<int> out;
  for (const auto& x : xs) {
    const int j = coalescence(Site::origin(x.shape()), x);
    if (std::find(out.begin(), out.end(), j) == out.end()) out.push_back(j);
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Z_0(φ) = exp(−g|φ|⁴/4 − (ν−a)|φ|²/2)(1 + σ_o φ⁽¹⁾ 1_{o∈b})(1 + σ_x φ⁽¹⁾ 1_{x∈b})
inline EffectiveZ init_Z0(const ModelParams& model, const LatticeShape& shape, const std::vector<int>& classes, double half_width,
                          int points) {
  if (model.g < 0) throw std::domain_error("init_Z0 needs g >= 0");
  if (model.n < 1) throw std::domain_error("init_Z0 needs n >= 1");
  for (int c : classes)
    if (c < 0 || c > shape.scales()) throw std::domain_error("coalescence class outside 0..N");
  EffectiveZ z;
  z.scale = 0;
  z.shape = shape;
  z.model = model;
  z.analytic = true;
  z.grid = model.n == 1 ? FieldGrid::line(half_width, points) : FieldGrid::radial(half_width, points);
  z.classes = classes;
  const int P = z.grid.size();
  z.log_bulk.resize(P);
  z.obs.resize(P);
  z.log_bulk_err.assign(P, 0.0);
  z.obs_err.assign(P, 0.0);
  const double nuv = model.bulk_nu();
  for (int i = 0; i < P; ++i) {
    const double t = z.grid.point(i), t2 = t * t;
    z.log_bulk[i] = -0.25 * model.g * t2 * t2 - 0.5 * nuv * t2;
    z.obs[i] = t;
  }
  for (int c : classes) {
    std::vector<double> T(P, 0.0);
    if (c == 0)
      for (int i = 0; i < P; ++i) T[i] = z.grid.point(i) * z.grid.point(i);
    z.pair.push_back(T);
    z.pair_perp.emplace_back(P, 0.0);
    z.pair_err.emplace_back(P, 0.0);
  }
  return z;
}

// ---------------------------------------------------------------------------
// fluctuation fields

struct FluctuationLaw {
  int scale = 1;  // j + 1
  double mass = 0;
  LatticeShape shape{4, 2, 1};
  double sigma = 0;  // √γ_{j+1}(a) L^{−dj/2}
  int sub_blocks = 1;

  double variance() const { return sigma * sigma * (1.0 - 1.0 / sub_blocks); }
  double covariance() const { return -sigma * sigma / sub_blocks; }
};

inline FluctuationLaw make_fluctuation_law(int scale, double a, const LatticeShape& shape) {
  if (scale < 1 || scale > shape.scales()) throw std::domain_error("fluctuation scale outside 1..N");
  const double g = gamma_j(scale, a, shape.block_side());
  if (!(g > 0)) throw std::domain_error("inadmissible mass for the fluctuation covariance");
  FluctuationLaw law;
  law.scale = scale;
  law.mass = a;
  law.shape = shape;
  law.sigma = std::sqrt(g * shape.Lpow(-static_cast<double>(shape.dim()) * (scale - 1)));
  law.sub_blocks = static_cast<int>(shape.cell());
  return law;
}

// one draw ζ_b = σ(η_b − η̄); out holds m·n values, sub-block major
inline void sample_fluctuation(const FluctuationLaw& law, int n, const CounterRng& rng, std::uint64_t draw, double* out) {
  const int m = law.sub_blocks;
  const std::uint64_t base = draw * static_cast<std::uint64_t>(m) * n;
  for (int c = 0; c < n; ++c) {
    double mean = 0;
    for (int b = 0; b < m; ++b) mean += (out[b * n + c] = rng.normal(base + b * n + c));
    mean /= m;
    for (int b = 0; b < m; ++b) out[b * n + c] = law.sigma * (out[b * n + c] - mean);
  }
}

struct FluctuationSamples {
  int count = 0, m = 1, n = 1;
  std::vector<double> zeta;    // [sample][sub-block][component]
  std::vector<double> weight;  // sums to 1
  bool exact = false;          // deterministic quadrature: no sampling error
  const double* at(int s) const { return zeta.data() + static_cast<std::size_t>(s) * m * n; }
};

namespace detail {

// probabilists' Gauss-Hermite rule by Golub-Welsch
inline void gauss_hermite(int k, std::vector<double>& x, std::vector<double>& w) {
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(k, k);
  for (int i = 1; i < k; ++i) J(i, i - 1) = J(i - 1, i) = std::sqrt(static_cast<double>(i));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  x.resize(k);
  w.resize(k);
  for (int i = 0; i < k; ++i) {
    x[i] = es.eigenvalues()(i);
    w[i] = es.eigenvectors()(0, i) * es.eigenvectors()(0, i);
  }
}

}  // namespace detail

// Monte Carlo: antithetic pairs (ζ, −ζ), which keep the estimator exactly parity
// symmetric. TensorQuad: Gauss-Hermite tensor rule over all m·n normals.
inline FluctuationSamples draw_fluctuations(const FluctuationLaw& law, int n, const NumericsConfig& cfg, const CounterRng& rng) {
  FluctuationSamples fs;
  fs.m = law.sub_blocks;
  fs.n = n;
  const int dim = fs.m * n;
  if (cfg.sampler == SamplerKind::MonteCarlo) {
    const int pairs = (cfg.samples + 1) / 2;
    fs.count = 2 * pairs;
    fs.zeta.resize(static_cast<std::size_t>(fs.count) * dim);
    for (int p = 0; p < pairs; ++p) {
      double* a = fs.zeta.data() + static_cast<std::size_t>(2 * p) * dim;
      sample_fluctuation(law, n, rng, p, a);
      for (int i = 0; i < dim; ++i) a[dim + i] = -a[i];
    }
    fs.weight.assign(fs.count, 1.0 / fs.count);
    return fs;
  }
  const int k = cfg.quad_nodes;
  const double total = std::pow(static_cast<double>(k), dim);
  if (total > 4e6) {
    std::ostringstream os;
    os << "tensor quadrature with " << k << "^" << dim << " nodes is infeasible";
    throw std::domain_error(os.str());
  }
  std::vector<double> x, w;
  detail::gauss_hermite(k, x, w);
  fs.count = static_cast<int>(total);
  fs.exact = true;
  fs.zeta.resize(static_cast<std::size_t>(fs.count) * dim);
  fs.weight.resize(fs.count);
  std::vector<int> idx(dim, 0);
  std::vector<double> eta(dim);
  for (int s = 0; s < fs.count; ++s) {
    double ws = 1;
    for (int i = 0; i < dim; ++i) {
      eta[i] = x[idx[i]];
      ws *= w[idx[i]];
    }
    double* out = fs.zeta.data() + static_cast<std::size_t>(s) * dim;
    for (int c = 0; c < n; ++c) {
      double mean = 0;
      for (int b = 0; b < fs.m; ++b) mean += eta[b * n + c];
      mean /= fs.m;
      for (int b = 0; b < fs.m; ++b) out[b * n + c] = law.sigma * (eta[b * n + c] - mean);
    }
    fs.weight[s] = ws;
    for (int i = 0; i < dim && ++idx[i] == k; ++i) idx[i] = 0;
  }
  return fs;
}

// ---------------------------------------------------------------------------
// one RG step

namespace detail {

template <class F>
void parallel_for(int count, int threads, F&& f) {
  threads = std::max(1, std::min(threads, count));
  if (threads == 1) {
    for (int i = 0; i < count; ++i) f(i, 0);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      try {
        for (int i = t; i < count; i += threads) f(i, t);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// evaluation of the source Z_j at arbitrary field values; the argument is the
// signed field (n = 1) or the radius (n >= 2)
struct Source {
  using Stencil = FieldGrid::Stencil;
  const EffectiveZ& z;
  FieldGrid::LogEdges edges;
  double g, nuv;
  bool analytic;

  explicit Source(const EffectiveZ& zz) : z(zz), g(zz.model.g), nuv(zz.model.bulk_nu()), analytic(zz.analytic) {
    if (!analytic) edges = z.grid.log_edges(z.log_bulk);
  }
  Stencil at(double t) const { return analytic ? Stencil{} : z.grid.stencil(t); }

  double log_bulk(const Stencil& st, double t) const {
    if (analytic) {
      const double t2 = t * t;
      return -0.25 * g * t2 * t2 - 0.5 * nuv * t2;
    }
    return z.grid.apply_log(st, z.log_bulk.data(), edges);
  }
  double obs(const Stencil& st, double t) const { return analytic ? t : z.grid.apply(st, z.obs.data(), -1.0); }
  double obs_err(const Stencil& st) const { return analytic ? 0.0 : std::abs(z.grid.apply(st, z.obs_err.data())); }
  double pair(std::size_t k, const Stencil& st, double t) const {
    if (analytic) return z.classes[k] == 0 ? t * t : 0.0;
    return z.grid.apply(st, z.pair[k].data());
  }
  double pair_perp(std::size_t k, const Stencil& st) const { return analytic ? 0.0 : z.grid.apply(st, z.pair_perp[k].data()); }

  double log_bulk(double t) const {
    if (analytic) return log_bulk(Stencil{}, t);
    return z.grid.interp_log(z.log_bulk.data(), t, edges);
  }
  double pair(std::size_t k, double t) const { return pair(k, at(t), t); }
  double pair_perp(std::size_t k, double t) const { return pair_perp(k, at(t)); }
};

enum class PairMode { Inactive, Coalesce, Above };

struct Workspace {
  std::vector<double> lw, xo, xoe;
  std::vector<std::vector<double>> xp, xa;
  std::vector<FieldGrid::Stencil> st;
  std::vector<double> t, c, u;
};

struct Weighted {
  double log_mean = 0, log_err = 0;
  std::vector<double> e;  // normalised sample weights ω_s e^{lw_s − max}
  double sum = 0;
};

inline Weighted weigh(const std::vector<double>& lw, const FluctuationSamples& fs) {
  Weighted out;
  const int M = fs.count;
  double mx = -std::numeric_limits<double>::infinity();
  for (int s = 0; s < M; ++s) mx = std::max(mx, lw[s]);
  out.e.resize(M);
  double S = 0;
  for (int s = 0; s < M; ++s) S += (out.e[s] = fs.weight[s] * std::exp(lw[s] - mx));
  out.sum = S;
  out.log_mean = mx + std::log(S);
  if (!fs.exact) {
    double v = 0;
    for (int s = 0; s < M; ++s) {
      const double d = out.e[s] - fs.weight[s] * S;
      v += d * d;
    }
    out.log_err = std::sqrt(v) / S;
  }
  return out;
}

// weighted ratio estimate and its delta-method standard error
inline Estimate ratio(const Weighted& w, const std::vector<double>& x, bool exact) {
  double r = 0;
  const int M = static_cast<int>(x.size());
  for (int s = 0; s < M; ++s) r += w.e[s] * x[s];
  r /= w.sum;
  if (exact) return {r, 0.0};
  double v = 0;
  for (int s = 0; s < M; ++s) {
    const double d = w.e[s] * (x[s] - r);
    v += d * d;
  }
  return {r, std::sqrt(v) / w.sum};
}

// per-sample integrands at one grid point. Z_o uses the observable in sub-block 0;
// the pair components average over all placements, which exchangeability of the
// sub-blocks leaves unbiased: distinct ordered pairs at coalescence, every
// sub-block above it.
inline void evaluate_point(const Source& src, const FluctuationSamples& fs, double phi, const std::vector<PairMode>& modes,
                           bool bulk_only, Workspace& ws) {
  const int M = fs.count, m = fs.m, n = fs.n;
  const std::size_t K = modes.size();
  bool coalesce = false;
  for (auto md : modes) coalesce |= md == PairMode::Coalesce;
  ws.lw.resize(M);
  ws.st.resize(m);
  ws.t.resize(m);
  ws.c.resize(m);
  ws.u.resize(m);
  if (!bulk_only) {
    ws.xo.resize(M);
    ws.xoe.resize(M);
    ws.xp.resize(K);
    ws.xa.resize(K);
    for (std::size_t k = 0; k < K; ++k) {
      ws.xp[k].resize(M);
      ws.xa[k].resize(M);
    }
  }
  const double pairs = static_cast<double>(m) * (m - 1);
  for (int s = 0; s < M; ++s) {
    const double* z = fs.at(s);
    double lw = 0;
    if (n == 1 && bulk_only) {
      for (int b = 0; b < m; ++b) lw += src.log_bulk(phi + z[b]);
    } else if (n == 1) {
      for (int b = 0; b < m; ++b) {
        const double t = phi + z[b];
        ws.t[b] = t;
        ws.st[b] = src.at(t);
        lw += src.log_bulk(ws.st[b], t);
      }
    } else {
      for (int b = 0; b < m; ++b) {
        const double* zb = z + b * n;
        const double p1 = phi + zb[0];
        double r2 = p1 * p1;
        for (int c = 1; c < n; ++c) r2 += zb[c] * zb[c];
        const double r = std::sqrt(r2);
        ws.t[b] = r;
        ws.c[b] = r > 0 ? p1 / r : 1.0;
        ws.st[b] = src.at(r);
        lw += src.log_bulk(ws.st[b], r);
      }
    }
    ws.lw[s] = lw;
    if (bulk_only) continue;

    const double o0 = src.obs(ws.st[0], ws.t[0]);
    ws.xo[s] = n == 1 ? o0 : ws.c[0] * o0;
    ws.xoe[s] = src.obs_err(ws.st[0]);

    if (coalesce) {
      double T = 0, A = 0;
      if (n == 1) {
        double s1 = 0, s2 = 0;
        for (int b = 0; b < m; ++b) {
          const double u = src.obs(ws.st[b], ws.t[b]);
          s1 += u;
          s2 += u * u;
        }
        T = (s1 * s1 - s2) / pairs;
      } else {
        for (int b = 0; b < m; ++b) ws.u[b] = src.obs(ws.st[b], ws.t[b]);
        double s1 = 0, s2 = 0;
        for (int b = 0; b < m; ++b) {
          const double v = ws.c[b] * ws.u[b];
          s1 += v;
          s2 += v * v;
        }
        T = (s1 * s1 - s2) / pairs;
        for (int c = 1; c < n; ++c) {
          double p1 = 0, p2 = 0;
          for (int b = 0; b < m; ++b) {
            const double v = ws.t[b] > 0 ? z[b * n + c] / ws.t[b] * ws.u[b] : 0.0;
            p1 += v;
            p2 += v * v;
          }
          A += (p1 * p1 - p2) / pairs;
        }
        A /= (n - 1);
      }
      for (std::size_t k = 0; k < K; ++k)
        if (modes[k] == PairMode::Coalesce) {
          ws.xp[k][s] = T;
          ws.xa[k][s] = A;
        }
    }
    for (std::size_t k = 0; k < K; ++k) {
      if (modes[k] != PairMode::Above) continue;
      double T = 0, A = 0;
      if (n == 1) {
        for (int b = 0; b < m; ++b) T += src.pair(k, ws.st[b], ws.t[b]);
      } else {
        for (int b = 0; b < m; ++b) {
          const double tb = src.pair(k, ws.st[b], ws.t[b]), ab = src.pair_perp(k, ws.st[b]);
          const double cos2 = ws.c[b] * ws.c[b];
          T += ab + (tb - ab) * cos2;
          A += ab + (tb - ab) * (1 - cos2) / (n - 1);
        }
      }
      ws.xp[k][s] = T / m;
      ws.xa[k][s] = A / m;
    }
  }
}

inline std::vector<PairMode> pair_modes(const EffectiveZ& z) {
  std::vector<PairMode> modes;
  for (std::size_t k = 0; k < z.classes.size(); ++k) {
    const int c = z.classes[k];
    modes.push_back(c <= z.scale ? PairMode::Above : c == z.scale + 1 ? PairMode::Coalesce : PairMode::Inactive);
  }
  return modes;
}

inline void check_finite(double v, int scale, double phi, const char* what) {
  if (std::isfinite(v)) return;
  std::ostringstream os;
  os.precision(17);
  os << "renormalisation failure: non-finite " << what << " at scale " << scale << ", field " << phi;
  throw std::runtime_error(os.str());
}

}  // namespace detail

struct StepInfo {
  int scale = 0;
  double candidate_range = 0;
  double support_edge = 0;
  double range = 0;
};

// Z_j -> Z_{j+1}; the new grid spans min(max_range, current extent), trimmed to
// the support of the new Z_∅ found on a coarse pre-pass
inline EffectiveZ rg_step(const EffectiveZ& z, const FluctuationLaw& law, const NumericsConfig& cfg, const CounterRng& stream,
                          double max_range = std::numeric_limits<double>::infinity(), bool bulk_only = false,
                          StepInfo* info = nullptr, double trim_curvature = 0) {
  if (law.scale != z.scale + 1) throw std::invalid_argument("fluctuation law does not match the next scale");
  if (law.scale > z.shape.scales()) throw std::invalid_argument("rg_step beyond the final scale");
  if (!law.shape.same_geometry(z.shape)) throw std::invalid_argument("fluctuation law on a different lattice");
  const int n = z.model.n;
  cfg.validate(n);
  const FluctuationSamples fs = draw_fluctuations(law, n, cfg, stream);
  const detail::Source src(z);
  const auto modes = detail::pair_modes(z);
  const bool radial = n > 1;

  // coarse support pass on the bulk only
  const double cand = std::min(max_range, z.grid.extent());
  FluctuationSamples coarse = fs;
  if (!fs.exact && fs.count > 2000) {
    coarse.count = 2000;
    coarse.zeta.resize(static_cast<std::size_t>(2000) * fs.m * fs.n);
    coarse.weight.assign(2000, 1.0 / 2000);
  }
  const FieldGrid cg = radial ? FieldGrid::radial(cand, 17) : FieldGrid::line(cand, 33);
  std::vector<double> craw(cg.size());
  {
    std::vector<detail::Workspace> wss(cfg.threads);
    detail::parallel_for(cg.size(), cfg.threads, [&](int i, int t) {
      detail::evaluate_point(src, coarse, cg.point(i), modes, true, wss[t]);
      craw[i] = detail::weigh(wss[t].lw, coarse).log_mean;
    });
  }
  // trim_curvature adds the zero-mode weight −½κφ² on the last step
  for (int i = 0; i < cg.size(); ++i) craw[i] -= 0.5 * trim_curvature * cg.point(i) * cg.point(i);
  const double cmax = *std::max_element(craw.begin(), craw.end());
  double edge = 0;
  for (int i = 0; i < cg.size(); ++i)
    if (craw[i] >= cmax - cfg.support_drop) edge = std::max(edge, std::abs(cg.point(i)));
  const double range = std::min(cand, edge + 2 * cg.spacing());
  if (info) *info = {law.scale, cand, edge, range};

  EffectiveZ out;
  out.scale = law.scale;
  out.shape = z.shape;
  out.model = z.model;
  out.classes = z.classes;
  out.analytic = false;
  out.grid = radial ? FieldGrid::radial(range, cfg.grid_points) : FieldGrid::line(range, cfg.grid_points);
  const int P = out.grid.size();
  const std::size_t K = z.classes.size();
  std::vector<double> raw(P), raw_err(P);
  out.obs.assign(P, 0.0);
  out.obs_err.assign(P, 0.0);
  out.pair.assign(K, std::vector<double>(P, 0.0));
  out.pair_perp.assign(K, std::vector<double>(P, 0.0));
  out.pair_err.assign(K, std::vector<double>(P, 0.0));

  std::vector<detail::Workspace> wss(cfg.threads);
  detail::parallel_for(P, cfg.threads, [&](int i, int t) {
    auto& ws = wss[t];
    const double phi = out.grid.point(i);
    detail::evaluate_point(src, fs, phi, modes, bulk_only, ws);
    const auto w = detail::weigh(ws.lw, fs);
    detail::check_finite(w.log_mean, out.scale, phi, "log Z");
    raw[i] = w.log_mean;
    raw_err[i] = w.log_err;
    if (bulk_only) return;
    const auto o = detail::ratio(w, ws.xo, fs.exact);
    const auto prop = detail::ratio(w, ws.xoe, true);
    detail::check_finite(o.mean, out.scale, phi, "Z_o");
    out.obs[i] = o.mean;
    out.obs_err[i] = std::hypot(o.err, prop.mean);
    for (std::size_t k = 0; k < K; ++k) {
      if (modes[k] == detail::PairMode::Inactive) continue;
      const auto p = detail::ratio(w, ws.xp[k], fs.exact);
      detail::check_finite(p.mean, out.scale, phi, "Z_ox");
      out.pair[k][i] = p.mean;
      out.pair_err[k][i] = p.err;
      if (radial) out.pair_perp[k][i] = detail::ratio(w, ws.xa[k], true).mean;
    }
  });

  double ref;
  if (cfg.renorm == RenormPolicy::AtMaximum)
    ref = *std::max_element(raw.begin(), raw.end());
  else
    ref = radial ? out.grid.interp(raw.data(), 0.0, 1.0) : raw[(P - 1) / 2];
  out.log_bulk.resize(P);
  for (int i = 0; i < P; ++i) out.log_bulk[i] = raw[i] - ref;
  out.log_bulk_err = raw_err;
  out.log_norm = static_cast<double>(law.sub_blocks) * z.log_norm + ref;
  return out;
}

// ---------------------------------------------------------------------------
// zero mode

struct ZeroModeResult {
  std::vector<int> classes;
  std::vector<double> two_point;  // per class
  double chi = 0;                 // L^{dN} <|Φ|²>/n
  std::vector<double> moments;    // <|Φ|^{2p}>, p = 1..
  double tail_fraction = 0;       // weight beyond 0.9 of the grid extent
};

// ∫ Z_N(y) e^{−½|Λ|a_eff|y|²} dy over the grid range, composite Gauss-Legendre per cell
inline ZeroModeResult zero_mode_integrate(const EffectiveZ& z, Boundary bc, double a, int max_moment = 3) {
  if (z.scale != z.shape.scales()) throw std::invalid_argument("zero-mode integral needs the final-scale Z");
  const double V = static_cast<double>(z.shape.volume());
  const double aeff = zero_mode_mass(bc, a, z.shape);
  if (std::abs(aeff) < 1e-300 * V) {
    c_hat(bc, a, z.shape);  // throws with the excluded value
  }
  const int n = z.model.n;
  const bool radial = z.grid.is_radial();
  const double h = z.grid.spacing();
  const double lo = radial ? 0.0 : -z.grid.extent();
  const int cells = radial ? z.grid.size() : z.grid.size() - 1;
  const double top = radial ? cells * h : z.grid.extent();
  using GL = boost::math::quadrature::gauss<double, 7>;
  std::vector<double> gx, gw;
  for (std::size_t i = 0; i < GL::abscissa().size(); ++i) {
    const double x = GL::abscissa()[i], w = GL::weights()[i];
    gx.push_back(x);
    gw.push_back(w);
    if (x != 0) {
      gx.push_back(-x);
      gw.push_back(w);
    }
  }
  const detail::Source src(z);
  struct Node {
    double y, logw;
  };
  std::vector<Node> nodes;
  double mx = -std::numeric_limits<double>::infinity();
  for (int c = 0; c < cells; ++c) {
    const double a0 = lo + c * h;
    for (std::size_t q = 0; q < gx.size(); ++q) {
      const double y = a0 + 0.5 * h * (1 + gx[q]);
      double lw = std::log(0.5 * h * gw[q]) + src.log_bulk(y) - 0.5 * V * aeff * y * y;
      if (radial) lw += (n - 1) * std::log(std::abs(y));
      nodes.push_back({y, lw});
      mx = std::max(mx, lw);
    }
  }
  if (!std::isfinite(mx)) throw std::domain_error("zero-mode integrand vanishes or overflows on the grid");
  const std::size_t K = z.classes.size();
  double S = 0, tail = 0;
  std::vector<double> mom(max_moment, 0.0), G(K, 0.0);
  for (const auto& nd : nodes) {
    const double w = std::exp(nd.logw - mx);
    S += w;
    const double r = std::abs(nd.y);
    if (r > 0.9 * top) tail += w;
    const double r2 = r * r;
    double p = 1;
    for (int k = 0; k < max_moment; ++k) mom[k] += w * (p *= r2);
    for (std::size_t k = 0; k < K; ++k) {
      if (!z.pair_active(k)) continue;
      if (!radial)
        G[k] += w * src.pair(k, nd.y);
      else {
        const double T = src.pair(k, r), A = src.pair_perp(k, r);
        G[k] += w * (A + (T - A) / n);
      }
    }
  }
  ZeroModeResult out;
  out.classes = z.classes;
  out.tail_fraction = tail / S;
  if (out.tail_fraction > 1e-8) {
    std::ostringstream os;
    os << "non-integrable tails: grid-tail mass fraction " << out.tail_fraction << " exceeds 1e-8";
    throw std::domain_error(os.str());
  }
  for (auto& v : mom) v /= S;
  for (auto& v : G) v /= S;
  out.moments = mom;
  out.two_point = G;
  out.chi = mom.empty() ? 0 : V * mom[0] / n;
  return out;
}

// ---------------------------------------------------------------------------
// full runs

// backward bound on the grid half-width at each scale 0..N from Gaussian widths:
// R_j = max(k√v_j, R_{j+1} + 6σ'_{j+1}) with v_j the variance still to be integrated
inline std::vector<double> gaussian_ranges(const ModelParams& model, Boundary bc, const LatticeShape& shape, const NumericsConfig& cfg) {
  const int N = shape.scales();
  const double V = static_cast<double>(shape.volume());
  const double aeff = zero_mode_mass(bc, model.mass, shape);
  double v = aeff > 0 ? 1.0 / (V * aeff) : std::numeric_limits<double>::infinity();
  std::vector<double> R(N + 1);
  R[N] = cfg.range_sigmas * std::sqrt(v);
  for (int j = N - 1; j >= 0; --j) {
    const auto law = make_fluctuation_law(j + 1, model.mass, shape);
    v += law.variance();
    R[j] = std::max(cfg.range_sigmas * std::sqrt(v), R[j + 1] + 6 * std::sqrt(law.variance()));
  }
  return R;
}

// where the single-site bulk weight drops by `drop` below its maximum
inline double initial_support(const ModelParams& model, double drop) {
  const double g = model.g, nu = model.bulk_nu();
  if (g == 0) return nu > 0 ? std::sqrt(2 * drop / nu) : std::numeric_limits<double>::infinity();
  const double top = nu < 0 ? nu * nu / (4 * g) : 0.0;
  // g u²/4 + ν u/2 + (top − drop) = 0 with u = |φ|²
  const double c = top - drop;
  const double u = (-nu / 2 + std::sqrt(nu * nu / 4 - g * c)) / (g / 2);
  return std::sqrt(u);
}

struct RgRun {
  ZeroModeResult zero_mode;
  std::vector<double> lemma_ratio;  // per scale 1..N: max e^ℓ|Z_o/Z_∅ − φ⁽¹⁾| over max e^ℓ·noise
  std::vector<StepInfo> steps;
  EffectiveZ final_z;
};

// deviation of Z_o − φ⁽¹⁾Z_∅ relative to its estimator noise on the grid
inline double lemma_ratio(const EffectiveZ& z) {
  double dev = 0, noise = 0;
  for (int i = 0; i < z.grid.size(); ++i) {
    const double w = std::exp(z.log_bulk[i]);
    dev = std::max(dev, w * std::abs(z.obs[i] - z.grid.point(i)));
    noise = std::max(noise, w * z.obs_err[i]);
  }
  if (noise == 0) return dev < 1e-12 ? 0.0 : std::numeric_limits<double>::infinity();
  return dev / noise;
}

inline CounterRng step_stream(const NumericsConfig& cfg, std::uint64_t replica, int scale) {
  return CounterRng(cfg.seed).derive({replica, static_cast<std::uint64_t>(scale)});
}

inline RgRun run_rg(const ModelParams& model, Boundary bc, const LatticeShape& shape, const std::vector<int>& classes,
                    const NumericsConfig& cfg, std::uint64_t replica = 0, const std::function<void(const EffectiveZ&)>& observer = {},
                    bool bulk_only = false) {
  cfg.validate(model.n);
  if (model.g < 0) throw std::domain_error("g must be >= 0");
  const int N = shape.scales();
  const auto R = gaussian_ranges(model, bc, shape, cfg);
  const double support = 1.05 * initial_support(model, cfg.support_drop);
  const double R0 = model.g > 0 ? support : std::min(R[0], support);
  if (!std::isfinite(R0)) throw std::domain_error("no confinement: g = 0, non-positive bulk mass and singular zero mode");
  EffectiveZ z = init_Z0(model, shape, bulk_only ? std::vector<int>{} : classes, R0, cfg.grid_points);
  if (observer) observer(z);
  RgRun run;
  // with g > 0 the bulk confines and the Gaussian widths are no bound (broken phase)
  const double aeff = zero_mode_mass(bc, model.mass, shape);
  const double kappa = aeff > 0 ? aeff * static_cast<double>(shape.volume()) : 0.0;
  for (int j = 0; j < N; ++j) {
    const auto law = make_fluctuation_law(j + 1, model.mass, shape);
    StepInfo info;
    const double cap = model.g > 0 ? std::numeric_limits<double>::infinity() : R[j + 1];
    z = rg_step(z, law, cfg, step_stream(cfg, replica, j + 1), cap, bulk_only, &info, j + 1 == N ? kappa : 0.0);
    run.steps.push_back(info);
    if (!bulk_only) run.lemma_ratio.push_back(lemma_ratio(z));
    if (observer) observer(z);
  }
  run.zero_mode = zero_mode_integrate(z, bc, model.mass);
  run.final_z = std::move(z);
  return run;
}

// ---------------------------------------------------------------------------
// tuning and scans

// fixed covariance split with zero-mode mass |Λ|^{-1} h_N^{-2}; physics depends only on ν
inline double default_mass_split(Boundary bc, const LatticeShape& shape, double g, int n) {
  const double V = static_cast<double>(shape.volume());
  double h2;
  if (g > 0 && shape.dim() >= 4) {
    const auto p = ScaleParams::leading_order(shape.dim(), shape.block_side(), shape.scales(), n, g);
    h2 = large_field_h(p) * large_field_h(p);
  } else {
    h2 = shape.Lpow(-(shape.dim() - 2.0) * shape.scales());
  }
  const double aeff = 1.0 / (V * h2);
  return aeff - (zero_mode_mass(bc, 0.0, shape));
}

struct TuneResult {
  double nu_star = 0;
  double target = 0;
  double lo = 0, hi = 0;
  int evaluations = 0;
  std::vector<std::pair<double, double>> trace;  // (ν, χ)
};

// bisection on ν for χ_N(ν) = target (default V h_N² f_n(0)); common random numbers
// make χ_N(ν) a deterministic function of ν for the given replica
inline TuneResult tune_nu(ModelParams model, Boundary bc, const LatticeShape& shape, const NumericsConfig& cfg, std::uint64_t replica = 0,
                          std::optional<double> target = {}, std::optional<std::pair<double, double>> bracket = {}) {
  if (!(model.g > 0)) throw std::domain_error("tune_nu needs g > 0");
  const auto p = ScaleParams::leading_order(shape.dim(), shape.block_side(), shape.scales(), model.n, model.g);
  const double V = static_cast<double>(shape.volume());
  TuneResult out;
  out.target = target ? *target : V * std::pow(large_field_h(p), 2) * profile_f(model.n, 0.0);
  const double tol = 1e-3 * window_w(p);
  auto chi = [&](double nu) {
    model.nu = nu;
    const double c = run_rg(model, bc, shape, {}, cfg, replica, {}, true).zero_mode.chi;
    out.trace.emplace_back(nu, c);
    ++out.evaluations;
    return c;
  };
  double lo, hi, clo, chi_hi;
  if (bracket) {
    lo = bracket->first;
    hi = bracket->second;
    clo = chi(lo);
    chi_hi = chi(hi);
  } else {
    double step = std::max(0.25 * std::abs(p.nu_c), 50 * window_w(p));
    lo = p.nu_c - step;
    hi = p.nu_c + step;
    clo = chi(lo);
    chi_hi = chi(hi);
    for (int it = 0; it < 40 && clo < out.target; ++it) {
      hi = lo;
      chi_hi = clo;
      step *= 2;
      lo -= step;
      clo = chi(lo);
    }
    for (int it = 0; it < 40 && chi_hi > out.target; ++it) {
      lo = hi;
      clo = chi_hi;
      step *= 2;
      hi += step;
      chi_hi = chi(hi);
    }
  }
  if (!(clo >= out.target && chi_hi <= out.target)) {
    std::ostringstream os;
    os.precision(10);
    os << "tune_nu: no sign change in bracket [" << lo << ", " << hi << "]: chi = " << clo << ", " << chi_hi << " vs target "
       << out.target;
    throw std::domain_error(os.str());
  }
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    const double c = chi(mid);
    if (c > clo || c < chi_hi) {
      std::ostringstream os;
      os.precision(12);
      os << "tune_nu: chi not decreasing in nu near " << mid;
      throw std::runtime_error(os.str());
    }
    if (c > out.target) {
      lo = mid;
      clo = c;
    } else {
      hi = mid;
      chi_hi = c;
    }
  }
  out.lo = lo;
  out.hi = hi;
  out.nu_star = 0.5 * (lo + hi);
  return out;
}

struct ScanRow {
  double s = 0;
  int cls = 0;
  Estimate G;
};

struct ScanResult {
  std::vector<double> nu_star;  // per replica
  std::vector<ScanRow> rows;
  std::vector<Estimate> chi;  // per s
  double mass_split = 0;
  double max_lemma_ratio = 0;
};

// per replica: tune ν* (unless given), then run ν = ν* + s·w_N (NonGaussian) or ν* + s·v_N (Gaussian);
// error bars from the spread over replicas
inline ScanResult two_point_scan(ModelParams model, Boundary bc, Regime regime, const std::vector<double>& s_list,
                                 const std::vector<int>& classes, const LatticeShape& shape, const NumericsConfig& cfg, int replicas,
                                 const std::vector<double>& nu_star = {}) {
  if (replicas < 2) throw std::invalid_argument("scan needs at least two replicas for error bars");
  if (!nu_star.empty() && static_cast<int>(nu_star.size()) != replicas)
    throw std::invalid_argument("scan needs one tuned nu* per replica");
  for (double s : s_list)
    if (std::abs(s) > 10) throw std::domain_error("scan caps |s| <= 10");
  const auto p = ScaleParams::leading_order(shape.dim(), shape.block_side(), shape.scales(), model.n, model.g);
  const double unit = regime == Regime::NonGaussian ? window_w(p) : shift_v(p);
  model.mass = default_mass_split(bc, shape, model.g, model.n);
  ScanResult out;
  out.mass_split = model.mass;
  std::vector<std::vector<std::vector<double>>> G(s_list.size(), std::vector<std::vector<double>>(classes.size()));
  std::vector<std::vector<double>> chis(s_list.size());
  for (int r = 0; r < replicas; ++r) {
    const double ns = nu_star.empty() ? tune_nu(model, bc, shape, cfg, r).nu_star : nu_star[r];
    out.nu_star.push_back(ns);
    for (std::size_t i = 0; i < s_list.size(); ++i) {
      model.nu = ns + s_list[i] * unit;
      const auto run = run_rg(model, bc, shape, classes, cfg, r);
      for (double lr : run.lemma_ratio) out.max_lemma_ratio = std::max(out.max_lemma_ratio, lr);
      for (std::size_t k = 0; k < classes.size(); ++k) G[i][k].push_back(run.zero_mode.two_point[k]);
      chis[i].push_back(run.zero_mode.chi);
    }
  }
  for (std::size_t i = 0; i < s_list.size(); ++i) {
    for (std::size_t k = 0; k < classes.size(); ++k) out.rows.push_back({s_list[i], classes[k], mean_sem(G[i][k])});
    out.chi.push_back(mean_sem(chis[i]));
  }
  return out;
}

}  // namespace hrg

#pragma once

// Single-site Metropolis for the hierarchical |φ|⁴ measure. The quadratic form is
// ½Σ_j L^{−2(j−1)}‖P_jφ‖² (+ ½qL^{−2N}‖Q_Nφ‖² for free bc), and ‖Q_jφ‖² only needs
// the block sums, so every update touches N+1 cached sums.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <vector>

#include "covariance.hpp"
#include "random.hpp"
#include "rg_exact.hpp"
#include "stats.hpp"

namespace hrg {

inline constexpr std::uint64_t kMcmcVolumeCap = std::uint64_t{1} << 20;

struct ChainConfig {
  long sweeps = 20000;
  long burn_in = 2000;
  double width = 1.0;  // initial proposal width; tuned during burn-in
  int stride = 1;      // sweeps between measurements
  std::uint64_t seed = 1;
  bool translation_average = true;
  bool tune_width = true;

  void validate() const {
    if (!(width > 0)) throw std::invalid_argument("proposal width must be positive");
    if (sweeps < 1 || burn_in < 0 || stride < 1) throw std::invalid_argument("sweeps >= 1, burn-in >= 0, stride >= 1 required");
  }
};

class FieldState {
 public:
  FieldState(const LatticeShape& shape, Boundary bc, int n) : shape_(shape), bc_(bc), n_(n) {
    if (n < 1) throw std::domain_error("n must be >= 1");
    if (shape.volume() > kMcmcVolumeCap) {
      std::ostringstream os;
      os << "volume " << shape.volume() << " exceeds the sampling cap 2^20";
      throw std::domain_error(os.str());
    }
    const int N = shape.scales();
    values_.assign(shape.volume() * n, 0.0);
    sums_.resize(N + 1);
    for (int j = 1; j <= N; ++j) sums_[j].assign(shape.block_count(j) * n, 0.0);
    coef_.resize(N + 1);
    const double L = shape.block_side(), d = shape.dim();
    auto kappa = [&](int j) { return std::pow(L, -2.0 * (j - 1)); };
    // H₂ = ½ Σ_j c_j L^{−dj} Σ_B |S_B|²
    std::vector<double> c(N + 1);
    c[0] = 1.0;
    for (int j = 1; j < N; ++j) c[j] = kappa(j + 1) - kappa(j);
    c[N] = (N >= 1 ? -kappa(N) : 0.0) + (bc == Boundary::Free ? const_q(shape.dim(), shape.block_side()) * std::pow(L, -2.0 * N) : 0.0);
    if (N == 0) c[0] = 1.0;
    diag_ = 0;
    for (int j = 0; j <= N; ++j) {
      coef_[j] = c[j] * std::pow(L, -d * j);
      diag_ += coef_[j];
    }
    stride_.resize(N + 1);
    for (int j = 0; j <= N; ++j) stride_[j] = shape.block_volume(j);
  }

  const LatticeShape& shape() const { return shape_; }
  Boundary boundary() const { return bc_; }
  int components() const { return n_; }
  std::uint64_t volume() const { return shape_.volume(); }
  double value(std::uint64_t x, int c) const { return values_[x * n_ + c]; }
  const std::vector<double>& values() const { return values_; }
  double block_sum(int j, std::uint64_t block, int c) const { return j == 0 ? values_[block * n_ + c] : sums_[j][block * n_ + c]; }

  void set(std::uint64_t x, const double* v) {
    for (int c = 0; c < n_; ++c) {
      const double dv = v[c] - values_[x * n_ + c];
      values_[x * n_ + c] = v[c];
      for (int j = 1; j <= shape_.scales(); ++j) sums_[j][(x / stride_[j]) * n_ + c] += dv;
    }
  }

  void rebuild() {
    for (int j = 1; j <= shape_.scales(); ++j) std::fill(sums_[j].begin(), sums_[j].end(), 0.0);
    for (std::uint64_t x = 0; x < volume(); ++x)
      for (int c = 0; c < n_; ++c)
        for (int j = 1; j <= shape_.scales(); ++j) sums_[j][(x / stride_[j]) * n_ + c] += values_[x * n_ + c];
  }

  // largest relative deviation between the cached and the rebuilt block sums
  double cache_drift() const {
    FieldState fresh = *this;
    fresh.rebuild();
    double worst = 0;
    for (int j = 1; j <= shape_.scales(); ++j)
      for (std::size_t i = 0; i < sums_[j].size(); ++i) {
        const double scale = std::max(1.0, std::abs(fresh.sums_[j][i]));
        worst = std::max(worst, std::abs(sums_[j][i] - fresh.sums_[j][i]) / scale);
      }
    return worst;
  }

  // (−Δ*)_{xx} and ((−Δ*)φ)_x, assembled from the block sums containing x
  struct Local {
    double diagonal = 0;
    std::vector<double> field;
  };
  Local local_quadratic(std::uint64_t x) const {
    Local out;
    out.diagonal = diag_;
    out.field.assign(n_, 0.0);
    local_field(x, out.field.data());
    return out;
  }
  void local_field(std::uint64_t x, double* h) const {
    for (int c = 0; c < n_; ++c) h[c] = coef_[0] * values_[x * n_ + c];
    for (int j = 1; j <= shape_.scales(); ++j) {
      const double* s = &sums_[j][(x / stride_[j]) * n_];
      for (int c = 0; c < n_; ++c) h[c] += coef_[j] * s[c];
    }
  }
  double diagonal() const { return diag_; }

  // ½(φ, −Δ*φ) from the block sums
  double quadratic_energy() const {
    double e = 0;
    for (int j = 0; j <= shape_.scales(); ++j) {
      double t = 0;
      const std::uint64_t blocks = shape_.block_count(j);
      for (std::uint64_t b = 0; b < blocks; ++b)
        for (int c = 0; c < n_; ++c) {
          const double s = block_sum(j, b, c);
          t += s * s;
        }
      e += 0.5 * coef_[j] * t;
    }
    return e;
  }

 private:
  LatticeShape shape_;
  Boundary bc_;
  int n_;
  std::vector<double> values_;
  std::vector<std::vector<double>> sums_;  // [scale][block * n + component]
  std::vector<double> coef_;               // c_j L^{−dj}
  std::vector<std::uint64_t> stride_;
  double diag_ = 0;
};

inline double site_potential(const double* v, int n, double g, double nu) {
  double r2 = 0;
  for (int c = 0; c < n; ++c) r2 += v[c] * v[c];
  return 0.25 * g * r2 * r2 + 0.5 * nu * r2;
}

inline double total_energy(const FieldState& s, double g, double nu) {
  double e = s.quadratic_energy();
  for (std::uint64_t x = 0; x < s.volume(); ++x) e += site_potential(&s.values()[x * s.components()], s.components(), g, nu);
  return e;
}

// one sequential sweep of Gaussian single-site proposals; returns the acceptance rate
inline double metropolis_sweep(FieldState& s, double g, double nu, double width, StreamRng& rng) {
  const int n = s.components();
  std::vector<double> h(n), prop(n);
  long accepted = 0;
  const double D = s.diagonal();
  for (std::uint64_t x = 0; x < s.volume(); ++x) {
    const double* cur = &s.values()[x * n];
    s.local_field(x, h.data());
    double dq = 0, dd = 0;
    for (int c = 0; c < n; ++c) {
      const double d = width * rng.normal();
      prop[c] = cur[c] + d;
      dq += d * h[c];
      dd += d * d;
    }
    const double dH = dq + 0.5 * D * dd + site_potential(prop.data(), n, g, nu) - site_potential(cur, n, g, nu);
    if (dH <= 0 || rng.uniform() < std::exp(-dH)) {
      s.set(x, prop.data());
      ++accepted;
    }
  }
  return static_cast<double>(accepted) / static_cast<double>(s.volume());
}

struct McmcResult {
  std::vector<int> classes;
  std::vector<BatchMeans> two_point;  // per class
  BatchMeans chi;
  std::vector<BatchMeans> moments;  // <|Φ|^{2p}>
  double acceptance = 0;
  double width = 0;
  long measurements = 0;
  double cache_drift = 0;
  bool reliable = true;  // every batch-means estimate reached lag-1 < 0.1
};

// G_j = (Σ_B S_B² at scale j − at scale j−1) / (|Λ| n_j) on the first component,
// the translation average over all pairs with coalescence scale j
inline void measure_classes(const FieldState& s, const std::vector<int>& classes, bool translation_average, std::vector<double>& G,
                            double& chi, std::vector<double>& moments) {
  const auto& sh = s.shape();
  const int N = sh.scales(), n = s.components();
  const double V = static_cast<double>(s.volume());
  std::vector<double> U(N + 1, 0.0);
  for (int j = 0; j <= N; ++j)
    for (std::uint64_t b = 0; b < sh.block_count(j); ++b) {
      const double v = s.block_sum(j, b, 0);
      U[j] += v * v;
    }
  G.resize(classes.size());
  for (std::size_t k = 0; k < classes.size(); ++k) {
    const int j = classes[k];
    if (translation_average) {
      const double pairs = j == 0 ? 1.0 : static_cast<double>(sh.block_volume(j) - sh.block_volume(j - 1));
      G[k] = (U[j] - (j == 0 ? 0.0 : U[j - 1])) / (V * pairs);
    } else {
      const auto x = class_representative(j, sh).packed();
      G[k] = s.value(0, 0) * s.value(x, 0);
    }
  }
  chi = U[N] / V;
  double phi2 = 0;
  for (int c = 0; c < n; ++c) {
    const double m = s.block_sum(N, 0, c) / V;
    phi2 += m * m;
  }
  double p = 1;
  for (auto& m : moments) m = (p *= phi2);
}

inline McmcResult run_chain(const ModelParams& model, Boundary bc, const LatticeShape& shape, const std::vector<int>& classes,
                            const ChainConfig& cfg, std::uint64_t chain = 0, int max_moment = 3) {
  cfg.validate();
  if (model.g < 0) throw std::domain_error("g must be >= 0");
  FieldState s(shape, bc, model.n);
  StreamRng rng(CounterRng(cfg.seed).derive({0x6d636d63ULL, chain}));
  double width = cfg.width;
  for (long t = 0; t < cfg.burn_in; ++t) {
    const double acc = metropolis_sweep(s, model.g, model.nu, width, rng);
    if (cfg.tune_width) width *= std::exp(std::clamp(acc - 0.4, -0.3, 0.3));
  }
  McmcResult out;
  out.classes = classes;
  out.width = width;
  std::vector<std::vector<double>> gs(classes.size());
  std::vector<double> chis;
  std::vector<std::vector<double>> ms(max_moment);
  std::vector<double> G, mom(max_moment);
  double chi = 0, acc_sum = 0;
  const double updates_per_check = 1e6;
  double since_check = 0;
  for (long t = 0; t < cfg.sweeps; ++t) {
    acc_sum += metropolis_sweep(s, model.g, model.nu, width, rng);
    since_check += static_cast<double>(s.volume());
    if (since_check >= updates_per_check) {
      out.cache_drift = std::max(out.cache_drift, s.cache_drift());
      s.rebuild();
      since_check = 0;
    }
    if ((t + 1) % cfg.stride) continue;
    measure_classes(s, classes, cfg.translation_average, G, chi, mom);
    for (std::size_t k = 0; k < classes.size(); ++k) gs[k].push_back(G[k]);
    chis.push_back(chi);
    for (int p = 0; p < max_moment; ++p) ms[p].push_back(mom[p]);
  }
  out.acceptance = acc_sum / static_cast<double>(cfg.sweeps);
  out.measurements = static_cast<long>(chis.size());
  for (auto& v : gs) {
    out.two_point.push_back(batch_means(v));
    out.reliable &= out.two_point.back().reliable;
  }
  out.chi = batch_means(chis);
  out.reliable &= out.chi.reliable;
  for (auto& v : ms) out.moments.push_back(batch_means(v));
  return out;
}

// independent chains with disjoint streams, merged in chain order
struct McmcEnsemble {
  std::vector<int> classes;
  std::vector<Estimate> two_point;
  Estimate chi;
  std::vector<McmcResult> chains;
  bool reliable = true;
};

inline McmcEnsemble run_chains(const ModelParams& model, Boundary bc, const LatticeShape& shape, const std::vector<int>& classes,
                               const ChainConfig& cfg, int chains, int threads = 1) {
  if (chains < 1) throw std::invalid_argument("need at least one chain");
  McmcEnsemble out;
  out.classes = classes;
  out.chains.resize(chains);
  detail::parallel_for(chains, threads, [&](int c, int) { out.chains[c] = run_chain(model, bc, shape, classes, cfg, c); });
  auto merge = [&](auto get) {
    double m = 0, v = 0;
    for (const auto& ch : out.chains) {
      const BatchMeans& b = get(ch);
      m += b.mean;
      v += b.err * b.err;
    }
    return Estimate{m / chains, std::sqrt(v) / chains};
  };
  for (std::size_t k = 0; k < classes.size(); ++k) out.two_point.push_back(merge([k](const McmcResult& r) -> const BatchMeans& { return r.two_point[k]; }));
  out.chi = merge([](const McmcResult& r) -> const BatchMeans& { return r.chi; });
  for (const auto& ch : out.chains) out.reliable &= ch.reliable;
  return out;
}

}  // namespace hrg

#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace hrg {

struct Estimate {
  double mean = 0;
  double err = 0;
};

// mean and standard error of independent values
inline Estimate mean_sem(const std::vector<double>& v) {
  if (v.empty()) throw std::invalid_argument("mean of empty sample");
  const double n = static_cast<double>(v.size());
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / n;
  if (v.size() < 2) return {m, std::numeric_limits<double>::infinity()};
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return {m, std::sqrt(s / (n - 1) / n)};
}

struct BatchMeans {
  double mean = 0;
  double err = 0;
  std::size_t batch_size = 1;
  std::size_t batches = 0;
  double lag1 = 0;
  bool reliable = false;  // lag-1 batch autocorrelation dropped below 0.1 with enough batches
};

// batch means with batch-size doubling until the lag-1 autocorrelation of the
// batch means falls below 0.1
inline BatchMeans batch_means(const std::vector<double>& series, std::size_t min_batches = 16) {
  if (series.empty()) throw std::invalid_argument("batch means of empty series");
  BatchMeans out;
  const std::size_t n = series.size();
  out.mean = std::accumulate(series.begin(), series.end(), 0.0) / static_cast<double>(n);
  for (std::size_t b = 1;; b *= 2) {
    const std::size_t nb = n / b;
    if (nb < min_batches) {
      out.reliable = false;
      break;
    }
    std::vector<double> m(nb, 0.0);
    for (std::size_t i = 0; i < nb; ++i) {
      double s = 0;
      for (std::size_t k = 0; k < b; ++k) s += series[i * b + k];
      m[i] = s / static_cast<double>(b);
    }
    const double mm = std::accumulate(m.begin(), m.end(), 0.0) / static_cast<double>(nb);
    double v = 0, c = 0;
    for (std::size_t i = 0; i < nb; ++i) {
      v += (m[i] - mm) * (m[i] - mm);
      if (i + 1 < nb) c += (m[i] - mm) * (m[i + 1] - mm);
    }
    out.batch_size = b;
    out.batches = nb;
    out.lag1 = v > 0 ? c / v : 0.0;
    out.err = std::sqrt(v / static_cast<double>(nb - 1) / static_cast<double>(nb));
    if (out.lag1 < 0.1) {
      out.reliable = true;
      break;
    }
  }
  return out;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("pearson needs equal sizes >= 2");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n, mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace hrg

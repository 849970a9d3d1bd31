#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hrg {

enum class Boundary { Free, Periodic };

inline std::string to_string(Boundary bc) { return bc == Boundary::Free ? "free" : "periodic"; }

inline Boundary parse_boundary(std::string_view s) {
  if (s == "free" || s == "Free" || s == "F") return Boundary::Free;
  if (s == "periodic" || s == "Periodic" || s == "P") return Boundary::Periodic;
  throw std::invalid_argument("unknown boundary condition '" + std::string(s) + "'");
}

// integer power with overflow detection against `cap`
inline std::uint64_t checked_pow(std::uint64_t base, int exp, std::uint64_t cap) {
  std::uint64_t r = 1;
  for (int i = 0; i < exp; ++i) {
    if (r > cap / base) throw std::domain_error("lattice volume exceeds 2^62");
    r *= base;
  }
  return r;
}

class LatticeShape {
 public:
  static constexpr std::uint64_t kMaxVolume = std::uint64_t{1} << 62;

  LatticeShape(int d, int L, int N, Boundary bc = Boundary::Periodic) : d_(d), L_(L), N_(N), bc_(bc) {
    if (d < 1) throw std::domain_error("dimension d must be >= 1");
    if (L < 2) throw std::domain_error("block side L must be >= 2");
    if (N < 0) throw std::domain_error("number of scales N must be >= 0");
    cell_ = checked_pow(static_cast<std::uint64_t>(L), d, kMaxVolume);
    volume_ = checked_pow(cell_, N, kMaxVolume);
    side_ = checked_pow(static_cast<std::uint64_t>(L), N, kMaxVolume);
  }

  int dim() const { return d_; }
  int block_side() const { return L_; }
  int scales() const { return N_; }
  Boundary boundary() const { return bc_; }
  std::uint64_t volume() const { return volume_; }
  std::uint64_t side() const { return side_; }
  std::uint64_t cell() const { return cell_; }  // L^d sub-blocks per block

  std::uint64_t block_volume(int j) const { return ipow(cell_, j); }
  std::uint64_t block_count(int j) const { return ipow(cell_, N_ - j); }

  // L^{-dj} etc. as doubles
  double Lpow(double e) const { return std::pow(static_cast<double>(L_), e); }

  LatticeShape with_boundary(Boundary bc) const { return LatticeShape(d_, L_, N_, bc); }
  LatticeShape with_scales(int N) const { return LatticeShape(d_, L_, N, bc_); }

  bool same_geometry(const LatticeShape& o) const { return d_ == o.d_ && L_ == o.L_ && N_ == o.N_; }
  bool operator==(const LatticeShape& o) const = default;

 private:
  static std::uint64_t ipow(std::uint64_t b, int e) {
    std::uint64_t r = 1;
    while (e-- > 0) r *= b;
    return r;
  }
  int d_, L_, N_;
  Boundary bc_;
  std::uint64_t cell_ = 1, volume_ = 1, side_ = 1;
};

struct BlockId {
  int scale = 0;
  std::uint64_t index = 0;
  bool operator==(const BlockId&) const = default;
};

// Point of Λ_N as base-L digits, level 1 first: digits_[(k-1)*d + i] is the
// level-k digit of coordinate i.
class Site {
 public:
  static Site origin(const LatticeShape& shape) { return Site(shape); }

  static Site from_coords(std::span<const std::uint64_t> coords, const LatticeShape& shape) {
    if (static_cast<int>(coords.size()) != shape.dim())
      throw std::domain_error("coordinate tuple has wrong dimension");
    Site s(shape);
    const int d = shape.dim(), L = shape.block_side();
    for (int i = 0; i < d; ++i) {
      std::uint64_t c = coords[i];
      if (c >= shape.side()) throw std::domain_error("coordinate " + std::to_string(c) + " outside [0, L^N)");
      for (int k = 0; k < shape.scales(); ++k) {
        s.digits_[k * d + i] = static_cast<int>(c % L);
        c /= L;
      }
    }
    return s;
  }
  static Site from_coords(std::initializer_list<std::uint64_t> coords, const LatticeShape& shape) {
    std::vector<std::uint64_t> v(coords);
    return from_coords(std::span<const std::uint64_t>(v), shape);
  }

  static Site from_packed(std::uint64_t p, const LatticeShape& shape) {
    if (p >= shape.volume()) throw std::domain_error("packed index out of range");
    Site s(shape);
    const int L = shape.block_side();
    for (auto& dig : s.digits_) {
      dig = static_cast<int>(p % L);
      p /= L;
    }
    return s;
  }

  static Site from_digits(std::vector<int> digits, const LatticeShape& shape) {
    if (digits.size() != static_cast<std::size_t>(shape.dim() * shape.scales()))
      throw std::domain_error("digit sequence has wrong length");
    for (int v : digits)
      if (v < 0 || v >= shape.block_side()) throw std::domain_error("digit outside [0, L)");
    Site s(shape);
    s.digits_ = std::move(digits);
    return s;
  }

  const LatticeShape& shape() const { return shape_; }
  const std::vector<int>& digits() const { return digits_; }
  int digit(int level, int axis) const { return digits_[(level - 1) * shape_.dim() + axis]; }

  std::vector<std::uint64_t> coords() const {
    const int d = shape_.dim(), L = shape_.block_side();
    std::vector<std::uint64_t> c(d, 0);
    for (int i = 0; i < d; ++i)
      for (int k = shape_.scales() - 1; k >= 0; --k) c[i] = c[i] * L + digits_[k * d + i];
    return c;
  }

  // Σ_k D_k (L^d)^{k-1}, D_k = Σ_i digit_{k,i} L^i
  std::uint64_t packed() const {
    std::uint64_t p = 0;
    for (auto it = digits_.rbegin(); it != digits_.rend(); ++it) p = p * shape_.block_side() + *it;
    return p;
  }

  bool operator==(const Site& o) const { return shape_.same_geometry(o.shape_) && digits_ == o.digits_; }

 private:
  explicit Site(const LatticeShape& shape) : shape_(shape), digits_(shape.dim() * shape.scales(), 0) {}
  LatticeShape shape_;
  std::vector<int> digits_;
};

namespace detail {
inline void require_same(const Site& x, const Site& y) {
  if (!x.shape().same_geometry(y.shape())) throw std::domain_error("sites belong to different lattices");
}
}  // namespace detail

inline Site oplus(const Site& x, const Site& y) {
  detail::require_same(x, y);
  const int L = x.shape().block_side();
  std::vector<int> dg(x.digits().size());
  for (std::size_t k = 0; k < dg.size(); ++k) dg[k] = (x.digits()[k] + y.digits()[k]) % L;
  return Site::from_digits(std::move(dg), x.shape());
}

inline Site ominus(const Site& x, const Site& y) {
  detail::require_same(x, y);
  const int L = x.shape().block_side();
  std::vector<int> dg(x.digits().size());
  for (std::size_t k = 0; k < dg.size(); ++k) dg[k] = (x.digits()[k] - y.digits()[k] + L) % L;
  return Site::from_digits(std::move(dg), x.shape());
}

// highest level at which the digits differ (0 if x == y)
inline int coalescence(const Site& x, const Site& y) {
  detail::require_same(x, y);
  const int d = x.shape().dim();
  for (int k = x.shape().scales(); k >= 1; --k)
    for (int i = 0; i < d; ++i)
      if (x.digit(k, i) != y.digit(k, i)) return k;
  return 0;
}

// Same on packed indices: level-k digits occupy the k-th base-L^d digit.
inline int coalescence_packed(std::uint64_t x, std::uint64_t y, const LatticeShape& shape) {
  const std::uint64_t m = shape.cell();
  int j = 0;
  for (int k = 1; x != y; ++k) {
    if (x % m != y % m) j = k;
    x /= m;
    y /= m;
  }
  return j;
}

inline BlockId block_index(const Site& x, int j) {
  if (j < 0 || j > x.shape().scales()) throw std::domain_error("block scale out of range");
  return BlockId{j, x.packed() / x.shape().block_volume(j)};
}

inline double euclid_norm(const Site& x) {
  double s = 0;
  for (auto c : x.coords()) s += static_cast<double>(c) * static_cast<double>(c);
  return std::sqrt(s);
}

// canonical representative of coalescence class j: L^{j-1} e_1 (o for j = 0)
inline Site class_representative(int j, const LatticeShape& shape) {
  if (j < 0 || j > shape.scales()) throw std::domain_error("coalescence class out of range");
  std::vector<std::uint64_t> c(shape.dim(), 0);
  if (j > 0) c[0] = static_cast<std::uint64_t>(std::llround(shape.Lpow(j - 1)));
  return Site::from_coords(std::span<const std::uint64_t>(c), shape);
}

// farthest representative of class j: all coordinates L^j - 1
inline Site class_far_representative(int j, const LatticeShape& shape) {
  if (j < 0 || j > shape.scales()) throw std::domain_error("coalescence class out of range");
  std::vector<std::uint64_t> c(shape.dim(), static_cast<std::uint64_t>(std::llround(shape.Lpow(j))) - 1);
  return Site::from_coords(std::span<const std::uint64_t>(c), shape);
}

}  // namespace hrg

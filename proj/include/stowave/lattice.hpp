#pragma once

// Periodic d-dimensional lattice standing in for R^d, the discrete Fourier
// transform under the project convention F f(eta) = int exp(-i eta.x) f(x) dx,
// and the L2 / H^{-k} norms built on it.
//
// Layout: row-major with the last axis fastest. Real-space point m has
// coordinate x_m = -L/2 + m h per axis. Spectra use FFT order per axis, so
// storage index i carries the signed frequency index j = i (i < N/2) or
// j = i - N (i >= N/2), with eta_j = 2 pi j / L.

#include <fftw3.h>

#include <array>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <istream>
#include <map>
#include <mutex>
#include <numbers>
#include <ostream>
#include <span>
#include <tuple>
#include <vector>

#include "stowave/error.hpp"

namespace stowave {

using Complex = std::complex<double>;

class Grid {
 public:
  Grid(int dim, int points_per_axis, double length)
      : dim_(dim), n_(points_per_axis), length_(length) {
    if (dim < 1 || dim > 3) throw Error("grid dimension must be 1, 2 or 3");
    if (points_per_axis < 8 || !std::has_single_bit(static_cast<unsigned>(points_per_axis)))
      throw Error("grid points per axis must be a power of two and at least 8");
    if (!(length > 0.0) || !std::isfinite(length)) throw Error("grid length must be positive");
  }

  int dim() const { return dim_; }
  int points_per_axis() const { return n_; }
  double length() const { return length_; }
  double spacing() const { return length_ / n_; }
  std::size_t size() const {
    std::size_t s = 1;
    for (int a = 0; a < dim_; ++a) s *= static_cast<std::size_t>(n_);
    return s;
  }
  double cell_volume() const { return std::pow(spacing(), dim_); }
  double dual_spacing() const { return 2.0 * std::numbers::pi / length_; }
  // Midpoint-rule weight q of one dual cell.
  double dual_cell_weight() const { return std::pow(dual_spacing(), dim_); }

  std::array<int, 3> axis_indices(std::size_t linear) const {
    std::array<int, 3> idx{0, 0, 0};
    for (int a = dim_ - 1; a >= 0; --a) {
      idx[a] = static_cast<int>(linear % n_);
      linear /= n_;
    }
    return idx;
  }
  std::size_t linear_index(const std::array<int, 3>& idx) const {
    std::size_t lin = 0;
    for (int a = 0; a < dim_; ++a) lin = lin * n_ + static_cast<std::size_t>(idx[a]);
    return lin;
  }

  int signed_frequency(int storage_index) const {
    return storage_index < n_ / 2 ? storage_index : storage_index - n_;
  }

  std::array<double, 3> coordinate(std::size_t linear) const {
    const auto idx = axis_indices(linear);
    std::array<double, 3> x{0.0, 0.0, 0.0};
    for (int a = 0; a < dim_; ++a) x[a] = -0.5 * length_ + idx[a] * spacing();
    return x;
  }
  std::array<double, 3> frequency(std::size_t linear) const {
    const auto idx = axis_indices(linear);
    std::array<double, 3> eta{0.0, 0.0, 0.0};
    for (int a = 0; a < dim_; ++a) eta[a] = signed_frequency(idx[a]) * dual_spacing();
    return eta;
  }
  double radius(std::size_t linear) const { return norm(coordinate(linear)); }
  double frequency_norm(std::size_t linear) const { return norm(frequency(linear)); }

  // Dual index of -eta (the Nyquist row maps to itself).
  std::size_t negate(std::size_t linear) const {
    auto idx = axis_indices(linear);
    for (int a = 0; a < dim_; ++a) idx[a] = (n_ - idx[a]) % n_;
    return linear_index(idx);
  }
  // Dual index of eta_a - eta_b, wrapped onto the lattice.
  std::size_t subtract(std::size_t a, std::size_t b) const {
    auto ia = axis_indices(a);
    const auto ib = axis_indices(b);
    for (int k = 0; k < dim_; ++k) ia[k] = (ia[k] - ib[k] + n_) % n_;
    return linear_index(ia);
  }

  // (-1)^{sum of storage indices}: the phase exp(i eta_j L/2) of the box offset.
  double box_phase(std::size_t linear) const {
    const auto idx = axis_indices(linear);
    int s = 0;
    for (int a = 0; a < dim_; ++a) s += idx[a];
    return (s % 2 == 0) ? 1.0 : -1.0;
  }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  double norm(const std::array<double, 3>& v) const {
    double s = 0.0;
    for (int a = 0; a < dim_; ++a) s += v[a] * v[a];
    return std::sqrt(s);
  }

  int dim_;
  int n_;
  double length_;
};

// |eta_j| for every dual index.
inline std::vector<double> frequency_norms(const Grid& grid) {
  std::vector<double> out(grid.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = grid.frequency_norm(i);
  return out;
}

// |x_m| for every lattice point.
inline std::vector<double> radii(const Grid& grid) {
  std::vector<double> out(grid.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = grid.radius(i);
  return out;
}

struct Spectrum {
  Grid grid;
  std::vector<Complex> values;

  explicit Spectrum(const Grid& g) : grid(g), values(g.size(), Complex{0.0, 0.0}) {}
  Spectrum(const Grid& g, std::vector<Complex> v) : grid(g), values(std::move(v)) {
    if (values.size() != grid.size()) throw Error("spectrum size does not match grid");
  }
};

struct LatticeField {
  Grid grid;
  std::vector<double> values;

  explicit LatticeField(const Grid& g) : grid(g), values(g.size(), 0.0) {}
  LatticeField(const Grid& g, std::vector<double> v) : grid(g), values(std::move(v)) {
    if (values.size() != grid.size()) throw Error("field size does not match grid");
  }

  template <class F>
  static LatticeField from_function(const Grid& g, F&& f) {
    LatticeField out(g);
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] = f(g.coordinate(i));
    return out;
  }

  LatticeField& operator+=(const LatticeField& o) {
    for (std::size_t i = 0; i < values.size(); ++i) values[i] += o.values[i];
    return *this;
  }
  LatticeField& operator-=(const LatticeField& o) {
    for (std::size_t i = 0; i < values.size(); ++i) values[i] -= o.values[i];
    return *this;
  }
  LatticeField& operator*=(double a) {
    for (auto& v : values) v *= a;
    return *this;
  }
  friend LatticeField operator+(LatticeField a, const LatticeField& b) { return a += b; }
  friend LatticeField operator-(LatticeField a, const LatticeField& b) { return a -= b; }
  friend LatticeField operator*(double a, LatticeField f) { return f *= a; }
};

// Pointwise product.
inline LatticeField hadamard(const LatticeField& a, const LatticeField& b) {
  LatticeField out(a.grid);
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] = a.values[i] * b.values[i];
  return out;
}

namespace detail {

// FFTW plans are created once per (dim, n, sign) under a lock and executed
// through the new-array interface, which FFTW documents as thread-safe.
class FftPlans {
 public:
  static FftPlans& instance() {
    static FftPlans plans;
    return plans;
  }

  void execute(const Grid& grid, int sign, std::vector<Complex>& data) {
    fftw_plan plan = get(grid, sign);
    auto* ptr = reinterpret_cast<fftw_complex*>(data.data());
    fftw_execute_dft(plan, ptr, ptr);
  }

 private:
  FftPlans() = default;

  fftw_plan get(const Grid& grid, int sign) {
    const auto key = std::make_tuple(grid.dim(), grid.points_per_axis(), sign);
    std::lock_guard lock(mutex_);
    if (auto it = plans_.find(key); it != plans_.end()) return it->second;
    std::vector<Complex> scratch(grid.size());
    std::array<int, 3> dims{grid.points_per_axis(), grid.points_per_axis(), grid.points_per_axis()};
    auto* ptr = reinterpret_cast<fftw_complex*>(scratch.data());
    fftw_plan plan = fftw_plan_dft(grid.dim(), dims.data(), ptr, ptr, sign,
                                   FFTW_ESTIMATE | FFTW_UNALIGNED);
    if (plan == nullptr) throw Error("FFTW plan creation failed");
    plans_.emplace(key, plan);
    return plan;
  }

  std::mutex mutex_;
  std::map<std::tuple<int, int, int>, fftw_plan> plans_;
};

}  // namespace detail

// h^d sum_m exp(-i eta_j x_m) f(x_m) for complex lattice data.
inline Spectrum forward_transform(const Grid& grid, std::span<const Complex> values) {
  if (values.size() != grid.size()) throw Error("field size does not match grid");
  std::vector<Complex> data(values.begin(), values.end());
  detail::FftPlans::instance().execute(grid, FFTW_FORWARD, data);
  const double scale = grid.cell_volume();
  for (std::size_t i = 0; i < data.size(); ++i) data[i] *= scale * grid.box_phase(i);
  return Spectrum(grid, std::move(data));
}

inline Spectrum forward_transform(const LatticeField& f) {
  std::vector<Complex> data(f.values.begin(), f.values.end());
  return forward_transform(f.grid, data);
}

// L^{-d} sum_j exp(i eta_j x_m) F(eta_j): exact inverse of forward_transform.
inline std::vector<Complex> inverse_transform_complex(const Spectrum& s) {
  const Grid& grid = s.grid;
  std::vector<Complex> data(s.values);
  for (std::size_t i = 0; i < data.size(); ++i) data[i] *= grid.box_phase(i);
  detail::FftPlans::instance().execute(grid, FFTW_BACKWARD, data);
  const double scale = 1.0 / std::pow(grid.length(), grid.dim());
  for (auto& v : data) v *= scale;
  return data;
}

// Real part of the inverse transform. The caller is responsible for the
// spectrum being Hermitian; see multiplier_apply for the checked variant.
inline LatticeField inverse_transform(const Spectrum& s) {
  const auto data = inverse_transform_complex(s);
  LatticeField out(s.grid);
  for (std::size_t i = 0; i < data.size(); ++i) out.values[i] = data[i].real();
  return out;
}

inline double l2_norm_squared(const LatticeField& f) {
  double s = 0.0;
  for (double v : f.values) s += v * v;
  return s * f.grid.cell_volume();
}

inline double l2_norm(const LatticeField& f) { return std::sqrt(l2_norm_squared(f)); }

// Plancherel side: (2 pi)^{-d} sum_j q |F(eta_j)|^2.
inline double l2_norm_squared(const Spectrum& s) {
  double acc = 0.0;
  for (const auto& v : s.values) acc += std::norm(v);
  return acc * s.grid.dual_cell_weight() / std::pow(2.0 * std::numbers::pi, s.grid.dim());
}

// ||f||^2_{H^{-k}} = (2 pi)^{-d} sum_j q (1+|eta_j|^2)^{-k} |F f(eta_j)|^2.
// k = 0 reproduces the L2 norm.
inline double h_neg_k_norm(const Spectrum& s, int k) {
  if (k < 0) throw Error("Sobolev index must be nonnegative");
  const Grid& grid = s.grid;
  double acc = 0.0;
  for (std::size_t i = 0; i < s.values.size(); ++i) {
    const double r = grid.frequency_norm(i);
    acc += std::pow(1.0 + r * r, -k) * std::norm(s.values[i]);
  }
  return std::sqrt(acc * grid.dual_cell_weight() / std::pow(2.0 * std::numbers::pi, grid.dim()));
}

inline double h_neg_k_norm(const LatticeField& f, int k) {
  return h_neg_k_norm(forward_transform(f), k);
}

inline void require_even(const Grid& grid, std::span<const double> m) {
  if (m.size() != grid.size()) throw Error("multiplier size does not match grid");
  for (std::size_t i = 0; i < m.size(); ++i) {
    const double a = m[i];
    const double b = m[grid.negate(i)];
    if (std::abs(a - b) > 1e-12 * std::max({1.0, std::abs(a), std::abs(b)}))
      throw Error("reality violated: multiplier is not even in eta");
  }
}

// Inverse transform of m . F f. The multiplier must be real and even so the
// output is real; the imaginary residue is checked against 1e-10 (relative to
// the largest output magnitude) and then discarded.
inline LatticeField multiplier_apply(const LatticeField& f, std::span<const double> m) {
  require_even(f.grid, m);
  Spectrum s = forward_transform(f);
  for (std::size_t i = 0; i < s.values.size(); ++i) s.values[i] *= m[i];
  const auto data = inverse_transform_complex(s);
  double max_abs = 0.0;
  double max_imag = 0.0;
  for (const auto& v : data) {
    max_abs = std::max(max_abs, std::abs(v));
    max_imag = std::max(max_imag, std::abs(v.imag()));
  }
  if (max_imag > 1e-10 * std::max(max_abs, 1e-300) && max_imag > 1e-300)
    throw Error("reality violated: imaginary residue after multiplier application");
  LatticeField out(f.grid);
  for (std::size_t i = 0; i < data.size(); ++i) out.values[i] = data[i].real();
  return out;
}

// d f / d x_axis through the multiplier i eta_axis. The Nyquist row has no
// real-preserving derivative and is dropped.
inline LatticeField spectral_derivative(const LatticeField& f, int axis = 0) {
  const Grid& grid = f.grid;
  if (axis < 0 || axis >= grid.dim()) throw Error("derivative axis out of range");
  Spectrum s = forward_transform(f);
  for (std::size_t i = 0; i < s.values.size(); ++i) {
    const auto idx = grid.axis_indices(i);
    if (idx[axis] == grid.points_per_axis() / 2) s.values[i] = 0.0;
    else s.values[i] *= Complex{0.0, grid.frequency(i)[axis]};
  }
  return inverse_transform(s);
}

// ---------------------------------------------------------------------------
// Snapshot format: four little-endian int64 header words (d, N, L numerator,
// L denominator) followed by N^d little-endian float64 values in lattice order.

namespace detail {

inline void write_le_u64(std::ostream& os, std::uint64_t v) {
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  os.write(bytes, 8);
}

inline std::uint64_t read_le_u64(std::istream& is) {
  unsigned char bytes[8];
  is.read(reinterpret_cast<char*>(bytes), 8);
  if (!is) throw Error("snapshot truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return v;
}

// Smallest-denominator exact rational for L (continued fractions).
inline std::pair<std::int64_t, std::int64_t> exact_rational(double x) {
  std::int64_t h0 = 0, h1 = 1, k0 = 1, k1 = 0;
  double r = x;
  for (int iter = 0; iter < 64; ++iter) {
    const double a = std::floor(r);
    if (a > 9.0e15) break;
    const auto ai = static_cast<std::int64_t>(a);
    const std::int64_t h2 = ai * h1 + h0;
    const std::int64_t k2 = ai * k1 + k0;
    h0 = h1; h1 = h2; k0 = k1; k1 = k2;
    if (static_cast<double>(h1) / static_cast<double>(k1) == x) return {h1, k1};
    const double frac = r - a;
    if (frac == 0.0) break;
    r = 1.0 / frac;
  }
  throw Error("grid length has no exact small rational representation");
}

}  // namespace detail

inline void write_snapshot(std::ostream& os, const LatticeField& f) {
  const auto [num, den] = detail::exact_rational(f.grid.length());
  detail::write_le_u64(os, static_cast<std::uint64_t>(f.grid.dim()));
  detail::write_le_u64(os, static_cast<std::uint64_t>(f.grid.points_per_axis()));
  detail::write_le_u64(os, static_cast<std::uint64_t>(num));
  detail::write_le_u64(os, static_cast<std::uint64_t>(den));
  for (double v : f.values) detail::write_le_u64(os, std::bit_cast<std::uint64_t>(v));
}

inline LatticeField read_snapshot(std::istream& is) {
  const auto d = static_cast<std::int64_t>(detail::read_le_u64(is));
  const auto n = static_cast<std::int64_t>(detail::read_le_u64(is));
  const auto num = static_cast<std::int64_t>(detail::read_le_u64(is));
  const auto den = static_cast<std::int64_t>(detail::read_le_u64(is));
  if (den <= 0) throw Error("snapshot header has nonpositive length denominator");
  Grid grid(static_cast<int>(d), static_cast<int>(n),
            static_cast<double>(num) / static_cast<double>(den));
  LatticeField f(grid);
  for (auto& v : f.values) v = std::bit_cast<double>(detail::read_le_u64(is));
  return f;
}

}  // namespace stowave

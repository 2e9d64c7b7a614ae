#pragma once

// The lattice stochastic integral
//   v(t_n) = sum_{s < n} G(t_n - t_s) * (Z(t_s) W_s),
// its isometry functional I_{G,Z}, the sup-bound I~_{G,Z}, the modulated form
// of the same functional, and the mollification / truncation ladders.
//
// The integral is defined by the left-endpoint rule: the slice of step s
// multiplies Z at step s, and Z(t_s) may depend on slices 0..s-1 only. With
// that rule the lattice isometry E||v||^2 = I_{G,Z} is exact.

#include <boost/math/interpolators/cardinal_cubic_b_spline.hpp>
#include <boost/math/quadrature/gauss.hpp>

#include <cmath>
#include <concepts>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include "stowave/covariance.hpp"
#include "stowave/error.hpp"
#include "stowave/greens.hpp"
#include "stowave/lattice.hpp"
#include "stowave/noise.hpp"

namespace stowave {

// A family of real even dual-grid multipliers indexed by time lag in steps.
template <class K>
concept TimeKernel = requires(const K& k, std::size_t lag) {
  { k.grid() } -> std::convertible_to<const Grid&>;
  { k.multiplier(lag) } -> std::convertible_to<std::span<const double>>;
};

// Kernels that know their operator index take part in the admissibility check.
template <class K>
concept GreenKernel = TimeKernel<K> && requires(const K& k) {
  { k.green().k() } -> std::convertible_to<int>;
};

// v = sum Z(s) W_s: the multiplier is 1 for every lag.
class IdentityKernel {
 public:
  explicit IdentityKernel(const Grid& grid) : grid_(grid), ones_(grid.size(), 1.0) {}
  const Grid& grid() const { return grid_; }
  std::span<const double> multiplier(std::size_t) const { return ones_; }

 private:
  Grid grid_;
  std::vector<double> ones_;
};

// A Green kernel whose multiplier is multiplied by a fixed radial filter
// f(|eta|), e.g. F psi_n (mollified) or 1 - F psi_n (remainder).
class FilteredKernel {
 public:
  template <class Filter>
  FilteredKernel(std::shared_ptr<const LatticeGreen> base, Filter&& filter)
      : base_(std::move(base)), filter_(base_->grid().size()) {
    const Grid& g = base_->grid();
    for (std::size_t i = 0; i < filter_.size(); ++i) filter_[i] = filter(g.frequency_norm(i));
    products_.reserve(base_->steps() + 1);
    for (std::size_t lag = 0; lag <= base_->steps(); ++lag) {
      const auto m = base_->multiplier(lag);
      std::vector<double> p(m.size());
      for (std::size_t i = 0; i < p.size(); ++i) p[i] = m[i] * filter_[i];
      products_.push_back(std::move(p));
    }
  }

  const Grid& grid() const { return base_->grid(); }
  const GreenMultiplier& green() const { return base_->green(); }
  std::span<const double> multiplier(std::size_t lag) const { return products_.at(lag); }
  std::span<const double> filter() const { return filter_; }

 private:
  std::shared_ptr<const LatticeGreen> base_;
  std::vector<double> filter_;
  std::vector<std::vector<double>> products_;
};

// Z(t_s) for s = 0..n-1. depends_on[s] is the number of leading noise slices
// Z(t_s) was built from; adaptedness requires depends_on[s] <= s.
struct IntegrandProcess {
  double dt = 0.0;
  std::vector<LatticeField> steps;
  std::vector<std::size_t> depends_on;

  static IntegrandProcess deterministic(double dt, std::vector<LatticeField> fields) {
    IntegrandProcess z;
    z.dt = dt;
    z.depends_on.assign(fields.size(), 0);
    z.steps = std::move(fields);
    return z;
  }

  // The same field at every step.
  static IntegrandProcess constant(double dt, const LatticeField& f, std::size_t n) {
    return deterministic(dt, std::vector<LatticeField>(n, f));
  }

  std::size_t size() const { return steps.size(); }

  void check_adapted() const {
    if (depends_on.size() != steps.size()) throw Error("integrand adaptedness markers missing");
    for (std::size_t s = 0; s < steps.size(); ++s)
      if (depends_on[s] > s) throw Error("Z not adapted: step uses noise from its own or later slices");
  }
};

namespace detail {

inline void check_times(double a, double b) {
  if (std::abs(a - b) > 1e-12 * std::max(std::abs(a), std::abs(b)))
    throw Error("time steps of integrand, kernel and noise path differ");
}

}  // namespace detail

// v(t_step) = sum_{s < step} G(t_step - t_s) * (Z(t_s) W_s).
template <TimeKernel K>
LatticeField stochastic_convolution(const K& kernel, const IntegrandProcess& z, const NoisePath& path,
                                    std::size_t step) {
  z.check_adapted();
  if (step > z.size() || step > path.steps()) throw Error("time outside the integrand or noise horizon");
  detail::check_times(z.dt, path.dt);
  const Grid& grid = kernel.grid();
  Spectrum acc(grid);
  for (std::size_t s = 0; s < step; ++s) {
    const Spectrum prod = forward_transform(hadamard(z.steps[s], path.slices[s].field));
    const auto m = kernel.multiplier(step - s);
    for (std::size_t i = 0; i < acc.values.size(); ++i) acc.values[i] += m[i] * prod.values[i];
  }
  return inverse_transform(acc);
}

// E|F Z(t_s)(xi)|^2 for each step: exact for a deterministic integrand.
inline std::vector<std::vector<double>> spectral_power(const IntegrandProcess& z) {
  std::vector<std::vector<double>> out;
  out.reserve(z.size());
  for (const auto& f : z.steps) {
    const Spectrum s = forward_transform(f);
    std::vector<double> p(s.values.size());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::norm(s.values[i]);
    out.push_back(std::move(p));
  }
  return out;
}

struct IsometryValue {
  std::optional<double> value;  // empty when the measure is inadmissible for the kernel
  bool divergent() const { return !value.has_value(); }
};

namespace detail {

template <TimeKernel K>
bool kernel_admissible(const K& kernel, const SpectralMeasure& m) {
  if constexpr (GreenKernel<K>) return admissible(m, kernel.green().k());
  else return true;
}

}  // namespace detail

// I_{G,Z} = sum_{s<step} dt (2 pi)^{-d} sum_xi q E|F Z_s(xi)|^2 sum_eta q rho_eta |m_{step-s}(xi - eta)|^2.
template <TimeKernel K>
IsometryValue isometry_functional(const K& kernel, const std::vector<std::vector<double>>& power, double dt,
                                  const SpectralMeasure& m, std::size_t step) {
  if (!detail::kernel_admissible(kernel, m)) return {};
  const Grid& grid = kernel.grid();
  if (step > power.size()) throw Error("time outside the integrand horizon");
  const auto rho = discrete_density(grid, m);
  const double pre = dt * grid.dual_cell_weight() / std::pow(2.0 * std::numbers::pi, grid.dim());
  double total = 0.0;
  for (std::size_t s = 0; s < step; ++s) {
    const auto j = lattice_shift_energy(grid, rho, kernel.multiplier(step - s));
    double acc = 0.0;
    for (std::size_t xi = 0; xi < j.size(); ++xi) acc += power[s][xi] * j[xi];
    total += pre * acc;
  }
  return {total};
}

template <TimeKernel K>
IsometryValue isometry_functional(const K& kernel, const IntegrandProcess& z, const SpectralMeasure& m,
                                  std::size_t step) {
  return isometry_functional(kernel, spectral_power(z), z.dt, m, step);
}

// I~_{G,Z} = sum_{s<step} dt E||Z_s||^2 max_xi J(step - s, xi), the lattice
// dual grid serving as the probe set of the supremum.
template <TimeKernel K>
IsometryValue isometry_bound(const K& kernel, const std::vector<double>& mean_square_norms, double dt,
                             const SpectralMeasure& m, std::size_t step) {
  if (!detail::kernel_admissible(kernel, m)) return {};
  const Grid& grid = kernel.grid();
  if (step > mean_square_norms.size()) throw Error("time outside the integrand horizon");
  const auto rho = discrete_density(grid, m);
  double total = 0.0;
  for (std::size_t s = 0; s < step; ++s) {
    const auto j = lattice_shift_energy(grid, rho, kernel.multiplier(step - s));
    double jmax = 0.0;
    for (double v : j) jmax = std::max(jmax, v);
    total += dt * mean_square_norms[s] * jmax;
  }
  return {total};
}

template <TimeKernel K>
IsometryValue isometry_bound(const K& kernel, const IntegrandProcess& z, const SpectralMeasure& m,
                             std::size_t step) {
  std::vector<double> norms;
  norms.reserve(z.size());
  for (const auto& f : z.steps) norms.push_back(l2_norm_squared(f));
  return isometry_bound(kernel, norms, z.dt, m, step);
}

// The same functional through modulation:
//   I = sum_s dt sum_eta q rho_eta || g(s) * (chi_eta Z_s) ||^2_{L2},  chi_eta(x) = exp(i eta.x),
// evaluated in real space after the inverse transform.
template <TimeKernel K>
IsometryValue isometry_alternative(const K& kernel, const IntegrandProcess& z, const SpectralMeasure& m,
                                   std::size_t step) {
  if (!detail::kernel_admissible(kernel, m)) return {};
  const Grid& grid = kernel.grid();
  if (step > z.size()) throw Error("time outside the integrand horizon");
  const auto rho = discrete_density(grid, m);
  const double q = grid.dual_cell_weight();
  const double hd = grid.cell_volume();
  std::vector<Complex> modulated(grid.size());
  double total = 0.0;
  for (std::size_t s = 0; s < step; ++s) {
    const auto mult = kernel.multiplier(step - s);
    double per_step = 0.0;
    for (std::size_t l = 0; l < grid.size(); ++l) {
      if (rho[l] == 0.0) continue;
      const auto eta = grid.frequency(l);
      for (std::size_t i = 0; i < grid.size(); ++i) {
        const auto x = grid.coordinate(i);
        double phase = 0.0;
        for (int a = 0; a < grid.dim(); ++a) phase += eta[a] * x[a];
        modulated[i] = std::polar(1.0, phase) * z.steps[s].values[i];
      }
      Spectrum spec = forward_transform(grid, modulated);
      for (std::size_t i = 0; i < spec.values.size(); ++i) spec.values[i] *= mult[i];
      const auto conv = inverse_transform_complex(spec);
      double norm2 = 0.0;
      for (const auto& v : conv) norm2 += std::norm(v);
      per_step += q * rho[l] * norm2 * hd;
    }
    total += z.dt * per_step;
  }
  return {total};
}

// ---------------------------------------------------------------------------
// Mollifier psi(x) = c exp(-1/(1-|x|^2)) on the unit ball, unit mass;
// psi_n(x) = n^d psi(n x), so F psi_n(xi) = F psi(xi / n). The radial transform
// is tabulated once on [0, r_max] and interpolated.

class Mollifier {
 public:
  explicit Mollifier(int dim, double r_max = 512.0, double dr = 0.02) : dim_(dim), r_max_(r_max) {
    if (dim < 1 || dim > 3) throw Error("mollifier supports d <= 3");
    mass_ = radial_moment([](double) { return 1.0; });
    std::vector<double> samples;
    const auto n = static_cast<std::size_t>(std::ceil(r_max / dr)) + 1;
    samples.reserve(n);
    for (std::size_t i = 0; i < n; ++i) samples.push_back(direct_transform(i * dr));
    spline_ = std::make_shared<boost::math::interpolators::cardinal_cubic_b_spline<double>>(
        samples.begin(), samples.end(), 0.0, dr, 0.0);
    table_end_ = (n - 1) * dr;
  }

  int dim() const { return dim_; }

  // psi(x) at radius |x|.
  double density(double r) const {
    if (r >= 1.0) return 0.0;
    return std::exp(-1.0 / (1.0 - r * r)) / mass_;
  }

  // F psi at radius |xi|.
  double transform(double r) const {
    if (r == 0.0) return 1.0;
    if (r <= table_end_) return (*spline_)(r);
    return direct_transform(r);
  }

  // F psi_n at radius |xi|.
  double scaled_transform(int n, double r) const {
    if (n < 1) throw Error("mollifier scale must be at least 1");
    return transform(r / n);
  }

  // Quadrature of the radial transform, no table.
  double direct_transform(double r) const {
    if (r == 0.0) return 1.0;
    switch (dim_) {
      case 1: return radial_moment([&](double s) { return std::cos(r * s); }, r) / mass_;
      case 2: return radial_moment([&](double s) { return std::cyl_bessel_j(0.0, r * s); }, r) / mass_;
      default: return radial_moment([&](double s) { const double z = r * s; return z == 0.0 ? 1.0 : std::sin(z) / z; }, r) / mass_;
    }
  }

 private:
  // S_{d-1} int_0^1 exp(-1/(1-s^2)) f(s) s^{d-1} ds, panels sized to the
  // oscillation of f.
  template <class F>
  double radial_moment(F&& f, double frequency = 0.0) const {
    using Gauss = boost::math::quadrature::gauss<double, 20>;
    const int panels = 12 + static_cast<int>(frequency / 8.0);
    double acc = 0.0;
    for (int p = 0; p < panels; ++p) {
      const double a = static_cast<double>(p) / panels;
      const double b = static_cast<double>(p + 1) / panels;
      acc += Gauss::integrate(
          [&](double s) {
            if (s >= 1.0) return 0.0;
            return std::exp(-1.0 / (1.0 - s * s)) * f(s) * std::pow(s, dim_ - 1);
          },
          a, b);
    }
    return sphere_area(dim_) * acc;
  }

  int dim_;
  double r_max_;
  double mass_ = 1.0;
  double table_end_ = 0.0;
  std::shared_ptr<boost::math::interpolators::cardinal_cubic_b_spline<double>> spline_;
};

// G_n = G * psi_n: multiplier F G . F psi_n.
inline FilteredKernel mollify_green(std::shared_ptr<const LatticeGreen> green, const Mollifier& psi, int n) {
  return FilteredKernel(std::move(green), [&](double r) { return psi.scaled_transform(n, r); });
}

// G - G_n: multiplier F G . (1 - F psi_n).
inline FilteredKernel green_remainder(std::shared_ptr<const LatticeGreen> green, const Mollifier& psi, int n) {
  return FilteredKernel(std::move(green), [&](double r) { return 1.0 - psi.scaled_transform(n, r); });
}

// ||G - G_n||_Z = sqrt(I_{G - G_n, Z}).
inline IsometryValue ladder_distance(std::shared_ptr<const LatticeGreen> green, const Mollifier& psi, int n,
                                     const IntegrandProcess& z, const SpectralMeasure& m, std::size_t step) {
  const auto rem = green_remainder(std::move(green), psi, n);
  auto v = isometry_functional(rem, z, m, step);
  if (v.value) v.value = std::sqrt(*v.value);
  return v;
}

// Z_n = Z 1_{[-n,n]^d}.
inline IntegrandProcess truncate(const IntegrandProcess& z, double n) {
  IntegrandProcess out = z;
  for (auto& f : out.steps) {
    for (std::size_t i = 0; i < f.values.size(); ++i) {
      const auto x = f.grid.coordinate(i);
      bool inside = true;
      for (int a = 0; a < f.grid.dim(); ++a) inside = inside && std::abs(x[a]) <= n;
      if (!inside) f.values[i] = 0.0;
    }
  }
  return out;
}

// Z_{n,m} = Z_n * psi_m, applied in Fourier space.
inline IntegrandProcess mollify_integrand(const IntegrandProcess& z, const Mollifier& psi, int m) {
  IntegrandProcess out = z;
  if (z.steps.empty()) return out;
  const Grid& grid = z.steps.front().grid;
  std::vector<double> mult(grid.size());
  for (std::size_t i = 0; i < mult.size(); ++i) mult[i] = psi.scaled_transform(m, grid.frequency_norm(i));
  for (auto& f : out.steps) f = multiplier_apply(f, mult);
  return out;
}

// ||Z - Z_n||_G = sqrt(I_{G, Z - Z_n}).
template <TimeKernel K>
IsometryValue truncation_distance(const K& kernel, const IntegrandProcess& z, double n, const SpectralMeasure& m,
                                  std::size_t step) {
  IntegrandProcess diff = z;
  const IntegrandProcess zn = truncate(z, n);
  for (std::size_t s = 0; s < diff.steps.size(); ++s) diff.steps[s] -= zn.steps[s];
  auto v = isometry_functional(kernel, diff, m, step);
  if (v.value) v.value = std::sqrt(*v.value);
  return v;
}

}  // namespace stowave

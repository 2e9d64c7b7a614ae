#pragma once

// Fourier multipliers of the Green's function of
//   d^2u/dt^2 + (-1)^k Delta^k u = 0,
// i.e. F G(t)(xi) = sin(t|xi|^k)/|xi|^k and its time derivative cos(t|xi|^k),
// the kernel functional J(s) = sup_xi int mu(d eta) |F G(s)(xi - eta)|^2, and
// lattice tabulations of both multipliers for the time-stepping code.

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include "stowave/covariance.hpp"
#include "stowave/error.hpp"
#include "stowave/lattice.hpp"

namespace stowave {

class GreenMultiplier {
 public:
  GreenMultiplier(int k, double horizon) : k_(k), horizon_(horizon) {
    if (k < 1) throw Error("operator index k must be at least 1");
    if (!(horizon > 0.0)) throw Error("horizon must be positive");
  }

  int k() const { return k_; }
  double horizon() const { return horizon_; }

  // sin(t r^k)/r^k for r = |xi|; the removable singularity uses the series
  // t (1 - (t r^k)^2/6) once t r^k < 1e-4.
  double sin_multiplier(double t, double r) const {
    check_time(t);
    const double rk = std::pow(r, k_);
    const double x = t * rk;
    if (x < 1e-4) return t * (1.0 - x * x / 6.0);
    return std::sin(x) / rk;
  }

  // cos(t r^k), the multiplier of (d/dt) G(t).
  double cos_multiplier(double t, double r) const {
    check_time(t);
    return std::cos(t * std::pow(r, k_));
  }

  double sin_multiplier(double t, std::span<const double> xi) const { return sin_multiplier(t, norm(xi)); }
  double cos_multiplier(double t, std::span<const double> xi) const { return cos_multiplier(t, norm(xi)); }

  // Radius of supp G(s): unit propagation speed for the wave operator, no
  // compact support for k >= 2.
  std::optional<double> support_radius(double s) const {
    if (k_ == 1) return s;
    return std::nullopt;
  }

 private:
  void check_time(double t) const {
    if (t < 0.0 || t > horizon_ * (1.0 + 1e-12))
      throw Error("time outside [0, T] for the Green multiplier");
  }
  static double norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
  }

  int k_;
  double horizon_;
};

inline double green_multiplier(const GreenMultiplier& g, double t, std::span<const double> xi) {
  return g.sin_multiplier(t, xi);
}
inline double green_dt_multiplier(const GreenMultiplier& g, double t, std::span<const double> xi) {
  return g.cos_multiplier(t, xi);
}
inline std::optional<double> support_radius(const GreenMultiplier& g, double s) {
  return g.support_radius(s);
}

// sup_{x>0} sin^2(s x^k) (1+x^2)^k / x^{2k}: the constant with
// |F G(s)(xi)|^2 <= const * (1+|xi|^2)^{-k}.
inline double multiplier_weight_sup(double s, int k) {
  GreenMultiplier g(k, std::max(s, 1e-300));
  auto f = [&](double x) {
    const double m = g.sin_multiplier(s, x);
    return m * m * std::pow(1.0 + x * x, k);
  };
  double best = s * s;  // x -> 0 limit
  double best_x = 0.0;
  const int samples = 20000;
  for (int i = 0; i <= samples; ++i) {
    const double x = std::pow(10.0, -4.0 + 8.0 * i / samples);
    const double v = f(x);
    if (v > best) { best = v; best_x = x; }
  }
  if (best_x > 0.0) {
    // golden-section refinement around the sampled maximum
    double a = best_x * std::pow(10.0, -8.0 / samples);
    double b = best_x * std::pow(10.0, 8.0 / samples);
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    for (int it = 0; it < 100; ++it) {
      const double c = b - gr * (b - a);
      const double d = a + gr * (b - a);
      if (f(c) > f(d)) b = d; else a = c;
    }
    best = std::max(best, f(0.5 * (a + b)));
  }
  return best;
}

namespace detail {

// int_0^inf weight(r) h(r) dr where weight carries rho(r) r^{d-1} and h is
// oscillatory with local period ~ pi / (s k r^{k-1}). Panels follow the
// oscillation up to cutoff; beyond it the square-sine averages to 1/2 and the
// tail is integrated analytically against the density's power law.
template <class Integrand>
double oscillatory_radial_integral(Integrand&& raw, double s, int k, double cutoff) {
  using Gauss = boost::math::quadrature::gauss<double, 20>;
  auto integrand = [&](double r) {
    const double v = raw(r);
    return std::isfinite(v) ? v : 0.0;
  };
  boost::math::quadrature::tanh_sinh<double> head;
  const double first = std::min(0.25, cutoff);
  double acc = head.integrate(integrand, 0.0, first, 1e-12);
  double r = first;
  while (r < cutoff) {
    const double local = std::numbers::pi / (4.0 * std::max(s, 1e-12) * k *
                                             std::pow(std::max(r, 1.0), k - 1));
    const double w = std::min({0.5, local, cutoff - r});
    acc += Gauss::integrate(integrand, r, r + w);
    r += w;
  }
  return acc;
}

}  // namespace detail

// int mu(d eta) |F G(s)(xi - eta)|^2 for one frequency shift xi (continuum).
inline double spectral_shift_energy(const GreenMultiplier& g, const SpectralMeasure& m, double s,
                                    std::span<const double> xi) {
  if (static_cast<int>(xi.size()) != m.dim()) throw Error("probe dimension does not match measure");
  if (s == 0.0) return 0.0;
  const int d = m.dim();
  const int k = g.k();
  const auto p = m.tail_exponent();
  if (!p) throw Error("tail exponent required");
  double xi_norm = 0.0;
  for (double v : xi) xi_norm += v * v;
  xi_norm = std::sqrt(xi_norm);

  auto g2 = [&](double r) {
    const double v = g.sin_multiplier(s, r);
    return v * v;
  };

  auto rho = [&](double r) { return r > 0.0 ? m.radial_density(r) : 0.0; };

  // Angular average of |F G(s)|^2 over the sphere of radius r (times the
  // sphere area) around the probe point.
  auto shell = [&](double r) -> double {
    if (xi_norm == 0.0) return sphere_area(d) * g2(r);
    if (d == 1) return g2(std::abs(xi_norm - r)) + g2(xi_norm + r);
    using Gauss = boost::math::quadrature::gauss<double, 20>;
    auto ang = [&](double theta) {
      const double z2 = r * r + xi_norm * xi_norm - 2.0 * r * xi_norm * std::cos(theta);
      return g2(std::sqrt(std::max(z2, 0.0))) * std::pow(std::sin(theta), d - 2);
    };
    // |xi - eta| sweeps [|r - |xi||, r + |xi|]: panels follow its oscillations
    const double span = 2.0 * std::min(r, xi_norm);
    const int panels = 2 + static_cast<int>(2.0 * s * k * span * std::pow(r + xi_norm, k - 1) / std::numbers::pi);
    double acc = 0.0;
    for (int p = 0; p < panels; ++p)
      acc += Gauss::integrate(ang, std::numbers::pi * p / panels, std::numbers::pi * (p + 1) / panels);
    return sphere_area(d - 1) * acc;
  };

  // |F G|^2 decays like r^{-2k}: higher k needs a shorter oscillatory range
  const double cutoff = k == 1 ? std::max(400.0, 40.0 * (1.0 + xi_norm)) : std::max(40.0, 10.0 * (1.0 + xi_norm));
  auto integrand = [&](double r) { return r > 0.0 ? rho(r) * std::pow(r, d - 1) * shell(r) : 0.0; };
  double acc = detail::oscillatory_radial_integral(integrand, s, k, cutoff);

  // Tail: |F G|^2 averages to r^{-2k}/2, density ~ rho(R) (r/R)^p.
  const double e = *p + d - 1 - 2.0 * k;
  if (e >= -1.0) throw Error("J undefined: Dalang condition fails");
  const double area = sphere_area(d);
  const double rho_c = m.radial_density(cutoff);
  acc += 0.5 * area * rho_c * std::pow(cutoff, d - 1 - 2.0 * k + 1.0) / (-(e + 1.0));
  if (xi_norm == 0.0) {
    // first-order correction for the oscillating half of sin^2 in the tail
    const double rk = std::pow(cutoff, k);
    acc += 0.5 * area * rho_c * std::pow(cutoff, d - 1) * std::sin(2.0 * s * rk) /
           (2.0 * s * k * std::pow(cutoff, k - 1)) / std::pow(cutoff, 2.0 * k);
  }
  return acc;
}

// Distinct frequency radii of the lattice's dual grid, one representative
// point each (J(s, xi) depends on xi only through |xi| for radial measures).
inline std::vector<std::vector<double>> dual_grid_probes(const Grid& grid) {
  std::vector<std::pair<double, std::size_t>> radii;
  radii.reserve(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) radii.emplace_back(grid.frequency_norm(i), i);
  std::sort(radii.begin(), radii.end());
  std::vector<std::vector<double>> probes;
  double last = -1.0;
  for (const auto& [r, i] : radii) {
    if (r - last <= 1e-12 * std::max(1.0, r)) continue;
    last = r;
    const auto eta = grid.frequency(i);
    probes.emplace_back(eta.begin(), eta.begin() + grid.dim());
  }
  return probes;
}

struct JFunctionalResult {
  double value = 0.0;       // max over probes: a lower bound for the supremum
  double cap = 0.0;         // 2^k (1 + s^2) * dalang integral
  std::size_t argmax = 0;   // index of the maximizing probe
};

// J(s) = sup_xi int mu(d eta) |F G(s)(xi - eta)|^2 approximated by the max over
// a finite probe set (always include xi = 0).
inline JFunctionalResult j_functional(const GreenMultiplier& g, const SpectralMeasure& m, double s,
                                      const std::vector<std::vector<double>>& probes) {
  const auto adm = dalang_integral(m, g.k());
  if (!adm.verdict) throw Error("J undefined: Dalang condition fails");
  JFunctionalResult out;
  out.cap = std::pow(2.0, g.k()) * (1.0 + s * s) * *adm.value;
  if (m.kind() == MeasureKind::white) {
    // translation invariance: every probe gives the xi = 0 value
    out.value = spectral_shift_energy(g, m, s, std::vector<double>(static_cast<std::size_t>(m.dim()), 0.0));
    return out;
  }
  for (std::size_t i = 0; i < probes.size(); ++i) {
    const double v = spectral_shift_energy(g, m, s, probes[i]);
    if (i == 0 || v > out.value) {
      out.value = v;
      out.argmax = i;
    }
  }
  return out;
}

inline JFunctionalResult j_functional(const GreenMultiplier& g, const SpectralMeasure& m, double s) {
  return j_functional(g, m, s, {std::vector<double>(static_cast<std::size_t>(m.dim()), 0.0)});
}

// ---------------------------------------------------------------------------
// Lattice tabulation.

enum class GreenScheme {
  // sin(t|eta|^k)/|eta|^k sampled on the dual grid.
  spectral,
  // d = 1, k = 1 only: transform of the d'Alembert kernel 1/2 1_{|x|<t}
  // averaged over lattice cells. Supported within |x| < t + h/2, so finite
  // propagation speed holds exactly on the lattice.
  cell_averaged,
};

// Multipliers of G(lag dt) and (d/dt) G(lag dt) for lag = 0..steps.
class LatticeGreen {
 public:
  LatticeGreen(const Grid& grid, const GreenMultiplier& g, double dt, std::size_t steps,
               GreenScheme scheme = GreenScheme::spectral)
      : grid_(grid), green_(g), dt_(dt), scheme_(scheme) {
    if (!(dt > 0.0)) throw Error("time step must be positive");
    if (scheme == GreenScheme::cell_averaged && (g.k() != 1 || grid.dim() != 1))
      throw Error("cell-averaged Green kernel requires k = 1 and d = 1");
    const auto norms = frequency_norms(grid);
    sin_.reserve(steps + 1);
    cos_.reserve(steps + 1);
    for (std::size_t lag = 0; lag <= steps; ++lag) {
      const double t = std::min(lag * dt, g.horizon());
      if (scheme == GreenScheme::spectral) {
        std::vector<double> ms(grid.size()), mc(grid.size());
        for (std::size_t i = 0; i < grid.size(); ++i) {
          ms[i] = g.sin_multiplier(t, norms[i]);
          mc[i] = g.cos_multiplier(t, norms[i]);
        }
        sin_.push_back(std::move(ms));
        cos_.push_back(std::move(mc));
      } else {
        sin_.push_back(cell_averaged_sin(t));
        cos_.push_back(cell_averaged_cos(t));
      }
    }
  }

  const Grid& grid() const { return grid_; }
  const GreenMultiplier& green() const { return green_; }
  double dt() const { return dt_; }
  std::size_t steps() const { return sin_.size() - 1; }
  GreenScheme scheme() const { return scheme_; }

  // Multiplier of G(lag dt).
  std::span<const double> multiplier(std::size_t lag) const { return sin_.at(lag); }
  // Multiplier of (d/dt) G(lag dt).
  std::span<const double> velocity_multiplier(std::size_t lag) const { return cos_.at(lag); }

 private:
  std::vector<double> transform_even_kernel(const std::vector<double>& kernel) const {
    const Spectrum s = forward_transform(LatticeField(grid_, kernel));
    std::vector<double> out(grid_.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = s.values[i].real();
    // enforce exact evenness against round-off in the transform
    for (std::size_t i = 0; i < out.size(); ++i) {
      const std::size_t j = grid_.negate(i);
      if (j > i) {
        const double avg = 0.5 * (out[i] + out[j]);
        out[i] = out[j] = avg;
      }
    }
    return out;
  }

  std::vector<double> cell_averaged_sin(double t) const {
    const double h = grid_.spacing();
    std::vector<double> kernel(grid_.size(), 0.0);
    for (std::size_t m = 0; m < kernel.size(); ++m) {
      const double x = grid_.coordinate(m)[0];
      const double lo = std::max(x - 0.5 * h, -t);
      const double hi = std::min(x + 0.5 * h, t);
      if (hi > lo) kernel[m] = 0.5 * (hi - lo) / h;
    }
    return transform_even_kernel(kernel);
  }

  // Time derivative of the cell-averaged kernel: mass 1/2 in the cell holding
  // each front x = +-t (split evenly when the front sits on a cell face).
  std::vector<double> cell_averaged_cos(double t) const {
    const double h = grid_.spacing();
    std::vector<double> kernel(grid_.size(), 0.0);
    for (std::size_t m = 0; m < kernel.size(); ++m) {
      const double x = grid_.coordinate(m)[0];
      for (double front : {-t, t}) {
        const double lo = x - 0.5 * h;
        const double hi = x + 0.5 * h;
        const double tol = 1e-12 * h;
        if (front > lo + tol && front < hi - tol) kernel[m] += 0.5 / h;
        else if (std::abs(front - lo) <= tol || std::abs(front - hi) <= tol) kernel[m] += 0.25 / h;
      }
    }
    if (t == 0.0) {
      // both fronts at the origin: full unit mass in the central cell
      std::fill(kernel.begin(), kernel.end(), 0.0);
      kernel[grid_.size() / 2] = 1.0 / h;
    }
    return transform_even_kernel(kernel);
  }

  Grid grid_;
  GreenMultiplier green_;
  double dt_;
  GreenScheme scheme_;
  std::vector<std::vector<double>> sin_;
  std::vector<std::vector<double>> cos_;
};

// Lattice counterpart of int mu(d eta) |F g(xi - eta)|^2 for every dual index
// xi: q sum_eta rho_eta m(xi - eta)^2 with the dual-cell weight q. This is a
// circular convolution over storage indices, evaluated with the FFT.
inline std::vector<double> lattice_shift_energy(const Grid& grid, std::span<const double> density,
                                                std::span<const double> multiplier) {
  const std::size_t n = grid.size();
  if (density.size() != n || multiplier.size() != n) throw Error("lattice array size mismatch");
  std::vector<Complex> a(density.begin(), density.end());
  std::vector<Complex> b(n);
  for (std::size_t i = 0; i < n; ++i) b[i] = multiplier[i] * multiplier[i];
  auto& fft = detail::FftPlans::instance();
  fft.execute(grid, FFTW_FORWARD, a);
  fft.execute(grid, FFTW_FORWARD, b);
  for (std::size_t i = 0; i < n; ++i) a[i] *= b[i];
  fft.execute(grid, FFTW_BACKWARD, a);
  const double scale = grid.dual_cell_weight() / static_cast<double>(n);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = std::max(0.0, a[i].real() * scale);
  return out;
}

}  // namespace stowave

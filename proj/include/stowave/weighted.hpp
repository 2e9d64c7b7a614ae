#pragma once

// Weighted space L2_theta with theta(x) = (1 + |x|^2)^{-K/2}, K > d, its
// annulus decomposition H_n = {nR <= |x| < (n+1)R}, the weighted isometry
// bound for compactly supported kernels (k = 1) and the wave solver in L2_theta.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "stowave/error.hpp"
#include "stowave/lattice.hpp"
#include "stowave/noise.hpp"
#include "stowave/solver.hpp"
#include "stowave/stochint.hpp"

namespace stowave {

class Weight {
 public:
  explicit Weight(int dim, std::optional<double> exponent = {}, double radius = 1.0)
      : dim_(dim), exponent_(exponent.value_or(dim + 1.0)), radius_(radius) {
    if (!(exponent_ > dim_)) throw Error("weight exponent K must exceed the dimension");
    if (!(radius_ > 0.0)) throw Error("annulus radius R must be positive");
  }

  int dim() const { return dim_; }
  double exponent() const { return exponent_; }
  double radius() const { return radius_; }

  double theta(double r) const { return std::pow(1.0 + r * r, -0.5 * exponent_); }
  // 1 ^ r^{-K}
  double profile(double r) const { return r <= 1.0 ? 1.0 : std::pow(r, -exponent_); }
  double lower_constant() const { return std::pow(2.0, -0.5 * exponent_); }
  double upper_constant() const { return 1.0; }

  std::size_t annulus(double r) const { return static_cast<std::size_t>(std::floor(r / radius_)); }
  // (max(n, 1))^{-K}
  double annulus_weight(std::size_t n) const { return std::pow(static_cast<double>(std::max<std::size_t>(n, 1)), -exponent_); }

  LatticeField field(const Grid& g) const {
    check(g);
    LatticeField out(g);
    for (std::size_t i = 0; i < g.size(); ++i) out.values[i] = theta(g.radius(i));
    return out;
  }

  void check(const Grid& g) const {
    if (g.dim() != dim_) throw Error("weight and grid dimensions differ");
  }

 private:
  int dim_;
  double exponent_;
  double radius_;
};

inline double weighted_norm_squared(const LatticeField& f, const Weight& w) {
  w.check(f.grid);
  double acc = 0.0;
  for (std::size_t i = 0; i < f.values.size(); ++i) acc += f.values[i] * f.values[i] * w.theta(f.grid.radius(i));
  return acc * f.grid.cell_volume();
}

inline double weighted_norm(const LatticeField& f, const Weight& w) { return std::sqrt(weighted_norm_squared(f, w)); }

inline std::size_t annulus_count(const Grid& g, const Weight& w) {
  w.check(g);
  double rmax = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) rmax = std::max(rmax, g.radius(i));
  return w.annulus(rmax) + 1;
}

// ||f||^2_{L2(H_n)} for n = 0..annulus_count - 1.
inline std::vector<double> annuli_norms(const LatticeField& f, const Weight& w) {
  std::vector<double> out(annulus_count(f.grid, w), 0.0);
  for (std::size_t i = 0; i < f.values.size(); ++i) out[w.annulus(f.grid.radius(i))] += f.values[i] * f.values[i];
  for (double& v : out) v *= f.grid.cell_volume();
  return out;
}

// sum_n (max(n, 1))^{-K} a_n
inline double annuli_sum(const std::vector<double>& norms, const Weight& w) {
  double acc = 0.0;
  for (std::size_t n = 0; n < norms.size(); ++n) acc += w.annulus_weight(n) * norms[n];
  return acc;
}

struct AnnuliConstants {
  std::vector<double> theta_min;  // per annulus over grid points; +inf when empty
  std::vector<double> theta_max;  // 0 when empty
  double lower = 0.0;             // min_n theta_min / weight_n
  double upper = 0.0;             // max_n theta_max / weight_n
};

// Discrete constants of lower * annuli_sum <= ||f||^2_theta <= upper * annuli_sum.
inline AnnuliConstants annuli_constants(const Grid& g, const Weight& w) {
  AnnuliConstants out;
  const std::size_t count = annulus_count(g, w);
  out.theta_min.assign(count, std::numeric_limits<double>::infinity());
  out.theta_max.assign(count, 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double r = g.radius(i);
    const std::size_t n = w.annulus(r);
    out.theta_min[n] = std::min(out.theta_min[n], w.theta(r));
    out.theta_max[n] = std::max(out.theta_max[n], w.theta(r));
  }
  out.lower = std::numeric_limits<double>::infinity();
  for (std::size_t n = 0; n < count; ++n) {
    if (out.theta_max[n] == 0.0) continue;
    out.lower = std::min(out.lower, out.theta_min[n] / w.annulus_weight(n));
    out.upper = std::max(out.upper, out.theta_max[n] / w.annulus_weight(n));
  }
  return out;
}

// Indicator of the union of H_j over |j - n| <= width.
inline LatticeField annulus_mask(const Grid& g, const Weight& w, std::size_t n, std::size_t width = 0) {
  w.check(g);
  LatticeField out(g);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const std::size_t j = w.annulus(g.radius(i));
    const std::size_t gap = j > n ? j - n : n - j;
    if (gap <= width) out.values[i] = 1.0;
  }
  return out;
}

// Radius of the real-space support of the lattice kernel at time t.
inline double kernel_support(const LatticeGreen& green, double t) {
  if (green.green().k() != 1) throw Error("compact support (G8) required: k must be 1");
  return green.scheme() == GreenScheme::cell_averaged ? t + 0.5 * green.grid().spacing() : t;
}

// Annuli on each side of H_n that can reach H_n through the kernel at time t:
// a point of H_n only sees points y with ||x| - |y|| below the support radius,
// also across the periodic boundary.
inline std::size_t locality_width(const LatticeGreen& green, const Weight& w, double t) {
  return static_cast<std::size_t>(std::ceil(kernel_support(green, t) / w.radius()));
}

// kappa = (2 width + 1) max_n theta_max(H_n) / theta_min(D_n), with D_n the
// union of annuli within the width. Each point lies in at most 2 width + 1 of
// the D_n.
inline double locality_constant(const Grid& g, const Weight& w, std::size_t width) {
  const auto c = annuli_constants(g, w);
  const std::size_t count = c.theta_max.size();
  double worst = 0.0;
  for (std::size_t n = 0; n < count; ++n) {
    if (c.theta_max[n] == 0.0) continue;
    double lo = std::numeric_limits<double>::infinity();
    for (std::size_t j = n > width ? n - width : 0; j <= std::min(count - 1, n + width); ++j) lo = std::min(lo, c.theta_min[j]);
    worst = std::max(worst, c.theta_max[n] / lo);
  }
  return (2.0 * width + 1.0) * worst;
}

struct WeightedIsometry {
  double value = 0.0;  // sum_s dt E||Z_s||^2_theta max_xi J(step - s, xi)
  double bound = 0.0;  // kappa * value: bounds E||v||^2_theta on the lattice
  double kappa = 0.0;
  std::size_t width = 0;
};

inline WeightedIsometry weighted_isometry_bound(const LatticeGreen& green, const IntegrandProcess& z,
                                                const SpectralMeasure& m, const Weight& w, std::size_t step) {
  if (green.green().k() != 1) throw Error("compact support (G8) required: k must be 1");
  if (step > z.size()) throw Error("time outside the integrand horizon");
  std::vector<double> norms;
  norms.reserve(z.size());
  for (const auto& f : z.steps) norms.push_back(weighted_norm_squared(f, w));
  const auto value = isometry_bound(green, norms, z.dt, m, step);
  if (value.divergent()) throw Error("J undefined: Dalang condition fails");
  WeightedIsometry out;
  out.value = *value.value;
  out.width = locality_width(green, w, step * z.dt);
  out.kappa = locality_constant(green.grid(), w, out.width);
  out.bound = out.kappa * out.value;
  return out;
}

struct MonteCarloEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t replicas = 0;
};

// E||v(t_step)||^2_theta over independent noise paths.
inline MonteCarloEstimate weighted_isometry_mc(const LatticeGreen& green, const IntegrandProcess& z,
                                               const SpectralMeasure& m, const Weight& w, std::size_t step,
                                               std::size_t replicas, std::uint64_t seed) {
  if (replicas < 2) throw Error("Monte Carlo needs at least two replicas");
  NoiseSampler sampler(green.grid(), m);
  const double horizon = step * z.dt;
  double mean = 0.0, m2 = 0.0;
  for (std::size_t r = 0; r < replicas; ++r) {
    const auto path = sampler.path(horizon, z.dt, stream_seed(seed, r));
    const double x = weighted_norm_squared(stochastic_convolution(green, z, path, step), w);
    const double d = x - mean;
    mean += d / static_cast<double>(r + 1);
    m2 += d * (x - mean);
  }
  return {mean, std::sqrt(m2 / static_cast<double>(replicas - 1) / static_cast<double>(replicas)), replicas};
}

// The solver configuration with every norm taken in L2_theta.
inline SolveConfig weighted_config(SolveConfig cfg, const Weight& w) {
  if (cfg.k != 1) throw Error("compact support (G8) required: k must be 1");
  w.check(cfg.grid);
  cfg.space = "L2theta";
  cfg.norm_squared = [w](const LatticeField& f) { return weighted_norm_squared(f, w); };
  return cfg;
}

inline SolveReport weighted_wave_solve(const SolveConfig& cfg, const Weight& w, const LatticeGreen& green,
                                       const NoisePath& path) {
  return picard_iterate(weighted_config(cfg, w), green, path);
}

inline SolveReport weighted_wave_solve(const SolveConfig& cfg, const Weight& w, const NoisePath& path) {
  const auto wc = weighted_config(cfg, w);
  return picard_iterate(wc, lattice_green(wc), path);
}

// kappa * max_lag max_xi J(lag, xi): the constant C of
// E||G * (Z W)||^2_theta <= C sum_s dt E||Z_s||^2_theta on the lattice.
inline double weighted_j_constant(const LatticeGreen& green, const SpectralMeasure& m, const Weight& w) {
  const std::size_t width = locality_width(green, w, green.steps() * green.dt());
  return locality_constant(green.grid(), w, width) * lattice_j_max(green, m);
}

// With |alpha(u)| <= K(1 + |u|):
//   E||u_n||^2 <= 2 sup||u0||^2 + 4 K^2 C sum_{s<n} dt (||1||^2 + E||u_s||^2),
// so E||u(t)||^2 <= (2 sup_{s<=t}||u0(s)||^2 + 4 K^2 C ||1||^2 t) exp(4 K^2 C t).
inline MomentTrack weighted_moment_track(const std::vector<SolveReport>& reports, const std::vector<double>& u0_norm_squared,
                                         double growth, double c_eff, double one_norm_squared) {
  auto out = moment_track(reports, u0_norm_squared, 0.0, 0.0);
  const double b = 4.0 * growth * growth * c_eff;
  double running = 0.0;
  for (std::size_t i = 0; i < out.time.size(); ++i) {
    const double t = out.time[i];
    running = std::max(running, u0_norm_squared[i]);
    out.envelope[i] = (2.0 * running + b * one_norm_squared * t) * std::exp(b * t);
  }
  return out;
}

}  // namespace stowave

#pragma once

// Lattice increments of the martingale measure M: Gaussian, independent across
// time steps, spatially homogeneous with covariance given by a SpectralMeasure.
//
// Sampling is diagonal in frequency. With dual-cell weight q = (2 pi / L)^d and
// lattice density rho_j, the slice spectrum satisfies
//   E[W^(eta_j) conj(W^(eta_l))] = delta_jl dt (2 pi)^{2d} rho_j / q,
// which makes E[<W,phi><W,psi>] = dt sum_j q rho_j F phi(eta_j) conj(F psi(eta_j)),
// the lattice form of int Gamma(dx) (phi * psi~)(x) = int mu(d eta) F phi conj(F psi).
//
// Seeding: slice s of a path with seed S draws from mt19937_64 seeded with
// stream_seed(S, s). Replica r of experiment e under master seed M uses path
// seed stream_seed(stream_seed(M, e), r).

#include <boost/math/quadrature/gauss.hpp>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "stowave/covariance.hpp"
#include "stowave/error.hpp"
#include "stowave/lattice.hpp"

namespace stowave {

inline std::uint64_t splitmix64(std::uint64_t x) {
  std::uint64_t z = x + 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t stream_seed(std::uint64_t parent, std::uint64_t child) {
  return splitmix64(parent ^ splitmix64(child + 0x632be59bd9b4e019ULL));
}

// Mean of |eta|^{alpha-d} over the cube [-a, a]^d. Integrating radially from
// the origin to each face gives
//   int_cube |eta|^{alpha-d} = 2d int_{[-a,a]^{d-1}} a (a^2+|y|^2)^{(alpha-d)/2} / alpha dy.
inline double riesz_cell_average(int dim, double alpha, double a) {
  using Gauss = boost::math::quadrature::gauss<double, 40>;
  const double e = 0.5 * (alpha - dim);
  double total = 0.0;
  if (dim == 1) {
    total = 2.0 * std::pow(a, alpha) / alpha;
  } else if (dim == 2) {
    total = 4.0 * Gauss::integrate([&](double y) { return a * std::pow(a * a + y * y, e) / alpha; }, -a, a);
  } else if (dim == 3) {
    total = 6.0 * Gauss::integrate(
                      [&](double y) {
                        return Gauss::integrate(
                            [&](double z) { return a * std::pow(a * a + y * y + z * z, e) / alpha; }, -a, a);
                      },
                      -a, a);
  } else {
    throw Error("cell average supports d <= 3");
  }
  return total / std::pow(2.0 * a, dim);
}

// rho_j on the dual grid. The singular Riesz value at eta = 0 is replaced by
// the density's average over that dual cell.
inline std::vector<double> discrete_density(const Grid& grid, const SpectralMeasure& m) {
  if (m.dim() != grid.dim()) throw Error("measure and grid dimensions differ");
  std::vector<double> rho(grid.size());
  for (std::size_t i = 0; i < rho.size(); ++i) {
    const double r = grid.frequency_norm(i);
    if (r == 0.0 && m.kind() == MeasureKind::riesz) {
      rho[i] = m.scale() * m.riesz_constant() *
               riesz_cell_average(grid.dim(), m.alpha(), 0.5 * grid.dual_spacing());
    } else {
      rho[i] = m.radial_density(r);
    }
  }
  return rho;
}

struct NoiseSlice {
  Grid grid;
  double dt;
  Spectrum spectrum;   // Hermitian by construction
  LatticeField field;  // real-space W, the lattice M(ds, dy) / dy
};

struct NoisePath {
  Grid grid;
  double dt;
  std::uint64_t seed;
  std::vector<NoiseSlice> slices;

  std::size_t steps() const { return slices.size(); }

  // Sum of adjacent pairs: the same Brownian increments seen at step 2 dt.
  NoisePath coarsen() const {
    if (slices.size() % 2 != 0) throw Error("coarsening needs an even number of slices");
    NoisePath out{grid, 2.0 * dt, seed, {}};
    out.slices.reserve(slices.size() / 2);
    for (std::size_t s = 0; s + 1 < slices.size(); s += 2) {
      Spectrum spec = slices[s].spectrum;
      for (std::size_t i = 0; i < spec.values.size(); ++i) spec.values[i] += slices[s + 1].spectrum.values[i];
      LatticeField f = slices[s].field + slices[s + 1].field;
      out.slices.push_back(NoiseSlice{grid, 2.0 * dt, std::move(spec), std::move(f)});
    }
    return out;
  }
};

// Precomputed per-frequency amplitudes for one (grid, measure).
class NoiseSampler {
 public:
  NoiseSampler(const Grid& grid, const SpectralMeasure& m)
      : grid_(grid), density_(discrete_density(grid, m)) {
    const double pre = std::pow(2.0 * std::numbers::pi, grid.dim()) * std::pow(grid.length(), grid.dim());
    unit_variance_.resize(density_.size());
    for (std::size_t i = 0; i < density_.size(); ++i) unit_variance_[i] = pre * density_[i];
  }

  const Grid& grid() const { return grid_; }
  const std::vector<double>& density() const { return density_; }
  // E|W^(eta_j)|^2 per unit dt.
  const std::vector<double>& unit_variance() const { return unit_variance_; }

  NoiseSlice sample(double dt, std::mt19937_64& rng) const {
    if (!(dt > 0.0)) throw Error("time step must be positive");
    std::normal_distribution<double> normal(0.0, 1.0);
    Spectrum spec(grid_);
    for (std::size_t i = 0; i < spec.values.size(); ++i) {
      const std::size_t partner = grid_.negate(i);
      if (partner < i) continue;
      const double sigma = std::sqrt(dt * unit_variance_[i]);
      if (partner == i) {
        spec.values[i] = Complex{sigma * normal(rng), 0.0};
      } else {
        const double re = normal(rng);
        const double im = normal(rng);
        const Complex w = (sigma / std::numbers::sqrt2) * Complex{re, im};
        spec.values[i] = w;
        spec.values[partner] = std::conj(w);
      }
    }
    LatticeField field = inverse_transform(spec);
    return NoiseSlice{grid_, dt, std::move(spec), std::move(field)};
  }

  NoisePath path(double horizon, double dt, std::uint64_t seed) const {
    const std::size_t steps = step_count(horizon, dt);
    NoisePath p{grid_, dt, seed, {}};
    p.slices.reserve(steps);
    for (std::size_t s = 0; s < steps; ++s) {
      std::mt19937_64 rng(stream_seed(seed, s));
      p.slices.push_back(sample(dt, rng));
    }
    return p;
  }

  static std::size_t step_count(double horizon, double dt) {
    if (!(dt > 0.0)) throw Error("time step must be positive");
    if (horizon < 0.0) throw Error("horizon must be nonnegative");
    const double ratio = horizon / dt;
    const double rounded = std::round(ratio);
    if (std::abs(ratio - rounded) > 1e-9 * std::max(1.0, ratio))
      throw Error("horizon is not an integral number of time steps");
    return static_cast<std::size_t>(rounded);
  }

 private:
  Grid grid_;
  std::vector<double> density_;
  std::vector<double> unit_variance_;
};

inline NoiseSlice sample_slice(const Grid& grid, const SpectralMeasure& m, double dt, std::mt19937_64& rng) {
  return NoiseSampler(grid, m).sample(dt, rng);
}

inline NoisePath sample_path(const Grid& grid, const SpectralMeasure& m, double horizon, double dt,
                             std::uint64_t seed) {
  return NoiseSampler(grid, m).path(horizon, dt, seed);
}

}  // namespace stowave

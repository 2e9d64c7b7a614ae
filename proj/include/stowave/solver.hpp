#pragma once

// Mild solution of
//   d^2u/dt^2 + (-1)^k Delta^k u = alpha(u) F',   u(0) = v0,  du/dt(0) = v0_dot,
// written as u(t) = u0(t) + int_0^t G(t - s) * (alpha(u(s)) M(ds, .)), with
// u0(t) = (d/dt)G(t) * v0 + G(t) * v0_dot. On the time grid the stochastic
// term uses the left-endpoint rule, so u(t_n) depends on u(t_0..t_{n-1}) only.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "stowave/covariance.hpp"
#include "stowave/error.hpp"
#include "stowave/greens.hpp"
#include "stowave/lattice.hpp"
#include "stowave/noise.hpp"
#include "stowave/stochint.hpp"

namespace stowave {

class Nonlinearity {
 public:
  static Nonlinearity identity() { return {"identity", 1.0, true, [](double u) { return u; }}; }
  static Nonlinearity sine() { return {"sine", 1.0, true, [](double u) { return std::sin(u); }}; }
  static Nonlinearity zero() { return {"zero", 0.0, true, [](double) { return 0.0; }}; }

  // 1 - exp(-u) for u >= -cut, continued linearly below (slope exp(cut)), so
  // that the map is globally Lipschitz.
  static Nonlinearity one_minus_exp(double cut = 1.0) {
    if (!(cut >= 0.0)) throw Error("one-minus-exp cut must be nonnegative");
    const double slope = std::exp(cut);
    return {"one-minus-exp", slope, true, [cut, slope](double u) {
              if (u >= -cut) return 1.0 - std::exp(-u);
              return 1.0 - slope + slope * (u + cut);
            }};
  }

  // a u + b.
  static Nonlinearity affine(double a, double b) {
    return {"affine", std::max(std::abs(a), 0.0), b == 0.0, [a, b](double u) { return a * u + b; }};
  }

  // Piecewise linear through (u_i, alpha_i), constant beyond the end points.
  static Nonlinearity custom_table(std::vector<double> u, std::vector<double> a) {
    if (u.size() < 2 || u.size() != a.size()) throw Error("nonlinearity table needs at least two points");
    double k = 0.0;
    for (std::size_t i = 0; i + 1 < u.size(); ++i) {
      if (!(u[i + 1] > u[i])) throw Error("nonlinearity table abscissae must increase");
      k = std::max(k, std::abs((a[i + 1] - a[i]) / (u[i + 1] - u[i])));
    }
    auto f = [u, a](double x) {
      if (x <= u.front()) return a.front();
      if (x >= u.back()) return a.back();
      const auto it = std::upper_bound(u.begin(), u.end(), x);
      const std::size_t i = static_cast<std::size_t>(it - u.begin()) - 1;
      const double w = (x - u[i]) / (u[i + 1] - u[i]);
      return (1.0 - w) * a[i] + w * a[i + 1];
    };
    const bool vanishes = f(0.0) == 0.0;
    return {"custom-table", k, vanishes, f};
  }

  const std::string& name() const { return name_; }
  double lipschitz() const { return lipschitz_; }
  bool vanishes_at_zero() const { return vanishes_; }
  // K' with |alpha(u)| <= K' (1 + |u|).
  double growth() const { return std::max(lipschitz_, std::abs(f_(0.0))); }
  double operator()(double u) const { return f_(u); }

  // |a(x) - a(y)| <= K |x - y| and, when a(0) = 0, |a(x)| <= K |x| on random
  // pairs drawn from N(0, spread^2).
  bool spot_check(std::uint64_t seed, int pairs = 1000, double spread = 5.0) const {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, spread);
    const double tol = 1e-12;
    for (int i = 0; i < pairs; ++i) {
      const double x = n(rng), y = n(rng);
      if (std::abs(f_(x) - f_(y)) > lipschitz_ * std::abs(x - y) * (1 + tol) + tol) return false;
      if (vanishes_ && std::abs(f_(x)) > lipschitz_ * std::abs(x) * (1 + tol) + tol) return false;
    }
    return true;
  }

 private:
  Nonlinearity(std::string name, double k, bool vanishes, std::function<double(double)> f)
      : name_(std::move(name)), lipschitz_(k), vanishes_(vanishes), f_(std::move(f)) {}

  std::string name_;
  double lipschitz_;
  bool vanishes_;
  std::function<double(double)> f_;
};

struct SolveConfig {
  Grid grid;
  int k = 1;
  double horizon = 1.0;
  double dt = 0.1;
  SpectralMeasure measure;
  Nonlinearity alpha = Nonlinearity::zero();
  LatticeField v0;
  LatticeField v0_dot;
  std::uint64_t seed = 1;
  std::size_t replicas = 1;
  double picard_tolerance = 1e-13;
  std::optional<std::size_t> picard_max_iterations;  // default: steps + 2
  bool zero_initial_guess = false;
  GreenScheme scheme = GreenScheme::spectral;
  std::optional<LatticeField> noise_mask;  // multiplies alpha(u) pointwise
  std::size_t snapshot_stride = 10;
  // "L2" or "L2theta"; the weighted solver swaps in its own norm.
  std::string space = "L2";
  std::function<double(const LatticeField&)> norm_squared = [](const LatticeField& f) { return l2_norm_squared(f); };

  SolveConfig(const Grid& g, const SpectralMeasure& m) : grid(g), measure(m), v0(g), v0_dot(g) {}

  std::size_t steps() const { return NoiseSampler::step_count(horizon, dt); }

  void validate() const {
    if (k < 1) throw Error("operator index k must be at least 1");
    if (measure.dim() != grid.dim()) throw Error("measure and grid dimensions differ");
    if (!admissible(measure, k)) throw Error("J undefined: Dalang condition fails");
    if (!(v0.grid == grid) || !(v0_dot.grid == grid)) throw Error("initial data grid differs from the solve grid");
    if (!std::isfinite(l2_norm(v0))) throw Error("initial displacement has infinite L2 norm");
    if (!std::isfinite(h_neg_k_norm(v0_dot, k))) throw Error("initial velocity has infinite H^{-k} norm");
    if (!alpha.vanishes_at_zero() && space == "L2")
      throw Error("nonlinearity does not vanish at zero: use the weighted solver");
    if (noise_mask && !(noise_mask->grid == grid)) throw Error("noise mask grid differs from the solve grid");
    if (replicas == 0) throw Error("replica count must be positive");
    (void)steps();
  }
};

struct SolveReport {
  double dt = 0.0;
  std::vector<LatticeField> trajectory;            // u(t_n), n = 0..steps
  std::vector<std::size_t> snapshot_steps;         // strided indices into trajectory
  std::vector<std::vector<double>> picard_distance;  // [iteration][step] ||u_{n+1}(t) - u_n(t)||^2
  std::vector<double> moment;                      // ||u(t_n)||^2 in the report's space
  std::size_t iterations = 0;
  bool converged = true;
  double wall_seconds = 0.0;
  std::size_t steps = 0;
  std::string space = "L2";
};

inline LatticeGreen lattice_green(const SolveConfig& cfg) {
  return LatticeGreen(cfg.grid, GreenMultiplier(cfg.k, cfg.horizon), cfg.dt, cfg.steps(), cfg.scheme);
}

// u0(t_n) = (d/dt)G(t_n) * v0 + G(t_n) * v0_dot.
inline LatticeField deterministic_part(const SolveConfig& cfg, const LatticeGreen& green, std::size_t step) {
  return multiplier_apply(cfg.v0, green.velocity_multiplier(step)) + multiplier_apply(cfg.v0_dot, green.multiplier(step));
}

inline LatticeField deterministic_part(const SolveConfig& cfg, double t) {
  const GreenMultiplier g(cfg.k, std::max(cfg.horizon, t));
  const auto norms = frequency_norms(cfg.grid);
  std::vector<double> c(norms.size()), s(norms.size());
  for (std::size_t i = 0; i < norms.size(); ++i) {
    c[i] = g.cos_multiplier(t, norms[i]);
    s[i] = g.sin_multiplier(t, norms[i]);
  }
  return multiplier_apply(cfg.v0, c) + multiplier_apply(cfg.v0_dot, s);
}

// Spectra of u0(t) and d u0/dt (t) from the multiplier formulas.
struct DeterministicState {
  Spectrum displacement;
  Spectrum velocity;
};

inline DeterministicState deterministic_state(const SolveConfig& cfg, double t) {
  const GreenMultiplier g(cfg.k, std::max(cfg.horizon, t));
  const Spectrum a = forward_transform(cfg.v0);
  const Spectrum b = forward_transform(cfg.v0_dot);
  DeterministicState out{Spectrum(cfg.grid), Spectrum(cfg.grid)};
  for (std::size_t i = 0; i < cfg.grid.size(); ++i) {
    const double r = cfg.grid.frequency_norm(i);
    const double rk = std::pow(r, cfg.k);
    const double c = g.cos_multiplier(t, r);
    const double s = g.sin_multiplier(t, r);
    out.displacement.values[i] = c * a.values[i] + s * b.values[i];
    out.velocity.values[i] = -rk * rk * s * a.values[i] + c * b.values[i];
  }
  return out;
}

// ||du/dt||^2 + || |xi|^k F u ||^2 with the (2 pi)^{-d} q spectral weights.
inline double spectral_energy(const Spectrum& displacement, const Spectrum& velocity, int k) {
  const Grid& grid = displacement.grid;
  double acc = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double rk = std::pow(grid.frequency_norm(i), k);
    acc += std::norm(velocity.values[i]) + rk * rk * std::norm(displacement.values[i]);
  }
  return acc * grid.dual_cell_weight() / std::pow(2.0 * std::numbers::pi, grid.dim());
}

inline double energy(const SolveConfig& cfg, double t) {
  const auto st = deterministic_state(cfg, t);
  return spectral_energy(st.displacement, st.velocity, cfg.k);
}

namespace detail {

// F(alpha(u(t_s)) . mask . W_s).
inline Spectrum forcing_spectrum(const SolveConfig& cfg, const LatticeField& u, const NoiseSlice& slice) {
  LatticeField z(cfg.grid);
  for (std::size_t i = 0; i < z.values.size(); ++i) {
    double a = cfg.alpha(u.values[i]);
    if (cfg.noise_mask) a *= cfg.noise_mask->values[i];
    z.values[i] = a * slice.field.values[i];
  }
  return forward_transform(z);
}

inline LatticeField convolve_history(const LatticeGreen& green, const std::vector<Spectrum>& forcing, std::size_t n) {
  Spectrum acc(green.grid());
  for (std::size_t s = 0; s < n; ++s) {
    const auto m = green.multiplier(n - s);
    const auto& f = forcing[s].values;
    for (std::size_t i = 0; i < f.size(); ++i) acc.values[i] += m[i] * f[i];
  }
  return inverse_transform(acc);
}

inline void check_path(const SolveConfig& cfg, const NoisePath& path) {
  if (path.steps() < cfg.steps()) throw Error("noise path shorter than the solve horizon");
  check_times(path.dt, cfg.dt);
  if (!(path.grid == cfg.grid)) throw Error("noise path grid differs from the solve grid");
}

inline void finish_report(const SolveConfig& cfg, SolveReport& rep) {
  rep.dt = cfg.dt;
  rep.steps = rep.trajectory.size() - 1;
  rep.space = cfg.space;
  rep.moment.clear();
  for (const auto& u : rep.trajectory) rep.moment.push_back(cfg.norm_squared(u));
  rep.snapshot_steps.clear();
  const std::size_t stride = std::max<std::size_t>(1, cfg.snapshot_stride);
  for (std::size_t n = 0; n < rep.trajectory.size(); n += stride) rep.snapshot_steps.push_back(n);
  if (rep.snapshot_steps.back() != rep.steps) rep.snapshot_steps.push_back(rep.steps);
}

}  // namespace detail

// One forward pass: u(t_n) from u(t_0..t_{n-1}).
inline SolveReport explicit_sweep(const SolveConfig& cfg, const LatticeGreen& green, const NoisePath& path) {
  cfg.validate();
  detail::check_path(cfg, path);
  const auto start = std::chrono::steady_clock::now();
  const std::size_t steps = cfg.steps();
  SolveReport rep;
  rep.trajectory.reserve(steps + 1);
  std::vector<Spectrum> forcing;
  forcing.reserve(steps);
  for (std::size_t n = 0; n <= steps; ++n) {
    LatticeField u = deterministic_part(cfg, green, n);
    if (n > 0) u += detail::convolve_history(green, forcing, n);
    if (n < steps) forcing.push_back(detail::forcing_spectrum(cfg, u, path.slices[n]));
    rep.trajectory.push_back(std::move(u));
  }
  rep.iterations = 1;
  detail::finish_report(cfg, rep);
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

inline SolveReport explicit_sweep(const SolveConfig& cfg, const NoisePath& path) {
  return explicit_sweep(cfg, lattice_green(cfg), path);
}

// u_{n+1}(t) = u0(t) + sum_{s<t} G(t - s) * (alpha(u_n(s)) W_s) on the whole
// time grid, from u_0 = u0 (or 0), until sup_t ||u_{n+1}(t) - u_n(t)|| falls
// below the tolerance. Non-convergence is reported, not thrown.
inline SolveReport picard_iterate(const SolveConfig& cfg, const LatticeGreen& green, const NoisePath& path) {
  cfg.validate();
  detail::check_path(cfg, path);
  const auto start = std::chrono::steady_clock::now();
  const std::size_t steps = cfg.steps();
  const std::size_t max_iter = cfg.picard_max_iterations.value_or(steps + 2);

  std::vector<LatticeField> base;
  base.reserve(steps + 1);
  for (std::size_t n = 0; n <= steps; ++n) base.push_back(deterministic_part(cfg, green, n));

  std::vector<LatticeField> current = cfg.zero_initial_guess ? std::vector<LatticeField>(steps + 1, LatticeField(cfg.grid)) : base;
  SolveReport rep;
  rep.converged = false;
  std::vector<Spectrum> forcing;
  for (std::size_t it = 0; it < max_iter; ++it) {
    forcing.clear();
    for (std::size_t s = 0; s < steps; ++s) forcing.push_back(detail::forcing_spectrum(cfg, current[s], path.slices[s]));
    std::vector<LatticeField> next;
    next.reserve(steps + 1);
    std::vector<double> dist(steps + 1);
    double worst = 0.0;
    for (std::size_t n = 0; n <= steps; ++n) {
      LatticeField u = base[n];
      if (n > 0) u += detail::convolve_history(green, forcing, n);
      dist[n] = cfg.norm_squared(u - current[n]);
      worst = std::max(worst, dist[n]);
      next.push_back(std::move(u));
    }
    rep.picard_distance.push_back(std::move(dist));
    current = std::move(next);
    rep.iterations = it + 1;
    if (std::sqrt(worst) < cfg.picard_tolerance) {
      rep.converged = true;
      break;
    }
  }
  rep.trajectory = std::move(current);
  detail::finish_report(cfg, rep);
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

inline SolveReport picard_iterate(const SolveConfig& cfg, const NoisePath& path) {
  return picard_iterate(cfg, lattice_green(cfg), path);
}

// sup_t ||a(t) - b(t)|| over two trajectories on the same time grid.
inline double sup_distance(const SolveReport& a, const SolveReport& b) {
  if (a.trajectory.size() != b.trajectory.size()) throw Error("trajectories have different lengths");
  double worst = 0.0;
  for (std::size_t n = 0; n < a.trajectory.size(); ++n) worst = std::max(worst, l2_norm(a.trajectory[n] - b.trajectory[n]));
  return worst;
}

// max over lags and dual points of q sum_eta rho_eta m_lag(xi - eta)^2: the
// lattice value of sup_s J(s).
inline double lattice_j_max(const LatticeGreen& green, const SpectralMeasure& m) {
  const auto rho = discrete_density(green.grid(), m);
  double best = 0.0;
  for (std::size_t lag = 0; lag <= green.steps(); ++lag)
    for (double v : lattice_shift_energy(green.grid(), rho, green.multiplier(lag))) best = std::max(best, v);
  return best;
}

struct MomentTrack {
  std::vector<double> time;
  std::vector<double> mean;      // replica mean of ||u(t)||^2
  std::vector<double> std_error;
  std::vector<double> envelope;  // 2 sup_{s<=t} ||u0(s)||^2 exp(2 K^2 C t)
  std::size_t replicas = 0;
  bool within() const {
    for (std::size_t i = 0; i < mean.size(); ++i)
      if (mean[i] > envelope[i] + 3.0 * std_error[i]) return false;
    return true;
  }
};

// Moment trajectory across replicas checked against the Gronwall envelope of
// E||u(t)||^2 <= 2||u0(t)||^2 + 2 K^2 C int_0^t E||u(s)||^2 ds.
inline MomentTrack moment_track(const std::vector<SolveReport>& reports, const std::vector<double>& u0_norm_squared,
                                double lipschitz, double j_max) {
  if (reports.size() < 30) throw Error("moment tracking needs at least 30 replicas");
  const std::size_t n = reports.front().moment.size();
  if (u0_norm_squared.size() != n) throw Error("deterministic norms do not match the time grid");
  MomentTrack out;
  out.replicas = reports.size();
  double running = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double mean = 0.0, m2 = 0.0;
    std::size_t c = 0;
    for (const auto& r : reports) {
      if (r.moment.size() != n) throw Error("replica reports have different lengths");
      ++c;
      const double d = r.moment[i] - mean;
      mean += d / c;
      m2 += d * (r.moment[i] - mean);
    }
    const double t = i * reports.front().dt;
    running = std::max(running, u0_norm_squared[i]);
    out.time.push_back(t);
    out.mean.push_back(mean);
    out.std_error.push_back(std::sqrt(m2 / (c - 1) / c));
    out.envelope.push_back(2.0 * running * std::exp(2.0 * lipschitz * lipschitz * j_max * t));
  }
  return out;
}

}  // namespace stowave

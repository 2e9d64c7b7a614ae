#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "stowave/weighted.hpp"

using namespace stowave;

namespace {

LatticeField random_field(const Grid& g, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  LatticeField f(g);
  for (auto& v : f.values) v = n(rng);
  return f;
}

LatticeField ball_indicator(const Grid& g, double radius = 1.0) {
  return LatticeField::from_function(g, [&](auto x) {
    double r2 = 0.0;
    for (int a = 0; a < g.dim(); ++a) r2 += x[a] * x[a];
    return r2 <= radius * radius ? 1.0 : 0.0;
  });
}

}  // namespace

TEST(Weight, Validation) {
  EXPECT_DOUBLE_EQ(Weight(2).exponent(), 3.0);
  EXPECT_THROW(Weight(2, 2.0), Error);
  EXPECT_THROW(Weight(1, 2.0, 0.0), Error);
  EXPECT_THROW(weighted_norm(LatticeField(Grid(2, 8, 4.0)), Weight(1)), Error);
}

TEST(Weight, SandwichOnGrid) {
  for (int d = 1; d <= 3; ++d) {
    for (double k : {d + 0.5, d + 1.0, d + 3.0}) {
      const Weight w(d, k);
      const Grid g(d, d == 3 ? 16 : 64, 20.0);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double r = g.radius(i);
        EXPECT_LE(w.lower_constant() * w.profile(r), w.theta(r));
        EXPECT_LE(w.theta(r), w.upper_constant() * w.profile(r));
      }
    }
  }
  EXPECT_DOUBLE_EQ(Weight(1, 4.0).lower_constant(), 0.25);
}

TEST(WeightedNorm, ZeroAndBall) {
  const Grid g(2, 64, 8.0);
  const Weight w(2);
  EXPECT_EQ(weighted_norm(LatticeField(g), w), 0.0);
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 10; ++trial) {
    const auto f = hadamard(random_field(g, rng), ball_indicator(g));
    const double l2 = l2_norm(f);
    const double wn = weighted_norm(f, w);
    EXPECT_GE(wn, std::pow(2.0, -w.exponent() / 4) * l2);
    EXPECT_LE(wn, l2);
  }
}

TEST(WeightedNorm, ContractionOfL2) {
  const Grid g(1, 256, 40.0);
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const auto f = random_field(g, rng);
    EXPECT_LE(weighted_norm(f, Weight(1)), l2_norm(f));
  }
}

TEST(Annuli, IndicatorAndZero) {
  const Grid g(1, 256, 16.0);
  const Weight w(1);
  const auto h2 = annulus_mask(g, w, 2);
  const auto norms = annuli_norms(h2, w);
  for (std::size_t n = 0; n < norms.size(); ++n) {
    if (n == 2) EXPECT_NEAR(norms[n], 2.0, 1e-12);
    else EXPECT_EQ(norms[n], 0.0);
  }
  for (double v : annuli_norms(LatticeField(g), w)) EXPECT_EQ(v, 0.0);
  const auto d2 = annulus_mask(g, w, 2, 1);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const std::size_t n = w.annulus(g.radius(i));
    EXPECT_EQ(d2.values[i], n >= 1 && n <= 3 ? 1.0 : 0.0);
  }
}

TEST(Annuli, EquivalenceWithDiscreteConstants) {
  for (int d = 1; d <= 2; ++d) {
    const Grid g(d, d == 1 ? 256 : 64, 24.0);
    const Weight w(d);
    const auto c = annuli_constants(g, w);
    // theta over H_n against n^{-K}: within [5^{-K/2}, 1] when R = 1
    EXPECT_GE(c.lower, std::pow(5.0, -w.exponent() / 2));
    EXPECT_LE(c.upper, 1.0);
    std::mt19937_64 rng(3 + d);
    for (int trial = 0; trial < 50; ++trial) {
      const auto f = random_field(g, rng);
      const double sum = annuli_sum(annuli_norms(f, w), w);
      const double wn = weighted_norm_squared(f, w);
      EXPECT_LE(c.lower * sum, wn * (1 + 1e-13));
      EXPECT_LE(wn, c.upper * sum * (1 + 1e-13));
    }
  }
}

// v on H_n only sees Z on the annuli within the kernel's reach.
TEST(Locality, MaskingOutsideNeighbourhood) {
  const Grid g(1, 256, 16.0);
  const Weight w(1);
  const SpectralMeasure white = SpectralMeasure::white(1);
  std::mt19937_64 rng(5);
  for (double horizon : {0.5, 1.5}) {
    const double dt = 1.0 / 16;
    const std::size_t steps = NoiseSampler::step_count(horizon, dt);
    const LatticeGreen green(g, GreenMultiplier(1, horizon), dt, steps, GreenScheme::cell_averaged);
    std::vector<LatticeField> fields;
    for (std::size_t s = 0; s < steps; ++s) fields.push_back(random_field(g, rng));
    const auto z = IntegrandProcess::deterministic(dt, fields);
    const auto path = sample_path(g, white, horizon, dt, 6);
    const auto v = stochastic_convolution(green, z, path, steps);
    const std::size_t width = locality_width(green, w, horizon);
    EXPECT_EQ(width, horizon < 1 ? 1u : 2u);
    for (std::size_t n = 0; n < 7; ++n) {
      const auto keep = annulus_mask(g, w, n, width);
      std::vector<LatticeField> masked;
      for (const auto& f : fields) masked.push_back(hadamard(f, keep));
      const auto vn = stochastic_convolution(green, IntegrandProcess::deterministic(dt, masked), path, steps);
      const auto on = annulus_mask(g, w, n);
      double diff = 0.0, scale = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (on.values[i] == 0.0) continue;
        diff = std::max(diff, std::abs(v.values[i] - vn.values[i]));
        scale = std::max(scale, std::abs(v.values[i]));
      }
      EXPECT_LE(diff, 1e-12 * scale) << "horizon " << horizon << " annulus " << n;
      // one annulus narrower is not enough
      if (width > 0 && n >= width) {
        const auto narrow = annulus_mask(g, w, n, width - 1);
        std::vector<LatticeField> m2;
        for (const auto& f : fields) m2.push_back(hadamard(f, narrow));
        const auto vm = stochastic_convolution(green, IntegrandProcess::deterministic(dt, m2), path, steps);
        double d2 = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i)
          if (on.values[i] != 0.0) d2 = std::max(d2, std::abs(v.values[i] - vm.values[i]));
        EXPECT_GT(d2, 1e-6 * scale);
      }
    }
  }
}

TEST(WeightedIsometry, RejectsHigherOrder) {
  const Grid g(1, 64, 8.0);
  const LatticeGreen green(g, GreenMultiplier(2, 0.5), 1.0 / 16, 8);
  const auto z = IntegrandProcess::constant(1.0 / 16, ball_indicator(g), 8);
  try {
    weighted_isometry_bound(green, z, SpectralMeasure::white(1), Weight(1), 8);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("compact support"), std::string::npos);
  }
}

TEST(WeightedIsometry, ZeroIntegrand) {
  const Grid g(1, 64, 8.0);
  const LatticeGreen green(g, GreenMultiplier(1, 0.5), 1.0 / 16, 8, GreenScheme::cell_averaged);
  const auto z = IntegrandProcess::constant(1.0 / 16, LatticeField(g), 8);
  const auto b = weighted_isometry_bound(green, z, SpectralMeasure::white(1), Weight(1), 8);
  EXPECT_EQ(b.bound, 0.0);
  const auto mc = weighted_isometry_mc(green, z, SpectralMeasure::white(1), Weight(1), 8, 10, 1);
  EXPECT_EQ(mc.mean, 0.0);
}

TEST(WeightedIsometry, MonteCarloBelowBound) {
  const Grid g(1, 128, 16.0);
  const double dt = 1.0 / 16;
  const LatticeGreen green(g, GreenMultiplier(1, 0.5), dt, 8, GreenScheme::cell_averaged);
  const Weight w(1);
  const auto m = SpectralMeasure::white(1);
  const auto near = IntegrandProcess::constant(dt, ball_indicator(g), 8);
  const auto b = weighted_isometry_bound(green, near, m, w, 8);
  const auto mc = weighted_isometry_mc(green, near, m, w, 8, 1000, 7);
  EXPECT_LE(mc.mean, b.bound + 3 * mc.std_error);
  EXPECT_GT(mc.mean, 0.0);
  // far from the origin the bound is loose
  const auto far = IntegrandProcess::constant(dt, LatticeField::from_function(g, [](auto x) { return std::abs(x[0] - 5.0) <= 1 ? 1.0 : 0.0; }), 8);
  const auto bf = weighted_isometry_bound(green, far, m, w, 8);
  const auto mf = weighted_isometry_mc(green, far, m, w, 8, 1000, 8);
  EXPECT_LT(mf.mean + 3 * mf.std_error, bf.bound);
}

namespace {

SolveConfig weighted_case(const Grid& g) {
  SolveConfig cfg(g, SpectralMeasure::white(1));
  cfg.horizon = 0.5;
  cfg.dt = 1.0 / 16;
  cfg.scheme = GreenScheme::cell_averaged;
  cfg.v0 = LatticeField::from_function(g, [](auto x) { return 1.0 + 0.5 * std::cos(x[0]); });
  return cfg;
}

}  // namespace

TEST(WeightedSolve, RejectsHigherOrder) {
  const Grid g(1, 64, 16.0);
  auto cfg = weighted_case(g);
  cfg.k = 2;
  cfg.scheme = GreenScheme::spectral;
  EXPECT_THROW(weighted_config(cfg, Weight(1)), Error);
}

TEST(WeightedSolve, ZeroNonlinearityKeepsDeterministicPart) {
  const Grid g(1, 128, 16.0);
  const auto cfg = weighted_case(g);
  const auto green = lattice_green(cfg);
  const auto rep = weighted_wave_solve(cfg, Weight(1), green, sample_path(g, cfg.measure, cfg.horizon, cfg.dt, 1));
  EXPECT_EQ(rep.space, "L2theta");
  for (std::size_t n = 0; n <= cfg.steps(); ++n) EXPECT_EQ(rep.trajectory[n].values, deterministic_part(cfg, green, n).values);
}

TEST(WeightedSolve, ConstantNonlinearityInsideEnvelope) {
  const Grid g(1, 128, 16.0);
  auto cfg = weighted_case(g);
  cfg.alpha = Nonlinearity::affine(0.0, 1.0);
  EXPECT_THROW(cfg.validate(), Error);
  const Weight w(1);
  const auto wc = weighted_config(cfg, w);
  const auto green = lattice_green(wc);
  std::vector<SolveReport> reps;
  for (int r = 0; r < 40; ++r) reps.push_back(weighted_wave_solve(cfg, w, green, sample_path(g, cfg.measure, cfg.horizon, cfg.dt, stream_seed(9, r))));
  EXPECT_TRUE(reps.front().converged);
  std::vector<double> u0;
  for (std::size_t n = 0; n <= cfg.steps(); ++n) u0.push_back(weighted_norm_squared(deterministic_part(cfg, green, n), w));
  LatticeField one(g);
  for (auto& v : one.values) v = 1.0;
  const auto track = weighted_moment_track(reps, u0, cfg.alpha.growth(), weighted_j_constant(green, cfg.measure, w),
                                           weighted_norm_squared(one, w));
  EXPECT_TRUE(track.within());
  EXPECT_GT(track.mean.back(), u0.back() * 0.5);
}

TEST(WeightedSolve, AgreesWithUnweightedOnBall) {
  const Grid g(1, 128, 16.0);
  SolveConfig cfg(g, SpectralMeasure::white(1));
  cfg.horizon = 0.5;
  cfg.dt = 1.0 / 16;
  cfg.scheme = GreenScheme::cell_averaged;
  cfg.alpha = Nonlinearity::sine();
  cfg.v0 = LatticeField::from_function(g, [](auto x) { return std::abs(x[0]) < 1 ? std::pow(std::cos(std::numbers::pi * x[0] / 2), 2) : 0.0; });
  cfg.noise_mask = ball_indicator(g);
  const auto path = sample_path(g, cfg.measure, cfg.horizon, cfg.dt, 10);
  const auto plain = picard_iterate(cfg, path);
  const auto weighted = weighted_wave_solve(cfg, Weight(1), path);
  EXPECT_LE(sup_distance(plain, weighted), 1e-8);
  EXPECT_LT(weighted.moment.back(), plain.moment.back());
}

#pragma once

// Spatial covariance Gamma of the noise through its spectral measure mu
// (Gamma = F mu), radial in every supported kind. Densities are stated under
// F phi(eta) = int exp(-i eta.x) phi(x) dx, so white noise Gamma = delta_0 has
// constant density (2 pi)^{-d}.

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "stowave/error.hpp"

namespace stowave {

enum class MeasureKind { white, riesz, radial_table };

inline std::string to_string(MeasureKind k) {
  switch (k) {
    case MeasureKind::white: return "white";
    case MeasureKind::riesz: return "riesz";
    case MeasureKind::radial_table: return "radial-table";
  }
  return "unknown";
}

// Area of the unit sphere S^{d-1} (2 for d = 1).
inline double sphere_area(int dim) {
  return 2.0 * std::pow(std::numbers::pi, 0.5 * dim) / std::tgamma(0.5 * dim);
}

namespace detail {

// int_0^inf f(r) dr for f with at most an integrable power singularity at 0
// and algebraic decay at infinity.
inline double half_line_integral(const std::function<double(double)>& raw, double split = 1.0) {
  // far-tail nodes can produce inf * 0 for decaying integrands
  auto f = [&](double r) {
    const double v = raw(r);
    return std::isfinite(v) ? v : 0.0;
  };
  boost::math::quadrature::tanh_sinh<double> head;
  boost::math::quadrature::exp_sinh<double> tail;
  const double a = head.integrate(f, 0.0, split, 1e-13);
  const double b = tail.integrate(f, split, std::numeric_limits<double>::infinity(), 1e-13);
  return a + b;
}

}  // namespace detail

class SpectralMeasure {
 public:
  // Gamma = scale * delta_0.
  static SpectralMeasure white(int dim, double scale = 1.0) {
    SpectralMeasure m(dim, MeasureKind::white, scale);
    return m;
  }

  // Gamma(dx) = scale * |x|^{-alpha} dx, 0 < alpha < d. Its spectral density
  // is scale * c_alpha * |eta|^{alpha - d}; c_alpha is fixed numerically from
  // the pairing identity against the reference Gaussian exp(-|x|^2/2).
  static SpectralMeasure riesz(int dim, double alpha, double scale = 1.0) {
    SpectralMeasure m(dim, MeasureKind::riesz, scale);
    if (!(alpha > 0.0 && alpha < dim))
      throw Error("riesz exponent must satisfy 0 < alpha < d");
    m.alpha_ = alpha;
    m.riesz_constant_ = riesz_constant_by_quadrature(dim, alpha);
    return m;
  }

  // Radial density samples, interpolated linearly in log-radius; held constant
  // below the first sample, power-law tail r^p above the last when declared.
  static SpectralMeasure radial_table(int dim, std::vector<double> radius,
                                      std::vector<double> density,
                                      std::optional<double> tail_exponent, double scale = 1.0) {
    SpectralMeasure m(dim, MeasureKind::radial_table, scale);
    if (radius.size() < 2 || radius.size() != density.size())
      throw Error("radial table needs at least two (radius, density) samples");
    for (std::size_t i = 0; i < radius.size(); ++i) {
      if (!(radius[i] > 0.0) || !std::isfinite(radius[i]))
        throw Error("radial table radii must be positive and finite");
      if (i > 0 && !(radius[i] > radius[i - 1]))
        throw Error("radial table radii must be strictly increasing");
      if (!(density[i] >= 0.0) || !std::isfinite(density[i]))
        throw Error("radial table densities must be nonnegative and finite");
    }
    m.table_radius_ = std::move(radius);
    m.table_density_ = std::move(density);
    m.tail_exponent_ = tail_exponent;
    if (tail_exponent && !std::isfinite(*tail_exponent))
      throw Error("tail exponent must be finite");
    // Tempered growth on the tabulated support: with any finite tail exponent
    // p the weight (1+r^2)^{-r'} for r' > (p+d)/2 is integrable; the support
    // part is a finite sum of finite pieces.
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < m.table_radius_.size(); ++i)
      acc += 0.5 * (m.table_density_[i] + m.table_density_[i + 1]) *
             (m.table_radius_[i + 1] - m.table_radius_[i]);
    if (!std::isfinite(acc)) throw Error("radial table violates tempered growth");
    return m;
  }

  // Two-column text file: radius density per line; '#' starts a comment.
  static SpectralMeasure radial_table_from_file(int dim, const std::string& path,
                                                std::optional<double> tail_exponent,
                                                double scale = 1.0) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open radial table file: " + path);
    std::vector<double> r, rho;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto pos = line.find('#'); pos != std::string::npos) line.erase(pos);
      std::replace(line.begin(), line.end(), ',', ' ');
      std::istringstream ls(line);
      double a, b;
      if (!(ls >> a)) continue;
      if (!(ls >> b))
        throw Error("radial table " + path + ": line " + std::to_string(lineno) +
                    " needs two columns");
      r.push_back(a);
      rho.push_back(b);
    }
    return radial_table(dim, std::move(r), std::move(rho), tail_exponent, scale);
  }

  int dim() const { return dim_; }
  MeasureKind kind() const { return kind_; }
  double scale() const { return scale_; }
  double alpha() const { return alpha_; }
  double riesz_constant() const { return riesz_constant_; }
  const std::vector<double>& table_radius() const { return table_radius_; }
  const std::vector<double>& table_density() const { return table_density_; }

  // Exponent p of the density's power-law behavior at infinity, if known.
  std::optional<double> tail_exponent() const {
    switch (kind_) {
      case MeasureKind::white: return 0.0;
      case MeasureKind::riesz: return alpha_ - dim_;
      case MeasureKind::radial_table: return tail_exponent_;
    }
    return std::nullopt;
  }

  // d mu / d eta at radius r = |eta|.
  double radial_density(double r) const {
    if (r < 0.0) throw Error("radius must be nonnegative");
    switch (kind_) {
      case MeasureKind::white:
        return scale_ * std::pow(2.0 * std::numbers::pi, -dim_);
      case MeasureKind::riesz:
        if (r == 0.0) throw Error("singular point; use radial quadrature");
        return scale_ * riesz_constant_ * std::pow(r, alpha_ - dim_);
      case MeasureKind::radial_table:
        return scale_ * table_value(r);
    }
    return 0.0;
  }

  double density(std::span<const double> eta) const {
    if (static_cast<int>(eta.size()) != dim_) throw Error("point dimension does not match measure");
    double s = 0.0;
    for (double e : eta) s += e * e;
    return radial_density(std::sqrt(s));
  }

  // S_{d-1} int_0^inf rho(r) r^{d-1} f(r) dr for a smooth, non-oscillatory f.
  double radial_integral(const std::function<double(double)>& f) const {
    const double area = sphere_area(dim_);
    switch (kind_) {
      case MeasureKind::white:
      case MeasureKind::riesz: {
        auto integrand = [&](double r) {
          if (r <= 0.0) return 0.0;
          return radial_density(r) * std::pow(r, dim_ - 1) * f(r);
        };
        return area * detail::half_line_integral(integrand);
      }
      case MeasureKind::radial_table: {
        // the interpolant is smooth between samples: fixed Gauss rule per segment
        using Gauss = boost::math::quadrature::gauss<double, 30>;
        auto integrand = [&](double r) { return radial_density(r) * std::pow(r, dim_ - 1) * f(r); };
        double acc = Gauss::integrate(integrand, 0.0, table_radius_.front());
        for (std::size_t i = 0; i + 1 < table_radius_.size(); ++i)
          acc += Gauss::integrate(integrand, table_radius_[i], table_radius_[i + 1]);
        if (!tail_exponent_) throw Error("tail exponent required");
        boost::math::quadrature::exp_sinh<double> tail;
        acc += tail.integrate(integrand, table_radius_.back(),
                              std::numeric_limits<double>::infinity(), 1e-13);
        return area * acc;
      }
    }
    return 0.0;
  }

 private:
  SpectralMeasure(int dim, MeasureKind kind, double scale) : dim_(dim), kind_(kind), scale_(scale) {
    if (dim < 1) throw Error("measure dimension must be positive");
    if (!(scale > 0.0) || !std::isfinite(scale)) throw Error("normalization constant must be positive");
  }

  // Both sides of int Gamma(dx) (phi * phi~)(x) = int mu(d eta) |F phi(eta)|^2
  // for phi = exp(-|x|^2/2): (phi * phi~)(x) = pi^{d/2} exp(-|x|^2/4) and
  // |F phi|^2 = (2 pi)^d exp(-|eta|^2). The sphere areas cancel.
  static double riesz_constant_by_quadrature(int dim, double alpha) {
    const double lhs = std::pow(std::numbers::pi, 0.5 * dim) *
                       detail::half_line_integral([&](double r) {
                         return r > 0.0 ? std::pow(r, dim - 1 - alpha) * std::exp(-0.25 * r * r) : 0.0;
                       });
    const double rhs_per_c = std::pow(2.0 * std::numbers::pi, dim) *
                             detail::half_line_integral([&](double r) {
                               return r > 0.0 ? std::pow(r, alpha - 1.0) * std::exp(-r * r) : 0.0;
                             });
    return lhs / rhs_per_c;
  }

  double table_value(double r) const {
    if (r <= table_radius_.front()) return table_density_.front();
    if (r >= table_radius_.back()) {
      if (r == table_radius_.back()) return table_density_.back();
      if (!tail_exponent_) throw Error("tail exponent required");
      return table_density_.back() * std::pow(r / table_radius_.back(), *tail_exponent_);
    }
    const auto it = std::upper_bound(table_radius_.begin(), table_radius_.end(), r);
    const std::size_t i = static_cast<std::size_t>(it - table_radius_.begin()) - 1;
    const double w = std::log(r / table_radius_[i]) / std::log(table_radius_[i + 1] / table_radius_[i]);
    return (1.0 - w) * table_density_[i] + w * table_density_[i + 1];
  }

  int dim_;
  MeasureKind kind_;
  double scale_;
  double alpha_ = 0.0;
  double riesz_constant_ = 0.0;
  std::vector<double> table_radius_;
  std::vector<double> table_density_;
  std::optional<double> tail_exponent_;
};

inline double spectral_density(const SpectralMeasure& m, std::span<const double> eta) {
  return m.density(eta);
}

struct AdmissibilityReport {
  std::optional<double> value;  // empty when divergent
  int k = 1;
  double tail_exponent = 0.0;
  bool verdict = false;  // true iff value is finite

  bool divergent() const { return !value.has_value(); }
};

// int mu(d xi) (1+|xi|^2)^{-k}. Divergence is decided from the tail exponent p
// of the density: the radial integrand behaves like r^{p+d-1-2k}, divergent iff
// p + d - 1 - 2k >= -1. Quadrature runs only for convergent cases.
inline AdmissibilityReport dalang_integral(const SpectralMeasure& m, int k) {
  if (k < 1) throw Error("operator index k must be at least 1");
  const auto p = m.tail_exponent();
  if (!p) throw Error("tail exponent required");
  AdmissibilityReport report;
  report.k = k;
  report.tail_exponent = *p;
  if (*p + m.dim() - 1 - 2.0 * k >= -1.0) {
    report.verdict = false;
    return report;
  }
  report.value = m.radial_integral([k](double r) { return std::pow(1.0 + r * r, -k); });
  report.verdict = std::isfinite(*report.value);
  if (!report.verdict) report.value.reset();
  return report;
}

inline bool admissible(const SpectralMeasure& m, int k) { return dalang_integral(m, k).verdict; }

}  // namespace stowave

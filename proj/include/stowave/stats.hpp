#pragma once

// Running mean and variance with pairwise merging.

#include <cmath>
#include <cstddef>
#include <limits>

#include "stowave/error.hpp"

namespace stowave {

class RunningStats {
 public:
  RunningStats() = default;

  // Rebuild from a published summary: m2 = se^2 n (n - 1).
  static RunningStats from_summary(double mean, double std_error, std::size_t count) {
    RunningStats s;
    s.count_ = count;
    s.mean_ = count ? mean : 0.0;
    s.m2_ = count > 1 ? std_error * std_error * static_cast<double>(count) * static_cast<double>(count - 1) : 0.0;
    return s;
  }

  void add(double x) {
    ++count_;
    const double d = x - mean_;
    mean_ += d / static_cast<double>(count_);
    m2_ += d * (x - mean_);
  }

  // Pairwise update of mean and centred sum of squares.
  void merge(const RunningStats& o) {
    if (o.count_ == 0) return;
    if (count_ == 0) {
      *this = o;
      return;
    }
    const double n = static_cast<double>(count_ + o.count_);
    const double d = o.mean_ - mean_;
    mean_ += d * static_cast<double>(o.count_) / n;
    m2_ += o.m2_ + d * d * static_cast<double>(count_) * static_cast<double>(o.count_) / n;
    count_ += o.count_;
  }

  std::size_t count() const { return count_; }
  double mean() const { return mean_; }
  double variance() const {
    if (count_ < 2) return std::numeric_limits<double>::quiet_NaN();
    return m2_ / static_cast<double>(count_ - 1);
  }
  double std_error() const {
    if (count_ < 2) return std::numeric_limits<double>::quiet_NaN();
    return std::sqrt(variance() / static_cast<double>(count_));
  }

 private:
  std::size_t count_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

}  // namespace stowave

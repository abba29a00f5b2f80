#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace nsb {

/// One-pass mean and variance (Welford), mergeable (Chan et al.).
class RunningStats {
 public:
  void push(double x) noexcept {
    ++count_;
    const double delta = x - mean_;
    mean_ += delta / static_cast<double>(count_);
    m2_ += delta * (x - mean_);
  }

  /// Combines two accumulators as if all samples had been pushed into one.
  void merge(const RunningStats& other) noexcept {
    if (other.count_ == 0) return;
    if (count_ == 0) {
      *this = other;
      return;
    }
    const double n1 = static_cast<double>(count_);
    const double n2 = static_cast<double>(other.count_);
    const double delta = other.mean_ - mean_;
    const double n = n1 + n2;
    mean_ += delta * n2 / n;
    m2_ += other.m2_ + delta * delta * n1 * n2 / n;
    count_ += other.count_;
  }

  std::uint64_t count() const noexcept { return count_; }
  double mean() const noexcept { return mean_; }
  /// Population variance m2 / n; zero when empty.
  double variance() const noexcept {
    return count_ == 0 ? 0.0 : m2_ / static_cast<double>(count_);
  }
  double sample_variance() const noexcept {
    return count_ < 2 ? 0.0 : m2_ / static_cast<double>(count_ - 1);
  }
  double stddev() const noexcept { return std::sqrt(variance()); }
  double m2() const noexcept { return m2_; }

  static RunningStats restore(std::uint64_t count, double mean, double m2) noexcept {
    RunningStats s;
    s.count_ = count;
    s.mean_ = mean;
    s.m2_ = m2;
    return s;
  }

 private:
  std::uint64_t count_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

/// Standard error of the mean of a correlated series by non-overlapping batch
/// means. The result accounts for autocorrelation shorter than the batch.
inline double batch_means_standard_error(std::span<const double> series,
                                         std::size_t batches = 50) {
  if (batches < 2 || series.size() < 2 * batches) {
    throw std::invalid_argument("batch means needs at least two samples per batch");
  }
  const std::size_t len = series.size() / batches;
  RunningStats means;
  for (std::size_t b = 0; b < batches; ++b) {
    double sum = 0.0;
    for (std::size_t i = 0; i < len; ++i) sum += series[b * len + i];
    means.push(sum / static_cast<double>(len));
  }
  return std::sqrt(means.sample_variance() / static_cast<double>(batches));
}

}  // namespace nsb

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace blowup {

/// Kahan compensated accumulator. Keeps a running carry so that adding many
/// tiny increments to a large total does not lose them (time accumulation in
/// the stepper adds steps down to ~1e-20 onto totals of order 1e-2).
class KahanAccumulator {
 public:
  KahanAccumulator() = default;
  explicit KahanAccumulator(double init) : sum_(init) {}

  void add(double x) {
    double y = x - carry_;
    double t = sum_ + y;
    carry_ = (t - sum_) - y;
    sum_ = t;
  }

  double value() const { return sum_; }

  void reset(double v = 0.0) {
    sum_ = v;
    carry_ = 0.0;
  }

 private:
  double sum_ = 0.0;
  double carry_ = 0.0;
};

/// Neumaier variant: like Kahan but safe when the increment exceeds the sum.
/// Used where the summands are of wildly mixed magnitude (row sums, dots).
class NeumaierAccumulator {
 public:
  void add(double x) {
    double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      carry_ += (sum_ - t) + x;
    else
      carry_ += (x - t) + sum_;
    sum_ = t;
  }

  double value() const { return sum_ + carry_; }

 private:
  double sum_ = 0.0;
  double carry_ = 0.0;
};

/// x^p with exact fast paths for the integer exponents that dominate use.
/// The same routine backs every power in the library so that independently
/// computed quantities (step updates, functionals) round identically.
inline double pow_p(double x, double p) {
  if (p == 2.0) return x * x;
  if (p == 3.0) return x * x * x;
  if (p == 1.0) return x;
  return std::pow(x, p);
}

/// Integer power by repeated multiplication; exponent in [-3, 3] suffices for
/// the mesh builders (h^(d-2)) and keeps results correctly rounded per step.
inline double ipow(double x, int e) {
  if (e < 0) return 1.0 / ipow(x, -e);
  double r = 1.0;
  while (e-- > 0) r *= x;
  return r;
}

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  /// ||y - fit||_2 / ||y||_2; 0 for a perfect fit.
  double rel_residual = 0.0;
};

/// Ordinary least squares y ~ slope*x + intercept.
inline LinearFit fit_line(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("fit_line: need two matched samples");
  std::size_t n = x.size();
  NeumaierAccumulator sx, sy;
  for (std::size_t i = 0; i < n; ++i) {
    sx.add(x[i]);
    sy.add(y[i]);
  }
  double mx = sx.value() / double(n);
  double my = sy.value() / double(n);
  NeumaierAccumulator sxx, sxy;
  for (std::size_t i = 0; i < n; ++i) {
    sxx.add((x[i] - mx) * (x[i] - mx));
    sxy.add((x[i] - mx) * (y[i] - my));
  }
  if (sxx.value() == 0.0)
    throw std::invalid_argument("fit_line: degenerate abscissae");
  LinearFit f;
  f.slope = sxy.value() / sxx.value();
  f.intercept = my - f.slope * mx;
  NeumaierAccumulator r2, yy;
  for (std::size_t i = 0; i < n; ++i) {
    double e = y[i] - (f.slope * x[i] + f.intercept);
    r2.add(e * e);
    yy.add(y[i] * y[i]);
  }
  f.rel_residual = yy.value() > 0.0 ? std::sqrt(r2.value() / yy.value()) : 0.0;
  return f;
}

/// Median (average of the two middle values for even sizes). Takes a copy.
inline double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median: empty sample");
  std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  double lo = *std::max_element(v.begin(), v.begin() + mid);
  return 0.5 * (lo + hi);
}

}  // namespace blowup

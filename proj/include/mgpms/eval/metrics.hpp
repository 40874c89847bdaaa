#pragma once

#include <span>
#include <vector>

namespace mgpms::eval {

/// Probability that a random positive outranks a random negative, ties
/// counting one half. Throws DomainError unless both classes are present.
double auc(std::span<const int> labels, std::span<const double> scores);

/// Average precision: sum over distinct thresholds of precision times the
/// recall increment, tied scores entering together. Needs a positive.
double auprc(std::span<const int> labels, std::span<const double> scores);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
};

/// Ordinary least squares; throws DomainError on fewer than two points or
/// constant x.
LinearFit fit_linear(std::span<const double> x, std::span<const double> s);

struct TrajectoryMetrics {
  double slope = 0.0;
  double consistency = 0.0;  // |slope|
  double mse = 0.0;          // mean squared residual of the linear fit
  double robustness = 0.0;   // (1 - mse) / (1 + mse)
};

TrajectoryMetrics trajectory_metrics(std::span<const double> x, std::span<const double> s);

/// Min-max bounds over every score of every trajectory.
struct MinMax {
  double lo = 0.0;
  double hi = 1.0;

  static MinMax fit(const std::vector<std::vector<double>>& trajectories);
  /// Maps into [0, 1]; a constant score set maps to 0.
  double apply(double v) const;
  std::vector<double> apply(std::span<const double> v) const;
};

}  // namespace mgpms::eval

#pragma once

// Multi-task Gaussian process imputation onto a regular time grid.
//
// Flat index conventions (feature-major, matching vec() of a time x feature
// matrix):
//   observations: entries ordered by feature, then by time within a feature;
//   grid:         entry (d, j) sits at d * X + j.

#include <cstdint>
#include <string>
#include <vector>

#include "mgpms/rng.hpp"
#include "mgpms/tensor/ops.hpp"
#include "mgpms/tensor/tensor.hpp"

namespace mgpms::mgp {

struct Observation {
  double time_h = 0.0;
  double value = 0.0;
};

/// Irregular observations of one patient; features[d] lists feature d's
/// (time, value) pairs with strictly increasing times.
struct ObservationSeries {
  std::string patient_id;
  std::vector<std::vector<Observation>> features;

  std::size_t feature_count() const { return features.size(); }
  std::size_t observation_count() const;
  /// Throws DataError on unsorted/duplicate times, negative or out-of-period
  /// times, non-finite values, or a patient with no observations at all.
  void validate(double period_end_h) const;
};

/// Evenly spaced query points.
struct TimeGrid {
  std::vector<double> points;
  double width = 0.0;

  /// Window centres (j - 1/2) * width for j = 1..count.
  static TimeGrid window_centres(std::size_t count, double width);
  std::size_t size() const { return points.size(); }
  void validate() const;
};

/// Unconstrained GP hyperparameters.
///   task_factor_raw: D x D; strictly-lower entries of L_D as stored, the
///     diagonal holds log L_D[d][d]; the upper triangle is unused.
///   log_noise[d] = log sigma_d^2;  log_length_scale = log l (hours).
struct MgpParameters {
  std::size_t dim = 0;
  std::vector<double> task_factor_raw;
  std::vector<double> log_noise;
  double log_length_scale = 0.0;

  /// L_D = I, sigma^2 = 0.1, l = 12 h.
  static MgpParameters initial(std::size_t dim);
  /// Builds the raw form from an explicit lower factor with positive diagonal.
  static MgpParameters from_factor(const std::vector<double>& lower, std::vector<double> noise_variance,
                                   double length_scale);

  std::vector<double> task_factor() const;      // L_D, D x D row-major
  std::vector<double> task_covariance() const;  // L_D L_D^T
  /// Removes feature d from every parameter (row/column of L_D, noise entry).
  MgpParameters without_feature(std::size_t d) const;
};

/// The same parameters as graph tensors, either constants or gradient leaves.
struct MgpTensors {
  Tensor task_factor_raw;   // D x D
  Tensor log_noise;         // D
  Tensor log_length_scale;  // scalar

  static MgpTensors constant(const MgpParameters& p);
  static MgpTensors leaves(const MgpParameters& p);
  std::size_t dim() const { return task_factor_raw.rows(); }
};

/// Plain evaluation: entry (p, q) = exp(-(a_p - b_q)^2 / (2 l^2)).
std::vector<double> se_kernel_matrix(std::span<const double> times_a, std::span<const double> times_b,
                                     double length_scale);

/// K^D = L_D L_D^T.
Tensor task_covariance(const MgpTensors& params);

/// Observation layout of one patient: (feature, time) index pairs into the
/// sorted set of distinct observation times, and the stacked values.
struct ObservedIndex {
  std::vector<double> times;        // distinct observation times, ascending
  ops::KronIndex pairs;             // a = feature, b = index into `times`
  std::vector<double> values;       // y, same order as pairs
  std::vector<std::uint32_t> feature_of;  // feature of each entry
  static ObservedIndex from(const ObservationSeries& obs);
};

/// Covariance of the observed entries:
///   K^D[d][d'] k(t, t') + [d == d' and t == t'] sigma_d^2.
Tensor observed_covariance(const ObservationSeries& obs, const MgpTensors& params);

struct PosteriorOptions {
  /// Starting jitter for factoring the posterior covariance; negative selects
  /// 1e-6 * mean diagonal.
  double covariance_jitter = -1.0;
  /// Starting jitter for the observed covariance (zero: the noise term alone
  /// normally keeps it positive definite).
  double observed_jitter = 0.0;
};

struct PosteriorGrid {
  Tensor mean;        // X*D
  Tensor covariance;  // (X*D) x (X*D), before jitter
  Tensor factor;      // lower R with R R^T = covariance + jitter I
  double jitter = 0.0;
  TimeGrid grid;
  std::size_t features = 0;
};

/// Full posterior over the grid: mean and covariance with their factor.
PosteriorGrid posterior(const ObservationSeries& obs, const TimeGrid& grid, const MgpTensors& params,
                        const PosteriorOptions& options = {});

/// Posterior mean only (skips the grid covariance).
Tensor posterior_mean(const ObservationSeries& obs, const TimeGrid& grid, const MgpTensors& params);

/// z = mean + R eps. `eps` is X*D (one draw) or (X*D) x S (S draws, one per
/// column); the result has the same shape.
Tensor sample_posterior(const PosteriorGrid& post, const Tensor& eps);

/// Standard-normal draws for the pathwise sampler.
///   prior: |U| x (S*D), U = distinct times of grid and observations;
///          column s*D + d is sample s, feature d.
///   noise: n_obs x S.
struct PathwiseDraws {
  std::size_t samples = 0;
  std::vector<double> prior;
  std::vector<double> noise;
};

/// Times the pathwise sampler draws the prior at (grid and observation times).
std::vector<double> pathwise_support(const ObservationSeries& obs, const TimeGrid& grid);

/// Exact posterior samples by conditioning prior draws (Matheron's rule):
///   z = f_X + K_XO Sigma_O^{-1} (y - f_O - e),  (f_X, f_O) ~ prior, e ~ noise.
/// The prior over the support factors as L_D (x) chol(K_UU + jitter), so no
/// (X*D)-sized factorization is needed. Returns (X*D) x S.
Tensor sample_pathwise(const ObservationSeries& obs, const TimeGrid& grid, const MgpTensors& params,
                       const PathwiseDraws& draws);

}  // namespace mgpms::mgp

#pragma once

// Synthetic two-class ICU cohort.
//
// Each feature value is  mu_d + sd_d * latent  with
//   latent = offset_i + a * sin(2 pi t / 24 + phase) + drift + noise,
// where positive patients drift monotonically on some of the informative
// features after a random onset. Observation times follow a Poisson process
// per feature whose rate gives the configured window completeness.

#include <cstdint>
#include <vector>

#include "mgpms/data/cohort.hpp"

namespace mgpms::data {

struct SynthConfig {
  std::size_t patients = 500;
  double prevalence = 0.1558;
  std::uint64_t seed = 1;
  // Fraction of windows with at least one observation, drawn per feature.
  double completeness_min = 0.3;
  double completeness_max = 1.0;
  double ineligible_fraction = 0.05;
  // Drift of an informative feature at 72 h after onset at hour 0, in sd units.
  double drift_strength = 2.5;
  double onset_max_h = 40.0;
  // Probability that a positive patient drifts on a given informative feature.
  double drift_probability = 0.7;
  double noise_sd = 0.3;
  double offset_sd = 0.5;
  double sinusoid_amplitude = 0.3;
  double window_h = 4.0;
};

/// Standard vocabulary with a default informative subset.
Manifest synth_manifest();

/// Small vocabulary: `informative` signal features and `noise` pure-noise features.
Manifest small_manifest(std::size_t informative, std::size_t noise, std::size_t medications = 2,
                        std::size_t demographics = 2);

std::vector<RawPatient> synth_cohort(const SynthConfig& config, const Manifest& manifest);

}  // namespace mgpms::data

#pragma once

// Raw cohort to trained model: truncate, window, split, standardize, fit.

#include <cstdint>
#include <vector>

#include "mgpms/data/cohort.hpp"
#include "mgpms/model/model.hpp"
#include "mgpms/train/trainer.hpp"

namespace mgpms::train {

struct PreparedCohort {
  data::TruncationReport report;
  data::Standardization standardization;  // fitted on the training split
  std::vector<data::WindowedPatient> train;
  std::vector<data::WindowedPatient> test;
};

PreparedCohort prepare_cohort(const std::vector<data::RawPatient>& raw, const data::Manifest& manifest,
                              const data::CohortConfig& cohort, double train_fraction, std::uint64_t split_seed);

struct PipelineConfig {
  data::CohortConfig cohort;
  net::NetworkConfig network;
  TrainConfig train;
  double train_fraction = 0.8;
  std::uint64_t split_seed = 1;
};

struct TrainingRun {
  PreparedCohort data;
  FitResult fit;
};

TrainingRun train_pipeline(const std::vector<data::RawPatient>& raw, const data::Manifest& manifest,
                           const PipelineConfig& config, const EpochCallback& on_epoch = {});

/// Patients of `raw` that survive truncation, windowed and standardized with
/// the model's statistics. With `test_only`, restricted to the model's test ids
/// (all of them must be present).
std::vector<data::WindowedPatient> cohort_for_model(const model::ModelBundle& bundle,
                                                    const std::vector<data::RawPatient>& raw, bool test_only,
                                                    data::TruncationReport* report = nullptr);

}  // namespace mgpms::train

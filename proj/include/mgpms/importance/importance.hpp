#pragma once

// Drop-variable importance: retrain without a feature and compare test loss.

#include <string>
#include <vector>

#include "mgpms/data/io.hpp"
#include "mgpms/train/pipeline.hpp"

namespace mgpms::importance {

struct RetrainScore {
  double test_loss = 0.0;  // mean-path cross-entropy, nats per window
  double test_auc = 0.0;   // final window
};

/// Trains from scratch with `config` and scores the held-out split.
RetrainScore retrain_score(const std::vector<data::RawPatient>& raw, const data::Manifest& manifest,
                           const train::PipelineConfig& config);

/// Retrains without `feature` (D - 1 everywhere) under the same seeds and
/// returns (dropped - baseline) test loss. Throws ConfigError for a feature
/// outside the manifest.
double drop_feature_retrain(const std::vector<data::RawPatient>& raw, const data::Manifest& manifest,
                            const train::PipelineConfig& config, const std::string& feature,
                            const RetrainScore& baseline);

struct ImportanceOptions {
  std::vector<std::string> features;  // empty: every manifest feature
  std::size_t baseline_runs = 3;      // training seeds seed, seed+1, ...
  std::size_t top_k = 15;
  std::size_t max_patients = 0;       // first N raw patients; 0 keeps all
};

struct ImportanceRow {
  std::string feature;
  double baseline_loss = 0.0;
  double dropped_loss = 0.0;
  double importance = 0.0;
  double baseline_auc = 0.0;
  double dropped_auc = 0.0;
  double auc_drop = 0.0;
  bool within_noise_band = false;
};

struct ImportanceReport {
  std::vector<ImportanceRow> rows;     // importance, descending
  std::vector<double> baseline_losses; // one per baseline run
  double noise_band = 0.0;             // max - min of baseline_losses
  Json metadata;
};

ImportanceReport rank_features(const std::vector<data::RawPatient>& raw, const data::Manifest& manifest,
                               const train::PipelineConfig& config, const ImportanceOptions& options);

/// rank,feature,importance,baseline_loss,dropped_loss,baseline_auc,dropped_auc,auc_drop,within_noise_band
/// limited to the first `top_k` rows (0: all).
std::string importance_csv(const ImportanceReport& report, std::size_t top_k);

}  // namespace mgpms::importance

#pragma once

// Cohort ingestion: raw records, left truncation, window averaging onto the
// model grid, standardization and the stratified train/test split.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mgpms/mgp/mgp.hpp"

namespace mgpms::data {

/// Vocabularies of a dataset. `informative` is only set by the synthetic
/// generator and records which features carry the class signal.
struct Manifest {
  std::vector<std::string> features;
  std::vector<std::string> feature_kinds;  // "lab" / "vital", parallel to features
  std::vector<std::string> medications;
  std::vector<std::string> demographics;
  std::vector<std::string> informative;

  std::size_t feature_index(const std::string& name) const;     // throws DataError
  std::size_t medication_index(const std::string& name) const;  // throws DataError
  bool has_feature(const std::string& name) const;
  void validate() const;
  /// Copy without feature `name` (vocabulary and informative list).
  Manifest without_feature(const std::string& name) const;

  /// 16 labs + 9 vitals, 21 medication categories, 25 demographic columns.
  static Manifest standard();
};

struct RawObservation {
  std::string feature;
  double t_s = 0.0;
  double value = 0.0;
};

struct MedEvent {
  std::string category;
  double t_s = 0.0;
};

struct RawPatient {
  std::string id;
  std::vector<RawObservation> observations;
  std::vector<MedEvent> meds;
  std::vector<double> demographics;
  std::optional<double> vent_t_s;
  double discharge_t_s = 0.0;
};

struct CohortConfig {
  double study_period_h = 72.0;
  double window_h = 4.0;
  std::size_t windows = 17;  // X

  void validate() const;
  mgp::TimeGrid grid() const;
  /// End of the last modeled window, windows * window_h.
  double modeled_end_h() const { return static_cast<double>(windows) * window_h; }
  /// 1-based window containing hour `t`, clamped to [1, windows].
  std::size_t window_at(double hour) const;
};

struct LabeledPatient {
  RawPatient record;  // observations and meds restricted to the study period
  int label = 0;
};

struct TruncationReport {
  std::size_t total = 0;
  std::size_t eligible = 0;
  std::size_t positives = 0;
  std::size_t vent_at_admission = 0;
  std::size_t vent_in_period = 0;
  std::size_t short_stay = 0;
  std::size_t malformed = 0;
  std::vector<std::string> messages;  // one per malformed record
};

struct TruncationResult {
  std::vector<LabeledPatient> patients;
  TruncationReport report;
};

/// Left truncation and labeling:
///   vent <= 0                      -> excluded
///   vent <= study period           -> excluded
///   no vent and stay < study period -> excluded
///   label = 1 iff vent after the study period.
/// Malformed records are skipped and reported.
TruncationResult truncate(const std::vector<RawPatient>& raw, const Manifest& manifest, const CohortConfig& config);

/// A patient on the model grid. Values are window means at window centres;
/// meds is X x M row-major.
struct WindowedPatient {
  std::string id;
  int label = 0;
  mgp::ObservationSeries series;
  std::vector<double> meds;
  std::vector<double> demographics;
  std::optional<double> vent_t_s;
  double discharge_t_s = 0.0;
};

WindowedPatient window_average(const LabeledPatient& patient, const Manifest& manifest, const CohortConfig& config);
std::vector<WindowedPatient> window_all(const std::vector<LabeledPatient>& patients, const Manifest& manifest,
                                        const CohortConfig& config);

/// Back to raw form with every value at its window centre.
RawPatient as_raw(const WindowedPatient& patient, const Manifest& manifest, const CohortConfig& config);

/// Per-feature mean and standard deviation of window means.
struct Standardization {
  std::vector<double> mean;
  std::vector<double> sd;

  static Standardization fit(const std::vector<WindowedPatient>& patients, std::size_t features);
  /// Drops the statistics of feature d.
  Standardization without_feature(std::size_t d) const;
  void apply(WindowedPatient& patient) const;
  void apply(std::vector<WindowedPatient>& patients) const;
};

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Stratified patient-level split; each class contributes round(fraction * n_c)
/// patients to train. Deterministic given the seed.
Split split(const std::vector<int>& labels, double fraction, std::uint64_t seed);

std::vector<int> labels_of(const std::vector<WindowedPatient>& patients);

/// Removes every observation of feature `name` (manifest updated separately).
std::vector<RawPatient> drop_feature(const std::vector<RawPatient>& raw, const std::string& name);

}  // namespace mgpms::data

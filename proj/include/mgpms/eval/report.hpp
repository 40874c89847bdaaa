#pragma once

// Population and trajectory evaluation over scored patients, with the CSV
// and SVG emissions built on them.

#include <filesystem>
#include <string>
#include <vector>

#include "mgpms/data/cohort.hpp"
#include "mgpms/data/io.hpp"
#include "mgpms/eval/metrics.hpp"
#include "mgpms/model/model.hpp"

namespace mgpms::eval {

/// One patient's risk scores, window 1..X in order.
struct Trajectory {
  std::string id;
  int label = 0;
  std::vector<double> scores;
};

enum class ScoreColumn { McProbability, Probability, Logit };
ScoreColumn parse_score_column(const std::string& name);
std::string score_column_name(ScoreColumn c);

std::vector<Trajectory> trajectories_from(const std::vector<model::PatientPrediction>& predictions,
                                          ScoreColumn column);

/// Shortest decimal form that reads back to the same double.
std::string format_number(double v);

// Prediction CSV: patient_id,window,hour,logit,probability,mc_probability.
std::string predictions_csv(const std::vector<model::PatientPrediction>& predictions, const mgp::TimeGrid& grid);

/// Reads patient_id,window,<score_column> rows (extra columns ignored, header
/// required) and attaches labels from the cohort by id. Every listed patient
/// needs all X windows.
std::vector<Trajectory> read_trajectories_csv(const std::string& text, const std::vector<data::WindowedPatient>& cohort,
                                              std::size_t windows, const std::string& score_column = "score");

inline const std::vector<double> kDefaultEvaluationHours{0.0, 12.0, 24.0, 48.0, 72.0};

struct TimepointResult {
  std::string name;  // admission, 0.5d, 1d, ...
  double hour = 0.0;
  std::size_t window = 0;  // 1-based
  double auc = 0.0;
  double auprc = 0.0;
};

/// Scores every patient with s_j for the window containing each hour.
std::vector<TimepointResult> evaluate_timepoints(const std::vector<Trajectory>& trajectories,
                                                 const data::CohortConfig& cohort,
                                                 const std::vector<double>& hours = kDefaultEvaluationHours);
/// Rows auc and auprc, one column per evaluation time.
std::string timepoints_csv(const std::vector<TimepointResult>& results);

struct PatientTrajectoryMetrics {
  std::string id;
  int label = 0;
  TrajectoryMetrics metrics;
};

struct ClassCurve {
  std::vector<double> mean;
  std::vector<double> sd;
  std::size_t patients = 0;
  double mean_slope = 0.0;
  double mean_consistency = 0.0;
  double mean_robustness = 0.0;
};

struct TrajectorySummary {
  MinMax normalization;
  std::vector<double> hours;  // window centres
  std::vector<PatientTrajectoryMetrics> patients;
  ClassCurve negative;
  ClassCurve positive;
  std::vector<std::size_t> histogram_negative;  // normalized final-window score
  std::vector<std::size_t> histogram_positive;
  std::size_t bins = 10;
};

/// Scores are min-max normalized over the whole set before fitting.
TrajectorySummary trajectory_summary(const std::vector<Trajectory>& trajectories, const mgp::TimeGrid& grid,
                                     std::size_t bins = 10);

std::string class_curves_csv(const TrajectorySummary& s);     // window,hour,class,patients,mean,sd
std::string patient_metrics_csv(const TrajectorySummary& s);  // patient_id,label,slope,consistency,mse,robustness
std::string histogram_csv(const TrajectorySummary& s);        // bin_lo,bin_hi,negative,positive
Json summary_json(const TrajectorySummary& s, const std::vector<TimepointResult>& timepoints);

/// Class-mean trajectories as a small line chart.
std::string class_curves_svg(const TrajectorySummary& s);

}  // namespace mgpms::eval

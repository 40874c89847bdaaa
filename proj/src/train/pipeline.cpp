#include "mgpms/train/pipeline.hpp"

#include <set>

#include "mgpms/error.hpp"

namespace mgpms::train {

PreparedCohort prepare_cohort(const std::vector<data::RawPatient>& raw, const data::Manifest& manifest,
                              const data::CohortConfig& cohort, double train_fraction, std::uint64_t split_seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train_fraction must lie in (0, 1)");
  auto truncated = data::truncate(raw, manifest, cohort);
  auto windowed = data::window_all(truncated.patients, manifest, cohort);
  const auto sp = data::split(data::labels_of(windowed), train_fraction, split_seed);
  PreparedCohort out;
  out.report = std::move(truncated.report);
  for (std::size_t i : sp.train) out.train.push_back(windowed[i]);
  for (std::size_t i : sp.test) out.test.push_back(windowed[i]);
  if (out.train.empty()) throw DataError("no eligible patients in the training split");
  out.standardization = data::Standardization::fit(out.train, manifest.features.size());
  out.standardization.apply(out.train);
  out.standardization.apply(out.test);
  return out;
}

TrainingRun train_pipeline(const std::vector<data::RawPatient>& raw, const data::Manifest& manifest,
                           const PipelineConfig& config, const EpochCallback& on_epoch) {
  TrainingRun run;
  run.data = prepare_cohort(raw, manifest, config.cohort, config.train_fraction, config.split_seed);
  auto initial = model::initial_model(manifest, config.cohort, config.network, config.train.seed);
  initial.standardization = run.data.standardization;
  for (const auto& p : run.data.test) initial.test_ids.push_back(p.id);
  run.fit = fit(initial, run.data.train, config.train, on_epoch);
  return run;
}

std::vector<data::WindowedPatient> cohort_for_model(const model::ModelBundle& bundle,
                                                    const std::vector<data::RawPatient>& raw, bool test_only,
                                                    data::TruncationReport* report) {
  auto truncated = data::truncate(raw, bundle.manifest, bundle.cohort);
  if (report) *report = truncated.report;
  auto windowed = data::window_all(truncated.patients, bundle.manifest, bundle.cohort);
  if (test_only) {
    if (bundle.test_ids.empty()) throw DataError("model records no test patients");
    const std::set<std::string> wanted(bundle.test_ids.begin(), bundle.test_ids.end());
    std::vector<data::WindowedPatient> kept;
    for (auto& p : windowed)
      if (wanted.count(p.id)) kept.push_back(std::move(p));
    if (kept.size() != wanted.size())
      throw DataError("cohort holds " + std::to_string(kept.size()) + " of the model's " +
                      std::to_string(wanted.size()) + " test patients");
    windowed = std::move(kept);
  }
  bundle.standardization.apply(windowed);
  return windowed;
}

}  // namespace mgpms::train

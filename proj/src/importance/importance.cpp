#include "mgpms/importance/importance.hpp"

#include <algorithm>
#include <cmath>

#include "mgpms/error.hpp"
#include "mgpms/eval/metrics.hpp"
#include "mgpms/eval/report.hpp"

namespace mgpms::importance {

RetrainScore retrain_score(const std::vector<data::RawPatient>& raw, const data::Manifest& manifest,
                           const train::PipelineConfig& config) {
  const auto run = train::train_pipeline(raw, manifest, config);
  const auto& test = run.data.test;
  if (test.empty()) throw DataError("importance needs a non-empty test split");
  RetrainScore s;
  s.test_loss = train::mean_path_loss(run.fit.bundle, test);
  std::vector<int> labels;
  std::vector<double> scores;
  for (const auto& p : test) {
    labels.push_back(p.label);
    scores.push_back(model::mean_path_logits(run.fit.bundle, p).back());
  }
  s.test_auc = eval::auc(labels, scores);
  return s;
}

namespace {

RetrainScore dropped_score(const std::vector<data::RawPatient>& raw, const data::Manifest& manifest,
                           const train::PipelineConfig& config, const std::string& feature) {
  if (!manifest.has_feature(feature)) throw ConfigError("unknown feature '" + feature + "'");
  if (manifest.features.size() < 2) throw ConfigError("cannot drop the only feature");
  return retrain_score(data::drop_feature(raw, feature), manifest.without_feature(feature), config);
}

}  // namespace

double drop_feature_retrain(const std::vector<data::RawPatient>& raw, const data::Manifest& manifest,
                            const train::PipelineConfig& config, const std::string& feature,
                            const RetrainScore& baseline) {
  return dropped_score(raw, manifest, config, feature).test_loss - baseline.test_loss;
}

ImportanceReport rank_features(const std::vector<data::RawPatient>& all_raw, const data::Manifest& manifest,
                               const train::PipelineConfig& config, const ImportanceOptions& options) {
  if (options.baseline_runs == 0) throw ConfigError("importance needs at least one baseline run");
  const std::vector<std::string> features = options.features.empty() ? manifest.features : options.features;
  for (const auto& f : features)
    if (!manifest.has_feature(f)) throw ConfigError("unknown feature '" + f + "'");
  std::vector<data::RawPatient> raw = all_raw;
  if (options.max_patients > 0 && raw.size() > options.max_patients) raw.resize(options.max_patients);

  ImportanceReport report;
  std::vector<RetrainScore> baselines;
  for (std::size_t k = 0; k < options.baseline_runs; ++k) {
    train::PipelineConfig c = config;
    c.train.seed = config.train.seed + k;
    baselines.push_back(retrain_score(raw, manifest, c));
    report.baseline_losses.push_back(baselines.back().test_loss);
  }
  const auto [lo, hi] = std::minmax_element(report.baseline_losses.begin(), report.baseline_losses.end());
  report.noise_band = *hi - *lo;
  const RetrainScore& base = baselines.front();

  for (const auto& f : features) {
    const RetrainScore d = dropped_score(raw, manifest, config, f);
    ImportanceRow row;
    row.feature = f;
    row.baseline_loss = base.test_loss;
    row.dropped_loss = d.test_loss;
    row.importance = d.test_loss - base.test_loss;
    row.baseline_auc = base.test_auc;
    row.dropped_auc = d.test_auc;
    row.auc_drop = base.test_auc - d.test_auc;
    row.within_noise_band = std::abs(row.importance) <= report.noise_band;
    report.rows.push_back(row);
  }
  std::stable_sort(report.rows.begin(), report.rows.end(),
                   [](const ImportanceRow& a, const ImportanceRow& b) { return a.importance > b.importance; });

  Json& m = report.metadata;
  m["loss"] = "test mean-path cross-entropy (nats per window)";
  m["patients_used"] = raw.size();
  m["patients_available"] = all_raw.size();
  m["features_ranked"] = features.size();
  m["baseline_runs"] = options.baseline_runs;
  m["baseline_losses"] = report.baseline_losses;
  m["noise_band"] = report.noise_band;
  m["noise_band_definition"] = "max - min of baseline test losses over training seeds seed..seed+runs-1";
  m["epochs"] = config.train.epochs;
  m["mc_samples"] = config.train.mc_samples;
  m["embed"] = config.network.embed;
  m["layers"] = config.network.layers;
  m["seed"] = config.train.seed;
  m["split_seed"] = config.split_seed;
  return report;
}

std::string importance_csv(const ImportanceReport& report, std::size_t top_k) {
  using eval::format_number;
  std::string out = "rank,feature,importance,baseline_loss,dropped_loss,baseline_auc,dropped_auc,auc_drop,within_noise_band\n";
  const std::size_t n = top_k == 0 ? report.rows.size() : std::min(top_k, report.rows.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = report.rows[i];
    out += std::to_string(i + 1) + "," + r.feature + "," + format_number(r.importance) + "," +
           format_number(r.baseline_loss) + "," + format_number(r.dropped_loss) + "," + format_number(r.baseline_auc) +
           "," + format_number(r.dropped_auc) + "," + format_number(r.auc_drop) + "," +
           (r.within_noise_band ? "true" : "false") + "\n";
  }
  return out;
}

}  // namespace mgpms::importance

#include "mgpms/importance/importance.hpp"

#include <gtest/gtest.h>

#include "mgpms/data/synth.hpp"
#include "mgpms/error.hpp"

using namespace mgpms;

namespace {

train::PipelineConfig small_config() {
  train::PipelineConfig pc;
  pc.network.embed = 8;
  pc.network.ffn = 16;
  pc.network.layers = 1;
  pc.train.epochs = 10;
  pc.train.mc_samples = 2;
  pc.train.learning_rate = 0.01;
  pc.train.seed = 5;
  pc.split_seed = 5;
  return pc;
}

struct Fixture {
  data::Manifest manifest = data::small_manifest(1, 1);
  std::vector<data::RawPatient> raw;
  Fixture() {
    data::SynthConfig sc;
    sc.patients = 300;
    sc.seed = 5;
    sc.drift_probability = 1.0;
    raw = data::synth_cohort(sc, manifest);
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

const importance::ImportanceReport& report() {
  static const auto r = importance::rank_features(fixture().raw, fixture().manifest, small_config(), {});
  return r;
}

}  // namespace

TEST(Importance, SingleInformativeFeatureStandsOut) {
  const auto& r = report();
  ASSERT_EQ(r.rows.size(), 2u);
  EXPECT_EQ(r.rows[0].feature, fixture().manifest.features[0]);
  EXPECT_GT(r.rows[0].importance, 5.0 * r.noise_band);
  EXPECT_FALSE(r.rows[0].within_noise_band);
  EXPECT_EQ(r.baseline_losses.size(), 3u);
}

TEST(Importance, RowsAreConsistent) {
  const auto& r = report();
  for (const auto& row : r.rows) {
    EXPECT_DOUBLE_EQ(row.importance, row.dropped_loss - row.baseline_loss);
    EXPECT_DOUBLE_EQ(row.auc_drop, row.baseline_auc - row.dropped_auc);
    EXPECT_EQ(row.within_noise_band, std::abs(row.importance) <= r.noise_band);
    EXPECT_EQ(row.baseline_loss, r.baseline_losses[0]);
  }
  EXPECT_GE(r.rows[0].importance, r.rows[1].importance);
  EXPECT_EQ(r.metadata["patients_used"], fixture().raw.size());
}

TEST(Importance, DropRetrainMatchesReport) {
  const auto pc = small_config();
  const auto base = importance::retrain_score(fixture().raw, fixture().manifest, pc);
  EXPECT_EQ(base.test_loss, report().baseline_losses[0]);
  const auto& name = report().rows[1].feature;
  EXPECT_EQ(importance::drop_feature_retrain(fixture().raw, fixture().manifest, pc, name, base),
            report().rows[1].importance);
  EXPECT_THROW(importance::drop_feature_retrain(fixture().raw, fixture().manifest, pc, "nope", base), ConfigError);
}

TEST(Importance, CsvTopK) {
  const auto csv = importance::importance_csv(report(), 1);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
  EXPECT_EQ(csv.rfind("rank,feature,importance,", 0), 0u);
  const auto all = importance::importance_csv(report(), 0);
  EXPECT_EQ(std::count(all.begin(), all.end(), '\n'), 3);
}

TEST(Importance, SubsetAndCap) {
  importance::ImportanceOptions o;
  o.features = {fixture().manifest.features[1]};
  o.baseline_runs = 1;
  o.max_patients = 120;
  const auto r = importance::rank_features(fixture().raw, fixture().manifest, small_config(), o);
  ASSERT_EQ(r.rows.size(), 1u);
  EXPECT_EQ(r.noise_band, 0.0);
  EXPECT_EQ(r.metadata["patients_used"], 120);
  o.features = {"missing"};
  EXPECT_THROW(importance::rank_features(fixture().raw, fixture().manifest, small_config(), o), ConfigError);
}

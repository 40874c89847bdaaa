#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "mgpms/data/synth.hpp"
#include "mgpms/error.hpp"
#include "mgpms/model/model.hpp"
#include "mgpms/rng.hpp"

using namespace mgpms;
using namespace mgpms::model;

namespace {

net::NetworkConfig small_net() {
  net::NetworkConfig c;
  c.embed = 8;
  c.ffn = 16;
  c.layers = 1;
  c.heads = 2;
  return c;
}

std::vector<data::WindowedPatient> cohort(const data::Manifest& m, std::size_t n, std::uint64_t seed) {
  data::SynthConfig sc;
  sc.patients = n;
  sc.seed = seed;
  const data::CohortConfig cfg;
  auto w = data::window_all(data::truncate(data::synth_cohort(sc, m), m, cfg).patients, m, cfg);
  data::Standardization::fit(w, m.features.size()).apply(w);
  return w;
}

ModelBundle perturbed_bundle(const data::Manifest& m) {
  ModelBundle b = initial_model(m, data::CohortConfig{}, small_net(), 5);
  Rng rng(9);
  for (auto& v : b.mgp.task_factor_raw) v += 0.1 * rng.normal();
  b.mgp.log_length_scale = std::log(7.3);
  for (auto& a : b.net.store.arrays())
    for (auto& v : a.values) v += 0.05 * rng.normal();
  b.test_ids = {"P00003", "P00007"};
  b.run_config = {{"seed", 5}};
  return b;
}

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST(JointStore, DecayMaskCoversNetworkAndOffDiagonalFactorOnly) {
  const auto m = data::small_manifest(2, 1);
  const ModelBundle b = initial_model(m, data::CohortConfig{}, small_net(), 1);
  const ParameterStore s = joint_store(b.mgp, b.net);
  const auto mask = s.decay_mask();
  // 3x3 factor: only (1,0), (2,0), (2,1).
  const std::vector<double> factor(mask.begin(), mask.begin() + 9);
  EXPECT_EQ(factor, (std::vector<double>{0, 0, 0, 1, 0, 0, 1, 1, 0}));
  for (std::size_t i = 9; i < 9 + 3 + 1; ++i) EXPECT_EQ(mask[i], 0.0);
  EXPECT_EQ(s.scalar_count(), 13 + b.net.store.scalar_count());

  mgp::MgpParameters gp = mgp::MgpParameters::initial(3);
  net::NetworkParameters net = b.net;
  ParameterStore changed = s;
  changed.get("mgp.log_length_scale").values[0] = 1.5;
  changed.get("readout.demographics").values[0] = 0.25;
  unpack_joint(changed, gp, net);
  EXPECT_EQ(gp.log_length_scale, 1.5);
  EXPECT_EQ(net.store.get("readout.demographics").values[0], 0.25);
}

TEST(Checkpoint, RoundTripsBitForBit) {
  const auto m = data::small_manifest(2, 2);
  const ModelBundle b = perturbed_bundle(m);
  const std::string text = checkpoint_json(b).dump();
  const ModelBundle back = bundle_from_json(Json::parse(text));
  EXPECT_TRUE(bit_equal(joint_store(b.mgp, b.net).flatten(), joint_store(back.mgp, back.net).flatten()));
  EXPECT_EQ(back.test_ids, b.test_ids);
  EXPECT_EQ(back.manifest.features, m.features);
  EXPECT_EQ(checkpoint_json(back).dump(), text);
}

TEST(Checkpoint, SaveLoadAndRejectsForeignFiles) {
  const auto m = data::small_manifest(1, 1);
  const ModelBundle b = perturbed_bundle(m);
  const auto dir = std::filesystem::temp_directory_path() / "mgpms_model_test";
  save_checkpoint(dir / "model.json", b);
  const ModelBundle back = load_checkpoint(dir / "model.json");
  EXPECT_TRUE(bit_equal(b.net.store.flatten(), back.net.store.flatten()));
  data::write_text(dir / "other.json", "{\"format\": \"something\"}");
  EXPECT_THROW(load_checkpoint(dir / "other.json"), DataError);
  data::write_text(dir / "broken.json", "{");
  EXPECT_THROW(load_checkpoint(dir / "broken.json"), DataError);
  Json j = checkpoint_json(b);
  j["version"] = 99;
  EXPECT_THROW(bundle_from_json(j), DataError);
  std::filesystem::remove_all(dir);
}

TEST(Draws, OtherFeaturesUnchangedWhenOneIsRemoved) {
  const auto m = data::small_manifest(2, 2);
  const auto patient = cohort(m, 3, 4).front();
  const ModelBundle b = initial_model(m, data::CohortConfig{}, small_net(), 1);
  const auto grid = b.cohort.grid();
  const auto full = pathwise_draws(patient.series, grid, b.feature_keys(), 3, 11, 2);

  auto reduced_series = patient.series;
  reduced_series.features.erase(reduced_series.features.begin() + 1);
  auto keys = b.feature_keys();
  keys.erase(keys.begin() + 1);
  const auto reduced = pathwise_draws(reduced_series, grid, keys, 3, 11, 2);

  const std::size_t d = 4, s = 3;
  const std::size_t u = mgp::pathwise_support(patient.series, grid).size();
  ASSERT_EQ(mgp::pathwise_support(reduced_series, grid).size(), u);
  for (std::size_t r = 0; r < u; ++r)
    for (std::size_t k = 0; k < s; ++k) {
      EXPECT_EQ(reduced.prior[r * s * 3 + k * 3 + 0], full.prior[r * s * d + k * d + 0]);
      EXPECT_EQ(reduced.prior[r * s * 3 + k * 3 + 2], full.prior[r * s * d + k * d + 3]);
    }
  const auto g_full = grid_draws(17, b.feature_keys(), 2, 3, 4);
  const auto g_red = grid_draws(17, keys, 2, 3, 4);
  for (std::size_t i = 0; i < 17 * 2; ++i) EXPECT_EQ(g_red[2 * 34 + i], g_full[3 * 34 + i]);
}

TEST(SampleInput, LayoutAndSampleMeanMatchPosteriorMean) {
  const auto m = data::small_manifest(1, 1);
  const auto patient = cohort(m, 2, 8).front();
  const ModelBundle b = perturbed_bundle(m);
  const auto grid = b.cohort.grid();
  const auto gp = mgp::MgpTensors::constant(b.mgp);
  const auto mean = mean_network_input(patient.series, grid, gp).to_vector();
  const auto flat = mgp::posterior_mean(patient.series, grid, gp).to_vector();
  for (std::size_t j = 0; j < 17; ++j)
    for (std::size_t f = 0; f < 2; ++f) EXPECT_EQ(mean[j * 2 + f], flat[f * 17 + j]);

  for (Sampler s : {Sampler::Pathwise, Sampler::Cholesky}) {
    const std::size_t n = 4000;
    const auto z = sample_network_input(patient.series, grid, gp, s, b.feature_keys(), n, 1, 0).to_vector();
    ASSERT_EQ(z.size(), n * 17 * 2);
    for (std::size_t j = 0; j < 17; ++j)
      for (std::size_t f = 0; f < 2; ++f) {
        double avg = 0.0;
        for (std::size_t k = 0; k < n; ++k) avg += z[(k * 17 + j) * 2 + f];
        EXPECT_NEAR(avg / n, mean[j * 2 + f], 0.08) << sampler_name(s);
      }
  }
  EXPECT_EQ(parse_sampler("cholesky"), Sampler::Cholesky);
  EXPECT_THROW(parse_sampler("gibbs"), ConfigError);
}

TEST(Predict, OnlineScoresIgnoreLaterWindows) {
  const auto m = data::small_manifest(2, 1);
  const auto patients = cohort(m, 6, 3);
  const ModelBundle b = perturbed_bundle(m);
  PredictOptions o;
  o.mc_samples = 4;
  o.online = true;
  auto patient = patients.front();
  const auto base = predict(b, patient, o);
  // Perturb everything observed after window 8.
  for (auto& f : patient.series.features)
    for (auto& obs : f)
      if (obs.time_h >= 8 * 4.0) obs.value += 3.0;
  const auto moved = predict(b, patient, o);
  for (std::size_t j = 0; j < 8; ++j) {
    EXPECT_EQ(base.logits[j], moved.logits[j]);
    EXPECT_EQ(base.mc_probability[j], moved.mc_probability[j]);
  }
  bool later_changed = false;
  for (std::size_t j = 8; j < 17; ++j) later_changed |= base.logits[j] != moved.logits[j];
  EXPECT_TRUE(later_changed);

  o.online = false;
  const auto offline = predict(b, patients.front(), o);
  EXPECT_NEAR(offline.logits[16], base.logits[16], 1e-12);
  for (std::size_t j = 0; j < 17; ++j) {
    EXPECT_NEAR(offline.probabilities[j], 1.0 / (1.0 + std::exp(-offline.logits[j])), 1e-15);
    EXPECT_GT(offline.mc_probability[j], 0.0);
    EXPECT_LT(offline.mc_probability[j], 1.0);
  }
  EXPECT_EQ(mean_path_logits(b, patients.front()), offline.logits);
}

TEST(Predict, AllMatchesSingleAndIsDeterministic) {
  const auto m = data::small_manifest(1, 2);
  const auto patients = cohort(m, 5, 6);
  const ModelBundle b = perturbed_bundle(m);
  PredictOptions o;
  o.mc_samples = 3;
  const auto all = predict_all(b, patients, o);
  ASSERT_EQ(all.size(), patients.size());
  for (std::size_t i = 0; i < patients.size(); ++i) {
    const auto one = predict(b, patients[i], o);
    EXPECT_EQ(all[i].id, patients[i].id);
    EXPECT_EQ(all[i].logits, one.logits);
    EXPECT_EQ(all[i].mc_probability, one.mc_probability);
  }
  auto wrong = patients.front();
  wrong.demographics.pop_back();
  EXPECT_THROW(predict(b, wrong, o), ShapeError);
}

TEST(ObservedUntil, KeepsWindowsUpToJ) {
  mgp::ObservationSeries s;
  s.patient_id = "x";
  s.features = {{{2.0, 1.0}, {6.0, 2.0}, {10.0, 3.0}}, {{14.0, 4.0}}};
  const auto grid = mgp::TimeGrid::window_centres(4, 4.0);
  EXPECT_EQ(observed_until(s, grid, 2).observation_count(), 2u);
  EXPECT_EQ(observed_until(s, grid, 3).features[1].size(), 0u);
  EXPECT_EQ(observed_until(s, grid, 4).observation_count(), 4u);
}

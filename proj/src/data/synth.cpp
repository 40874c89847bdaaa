#include "mgpms/data/synth.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include "mgpms/error.hpp"
#include "mgpms/rng.hpp"

namespace mgpms::data {

namespace {

constexpr double kHour = 3600.0;
constexpr double kHorizonH = 80.0;
constexpr double kMaxCompleteness = 0.95;

struct FeatureScale {
  double mean;
  double sd;
  double direction;  // sign of the drift for positive patients
};

const std::map<std::string, FeatureScale>& scales() {
  static const std::map<std::string, FeatureScale> table{
      {"albumin", {3.2, 0.6, -1}},      {"bicarbonate", {24.0, 4.0, -1}}, {"bilirubin", {1.2, 1.0, 1}},
      {"bun", {22.0, 12.0, 1}},         {"calcium", {8.6, 0.7, -1}},      {"chloride", {104.0, 5.0, 1}},
      {"creatinine", {1.3, 0.8, 1}},    {"glucose", {135.0, 40.0, 1}},    {"hematocrit", {32.0, 5.0, -1}},
      {"hemoglobin", {10.5, 1.8, -1}},  {"lactate", {1.8, 1.1, 1}},       {"platelets", {210.0, 80.0, -1}},
      {"potassium", {4.1, 0.5, 1}},     {"sodium", {139.0, 4.0, 1}},      {"wbc", {10.5, 4.5, 1}},
      {"ph", {7.38, 0.06, -1}},         {"heart_rate", {88.0, 15.0, 1}},  {"resp_rate", {19.0, 4.5, 1}},
      {"sbp", {122.0, 18.0, -1}},       {"dbp", {64.0, 11.0, -1}},        {"map", {83.0, 12.0, -1}},
      {"spo2", {96.0, 2.5, -1}},        {"temperature", {37.0, 0.6, 1}},  {"fio2", {0.4, 0.15, 1}},
      {"gcs", {13.0, 2.5, -1}}};
  return table;
}

FeatureScale scale_of(const std::string& name) {
  const auto it = scales().find(name);
  return it == scales().end() ? FeatureScale{0.0, 1.0, 1.0} : it->second;
}

// Event times of a homogeneous Poisson process on [0, end_h), whole seconds,
// strictly increasing.
std::vector<double> poisson_times(Rng& rng, double rate_per_h, double end_h) {
  std::vector<double> t;
  if (!(rate_per_h > 0.0)) return t;
  double h = rng.exponential(1.0 / rate_per_h);
  while (h < end_h) {
    const double s = std::floor(h * kHour);
    if (t.empty() || s > t.back()) t.push_back(s);
    h += rng.exponential(1.0 / rate_per_h);
  }
  return t;
}

void one_hot(std::vector<double>& out, std::size_t width, std::size_t hot) {
  for (std::size_t i = 0; i < width; ++i) out.push_back(i == hot ? 1.0 : 0.0);
}

std::vector<double> demographics_for(const Manifest& manifest, Rng& rng) {
  std::vector<double> d;
  if (manifest.demographics == Manifest::standard().demographics) {
    const double race_p[] = {0.62, 0.18, 0.06, 0.02, 0.07, 0.05};
    double u = rng.uniform(), acc = 0.0;
    std::size_t race = 5;
    for (std::size_t r = 0; r < 6; ++r) {
      acc += race_p[r];
      if (u < acc) {
        race = r;
        break;
      }
    }
    one_hot(d, 6, race);
    one_hot(d, 2, rng.bernoulli(0.12) ? 0 : 1);
    one_hot(d, 2, rng.bernoulli(0.45) ? 0 : 1);
    const double age = std::clamp(rng.normal(62.0, 16.0), 18.0, 99.0);
    one_hot(d, 15, std::min<std::size_t>(14, static_cast<std::size_t>((age - 18.0) / 5.0)));
    return d;
  }
  for (std::size_t i = 0; i < manifest.demographics.size(); ++i) d.push_back(rng.bernoulli(0.5) ? 1.0 : 0.0);
  return d;
}

}  // namespace

Manifest synth_manifest() {
  Manifest m = Manifest::standard();
  m.informative = {"heart_rate", "resp_rate", "spo2", "fio2", "lactate", "ph"};
  return m;
}

Manifest small_manifest(std::size_t informative, std::size_t noise, std::size_t medications,
                        std::size_t demographics) {
  Manifest m;
  for (std::size_t i = 0; i < informative; ++i) {
    m.features.push_back("signal_" + std::to_string(i + 1));
    m.informative.push_back(m.features.back());
  }
  for (std::size_t i = 0; i < noise; ++i) m.features.push_back("noise_" + std::to_string(i + 1));
  m.feature_kinds.assign(m.features.size(), "lab");
  for (std::size_t i = 0; i < medications; ++i) m.medications.push_back("med_" + std::to_string(i + 1));
  for (std::size_t i = 0; i < demographics; ++i) m.demographics.push_back("demo_" + std::to_string(i + 1));
  return m;
}

std::vector<RawPatient> synth_cohort(const SynthConfig& c, const Manifest& manifest) {
  if (c.patients < 2) throw ConfigError("synthetic cohort needs at least two patients");
  if (!(c.prevalence > 0.0 && c.prevalence < 1.0)) throw ConfigError("prevalence must lie in (0, 1)");
  if (!(c.completeness_min > 0.0 && c.completeness_min <= c.completeness_max && c.completeness_max <= 1.0))
    throw ConfigError("completeness range must satisfy 0 < min <= max <= 1");
  if (c.ineligible_fraction < 0.0 || c.ineligible_fraction >= 1.0) throw ConfigError("ineligible fraction must lie in [0, 1)");
  manifest.validate();
  const double period_h = 72.0;

  // Per-feature observation rate and per-category prescription rate.
  std::vector<double> feature_rate;
  for (const auto& f : manifest.features) {
    Rng r = Rng::keyed(c.seed, {hash_key("completeness"), hash_key(f)});
    const double completeness = std::min(kMaxCompleteness, r.uniform(c.completeness_min, c.completeness_max));
    feature_rate.push_back(-std::log(1.0 - completeness) / c.window_h);
  }
  std::vector<double> med_rate;
  for (const auto& m : manifest.medications) {
    Rng r = Rng::keyed(c.seed, {hash_key("medication-rate"), hash_key(m)});
    med_rate.push_back(r.uniform(0.005, 0.04));
  }
  std::vector<bool> informative;
  for (const auto& f : manifest.features)
    informative.push_back(std::find(manifest.informative.begin(), manifest.informative.end(), f) !=
                          manifest.informative.end());

  std::vector<RawPatient> out;
  out.reserve(c.patients);
  for (std::size_t i = 0; i < c.patients; ++i) {
    Rng rng = Rng::keyed(c.seed, {hash_key("patient"), i});
    RawPatient p;
    char id[16];
    std::snprintf(id, sizeof id, "P%05zu", i + 1);
    p.id = id;

    bool positive = false;
    if (rng.uniform() < c.ineligible_fraction) {
      switch (rng.index(3)) {
        case 0:
          p.vent_t_s = 0.0;
          p.discharge_t_s = std::floor((period_h + rng.exponential(48.0)) * kHour);
          break;
        case 1:
          p.vent_t_s = std::floor(rng.uniform(1.0, period_h) * kHour);
          p.discharge_t_s = *p.vent_t_s + std::floor(rng.exponential(96.0) * kHour);
          break;
        default:
          p.discharge_t_s = std::floor(rng.uniform(6.0, period_h - 0.1) * kHour);
          break;
      }
    } else if (rng.bernoulli(c.prevalence)) {
      positive = true;
      p.vent_t_s = std::floor((period_h + 0.1 + rng.exponential(24.0)) * kHour);
      p.discharge_t_s = *p.vent_t_s + std::floor(rng.exponential(120.0) * kHour);
    } else {
      p.discharge_t_s = std::floor((period_h + rng.exponential(36.0)) * kHour);
    }
    p.demographics = demographics_for(manifest, rng);

    const double onset = rng.uniform(0.0, c.onset_max_h);
    std::vector<bool> drifts(manifest.features.size(), false);
    if (positive) {
      std::vector<std::size_t> candidates;
      for (std::size_t f = 0; f < drifts.size(); ++f)
        if (informative[f]) {
          candidates.push_back(f);
          drifts[f] = rng.bernoulli(c.drift_probability);
        }
      if (!candidates.empty() && std::none_of(drifts.begin(), drifts.end(), [](bool b) { return b; }))
        drifts[candidates[rng.index(candidates.size())]] = true;
    }

    const double end_h = std::min(p.discharge_t_s / kHour, kHorizonH);
    for (std::size_t f = 0; f < manifest.features.size(); ++f) {
      const auto& name = manifest.features[f];
      Rng fr = Rng::keyed(c.seed, {hash_key("observations"), i, hash_key(name)});
      const FeatureScale sc = scale_of(name);
      const double offset = fr.normal(0.0, c.offset_sd);
      const double phase = fr.uniform(0.0, 2.0 * std::numbers::pi);
      for (double t_s : poisson_times(fr, feature_rate[f], end_h)) {
        const double t = t_s / kHour;
        double latent = offset + c.sinusoid_amplitude * std::sin(2.0 * std::numbers::pi * t / 24.0 + phase) +
                        c.noise_sd * fr.normal();
        if (drifts[f] && t > onset) latent += sc.direction * c.drift_strength * (t - onset) / period_h;
        p.observations.push_back({name, t_s, sc.mean + sc.sd * latent});
      }
    }
    std::stable_sort(p.observations.begin(), p.observations.end(),
                     [](const RawObservation& a, const RawObservation& b) { return a.t_s < b.t_s; });

    for (std::size_t m = 0; m < manifest.medications.size(); ++m) {
      Rng mr = Rng::keyed(c.seed, {hash_key("medications"), i, hash_key(manifest.medications[m])});
      for (double t_s : poisson_times(mr, med_rate[m], end_h)) p.meds.push_back({manifest.medications[m], t_s});
    }
    std::stable_sort(p.meds.begin(), p.meds.end(), [](const MedEvent& a, const MedEvent& b) { return a.t_s < b.t_s; });
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace mgpms::data

#include "mgpms/data/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "mgpms/error.hpp"
#include "mgpms/rng.hpp"

namespace mgpms::data {

namespace {

constexpr double kSecondsPerHour = 3600.0;

std::size_t find_name(const std::vector<std::string>& names, const std::string& name, const char* what) {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw DataError(std::string("unknown ") + what + " '" + name + "'");
  return static_cast<std::size_t>(it - names.begin());
}

// Empty when the record is well formed, otherwise the reason.
std::string malformation(const RawPatient& p, const Manifest& m) {
  if (p.id.empty()) return "missing id";
  if (!std::isfinite(p.discharge_t_s) || p.discharge_t_s < 0.0) return "invalid discharge time";
  if (p.vent_t_s) {
    if (!std::isfinite(*p.vent_t_s)) return "invalid ventilation time";
    if (*p.vent_t_s > p.discharge_t_s) return "ventilation after discharge";
  }
  if (p.demographics.size() != m.demographics.size())
    return "expected " + std::to_string(m.demographics.size()) + " demographic values, got " +
           std::to_string(p.demographics.size());
  for (double v : p.demographics)
    if (!std::isfinite(v)) return "non-finite demographic value";
  for (const auto& o : p.observations) {
    if (!m.has_feature(o.feature)) return "unknown feature '" + o.feature + "'";
    if (!std::isfinite(o.t_s) || o.t_s < 0.0) return "invalid observation time";
    if (!std::isfinite(o.value)) return "non-finite value for " + o.feature;
  }
  for (const auto& e : p.meds) {
    if (std::find(m.medications.begin(), m.medications.end(), e.category) == m.medications.end())
      return "unknown medication category '" + e.category + "'";
    if (!std::isfinite(e.t_s) || e.t_s < 0.0) return "invalid medication time";
  }
  return {};
}

}  // namespace

std::size_t Manifest::feature_index(const std::string& name) const { return find_name(features, name, "feature"); }

std::size_t Manifest::medication_index(const std::string& name) const {
  return find_name(medications, name, "medication category");
}

bool Manifest::has_feature(const std::string& name) const {
  return std::find(features.begin(), features.end(), name) != features.end();
}

void Manifest::validate() const {
  if (features.empty()) throw DataError("manifest lists no features");
  if (!feature_kinds.empty() && feature_kinds.size() != features.size())
    throw DataError("manifest feature kinds do not match the feature list");
  auto unique = [](std::vector<std::string> v, const char* what) {
    std::sort(v.begin(), v.end());
    if (std::adjacent_find(v.begin(), v.end()) != v.end())
      throw DataError(std::string("manifest has duplicate ") + what + " names");
  };
  unique(features, "feature");
  unique(medications, "medication");
  unique(demographics, "demographic");
  for (const auto& f : informative)
    if (!has_feature(f)) throw DataError("informative feature '" + f + "' is not in the vocabulary");
}

Manifest Manifest::without_feature(const std::string& name) const {
  const std::size_t d = feature_index(name);
  Manifest m = *this;
  m.features.erase(m.features.begin() + static_cast<std::ptrdiff_t>(d));
  if (!m.feature_kinds.empty()) m.feature_kinds.erase(m.feature_kinds.begin() + static_cast<std::ptrdiff_t>(d));
  m.informative.erase(std::remove(m.informative.begin(), m.informative.end(), name), m.informative.end());
  return m;
}

Manifest Manifest::standard() {
  Manifest m;
  m.features = {"albumin",   "bicarbonate", "bilirubin",  "bun",        "calcium",    "chloride",  "creatinine",
                "glucose",   "hematocrit",  "hemoglobin", "lactate",    "platelets",  "potassium", "sodium",
                "wbc",       "ph",          "heart_rate", "resp_rate",  "sbp",        "dbp",       "map",
                "spo2",      "temperature", "fio2",       "gcs"};
  m.feature_kinds.assign(16, "lab");
  m.feature_kinds.resize(25, "vital");
  m.medications = {"antibiotics",   "anticoagulants",    "vasopressors",   "sedatives",
                   "opioids",       "diuretics",         "insulin",        "corticosteroids",
                   "bronchodilators", "antiarrhythmics", "antihypertensives", "anticonvulsants",
                   "antiemetics",   "antipsychotics",    "proton_pump_inhibitors", "electrolytes",
                   "iv_fluids",     "neuromuscular_blockers", "antivirals", "antifungals",
                   "blood_products"};
  m.demographics = {"race_white", "race_black", "race_asian", "race_native", "race_other", "race_unknown", "ethnicity_hispanic",
                    "ethnicity_non_hispanic", "gender_female", "gender_male"};
  for (int lo = 18; lo < 88; lo += 5) m.demographics.push_back("age_" + std::to_string(lo) + "_" + std::to_string(lo + 4));
  m.demographics.push_back("age_88_plus");
  return m;
}

void CohortConfig::validate() const {
  if (!(study_period_h > 0.0) || !(window_h > 0.0)) throw ConfigError("study period and window must be positive");
  if (windows < 2) throw ConfigError("at least two windows are required");
  if (modeled_end_h() > study_period_h + 1e-9)
    throw ConfigError("windows extend beyond the study period");
}

mgp::TimeGrid CohortConfig::grid() const { return mgp::TimeGrid::window_centres(windows, window_h); }

std::size_t CohortConfig::window_at(double hour) const {
  const double w = std::floor(hour / window_h) + 1.0;
  if (w < 1.0) return 1;
  return std::min(windows, static_cast<std::size_t>(w));
}

TruncationResult truncate(const std::vector<RawPatient>& raw, const Manifest& manifest, const CohortConfig& config) {
  config.validate();
  TruncationResult out;
  auto& rep = out.report;
  rep.total = raw.size();
  const double period_s = config.study_period_h * kSecondsPerHour;
  for (const auto& p : raw) {
    const std::string why = malformation(p, manifest);
    if (!why.empty()) {
      ++rep.malformed;
      rep.messages.push_back("patient " + (p.id.empty() ? std::string("<unnamed>") : p.id) + ": " + why);
      continue;
    }
    if (p.vent_t_s && *p.vent_t_s <= 0.0) {
      ++rep.vent_at_admission;
      continue;
    }
    if (p.vent_t_s && *p.vent_t_s <= period_s) {
      ++rep.vent_in_period;
      continue;
    }
    if (!p.vent_t_s && p.discharge_t_s < period_s) {
      ++rep.short_stay;
      continue;
    }
    LabeledPatient lp;
    lp.label = p.vent_t_s ? 1 : 0;
    lp.record.id = p.id;
    lp.record.demographics = p.demographics;
    lp.record.vent_t_s = p.vent_t_s;
    lp.record.discharge_t_s = p.discharge_t_s;
    for (const auto& o : p.observations)
      if (o.t_s < period_s) lp.record.observations.push_back(o);
    for (const auto& e : p.meds)
      if (e.t_s < period_s) lp.record.meds.push_back(e);
    rep.positives += static_cast<std::size_t>(lp.label);
    out.patients.push_back(std::move(lp));
  }
  rep.eligible = out.patients.size();
  return out;
}

WindowedPatient window_average(const LabeledPatient& patient, const Manifest& manifest, const CohortConfig& config) {
  const std::size_t d = manifest.features.size();
  const std::size_t x = config.windows;
  const std::size_t m = manifest.medications.size();
  const double end_s = config.modeled_end_h() * kSecondsPerHour;
  std::vector<double> sum(d * x, 0.0);
  std::vector<std::size_t> count(d * x, 0);
  for (const auto& o : patient.record.observations) {
    if (o.t_s >= end_s) continue;
    const std::size_t j = static_cast<std::size_t>(std::floor(o.t_s / kSecondsPerHour / config.window_h));
    if (j >= x) continue;
    const std::size_t f = manifest.feature_index(o.feature);
    sum[f * x + j] += o.value;
    ++count[f * x + j];
  }
  WindowedPatient w;
  w.id = patient.record.id;
  w.label = patient.label;
  w.demographics = patient.record.demographics;
  w.vent_t_s = patient.record.vent_t_s;
  w.discharge_t_s = patient.record.discharge_t_s;
  w.series.patient_id = w.id;
  w.series.features.assign(d, {});
  const auto grid = config.grid();
  for (std::size_t f = 0; f < d; ++f)
    for (std::size_t j = 0; j < x; ++j)
      if (count[f * x + j] > 0)
        w.series.features[f].push_back({grid.points[j], sum[f * x + j] / static_cast<double>(count[f * x + j])});
  w.meds.assign(x * m, 0.0);
  for (const auto& e : patient.record.meds) {
    if (e.t_s >= end_s) continue;
    const std::size_t j = static_cast<std::size_t>(std::floor(e.t_s / kSecondsPerHour / config.window_h));
    if (j >= x) continue;
    w.meds[j * m + manifest.medication_index(e.category)] = 1.0;
  }
  return w;
}

std::vector<WindowedPatient> window_all(const std::vector<LabeledPatient>& patients, const Manifest& manifest,
                                        const CohortConfig& config) {
  std::vector<WindowedPatient> out;
  out.reserve(patients.size());
  for (const auto& p : patients) out.push_back(window_average(p, manifest, config));
  return out;
}

RawPatient as_raw(const WindowedPatient& patient, const Manifest& manifest, const CohortConfig& config) {
  RawPatient r;
  r.id = patient.id;
  r.demographics = patient.demographics;
  r.vent_t_s = patient.vent_t_s;
  r.discharge_t_s = patient.discharge_t_s;
  for (std::size_t f = 0; f < patient.series.features.size(); ++f)
    for (const auto& o : patient.series.features[f])
      r.observations.push_back({manifest.features[f], o.time_h * kSecondsPerHour, o.value});
  const std::size_t m = manifest.medications.size();
  for (std::size_t j = 0; j < config.windows; ++j)
    for (std::size_t c = 0; c < m; ++c)
      if (patient.meds[j * m + c] != 0.0)
        r.meds.push_back({manifest.medications[c], (static_cast<double>(j) + 0.5) * config.window_h * kSecondsPerHour});
  return r;
}

Standardization Standardization::fit(const std::vector<WindowedPatient>& patients, std::size_t features) {
  Standardization s;
  s.mean.assign(features, 0.0);
  s.sd.assign(features, 1.0);
  for (std::size_t f = 0; f < features; ++f) {
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& p : patients)
      for (const auto& o : p.series.features.at(f)) {
        total += o.value;
        ++n;
      }
    if (n == 0) continue;
    const double mean = total / static_cast<double>(n);
    double ss = 0.0;
    for (const auto& p : patients)
      for (const auto& o : p.series.features[f]) ss += (o.value - mean) * (o.value - mean);
    s.mean[f] = mean;
    const double sd = std::sqrt(ss / static_cast<double>(n));
    if (n > 1 && sd > 1e-12) s.sd[f] = sd;
  }
  return s;
}

Standardization Standardization::without_feature(std::size_t d) const {
  if (d >= mean.size()) throw DataError("feature index out of range");
  Standardization s = *this;
  s.mean.erase(s.mean.begin() + static_cast<std::ptrdiff_t>(d));
  s.sd.erase(s.sd.begin() + static_cast<std::ptrdiff_t>(d));
  return s;
}

void Standardization::apply(WindowedPatient& patient) const {
  if (patient.series.features.size() != mean.size())
    throw ShapeError("standardization has " + std::to_string(mean.size()) + " features, patient " + patient.id +
                     " has " + std::to_string(patient.series.features.size()));
  for (std::size_t f = 0; f < mean.size(); ++f)
    for (auto& o : patient.series.features[f]) o.value = (o.value - mean[f]) / sd[f];
}

void Standardization::apply(std::vector<WindowedPatient>& patients) const {
  for (auto& p : patients) apply(p);
}

Split split(const std::vector<int>& labels, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("split fraction must lie in (0, 1)");
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw DataError("labels must be 0 or 1");
    by_class[labels[i]].push_back(i);
  }
  if (by_class[0].empty() || by_class[1].empty()) throw DataError("cohort contains a single class");
  Split s;
  for (int c = 0; c < 2; ++c) {
    auto& idx = by_class[c];
    Rng rng = Rng::keyed(seed, {hash_key("split"), static_cast<std::uint64_t>(c)});
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.index(i)]);
    const auto n_train = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(idx.size())));
    s.train.insert(s.train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.test.insert(s.test.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

std::vector<int> labels_of(const std::vector<WindowedPatient>& patients) {
  std::vector<int> l;
  l.reserve(patients.size());
  for (const auto& p : patients) l.push_back(p.label);
  return l;
}

std::vector<RawPatient> drop_feature(const std::vector<RawPatient>& raw, const std::string& name) {
  std::vector<RawPatient> out = raw;
  for (auto& p : out)
    p.observations.erase(std::remove_if(p.observations.begin(), p.observations.end(),
                                        [&](const RawObservation& o) { return o.feature == name; }),
                         p.observations.end());
  return out;
}

}  // namespace mgpms::data

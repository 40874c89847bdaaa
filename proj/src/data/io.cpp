#include "mgpms/data/io.hpp"

#include <fstream>
#include <sstream>

#include "mgpms/error.hpp"

namespace mgpms::data {

namespace {

template <class T>
T field(const Json& j, const char* key) {
  if (!j.contains(key)) throw DataError(std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception&) {
    throw DataError(std::string("field '") + key + "' has the wrong type");
  }
}

std::vector<std::string> string_list(const Json& j, const char* key, bool required = true) {
  if (!j.contains(key)) {
    if (required) throw DataError(std::string("manifest is missing '") + key + "'");
    return {};
  }
  return field<std::vector<std::string>>(j, key);
}

}  // namespace

Json to_json(const RawPatient& p) {
  Json j;
  j["id"] = p.id;
  Json obs = Json::array();
  for (const auto& o : p.observations) obs.push_back({{"feature", o.feature}, {"t_s", o.t_s}, {"v", o.value}});
  j["observations"] = std::move(obs);
  Json meds = Json::array();
  for (const auto& e : p.meds) meds.push_back({{"cat", e.category}, {"t_s", e.t_s}});
  j["meds"] = std::move(meds);
  j["demographics"] = p.demographics;
  j["vent_t_s"] = p.vent_t_s ? Json(*p.vent_t_s) : Json(nullptr);
  j["discharge_t_s"] = p.discharge_t_s;
  return j;
}

RawPatient patient_from_json(const Json& j) {
  if (!j.is_object()) throw DataError("record is not an object");
  RawPatient p;
  p.id = field<std::string>(j, "id");
  if (!j.contains("observations") || !j["observations"].is_array()) throw DataError("missing observations array");
  for (const auto& o : j["observations"])
    p.observations.push_back({field<std::string>(o, "feature"), field<double>(o, "t_s"), field<double>(o, "v")});
  if (j.contains("meds")) {
    if (!j["meds"].is_array()) throw DataError("meds is not an array");
    for (const auto& e : j["meds"]) p.meds.push_back({field<std::string>(e, "cat"), field<double>(e, "t_s")});
  }
  p.demographics = field<std::vector<double>>(j, "demographics");
  if (j.contains("vent_t_s") && !j["vent_t_s"].is_null()) p.vent_t_s = field<double>(j, "vent_t_s");
  p.discharge_t_s = field<double>(j, "discharge_t_s");
  return p;
}

Json to_json(const Manifest& m) {
  Json j;
  j["features"] = m.features;
  j["feature_kinds"] = m.feature_kinds;
  j["medications"] = m.medications;
  j["demographics"] = m.demographics;
  j["informative"] = m.informative;
  return j;
}

Manifest manifest_from_json(const Json& j) {
  if (!j.is_object()) throw DataError("manifest is not an object");
  Manifest m;
  m.features = string_list(j, "features");
  m.feature_kinds = string_list(j, "feature_kinds", false);
  m.medications = string_list(j, "medications");
  m.demographics = string_list(j, "demographics");
  m.informative = string_list(j, "informative", false);
  m.validate();
  return m;
}

std::string serialize_cohort(const std::vector<RawPatient>& patients) {
  std::string out;
  for (const auto& p : patients) {
    out += to_json(p).dump();
    out += '\n';
  }
  return out;
}

CohortFile parse_cohort(const std::string& text) {
  CohortFile f;
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      f.patients.push_back(patient_from_json(Json::parse(line)));
    } catch (const Json::exception& e) {
      ++f.malformed;
      f.messages.push_back("line " + std::to_string(number) + ": invalid JSON");
    } catch (const DataError& e) {
      ++f.malformed;
      f.messages.push_back("line " + std::to_string(number) + ": " + e.what());
    }
  }
  return f;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("failed writing " + path.string());
}

void write_cohort(const std::filesystem::path& path, const std::vector<RawPatient>& patients) {
  write_text(path, serialize_cohort(patients));
}

CohortFile read_cohort(const std::filesystem::path& path) { return parse_cohort(read_text(path)); }

void write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
  write_text(path, to_json(manifest).dump(2) + "\n");
}

Manifest read_manifest(const std::filesystem::path& path) {
  try {
    return manifest_from_json(Json::parse(read_text(path)));
  } catch (const Json::exception& e) {
    throw DataError("manifest " + path.string() + " is not valid JSON");
  }
}

std::filesystem::path manifest_path_for(const std::filesystem::path& cohort) {
  return cohort.parent_path() / "manifest.json";
}

}  // namespace mgpms::data

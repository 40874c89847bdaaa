#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "mgpms/data/cohort.hpp"

namespace mgpms {
using Json = nlohmann::ordered_json;
}

namespace mgpms::data {

Json to_json(const RawPatient& p);
RawPatient patient_from_json(const Json& j);  // throws DataError

Json to_json(const Manifest& m);
Manifest manifest_from_json(const Json& j);

struct CohortFile {
  std::vector<RawPatient> patients;
  std::size_t malformed = 0;
  std::vector<std::string> messages;
};

/// One JSON record per line. Unparseable lines are skipped and counted.
std::string serialize_cohort(const std::vector<RawPatient>& patients);
CohortFile parse_cohort(const std::string& text);

void write_cohort(const std::filesystem::path& path, const std::vector<RawPatient>& patients);
CohortFile read_cohort(const std::filesystem::path& path);

void write_manifest(const std::filesystem::path& path, const Manifest& manifest);
Manifest read_manifest(const std::filesystem::path& path);
/// manifest.json next to the cohort file.
std::filesystem::path manifest_path_for(const std::filesystem::path& cohort);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace mgpms::data

#include "mgpms/config/run_config.hpp"

#include <cstdlib>
#include <sstream>

#include "mgpms/error.hpp"

namespace mgpms::config {

namespace {

void merge(Json& into, const Json& from, const std::string& path) {
  if (!from.is_object()) throw ConfigError("config " + (path.empty() ? std::string("root") : path) + " must be an object");
  for (const auto& [key, value] : from.items()) {
    const std::string where = path.empty() ? key : path + "." + key;
    if (!into.contains(key)) throw ConfigError("unknown config key '" + where + "'");
    Json& slot = into[key];
    if (slot.is_object()) {
      merge(slot, value, where);
    } else {
      slot = value;
    }
  }
}

Json parse_value(const std::string& text) {
  try {
    return Json::parse(text);
  } catch (const Json::exception&) {
    return Json(text);
  }
}

template <class T>
T get(const Json& j, const char* section, const char* key) {
  try {
    return j.at(section).at(key).get<T>();
  } catch (const Json::exception&) {
    throw ConfigError(std::string("config ") + section + "." + key + " has the wrong type");
  }
}

std::size_t get_count(const Json& j, const char* section, const char* key) {
  const Json& v = j.at(section).at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0)
    throw ConfigError(std::string("config ") + section + "." + key + " must be a non-negative integer");
  return v.get<std::size_t>();
}

}  // namespace

Json RunConfig::defaults() {
  Json j;
  j["seed"] = 1;
  j["threads"] = 0;
  j["cohort"] = {{"study_period_h", 72.0}, {"window_h", 4.0}, {"windows", 17}};
  j["network"] = {{"embed", 32}, {"ffn", 64}, {"layers", 2}, {"heads", 4}};
  j["train"] = {{"epochs", 100},          {"batch_size", 50},   {"mc_samples", 50},
                {"learning_rate", 0.03},  {"lr_decay", 0.95},   {"dropout", 0.3},
                {"l2_weight", 1e-5},      {"pos_weight", 1.0},  {"validation_fraction", 0.1},
                {"sampler", "pathwise"},  {"train_fraction", 0.8}};
  j["predict"] = {{"mc_samples", 50}, {"sampler", "pathwise"}, {"online", false}};
  j["importance"] = {{"features", Json::array()}, {"baseline_runs", 3}, {"top_k", 15}, {"max_patients", 0}};
  return j;
}

RunConfig RunConfig::resolve(const Json& file, const std::vector<std::string>& overrides) {
  Json j = defaults();
  if (!file.is_null()) merge(j, file, "");
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + o + "' is not key=value");
    const std::string key = o.substr(0, eq);
    std::vector<std::string> parts;
    std::istringstream in(key);
    for (std::string part; std::getline(in, part, '.');) parts.push_back(part);
    Json patch = parse_value(o.substr(eq + 1));
    for (auto it = parts.rbegin(); it != parts.rend(); ++it) patch = Json{{*it, patch}};
    merge(j, patch, "");
  }

  RunConfig r;
  r.resolved = j;
  try {
    if (!j.at("seed").is_number_integer() || j.at("seed").get<long long>() < 0)
      throw ConfigError("config seed must be a non-negative integer");
    const auto seed = j.at("seed").get<std::uint64_t>();
    if (!j.at("threads").is_number_integer() || j.at("threads").get<long long>() < 0)
      throw ConfigError("config threads must be a non-negative integer");
    r.threads = j.at("threads").get<std::size_t>();

    auto& p = r.pipeline;
    p.cohort.study_period_h = get<double>(j, "cohort", "study_period_h");
    p.cohort.window_h = get<double>(j, "cohort", "window_h");
    p.cohort.windows = get_count(j, "cohort", "windows");
    p.cohort.validate();

    p.network.embed = get_count(j, "network", "embed");
    p.network.ffn = get_count(j, "network", "ffn");
    p.network.layers = get_count(j, "network", "layers");
    p.network.heads = get_count(j, "network", "heads");

    auto& t = p.train;
    t.epochs = get_count(j, "train", "epochs");
    t.batch_size = get_count(j, "train", "batch_size");
    t.mc_samples = get_count(j, "train", "mc_samples");
    t.learning_rate = get<double>(j, "train", "learning_rate");
    t.lr_decay = get<double>(j, "train", "lr_decay");
    t.dropout = get<double>(j, "train", "dropout");
    t.l2_weight = get<double>(j, "train", "l2_weight");
    t.pos_weight = get<double>(j, "train", "pos_weight");
    t.validation_fraction = get<double>(j, "train", "validation_fraction");
    t.sampler = model::parse_sampler(get<std::string>(j, "train", "sampler"));
    t.seed = seed;
    t.validate();
    p.network.dropout = t.dropout;
    p.train_fraction = get<double>(j, "train", "train_fraction");
    if (!(p.train_fraction > 0.0 && p.train_fraction < 1.0)) throw ConfigError("train.train_fraction must lie in (0, 1)");
    p.split_seed = seed;

    r.predict.mc_samples = get_count(j, "predict", "mc_samples");
    r.predict.sampler = model::parse_sampler(get<std::string>(j, "predict", "sampler"));
    r.predict.online = get<bool>(j, "predict", "online");
    r.predict.seed = seed;

    r.importance.features = get<std::vector<std::string>>(j, "importance", "features");
    r.importance.baseline_runs = get_count(j, "importance", "baseline_runs");
    r.importance.top_k = get_count(j, "importance", "top_k");
    r.importance.max_patients = get_count(j, "importance", "max_patients");
    if (r.importance.baseline_runs == 0) throw ConfigError("importance.baseline_runs must be positive");
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return r;
}

RunConfig RunConfig::load(const std::optional<std::filesystem::path>& path, const std::vector<std::string>& overrides) {
  std::optional<std::filesystem::path> chosen = path;
  if (!chosen) {
    if (const char* env = std::getenv(kConfigEnv); env && *env) chosen = std::filesystem::path(env);
  }
  Json file;
  if (chosen) {
    std::string text;
    try {
      text = data::read_text(*chosen);
    } catch (const Error&) {
      throw ConfigError("cannot read config file " + chosen->string());
    }
    try {
      file = Json::parse(text);
    } catch (const Json::exception&) {
      throw ConfigError("config file " + chosen->string() + " is not valid JSON");
    }
  }
  return resolve(file, overrides);
}

}  // namespace mgpms::config
